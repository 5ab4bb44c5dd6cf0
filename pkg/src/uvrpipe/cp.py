"""Control protocol: dropped-frame feedback and forced-I-frame suppression.

CP messages ride the same 23-byte header as data packets with msg_type 0x02
and a 9-byte payload: subtype(1) + dropped_frame_id(4) + last_received(4),
big-endian. One datagram per message, at most 32 bytes on the wire.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Union

from . import dpp
from .core import SimTime

SUB_IFRAME_REQUEST = 0x01
SUB_HELLO = 0x02
SUB_INPUT_EVENT = 0x03

_PAYLOAD = struct.Struct(">BII")

DEFAULT_SUPPRESSION_WINDOW_US = 200_000


@dataclass
class CpMessage:
    subtype: int
    dropped_frame_id: int = 0
    last_received_frame_id: int = 0
    send_time: SimTime = 0

    def wire_size(self) -> int:
        return dpp.HEADER_LEN + _PAYLOAD.size


def encode_cp(msg: CpMessage) -> bytes:
    payload = _PAYLOAD.pack(
        msg.subtype,
        msg.dropped_frame_id & 0xFFFFFFFF,
        msg.last_received_frame_id & 0xFFFFFFFF,
    )
    packet = dpp.DppPacket(
        msg_type=dpp.MSG_CTRL,
        flags=0,
        frame_id=0,
        frag_index=0,
        frag_count=1,
        gen_timestamp_us=msg.send_time,
        payload=payload,
    )
    return dpp.encode_packet(packet)


def decode_cp(b: bytes) -> CpMessage:
    packet = dpp.decode_packet(b)
    return cp_from_packet(packet)


def cp_from_packet(packet: dpp.DppPacket) -> CpMessage:
    if packet.msg_type != dpp.MSG_CTRL:
        raise dpp.MalformedHeader("not a control datagram")
    if len(packet.payload) != _PAYLOAD.size:
        raise dpp.LengthMismatch(f"control payload of {len(packet.payload)} bytes")
    subtype, dropped, last_received = _PAYLOAD.unpack(packet.payload)
    return CpMessage(
        subtype=subtype,
        dropped_frame_id=dropped,
        last_received_frame_id=last_received,
        send_time=packet.gen_timestamp_us,
    )


class MudMode(Enum):
    NORMAL = "NORMAL"
    RECOVERY = "RECOVERY"


@dataclass
class MudFeedbackState:
    mode: MudMode = MudMode.NORMAL
    dropped_frame_id: int = 0
    last_received_frame_id: int = 0
    requests_sent: int = 0


def mud_on_frame_event(
    state: MudFeedbackState, ev: Union[dpp.FrameComplete, dpp.FrameDropped], now: SimTime
) -> list[CpMessage]:
    """Receiver reaction to a resolved frame.

    A drop enters recovery and requests an I-frame; every further received
    frame repeats the request until a complete I-frame arrives.
    """
    messages: list[CpMessage] = []
    if isinstance(ev, dpp.FrameDropped):
        state.mode = MudMode.RECOVERY
        state.dropped_frame_id = ev.frame_id
        messages.append(
            CpMessage(
                subtype=SUB_IFRAME_REQUEST,
                dropped_frame_id=ev.frame_id,
                last_received_frame_id=state.last_received_frame_id,
                send_time=now,
            )
        )
    else:
        state.last_received_frame_id = ev.frame_id
        if ev.is_iframe:
            state.mode = MudMode.NORMAL
        elif state.mode is MudMode.RECOVERY:
            messages.append(
                CpMessage(
                    subtype=SUB_IFRAME_REQUEST,
                    dropped_frame_id=state.dropped_frame_id,
                    last_received_frame_id=ev.frame_id,
                    send_time=now,
                )
            )
    state.requests_sent += len(messages)
    return messages


class HostDecision(Enum):
    FORCE_NEXT_IFRAME = "ForceNextIFrame"
    SUPPRESSED = "Suppressed"


@dataclass
class HostFeedbackState:
    suppression_until: SimTime = 0
    pending_force: bool = False
    suppressed_count: int = 0
    forced_count: int = 0


def host_on_request(state: HostFeedbackState, msg: CpMessage, now: SimTime) -> HostDecision:
    if msg.subtype != SUB_IFRAME_REQUEST:
        raise ValueError("host_on_request expects an IFRAME_REQUEST")
    if now >= state.suppression_until:  # boundary inclusive
        state.pending_force = True
        return HostDecision.FORCE_NEXT_IFRAME
    state.suppressed_count += 1
    return HostDecision.SUPPRESSED


def host_on_iframe_emitted(
    state: HostFeedbackState,
    now: SimTime,
    window_us: SimTime = DEFAULT_SUPPRESSION_WINDOW_US,
) -> None:
    """Note that an I-frame satisfying a pending request was just encoded.

    Scheduled I-frames with no request pending do not start a window.
    """
    if state.pending_force:
        state.pending_force = False
        state.forced_count += 1
        state.suppression_until = now + window_us
