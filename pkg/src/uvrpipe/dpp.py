"""Data-plane protocol: link-layer-sized framing, reassembly, copy accounting.

Wire format (23-byte big-endian header, total datagram <= 2304 bytes):

    magic(2)=0x55,0x56  version(1)=0x01  msg_type(1)  flags(1)
    frame_id(4)  frag_index(2)  frag_count(2)  payload_len(2)
    gen_timestamp_us(8)  payload(payload_len)

msg_type 0x01 carries frame fragments, 0x02 carries control messages.
flags bit0 marks an I-frame fragment, bit1 a forced I-frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Union

from .core import SimTime

MAGIC = b"\x55\x56"
VERSION = 0x01
MSG_DATA = 0x01
MSG_CTRL = 0x02
FLAG_IFRAME = 0x01
FLAG_FORCED = 0x02

HEADER_LEN = 23
MTU = 2_304
PAYLOAD_CAP = MTU - HEADER_LEN  # 2281
MAX_FRAGS = 0xFFFF

_HEADER = struct.Struct(">2sBBBIHHHQ")


class WireError(Exception):
    """Base class for datagram parse failures; receivers drop and count."""


class MalformedHeader(WireError):
    pass


class LengthMismatch(WireError):
    pass


class UnsupportedVersion(WireError):
    pass


class FragmentationError(ValueError):
    pass


@dataclass
class DppPacket:
    msg_type: int
    flags: int
    frame_id: int
    frag_index: int
    frag_count: int
    gen_timestamp_us: int
    payload: bytes

    def __post_init__(self):
        if not (0 <= self.frag_index < self.frag_count <= MAX_FRAGS):
            raise FragmentationError(
                f"frag_index {self.frag_index} not below frag_count {self.frag_count}"
            )
        if HEADER_LEN + len(self.payload) > MTU:
            raise FragmentationError(f"packet exceeds {MTU}-byte MTU")

    @property
    def wire_size(self) -> int:
        return HEADER_LEN + len(self.payload)


def encode_packet(p: DppPacket) -> bytes:
    return _HEADER.pack(
        MAGIC,
        VERSION,
        p.msg_type,
        p.flags,
        p.frame_id & 0xFFFFFFFF,
        p.frag_index,
        p.frag_count,
        len(p.payload),
        p.gen_timestamp_us,
    ) + p.payload


def decode_packet(b: bytes) -> DppPacket:
    if len(b) < HEADER_LEN:
        raise MalformedHeader(f"datagram of {len(b)} bytes is shorter than the header")
    magic, version, msg_type, flags, frame_id, frag_index, frag_count, payload_len, ts = (
        _HEADER.unpack(b[:HEADER_LEN])
    )
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}")
    if len(b) - HEADER_LEN != payload_len:
        raise LengthMismatch(
            f"payload_len={payload_len} but {len(b) - HEADER_LEN} payload bytes present"
        )
    if msg_type not in (MSG_DATA, MSG_CTRL):
        raise MalformedHeader(f"unknown msg_type {msg_type:#x}")
    if frag_index >= frag_count:
        raise MalformedHeader(f"frag_index {frag_index} >= frag_count {frag_count}")
    return DppPacket(
        msg_type=msg_type,
        flags=flags,
        frame_id=frame_id,
        frag_index=frag_index,
        frag_count=frag_count,
        gen_timestamp_us=ts,
        payload=b[HEADER_LEN:],
    )


def fragment_sizes(size_bytes: int, payload_cap: int = PAYLOAD_CAP) -> list[int]:
    """Payload sizes for a frame of ``size_bytes``: full fragments, then the tail."""
    if size_bytes < 1:
        raise FragmentationError("cannot fragment an empty frame")
    count = -(-size_bytes // payload_cap)
    if count > MAX_FRAGS:
        raise FragmentationError(f"{count} fragments overflow the 16-bit fragment counter")
    sizes = [payload_cap] * (count - 1)
    sizes.append(size_bytes - payload_cap * (count - 1))
    return sizes


def frame_flags(is_iframe: bool, forced: bool) -> int:
    return (FLAG_IFRAME if is_iframe else 0) | (FLAG_FORCED if forced else 0)


def fragment(
    frame_id: int,
    data: bytes,
    gen_timestamp_us: int,
    is_iframe: bool,
    forced: bool = False,
    payload_cap: int = PAYLOAD_CAP,
) -> list[DppPacket]:
    """Split encoded frame bytes into ordered DATA packets."""
    sizes = fragment_sizes(len(data), payload_cap)
    flags = frame_flags(is_iframe, forced)
    packets = []
    at = 0
    for index, size in enumerate(sizes):
        packets.append(
            DppPacket(
                msg_type=MSG_DATA,
                flags=flags,
                frame_id=frame_id,
                frag_index=index,
                frag_count=len(sizes),
                gen_timestamp_us=gen_timestamp_us,
                payload=data[at : at + size],
            )
        )
        at += size
    return packets


def seq_newer(a: int, b: int) -> bool:
    """True if frame id ``a`` is newer than ``b`` under 32-bit serial arithmetic."""
    return a != b and ((a - b) & 0xFFFFFFFF) < 0x80000000


@dataclass
class FrameComplete:
    frame_id: int
    is_iframe: bool
    forced: bool
    gen_timestamp_us: int
    first_arrival: SimTime
    last_arrival: SimTime
    data: Optional[bytes] = None


@dataclass
class FrameDropped:
    frame_id: int
    is_iframe: bool


ReassemblyEvent = Union[FrameComplete, FrameDropped]


class _PendingFrame:
    __slots__ = (
        "frag_count",
        "received",
        "mask",
        "first_arrival",
        "deadline_anchor",
        "is_iframe",
        "forced",
        "gen_timestamp_us",
        "chunks",
        "seen",
    )

    def __init__(self, anchor: SimTime):
        self.frag_count = 0
        self.received = 0
        self.mask = 0
        self.first_arrival: Optional[SimTime] = None
        self.deadline_anchor = anchor  # first arrival, or discovery via a newer frame
        self.is_iframe = False
        self.forced = False
        self.gen_timestamp_us = 0
        self.chunks: Optional[dict[int, bytes]] = None
        self.seen = False


class Reassembler:
    """Per-frame fragment collection with deadline-based whole-frame dropping.

    Each frame id resolves exactly once, to either FrameComplete or
    FrameDropped. A frame is dropped when its deadline (anchored at its first
    fragment arrival, or at the first sight of a newer frame if none of its
    own fragments ever arrived) expires - either observed directly via
    ``expire`` or implied by a fragment of a newer frame arriving later.
    """

    def __init__(self, drop_deadline_us: int, keep_payload: bool = False):
        self.drop_deadline_us = drop_deadline_us
        self.keep_payload = keep_payload
        self._pending: dict[int, _PendingFrame] = {}
        self._resolved: set[int] = set()
        self.highest_completed: Optional[int] = None
        self.highest_seen: Optional[int] = None
        self.malformed_count = 0
        self.duplicate_count = 0

    def _resolve(self, frame_id: int) -> None:
        self._pending.pop(frame_id, None)
        self._resolved.add(frame_id)
        if len(self._resolved) > 8192 and self.highest_seen is not None:
            horizon = (self.highest_seen - 2048) & 0xFFFFFFFF
            self._resolved = {f for f in self._resolved if not seq_newer(horizon, f)}

    def _sweep(self, now: SimTime, newest_id: int) -> list[FrameDropped]:
        dropped = []
        for fid, pend in list(self._pending.items()):
            expired = now > pend.deadline_anchor + self.drop_deadline_us
            if expired and seq_newer(newest_id, fid):
                dropped.append(FrameDropped(frame_id=fid, is_iframe=pend.is_iframe))
                self._resolve(fid)
        return dropped

    def _note_frame(self, now: SimTime, frame_id: int) -> list[FrameDropped]:
        """Record that frame_id is on the air: discover gaps, run the drop sweep."""
        if self.highest_seen is None or seq_newer(frame_id, self.highest_seen):
            # frames skipped entirely start their deadline at discovery time
            if self.highest_seen is not None:
                gap = (frame_id - self.highest_seen) & 0xFFFFFFFF
                if gap <= 1024:  # ignore absurd jumps rather than allocate for them
                    fid = (self.highest_seen + 1) & 0xFFFFFFFF
                    while seq_newer(frame_id, fid):
                        if fid not in self._resolved and fid not in self._pending:
                            self._pending[fid] = _PendingFrame(anchor=now)
                        fid = (fid + 1) & 0xFFFFFFFF
            self.highest_seen = frame_id
        return self._sweep(now, frame_id)

    def on_fragment(
        self,
        now: SimTime,
        frame_id: int,
        frag_index: int,
        frag_count: int,
        is_iframe: bool,
        forced: bool,
        gen_timestamp_us: int,
        payload: Optional[bytes] = None,
    ) -> list[ReassemblyEvent]:
        events: list[ReassemblyEvent] = list(self._note_frame(now, frame_id))
        ingested = self._ingest(
            now, frame_id, frag_index, frag_count, is_iframe, forced, gen_timestamp_us, payload
        )
        if ingested is not None:
            events.append(ingested)
        return events

    def _ingest(
        self,
        now: SimTime,
        frame_id: int,
        frag_index: int,
        frag_count: int,
        is_iframe: bool,
        forced: bool,
        gen_timestamp_us: int,
        payload: Optional[bytes] = None,
    ) -> Optional[FrameComplete]:
        if frame_id in self._resolved:
            return None
        pend = self._pending.get(frame_id)
        if pend is None:
            pend = _PendingFrame(anchor=now)
            self._pending[frame_id] = pend
        if not pend.seen:
            pend.seen = True
            pend.frag_count = frag_count
            pend.first_arrival = now
            pend.deadline_anchor = now
            pend.is_iframe = is_iframe
            pend.forced = forced
            pend.gen_timestamp_us = gen_timestamp_us
            if self.keep_payload:
                pend.chunks = {}
        elif frag_count != pend.frag_count:
            self.malformed_count += 1
            return None

        bit = 1 << frag_index
        if pend.mask & bit:
            self.duplicate_count += 1
            return None
        pend.mask |= bit
        pend.received += 1
        if pend.chunks is not None and payload is not None:
            pend.chunks[frag_index] = payload

        if pend.received == pend.frag_count:
            data = None
            if pend.chunks is not None:
                data = b"".join(pend.chunks[i] for i in range(pend.frag_count))
            complete = FrameComplete(
                frame_id=frame_id,
                is_iframe=pend.is_iframe,
                forced=pend.forced,
                gen_timestamp_us=pend.gen_timestamp_us,
                first_arrival=pend.first_arrival,
                last_arrival=now,
                data=data,
            )
            self._resolve(frame_id)
            self.highest_completed = frame_id
            return complete
        return None

    def on_burst(
        self,
        fragments: list[tuple[SimTime, int]],
        frame_id: int,
        frag_count: int,
        is_iframe: bool,
        forced: bool,
        gen_timestamp_us: int,
    ) -> list[ReassemblyEvent]:
        """Ingest one frame's delivered fragments as (arrival, frag_index) pairs.

        Equivalent to per-fragment calls except that the drop sweep runs once,
        at the first arrival of the burst.
        """
        first_now = fragments[0][0]
        events: list[ReassemblyEvent] = list(self._note_frame(first_now, frame_id))
        pend = self._pending.get(frame_id)
        if (
            frame_id not in self._resolved
            and (pend is None or not pend.seen)
            and len(fragments) == frag_count
        ):
            # whole frame in one burst: skip the per-fragment walk
            self._resolve(frame_id)
            self.highest_completed = frame_id
            events.append(
                FrameComplete(
                    frame_id=frame_id,
                    is_iframe=is_iframe,
                    forced=forced,
                    gen_timestamp_us=gen_timestamp_us,
                    first_arrival=first_now,
                    last_arrival=fragments[-1][0],
                )
            )
            return events
        for now, frag_index in fragments:
            ingested = self._ingest(
                now, frame_id, frag_index, frag_count, is_iframe, forced, gen_timestamp_us
            )
            if ingested is not None:
                events.append(ingested)
        return events

    def on_packet(self, p: DppPacket, now: SimTime) -> list[ReassemblyEvent]:
        return self.on_fragment(
            now,
            p.frame_id,
            p.frag_index,
            p.frag_count,
            bool(p.flags & FLAG_IFRAME),
            bool(p.flags & FLAG_FORCED),
            p.gen_timestamp_us,
            payload=p.payload,
        )

    def expire(self, now: SimTime) -> list[FrameDropped]:
        """Resolve every pending frame whose deadline has passed."""
        dropped = []
        for fid, pend in list(self._pending.items()):
            if now > pend.deadline_anchor + self.drop_deadline_us:
                dropped.append(FrameDropped(frame_id=fid, is_iframe=pend.is_iframe))
                self._resolve(fid)
        return dropped

    def pending_deadlines(self) -> list[tuple[int, SimTime]]:
        return [
            (fid, pend.deadline_anchor + self.drop_deadline_us)
            for fid, pend in self._pending.items()
        ]


# --- host-side copy accounting -------------------------------------------

# conventional stack repartition points a frame passes on its way to the NIC
TRANSPORT_CHUNK = 65_507  # transport-layer datagram payload ceiling
NETWORK_CHUNK = 2_480  # network-layer packet size
LINK_CHUNK = MTU


@dataclass
class CopyLedger:
    entries: list[tuple[str, int, tuple[str, str]]] = field(default_factory=list)

    def add(self, stage: str, nbytes: int, src: str, dst: str) -> None:
        self.entries.append((stage, nbytes, (src, dst)))

    def total_bytes(self) -> int:
        return sum(n for _, n, _ in self.entries)

    def stages(self) -> list[str]:
        return [s for s, _, _ in self.entries]


def host_send_path(size_bytes: int, direct_net_io: bool, ledger: CopyLedger) -> CopyLedger:
    """Account the encoded-content copies taken by the host network path.

    The layered path repartitions the frame at the transport, network and link
    layers (one buffer copy each); direct network I/O maps the link buffer into
    the sender's space so the frame is copied exactly once.
    """
    if direct_net_io:
        ledger.add("link-buffer", size_bytes, "device", "link")
        return ledger
    ledger.add("transport-buffer", size_bytes, "main", "transport")
    ledger.add("network-reframe", size_bytes, "transport", "network")
    ledger.add("link-reframe", size_bytes, "network", "link")
    return ledger


def host_capture_path(
    raw_bytes: int,
    raw_converted_bytes: int,
    transcode_avoidance: bool,
    shared_gpu_buffer: bool,
    ledger: CopyLedger,
) -> CopyLedger:
    """Account the raw-content copies ahead of the encoder.

    With a shared GPU buffer the encoder reads the render target in place and
    no raw bytes ever cross a memory-domain boundary.
    """
    if shared_gpu_buffer:
        return ledger
    ledger.add("capture", raw_bytes, "gpu", "main")
    encode_in = raw_bytes if transcode_avoidance else raw_converted_bytes
    ledger.add("encode-input", encode_in, "main", "gpu")
    return ledger
