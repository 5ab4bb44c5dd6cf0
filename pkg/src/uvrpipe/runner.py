"""Real-datagram validation: host and receiver roles over UDP.

The DPP bytes are carried verbatim as UDP payloads (raw link-layer sockets
need privileges and bring nothing extra to the format). Both roles exchange a
HELLO carrying a fingerprint of the codec parameters before streaming; frames
are synthetic (model sizes, deterministic byte pattern) so the receiver can
verify payload integrity end to end.

One-way latency numbers are only meaningful when both roles share a clock,
i.e. run on the same machine.
"""

from __future__ import annotations

import hashlib
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cp as cp_mod
from . import dpp
from .codec import CodecConfig, FrameType, GopWalker, encoded_size
from .core import Rng, tick_time

DEFAULT_PORT = 28_864
HANDSHAKE_TIMEOUT_S = 3.0
HELLO_RETRY_S = 0.2


class RunnerError(RuntimeError):
    pass


class HandshakeTimeout(RunnerError):
    pass


class ConfigMismatch(RunnerError):
    pass


def _now_us() -> int:
    return time.time_ns() // 1000


def config_fingerprint(codec: CodecConfig, feedback: bool) -> int:
    canon = "|".join(
        str(v)
        for v in (
            codec.bitrate_bps,
            codec.fps,
            codec.gop_size,
            codec.p_to_i_ratio,
            codec.rgb_inflation,
            codec.transcode_avoidance,
            feedback,
        )
    )
    return int.from_bytes(hashlib.blake2b(canon.encode(), digest_size=8).digest(), "big")


def _hello_message(fp: int, now_us: int) -> cp_mod.CpMessage:
    return cp_mod.CpMessage(
        subtype=cp_mod.SUB_HELLO,
        dropped_frame_id=(fp >> 32) & 0xFFFFFFFF,
        last_received_frame_id=fp & 0xFFFFFFFF,
        send_time=now_us,
    )


def _hello_fp(msg: cp_mod.CpMessage) -> int:
    return (msg.dropped_frame_id << 32) | msg.last_received_frame_id


def frame_payload(frame_id: int, size: int) -> bytes:
    """byte i of frame f = (f*131 + i) mod 256; periodic, so built from a tile."""
    tile = bytes((frame_id * 131 + i) % 256 for i in range(256))
    reps = size // 256 + 1
    return (tile * reps)[:size]


@dataclass
class RunnerConfig:
    bind: tuple[str, int] = ("127.0.0.1", DEFAULT_PORT)
    peer: tuple[str, int] = ("127.0.0.1", DEFAULT_PORT + 1)
    codec: CodecConfig = field(default_factory=CodecConfig)
    duration_s: float = 10.0
    seed: int = 1
    feedback_control: bool = True
    complexity_sigma: float = 0.15
    drop_deadline_us: int = 33_334
    suppression_window_us: int = 200_000
    induced_loss: float = 0.0  # receiver-side drop shim for loss experiments


@dataclass
class RunnerStats:
    role: str
    frames_sent: int = 0
    frames_completed: int = 0
    frames_dropped: int = 0
    pattern_mismatches: int = 0
    requests_sent: int = 0
    requests_received: int = 0
    requests_suppressed: int = 0
    forced_iframes: int = 0
    malformed_datagrams: int = 0
    induced_drops: int = 0
    latency_p50_ms: float = 0.0
    latency_p99_ms: float = 0.0
    latency_mean_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "frames": {
                "sent": self.frames_sent,
                "completed": self.frames_completed,
                "dropped": self.frames_dropped,
            },
            "integrity": {
                "pattern_mismatches": self.pattern_mismatches,
                "malformed_datagrams": self.malformed_datagrams,
                "induced_drops": self.induced_drops,
            },
            "feedback": {
                "requests_sent": self.requests_sent,
                "requests_received": self.requests_received,
                "requests_suppressed": self.requests_suppressed,
                "forced_iframes": self.forced_iframes,
            },
            "one_way_latency": {
                "mean_ms": self.latency_mean_ms,
                "p50_ms": self.latency_p50_ms,
                "p99_ms": self.latency_p99_ms,
            },
        }


def _open_socket(bind: tuple[str, int]) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind(bind)
    except OSError as exc:
        sock.close()
        raise RunnerError(f"cannot bind {bind[0]}:{bind[1]}: {exc}") from exc
    return sock


def host_run(cfg: RunnerConfig, stop: Optional[threading.Event] = None) -> RunnerStats:
    """Stream paced synthetic frames; honor I-frame requests from the peer."""
    stats = RunnerStats(role="HOST")
    fp = config_fingerprint(cfg.codec, cfg.feedback_control)
    sock = _open_socket(cfg.bind)
    sock.settimeout(0.05)
    try:
        deadline = time.monotonic() + HANDSHAKE_TIMEOUT_S
        peer = None
        while time.monotonic() < deadline:
            try:
                data, addr = sock.recvfrom(65_535)
            except socket.timeout:
                continue
            try:
                msg = cp_mod.decode_cp(data)
            except dpp.WireError:
                stats.malformed_datagrams += 1
                continue
            if msg.subtype == cp_mod.SUB_HELLO:
                if _hello_fp(msg) != fp:
                    raise ConfigMismatch("peer codec configuration does not match")
                peer = addr
                sock.sendto(cp_mod.encode_cp(_hello_message(fp, _now_us())), peer)
                break
        if peer is None:
            raise HandshakeTimeout("no HELLO from receiver within 3 s")

        host_fb = cp_mod.HostFeedbackState()
        fb_lock = threading.Lock()
        done = threading.Event()

        def cp_listener():
            while not done.is_set():
                try:
                    data, _addr = sock.recvfrom(65_535)
                except socket.timeout:
                    continue
                except OSError:
                    return
                try:
                    msg = cp_mod.decode_cp(data)
                except dpp.WireError:
                    stats.malformed_datagrams += 1
                    continue
                if msg.subtype == cp_mod.SUB_IFRAME_REQUEST:
                    stats.requests_received += 1
                    with fb_lock:
                        cp_mod.host_on_request(host_fb, msg, _now_us())

        listener = threading.Thread(target=cp_listener, daemon=True)
        listener.start()

        rng = Rng(cfg.seed)
        walker = GopWalker(cfg.codec)
        n_frames = int(cfg.duration_s * cfg.codec.fps)
        t0 = time.monotonic()
        for i in range(n_frames):
            if stop is not None and stop.is_set():
                break
            target = t0 + tick_time(i, cfg.codec.fps) / 1e6
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            with fb_lock:
                force = host_fb.pending_force if cfg.feedback_control else False
                ftype, _idx, forced = walker.plan(force)
                if ftype is FrameType.I and cfg.feedback_control:
                    cp_mod.host_on_iframe_emitted(host_fb, _now_us(), cfg.suppression_window_us)
            complexity = rng.lognormal_complexity(cfg.complexity_sigma)
            size = encoded_size(ftype, cfg.codec, complexity)
            payload = frame_payload(i, size)
            packets = dpp.fragment(i, payload, _now_us(), ftype is FrameType.I, forced)
            for packet in packets:
                sock.sendto(dpp.encode_packet(packet), peer)
            stats.frames_sent += 1
        done.set()
        listener.join(timeout=1.0)
        stats.requests_suppressed = host_fb.suppressed_count
        stats.forced_iframes = host_fb.forced_count
        return stats
    finally:
        sock.close()


def mud_run(cfg: RunnerConfig, stop: Optional[threading.Event] = None) -> RunnerStats:
    """Receive, reassemble, verify, and feed dropped-frame requests back."""
    stats = RunnerStats(role="MUD")
    fp = config_fingerprint(cfg.codec, cfg.feedback_control)
    sock = _open_socket(cfg.bind)
    sock.settimeout(HELLO_RETRY_S)
    shim = random.Random(cfg.seed)
    try:
        deadline = time.monotonic() + HANDSHAKE_TIMEOUT_S
        confirmed = False
        while not confirmed:
            if time.monotonic() >= deadline:
                raise HandshakeTimeout("no HELLO reply from host within 3 s")
            sock.sendto(cp_mod.encode_cp(_hello_message(fp, _now_us())), cfg.peer)
            try:
                data, _addr = sock.recvfrom(65_535)
            except socket.timeout:
                continue
            try:
                msg = cp_mod.decode_cp(data)
            except dpp.WireError:
                stats.malformed_datagrams += 1
                continue
            if msg.subtype == cp_mod.SUB_HELLO:
                if _hello_fp(msg) != fp:
                    raise ConfigMismatch("host codec configuration does not match")
                confirmed = True

        reasm = dpp.Reassembler(cfg.drop_deadline_us, keep_payload=True)
        mud_fb = cp_mod.MudFeedbackState()
        latencies_us: list[int] = []
        idle_limit_s = max(1.0, cfg.duration_s * 0.2)
        end_by = time.monotonic() + cfg.duration_s + HANDSHAKE_TIMEOUT_S
        last_rx = time.monotonic()
        got_data = False
        sock.settimeout(0.05)

        def handle_events(events, now_us: int) -> None:
            for ev in events:
                if isinstance(ev, dpp.FrameComplete):
                    stats.frames_completed += 1
                    latencies_us.append(now_us - ev.gen_timestamp_us)
                    if ev.data != frame_payload(ev.frame_id, len(ev.data or b"")):
                        stats.pattern_mismatches += 1
                else:
                    stats.frames_dropped += 1
                if cfg.feedback_control:
                    for msg in cp_mod.mud_on_frame_event(mud_fb, ev, now_us):
                        sock.sendto(cp_mod.encode_cp(msg), cfg.peer)
                        stats.requests_sent += 1

        while time.monotonic() < end_by:
            if stop is not None and stop.is_set():
                break
            if got_data and time.monotonic() - last_rx > idle_limit_s:
                break
            now_us = _now_us()
            handle_events(reasm.expire(now_us), now_us)
            try:
                data, _addr = sock.recvfrom(65_535)
            except socket.timeout:
                continue
            last_rx = time.monotonic()
            now_us = _now_us()
            if cfg.induced_loss > 0.0 and shim.random() < cfg.induced_loss:
                stats.induced_drops += 1
                continue
            try:
                packet = dpp.decode_packet(data)
            except dpp.WireError:
                stats.malformed_datagrams += 1
                continue
            if packet.msg_type == dpp.MSG_CTRL:
                continue  # HELLO retransmits and input stubs
            got_data = True
            handle_events(reasm.on_packet(packet, now_us), now_us)

        now_us = _now_us() + cfg.drop_deadline_us + 1
        handle_events(reasm.expire(now_us), now_us)
        if latencies_us:
            arr = np.asarray(latencies_us, dtype=np.float64) / 1000.0
            stats.latency_mean_ms = round(float(arr.mean()), 3)
            stats.latency_p50_ms = round(float(np.percentile(arr, 50)), 3)
            stats.latency_p99_ms = round(float(np.percentile(arr, 99)), 3)
        return stats
    finally:
        sock.close()
