"""Discrete wireless channel: serialization, propagation, jitter, loss, hops.

Topologies:
  P2P   - one hop on a dedicated medium.
  INFRA - two hops (sender -> access point -> receiver) that contend for one
          shared medium, so every byte crosses the air twice.

Senders acquire the medium for a whole frame burst at a time; the access
point forwards the burst afterwards in arrival order. Lost packets still
occupy the medium on the hop where they were transmitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .core import Rng, SimTime

MAX_PACKET_BYTES = 2_304


class Topology(Enum):
    P2P = "P2P"
    INFRA = "INFRA"


class LossModel(Enum):
    BERNOULLI = "bernoulli"
    GILBERT_ELLIOTT = "gilbert_elliott"


@dataclass
class ChannelModel:
    bandwidth_bps: int = 867_000_000
    prop_delay_us: int = 200
    jitter_sigma_us: float = 0.0
    topology: Topology = Topology.P2P
    loss_model: LossModel = LossModel.BERNOULLI
    loss_p: float = 0.0
    ge_p_gb: float = 0.01  # good -> bad transition
    ge_p_bg: float = 0.2  # bad -> good transition
    ge_loss_good: float = 0.0
    ge_loss_bad: float = 0.3

    def validate(self) -> list[str]:
        errors = []
        if self.bandwidth_bps <= 0:
            errors.append("channel.bandwidth_bps must be > 0")
        if self.prop_delay_us < 0:
            errors.append("channel.prop_delay_us must be >= 0")
        if self.jitter_sigma_us < 0:
            errors.append("channel.jitter_sigma_us must be >= 0")
        for name in ("loss_p", "ge_p_gb", "ge_p_bg", "ge_loss_good", "ge_loss_bad"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                errors.append(f"channel.{name} must be in [0, 1]")
        return errors

    @property
    def hops(self) -> int:
        return 2 if self.topology is Topology.INFRA else 1


@dataclass
class LinkState:
    busy_until: SimTime = 0
    busy_accum_us: int = 0
    last_arrival: SimTime = 0
    ge_bad: bool = False
    sent_packets: int = 0
    lost_packets: int = 0
    sent_bytes: int = 0


class OversizedPacket(ValueError):
    pass


def serialization_us(size_bytes: int, bandwidth_bps: int) -> int:
    return -(-(size_bytes * 8 * 1_000_000) // bandwidth_bps)


def _lost(ch: ChannelModel, link: LinkState, rng: Optional[Rng]) -> bool:
    if ch.loss_model is LossModel.BERNOULLI:
        if ch.loss_p <= 0.0:
            return False
        return bool(rng.stream("loss").random() < ch.loss_p)
    # Gilbert-Elliott: loss by current state, then advance the chain
    stream = rng.stream("loss")
    p = ch.ge_loss_bad if link.ge_bad else ch.ge_loss_good
    lost = bool(stream.random() < p)
    flip = ch.ge_p_bg if link.ge_bad else ch.ge_p_gb
    if stream.random() < flip:
        link.ge_bad = not link.ge_bad
    return lost


def _jitter(ch: ChannelModel, rng: Optional[Rng]) -> int:
    if ch.jitter_sigma_us <= 0.0:
        return 0
    # one-sided truncated normal: extra delay in [0, 3 sigma]
    draw = abs(rng.stream("jitter").standard_normal()) * ch.jitter_sigma_us
    return int(min(draw, 3.0 * ch.jitter_sigma_us))


def _one_hop(
    ch: ChannelModel,
    link: LinkState,
    size: int,
    request: SimTime,
    rng: Optional[Rng],
    final_hop: bool,
) -> tuple[Optional[SimTime], SimTime]:
    """Send one packet on one hop; returns (arrival or None if lost, tx_end)."""
    ser = serialization_us(size, ch.bandwidth_bps)
    start = request if request > link.busy_until else link.busy_until
    end = start + ser
    link.busy_until = end
    link.busy_accum_us += ser
    link.sent_packets += 1
    link.sent_bytes += size
    if _lost(ch, link, rng):
        link.lost_packets += 1
        return None, end
    arrival = end + ch.prop_delay_us + _jitter(ch, rng)
    if final_hop:
        # receiver-side FIFO: jitter never reorders deliveries on a link
        if arrival < link.last_arrival:
            arrival = link.last_arrival
        link.last_arrival = arrival
    return arrival, end


def transmit(
    ch: ChannelModel, link: LinkState, size_bytes: int, now: SimTime, rng: Optional[Rng] = None
) -> Optional[SimTime]:
    """Deliver one packet; returns the arrival time, or None when lost.

    INFRA applies both hops back to back on the same link state.
    """
    if size_bytes > MAX_PACKET_BYTES:
        raise OversizedPacket(f"{size_bytes} bytes exceeds the {MAX_PACKET_BYTES}-byte limit")
    infra = ch.topology is Topology.INFRA
    arrival, _ = _one_hop(ch, link, size_bytes, now, rng, final_hop=not infra)
    if arrival is None:
        return None
    if infra:
        arrival, _ = _one_hop(ch, link, size_bytes, arrival, rng, final_hop=True)
    return arrival


def transmit_burst(
    ch: ChannelModel,
    link: LinkState,
    sizes: list[int],
    now: SimTime,
    rng: Optional[Rng] = None,
) -> list[Optional[SimTime]]:
    """Deliver a frame's packets as one burst; returns per-packet arrivals.

    The sender drains the whole burst in a single medium acquisition; under
    INFRA the access point then forwards the surviving packets in order. For
    P2P this is exactly equivalent to per-packet ``transmit`` calls.
    """
    for size in sizes:
        if size > MAX_PACKET_BYTES:
            raise OversizedPacket(f"{size} bytes exceeds the {MAX_PACKET_BYTES}-byte limit")
    infra = ch.topology is Topology.INFRA
    lossless = ch.loss_model is LossModel.BERNOULLI and ch.loss_p <= 0.0
    if lossless and ch.jitter_sigma_us <= 0.0:
        return _burst_clean(ch, link, sizes, now, infra)
    first_hop: list[tuple[int, Optional[SimTime]]] = []
    request = now
    for size in sizes:
        arrival, end = _one_hop(ch, link, size, request, rng, final_hop=not infra)
        first_hop.append((size, arrival))
        request = end
    if not infra:
        return [arrival for _, arrival in first_hop]
    arrivals: list[Optional[SimTime]] = []
    for size, hop1_arrival in first_hop:
        if hop1_arrival is None:
            arrivals.append(None)
            continue
        arrival, _ = _one_hop(ch, link, size, hop1_arrival, rng, final_hop=True)
        arrivals.append(arrival)
    return arrivals


def _burst_clean(
    ch: ChannelModel, link: LinkState, sizes: list[int], now: SimTime, infra: bool
) -> list[Optional[SimTime]]:
    """Draw-free burst: same arithmetic as the per-packet walk, no RNG, no loss."""
    bw = ch.bandwidth_bps
    prop = ch.prop_delay_us
    sers = [-(-(size * 8 * 1_000_000) // bw) for size in sizes]
    total_ser = sum(sers)
    start = now if now > link.busy_until else link.busy_until
    end = start
    hop1_arrivals = []
    for ser in sers:
        end += ser
        hop1_arrivals.append(end + prop)
    link.busy_until = end
    link.busy_accum_us += total_ser
    link.sent_packets += len(sizes)
    link.sent_bytes += sum(sizes)
    if infra:
        arrivals = []
        busy = end
        for ser, request in zip(sers, hop1_arrivals):
            s2 = request if request > busy else busy
            busy = s2 + ser
            arrivals.append(busy + prop)
        link.busy_until = busy
        link.busy_accum_us += total_ser
        link.sent_packets += len(sizes)
        link.sent_bytes += sum(sizes)
    else:
        arrivals = hop1_arrivals
    for i, arrival in enumerate(arrivals):
        if arrival < link.last_arrival:
            arrivals[i] = link.last_arrival
        else:
            link.last_arrival = arrival
    return arrivals


def link_occupancy(link: LinkState, window_us: int) -> float:
    if window_us <= 0:
        raise ValueError("occupancy window must be > 0")
    return min(1.0, link.busy_accum_us / window_us)
