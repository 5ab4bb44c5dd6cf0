"""Deterministic simulation core: clock, event queue, seeded RNG, workload.

All times are integer microseconds (``SimTime``) so that runs are bit-exact
across platforms. Latency constants elsewhere in the package are expressed in
the same unit.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterator

import numpy as np

SimTime = int  # microseconds since scenario start

US_PER_S = 1_000_000
US_PER_MS = 1_000


class SchedulingError(Exception):
    """An event was scheduled before the current dispatch time (simulator bug)."""


def round_half_up(x) -> int:
    """Round to nearest integer, ties away from zero (toward +inf for x >= 0)."""
    from fractions import Fraction

    f = Fraction(x) if not isinstance(x, Fraction) else x
    return int((2 * f + 1) // 2) if f >= 0 else -int((2 * (-f) + 1) // 2)


def tick_time(index: int, fps: int) -> SimTime:
    """Time of tick ``index`` on a cumulative-rounding grid.

    tick_time(i) = round_half_up(1e6 * i / fps); consecutive deltas wobble by
    at most 1 us but accumulate no drift (e.g. 90 FPS averages 11111.1 us
    exactly over any 10 ticks).
    """
    return (2 * US_PER_S * index + fps) // (2 * fps)


class Rng:
    """Seeded random source with named, independently-derived substreams.

    Backed by numpy's PCG64 generator, whose output stream is stable across
    platforms and versions for a given seed. Substreams are spawned from the
    root seed by label so that adding draws in one subsystem never shifts the
    sequences seen by another.
    """

    _STREAMS = ("workload", "loss", "jitter", "fault", "misc")

    def __init__(self, seed: int):
        self.seed = int(seed)
        root = np.random.SeedSequence(self.seed)
        children = root.spawn(len(self._STREAMS))
        self._gens = {
            name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(self._STREAMS, children)
        }

    def stream(self, name: str) -> np.random.Generator:
        return self._gens[name]

    def lognormal_complexity(self, sigma: float) -> float:
        if sigma == 0.0:
            # degenerate distribution; draw anyway to keep streams aligned
            self._gens["workload"].standard_normal()
            return 1.0
        return float(np.exp(sigma * self._gens["workload"].standard_normal()))


class EventQueue:
    """Discrete-event queue dispatching in (time, insertion-seq) order."""

    def __init__(self):
        self._heap: list[tuple[SimTime, int, Any]] = []
        self._seq = 0
        self.now: SimTime = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, t: SimTime, event: Any) -> None:
        if t < self.now:
            raise SchedulingError(f"event scheduled at t={t} before now={self.now}")
        heapq.heappush(self._heap, (int(t), self._seq, event))
        self._seq += 1

    def pop(self) -> tuple[SimTime, Any]:
        t, _seq, event = heapq.heappop(self._heap)
        self.now = t
        return t, event

    def run(self, handler: Callable[[SimTime, Any], None]) -> None:
        while self._heap:
            t, event = self.pop()
            handler(t, event)


class ColorSpace(Enum):
    RGB = "RGB"
    YUV420 = "YUV420"


def raw_frame_bytes(width: int, height: int, color_space: ColorSpace) -> int:
    if color_space is ColorSpace.RGB:
        return width * height * 3
    # 4:2:0 chroma subsampling halves the two chrominance planes
    return width * height * 3 // 2


@dataclass
class RawFrame:
    frame_id: int
    gen_time: SimTime
    width: int
    height: int
    color_space: ColorSpace
    raw_bytes: int
    complexity: float


@dataclass
class WorkloadConfig:
    width: int = 1920
    height: int = 1080
    complexity_sigma: float = 0.15


class FrameSource:
    """Synthetic content generator standing in for a scripted player loop.

    Content difficulty varies log-normally around 1.0; the distribution width
    is a model knob (sigma=0 gives constant unit complexity).
    """

    def __init__(self, cfg: WorkloadConfig, color_space: ColorSpace, rng: Rng):
        self.cfg = cfg
        self.color_space = color_space
        self.rng = rng
        self._next_id = 0

    def next_frame(self, now: SimTime) -> RawFrame:
        frame = RawFrame(
            frame_id=self._next_id,
            gen_time=now,
            width=self.cfg.width,
            height=self.cfg.height,
            color_space=self.color_space,
            raw_bytes=raw_frame_bytes(self.cfg.width, self.cfg.height, self.color_space),
            complexity=self.rng.lognormal_complexity(self.cfg.complexity_sigma),
        )
        self._next_id += 1
        return frame


def frame_ticks(fps: int, duration_us: SimTime) -> Iterator[tuple[int, SimTime]]:
    """Yield (index, time) for every grid tick strictly before duration_us."""
    i = 0
    while True:
        t = tick_time(i, fps)
        if t >= duration_us:
            return
        yield i, t
        i += 1
