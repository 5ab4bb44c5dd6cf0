"""Run metrics, report files, and table rendering.

Reports are JSON with a fixed field order so identical runs diff cleanly;
wall-clock information is segregated under ``meta`` and is the only part that
may differ between two runs of the same seeded scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

SCHEMA_VERSION = 1

FRAME_PERIOD_60FPS_MS = 1000.0 / 60.0

TRACE_COLUMNS = (
    "frame_id",
    "type",
    "forced",
    "gen_us",
    "encoded_us",
    "sent_first_us",
    "arrived_last_us",
    "presented_us",
    "dropped",
    "corrupted",
)


@dataclass
class FrameRecord:
    """Per-frame timestamps along the datapath (trace export row)."""

    frame_id: int
    frame_type: str
    forced: bool
    gen_us: int
    encoded_us: int = -1
    sent_first_us: int = -1
    arrived_last_us: int = -1
    decode_start_us: int = -1
    presented_us: int = -1
    dropped: bool = False
    corrupted: bool = False
    size_bytes: int = 0
    queue_wait_us: int = 0
    net_us: int = 0

    def trace_row(self) -> str:
        return ",".join(
            str(v)
            for v in (
                self.frame_id,
                self.frame_type,
                int(self.forced),
                self.gen_us,
                self.encoded_us,
                self.sent_first_us,
                self.arrived_last_us,
                self.presented_us,
                int(self.dropped),
                int(self.corrupted),
            )
        )


def write_trace(records: list[FrameRecord], path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.trace_row() + "\n")


def _dist_ms(values_us: list[int]) -> dict[str, float]:
    if not values_us:
        return {"mean_ms": 0.0, "p50_ms": 0.0, "p99_ms": 0.0}
    arr = np.asarray(values_us, dtype=np.float64) / 1000.0
    return {
        "mean_ms": round(float(arr.mean()), 4),
        "p50_ms": round(float(np.percentile(arr, 50)), 4),
        "p99_ms": round(float(np.percentile(arr, 99)), 4),
    }


@dataclass
class MetricsReport:
    seed: int
    duration_s: float
    config: dict[str, str]
    frames: dict[str, int]
    end_to_end: dict[str, float]
    stages: dict[str, dict[str, float]]
    network: dict[str, float]
    copies: dict[str, Any]
    feedback: dict[str, int]
    sync: Optional[dict[str, float]] = None
    unresolved_frames: int = 0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "config": self.config,
            "frames": self.frames,
            "end_to_end": self.end_to_end,
            "stages": self.stages,
            "network": self.network,
            "copies": self.copies,
            "feedback": self.feedback,
            "unresolved_frames": self.unresolved_frames,
        }
        if self.sync is not None:
            out["sync"] = self.sync
        return out


def build_distributions(
    per_stage_us: dict[str, list[int]], e2e_us: list[int]
) -> tuple[dict[str, dict[str, float]], dict[str, float]]:
    stages = {name: _dist_ms(vals) for name, vals in per_stage_us.items()}
    e2e = _dist_ms(e2e_us)
    e2e["mean_frames_60fps"] = round(e2e["mean_ms"] / FRAME_PERIOD_60FPS_MS, 4)
    return stages, e2e


def stage_breakdown(report: MetricsReport) -> list[tuple[str, float, float]]:
    """(stage, mean ms, share %) rows; shares total 100 +/- rounding."""
    rows = [(name, d["mean_ms"]) for name, d in report.stages.items()]
    total = sum(ms for _, ms in rows)
    if total <= 0:
        return [(name, ms, 0.0) for name, ms in rows]
    return [(name, ms, round(100.0 * ms / total, 3)) for name, ms in rows]


def report_file_dict(
    metrics: MetricsReport,
    ab: Optional[dict[str, Any]] = None,
    sweep: Optional[list[dict[str, Any]]] = None,
) -> dict[str, Any]:
    body: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "meta": {"created_utc": datetime.now(timezone.utc).isoformat()},
        "report": metrics.to_dict(),
        "breakdown": [
            {"stage": name, "mean_ms": ms, "share_pct": pct}
            for name, ms, pct in stage_breakdown(metrics)
        ],
    }
    if ab is not None:
        body["ab_compare"] = ab
    if sweep is not None:
        body["sweep"] = sweep
    return body


def dump_report(data: dict[str, Any], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_report(path: Union[str, Path]) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def strip_meta(data: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in data.items() if k != "meta"}


def render_table(rows: list[tuple], headers: tuple) -> str:
    cells = [tuple(str(c) for c in row) for row in rows]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(str(c).ljust(widths[i]) for i, c in enumerate(row))

    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in cells)
    return "\n".join(lines)


def render_report(data: dict[str, Any]) -> str:
    rep = data["report"]
    lines = []
    e2e = rep["end_to_end"]
    lines.append(
        f"end-to-end latency: mean {e2e['mean_ms']} ms"
        f" (p50 {e2e['p50_ms']}, p99 {e2e['p99_ms']};"
        f" {e2e['mean_frames_60fps']} frames at 60 FPS)"
    )
    fr = rep["frames"]
    lines.append(
        f"frames: {fr['sent']} sent, {fr['presented']} presented,"
        f" {fr['dropped']} dropped, {fr['corrupted']} corrupted,"
        f" {fr['forced_i']} forced I"
    )
    lines.append(f"encoded throughput: {rep['network']['encoded_throughput_bps']} bps;"
                 f" link utilization {rep['network']['link_utilization']}")
    lines.append("")
    rows = [
        (r["stage"], f"{r['mean_ms']:.3f}", f"{r['share_pct']:.1f}%")
        for r in data["breakdown"]
    ]
    lines.append(render_table(rows, ("stage", "mean ms", "share")))
    if "ab_compare" in data:
        lines.append("")
        ab = data["ab_compare"]
        lines.append(f"A/B toggle {ab['toggle']}: saves {ab['delta_ms']} ms end-to-end")
        rows = [(k, f"{v:+.3f}") for k, v in ab["stage_deltas_ms"].items()]
        lines.append(render_table(rows, ("stage", "delta ms")))
    return "\n".join(lines)
