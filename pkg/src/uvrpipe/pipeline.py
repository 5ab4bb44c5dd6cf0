"""End-to-end frame lifecycle simulation and A/B comparison.

One simulated frame flows: render tick -> encode (GOP plan + sizing) ->
host network stack -> fragment burst on the air -> reassembly at the
receiver -> rate-capped decode -> presentation. Dropped-frame feedback runs
against the same clock over the same (shared) medium.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Optional

from . import cp as cp_mod
from . import dpp, netsim
from .codec import DecodeServer, EncodedFrame, FrameType, GopWalker, encoded_size
from .core import ColorSpace, EventQueue, FrameSource, Rng, SimTime, frame_ticks, tick_time
from .report import FrameRecord, MetricsReport, build_distributions
from .scenario import EncodeMode, ScenarioConfig, ScenarioError, to_flat_dict, with_toggle
from .stages import DatapathGraph, OptimizationToggles, TOGGLE_NAMES, build_datapath

CP_WIRE_BYTES = dpp.HEADER_LEN + 9

STAGE_ORDER = (
    "sampler-wait",
    "encode-path",
    "host-netstack",
    "network",
    "decode-wait",
    "mud",
    "presentation",
)


@dataclass
class SimResult:
    metrics: MetricsReport
    records: list[FrameRecord]
    graph: DatapathGraph
    transcript: Optional[list[tuple]] = None


class Simulator:
    def __init__(self, cfg: ScenarioConfig, collect_transcript: bool = False):
        errors = cfg.validate()
        if errors:
            raise ScenarioError(errors)
        self.cfg = cfg
        self.codec_cfg = replace(
            cfg.codec,
            transcode_avoidance=cfg.toggles.transcode_avoidance,
            shared_gpu_buffer=cfg.toggles.shared_gpu_buffer,
        )
        self.graph = build_datapath(cfg.toggles, cfg.codec, cfg.channel)
        self.channel = replace(cfg.channel, topology=self.graph.topology)
        self.rng = Rng(cfg.seed)
        self.queue = EventQueue()
        self.link = netsim.LinkState()
        self.source = FrameSource(cfg.workload, ColorSpace.RGB, self.rng)
        self.walker = GopWalker(self.codec_cfg)
        self.reasm = dpp.Reassembler(cfg.drop_deadline_us)
        self.mud_fb = cp_mod.MudFeedbackState()
        self.host_fb = cp_mod.HostFeedbackState()
        self.decoder = DecodeServer(self.codec_cfg.decode_fps_cap, self.graph.mud_service_us)
        self.transcript: Optional[list[tuple]] = [] if collect_transcript else None

        self.records: list[FrameRecord] = []
        self._by_wire: dict[int, FrameRecord] = {}
        self._next_wire_id = 0
        self._latest_raw = None
        self._last_sampled = -1
        self._rendered = 0
        self._scheduled_deadlines: set[tuple[int, SimTime]] = set()
        self._sync_task_us: list[int] = []
        self._sync_overruns = 0
        self._cp_sent = 0

    # --- host side ---------------------------------------------------------

    def _encode_and_send(self, now: SimTime, raw) -> None:
        g = self.graph
        force = self.host_fb.pending_force if self.cfg.toggles.feedback_control else False
        ftype, gop_index, forced = self.walker.plan(force)
        encode_done = now + g.encode_path_us
        frame = EncodedFrame(
            frame_id=self._next_wire_id,
            frame_type=ftype,
            size_bytes=encoded_size(ftype, self.codec_cfg, raw.complexity),
            gop_index=gop_index,
            encode_done_time=encode_done,
            forced=forced,
            gen_time=raw.gen_time,
            complexity=raw.complexity,
        )
        self._next_wire_id += 1
        if ftype is FrameType.I and self.cfg.toggles.feedback_control:
            cp_mod.host_on_iframe_emitted(
                self.host_fb, encode_done, self.cfg.suppression_window_us
            )

        rec = FrameRecord(
            frame_id=frame.frame_id,
            frame_type=ftype.value,
            forced=forced,
            gen_us=raw.gen_time,
            encoded_us=encode_done,
            size_bytes=frame.size_bytes,
        )
        self.records.append(rec)
        self._by_wire[frame.frame_id] = rec

        wire_request = encode_done + g.host_netstack_us
        busy_before = self.link.busy_until
        sizes = [dpp.HEADER_LEN + p for p in dpp.fragment_sizes(frame.size_bytes)]
        arrivals = netsim.transmit_burst(self.channel, self.link, sizes, wire_request, self.rng)
        rec.sent_first_us = wire_request if wire_request > busy_before else busy_before

        if frame.frame_id == self.cfg.fault_drop_frame_id:
            victim = self.cfg.fault_drop_frag_index
            if victim < 0:
                victim = int(self.rng.stream("fault").integers(0, len(sizes)))
            if victim < len(arrivals):
                arrivals[victim] = None

        delivered = [(arr, idx) for idx, arr in enumerate(arrivals) if arr is not None]
        if delivered:
            self.queue.schedule(
                delivered[-1][0],
                (
                    "burst",
                    frame.frame_id,
                    delivered,
                    len(sizes),
                    ftype is FrameType.I,
                    forced,
                    raw.gen_time,
                ),
            )

        if self.cfg.encode_mode is EncodeMode.SYNC:
            self._sync_task_us.append(g.encode_path_us)

    def _handle_render(self, t: SimTime, index: int) -> None:
        raw = self.source.next_frame(t)
        self._rendered += 1
        if self.cfg.encode_mode is EncodeMode.SYNC:
            # decimate to the codec rate when rendering faster than it
            if self.cfg.render_fps <= self.codec_cfg.fps or (
                index * self.codec_cfg.fps // self.cfg.render_fps
                != (index + 1) * self.codec_cfg.fps // self.cfg.render_fps
            ):
                self._encode_and_send(t, raw)
                period = tick_time(index + 1, self.cfg.render_fps) - t
                if self.cfg.render_work_us + self.graph.encode_path_us > period:
                    self._sync_overruns += 1
        else:
            self._latest_raw = raw

    def _handle_sample(self, t: SimTime) -> None:
        raw = self._latest_raw
        if raw is None or raw.frame_id == self._last_sampled:
            return
        self._last_sampled = raw.frame_id
        self._encode_and_send(t, raw)

    def _handle_cp(self, t: SimTime, msg: cp_mod.CpMessage) -> None:
        if not self.cfg.toggles.feedback_control:
            return
        cp_mod.host_on_request(self.host_fb, msg, t)

    # --- receiver side -----------------------------------------------------

    def _send_cp(self, msg: cp_mod.CpMessage, t: SimTime) -> None:
        self._cp_sent += 1
        arrival = netsim.transmit(self.channel, self.link, CP_WIRE_BYTES, t, self.rng)
        if arrival is not None:
            self.queue.schedule(arrival, ("cp", msg))

    def _on_reassembly(self, ev, t: SimTime) -> None:
        if isinstance(ev, dpp.FrameComplete):
            rec = self._by_wire.get(ev.frame_id)
            if rec is not None:
                net_done = ev.last_arrival + self.graph.link_fixed_us
                rec.arrived_last_us = ev.last_arrival
                rec.net_us = net_done - (rec.encoded_us + self.graph.host_netstack_us)
                start, wait = self.decoder.offer(net_done)
                rec.queue_wait_us = wait
                rec.decode_start_us = start
                rec.presented_us = start + self.graph.mud_service_us + self.graph.residual_us
        else:
            rec = self._by_wire.get(ev.frame_id)
            if rec is not None:
                rec.dropped = True
        if self.cfg.toggles.feedback_control:
            for msg in cp_mod.mud_on_frame_event(self.mud_fb, ev, t):
                self._send_cp(msg, t)

    def _schedule_deadlines(self) -> None:
        for fid, deadline in self.reasm.pending_deadlines():
            key = (fid, deadline)
            if key not in self._scheduled_deadlines:
                self._scheduled_deadlines.add(key)
                self.queue.schedule(deadline + 1, ("deadline", fid))

    def _handle_burst(self, t: SimTime, event: tuple) -> None:
        _, wire_id, delivered, frag_count, is_iframe, forced, gen_ts = event
        fragments = [(arr, idx) for arr, idx in delivered]
        for ev in self.reasm.on_burst(fragments, wire_id, frag_count, is_iframe, forced, gen_ts):
            self._on_reassembly(ev, t)
        self._schedule_deadlines()

    def _handle_deadline(self, t: SimTime) -> None:
        for ev in self.reasm.expire(t):
            self._on_reassembly(ev, t)
        self._schedule_deadlines()

    # --- run ---------------------------------------------------------------

    def _dispatch(self, t: SimTime, event: tuple) -> None:
        kind = event[0]
        if self.transcript is not None:
            self.transcript.append((t, kind, event[1] if len(event) > 1 else None))
        if kind == "render":
            self._handle_render(t, event[1])
        elif kind == "sample":
            self._handle_sample(t)
        elif kind == "burst":
            self._handle_burst(t, event)
        elif kind == "deadline":
            self._handle_deadline(t)
        elif kind == "cp":
            self._handle_cp(t, event[1])

    def run(self) -> SimResult:
        duration_us = self.cfg.duration_us
        for i, t in frame_ticks(self.cfg.render_fps, duration_us):
            self.queue.schedule(t, ("render", i))
        if self.cfg.encode_mode is EncodeMode.ASYNC:
            for i, t in frame_ticks(self.codec_cfg.fps, duration_us):
                self.queue.schedule(t, ("sample", i))
        self.queue.run(self._dispatch)
        self._mark_corruption()
        return SimResult(
            metrics=self._metrics(),
            records=self.records,
            graph=self.graph,
            transcript=self.transcript,
        )

    def _mark_corruption(self) -> None:
        broken = False
        for rec in self.records:
            if rec.dropped:
                broken = True
            elif rec.presented_us >= 0:
                if rec.frame_type == "I":
                    broken = False
                elif broken:
                    rec.corrupted = True

    def _metrics(self) -> MetricsReport:
        cfg = self.cfg
        g = self.graph
        presented = [r for r in self.records if r.presented_us >= 0]
        dropped = sum(1 for r in self.records if r.dropped)
        corrupted = sum(1 for r in presented if r.corrupted)
        unresolved = sum(1 for r in self.records if not r.dropped and r.presented_us < 0)

        per_stage: dict[str, list[int]] = {name: [] for name in STAGE_ORDER}
        e2e: list[int] = []
        for r in presented:
            e2e.append(r.presented_us - r.gen_us)
            per_stage["sampler-wait"].append(r.encoded_us - g.encode_path_us - r.gen_us)
            per_stage["encode-path"].append(g.encode_path_us)
            per_stage["host-netstack"].append(g.host_netstack_us)
            per_stage["network"].append(r.net_us)
            per_stage["decode-wait"].append(r.queue_wait_us)
            per_stage["mud"].append(g.mud_service_us)
            per_stage["presentation"].append(g.residual_us)
        if not any(per_stage["sampler-wait"]):
            del per_stage["sampler-wait"]
        if g.residual_us == 0:
            del per_stage["presentation"]

        stages, e2e_dist = build_distributions(per_stage, e2e)
        sent_bytes = sum(r.size_bytes for r in self.records)
        duration_s = cfg.duration_s
        mech_sent = self.link.sent_packets
        network = {
            "link_utilization": round(
                netsim.link_occupancy(self.link, cfg.duration_us), 6
            ),
            "sent_packets": mech_sent,
            "lost_packets": self.link.lost_packets,
            "fragment_loss_rate": round(self.link.lost_packets / mech_sent, 6)
            if mech_sent
            else 0.0,
            "encoded_throughput_bps": round(sent_bytes * 8 / duration_s, 2),
            "link_fixed_us_per_frame": g.link_fixed_us,
        }
        raw_rgb = cfg.workload.width * cfg.workload.height * 3
        raw_yuv = cfg.workload.width * cfg.workload.height * 3 // 2
        ledger = dpp.CopyLedger()
        dpp.host_capture_path(
            raw_rgb, raw_yuv, cfg.toggles.transcode_avoidance, cfg.toggles.shared_gpu_buffer, ledger
        )
        raw_copy_per_frame = ledger.total_bytes()
        copies = {
            "host_netstack_copies_per_frame": g.host_netstack_copies,
            "raw_copy_bytes_per_frame": raw_copy_per_frame,
            "encoded_copy_bytes_total": sent_bytes * g.host_netstack_copies,
            "host_copied_bytes_total": sent_bytes * g.host_netstack_copies
            + raw_copy_per_frame * len(self.records),
        }
        sent = len(self.records)
        frames = {
            "rendered": self._rendered,
            "sent": sent,
            "presented": len(presented),
            "dropped": dropped,
            "corrupted": corrupted,
            "forced_i": self.host_fb.forced_count,
            "sampler_skipped": max(0, self._rendered - sent)
            if cfg.encode_mode is EncodeMode.ASYNC
            else 0,
            "dropped_rate": round(dropped / sent, 6) if sent else 0.0,
            "corrupted_rate": round(corrupted / len(presented), 6) if presented else 0.0,
        }
        feedback = {
            "iframe_requests_sent": self._cp_sent,
            "requests_suppressed": self.host_fb.suppressed_count,
            "forced_iframes": self.host_fb.forced_count,
        }
        sync = None
        if cfg.encode_mode is EncodeMode.SYNC:
            mean_task = (
                sum(self._sync_task_us) / len(self._sync_task_us) if self._sync_task_us else 0.0
            )
            sync = {
                "task_time_mean_ms": round(mean_task / 1000.0, 4),
                "render_work_ms": round(cfg.render_work_us / 1000.0, 4),
                "tick_overruns": self._sync_overruns,
            }
        return MetricsReport(
            seed=cfg.seed,
            duration_s=duration_s,
            config=to_flat_dict(cfg),
            frames=frames,
            end_to_end=e2e_dist,
            stages=stages,
            network=network,
            copies=copies,
            feedback=feedback,
            sync=sync,
            unresolved_frames=unresolved,
        )


def run_scenario(cfg: ScenarioConfig, collect_transcript: bool = False) -> SimResult:
    return Simulator(cfg, collect_transcript=collect_transcript).run()


def ab_compare(cfg: ScenarioConfig, toggle: str) -> dict[str, Any]:
    """Mean end-to-end saving from enabling one optimization, same seed."""
    if toggle not in TOGGLE_NAMES:
        raise ScenarioError([f"unknown toggle '{toggle}' (have: {', '.join(TOGGLE_NAMES)})"])
    off = run_scenario(with_toggle(cfg, toggle, False)).metrics
    on = run_scenario(with_toggle(cfg, toggle, True)).metrics
    stage_deltas = {}
    for name in set(off.stages) | set(on.stages):
        before = off.stages.get(name, {}).get("mean_ms", 0.0)
        after = on.stages.get(name, {}).get("mean_ms", 0.0)
        stage_deltas[name] = round(before - after, 4)
    return {
        "toggle": toggle,
        "off_mean_ms": off.end_to_end["mean_ms"],
        "on_mean_ms": on.end_to_end["mean_ms"],
        "delta_ms": round(off.end_to_end["mean_ms"] - on.end_to_end["mean_ms"], 4),
        "stage_deltas_ms": {k: stage_deltas[k] for k in sorted(stage_deltas)},
    }


def ab_suite(base: ScenarioConfig) -> dict[str, Any]:
    """Every toggle measured one-at-a-time from ``base`` plus the residual.

    The p2p delta is taken both against the base color space and with
    transcoding avoidance active (RGB); the interaction residual follows the
    cumulative-measurement convention, so it uses the RGB p2p delta.
    """
    all_off = base
    results = {name: ab_compare(all_off, name) for name in TOGGLE_NAMES}
    rgb_base = with_toggle(all_off, "transcode_avoidance", True)
    p2p_rgb = ab_compare(rgb_base, "p2p_topology")
    baseline_mean = run_scenario(all_off).metrics.end_to_end["mean_ms"]
    all_on = replace(all_off, toggles=OptimizationToggles.all_on())
    all_on_mean = run_scenario(all_on).metrics.end_to_end["mean_ms"]
    delta_sum = (
        results["transcode_avoidance"]["delta_ms"]
        + results["shared_gpu_buffer"]["delta_ms"]
        + results["direct_net_io"]["delta_ms"]
        + p2p_rgb["delta_ms"]
        + results["feedback_control"]["delta_ms"]
    )
    residual = round(abs(baseline_mean - delta_sum - all_on_mean), 4)
    return {
        "baseline_mean_ms": baseline_mean,
        "all_on_mean_ms": all_on_mean,
        "deltas": results,
        "p2p_topology_rgb": p2p_rgb,
        "interaction_residual_ms": residual,
    }
