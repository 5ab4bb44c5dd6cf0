from dataclasses import replace

from uvrpipe.codec import CodecConfig, FrameType, encoded_size
from uvrpipe.core import ColorSpace
from uvrpipe.netsim import ChannelModel, Topology
from uvrpipe.stages import (
    NET_TARGET_US,
    OptimizationToggles,
    build_datapath,
    expected_transport_us,
    ledger_frame_copies,
    link_fixed_overhead_us,
)


def _graph(**kwargs):
    return build_datapath(OptimizationToggles(**kwargs), CodecConfig(), ChannelModel())


def test_baseline_graph_census():
    g = _graph()
    assert g.host_netstack_copies == 3
    assert "transcode" in g.stage_names()
    assert g.encode_path_us == 13_940
    assert g.host_netstack_us == 17_630
    assert g.mud_service_us == 3_640
    assert g.residual_us == 0
    assert g.topology is Topology.INFRA
    assert g.color_space is ColorSpace.YUV420


def test_all_on_graph_census():
    g = build_datapath(OptimizationToggles.all_on(), CodecConfig(gop_size=480), ChannelModel())
    assert g.stage_names() == ["capture-in-place", "encode", "link-send"]
    assert g.host_netstack_copies == 1
    assert g.encode_path_us == 3_720
    assert g.host_netstack_us == 17_630 - 13_670 - 100
    assert g.mud_service_us == 2_940
    assert g.residual_us == 1_400
    assert g.topology is Topology.P2P
    assert g.color_space is ColorSpace.RGB


def test_p2p_toggle_changes_no_host_stages():
    a = _graph()
    b = _graph(p2p_topology=True)
    assert a.host_stages == b.host_stages
    assert a.host_netstack_copies == b.host_netstack_copies
    assert b.topology is Topology.P2P


def test_residual_requires_full_streamlined_datapath():
    assert _graph(transcode_avoidance=True, shared_gpu_buffer=True).residual_us == 0
    assert _graph(transcode_avoidance=True, direct_net_io=True).residual_us == 0
    assert (
        _graph(transcode_avoidance=True, shared_gpu_buffer=True, direct_net_io=True).residual_us
        == 1_400
    )


def test_encode_path_matches_latency_table():
    assert _graph().encode_path_us == 13_940
    assert _graph(transcode_avoidance=True).encode_path_us == 8_430
    assert _graph(shared_gpu_buffer=True).encode_path_us == 9_230
    assert _graph(transcode_avoidance=True, shared_gpu_buffer=True).encode_path_us == 3_720


def test_link_calibration_hits_network_targets():
    # fixed overhead + mechanistic mean over one GOP reproduces each target cell
    for topology in (Topology.INFRA, Topology.P2P):
        for rgb in (False, True):
            cfg = replace(CodecConfig(), transcode_avoidance=rgb)
            channel = replace(ChannelModel(), topology=topology)
            fixed = link_fixed_overhead_us(cfg, channel)
            size_i = encoded_size(FrameType.I, cfg, 1.0)
            size_p = encoded_size(FrameType.P, cfg, 1.0)
            mech = (
                expected_transport_us(size_i, channel)
                + (cfg.gop_size - 1) * expected_transport_us(size_p, channel)
            ) / cfg.gop_size
            color = ColorSpace.RGB if rgb else ColorSpace.YUV420
            target = NET_TARGET_US[(topology, color)]
            assert abs(fixed + mech - target) < 1.0


def test_frame_copy_ledger_dominance():
    base = _graph()
    opt = build_datapath(OptimizationToggles.all_on(), CodecConfig(), ChannelModel())
    for size in (41_408, 144_928, 1):
        lb = ledger_frame_copies(base, 6_220_800, 3_110_400, size)
        lo = ledger_frame_copies(opt, 6_220_800, 3_110_400, size)
        assert len([s for s in lb.stages() if "buffer" in s or "reframe" in s]) == 3
        assert len(lo.entries) == 1
        assert lo.total_bytes() < lb.total_bytes()
        assert not any(s in ("capture", "encode-input") for s in lo.stages())
