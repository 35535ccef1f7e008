"""Protocol parsing, the closed-loop runner, trace logging, and metrics."""

import math

import numpy as np
import pytest

from ortus.protocol import (
    EventKind,
    Protocol,
    ProtocolError,
    Query,
    QueryError,
    RunConfig,
    TraceLog,
    control_variant,
    load_protocol,
    metrics_csv,
    parse_protocol,
    peak_indices,
    run,
    summarize,
)

GOOD = """
# conditioning-style schedule
steps 100
at 10..20 inject sH2O 0.8
at 10..20 block respiration exhale inhale
at 30..40 clamp eFEAR 0.5
at 50..60 block respiration
at 70..80 inject sH2O 0.4
"""


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def test_parse_happy_path(organism_net):
    proto = parse_protocol(GOOD, organism_net)
    assert proto.total_steps == 100
    kinds = [ev.kind for ev in proto.events]
    assert kinds == [
        EventKind.INJECT,
        EventKind.BLOCK,
        EventKind.CLAMP,
        EventKind.BLOCK,
        EventKind.INJECT,
    ]
    inject = proto.events[0]
    assert (inject.start, inject.end) == (10, 20)
    assert inject.element == "sH2O"
    assert inject.element_id == organism_net.id_of("sH2O")
    assert inject.value == 0.8


def test_block_with_no_flags_blocks_both(organism_net):
    proto = parse_protocol("steps 10\nat 0..5 block respiration\n", organism_net)
    (ev,) = proto.events
    assert ev.block_exhale and ev.block_inhale


def test_block_single_flag(organism_net):
    proto = parse_protocol("steps 10\nat 0..5 block respiration exhale\n", organism_net)
    (ev,) = proto.events
    assert ev.block_exhale and not ev.block_inhale


def test_physiology_remap_directive(organism_net):
    proto = parse_protocol(
        "steps 10\nphysiology sO2 sCO2 LUNG\n", organism_net
    )
    assert proto.physio_names == ("sO2", "sCO2", "LUNG")


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("at 0..5 inject sH2O 0.5\n", "steps must be declared before"),
        ("steps 10\nsteps 20\n", "declared twice"),
        ("steps ten\n", "expected: steps <N>"),
        ("steps 10\nat 5..5 inject sH2O 0.5\n", "0 <= start < end"),
        ("steps 10\nat 5..20 inject sH2O 0.5\n", "0 <= start < end"),
        ("steps 10\nat 0..5 inject sH2O 1.5\n", "outside [-1, 1]"),
        ("steps 10\nat 0..5 inject sGHOST 0.5\n", "unknown element"),
        ("steps 10\nat 0..5 clamp eFEAR high\n", "bad number"),
        ("steps 10\nat 0..5 block respiration sideways\n", "unknown respiration flag"),
        ("steps 10\nat 0..5 explode sH2O 1\n", "unknown action"),
        ("steps 10\nwait 0..5\n", "unknown directive"),
        ("", "missing steps"),
    ],
)
def test_parse_errors(organism_net, text, fragment):
    with pytest.raises(ProtocolError) as exc:
        parse_protocol(text, organism_net)
    assert fragment in str(exc.value)


def test_parse_errors_carry_source_and_line(organism_net):
    with pytest.raises(ProtocolError) as exc:
        parse_protocol("steps 10\nat 0..5 inject sGHOST 1\n", organism_net, source="exp.protocol")
    assert str(exc.value).startswith("exp.protocol:2:")


def test_load_protocol_resolves_against_net(organism_net, conditioning_protocol_path):
    proto = load_protocol(conditioning_protocol_path, organism_net)
    assert proto.total_steps == 700
    injects = [ev for ev in proto.events if ev.kind is EventKind.INJECT]
    assert len(injects) == 5
    assert all(ev.element == "sH2O" for ev in injects)


def test_control_variant_keeps_only_the_probe(organism_net):
    proto = parse_protocol(GOOD, organism_net)
    control = control_variant(proto)
    assert control.total_steps == proto.total_steps
    assert len(control.events) == 1
    (probe,) = control.events
    assert probe.kind is EventKind.INJECT
    assert (probe.start, probe.end, probe.value) == (70, 80, 0.4)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def test_run_shapes_and_markers(organism_net):
    proto = parse_protocol("steps 30\nat 5..10 inject sH2O 0.5\n", organism_net)
    trace = run(organism_net, proto, RunConfig())
    assert trace.activations.shape == (30, organism_net.n)
    assert trace.names[: 3] == ("sCO2", "sO2", "sH2O")
    assert (5, "start inject sH2O 0.5") in trace.markers
    assert (10, "end inject sH2O 0.5") in trace.markers


def test_run_weight_snapshot_cadence(organism_net):
    proto = parse_protocol("steps 25\n", organism_net)
    trace = run(organism_net, proto, RunConfig(weight_snapshot_every=10))
    assert [s for s, _ in trace.weight_snapshots] == [0, 10, 20, 25]
    proto2 = parse_protocol("steps 20\n", organism_net)
    trace2 = run(organism_net, proto2, RunConfig(weight_snapshot_every=10))
    assert [s for s, _ in trace2.weight_snapshots] == [0, 10, 20]


def test_injection_moves_the_sensor(organism_net):
    quiet = run(organism_net, parse_protocol("steps 20\n", organism_net), RunConfig())
    poked = run(
        organism_net,
        parse_protocol("steps 20\nat 5..15 inject sH2O 0.8\n", organism_net),
        RunConfig(),
    )
    assert np.array_equal(quiet.column("sH2O")[:5], poked.column("sH2O")[:5])
    assert poked.column("sH2O")[6] > quiet.column("sH2O")[6] + 0.5


def test_clamp_holds_exactly_then_releases(organism_net):
    proto = parse_protocol("steps 20\nat 5..10 clamp eFEAR 0.33\n", organism_net)
    trace = run(organism_net, proto, RunConfig())
    fear = trace.column("eFEAR")
    assert np.all(fear[5:10] == 0.33)
    assert fear[10] != 0.33


def test_half_open_windows(organism_net):
    proto = parse_protocol("steps 10\nat 3..6 clamp sH2O 0.9\n", organism_net)
    trace = run(organism_net, proto, RunConfig())
    h2o = trace.column("sH2O")
    assert h2o[2] == 0.0 and h2o[3] == 0.9 and h2o[5] == 0.9
    assert h2o[6] < 0.9  # released, decaying


def test_physio_disabled_leaves_gases_flat(organism_net):
    cfg = RunConfig()
    cfg.physio = type(cfg.physio)(enabled=False)
    trace = run(organism_net, parse_protocol("steps 15\n", organism_net), cfg)
    assert not trace.column("sCO2").any()
    assert not trace.column("sO2").any()


def test_trace_column_unknown_name(organism_net):
    trace = run(organism_net, parse_protocol("steps 5\n", organism_net), RunConfig())
    with pytest.raises(QueryError):
        trace.column("nNOPE")


# ---------------------------------------------------------------------------
# csv output
# ---------------------------------------------------------------------------


def test_write_csv_layout(organism_net, tmp_path):
    proto = parse_protocol("steps 12\nat 2..4 inject sH2O 0.5\n", organism_net)
    trace = run(organism_net, proto, RunConfig())
    paths = trace.write_csv(tmp_path)
    assert [p.name for p in paths] == ["trace.csv", "weights.csv", "markers.csv"]

    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == ",".join(trace.names)  # header is names only
    assert len(lines) == 1 + 12
    first = [float(v) for v in lines[1].split(",")]
    np.testing.assert_allclose(first, trace.activations[0])

    wlines = (tmp_path / "weights.csv").read_text().splitlines()
    assert wlines[0] == "step,pre,post,weight"
    assert len(wlines) == 1 + len(trace.weight_snapshots) * len(organism_net.chem)

    mlines = (tmp_path / "markers.csv").read_text().splitlines()
    assert mlines[0] == "step,marker"
    assert mlines[1] == "2,start inject sH2O 0.5"


def test_write_csv_prefix(organism_net, tmp_path):
    proto = parse_protocol("steps 3\n", organism_net)
    trace = run(organism_net, proto, RunConfig())
    paths = trace.write_csv(tmp_path, prefix="control_")
    assert [p.name for p in paths] == [
        "control_trace.csv",
        "control_weights.csv",
        "control_markers.csv",
    ]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def synthetic_trace():
    t = np.arange(200)
    wave = 0.4 * np.sin(2 * np.pi * t / 40.0)
    flat = np.zeros(200)
    activations = np.stack([wave, flat], axis=1)
    return TraceLog(
        names=("osc", "flat"),
        activations=activations,
        syn_pre=np.array([], dtype=int),
        syn_post=np.array([], dtype=int),
        weight_snapshots=[],
        markers=[],
    )


def test_peak_indices_counts_cycles():
    trace = synthetic_trace()
    idx = peak_indices(trace.column("osc"))
    assert len(idx) == 5
    np.testing.assert_allclose(np.diff(idx), 40)


def test_peak_indices_ignores_flat_signals():
    assert len(peak_indices(np.zeros(50))) == 0
    assert len(peak_indices(np.full(50, 0.7))) == 0


def test_summarize_window_metrics():
    trace = synthetic_trace()
    rows = summarize(
        trace,
        [
            Query("peak", "osc", 0, 40),
            Query("mean", "flat"),
            Query("auc", "flat", 0, 10),
            Query("peak_count", "osc"),
            Query("interval_mean", "osc"),
            Query("interval_cv", "osc"),
        ],
    )
    values = {r.metric: r.value for r in rows}
    assert values["peak"] == pytest.approx(0.4, abs=1e-3)
    assert values["mean"] == 0.0
    assert values["auc"] == 0.0
    assert values["peak_count"] == 5.0
    assert values["interval_mean"] == pytest.approx(40.0)
    assert values["interval_cv"] == pytest.approx(0.0)


def test_summarize_interval_metrics_need_two_peaks():
    trace = synthetic_trace()
    rows = summarize(trace, [Query("interval_cv", "osc", 0, 50)])  # one cycle only
    assert math.isnan(rows[0].value)


def test_summarize_rejects_bad_windows():
    trace = synthetic_trace()
    with pytest.raises(QueryError):
        summarize(trace, [Query("peak", "osc", 10, 5)])
    with pytest.raises(QueryError):
        summarize(trace, [Query("peak", "osc", 0, 999)])
    with pytest.raises(QueryError):
        summarize(trace, [Query("median", "osc")])


def test_metrics_csv_format():
    trace = synthetic_trace()
    rows = summarize(trace, [Query("peak", "osc", 0, 40)])
    text = metrics_csv(rows, extra=[("probe_peak_ratio", "osc", 2.5)])
    lines = text.splitlines()
    assert lines[0] == "metric,neuron,start,end,value"
    assert lines[1].startswith("peak,osc,0,40,")
    assert lines[2] == "probe_peak_ratio,osc,,,2.5"
