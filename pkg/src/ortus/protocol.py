"""Experiment scripts, the closed-loop runner, and trace recording.

A protocol file is line oriented; ``#`` comments and blank lines are
skipped.  The step count comes first, then any number of timed events whose
windows are half-open (``start`` inclusive, ``end`` exclusive) and may
overlap::

    steps <N>
    at <start>..<end> inject <element> <amplitude>
    at <start>..<end> clamp <element> <value>
    at <start>..<end> block respiration [exhale] [inhale]
    physiology <co2-element> <o2-element> <lung-element>   # optional remap

``block respiration`` with no trailing words blocks both halves.  The
per-step loop applies physiology deltas, advances the kernel, applies
plasticity, and records the committed activations; runs take no random
input, so replaying a protocol reproduces its trace byte for byte.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from . import physiology
from .connectome import Connectome
from .errors import OrtusError
from .kernel import ExternalInputs, H_LEN, NetView, SimConfig, SimState, step
from .physiology import PhysioConfig, RespirationClamp
from .plasticity import PlasticityConfig, plasticity_step


class ProtocolError(OrtusError):
    """A protocol file that cannot be parsed or resolved."""


class QueryError(OrtusError):
    """A summary query naming an unknown neuron or an invalid window."""


class EventKind(enum.Enum):
    INJECT = "inject"
    CLAMP = "clamp"
    BLOCK = "block"


@dataclass(frozen=True)
class ProtocolEvent:
    start: int
    end: int
    kind: EventKind
    element: str | None = None
    element_id: int | None = None
    value: float | None = None
    block_exhale: bool = False
    block_inhale: bool = False

    @property
    def label(self) -> str:
        if self.kind is EventKind.BLOCK:
            parts = ["block respiration"]
            if self.block_exhale:
                parts.append("exhale")
            if self.block_inhale:
                parts.append("inhale")
            return " ".join(parts)
        return f"{self.kind.value} {self.element} {self.value!r}"


@dataclass(frozen=True)
class Protocol:
    total_steps: int
    events: tuple[ProtocolEvent, ...]
    physio_names: tuple[str, str, str] | None = None


def parse_protocol(text: str, net: Connectome, source: str = "<protocol>") -> Protocol:
    """Parse protocol text, resolving element names against the connectome."""
    total: int | None = None
    events: list[ProtocolEvent] = []
    physio_names: tuple[str, str, str] | None = None

    def fail(lineno: int, message: str) -> ProtocolError:
        return ProtocolError(f"{source}:{lineno}: {message}")

    def resolve(lineno: int, name: str) -> int:
        if name not in net.name_to_id:
            raise fail(lineno, f"unknown element {name!r}")
        return net.name_to_id[name]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "steps":
            if total is not None:
                raise fail(lineno, "steps declared twice")
            if len(words) != 2 or not words[1].isdigit():
                raise fail(lineno, "expected: steps <N>")
            total = int(words[1])
            continue
        if words[0] == "physiology":
            if len(words) != 4:
                raise fail(lineno, "expected: physiology <co2> <o2> <lung>")
            for name in words[1:]:
                resolve(lineno, name)
            physio_names = (words[1], words[2], words[3])
            continue
        if words[0] != "at":
            raise fail(lineno, f"unknown directive {words[0]!r}")
        if total is None:
            raise fail(lineno, "steps must be declared before events")
        if len(words) < 3 or ".." not in words[1]:
            raise fail(lineno, "expected: at <start>..<end> <action> ...")
        start_s, _, end_s = words[1].partition("..")
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise fail(lineno, f"bad step range {words[1]!r}") from None
        if not (0 <= start < end <= total):
            raise fail(lineno, f"range {start}..{end} must satisfy 0 <= start < end <= {total}")
        action, args = words[2], words[3:]
        if action == "inject":
            if len(args) != 2:
                raise fail(lineno, "expected: inject <element> <amplitude>")
            amplitude = _number(args[1], lineno, fail)
            if not (-1.0 <= amplitude <= 1.0):
                raise fail(lineno, f"amplitude {amplitude!r} outside [-1, 1]")
            events.append(
                ProtocolEvent(start, end, EventKind.INJECT, args[0], resolve(lineno, args[0]), amplitude)
            )
        elif action == "clamp":
            if len(args) != 2:
                raise fail(lineno, "expected: clamp <element> <value>")
            value = _number(args[1], lineno, fail)
            if not (-1.0 <= value <= 1.0):
                raise fail(lineno, f"clamp value {value!r} outside [-1, 1]")
            events.append(
                ProtocolEvent(start, end, EventKind.CLAMP, args[0], resolve(lineno, args[0]), value)
            )
        elif action == "block":
            if not args or args[0] != "respiration":
                raise fail(lineno, "expected: block respiration [exhale] [inhale]")
            flags = args[1:]
            for flag in flags:
                if flag not in ("exhale", "inhale"):
                    raise fail(lineno, f"unknown respiration flag {flag!r}")
            exhale = "exhale" in flags or not flags
            inhale = "inhale" in flags or not flags
            events.append(
                ProtocolEvent(start, end, EventKind.BLOCK, block_exhale=exhale, block_inhale=inhale)
            )
        else:
            raise fail(lineno, f"unknown action {action!r}")

    if total is None:
        raise ProtocolError(f"{source}: missing steps declaration")
    return Protocol(total, tuple(events), physio_names)


def _number(text: str, lineno: int, fail) -> float:
    try:
        return float(text)
    except ValueError:
        raise fail(lineno, f"bad number {text!r}") from None


def load_protocol(path: str | Path, net: Connectome) -> Protocol:
    path = Path(path)
    return parse_protocol(path.read_text(), net, source=str(path))


def control_variant(protocol: Protocol) -> Protocol:
    """The never-conditioned twin of a protocol: same length, but only the
    final injection (the probe) survives."""
    injects = [ev for ev in protocol.events if ev.kind is EventKind.INJECT]
    keep = (injects[-1],) if injects else ()
    return replace(protocol, events=keep)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)
    physio: PhysioConfig = field(default_factory=PhysioConfig)
    plasticity_enabled: bool = True
    weight_snapshot_every: int = 10


@dataclass
class TraceLog:
    """Everything a run produces: per-step activations, sparse weight
    snapshots, and markers at every event boundary."""

    names: tuple[str, ...]
    activations: np.ndarray  # (steps, n)
    syn_pre: np.ndarray
    syn_post: np.ndarray
    weight_snapshots: list[tuple[int, np.ndarray]]
    markers: list[tuple[int, str]]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.names.index(name)
        except ValueError:
            raise QueryError(f"no neuron named {name!r} in trace") from None
        return self.activations[:, idx]

    def write_csv(self, outdir: str | Path, prefix: str = "") -> list[Path]:
        """Write trace.csv, weights.csv, and markers.csv; deterministic bytes."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []

        trace_path = outdir / f"{prefix}trace.csv"
        lines = [",".join(self.names)]
        for row in self.activations:
            lines.append(",".join(repr(float(v)) for v in row))
        trace_path.write_text("\n".join(lines) + "\n")
        paths.append(trace_path)

        weights_path = outdir / f"{prefix}weights.csv"
        lines = ["step,pre,post,weight"]
        for step_no, weights in self.weight_snapshots:
            for pre, post, w in zip(self.syn_pre, self.syn_post, weights):
                lines.append(f"{step_no},{pre},{post},{repr(float(w))}")
        weights_path.write_text("\n".join(lines) + "\n")
        paths.append(weights_path)

        markers_path = outdir / f"{prefix}markers.csv"
        lines = ["step,marker"]
        for step_no, label in self.markers:
            lines.append(f"{step_no},{label}")
        markers_path.write_text("\n".join(lines) + "\n")
        paths.append(markers_path)
        return paths


def run(net: Connectome, protocol: Protocol, cfg: RunConfig | None = None) -> TraceLog:
    """Drive the closed loop for every protocol step and record the trace.

    Each step: physiology deltas from the current state, protocol
    injections and clamps, one kernel step, one plasticity pass (skipped
    while the history warms up), then the committed activations are logged.
    """
    cfg = cfg or RunConfig()
    view = NetView.of(net)

    physio_cfg = cfg.physio
    if protocol.physio_names is not None:
        co2, o2, lung = protocol.physio_names
        physio_cfg = replace(physio_cfg, co2_name=co2, o2_name=o2, lung_name=lung)

    a0 = np.zeros(view.n)
    binding = None
    if physio_cfg.enabled:
        binding = physiology.bind(net, physio_cfg)
        a0[binding.co2] = physio_cfg.initial_co2
        a0[binding.o2] = physio_cfg.initial_o2

    state = SimState.initial(net, a0)
    trace = np.zeros((protocol.total_steps, view.n))
    snapshots: list[tuple[int, np.ndarray]] = [(0, state.weights.copy())]
    markers: list[tuple[int, str]] = []
    for ev in protocol.events:
        markers.append((ev.start, f"start {ev.label}"))
        markers.append((ev.end, f"end {ev.label}"))

    for m in range(protocol.total_steps):
        ext = ExternalInputs.zeros(view.n)
        active = [ev for ev in protocol.events if ev.start <= m < ev.end]
        if binding is not None:
            clamp = RespirationClamp(
                block_exhale=any(ev.block_exhale for ev in active if ev.kind is EventKind.BLOCK),
                block_inhale=any(ev.block_inhale for ev in active if ev.kind is EventKind.BLOCK),
            )
            ext.inject += physiology.metabolic_step(state, physio_cfg, binding)
            ext.inject += physiology.lung_exchange(state, physio_cfg, binding, clamp)
        for ev in active:
            if ev.kind is EventKind.INJECT:
                ext.inject[ev.element_id] += ev.value
            elif ev.kind is EventKind.CLAMP:
                ext.clamp_mask[ev.element_id] = True
                ext.clamp_value[ev.element_id] = ev.value

        state = step(state, view, ext, cfg.sim)
        if cfg.plasticity_enabled and state.step >= H_LEN:
            state.weights = plasticity_step(state, view, cfg.plasticity)
        trace[m] = state.activation
        if cfg.weight_snapshot_every and state.step % cfg.weight_snapshot_every == 0:
            snapshots.append((state.step, state.weights.copy()))

    if protocol.total_steps and snapshots[-1][0] != protocol.total_steps:
        snapshots.append((protocol.total_steps, state.weights.copy()))

    return TraceLog(
        names=view.names,
        activations=trace,
        syn_pre=view.syn_pre,
        syn_post=view.syn_post,
        weight_snapshots=snapshots,
        markers=markers,
    )


# ---------------------------------------------------------------------------
# summary metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Query:
    metric: str  # peak | mean | auc | peak_count | interval_mean | interval_cv
    neuron: str
    start: int | None = None
    end: int | None = None


@dataclass(frozen=True)
class MetricRow:
    metric: str
    neuron: str
    start: int
    end: int
    value: float


def peak_indices(x: np.ndarray, min_prominence: float = 0.05) -> np.ndarray:
    """Indices of local maxima whose prominence clears a fraction of the
    signal's full swing; a flat signal has no peaks."""
    x = np.asarray(x, dtype=float)
    swing = float(x.max() - x.min()) if len(x) else 0.0
    if swing <= 0.0:
        return np.zeros(0, dtype=int)
    idx, _ = find_peaks(x, prominence=min_prominence * swing)
    return idx


def summarize(trace: TraceLog, queries: list[Query]) -> list[MetricRow]:
    """Evaluate window metrics against a trace.

    ``peak``/``mean``/``auc`` reduce the window directly; ``peak_count``,
    ``interval_mean``, and ``interval_cv`` run peak detection over it.
    """
    rows: list[MetricRow] = []
    total = trace.activations.shape[0]
    for q in queries:
        col = trace.column(q.neuron)
        start = 0 if q.start is None else q.start
        end = total if q.end is None else q.end
        if not (0 <= start < end <= total):
            raise QueryError(f"window {start}..{end} invalid for a {total}-step trace")
        seg = col[start:end]
        if q.metric == "peak":
            value = float(seg.max())
        elif q.metric == "mean":
            value = float(seg.mean())
        elif q.metric == "auc":
            value = float(seg.sum())
        elif q.metric in ("peak_count", "interval_mean", "interval_cv"):
            peaks = peak_indices(seg)
            if q.metric == "peak_count":
                value = float(len(peaks))
            else:
                if len(peaks) < 2:
                    value = float("nan")
                else:
                    intervals = np.diff(peaks).astype(float)
                    if q.metric == "interval_mean":
                        value = float(intervals.mean())
                    else:
                        value = float(intervals.std() / intervals.mean())
        else:
            raise QueryError(f"unknown metric {q.metric!r}")
        rows.append(MetricRow(q.metric, q.neuron, start, end, value))
    return rows


def metrics_csv(rows: list[MetricRow], extra: list[tuple[str, str, float]] | None = None) -> str:
    lines = ["metric,neuron,start,end,value"]
    for r in rows:
        lines.append(f"{r.metric},{r.neuron},{r.start},{r.end},{repr(r.value)}")
    for name, neuron, value in extra or []:
        lines.append(f"{name},{neuron},,,{repr(value)}")
    return "\n".join(lines) + "\n"
