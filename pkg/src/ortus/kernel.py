"""Synchronous, double-buffered activation dynamics.

Each step every neuron loses a fixed fraction of its activation, gains
diffusive flux from its gap junctions (half the level difference per
junction, so what one side gains the other loses), gains graded
chemical-synapse input, and receives external injections; the result is
clamped to the reversal range and clamped neurons are then overridden.  All
reads come from the previous step's committed values, so the evaluation
order of neurons cannot change the outcome.

A chemical synapse transmits nothing until its presynaptic drive reaches the
postsynaptic neuron's transmission threshold.  Above it, the inflow is
``weight * g * (reversal - a_post)`` where the conductance ``g`` is a
sigmoid of the presynaptic activation scaled by the activation range.  A
synapse marked inverted is keyed to presynaptic suppression: its drive and
conductance both read the negated presynaptic activation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .connectome import ChemicalSynapse, Connectome, DEFAULT_PARAMS, GapJunction, NeuronParams
from .errors import ConfigError, OrtusError

H_LEN = 8


class ConservationError(OrtusError):
    """Gap-junction flux failed to cancel across the network."""


class GjMode(enum.Enum):
    SYMMETRIC = "symmetric"
    PAPER_LITERAL = "paper-literal"


@dataclass
class SimConfig:
    decay_fraction: float = 0.20
    gj_mode: GjMode = GjMode.SYMMETRIC
    activation_clamp: bool = True
    check_conservation: bool = False
    conservation_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if not (0.0 <= self.decay_fraction < 1.0):
            raise ConfigError(f"decay_fraction must lie in [0, 1), got {self.decay_fraction!r}")


@dataclass(frozen=True)
class NetView:
    """Vectorized, immutable view of a connectome's structure."""

    n: int
    names: tuple[str, ...]
    syn_pre: np.ndarray
    syn_post: np.ndarray
    syn_rev: np.ndarray
    syn_mi: np.ndarray
    syn_inverted: np.ndarray
    syn_gate: np.ndarray  # postsynaptic transmission threshold, per synapse
    syn_prerange: np.ndarray  # presynaptic activation range, per synapse
    gap_a: np.ndarray
    gap_b: np.ndarray
    gap_w: np.ndarray

    @classmethod
    def from_connectome(cls, net: Connectome) -> "NetView":
        thr = np.array([nr.threshold for nr in net.neurons], dtype=float)
        rng = np.array([nr.params.range for nr in net.neurons], dtype=float)
        pre = np.array([s.pre for s in net.chem], dtype=int)
        post = np.array([s.post for s in net.chem], dtype=int)
        return cls(
            n=net.n,
            names=tuple(nr.name for nr in net.neurons),
            syn_pre=pre,
            syn_post=post,
            syn_rev=np.array([s.reversal for s in net.chem], dtype=float),
            syn_mi=np.array([s.mutability for s in net.chem], dtype=float),
            syn_inverted=np.array([s.inverted for s in net.chem], dtype=bool),
            syn_gate=thr[post] if len(net.chem) else np.zeros(0),
            syn_prerange=rng[pre] if len(net.chem) else np.zeros(0),
            gap_a=np.array([g.a for g in net.gap], dtype=int),
            gap_b=np.array([g.b for g in net.gap], dtype=int),
            gap_w=np.array([g.weight for g in net.gap], dtype=float),
        )

    @classmethod
    def of(cls, net: "Connectome | NetView") -> "NetView":
        return net if isinstance(net, NetView) else cls.from_connectome(net)


@dataclass
class SimState:
    """Activations, their recent history (row 0 = most recent), and the
    live synaptic weights.  Produced fresh by each step."""

    activation: np.ndarray
    history: np.ndarray  # (H_LEN, n)
    weights: np.ndarray  # one per chemical synapse, storage order
    step: int = 0

    @classmethod
    def initial(cls, net: Connectome | NetView, activation: np.ndarray | None = None) -> "SimState":
        view = NetView.of(net)
        a = np.zeros(view.n) if activation is None else np.asarray(activation, dtype=float).copy()
        if a.shape != (view.n,):
            raise ConfigError(f"initial activation must have shape ({view.n},)")
        if isinstance(net, NetView):
            weights = np.ones(len(view.syn_pre))
        else:
            weights = np.array([s.weight for s in net.chem], dtype=float)
        return cls(a, np.tile(a, (H_LEN, 1)), weights, 0)


@dataclass
class ExternalInputs:
    inject: np.ndarray
    clamp_mask: np.ndarray
    clamp_value: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ExternalInputs":
        return cls(np.zeros(n), np.zeros(n, dtype=bool), np.zeros(n))


@dataclass(frozen=True)
class StepFluxes:
    """Per-step diagnostic quantities, one entry per neuron or synapse."""

    gj_in: np.ndarray
    gj_out: np.ndarray
    cs_in: np.ndarray
    decay: np.ndarray
    conductance: np.ndarray


# ---------------------------------------------------------------------------
# scalar building blocks
# ---------------------------------------------------------------------------


def conductance(a_pre: float, params: NeuronParams = DEFAULT_PARAMS, inverted: bool = False) -> float:
    """Graded synaptic conductance in (0, 1).

    A sigmoid of the presynaptic activation scaled by the activation range:
    exactly 0.5 at equilibrium, a little over 0.92 at the excitatory
    reversal, a little under 0.08 at the inhibitory reversal.
    """
    x = -a_pre if inverted else a_pre
    return 1.0 / (1.0 + math.exp(-5.0 * x / params.range))


def cs_inflow(
    syn: ChemicalSynapse,
    a_pre: float,
    a_post: float,
    threshold: float,
    params: NeuronParams = DEFAULT_PARAMS,
) -> float:
    """Inflow contributed by one chemical synapse, zero below the
    postsynaptic transmission threshold."""
    drive = -a_pre if syn.inverted else a_pre
    if drive < threshold:
        return 0.0
    g = conductance(a_pre, params, syn.inverted)
    return syn.weight * g * (syn.reversal - a_post)


def gj_flux(junction: GapJunction, a_a: float, a_b: float) -> tuple[float, float]:
    """(flux into a, flux into b) for one junction; the two always cancel."""
    into_b = junction.weight * (a_a - a_b) / 2.0
    return -into_b, into_b


# ---------------------------------------------------------------------------
# vectorized step
# ---------------------------------------------------------------------------


def _chem_terms(
    a: np.ndarray, weights: np.ndarray, view: NetView
) -> tuple[np.ndarray, np.ndarray]:
    cs_in = np.zeros(view.n)
    if len(view.syn_pre) == 0:
        return cs_in, np.zeros(0)
    a_pre = a[view.syn_pre]
    drive = np.where(view.syn_inverted, -a_pre, a_pre)
    g = 1.0 / (1.0 + np.exp(-5.0 * drive / view.syn_prerange))
    gate = drive >= view.syn_gate
    contrib = weights * g * (view.syn_rev - a[view.syn_post]) * gate
    np.add.at(cs_in, view.syn_post, contrib)
    return cs_in, g


def _gap_terms(a: np.ndarray, view: NetView) -> np.ndarray:
    gj_in = np.zeros(view.n)
    if len(view.gap_a):
        flux = view.gap_w * (a[view.gap_a] - a[view.gap_b]) * 0.5
        np.add.at(gj_in, view.gap_b, flux)
        np.add.at(gj_in, view.gap_a, -flux)
    return gj_in


def compute_fluxes(
    state: SimState, net: Connectome | NetView, cfg: SimConfig | None = None
) -> StepFluxes:
    """Evaluate one step's flux terms without committing a new state."""
    cfg = cfg or SimConfig()
    view = NetView.of(net)
    a = state.activation
    cs_in, g = _chem_terms(a, state.weights, view)
    gj_in = _gap_terms(a, view)
    gj_out = -gj_in
    decay = cfg.decay_fraction * a - gj_out
    return StepFluxes(gj_in=gj_in, gj_out=gj_out, cs_in=cs_in, decay=decay, conductance=g)


def step(
    state: SimState,
    net: Connectome | NetView,
    ext: ExternalInputs | None = None,
    cfg: SimConfig | None = None,
) -> SimState:
    """Advance the network one step and return the new state.

    Flux contributions accumulate in connectome storage order, so two runs
    from the same state are bitwise identical.  In paper-literal gap-junction
    mode the decay term re-adds outgoing junction losses verbatim, which
    cancels the inflow; it exists for side-by-side comparison runs and
    refuses conservation checking.
    """
    cfg = cfg or SimConfig()
    view = NetView.of(net)
    if ext is None:
        ext = ExternalInputs.zeros(view.n)

    a = state.activation
    cs_in, _ = _chem_terms(a, state.weights, view)
    gj_in = _gap_terms(a, view)

    if cfg.check_conservation:
        if cfg.gj_mode is GjMode.PAPER_LITERAL:
            raise ConfigError("conservation checks are meaningless in paper-literal mode")
        drift = abs(float(gj_in.sum()))
        if drift > cfg.conservation_tolerance:
            raise ConservationError(f"gap-junction flux drift {drift:g} per step")

    if cfg.gj_mode is GjMode.PAPER_LITERAL:
        gj_out = -gj_in
        decay = cfg.decay_fraction * a - gj_out
    else:
        decay = cfg.decay_fraction * a

    nxt = a - decay + gj_in + cs_in + ext.inject
    if cfg.activation_clamp:
        np.clip(nxt, -1.0, 1.0, out=nxt)
    if ext.clamp_mask.any():
        nxt = np.where(ext.clamp_mask, ext.clamp_value, nxt)

    history = np.vstack((nxt[None, :], state.history[:-1]))
    return SimState(nxt, history, state.weights.copy(), state.step + 1)
