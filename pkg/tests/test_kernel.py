"""Activation dynamics: graded conductances, gated chemical inflow, symmetric
gap-junction flux, and the double-buffered synchronous step.

Frozen constants below were computed independently from the closed-form
expressions (sigmoid at the reversal potentials, hand-multiplied inflows) so
regressions in the vectorized path cannot hide.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ortus.connectome import (
    Affect,
    ChemicalSynapse,
    Connectome,
    GapJunction,
    Layer,
    Neuron,
    NeuronParams,
)
from ortus.errors import ConfigError
from ortus.kernel import (
    H_LEN,
    ConservationError,
    ExternalInputs,
    GjMode,
    NetView,
    SimConfig,
    SimState,
    compute_fluxes,
    conductance,
    cs_inflow,
    gj_flux,
    step,
)

# sigmoid of +/- the full activation range, frozen
G_AT_EXCIT_REVERSAL = 0.9241418199787566
G_AT_INHIB_REVERSAL = 0.07585818002124355


def make_net(n, chem=(), gap=(), thresholds=None):
    thresholds = thresholds or [0.0] * n
    neurons = [Neuron(i, f"n{i}", Layer.PLAIN, thresholds[i]) for i in range(n)]
    return Connectome(
        neurons=neurons,
        chem=list(chem),
        gap=list(gap),
        sensor_ids=[],
        emotion_ids=[],
        motor_ids=[],
        muscle_ids=[],
        name_to_id={f"n{i}": i for i in range(n)},
    )


# ---------------------------------------------------------------------------
# scalar pieces
# ---------------------------------------------------------------------------


def test_conductance_at_equilibrium_is_exactly_half():
    assert conductance(0.0) == 0.5


def test_conductance_at_reversals():
    assert conductance(1.0) == pytest.approx(G_AT_EXCIT_REVERSAL, abs=1e-12)
    assert conductance(-1.0) == pytest.approx(G_AT_INHIB_REVERSAL, abs=1e-12)


def test_conductance_inverted_mirrors():
    for a in (-0.8, -0.3, 0.0, 0.4, 1.0):
        assert conductance(a, inverted=True) == pytest.approx(conductance(-a), abs=1e-15)


@given(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
def test_conductance_bounded_and_monotone(a):
    g = conductance(a)
    assert 0.0 < g < 1.0
    assert conductance(a) <= conductance(min(a + 0.1, 1.0)) + 1e-15


def test_cs_inflow_hand_computed():
    syn = ChemicalSynapse(pre=0, post=1, weight=0.7, reversal=1.0, mutability=0.0)
    # w * g(0.3) * (reversal - a_post) with a_post = 0.1
    assert cs_inflow(syn, 0.3, 0.1, threshold=0.0) == pytest.approx(
        0.42788258048049754, abs=1e-15
    )


def test_cs_inflow_gated_below_threshold():
    syn = ChemicalSynapse(0, 1, 0.7, 1.0, 0.0)
    assert cs_inflow(syn, 0.049, 0.0, threshold=0.05) == 0.0
    assert cs_inflow(syn, 0.05, 0.0, threshold=0.05) > 0.0  # >= transmits


def test_cs_inflow_inverted_drive():
    syn = ChemicalSynapse(0, 1, 0.5, -1.0, 0.0, inverted=True)
    # pre at -0.4 drives as +0.4; inflow pulls toward the inhibitory reversal
    assert cs_inflow(syn, -0.4, 0.2, threshold=0.0) == pytest.approx(
        -0.43863514717800295, abs=1e-15
    )
    # the same synapse is silent when its pre is above equilibrium
    assert cs_inflow(syn, 0.4, 0.2, threshold=0.05) == 0.0


def test_gj_flux_antisymmetric_and_halved():
    j = GapJunction(0, 1, 0.5)
    into_a, into_b = gj_flux(j, 0.8, 0.2)
    assert into_b == pytest.approx(0.5 * (0.8 - 0.2) / 2)
    assert into_a == -into_b


# ---------------------------------------------------------------------------
# synchronous step against a straight-line reference
# ---------------------------------------------------------------------------


def reference_step(net, a, weights, inject, decay):
    """Pure-Python restatement of one synchronous update."""
    n = len(a)
    new = [0.0] * n
    cs = [0.0] * n
    for syn, w in zip(net.chem, weights):
        pre, post = syn.pre, syn.post
        drive = -a[pre] if syn.inverted else a[pre]
        if drive < net.neurons[post].threshold:
            continue
        g = 1.0 / (1.0 + math.exp(-5.0 * drive / net.neurons[pre].params.range))
        cs[post] += w * g * (syn.reversal - a[post])
    gj = [0.0] * n
    for junction in net.gap:
        f = junction.weight * (a[junction.a] - a[junction.b]) / 2.0
        gj[junction.b] += f
        gj[junction.a] -= f
    for i in range(n):
        new[i] = a[i] - decay * a[i] + gj[i] + cs[i] + inject[i]
        new[i] = min(1.0, max(-1.0, new[i]))
    return np.array(new)


def test_step_matches_reference_on_random_net():
    rng = np.random.default_rng(7)
    chem = [
        ChemicalSynapse(0, 2, 0.6, 1.0, 0.0),
        ChemicalSynapse(1, 2, 0.4, -1.0, 0.0),
        ChemicalSynapse(2, 3, 0.9, 1.0, 0.5, inverted=True),
        ChemicalSynapse(3, 0, 0.2, 1.0, 0.0),
    ]
    gap = [GapJunction(0, 1, 0.3), GapJunction(2, 3, 0.8)]
    net = make_net(4, chem, gap, thresholds=[0.0, 0.05, 0.1, 0.0])
    state = SimState.initial(net, rng.uniform(-1, 1, 4))
    cfg = SimConfig()
    for _ in range(25):
        inject = rng.uniform(-0.2, 0.2, 4)
        expected = reference_step(net, state.activation, state.weights, inject, cfg.decay_fraction)
        ext = ExternalInputs.zeros(4)
        ext.inject += inject
        state = step(state, NetView.of(net), ext, cfg)
        np.testing.assert_allclose(state.activation, expected, atol=1e-12)


def test_step_matches_reference_on_organism(organism_net):
    rng = np.random.default_rng(11)
    view = NetView.from_connectome(organism_net)
    state = SimState.initial(organism_net, rng.uniform(-0.5, 0.5, organism_net.n))
    cfg = SimConfig()
    for _ in range(10):
        inject = rng.uniform(-0.05, 0.05, organism_net.n)
        expected = reference_step(
            organism_net, state.activation, state.weights, inject, cfg.decay_fraction
        )
        ext = ExternalInputs.zeros(organism_net.n)
        ext.inject += inject
        state = step(state, view, ext, cfg)
        np.testing.assert_allclose(state.activation, expected, atol=1e-12)


def test_reads_come_from_the_previous_step_only():
    """A three-neuron chain advances one hop per step: the classic smoke test
    for double buffering."""
    chem = [ChemicalSynapse(0, 1, 0.8, 1.0, 0.0), ChemicalSynapse(1, 2, 0.8, 1.0, 0.0)]
    net = make_net(3, chem, thresholds=[0.0, 0.3, 0.3])
    state = SimState.initial(net, np.array([1.0, 0.0, 0.0]))
    state = step(state, NetView.of(net), ExternalInputs.zeros(3), SimConfig())
    assert state.activation[1] > 0.3
    assert state.activation[2] == 0.0  # n1 was below gate when this step read it
    state = step(state, NetView.of(net), ExternalInputs.zeros(3), SimConfig())
    assert state.activation[2] > 0.0


def test_clamp_overrides_dynamics():
    net = make_net(2, [ChemicalSynapse(0, 1, 0.9, 1.0, 0.0)])
    state = SimState.initial(net, np.array([0.9, 0.0]))
    ext = ExternalInputs.zeros(2)
    ext.clamp_mask[1] = True
    ext.clamp_value[1] = -0.25
    state = step(state, NetView.of(net), ext, SimConfig())
    assert state.activation[1] == -0.25


def test_activations_clip_to_unit_interval():
    net = make_net(1)
    state = SimState.initial(net, np.array([0.5]))
    ext = ExternalInputs.zeros(1)
    ext.inject[0] = 5.0
    state = step(state, NetView.of(net), ext, SimConfig())
    assert state.activation[0] == 1.0
    ext.inject[0] = -5.0
    state = step(state, NetView.of(net), ext, SimConfig())
    assert state.activation[0] == -1.0


def test_history_is_a_sliding_window_newest_first():
    net = make_net(1)
    state = SimState.initial(net, np.array([0.0]))
    seen = []
    for k in range(H_LEN + 2):
        ext = ExternalInputs.zeros(1)
        ext.clamp_mask[0] = True
        ext.clamp_value[0] = k / 100.0
        state = step(state, NetView.of(net), ext, SimConfig())
        seen.append(k / 100.0)
    assert state.history.shape == (H_LEN, 1)
    np.testing.assert_allclose(state.history[:, 0], seen[::-1][:H_LEN])


def test_step_counter_and_weight_carry():
    net = make_net(2, [ChemicalSynapse(0, 1, 0.33, 1.0, 0.9)])
    state = SimState.initial(net)
    assert state.step == 0
    state = step(state, NetView.of(net), ExternalInputs.zeros(2), SimConfig())
    assert state.step == 1
    assert state.weights.tolist() == [0.33]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=4, max_size=4))
def test_activation_stays_bounded_forever(inject):
    chem = [
        ChemicalSynapse(0, 1, 1.0, 1.0, 0.0),
        ChemicalSynapse(1, 2, 1.0, -1.0, 0.0),
        ChemicalSynapse(2, 3, 1.0, 1.0, 0.0, inverted=True),
    ]
    net = make_net(4, chem, [GapJunction(0, 3, 1.0)])
    state = SimState.initial(net)
    ext = ExternalInputs.zeros(4)
    ext.inject += np.array(inject)
    for _ in range(50):
        state = step(state, NetView.of(net), ext, SimConfig())
        assert np.all(state.activation <= 1.0) and np.all(state.activation >= -1.0)


# ---------------------------------------------------------------------------
# gap-junction accounting
# ---------------------------------------------------------------------------


def test_gap_fluxes_conserve_charge():
    net = make_net(3, gap=[GapJunction(0, 1, 0.7), GapJunction(1, 2, 0.4)])
    view = NetView.of(net)
    state = SimState.initial(net, np.array([0.9, -0.2, 0.3]))
    fluxes = compute_fluxes(state, view, SimConfig())
    assert abs(fluxes.gj_in.sum()) < 1e-15
    np.testing.assert_allclose(fluxes.gj_out, -fluxes.gj_in)


def test_conservation_check_passes_on_symmetric_mode():
    net = make_net(2, gap=[GapJunction(0, 1, 1.0)])
    cfg = SimConfig(check_conservation=True)
    state = SimState.initial(net, np.array([1.0, -1.0]))
    for _ in range(10):
        state = step(state, NetView.of(net), ExternalInputs.zeros(2), cfg)
    # diffusion: both ends meet in the middle
    assert abs(state.activation[0] - state.activation[1]) < abs(1.0 - -1.0)


def test_literal_mode_neutralizes_gap_junctions():
    """In the literal formulation the decay term re-adds the outgoing flux,
    which exactly cancels the incoming flux: the pair never equilibrates."""
    net = make_net(2, gap=[GapJunction(0, 1, 1.0)])
    sym = SimState.initial(net, np.array([0.5, -0.5]))
    lit = SimState.initial(net, np.array([0.5, -0.5]))
    for _ in range(5):
        sym = step(sym, NetView.of(net), ExternalInputs.zeros(2), SimConfig())
        lit = step(lit, NetView.of(net), ExternalInputs.zeros(2), SimConfig(gj_mode=GjMode.PAPER_LITERAL))
    # symmetric mode pulls the pair together; literal mode leaves pure decay
    assert abs(sym.activation[0] - sym.activation[1]) < 0.8 ** 5
    np.testing.assert_allclose(lit.activation, [0.5 * 0.8 ** 5, -0.5 * 0.8 ** 5], atol=1e-12)


def test_literal_mode_refuses_conservation_check():
    net = make_net(2, gap=[GapJunction(0, 1, 1.0)])
    cfg = SimConfig(gj_mode=GjMode.PAPER_LITERAL, check_conservation=True)
    with pytest.raises(ConfigError):
        step(SimState.initial(net), NetView.of(net), ExternalInputs.zeros(2), cfg)


def test_decay_fraction_validated():
    with pytest.raises(ConfigError):
        SimConfig(decay_fraction=1.0)
    with pytest.raises(ConfigError):
        SimConfig(decay_fraction=-0.1)
