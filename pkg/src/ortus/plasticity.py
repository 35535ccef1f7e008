"""Correlation-driven weight updates for chemical synapses.

Once per step each synapse is classified from the recent activation
histories of its two endpoints.  A pair that is strongly correlated across
all four lags while both signals hold nearly still strengthens rapidly; a
correlated pair still in motion strengthens slowly; an uncorrelated pair
weakens slowly.  Nothing happens unless both endpoints are currently above
the activity threshold, and every update scales with the synapse's
mutability index, so structural wiring with mutability 0 never moves.

Correlation at a lag is the cosine between the postsynaptic neuron's four
most recent samples and the presynaptic neuron's four samples starting that
many steps back; a zero-norm window contributes 0.  The slope of a history
window is a least-squares fit oriented so that positive means rising toward
the present.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OrtusError
from .kernel import H_LEN, NetView, SimState
from .connectome import Connectome

ZERO_NORM = 1e-12


class InsufficientHistory(OrtusError):
    """The history window does not hold enough samples for the request."""


class Classification(enum.Enum):
    RAPID_STRENGTHEN = "rapid_strengthen"
    SLOW_STRENGTHEN = "slow_strengthen"
    SLOW_WEAKEN = "slow_weaken"
    NONE = "none"


@dataclass
class PlasticityConfig:
    xcorr_window: int = 4
    max_lag: int = 4
    slope_window: int = 2  # number of steps spanned; the fit uses one more sample
    rapid_xcorr_min: float = 3.92
    rapid_slope_max: float = 0.02
    weaken_xcorr_max: float = 0.05
    strengthen_xcorr_min: float = 3.5
    rapid_rate: float = 0.01
    slow_rate: float = 0.001
    activity_threshold: float = 0.2

    def __post_init__(self) -> None:
        if not (self.weaken_xcorr_max < self.strengthen_xcorr_min < self.rapid_xcorr_min):
            raise ConfigError("classification bands must be ordered weaken < strengthen < rapid")
        if self.rapid_xcorr_min > self.max_lag:
            raise ConfigError("rapid_xcorr_min cannot exceed the maximum correlation sum")
        if self.max_lag + self.xcorr_window > H_LEN:
            raise ConfigError("correlation windows cannot reach past the history ring")


def lagged_xcorr(h_post: np.ndarray, h_j: np.ndarray, lag: int, window: int = 4) -> float:
    """Cosine similarity between the most recent `window` samples of h_post
    and the `window` samples of h_j starting `lag` steps back."""
    h_post = np.asarray(h_post, dtype=float)
    h_j = np.asarray(h_j, dtype=float)
    if len(h_post) < window or len(h_j) < lag + window:
        raise InsufficientHistory(
            f"need {window} and {lag + window} samples, have {len(h_post)} and {len(h_j)}"
        )
    a = h_post[:window]
    b = h_j[lag:lag + window]
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM or nb < ZERO_NORM:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def slope(h: np.ndarray, t: int = 0, u: int = 2) -> float:
    """Least-squares slope of h[t .. t+u], positive when the signal is
    rising toward the present (history index 0 is the newest sample)."""
    h = np.asarray(h, dtype=float)
    if len(h) < t + u + 1:
        raise InsufficientHistory(f"need {t + u + 1} samples, have {len(h)}")
    y = h[t:t + u + 1]
    x = np.arange(u + 1, dtype=float)
    fit = np.polyfit(x, y, 1)[0]
    return float(-fit)


def xcorr_lag_sum(h_post: np.ndarray, h_pre: np.ndarray, cfg: PlasticityConfig) -> float:
    """Correlation summed over lags 1 .. max_lag (lag 0 is excluded)."""
    return sum(
        lagged_xcorr(h_post, h_pre, lag, cfg.xcorr_window) for lag in range(1, cfg.max_lag + 1)
    )


def slope_abs_sum(h: np.ndarray, cfg: PlasticityConfig) -> float:
    """Sum of |slope| over the same lag offsets the correlation rule uses."""
    return sum(abs(slope(h, t, cfg.slope_window)) for t in range(1, cfg.max_lag + 1))


def classify(
    a_pre: float,
    a_post: float,
    h_pre: np.ndarray,
    h_post: np.ndarray,
    cfg: PlasticityConfig | None = None,
) -> Classification:
    """Classify one synapse from its endpoints' activations and histories.

    Rapid strengthening requires the full-correlation band AND both signals
    nearly flat; it takes precedence over slow strengthening.  Everything is
    gated on both endpoints being above the activity threshold right now.
    """
    cfg = cfg or PlasticityConfig()
    if a_pre <= cfg.activity_threshold or a_post <= cfg.activity_threshold:
        return Classification.NONE
    xs = xcorr_lag_sum(h_post, h_pre, cfg)
    if xs >= cfg.rapid_xcorr_min:
        if (
            slope_abs_sum(h_pre, cfg) <= cfg.rapid_slope_max
            and slope_abs_sum(h_post, cfg) <= cfg.rapid_slope_max
        ):
            return Classification.RAPID_STRENGTHEN
    if xs < cfg.weaken_xcorr_max:
        return Classification.SLOW_WEAKEN
    if xs > cfg.strengthen_xcorr_min:
        return Classification.SLOW_STRENGTHEN
    return Classification.NONE


_DELTA_RATE = {
    Classification.RAPID_STRENGTHEN: lambda cfg: cfg.rapid_rate,
    Classification.SLOW_STRENGTHEN: lambda cfg: cfg.slow_rate,
    Classification.SLOW_WEAKEN: lambda cfg: -cfg.slow_rate,
    Classification.NONE: lambda cfg: 0.0,
}


def apply_updates(
    weights: np.ndarray,
    classifications: list[Classification],
    mutabilities: np.ndarray,
    cfg: PlasticityConfig | None = None,
) -> np.ndarray:
    """New weight array: each weight moves by (rate * mutability) in the
    direction its classification dictates, clamped to [0, 1]."""
    cfg = cfg or PlasticityConfig()
    rates = np.array([_DELTA_RATE[c](cfg) for c in classifications])
    return np.clip(weights + rates * mutabilities, 0.0, 1.0)


# ---------------------------------------------------------------------------
# vectorized engine
# ---------------------------------------------------------------------------


def _lag_sums(history: np.ndarray, view: NetView, cfg: PlasticityConfig) -> np.ndarray:
    """Per-synapse correlation sums over lags 1..max_lag."""
    w = cfg.xcorr_window
    post_win = history[0:w, :][:, view.syn_post]  # (w, S)
    sums = np.zeros(len(view.syn_pre))
    na = np.linalg.norm(post_win, axis=0)
    for lag in range(1, cfg.max_lag + 1):
        pre_win = history[lag:lag + w, :][:, view.syn_pre]
        nb = np.linalg.norm(pre_win, axis=0)
        num = (post_win * pre_win).sum(axis=0)
        ok = (na >= ZERO_NORM) & (nb >= ZERO_NORM)
        denom = np.where(ok, na * nb, 1.0)
        sums += np.where(ok, num / denom, 0.0)
    return sums


def _slope_sums(history: np.ndarray, cfg: PlasticityConfig) -> np.ndarray:
    """Per-neuron sums of |slope| over the rule's lag offsets."""
    u = cfg.slope_window
    x = np.arange(u + 1, dtype=float)
    c = x - x.mean()
    denom = float((c**2).sum())
    total = np.zeros(history.shape[1])
    for t in range(1, cfg.max_lag + 1):
        seg = history[t:t + u + 1, :]
        total += np.abs(-(c @ seg) / denom)
    return total


def classify_all(
    state: SimState, net: Connectome | NetView, cfg: PlasticityConfig | None = None
) -> list[Classification]:
    """Vectorized classification of every chemical synapse at once."""
    cfg = cfg or PlasticityConfig()
    view = NetView.of(net)
    if len(view.syn_pre) == 0:
        return []
    a = state.activation
    active = (a[view.syn_pre] > cfg.activity_threshold) & (a[view.syn_post] > cfg.activity_threshold)
    xs = _lag_sums(state.history, view, cfg)
    ss = _slope_sums(state.history, cfg)
    flat = (ss[view.syn_pre] <= cfg.rapid_slope_max) & (ss[view.syn_post] <= cfg.rapid_slope_max)
    rapid = active & (xs >= cfg.rapid_xcorr_min) & flat
    weaken = active & ~rapid & (xs < cfg.weaken_xcorr_max)
    slow = active & ~rapid & ~weaken & (xs > cfg.strengthen_xcorr_min)
    out = []
    for r, wk, sl in zip(rapid, weaken, slow):
        if r:
            out.append(Classification.RAPID_STRENGTHEN)
        elif wk:
            out.append(Classification.SLOW_WEAKEN)
        elif sl:
            out.append(Classification.SLOW_STRENGTHEN)
        else:
            out.append(Classification.NONE)
    return out


def plasticity_step(
    state: SimState, net: Connectome | NetView, cfg: PlasticityConfig | None = None
) -> np.ndarray:
    """One full plasticity pass; returns the new weight array.

    Inert until the history ring has been filled by real steps, so the
    padded start-up history can never drive learning.
    """
    cfg = cfg or PlasticityConfig()
    view = NetView.of(net)
    if state.step < H_LEN or len(view.syn_pre) == 0:
        return state.weights.copy()
    a = state.activation
    active = (a[view.syn_pre] > cfg.activity_threshold) & (a[view.syn_post] > cfg.activity_threshold)
    if not active.any():
        return state.weights.copy()
    xs = _lag_sums(state.history, view, cfg)
    ss = _slope_sums(state.history, cfg)
    flat = (ss[view.syn_pre] <= cfg.rapid_slope_max) & (ss[view.syn_post] <= cfg.rapid_slope_max)
    rapid = active & (xs >= cfg.rapid_xcorr_min) & flat
    weaken = active & ~rapid & (xs < cfg.weaken_xcorr_max)
    slow = active & ~rapid & ~weaken & (xs > cfg.strengthen_xcorr_min)
    delta = view.syn_mi * (
        rapid * cfg.rapid_rate + slow * cfg.slow_rate - weaken * cfg.slow_rate
    )
    return np.clip(state.weights + delta, 0.0, 1.0)
