"""Metabolic gas drive and lung exchange around the simulation loop.

Gas levels live directly in the gas sensor activations.  Metabolism pushes
the CO2 sensor up and pulls the O2 sensor down by fixed amounts every step.
When the lung muscle is active above its threshold, breathing moves both
back, proportionally to lung activation, unless the corresponding half of
respiration is blocked.  Without breathing a gas settles where production
balances decay (production / decay fraction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connectome import Connectome
from .errors import ConfigError
from .kernel import SimState


@dataclass(frozen=True)
class RespirationClamp:
    block_exhale: bool = False
    block_inhale: bool = False


@dataclass
class PhysioConfig:
    co2_production: float = 0.01
    o2_consumption: float = 0.01
    lung_threshold: float = 0.5
    exchange_gain: float = 0.12
    initial_co2: float = 0.0
    initial_o2: float = 0.0
    co2_name: str = "sCO2"
    o2_name: str = "sO2"
    lung_name: str = "LUNG"
    enabled: bool = True

    def __post_init__(self) -> None:
        for name in ("co2_production", "o2_consumption", "lung_threshold", "exchange_gain"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} cannot be negative")
        if self.exchange_gain <= self.co2_production:
            raise ConfigError("exchange_gain must exceed co2_production or breathing can never win")


@dataclass(frozen=True)
class PhysioBinding:
    co2: int
    o2: int
    lung: int


def bind(net: Connectome, cfg: PhysioConfig) -> PhysioBinding:
    """Resolve the gas and lung element names against a connectome."""
    ids = []
    for name in (cfg.co2_name, cfg.o2_name, cfg.lung_name):
        if name not in net.name_to_id:
            raise ConfigError(f"physiology needs an element named {name!r}")
        ids.append(net.name_to_id[name])
    return PhysioBinding(*ids)


def metabolic_step(state: SimState, cfg: PhysioConfig, binding: PhysioBinding) -> np.ndarray:
    """External-input deltas contributed by metabolism this step."""
    deltas = np.zeros(len(state.activation))
    deltas[binding.co2] += cfg.co2_production
    deltas[binding.o2] -= cfg.o2_consumption
    return deltas


def lung_exchange(
    state: SimState,
    cfg: PhysioConfig,
    binding: PhysioBinding,
    clamp: RespirationClamp = RespirationClamp(),
) -> np.ndarray:
    """External-input deltas from breathing, honoring respiration blocks."""
    deltas = np.zeros(len(state.activation))
    lung = float(state.activation[binding.lung])
    if lung > cfg.lung_threshold:
        amount = cfg.exchange_gain * lung
        if not clamp.block_inhale:
            deltas[binding.o2] += amount
        if not clamp.block_exhale:
            deltas[binding.co2] -= amount
    return deltas
