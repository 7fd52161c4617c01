"""A concrete localisation scenario: geometry, true path gains and arrays."""
from dataclasses import dataclass

import numpy as np

from .channel import ArrayConfig, ParamVector, complex_normal
from .errors import DimensionMismatch
from .geometry import ScenarioGeometry


@dataclass(frozen=True)
class Scenario:
    geometry: ScenarioGeometry
    gains: np.ndarray
    array: ArrayConfig

    def __post_init__(self):
        h = np.asarray(self.gains, dtype=complex)
        if h.shape != (self.geometry.n_paths,):
            raise DimensionMismatch(
                f"need {self.geometry.n_paths} gains, got shape {h.shape}")
        object.__setattr__(self, "gains", h)

    @property
    def n_paths(self):
        return self.geometry.n_paths

    def true_params(self):
        return ParamVector.from_geometry(self.geometry, self.gains)

    def with_ms(self, ms_pos):
        return Scenario(self.geometry.with_ms(ms_pos), self.gains, self.array)


def draw_gains(rng, n):
    """i.i.d. CN(0, 1) path gains."""
    return complex_normal(rng, n, 1.0)
