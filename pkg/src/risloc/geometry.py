"""
Scenario geometry: BS, MS and RIS element positions, the angles they
induce, and the Jacobian of the AoA angles with respect to the MS
horizontal position.

Conventions
-----------
Positions are 3-vectors in meters. BS and MS lie in the z = 0 plane.
For a point ``q`` on the ground and an RIS element ``s`` above it::

    elevation = arctan(||q[:2] - s[:2]|| / s_z)
    azimuth   = arccos((s_x - q_x) / ||q[:2] - s[:2]||)

The azimuth uses the signed form (no absolute value), which is the form
the analytic Jacobian below is the derivative of. The RIS is a planar array
spanning x (columns) and z (rows) at constant y
unless `RisLayout.plane` says otherwise.

The azimuth only sees ``|q_y - s_y|`` (``sin(azimuth) = |q_y - s_y| / dist``),
so its derivative with respect to ``q_y`` flips sign across ``q_y = s_y``.
The Jacobian carries that sign explicitly; on the side ``q_y > s_y`` it is
the familiar ``[cos(azimuth)] / dist`` form.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGeometry

#: horizontal distances below this (meters) make the azimuth ill-defined
DEGENERACY_TOL = 1e-9


def as_position(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"position must have shape (3,), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("position entries must be finite")
    return p


@dataclass(frozen=True)
class RisLayout:
    """Uniform planar RIS in a vertical plane.

    Element (r, c) (0-based) sits at ``reference + c*spacing*e_col + r*spacing*e_z``
    and gets flat index ``r*cols + c``. ``plane="xz"`` puts columns along x
    (constant y); ``plane="yz"`` puts them along y (constant x).
    """
    rows: int
    cols: int
    element_spacing: float
    reference: tuple = (-20.0, 50.0, 20.0)
    plane: str = "xz"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if not self.element_spacing > 0:
            raise ValueError("element_spacing must be positive")
        if self.plane not in ("xz", "yz"):
            raise ValueError(f"plane must be 'xz' or 'yz', got {self.plane!r}")
        object.__setattr__(self, "reference", tuple(float(v) for v in as_position(self.reference)))

    @property
    def n_elements(self):
        return self.rows * self.cols

    def expand(self):
        return expand_layout(self)


def expand_layout(layout):
    """Element positions of a `RisLayout`, shape ``(rows*cols, 3)``."""
    r, c = np.meshgrid(np.arange(layout.rows), np.arange(layout.cols), indexing="ij")
    pos = np.tile(np.asarray(layout.reference, dtype=float), (layout.n_elements, 1))
    pos[:, 0 if layout.plane == "xz" else 1] += c.ravel() * layout.element_spacing
    pos[:, 2] += r.ravel() * layout.element_spacing
    return pos


@dataclass(frozen=True)
class ScenarioGeometry:
    bs_pos: np.ndarray
    ms_pos: np.ndarray
    ris_elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        bs = as_position(self.bs_pos)
        ms = as_position(self.ms_pos)
        ris = np.atleast_2d(np.asarray(self.ris_elements, dtype=float))
        if ris.ndim != 2 or ris.shape[1] != 3 or ris.shape[0] < 1:
            raise ValueError("ris_elements must have shape (N, 3) with N >= 1")
        if not np.all(np.isfinite(ris)):
            raise ValueError("ris_elements must be finite")
        if bs[2] != 0.0 or ms[2] != 0.0:
            raise ValueError("BS and MS must lie in the z = 0 plane")
        if np.any(ris[:, 2] <= 0):
            raise ValueError("RIS elements must have s_z > 0")
        for name, p in (("MS", ms), ("BS", bs)):
            if np.any(_horizontal_distance(p, ris) < DEGENERACY_TOL):
                raise DegenerateGeometry(f"{name} is horizontally co-located with an RIS element")
        for name, arr in (("bs_pos", bs), ("ms_pos", ms), ("ris_elements", ris)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_layout(cls, bs_pos, ms_pos, layout):
        return cls(bs_pos, ms_pos, expand_layout(layout))

    @property
    def n_paths(self):
        return self.ris_elements.shape[0]

    def with_ms(self, ms_pos):
        return ScenarioGeometry(self.bs_pos, ms_pos, self.ris_elements)

    def aoa(self):
        return compute_aoa(self.ms_pos, self.ris_elements)

    def aod(self):
        return compute_aod(self.bs_pos, self.ris_elements)


class AoaPair(NamedTuple):
    """Elevation and azimuth angle-of-arrival at the MS (scalars or per-path arrays)."""
    elevation: np.ndarray
    azimuth: np.ndarray


class AodPair(NamedTuple):
    """Elevation and azimuth angle-of-departure at the BS."""
    elevation: np.ndarray
    azimuth: np.ndarray


def _horizontal_distance(point, s):
    return np.hypot(point[0] - s[..., 0], point[1] - s[..., 1])


def _angles(point, s):
    point = np.asarray(point, dtype=float)
    s = np.asarray(s, dtype=float)
    dist = _horizontal_distance(point, s)
    if np.any(dist < DEGENERACY_TOL):
        raise DegenerateGeometry(
            f"horizontal distance to an RIS element below {DEGENERACY_TOL:g} m")
    elevation = np.arctan(dist / s[..., 2])
    azimuth = np.arccos(np.clip((s[..., 0] - point[0]) / dist, -1.0, 1.0))
    return elevation, azimuth


def compute_aoa(q, s):
    """AoA (elevation, azimuth) of the path(s) from RIS element(s) ``s`` to MS ``q``.

    ``s`` may be a single position ``(3,)`` or a stack ``(N, 3)``.
    """
    return AoaPair(*_angles(q, s))


def compute_aod(p, s):
    """AoD at BS ``p`` towards RIS element(s) ``s``; same formulas as `compute_aoa`."""
    return AodPair(*_angles(p, s))


@dataclass(frozen=True)
class TransformMatrix:
    """Jacobian of the AoA angles with respect to the MS position ``(q_x, q_y)``.

    ``elev_jac[:, i]`` is d(elevation_i)/dq and ``azim_jac[:, i]`` is
    d(azimuth_i)/dq, both shape ``(2, N)``. The gain columns of the full
    Jacobian are identically zero and are not stored.
    """
    elev_jac: np.ndarray
    azim_jac: np.ndarray

    @property
    def n_paths(self):
        return self.elev_jac.shape[1]

    @property
    def alpha_x(self):
        return self.elev_jac[0]

    @property
    def alpha_y(self):
        return self.elev_jac[1]

    @property
    def beta_x(self):
        return self.azim_jac[0]

    @property
    def beta_y(self):
        return self.azim_jac[1]

    @property
    def matrix(self):
        """The ``2 x 2N`` matrix ``[elev_jac | azim_jac]``."""
        return np.hstack([self.elev_jac, self.azim_jac])


def transform_matrix(geometry):
    """Angle-to-position Jacobian evaluated at the true geometry."""
    q, s = geometry.ms_pos, geometry.ris_elements
    dist = _horizontal_distance(q, s)
    if np.any(dist < DEGENERACY_TOL):
        raise DegenerateGeometry("MS horizontally co-located with an RIS element")
    _, azim = compute_aoa(q, s)
    sz = s[:, 2]
    side = np.where(q[1] >= s[:, 1], 1.0, -1.0)
    elev_jac = sz / (dist**2 + sz**2) * np.vstack([-np.cos(azim), side * np.sin(azim)])
    azim_jac = np.vstack([np.sin(azim), side * np.cos(azim)]) / dist
    return TransformMatrix(elev_jac, azim_jac)


def transform_matrix_from_angles(elevation, azimuth, ris_height, side=1.0):
    """Same Jacobian, written in terms of (possibly estimated) AoA angles.

    Uses ``dist = s_z * tan(elevation)`` so that ``s_z / (dist^2 + s_z^2)``
    becomes ``cos(elevation)^2 / s_z``. The angles cannot tell which side of
    the RIS (in y) the MS is on, so ``side`` (+1 for ``q_y > s_y``, -1
    otherwise; scalar or per path) supplies it. Agrees with
    `transform_matrix` when the angles and side are the true ones.
    """
    elevation = np.asarray(elevation, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    sz = np.broadcast_to(np.asarray(ris_height, dtype=float), elevation.shape)
    dist = sz * np.tan(elevation)
    if np.any(dist < DEGENERACY_TOL):
        raise DegenerateGeometry("elevation too close to zero")
    side = np.broadcast_to(np.asarray(side, dtype=float), elevation.shape)
    elev_jac = np.cos(elevation)**2 / sz * np.vstack([-np.cos(azimuth), side * np.sin(azimuth)])
    azim_jac = np.vstack([np.sin(azimuth), side * np.cos(azimuth)]) / dist
    return TransformMatrix(elev_jac, azim_jac)
