"""
Stand-in channel-parameter estimators for the alternating optimisation loop.

These are plumbing, not a contribution: ``oracle`` returns the truth,
``perturbed_oracle`` the truth plus seeded Gaussian errors, and ``grid_ml``
a small-N maximum-likelihood grid search.

With a ULA at the MS the mean of ``y`` depends on the AoA of path i only
through ``u_i = sin(elevation_i) * sin(azimuth_i)``. Elevation and azimuth
are therefore not separately identifiable from one observation; ``grid_ml``
recovers ``u_i`` and breaks the remaining tie (the ridge of equal
likelihood) by taking the maximiser nearest to a reference point.
"""
from dataclasses import dataclass
import itertools

import numpy as np

from .channel import ParamVector, channel_from_params, array_response_rx, array_response_tx
from .errors import DimensionMismatch, GridTooLarge

KINDS = ("oracle", "perturbed_oracle", "grid_ml")

#: grid_ml is only offered up to this many paths
GRID_ML_MAX_PATHS = 4
#: candidates scored per chunk in grid_ml
_CHUNK = 200_000


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and its knobs.

    ``perturbation_scale`` is the standard deviation (radians for angles,
    gain units for Re/Im of each gain) of ``perturbed_oracle`` errors; at outer
    iteration k it is multiplied by ``decay**k``.
    """
    kind: str = "oracle"
    perturbation_scale: float = 0.0
    decay: float = 1.0
    grid_resolution: float = 1e-2
    max_sweeps: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be >= 0")
        if not self.grid_resolution > 0:
            raise ValueError("grid_resolution must be > 0")
        if not 0 <= self.decay <= 1:
            raise ValueError("decay must lie in [0, 1]")


def mean_vector(params, aod, phases, pilot, cfg):
    """Noiseless stacked observation ``[H x(1); ...; H x(L)]``."""
    H = channel_from_params(params, aod, phases, cfg)
    return (H @ pilot.X).T.reshape(-1)


def log_likelihood(y, params, aod, phases, pilot, noise_variance, cfg):
    """Log-density of ``y`` under CN(mu(params), noise_variance * I).

    ``-L*N_r*log(pi*s2) - ||y - mu||^2 / s2``.
    """
    y = np.asarray(y)
    mu = mean_vector(params, aod, phases, pilot, cfg)
    if y.shape != mu.shape:
        raise DimensionMismatch(f"y has shape {y.shape}, expected {mu.shape}")
    r = y - mu
    return -y.size * np.log(np.pi * noise_variance) - np.vdot(r, r).real / noise_variance


def estimate(spec, y, scenario, phases, pilot, noise_variance, iteration=0, initial=None):
    """Estimate the per-path AoA parameters and gains.

    ``initial`` (a `ParamVector`) is the warm start and tie-break reference
    for ``grid_ml``; other kinds ignore it.
    """
    truth = scenario.true_params()
    if spec.kind == "oracle":
        return truth
    if spec.kind == "perturbed_oracle":
        scale = spec.perturbation_scale * spec.decay ** iteration
        if scale == 0:
            return truth
        rng = np.random.default_rng([spec.seed, iteration])
        n = truth.n_paths
        e = rng.standard_normal((4, n)) * scale
        return ParamVector(truth.elevation + e[0], truth.azimuth + e[1],
                           truth.gains + e[2] + 1j * e[3])
    return grid_ml(spec, y, scenario, phases, pilot, noise_variance, initial)


def angle_grid(resolution):
    """Elevation grid on (0, pi/2) and azimuth grid on (0, pi)."""
    return np.arange(resolution, np.pi / 2, resolution), np.arange(resolution, np.pi, resolution)


def grid_ml(spec, y, scenario, phases, pilot, noise_variance, initial=None):
    """Coordinate-descent grid search over per-path (elevation, azimuth).

    For each path in turn the other paths are held fixed, every grid point is
    scored by the likelihood with all gains re-fitted by least squares
    (the mean is linear in the gains), and the best point is kept. Sweeps
    repeat until no angle moves or ``spec.max_sweeps`` is reached.

    Coordinate moves cannot swap two paths' directions, and with more than one
    slot the paths are distinguishable through their slot weights, so a
    swapped assignment is a local optimum. After the sweeps settle every
    permutation of the assignment is tried (N <= 4, so at most 24) and the
    sweeps restart from the best one while that keeps improving the fit.
    Still a local method: closely spaced paths can leave it short of the
    joint grid optimum.
    """
    n = scenario.n_paths
    if n > GRID_ML_MAX_PATHS:
        raise GridTooLarge(f"grid_ml supports at most {GRID_ML_MAX_PATHS} paths, got {n}")
    cfg = scenario.array
    aod = scenario.geometry.aod()
    y = np.asarray(y, dtype=complex)
    L = pilot.n_slots
    if y.shape != (L * cfg.n_rx,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({L * cfg.n_rx},)")
    el_grid, az_grid = angle_grid(spec.grid_resolution)
    EL, AZ = np.meshgrid(el_grid, az_grid, indexing="ij")
    EL, AZ = EL.ravel(), AZ.ravel()
    u_grid = np.sin(EL) * np.sin(AZ)
    m = np.arange(cfg.n_rx)

    # slot weights c[i, l] = exp(j*rho_i) a_t(aod_i)^H x(l)
    a_t = array_response_tx(aod.elevation, aod.azimuth, cfg)          # (Nt, N)
    c = np.exp(1j * np.asarray(phases))[:, None] * (a_t.conj().T @ pilot.X)   # (N, L)

    if initial is None:
        ref_el = np.full(n, np.pi / 4)
        ref_az = np.full(n, np.pi / 2)
    else:
        ref_el, ref_az = initial.elevation.copy(), initial.azimuth.copy()
    est_el, est_az = ref_el.copy(), ref_az.copy()
    known = np.zeros(n, dtype=bool) if initial is None else np.ones(n, dtype=bool)

    def column(i, el, az):
        return np.outer(c[i], array_response_rx(el, az, cfg)).reshape(-1)

    def design(el, az):
        return np.stack([column(j, el[j], az[j]) for j in range(n)], axis=1)

    def residual(el, az):
        B = design(el, az)
        h, *_ = np.linalg.lstsq(B, y, rcond=None)
        r = y - B @ h
        return np.vdot(r, r).real

    def best_point(i):
        others = [j for j in range(n) if j != i and known[j]]
        if others:
            Q, _ = np.linalg.qr(np.stack([column(j, est_el[j], est_az[j]) for j in others], axis=1))
            resid = y - Q @ (Q.conj().T @ y)
            M = np.einsum("l,lrk->kr", c[i], Q.reshape(L, cfg.n_rx, -1).conj())  # Q^H b = M a_r
        else:
            resid = y
            M = np.zeros((0, cfg.n_rx), dtype=complex)
        R = (c[i].conj()[:, None] * resid.reshape(L, cfg.n_rx)).sum(axis=0)
        bnorm2 = cfg.n_rx * np.sum(np.abs(c[i]) ** 2)
        score = np.empty(u_grid.size)
        for start in range(0, u_grid.size, _CHUNK):
            A = np.exp(1j * cfg.k * np.multiply.outer(u_grid[start:start + _CHUNK], m))
            num = np.abs(A.conj() @ R) ** 2
            den = bnorm2 - np.sum(np.abs(A @ M.T) ** 2, axis=1)
            # candidates (nearly) inside the span of the other paths add nothing
            score[start:start + _CHUNK] = np.where(den > 1e-10 * bnorm2,
                                                   num / np.maximum(den, 1e-300), 0.0)
        ties = np.flatnonzero(score >= score.max() * (1 - 1e-12))
        d2 = (EL[ties] - ref_el[i]) ** 2 + (AZ[ties] - ref_az[i]) ** 2
        return ties[np.argmin(d2)]

    def sweeps():
        for _ in range(max(spec.max_sweeps, 1)):
            moved = False
            for i in range(n):
                k = best_point(i)
                if not known[i] or EL[k] != est_el[i] or AZ[k] != est_az[i]:
                    moved = True
                est_el[i], est_az[i] = EL[k], AZ[k]
                known[i] = True
            if not moved:
                return

    best = np.inf
    while True:
        sweeps()
        current = residual(est_el, est_az)
        if not current < best * (1 - 1e-12):
            break
        best = current
        perms = [np.array(p) for p in itertools.permutations(range(n))][1:]
        if not perms:
            break
        scores = [residual(est_el[p], est_az[p]) for p in perms]
        k = int(np.argmin(scores))
        if not scores[k] < current * (1 - 1e-12):
            break
        est_el[:], est_az[:] = est_el[perms[k]], est_az[perms[k]]

    gains, *_ = np.linalg.lstsq(design(est_el, est_az), y, rcond=None)
    return ParamVector(est_el, est_az, gains)
