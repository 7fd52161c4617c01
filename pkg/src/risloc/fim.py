"""
Position Fisher information as an explicit function of the RIS phases.

The derivative of the slot-l mean ``mu(l) = H x(l)`` with respect to the MS
position coordinate ``a`` is

    d mu(l) / d q_a = sum_i exp(j*rho_i) * u_i^a(l),
    u_i^a(l) = alpha_i^a * varpi_dot_i(l) + beta_i^a * varpi_ddot_i(l)

so that

    [J_q]_ab = (2/s2) * sum_l sum_{m,n} Re[exp(j(rho_n - rho_m)) kappa_ab(l)[m, n]],
    kappa_ab(l)[m, n] = u_m^a(l)^H u_n^b(l).

The kappa tensor does not depend on the phases, so it is built once per
(parameters, pilot) and reused for every phase evaluation.
"""
from dataclasses import dataclass, field

import numpy as np

from .channel import ParamVector, xi_tensors
from .errors import DimensionMismatch, SingularFim
from .geometry import transform_matrix

#: det(J) <= SINGULAR_RTOL * ||J||_F^2 is treated as singular
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class VarpiSet:
    """Derivative vectors ``dot[i, l] = Xi_dot_i x(l)``; shape ``(N, L, N_r)`` each."""
    dot: np.ndarray
    ddot: np.ndarray

    @property
    def n_paths(self):
        return self.dot.shape[0]

    @property
    def n_slots(self):
        return self.dot.shape[1]


def varpi(params, aod, pilot, cfg):
    if pilot.X.shape[0] != cfg.n_tx:
        raise DimensionMismatch(f"pilot has {pilot.X.shape[0]} rows, array has {cfg.n_tx}")
    dot, ddot = xi_tensors(params, aod, cfg)
    # slot by slot, so a slot's vectors depend on its own pilot column only
    # (bitwise: repeated pilot columns give identical slots)
    return VarpiSet(np.stack([dot @ x for x in pilot.X.T], axis=1),
                    np.stack([ddot @ x for x in pilot.X.T], axis=1))


@dataclass(frozen=True)
class KappaTensor:
    """Phase-independent kernel of the position FIM.

    ``per_slot[a, b, l, m, n]`` holds ``kappa_ab(l)[m, n]`` (0-based a, b for
    x, y). ``summed`` is the same tensor summed over slots; ``summed_ext``
    is that sum accumulated in extended precision, used for the FIM itself.
    """
    per_slot: np.ndarray
    transform: object = field(repr=False)
    summed: np.ndarray = field(init=False, repr=False)
    summed_ext: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ext = self.per_slot.astype(np.clongdouble).sum(axis=2)
        object.__setattr__(self, "summed_ext", ext)
        object.__setattr__(self, "summed", ext.astype(complex))

    @property
    def n_paths(self):
        return self.per_slot.shape[-1]

    @property
    def n_slots(self):
        return self.per_slot.shape[2]


def position_derivative_vectors(vset, transform):
    """``u[a, l, i]`` of shape ``(2, L, N, N_r)``: phase-free d mu / d q_a per path."""
    if transform.n_paths != vset.n_paths:
        raise DimensionMismatch(
            f"transform has {transform.n_paths} paths, varpi has {vset.n_paths}")
    dot = vset.dot.transpose(1, 0, 2)      # (L, N, Nr)
    ddot = vset.ddot.transpose(1, 0, 2)
    alpha, beta = transform.elev_jac, transform.azim_jac
    return alpha[:, None, :, None] * dot[None] + beta[:, None, :, None] * ddot[None]


def kappa_tensor(vset, transform):
    u = position_derivative_vectors(vset, transform)
    # kappa[a, b, l, m, n] = sum_r conj(u[a, l, m, r]) u[b, l, n, r]
    per_slot = np.stack([np.einsum("amr,bnr->abmn", ul.conj(), ul)
                         for ul in u.transpose(1, 0, 2, 3)], axis=2)
    return KappaTensor(per_slot, transform)


def kappa_from_geometry(geometry, gains, pilot, cfg):
    """Convenience: kappa tensor at the true geometry."""
    params = ParamVector.from_geometry(geometry, gains)
    return kappa_tensor(varpi(params, geometry.aod(), pilot, cfg), transform_matrix(geometry))


@dataclass(frozen=True)
class PositionFim:
    """2x2 position FIM; ``extended`` keeps the same matrix in extended precision."""
    matrix: np.ndarray
    noise_variance: float
    n_slots: int
    extended: np.ndarray = field(default=None, repr=False)


def _phase_weights(kappa, phases, dtype=float):
    phases = np.asarray(phases, dtype=dtype)
    if phases.shape != (kappa.n_paths,):
        raise DimensionMismatch(f"expected {kappa.n_paths} phases, got {phases.shape}")
    return np.exp(1j * phases)


def position_fim(kappa, phases, noise_variance):
    """2x2 position FIM summed over all slots.

    The quadratic form is accumulated in extended precision: the CRLB of a
    poorly conditioned FIM amplifies rounding in its entries, and the exact
    scaling laws (slots, noise, global phase) should survive that.
    """
    w = _phase_weights(kappa, phases, np.longdouble)
    quad = np.einsum("m,abmn,n->ab", w.conj(), kappa.summed_ext, w).real
    J = (2 / np.longdouble(noise_variance)) * quad
    return PositionFim(J.astype(float), float(noise_variance), kappa.n_slots, J)


def crlb(fim):
    """Trace of the inverse of the 2x2 position FIM."""
    if isinstance(fim, PositionFim):
        J = fim.extended if fim.extended is not None else fim.matrix
    else:
        J = np.asarray(fim)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if not det > SINGULAR_RTOL * np.sum(J**2):
        raise SingularFim(f"position FIM is singular (det={float(det):.3e})")
    return float((J[0, 0] + J[1, 1]) / det)


def crlb_of_phases(kappa, phases, noise_variance):
    return crlb(position_fim(kappa, phases, noise_variance))


def fim_eta_aoa_block(params, aod, pilot, phases, cfg, noise_variance):
    """AoA block of the full-parameter FIM, ``2N x 2N`` with rows ``[elev..., azim...]``.

    Built directly from the mean derivatives (no kappa tensor) and including
    the ``2/s2`` prefactor; ``T A T^T`` then equals the position FIM.
    """
    vset = varpi(params, aod, pilot, cfg)
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (vset.n_paths,):
        raise DimensionMismatch(f"expected {vset.n_paths} phases, got {phases.shape}")
    w = np.exp(1j * phases)[:, None, None]
    D = np.concatenate([w * vset.dot, w * vset.ddot], axis=0)   # (2N, L, Nr)
    D = D.transpose(1, 0, 2)                                   # (L, 2N, Nr)
    G = np.einsum("lmr,lnr->mn", D.conj(), D)
    return (2.0 / noise_variance) * G.real
