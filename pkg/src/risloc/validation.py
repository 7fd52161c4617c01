"""Random test instances and the finite-difference gradient check behind ``grad-check``."""
from dataclasses import dataclass

import numpy as np

from .beamforming import crlb_and_gradient, fim_gradients
from .channel import ArrayConfig, ParamVector, PilotMatrix, make_pilot
from .errors import SingularFim
from .fim import kappa_tensor, position_fim, position_derivative_vectors, varpi
from .geometry import RisLayout, ScenarioGeometry, transform_matrix
from .scenario import Scenario, draw_gains

FD_STEP = 1e-6


@dataclass
class Instance:
    scenario: Scenario
    pilot: PilotMatrix
    phases: np.ndarray
    noise_variance: float

    def derivative_vectors(self):
        """Phase-free d mu / d q vectors, shape ``(2, L, N, N_r)``."""
        s = self.scenario
        vset = varpi(ParamVector.from_geometry(s.geometry, s.gains), s.geometry.aod(),
                     self.pilot, s.array)
        return vset, transform_matrix(s.geometry)

    def kappa(self):
        return kappa_tensor(*self.derivative_vectors())


def direct_fim(u, phases, noise_variance):
    """Position FIM straight from the derivative vectors, in extended precision.

    ``J_ab = (2/s2) sum_l Re[D_a(l)^H D_b(l)]`` with
    ``D_a(l) = sum_i exp(j*rho_i) u[a, l, i]``; no kappa tensor involved.
    """
    w = np.exp(1j * np.asarray(phases, dtype=np.longdouble))
    D = np.einsum("alnr,n->alr", u.astype(np.clongdouble), w)
    G = np.einsum("alr,blr->ab", D.conj(), D)
    return (2 / np.longdouble(noise_variance)) * G.real


def direct_crlb(u, phases, noise_variance):
    J = direct_fim(u, phases, noise_variance)
    return (J[0, 0] + J[1, 1]) / (J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])


def random_instance(rng, n_paths, n_antennas=4, n_slots=1, snr_db=None):
    """A random well-posed scenario with a square RIS of ``n_paths`` elements.

    The RIS is spread over metres so that paths are geometrically distinct
    and the FIM is reasonably conditioned; the MS stays on the far side of the
    RIS in y.
    """
    side = int(round(np.sqrt(n_paths)))
    if side * side != n_paths:
        raise ValueError("n_paths must be a perfect square")
    ref = (rng.uniform(-30, 10), rng.uniform(30, 60), rng.uniform(5, 30))
    layout = RisLayout(side, side, rng.uniform(2.0, 8.0), ref)
    ms = [rng.uniform(ref[0] - 20, ref[0] + 40), rng.uniform(ref[1] + 10, ref[1] + 60), 0.0]
    geom = ScenarioGeometry.from_layout([0.0, 0.0, 0.0], ms, layout)
    cfg = ArrayConfig(n_antennas, n_antennas)
    snr = rng.uniform(0, 30) if snr_db is None else snr_db
    noise_variance = float(rng.uniform(0.5, 2.0))
    p_bs = cfg.n_rx * noise_variance * 10 ** (snr / 10)
    pilot = make_pilot(cfg, n_slots, p_bs, seed=int(rng.integers(2**32)))
    phases = rng.uniform(0, 2 * np.pi, n_paths)
    return Instance(Scenario(geom, draw_gains(rng, n_paths), cfg), pilot, phases, noise_variance)


def central_difference(fun, x, step=FD_STEP):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1).astype(float)


def relative_error(analytic, numeric, scale_floor=0.0):
    """Max-norm error relative to the max-norm of the numeric value."""
    denom = max(np.max(np.abs(numeric)), scale_floor, np.finfo(float).tiny)
    return float(np.max(np.abs(np.asarray(analytic) - np.asarray(numeric))) / denom)


def gradient_errors(inst, step=FD_STEP):
    """``(entry_error, crlb_error)`` of the closed-form gradients vs central differences.

    The differenced function is `direct_fim` / `direct_crlb` (extended
    precision, independent of the kappa path). Errors are relative to the
    max-norm of the numeric derivative, floored at 1e-6 of the differenced
    quantity (per-radian derivatives share its scale). ``crlb_error`` is
    ``None`` when the FIM is singular, which is always the case for a single
    path: with a ULA at the MS both AoA derivatives of a path are parallel.
    """
    vset, T = inst.derivative_vectors()
    kappa = kappa_tensor(vset, T)
    u = position_derivative_vectors(vset, T)
    s2 = inst.noise_variance
    G = fim_gradients(kappa, inst.phases, s2)
    G_fd = central_difference(lambda p: direct_fim(u, p, s2), inst.phases, step)
    J = position_fim(kappa, inst.phases, s2).matrix
    entry_err = relative_error(G, G_fd, 1e-6 * np.max(np.abs(J)))
    try:
        f, g = crlb_and_gradient(kappa, inst.phases, s2)
    except SingularFim:
        return entry_err, None
    g_fd = central_difference(lambda p: direct_crlb(u, p, s2), inst.phases, step)
    return entry_err, relative_error(g, g_fd, 1e-6 * f)


def gradient_check(n_instances=100, seed=0, path_counts=(1, 4, 9), slot_counts=(1, 2),
                   n_antennas=4):
    """Run the finite-difference oracle over random instances.

    Returns a dict with the maximum relative errors of the FIM-entry and CRLB
    gradients.
    """
    rng = np.random.default_rng(seed)
    worst_entry, worst_crlb, n_crlb = 0.0, 0.0, 0
    for k in range(n_instances):
        n = path_counts[k % len(path_counts)]
        L = slot_counts[(k // len(path_counts)) % len(slot_counts)]
        e_entry, e_crlb = gradient_errors(random_instance(rng, n, n_antennas, L))
        worst_entry = max(worst_entry, e_entry)
        if e_crlb is not None:
            worst_crlb = max(worst_crlb, e_crlb)
            n_crlb += 1
    return {"instances": n_instances, "crlb_instances": n_crlb,
            "max_entry_rel_error": worst_entry, "max_crlb_rel_error": worst_crlb}
