"""
Reflect beamforming: CRLB gradient with respect to the RIS phases,
gradient descent with backtracking (inner loop) and alternating
estimation/optimization (outer loop).
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from .channel import ParamVector, synthesize_rx, channel_from_params, wrap_phases
from .errors import IndexOutOfRange, LineSearchFailed, SingularFim, DimensionMismatch
from .fim import kappa_tensor, position_fim, crlb, varpi, _phase_weights
from .geometry import transform_matrix_from_angles

log = logging.getLogger(__name__)

#: backtracking gives up once the trial step drops below this
MIN_STEP = 1e-16


def fim_gradients(kappa, phases, noise_variance):
    """Derivatives of every position-FIM entry with respect to every phase.

    Returns ``G`` of shape ``(2, 2, N)`` with ``G[a, b, i] = d[J_q]_ab / d rho_i``.

    For the diagonal entries this is
    ``(4/s2) sum_l sum_{n != i} Re[j exp(j(rho_i - rho_n)) kappa_aa(l)[n, i]]``.
    Off-diagonal entries use the symmetrised kernel ``kappa_ab + kappa_ba``
    with prefactor ``2/s2``. (``kappa_ab`` alone is not Hermitian, so a
    ``4/s2 * kappa_ab`` form only gets ``dJ_12 + dJ_21`` right, not each term.)
    """
    w = _phase_weights(kappa, phases)
    K = kappa.summed
    S = K + K.transpose(1, 0, 2, 3)          # S[a,b] = K_ab + K_ba
    S = S.copy()
    idx = np.arange(kappa.n_paths)
    S[..., idx, idx] = 0.0                   # n != i
    # sum_n conj(w_n) S[a,b][n, i]
    inner = np.einsum("n,abni->abi", w.conj(), S)
    return (2.0 / noise_variance) * (1j * w * inner).real


def fim_entry_gradients(kappa, phases, noise_variance, i):
    """``(dJ11, dJ12, dJ21, dJ22)`` with respect to phase ``i`` (0-based)."""
    if not 0 <= i < kappa.n_paths:
        raise IndexOutOfRange(f"phase index {i} outside [0, {kappa.n_paths})")
    G = fim_gradients(kappa, phases, noise_variance)[:, :, i]
    return G[0, 0], G[0, 1], G[1, 0], G[1, 1]


def crlb_and_gradient(kappa, phases, noise_variance):
    """CRLB and its gradient with respect to the phases (quotient rule)."""
    fim = position_fim(kappa, phases, noise_variance)
    f = crlb(fim)
    J = fim.matrix
    G = fim_gradients(kappa, phases, noise_variance)
    num = J[0, 0] + J[1, 1]
    den = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    d_num = G[0, 0] + G[1, 1]
    d_den = G[0, 0] * J[1, 1] + J[0, 0] * G[1, 1] - G[0, 1] * J[1, 0] - J[0, 1] * G[1, 0]
    return f, (d_num * den - num * d_den) / den**2


def crlb_gradient(kappa, phases, noise_variance):
    return crlb_and_gradient(kappa, phases, noise_variance)[1]


@dataclass(frozen=True)
class GdmConfig:
    """Gradient descent settings.

    ``tolerance`` is the absolute objective decrease below which the loop
    stops; ``None`` means ``rel_tolerance * f(initial)``.
    """
    tolerance: float = None
    rel_tolerance: float = 1e-8
    max_iterations: int = 1000
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    initial_step: float = 1.0

    def __post_init__(self):
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if not 0 < self.ls_alpha < 0.5:
            raise ValueError("ls_alpha must lie in (0, 0.5)")
        if not 0 < self.ls_beta < 1:
            raise ValueError("ls_beta must lie in (0, 1)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    step: float
    grad_norm: float


@dataclass
class OptimizationTrace:
    """Per-iteration history of a descent run.

    Record 0 is the starting point (``step == 0``). ``status`` is one of
    ``"converged"``, ``"stationary"``, ``"max_iterations"`` or ``"singular"``.
    """
    records: list = field(default_factory=list)
    phases: np.ndarray = None
    status: str = "running"

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def steps(self):
        return np.array([r.step for r in self.records])

    @property
    def grad_norms(self):
        return np.array([r.grad_norm for r in self.records])

    @property
    def n_steps(self):
        return max(len(self.records) - 1, 0)

    @property
    def initial_objective(self):
        return self.records[0].objective

    @property
    def final_objective(self):
        return self.records[-1].objective


def gdm_optimize(kappa, initial, noise_variance, cfg=GdmConfig()):
    """Minimise the position CRLB over the RIS phases by gradient descent.

    Each step moves along the negative gradient with a step chosen by
    backtracking until the Armijo condition
    ``f(rho - t g) <= f(rho) - ls_alpha * t * ||g||^2`` holds; phases are
    wrapped to ``[0, 2*pi)`` after every update (the objective is
    2*pi-periodic in each phase). Trial points with a singular FIM are
    rejected like any other failed trial.

    Raises `LineSearchFailed` (with the partial trace attached) when the
    step falls below `MIN_STEP`.
    """
    rho = wrap_phases(initial)
    if rho.shape != (kappa.n_paths,):
        raise DimensionMismatch(f"expected {kappa.n_paths} phases, got {rho.shape}")
    trace = OptimizationTrace(phases=rho)
    try:
        f, g = crlb_and_gradient(kappa, rho, noise_variance)
    except SingularFim:
        trace.status = "singular"
        return trace
    gnorm2 = float(g @ g)
    trace.records.append(IterationRecord(0, f, 0.0, np.sqrt(gnorm2)))
    tol = cfg.tolerance if cfg.tolerance is not None else cfg.rel_tolerance * f
    # gradient this small relative to f cannot produce a representable decrease
    stationary = np.finfo(float).eps * f

    for it in range(1, cfg.max_iterations + 1):
        if np.sqrt(gnorm2) * np.pi <= stationary:
            trace.status = "stationary"
            break
        t = cfg.initial_step
        while True:
            trial = wrap_phases(rho - t * g)
            try:
                f_trial = crlb(position_fim(kappa, trial, noise_variance))
            except SingularFim:
                f_trial = np.inf
            if f_trial <= f - cfg.ls_alpha * t * gnorm2:
                break
            t *= cfg.ls_beta
            if t < MIN_STEP:
                trace.status = "line_search_failed"
                raise LineSearchFailed(
                    f"backtracking failed at iteration {it} (f={f:.6e}, |g|={np.sqrt(gnorm2):.3e})",
                    trace)
        decrease = f - f_trial
        rho = trial
        f, g = crlb_and_gradient(kappa, rho, noise_variance)
        gnorm2 = float(g @ g)
        trace.records.append(IterationRecord(it, f, t, np.sqrt(gnorm2)))
        trace.phases = rho
        if decrease <= tol:
            trace.status = "converged"
            break
    else:
        trace.status = "max_iterations"
    return trace


@dataclass(frozen=True)
class AltOptConfig:
    """Outer-loop limits.

    ``phase_tolerance`` bounds the wrapped Euclidean norm of the phase change
    between outer iterations. The CRLB is very flat along its valleys (phases
    drifting by 0.05 rad typically move it by ~1e-6 relative), so tighter
    values mostly measure how slowly steepest descent crawls.
    """
    max_outer_iterations: int = 20
    param_tolerance: float = 1e-6
    phase_tolerance: float = 0.05

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if not (self.param_tolerance > 0 and self.phase_tolerance > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class AltOptResult:
    params: ParamVector
    phases: np.ndarray
    traces: list
    estimates: list
    converged: bool

    @property
    def status(self):
        return "converged" if self.converged else "non_convergence"

    @property
    def n_outer(self):
        return len(self.traces)


def phase_distance(a, b):
    """Euclidean norm of the wrapped phase differences."""
    d = np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b))))
    return float(np.linalg.norm(d))


def build_kappa(params, scenario, pilot):
    """Kappa tensor from (possibly estimated) AoA parameters.

    The AoD and RIS heights are known; the angle-to-position Jacobian is
    evaluated at the estimated angles. Which side of the RIS (in y) the MS is
    on is taken as coarse prior knowledge.
    """
    geom = scenario.geometry
    side = np.where(geom.ms_pos[1] >= geom.ris_elements[:, 1], 1.0, -1.0)
    T = transform_matrix_from_angles(params.elevation, params.azimuth,
                                     geom.ris_elements[:, 2], side)
    return kappa_tensor(varpi(params, geom.aod(), pilot, scenario.array), T)


def alternating_optimize(scenario, estimator, pilot, noise, alt_cfg=AltOptConfig(),
                         gdm_cfg=GdmConfig(), initial_phases=None, noiseless=False):
    """Alternate parameter estimation and phase optimisation until both settle.

    ``estimator`` callables are invoked as
    ``estimator(y, scenario, phases, pilot, noise_variance, iteration=, initial=)``.
    Each outer iteration synthesises a fresh observation with the current
    phases (noise seed derived from ``noise.seed`` and the iteration index),
    estimates the parameters with ``estimator`` (an `EstimatorSpec` or any
    callable with the same signature as `risloc.estimator.estimate`),
    rebuilds the kappa tensor from the estimate and runs `gdm_optimize`
    warm-started from the previous phases.

    Convergence requires both the parameter change and the wrapped phase
    change between consecutive outer iterations to fall below the
    tolerances in ``alt_cfg``.
    """
    from .estimator import estimate as _estimate

    if callable(estimator):
        estimate = estimator
    else:
        def estimate(y, sc, ph, pl, s2, iteration=0, initial=None):
            return _estimate(estimator, y, sc, ph, pl, s2, iteration=iteration, initial=initial)
    geom = scenario.geometry
    n = geom.n_paths
    if initial_phases is None:
        initial_phases = np.random.default_rng(noise.seed).uniform(0.0, 2 * np.pi, n)
    rho = wrap_phases(initial_phases)
    truth = ParamVector.from_geometry(geom, scenario.gains)
    traces, estimates = [], []
    prev = None
    converged = False
    for it in range(alt_cfg.max_outer_iterations):
        H = channel_from_params(truth, geom.aod(), rho, scenario.array)
        slot_noise = None if noiseless else type(noise)(noise.variance, _child_seed(noise.seed, it))
        y = synthesize_rx(pilot, H, slot_noise)
        eta = estimate(y, scenario, rho, pilot, noise.variance, iteration=it, initial=prev)
        kappa = build_kappa(eta, scenario, pilot)
        trace = gdm_optimize(kappa, rho, noise.variance, gdm_cfg)
        new_rho = trace.phases
        traces.append(trace)
        estimates.append(eta)
        if prev is not None:
            d_eta = np.linalg.norm(eta.as_array() - prev.as_array())
            d_rho = phase_distance(new_rho, rho)
            log.debug("outer %d: |d_eta|=%.3e |d_rho|=%.3e", it, d_eta, d_rho)
            if d_eta <= alt_cfg.param_tolerance and d_rho <= alt_cfg.phase_tolerance:
                rho = new_rho
                converged = True
                break
        rho = new_rho
        prev = eta
    return AltOptResult(estimates[-1], rho, traces, estimates, converged)


def _child_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])
