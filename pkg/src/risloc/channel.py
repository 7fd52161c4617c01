"""
Narrowband mm-wave MIMO channel through an N-element RIS.

Every RIS element contributes one path. With ULAs at BS and MS the
end-to-end channel is

    H = A_r diag(h * exp(j*rho)) A_t^H

where the columns of ``A_t``/``A_r`` are the array responses of the AoD/AoA
of each path. Complex Gaussian noise CN(0, s2) has real and imaginary parts
each N(0, s2/2).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .geometry import AodPair

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayConfig:
    n_tx: int
    n_rx: int
    antenna_spacing: float = 0.003
    wavelength: float = 0.006

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be positive")
        if not (self.antenna_spacing > 0 and self.wavelength > 0):
            raise ValueError("antenna_spacing and wavelength must be positive")

    @property
    def k(self):
        """Phase progression factor ``2*pi*d/lambda``."""
        return TWO_PI * self.antenna_spacing / self.wavelength


def wrap_phases(phases):
    """Wrap phases into ``[0, 2*pi)``."""
    w = np.mod(np.asarray(phases, dtype=float), TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    w[w >= TWO_PI] = 0.0
    return w


@dataclass(frozen=True)
class ParamVector:
    """Per-path channel parameters: AoA elevations, AoA azimuths, complex gains."""
    elevation: np.ndarray
    azimuth: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        el = np.atleast_1d(np.asarray(self.elevation, dtype=float))
        az = np.atleast_1d(np.asarray(self.azimuth, dtype=float))
        h = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        if not (el.shape == az.shape == h.shape) or el.ndim != 1:
            raise DimensionMismatch(
                f"parameter blocks differ in length: {el.shape}, {az.shape}, {h.shape}")
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "gains", h)

    @property
    def n_paths(self):
        return self.elevation.size

    @classmethod
    def from_geometry(cls, geometry, gains):
        aoa = geometry.aoa()
        return cls(aoa.elevation, aoa.azimuth, gains)

    def as_array(self):
        """Real vector ``[elev, azim, Re h, Im h]`` (used for convergence checks)."""
        return np.concatenate([self.elevation, self.azimuth, self.gains.real, self.gains.imag])


def array_response(elevation, azimuth, n_antennas, k):
    """ULA response, shape ``(n_antennas,)`` or ``(n_antennas, N)`` for per-path angles.

    Entry ``m`` (0-based) is ``exp(j*m*k*sin(elevation)*sin(azimuth))``.
    """
    u = k * np.sin(elevation) * np.sin(azimuth)
    m = np.arange(n_antennas)
    return np.exp(1j * np.multiply.outer(m, u))


def array_response_tx(elevation, azimuth, cfg):
    return array_response(elevation, azimuth, cfg.n_tx, cfg.k)


def array_response_rx(elevation, azimuth, cfg):
    return array_response(elevation, azimuth, cfg.n_rx, cfg.k)


def path_trig(params, aod, cfg):
    """Spatial frequencies ``(xi, zeta)`` per path at the MS and BS."""
    xi = cfg.k * np.sin(params.elevation) * np.sin(params.azimuth)
    zeta = cfg.k * np.sin(aod.elevation) * np.sin(aod.azimuth)
    return xi, zeta


def _check_lengths(n, *arrays):
    for a in arrays:
        if np.shape(a)[-1] != n:
            raise DimensionMismatch(f"expected {n} paths, got {np.shape(a)[-1]}")


def channel_from_params(params, aod, phases, cfg):
    """``N_r x N_t`` channel for given AoA parameters, known AoD and RIS phases."""
    n = params.n_paths
    phases = np.asarray(phases, dtype=float)
    _check_lengths(n, phases, aod.elevation, aod.azimuth)
    a_r = array_response_rx(params.elevation, params.azimuth, cfg)
    a_t = array_response_tx(aod.elevation, aod.azimuth, cfg)
    weights = params.gains * np.exp(1j * phases)
    return (a_r * weights) @ a_t.conj().T


def assemble_channel(geometry, gains, phases, cfg):
    """End-to-end channel for the true geometry."""
    gains = np.asarray(gains, dtype=complex)
    if gains.shape != (geometry.n_paths,):
        raise DimensionMismatch(f"gains must have shape ({geometry.n_paths},)")
    params = ParamVector.from_geometry(geometry, gains)
    return channel_from_params(params, geometry.aod(), phases, cfg)


def xi_tensors(params, aod, cfg):
    """Derivative kernels for all paths, each of shape ``(N, N_r, N_t)``.

    ``exp(j*rho_i) * dot[i]`` is the derivative of the channel with respect
    to the AoA elevation of path i; ``ddot[i]`` is the same for the azimuth.
    Row 0 vanishes in both.
    """
    xi, zeta = path_trig(params, aod, cfg)
    m = np.arange(cfg.n_rx)[None, :, None]
    n = np.arange(cfg.n_tx)[None, None, :]
    base = np.exp(1j * (m * xi[:, None, None] - n * zeta[:, None, None]))
    common = (params.gains * 1j * cfg.k)[:, None, None] * m * base
    el, az = params.elevation, params.azimuth
    dot = common * (np.sin(az) * np.cos(el))[:, None, None]
    ddot = common * (np.sin(el) * np.cos(az))[:, None, None]
    return dot, ddot


def xi_matrices(i, params, aod, cfg):
    """``(dot, ddot)`` derivative kernels of path ``i`` (0-based)."""
    if not 0 <= i < params.n_paths:
        raise IndexOutOfRange(f"path index {i} outside [0, {params.n_paths})")
    one = ParamVector(params.elevation[i:i + 1], params.azimuth[i:i + 1], params.gains[i:i + 1])
    one_aod = AodPair(np.atleast_1d(aod.elevation)[i:i + 1], np.atleast_1d(aod.azimuth)[i:i + 1])
    dot, ddot = xi_tensors(one, one_aod, cfg)
    return dot[0], ddot[0]


@dataclass(frozen=True)
class PilotMatrix:
    """Transmitted pilots, one column per slot, and the per-slot power."""
    X: np.ndarray
    p_bs: float

    @property
    def n_slots(self):
        return self.X.shape[1]

    def scaled(self, p_bs):
        """Same pilot directions at a different per-slot power."""
        return PilotMatrix(self.X * np.sqrt(p_bs / self.p_bs), float(p_bs))

    def first_slots(self, n):
        return PilotMatrix(self.X[:, :n], self.p_bs)


PILOT_MODES = ("random", "constant", "steered")


def make_pilot(cfg, n_slots, p_bs, seed=0, mode="random", steer=None):
    """Pilot with per-slot power ``p_bs``.

    ``mode="random"`` draws i.i.d. uniform per-antenna phases from the seeded
    generator; ``mode="constant"`` sends ``sqrt(p_bs/N_t)`` on every antenna;
    ``mode="steered"`` sends ``sqrt(p_bs/N_t) * a_t(steer)`` in every slot,
    where ``steer`` is an (elevation, azimuth) AoD, typically towards the RIS
    centre (BS and RIS positions are known).
    Column ``l`` of a random pilot does not depend on ``n_slots``, so a longer
    pilot extends a shorter one with the same seed.
    """
    if n_slots < 1 or not p_bs > 0:
        raise ValueError("need n_slots >= 1 and p_bs > 0")
    amp = np.sqrt(p_bs / cfg.n_tx)
    if mode == "constant":
        X = np.full((cfg.n_tx, n_slots), amp, dtype=complex)
    elif mode == "steered":
        if steer is None:
            raise ValueError("steered pilot needs a steering direction")
        a = array_response_tx(float(steer[0]), float(steer[1]), cfg)
        X = np.tile(amp * a[:, None], (1, n_slots))
    elif mode == "random":
        rng = np.random.default_rng(seed)
        X = amp * np.exp(1j * rng.uniform(0.0, TWO_PI, size=(n_slots, cfg.n_tx)).T)
    else:
        raise ValueError(f"unknown pilot mode {mode!r}")
    return PilotMatrix(X, float(p_bs))


@dataclass(frozen=True)
class NoiseModel:
    variance: float
    seed: int = 0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("noise variance must be positive")


def snr_to_power(snr_db, n_rx, noise_variance=1.0):
    """Per-slot transmit power for ``SNR = p_bs / (N_r * noise_variance)``."""
    return n_rx * noise_variance * 10.0 ** (snr_db / 10.0)


def complex_normal(rng, size, variance=1.0):
    """Circularly-symmetric CN(0, variance) samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def synthesize_rx(pilot, channel, noise=None):
    """Stacked received vector ``[H x(1); ...; H x(L)] + noise``, length ``L*N_r``.

    Noise is drawn independently for every slot and antenna. ``noise=None``
    gives the noiseless mean.
    """
    channel = np.asarray(channel)
    if channel.ndim != 2 or channel.shape[1] != pilot.X.shape[0]:
        raise DimensionMismatch(
            f"channel {channel.shape} incompatible with pilot {pilot.X.shape}")
    mean = (channel @ pilot.X).T.reshape(-1)
    if noise is None:
        return mean
    rng = np.random.default_rng(noise.seed)
    return mean + complex_normal(rng, mean.shape, noise.variance)
