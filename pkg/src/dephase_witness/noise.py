"""Classical noise at the two qubit sites.

Random telegraph noise (RTN) is kept as exact switch times so that phase
integrals against piecewise-constant filters carry no discretization error.
Gaussian noise is an Ornstein-Uhlenbeck (OU) process sampled exactly on a
uniform grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


class UnsupportedCombinationError(ValueError):
    pass


@dataclass(frozen=True)
class RtnParams:
    """Telegraph process jumping between +v and -v at mean rate ``gamma``."""

    v: float
    gamma: float

    def __post_init__(self):
        if self.v < 0 or not self.gamma > 0:
            raise ValueError("RTN needs v >= 0 and gamma > 0")

    @property
    def tau_c(self) -> float:
        return 1.0 / (2.0 * self.gamma)

    @property
    def rate(self) -> float:
        return self.gamma

    def autocovariance(self, t):
        return self.v**2 * np.exp(-2.0 * self.gamma * np.abs(t))


@dataclass(frozen=True)
class OuParams:
    """Stationary OU process with ``C(t) = sigma**2 * exp(-|t|/tau_c)``."""

    sigma: float
    tau_c: float

    def __post_init__(self):
        if self.sigma < 0 or not self.tau_c > 0:
            raise ValueError("OU needs sigma >= 0 and tau_c > 0")

    @property
    def rate(self) -> float:
        # switching rate of the RTN with the same correlation time
        return 1.0 / (2.0 * self.tau_c)

    def autocovariance(self, t):
        return self.sigma**2 * np.exp(-np.abs(t) / self.tau_c)


@dataclass(frozen=True)
class Perfect:
    """Identical noise realization at both sites."""


@dataclass(frozen=True)
class Independent:
    """Statistically independent realizations at the two sites."""


@dataclass(frozen=True)
class SharedFraction:
    """Gaussian sites sharing a fraction ``c`` of their noise power."""

    c: float

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"shared fraction must lie in [0, 1], got {self.c}")


PERFECT = Perfect()
INDEPENDENT = Independent()


def cross_fraction(corr) -> float:
    """Cross-covariance as a fraction of the site autocovariance."""
    if isinstance(corr, Perfect):
        return 1.0
    if isinstance(corr, Independent):
        return 0.0
    if isinstance(corr, SharedFraction):
        return corr.c
    raise TypeError(f"not a correlation model: {corr!r}")


@dataclass
class RtnBatch:
    """A batch of RTN realizations on ``[0, horizon]``.

    ``switch_times`` has one row per trajectory, ascending, padded with
    ``inf``; only entries below ``horizon`` are switches.
    """

    switch_times: np.ndarray
    initial_sign: np.ndarray
    v: float
    horizon: float

    def __len__(self):
        return len(self.initial_sign)

    def values_at(self, t: float) -> np.ndarray:
        flips = np.sum(self.switch_times <= t, axis=1)
        return self.v * self.initial_sign * np.where(flips % 2 == 0, 1.0, -1.0)


@dataclass
class OuBatch:
    """OU realizations sampled at ``k * dt``, ``k = 0 .. floor(horizon/dt)``."""

    values: np.ndarray
    dt: float
    horizon: float

    def __len__(self):
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[1])


@dataclass
class NoiseTrajectoryPair:
    site_a: RtnBatch | OuBatch
    site_b: RtnBatch | OuBatch


def sample_rtn(params: RtnParams, T: float, rng: np.random.Generator, size: int = 1) -> RtnBatch:
    """Stationary RTN: random initial sign, exponential waits at rate gamma."""
    if not T > 0:
        raise ValueError("horizon must be positive")
    sign = 2.0 * rng.integers(0, 2, size=size) - 1.0
    mean = params.gamma * T
    k = int(math.ceil(mean + 10.0 * math.sqrt(mean) + 20))
    times = np.cumsum(rng.exponential(1.0 / params.gamma, size=(size, k)), axis=1)
    # extend the rare rows whose k waits did not reach the horizon
    while np.any(times[:, -1] < T):
        more = np.cumsum(rng.exponential(1.0 / params.gamma, size=(size, k)), axis=1)
        times = np.concatenate([times, times[:, -1:] + more], axis=1)
    times[times >= T] = np.inf
    used = int(np.max(np.sum(np.isfinite(times), axis=1), initial=0))
    return RtnBatch(times[:, : max(used, 1)], sign, params.v, T)


def ou_grid_size(T: float, dt: float) -> int:
    return int(math.floor(T / dt + 1e-9)) + 1


def sample_ou(params: OuParams, T: float, dt: float, rng: np.random.Generator, size: int = 1) -> OuBatch:
    """Exact discretization ``x[k+1] = a x[k] + sigma sqrt(1-a^2) z[k]``, ``a = exp(-dt/tau_c)``."""
    if not T > 0 or not dt > 0:
        raise ValueError("horizon and step must be positive")
    if dt > params.tau_c / 20.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} too coarse; need dt <= tau_c/20 = {params.tau_c / 20:.3g}")
    m = ou_grid_size(T, dt)
    a = math.exp(-dt / params.tau_c)
    drive = rng.standard_normal((size, m))
    drive[:, 0] *= params.sigma
    drive[:, 1:] *= params.sigma * math.sqrt(1.0 - a * a)
    values = lfilter([1.0], [1.0, -a], drive, axis=1)
    return OuBatch(values, dt, T)


def sample_pair(kind, corr, T: float, dt: float | None, rng: np.random.Generator, size: int = 1) -> NoiseTrajectoryPair:
    """Draw ``size`` realizations of the noise at both sites."""
    if isinstance(kind, RtnParams):
        if isinstance(corr, Perfect):
            batch = sample_rtn(kind, T, rng, size)
            return NoiseTrajectoryPair(batch, batch)
        if isinstance(corr, Independent):
            return NoiseTrajectoryPair(sample_rtn(kind, T, rng, size), sample_rtn(kind, T, rng, size))
        raise UnsupportedCombinationError(
            f"{type(corr).__name__} correlation is not defined for telegraph noise"
        )
    if isinstance(kind, OuParams):
        if dt is None:
            raise ValueError("OU sampling needs a time step")
        if isinstance(corr, Perfect):
            batch = sample_ou(kind, T, dt, rng, size)
            return NoiseTrajectoryPair(batch, batch)
        if isinstance(corr, Independent):
            return NoiseTrajectoryPair(sample_ou(kind, T, dt, rng, size), sample_ou(kind, T, dt, rng, size))
        if isinstance(corr, SharedFraction):
            shared = sample_ou(kind, T, dt, rng, size).values
            own_a = sample_ou(kind, T, dt, rng, size).values
            own_b = sample_ou(kind, T, dt, rng, size).values
            w_s, w_o = math.sqrt(corr.c), math.sqrt(1.0 - corr.c)
            return NoiseTrajectoryPair(
                OuBatch(w_s * shared + w_o * own_a, dt, T),
                OuBatch(w_s * shared + w_o * own_b, dt, T),
            )
        raise TypeError(f"not a correlation model: {corr!r}")
    raise TypeError(f"not a noise model: {kind!r}")


def rtn_spectrum(params: RtnParams, omega):
    """``S(w) = 4 v^2 gamma / (4 gamma^2 + w^2)``, transform of ``v^2 exp(-2 gamma |t|)``."""
    omega = np.asarray(omega, dtype=float)
    return 4.0 * params.v**2 * params.gamma / (4.0 * params.gamma**2 + omega**2)
