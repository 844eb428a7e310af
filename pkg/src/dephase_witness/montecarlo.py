"""Monte Carlo averaging of noise-driven two-qubit correlators.

Each trajectory of the noise sets the local observable angles to the
accumulated phases ``alpha = int f_A xi_A dt`` and ``beta = int f_B xi_B dt``.
Trajectories are generated in fixed-size blocks, each seeded from
``(master_seed, block_index)`` with a counter-based generator, so results do
not depend on how many workers run the blocks.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    PAULI_XX,
    PAULI_YY,
    correlator_operator,
    expectation,
    operator_from_components,
    pauli_components,
    validate_density_matrix,
)
from .noise import OuBatch, OuParams, RtnBatch, RtnParams, sample_pair
from .pulses import DECOUPLED, FilterFunction, On, setting_to_filter

BLOCK_SIZE = 4096
MIN_TRAJECTORIES = 1000
# grid points per OU correlation time; keeps trapezoid bias far below MC error
OU_POINTS_PER_TAU = 100
# Four realness checks per estimate; at 3 sigma each, symmetric noise would
# fail about 1% of estimates, so the hard error uses the 5-sigma rule.
REALNESS_NSIGMA = 5.0
DEEP_DECOHERENCE_NSIGMA = 5.0


class OddCumulantError(RuntimeError):
    """The averaged phase factor has a significant imaginary part."""


class DeepDecoherenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PhasePair:
    alpha: float
    beta: float


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_trajectories: int
    master_seed: int

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int) -> McEstimate:
        n = len(samples)
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(samples)), se, n, seed)


@dataclass
class AttenuationSet:
    """Local (``chi_a``, ``chi_b``) and non-local attenuations for one settings pair.

    ``chi_curly`` belongs to the sum phase ``alpha + beta`` and ``chi_square``
    to the difference ``alpha - beta``; ``chi_ab`` is the Gaussian cross term
    ``<alpha beta>/2``.
    """

    chi_a: float
    chi_b: float
    chi_curly: float
    chi_square: float
    chi_ab: float
    std_errors: dict = field(default_factory=dict)

    def swapped(self) -> AttenuationSet:
        """Attenuations after negating the B filter (On -> On*)."""
        se = dict(self.std_errors)
        if "chi_curly" in se and "chi_square" in se:
            se["chi_curly"], se["chi_square"] = se["chi_square"], se["chi_curly"]
        return AttenuationSet(self.chi_a, self.chi_b, self.chi_square, self.chi_curly, -self.chi_ab, se)


# phase accumulation

def _check_horizon(filt: FilterFunction, horizon: float):
    if abs(filt.duration - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"filter lasts {filt.duration:.6g} but trajectory horizon is {horizon:.6g}")


def interpolant_weights(filt: FilterFunction, dt: float, m: int) -> np.ndarray:
    """Weights ``w`` with ``w @ x = int f(t) x_lin(t) dt`` for ``x`` sampled at ``k*dt``.

    ``x_lin`` is the piecewise-linear interpolant, so for switches on grid
    points this is the segment-wise trapezoidal rule.
    """
    t = dt * np.arange(m)
    s = filt(t[:-1]).astype(float)
    w = np.zeros(m)
    w[:-1] += s * dt / 2
    w[1:] += s * dt / 2
    sign_before = filt.initial_sign
    for ts in filt.switch_times:
        k = min(int(ts // dt), m - 2)
        u = (ts - t[k]) / dt
        if u > 1e-12 and u < 1 - 1e-12:
            d = -2.0 * sign_before
            w[k] += d * dt / 2 * (1 - u) ** 2
            w[k + 1] += d * dt / 2 * (1 - u * u)
        sign_before = -sign_before
    return w


def accumulate_phase(filt, batch: RtnBatch | OuBatch) -> np.ndarray:
    """``int_0^T f(t) xi(t) dt`` for every trajectory in ``batch``."""
    if not isinstance(batch, (RtnBatch, OuBatch)):
        raise TypeError(f"unsupported trajectory batch {type(batch).__name__}")
    if filt is DECOUPLED:
        return np.zeros(len(batch))
    _check_horizon(filt, batch.horizon)
    if isinstance(batch, RtnBatch):
        times = batch.switch_times
        finite = np.isfinite(times)
        F = np.where(finite, filt.antiderivative(np.where(finite, times, 0.0)), 0.0)
        alt = np.where(np.arange(times.shape[1]) % 2 == 0, 1.0, -1.0)
        n_sw = finite.sum(axis=1)
        tail = np.where(n_sw % 2 == 0, 1.0, -1.0) * filt.antiderivative(batch.horizon)
        return batch.v * batch.initial_sign * (2.0 * (F @ alt) + tail)
    m = batch.values.shape[1]
    _check_horizon(filt, (m - 1) * batch.dt)
    return batch.values @ interpolant_weights(filt, batch.dt, m)


def per_trajectory_correlator(rho: np.ndarray, phases: PhasePair) -> float:
    """``Tr E(alpha, beta) rho`` for one realization of the phases."""
    return expectation(correlator_operator(phases.alpha, phases.beta), rho)


def correlator_components(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Pauli (XX, XY, YX, YY) coefficients of ``E(alpha, beta)``, one row per trajectory."""
    ca, sa, cb, sb = np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)
    return np.stack([ca * cb, ca * sb, sa * cb, sa * sb], axis=-1)


# trajectory engine

def resolve_filters(settings, noise):
    """Filters for a list of settings sharing one evolution time.

    The horizon is fixed by the ``On``/``On*`` settings; physical ``Off``
    sequences are stretched to match it.
    """
    durations = sorted({s.duration for s in settings if isinstance(s, On)})
    if durations and durations[-1] - durations[0] > 1e-9 * durations[-1]:
        raise ValueError(f"On settings disagree on the evolution time: {durations}")
    horizon = durations[0] if durations else None
    filters = [setting_to_filter(s, getattr(noise, "rate", None), horizon) for s in settings]
    if horizon is None:
        real = [f.duration for f in filters if f is not DECOUPLED]
        horizon = real[0] if real else None
    return filters, horizon


def default_dt(noise: OuParams, horizon: float, filters=()) -> float:
    """OU grid step dividing ``horizon`` exactly and resolving every filter segment."""
    shortest = min(
        (np.diff(f.breakpoints()).min() for f in filters if f is not DECOUPLED),
        default=horizon,
    )
    target = min(noise.tau_c / OU_POINTS_PER_TAU, shortest / 20.0)
    return horizon / math.ceil(horizon / target - 1e-9)


def block_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class _PhaseJob:
    noise: RtnParams | OuParams
    corr: object
    filters_a: tuple
    filters_b: tuple
    horizon: float | None
    dt: float | None
    seed: int
    n_traj: int

    def block(self, index: int):
        size = min(BLOCK_SIZE, self.n_traj - index * BLOCK_SIZE)
        if self.horizon is None:
            zeros = np.zeros(size)
            return [zeros] * len(self.filters_a), [zeros] * len(self.filters_b)
        pair = sample_pair(self.noise, self.corr, self.horizon, self.dt, block_rng(self.seed, index), size)
        return (
            [accumulate_phase(f, pair.site_a) for f in self.filters_a],
            [accumulate_phase(f, pair.site_b) for f in self.filters_b],
        )


def _run_block(job: _PhaseJob, index: int):
    return job.block(index)


def simulate_phases(noise, corr, settings_a, settings_b, n_traj: int, seed: int,
                    workers: int = 1, dt: float | None = None):
    """Accumulated phases for every requested setting on a common noise ensemble.

    Returns two arrays of shape ``(len(settings_a), n_traj)`` and
    ``(len(settings_b), n_traj)``. All settings see the same noise
    realizations (common random numbers).
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    filters, horizon = resolve_filters(list(settings_a) + list(settings_b), noise)
    if isinstance(noise, OuParams) and horizon is not None and dt is None:
        dt = default_dt(noise, horizon, filters)
    na = len(settings_a)
    job = _PhaseJob(noise, corr, tuple(filters[:na]), tuple(filters[na:]), horizon, dt, int(seed), int(n_traj))
    n_blocks = math.ceil(n_traj / BLOCK_SIZE)
    if workers > 1 and n_blocks > 1 and horizon is not None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, [job] * n_blocks, range(n_blocks)))
    else:
        results = [job.block(i) for i in range(n_blocks)]
    alphas = np.array([np.concatenate([r[0][k] for r in results]) for k in range(na)]).reshape(na, n_traj)
    nb = len(settings_b)
    betas = np.array([np.concatenate([r[1][k] for r in results]) for k in range(nb)]).reshape(nb, n_traj)
    return alphas, betas


@dataclass
class McOperator:
    """Monte Carlo estimate of a noise-averaged operator in the (XX, XY, YX, YY) basis."""

    samples: np.ndarray  # (n_traj, 4) per-trajectory Pauli coefficients
    master_seed: int

    @property
    def n_trajectories(self) -> int:
        return self.samples.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.samples, rowvar=False))

    def operator(self) -> np.ndarray:
        return operator_from_components(self.mean)

    def expectation(self, rho: np.ndarray) -> McEstimate:
        p = pauli_components(validate_density_matrix(rho))
        return McEstimate.from_samples(self.samples @ p, self.master_seed)

    def expectations(self, rhos) -> list[McEstimate]:
        """Estimates for many states at once; variances come from the coefficient covariance."""
        p = np.array([pauli_components(validate_density_matrix(r)) for r in rhos])
        values = p @ self.mean
        n = self.n_trajectories
        var = np.einsum("si,ij,sj->s", p, self.covariance, p)
        se = np.sqrt(np.maximum(var, 0.0) / n)
        return [McEstimate(float(v), float(s), n, self.master_seed) for v, s in zip(values, se)]


def mc_operator_sum(terms, noise, corr, n_traj: int, seed: int, workers: int = 1,
                    dt: float | None = None) -> McOperator:
    """Average of ``sum_k sign_k E(alpha(a_k), beta(b_k))`` over the noise.

    ``terms`` is a sequence of ``(setting_a, setting_b, sign)``.
    """
    a_list, b_list = [], []
    for a, b, _ in terms:
        if a not in a_list:
            a_list.append(a)
        if b not in b_list:
            b_list.append(b)
    alphas, betas = simulate_phases(noise, corr, a_list, b_list, n_traj, seed, workers, dt)
    samples = np.zeros((n_traj, 4))
    for a, b, sign in terms:
        samples += sign * correlator_components(alphas[a_list.index(a)], betas[b_list.index(b)])
    return McOperator(samples, int(seed))


def mc_average_correlator(rho, noise, corr, setting_a, setting_b, n_traj: int, seed: int,
                          workers: int = 1, dt: float | None = None) -> McEstimate:
    """Noise average of ``Tr E(alpha(a), beta(b)) rho`` with its standard error."""
    if n_traj < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories, got {n_traj}")
    op = mc_operator_sum([(setting_a, setting_b, 1.0)], noise, corr, n_traj, seed, workers, dt)
    return op.expectation(rho)


# attenuation functions

def _log_attenuation(c: np.ndarray, label: str):
    """``-ln <c>`` and its per-trajectory influence; inf when the mean is unresolved."""
    n = len(c)
    m = float(np.mean(c))
    se = float(np.std(c, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if m <= DEEP_DECOHERENCE_NSIGMA * se or m <= 0.0:
        warnings.warn(
            f"<cos {label}> = {m:.3g} +- {se:.2g} is not resolved from zero; attenuation set to inf",
            DeepDecoherenceWarning,
            stacklevel=3,
        )
        return math.inf, np.full(n, np.nan)
    return -math.log(m), -(c - m) / m


def _check_real(theta: np.ndarray, label: str, nsigma: float):
    s = np.sin(theta)
    n = len(s)
    mean = float(np.mean(s))
    se = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if abs(mean) > nsigma * se + 1e-15:
        raise OddCumulantError(
            f"<sin({label})> = {mean:.3g} exceeds {nsigma:g} standard errors ({se:.2g}); "
            "the noise has non-vanishing odd cumulants"
        )


def attenuations_from_phases(alpha: np.ndarray, beta: np.ndarray,
                             realness_nsigma: float = REALNESS_NSIGMA) -> AttenuationSet:
    n = len(alpha)
    combos = {"alpha": alpha, "beta": beta, "alpha+beta": alpha + beta, "alpha-beta": alpha - beta}
    for label, theta in combos.items():
        _check_real(theta, label, realness_nsigma)
    chi = {}
    infl = {}
    for label, theta in combos.items():
        chi[label], infl[label] = _log_attenuation(np.cos(theta), label)

    def se(x):
        return float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    curly = (chi["alpha+beta"] - chi["alpha"] - chi["beta"]) / 2
    square = (chi["alpha-beta"] - chi["alpha"] - chi["beta"]) / 2
    prod = alpha * beta
    errors = {
        "chi_a": se(infl["alpha"]),
        "chi_b": se(infl["beta"]),
        "chi_curly": se((infl["alpha+beta"] - infl["alpha"] - infl["beta"]) / 2),
        "chi_square": se((infl["alpha-beta"] - infl["alpha"] - infl["beta"]) / 2),
        "chi_ab": se(prod / 2),
    }
    return AttenuationSet(chi["alpha"], chi["beta"], curly, square, float(np.mean(prod) / 2), errors)


def estimate_attenuations(noise, corr, setting_a, setting_b, n_traj: int, seed: int,
                          workers: int = 1, dt: float | None = None,
                          realness_nsigma: float = REALNESS_NSIGMA) -> AttenuationSet:
    """Attenuation functions as ``-ln`` of the empirical characteristic functions."""
    if n_traj < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories, got {n_traj}")
    alphas, betas = simulate_phases(noise, corr, [setting_a], [setting_b], n_traj, seed, workers, dt)
    return attenuations_from_phases(alphas[0], betas[0], realness_nsigma)


def assemble_avg_correlator(chi: AttenuationSet) -> np.ndarray:
    """Noise-averaged correlator operator built from its attenuation functions."""
    local = chi.chi_a + chi.chi_b
    diff = math.exp(-local - 2 * chi.chi_square)
    summ = math.exp(-local - 2 * chi.chi_curly)
    return diff * (PAULI_XX + PAULI_YY) / 2 + summ * (PAULI_XX - PAULI_YY) / 2
