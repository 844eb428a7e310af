"""Closed-form reference values for the noise-activated CHSH-like criterion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .montecarlo import AttenuationSet, resolve_filters
from .noise import OuParams, cross_fraction
from .pulses import DECOUPLED, FilterFunction

CHI_STAR = math.log(2.0) / 3.0
B0 = 1.0 + 3.0 * 2.0 ** (-4.0 / 3.0)
SEPARABLE_BOUND = 2.0


# Gaussian attenuation by segment-exact double integration

def _merged_segments(f: FilterFunction, g: FilterFunction):
    bp = np.union1d(f.breakpoints(), g.breakpoints())
    mid = 0.5 * (bp[:-1] + bp[1:])
    return bp[:-1], bp[1:], f(mid).astype(float), g(mid).astype(float)


def _x_minus_one_minus_exp(x: np.ndarray) -> np.ndarray:
    """``x - 1 + exp(-x)`` without cancellation at small ``x``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-3
    series = x * x / 2 - x**3 / 6 + x**4 / 24
    return np.where(small, series, x + np.expm1(-x))


def _ou_block_integrals(lo, hi, tau):
    """``int_I int_J exp(-|t-t'|/tau)`` for all pairs of disjoint-or-equal segments."""
    length = hi - lo
    one_minus = -np.expm1(-length / tau)
    gap = np.maximum(lo[None, :] - hi[:, None], lo[:, None] - hi[None, :])
    cross = tau**2 * np.outer(one_minus, one_minus) * np.exp(-np.maximum(gap, 0.0) / tau)
    diag = 2.0 * tau**2 * _x_minus_one_minus_exp(length / tau)
    np.fill_diagonal(cross, diag)
    return cross


def _overlap_integral(cov, a, b, c, d):
    """``int_a^b int_c^d C(t - t') dt' dt`` as a one-dimensional lag integral."""
    lo, hi = a - d, b - c
    knots = sorted({lo, hi, a - c, b - d})

    def weight(u):
        return max(0.0, min(b, d + u) - max(a, c + u))

    val, _ = quad(lambda u: cov(u) * weight(u), lo, hi, points=knots[1:-1] or None, limit=200)
    return val


def gaussian_attenuation_quadrature(filter_a, filter_b, covariance, which: str = "A") -> float:
    """Second-order attenuation ``1/2 int int f(t) g(t') C(t - t') dt dt'``.

    ``which`` picks ``f = g = filter_a`` ("A"), ``f = g = filter_b`` ("B"),
    or ``f = filter_a, g = filter_b`` ("AB"; pass the cross-covariance).
    ``covariance`` is an :class:`OuParams` (closed form), a callable lag
    covariance, or ``None`` for no correlation.
    """
    if which == "A":
        f, g = filter_a, filter_a
    elif which == "B":
        f, g = filter_b, filter_b
    elif which == "AB":
        f, g = filter_a, filter_b
    else:
        raise ValueError(f"which must be 'A', 'B' or 'AB', got {which!r}")
    if isinstance(filter_a, FilterFunction) and isinstance(filter_b, FilterFunction):
        if abs(filter_a.duration - filter_b.duration) > 1e-9 * max(filter_a.duration, 1.0):
            raise ValueError("filters must share the same duration")
    if f is DECOUPLED or g is DECOUPLED or covariance is None:
        return 0.0
    lo, hi, sf, sg = _merged_segments(f, g)
    if isinstance(covariance, OuParams):
        if covariance.sigma == 0:
            return 0.0
        blocks = covariance.sigma**2 * _ou_block_integrals(lo, hi, covariance.tau_c)
    else:
        n = len(lo)
        blocks = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                blocks[i, j] = blocks[j, i] = _overlap_integral(covariance, lo[i], hi[i], lo[j], hi[j])
    return float(0.5 * sf @ blocks @ sg)


def gaussian_attenuations(noise: OuParams, corr, setting_a, setting_b) -> AttenuationSet:
    """Exact attenuation set for OU noise; the non-local pair is ``(chi_AB, -chi_AB)``."""
    (fa, fb), _ = resolve_filters([setting_a, setting_b], noise)
    chi_a = gaussian_attenuation_quadrature(fa, fb, noise, "A")
    chi_b = gaussian_attenuation_quadrature(fa, fb, noise, "B")
    c = cross_fraction(corr)
    chi_ab = c * gaussian_attenuation_quadrature(fa, fb, noise, "AB") if c else 0.0
    zero = dict.fromkeys(("chi_a", "chi_b", "chi_curly", "chi_square", "chi_ab"), 0.0)
    return AttenuationSet(chi_a, chi_b, chi_ab, -chi_ab, chi_ab, zero)


def tune_ou(target_chi: float, tau_c: float, setting) -> OuParams:
    """OU noise whose local attenuation under ``setting`` equals ``target_chi``."""
    if target_chi < 0:
        raise ValueError("attenuation must be non-negative")
    (f,), _ = resolve_filters([setting], OuParams(1.0, tau_c))
    unit = gaussian_attenuation_quadrature(f, f, OuParams(1.0, tau_c), "A")
    return OuParams(math.sqrt(target_chi / unit), tau_c)


# Gaussian closed forms

def _check_chi(chi):
    if np.any(np.asarray(chi) < 0):
        raise ValueError("attenuation must be non-negative")


def gaussian_phi_expectation(chi):
    """``<Phi+-|B_Phi|Phi+->`` for perfectly correlated Gaussian noise: ``1 + 2e^-chi - e^-4chi``."""
    _check_chi(chi)
    return 1.0 + 2.0 * np.exp(-np.asarray(chi, dtype=float)) - np.exp(-4.0 * np.asarray(chi, dtype=float))


def b0_max() -> float:
    """Largest Bell-state value reachable with Gaussian noise, ``1 + 3 * 2**(-4/3)``.

    Attained at ``chi = CHI_STAR = ln(2)/3``.
    """
    return B0


def gaussian_psi_on_phi(chi):
    _check_chi(chi)
    return 2.0 * np.exp(-np.asarray(chi, dtype=float))


def gaussian_detection_window() -> tuple[float, float]:
    """Interval of ``chi`` on which the Gaussian Phi value exceeds 2."""
    upper = brentq(lambda x: 2.0 * math.exp(-x) - math.exp(-4.0 * x) - 1.0, CHI_STAR, 5.0, xtol=1e-15)
    return 0.0, upper


# Telegraph noise

def _sinhc(z: float) -> float:
    """``sinh(sqrt z)/sqrt z`` for real ``z`` of either sign."""
    if abs(z) < 1e-4:
        return 1.0 + z / 6.0 + z * z / 120.0
    if z > 0:
        r = math.sqrt(z)
        return math.sinh(r) / r
    r = math.sqrt(-z)
    return math.sin(r) / r


def _coshm(z: float) -> float:
    """``(cosh(sqrt z) - 1)/z`` for real ``z`` of either sign."""
    if abs(z) < 1e-4:
        return 0.5 + z / 24.0 + z * z / 720.0
    if z > 0:
        return (math.cosh(math.sqrt(z)) - 1.0) / z
    return (1.0 - math.cos(math.sqrt(-z))) / -z


def _rtn_characteristic_limit(v, n, gamma, tau_p):
    """Same formula rewritten in entire functions of ``mu**2``; finite at ``mu = 0``."""
    x = gamma * tau_p
    z = x * x * (1.0 - (v / gamma) ** 2)
    s = x * _sinhc(z)  # sinh(x mu)/mu
    r = math.sqrt(s * s + 1.0)  # sqrt(sinh^2 + mu^2)/mu
    pref = (1.0 + x * x * _coshm(z)) / r
    decay = math.exp(-x)
    lp, lm = (s + r) * decay, (s - r) * decay
    return 0.5 * (pref * (lp**n - lm**n) + lp**n + lm**n)


def rtn_characteristic(v: float, n: int, gamma: float, tau_p: float) -> float:
    """Characteristic function ``<exp(i theta)>`` of the phase from RTN under an n-pulse CP filter.

    Evaluated with complex ``mu = sqrt(1 - v^2/gamma^2)`` so the oscillatory
    regime ``v > gamma`` needs no separate branch; within ``|mu^2| < 1e-8``
    the removable singularity is handled by the series form.
    """
    if int(n) != n or n < 1:
        raise ValueError("pulse count must be a positive integer")
    if not (gamma > 0 and tau_p > 0 and v >= 0):
        raise ValueError("need gamma > 0, tau_p > 0 and v >= 0")
    n = int(n)
    ratio2 = (v / gamma) ** 2
    mu2 = 1.0 - ratio2
    if abs(mu2) < 1e-8:
        return _rtn_characteristic_limit(v, n, gamma, tau_p)
    x = gamma * tau_p
    mu = np.sqrt(complex(mu2))
    sh = np.sinh(x * mu)
    root = np.sqrt(sh * sh + mu2)
    decay = math.exp(-x)
    lp = (sh + root) / mu * decay
    lm = (sh - root) / mu * decay
    pref = (np.cosh(x * mu) - ratio2) / (mu * root)
    w = 0.5 * (pref * (lp**n - lm**n) + lp**n + lm**n)
    if abs(w.imag) > 1e-10 * max(1.0, abs(w.real)):
        raise ArithmeticError(f"characteristic function has imaginary residue {w.imag:.3e}")
    return float(w.real)


def rtn_chsh_expectation(v: float, n: int, gamma: float, tau_p: float) -> float:
    """``<Phi+|B_Phi|Phi+>`` for perfectly correlated RTN and identical On filters.

    The sum phase of two identical copies equals the phase of a single RTN
    with doubled amplitude, hence ``1 + 2 W(v) - W(2v)``.
    """
    return 1.0 + 2.0 * rtn_characteristic(v, n, gamma, tau_p) - rtn_characteristic(2.0 * v, n, gamma, tau_p)


# Werner-state thresholds

P0 = 1.0 / 3.0


def sensitivity(p_threshold: float) -> float:
    """Fraction of entangled Werner states detected by a criterion with the given threshold."""
    return (1.0 - p_threshold) / (1.0 - P0)


@dataclass(frozen=True)
class WernerThresholds:
    p0: float
    p_chsh: float
    sigma_chsh: float
    p_gaussian: float
    sigma_gaussian: float


def werner_thresholds() -> WernerThresholds:
    p_chsh = 1.0 / math.sqrt(2.0)
    p_gauss = 2.0 / b0_max()
    return WernerThresholds(P0, p_chsh, sensitivity(p_chsh), p_gauss, sensitivity(p_gauss))


def werner_threshold_from_b(b_value: float) -> float:
    """Smallest Werner ``p`` detected when ``|<Psi-|B_Psi|Psi->| = b_value``; above 1 means none."""
    if not b_value > 0:
        raise ValueError("criterion value must be positive")
    return 2.0 / b_value


def weak_dephasing_threshold(chi_curly: float) -> float:
    """Werner threshold ``1/(1 + chi_curly)`` valid for weak dephasing."""
    if not 0.0 < chi_curly < 0.2:
        raise ValueError("weak-dephasing approximation needs 0 < chi_curly < 0.2")
    return 1.0 / (1.0 + chi_curly)


def weak_dephasing_sensitivity(chi_curly: float) -> float:
    return sensitivity(weak_dephasing_threshold(chi_curly))


def strong_dephasing_bound(chi_curly):
    """Psi- value per unit ``p`` when the local attenuations equal 1."""
    return 1.0 + 2.0 * math.exp(-1.0) - math.exp(-2.0) * np.exp(-2.0 * np.asarray(chi_curly, dtype=float))


# NV-centre parameterization

def nv_chi(T: float, g: float) -> float:
    """Attenuation ``2 T^2 g^2 / pi`` for two NV qubits near a molecule."""
    if T < 0 or g < 0:
        raise ValueError("T and g must be non-negative")
    return 2.0 * T * T * g * g / math.pi


def nv_duration_for_chi(chi: float, g: float) -> float:
    if not g > 0:
        raise ValueError("coupling must be positive")
    return math.sqrt(math.pi * chi / 2.0) / g
