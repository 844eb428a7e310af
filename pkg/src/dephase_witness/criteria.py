"""CHSH-like operators from noise-averaged correlators, witnesses and verdicts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import IDENTITY4, ChshSettings, chsh_operator, expectation
from .analytic import B0, SEPARABLE_BOUND, gaussian_attenuations
from .montecarlo import McEstimate, McOperator, assemble_avg_correlator, mc_operator_sum
from .pulses import OFF_IDEAL, On, OnStar

PHI = "phi"
PSI = "psi"
MC_NSIGMA = 3.0


def _check_kind(kind: str):
    if kind not in (PHI, PSI):
        raise ValueError(f"kind must be {PHI!r} or {PSI!r}, got {kind!r}")


def setting_pairs(kind: str, on: On, off=OFF_IDEAL):
    """``(a, b, sign)`` terms of the CHSH-like operator.

    Phi: (Off,Off) + (On,Off) + (Off,On) - (On,On).
    Psi: the B-side ``On`` is replaced by ``On*``.
    """
    _check_kind(kind)
    on_b = on if kind == PHI else OnStar(on.omega_p, on.n)
    return [(off, off, 1.0), (on, off, 1.0), (off, on_b, 1.0), (on, on_b, -1.0)]


def chsh_like_operator(kind: str, off_off, on_off, off_on, on_on) -> np.ndarray:
    """Signed sum of the four averaged correlators.

    For ``kind="psi"`` the last two arguments are the (Off,On*) and
    (On,On*) correlators.
    """
    _check_kind(kind)
    return off_off + on_off + off_on - on_on


def chsh_like_from_attenuations(kind: str, attenuations, on: On, off=OFF_IDEAL) -> np.ndarray:
    """Build the operator from a callable ``attenuations(a, b) -> AttenuationSet``."""
    ops = [assemble_avg_correlator(attenuations(a, b)) for a, b, _ in setting_pairs(kind, on, off)]
    return chsh_like_operator(kind, *ops)


def gaussian_chsh_like(kind: str, noise, corr, on: On, off=OFF_IDEAL) -> np.ndarray:
    """Exact CHSH-like operator for OU noise."""
    return chsh_like_from_attenuations(kind, lambda a, b: gaussian_attenuations(noise, corr, a, b), on, off)


def mc_chsh_like(kind: str, noise, corr, on: On, n_traj: int, seed: int, off=OFF_IDEAL,
                 workers: int = 1, dt: float | None = None) -> McOperator:
    """Trajectory-averaged CHSH-like operator; all four settings share one noise ensemble."""
    return mc_operator_sum(setting_pairs(kind, on, off), noise, corr, n_traj, seed, workers, dt)


def witness_operator(kind: str, b: np.ndarray) -> np.ndarray:
    """``2*1 -+ B`` for the Phi+-/Psi+- witness classes."""
    if kind in ("phi+", "psi+"):
        return 2.0 * IDENTITY4 - b
    if kind in ("phi-", "psi-"):
        return 2.0 * IDENTITY4 + b
    raise ValueError(f"unknown witness class {kind!r}")


@dataclass(frozen=True)
class Verdict:
    value: float
    threshold: float
    positive: bool
    margin_in_std_errors: float | None = None


def _verdict(value, threshold: float) -> Verdict:
    if isinstance(value, McEstimate):
        excess = abs(value.value) - threshold
        if value.std_error > 0:
            margin = excess / value.std_error
            positive = margin > MC_NSIGMA
        else:
            margin = np.inf if excess > 0 else (-np.inf if excess < 0 else 0.0)
            positive = excess > 0
        return Verdict(value.value, threshold, bool(positive), float(margin))
    return Verdict(float(value), threshold, bool(abs(value) > threshold))


def separability_verdict(value) -> Verdict:
    """``|<B>| > 2`` proves entanglement; Monte Carlo values must clear it by 3 standard errors."""
    return _verdict(value, SEPARABLE_BOUND)


def non_gaussianity_verdict(value) -> Verdict:
    """A Bell-state value above the Gaussian ceiling proves non-Gaussian noise."""
    return _verdict(value, B0)


def standard_chsh_verdict(rho: np.ndarray, settings: ChshSettings) -> Verdict:
    return _verdict(expectation(chsh_operator(settings), rho), SEPARABLE_BOUND)
