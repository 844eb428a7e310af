"""Carr-Purcell filter functions and the On / Off / On* control settings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Off passband must sit this many Lorentzian widths (2*pi*gamma) above zero.
OFF_MARGIN = 50.0


@dataclass(frozen=True)
class FilterFunction:
    """Piecewise-constant +-1 square wave on ``[0, duration]``.

    The sign starts at ``initial_sign`` and flips at each entry of
    ``switch_times``. Values are right-continuous at the switches.
    """

    switch_times: tuple[float, ...]
    initial_sign: int
    duration: float

    def __post_init__(self):
        if self.initial_sign not in (1, -1):
            raise ValueError("initial_sign must be +1 or -1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        st = np.asarray(self.switch_times, dtype=float)
        if st.size and (np.any(np.diff(st) <= 0) or st[0] <= 0 or st[-1] >= self.duration):
            raise ValueError("switch times must be strictly increasing inside (0, T)")

    @property
    def n_switches(self) -> int:
        return len(self.switch_times)

    def breakpoints(self) -> np.ndarray:
        """``0, t_1, ..., t_n, T``."""
        return np.concatenate([[0.0], self.switch_times, [self.duration]])

    def signs(self) -> np.ndarray:
        """Sign on each of the ``n + 1`` segments."""
        return self.initial_sign * (-1.0) ** np.arange(self.n_switches + 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flips = np.searchsorted(np.asarray(self.switch_times), t, side="right")
        return self.initial_sign * np.where(flips % 2 == 0, 1, -1)

    def antiderivative(self, t):
        """``F(t) = int_0^t f(s) ds``; exact piecewise-linear interpolation."""
        bp = self.breakpoints()
        cum = np.concatenate([[0.0], np.cumsum(self.signs() * np.diff(bp))])
        return np.interp(t, bp, cum)

    def integral(self) -> float:
        return float(np.sum(self.signs() * np.diff(self.breakpoints())))

    def negated(self) -> FilterFunction:
        return FilterFunction(self.switch_times, -self.initial_sign, self.duration)


class _Decoupled:
    """Marker for an ideally decoupled qubit: its accumulated phase is exactly 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DECOUPLED"

    def __reduce__(self):
        return (_Decoupled, ())


DECOUPLED = _Decoupled()


def carr_purcell(n: int, tau_p: float, leading_flip: bool = False) -> FilterFunction:
    """Filter of an ``n``-pulse CP sequence: pulses at ``tau_p/2 + k*tau_p``, ``T = n*tau_p``."""
    if int(n) != n or n < 1:
        raise ValueError(f"pulse count must be a positive integer, got {n}")
    if not tau_p > 0:
        raise ValueError(f"interpulse delay must be positive, got {tau_p}")
    n = int(n)
    times = tuple(tau_p / 2 + tau_p * k for k in range(n))
    return FilterFunction(times, -1 if leading_flip else 1, n * tau_p)


def filter_value(f: FilterFunction, t: float) -> int:
    if not 0.0 <= t <= f.duration:
        raise ValueError(f"t={t} outside [0, {f.duration}]")
    return int(f(t))


@dataclass(frozen=True)
class OffIdeal:
    """Perfect decoupling; the qubit accumulates no phase."""


@dataclass(frozen=True)
class OffPhysical:
    """Real CP decoupling with its passband far above the noise spectrum.

    ``omega_p`` defaults to the minimum allowed, ``OFF_MARGIN * 2*pi*gamma``.
    ``n`` is only used when no duration is imposed by the partner setting.
    """

    omega_p: float | None = None
    n: int | None = None


@dataclass(frozen=True)
class On:
    omega_p: float
    n: int

    @property
    def tau_p(self) -> float:
        return math.pi / self.omega_p

    @property
    def duration(self) -> float:
        return self.n * self.tau_p


@dataclass(frozen=True)
class OnStar(On):
    """``On`` with an extra leading pi pulse, i.e. the negated filter."""


ControlSetting = OffIdeal | OffPhysical | On | OnStar

OFF_IDEAL = OffIdeal()


def off_frequency_floor(gamma_hint: float) -> float:
    return OFF_MARGIN * 2.0 * math.pi * gamma_hint


def setting_to_filter(setting, gamma_hint: float | None = None, duration: float | None = None):
    """Realize a control setting as a :class:`FilterFunction` or ``DECOUPLED``.

    ``duration`` forces an ``OffPhysical`` sequence to span the same horizon
    as the partner qubit; the pulse count is rounded up so the passband
    stays above the floor.
    """
    if isinstance(setting, OffIdeal):
        return DECOUPLED
    if isinstance(setting, OnStar):
        return carr_purcell(setting.n, setting.tau_p, leading_flip=True)
    if isinstance(setting, On):
        return carr_purcell(setting.n, setting.tau_p)
    if isinstance(setting, OffPhysical):
        if gamma_hint is None or not gamma_hint > 0:
            raise ValueError("OffPhysical needs a positive noise rate hint")
        floor = off_frequency_floor(gamma_hint)
        omega = floor if setting.omega_p is None else setting.omega_p
        if omega < floor:
            raise ValueError(f"Off passband {omega:.4g} is below the required {floor:.4g}")
        if duration is None:
            if setting.n is None:
                raise ValueError("OffPhysical needs a pulse count or an imposed duration")
            return carr_purcell(setting.n, math.pi / omega)
        n = max(1, math.ceil(duration * omega / math.pi - 1e-9))
        return carr_purcell(n, duration / n)
    raise TypeError(f"not a control setting: {setting!r}")
