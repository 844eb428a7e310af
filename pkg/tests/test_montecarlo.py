import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from dephase_witness.algebra import (
    IDENTITY4,
    PAULI_XX,
    PAULI_YY,
    bell_state,
    expectation,
    random_density_matrix,
)
from dephase_witness.analytic import gaussian_attenuation_quadrature
from dephase_witness.montecarlo import (
    BLOCK_SIZE,
    AttenuationSet,
    DeepDecoherenceWarning,
    McEstimate,
    OddCumulantError,
    PhasePair,
    accumulate_phase,
    assemble_avg_correlator,
    attenuations_from_phases,
    default_dt,
    estimate_attenuations,
    interpolant_weights,
    mc_average_correlator,
    mc_operator_sum,
    per_trajectory_correlator,
    resolve_filters,
    simulate_phases,
)
from dephase_witness.noise import (
    INDEPENDENT,
    PERFECT,
    OuBatch,
    OuParams,
    RtnBatch,
    RtnParams,
    SharedFraction,
    UnsupportedCombinationError,
    sample_rtn,
)
from dephase_witness.pulses import DECOUPLED, OFF_IDEAL, OffPhysical, On, OnStar, carr_purcell

OU = OuParams(1.0, 1.0)
ON = On(math.pi, 2)


def _local_chi(noise, setting):
    (f,), _ = resolve_filters([setting], noise)
    return gaussian_attenuation_quadrature(f, f, noise, "A")


# phase accumulation

def test_constant_noise_gives_zero_phase():
    for n, tau in ((1, 1.0), (2, 0.5), (7, 0.3)):
        f = carr_purcell(n, tau)
        ou = OuBatch(np.full((3, 2001), 2.5), f.duration / 2000, f.duration)
        assert np.max(np.abs(accumulate_phase(f, ou))) < 1e-12
        rtn = RtnBatch(np.full((3, 1), np.inf), np.array([1.0, -1.0, 1.0]), 2.5, f.duration)
        assert np.max(np.abs(accumulate_phase(f, rtn))) < 1e-12


def test_decoupled_gives_zero(rng):
    batch = sample_rtn(RtnParams(3.0, 1.0), 2.0, rng, 10)
    assert np.array_equal(accumulate_phase(DECOUPLED, batch), np.zeros(10))


def test_sine_drive_matches_quadrature():
    for n, omega in ((2, math.pi), (4, 2.0), (3, 7.5)):
        f = carr_purcell(n, math.pi / omega)
        T = f.duration
        m = 40_001
        t = np.linspace(0, T, m)
        batch = OuBatch(np.sin(omega * t)[None, :], T / (m - 1), T)
        got = accumulate_phase(f, batch)[0]
        bp = f.breakpoints()
        oracle = sum(
            s * quad(lambda u: math.sin(omega * u), lo, hi)[0]
            for s, lo, hi in zip(f.signs(), bp[:-1], bp[1:])
        )
        assert got == pytest.approx(oracle, abs=1e-8)


def test_interpolant_weights_exact_for_off_grid_switches(rng):
    f = carr_purcell(3, 0.37)
    m = 113
    dt = f.duration / (m - 1)
    x = rng.normal(size=m)
    grid = dt * np.arange(m)
    knots = np.union1d(grid, f.breakpoints())
    xs = np.interp(knots, grid, x)
    mid = 0.5 * (knots[:-1] + knots[1:])
    oracle = np.sum(f(mid) * 0.5 * (xs[:-1] + xs[1:]) * np.diff(knots))
    assert interpolant_weights(f, dt, m) @ x == pytest.approx(oracle, abs=1e-12)


def test_rtn_phase_matches_segment_oracle(rng):
    f = carr_purcell(3, 0.8)
    batch = sample_rtn(RtnParams(1.3, 2.0), f.duration, rng, 200)
    got = accumulate_phase(f, batch)
    for i in range(200):
        sw = batch.switch_times[i][np.isfinite(batch.switch_times[i])]
        knots = np.union1d(np.concatenate([[0.0], sw, [f.duration]]), f.breakpoints())
        mid = 0.5 * (knots[:-1] + knots[1:])
        xi = batch.v * batch.initial_sign[i] * (-1.0) ** np.searchsorted(sw, mid)
        assert got[i] == pytest.approx(np.sum(f(mid) * xi * np.diff(knots)), abs=1e-12)


def test_horizon_mismatch_rejected(rng):
    f = carr_purcell(2, 1.0)
    with pytest.raises(ValueError):
        accumulate_phase(f, sample_rtn(RtnParams(1.0, 1.0), 3.0, rng, 2))
    with pytest.raises(ValueError):
        accumulate_phase(f, OuBatch(np.zeros((1, 11)), 0.1, 1.0))
    with pytest.raises(TypeError):
        accumulate_phase(f, np.zeros((1, 11)))


def test_mismatched_on_settings_rejected():
    with pytest.raises(ValueError):
        resolve_filters([On(1.0, 2), On(1.0, 4)], OU)


# per-trajectory correlator

def test_per_trajectory_correlator(rng):
    phi = bell_state("phi+")
    assert per_trajectory_correlator(phi, PhasePair(0.0, 0.0)) == pytest.approx(1.0)
    for a, b in rng.uniform(-5, 5, size=(20, 2)):
        assert per_trajectory_correlator(phi, PhasePair(a, b)) == pytest.approx(math.cos(a + b), abs=1e-12)
        assert abs(per_trajectory_correlator(IDENTITY4 / 4, PhasePair(a, b))) < 1e-12


# averaged correlator

def test_off_off_is_deterministic():
    est = mc_average_correlator(bell_state("phi+"), OU, PERFECT, OFF_IDEAL, OFF_IDEAL, 2000, seed=1)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert est.std_error < 1e-12


def test_perfect_ou_on_on():
    chi = _local_chi(OU, ON)
    est = mc_average_correlator(bell_state("phi+"), OU, PERFECT, ON, ON, 100_000, seed=2)
    assert abs(est.value - math.exp(-4 * chi)) <= 3 * est.std_error


def test_independent_ou_on_on():
    chi = _local_chi(OU, ON)
    est = mc_average_correlator(bell_state("phi+"), OU, INDEPENDENT, ON, ON, 100_000, seed=3)
    assert abs(est.value - math.exp(-2 * chi)) <= 3 * est.std_error


def test_minimum_trajectory_count():
    with pytest.raises(ValueError):
        mc_average_correlator(bell_state("phi+"), OU, PERFECT, ON, ON, 999, seed=1)
    with pytest.raises(ValueError):
        estimate_attenuations(OU, PERFECT, ON, ON, 10, seed=1)
    with pytest.raises(ValueError):
        simulate_phases(OU, PERFECT, [ON], [ON], 0, seed=1)


def test_unsupported_combination_propagates():
    with pytest.raises(UnsupportedCombinationError):
        mc_average_correlator(bell_state("phi+"), RtnParams(1, 1), SharedFraction(0.5), ON, ON, 1000, seed=1)


def test_mc_estimate_from_samples():
    x = np.array([1.0, 2.0, 4.0, 5.0])
    est = McEstimate.from_samples(x, seed=9)
    assert est.value == 3.0
    assert est.std_error == pytest.approx(np.std(x, ddof=1) / 2)
    assert est.n_trajectories == 4 and est.master_seed == 9


def test_batched_expectations_agree_with_direct(rng):
    op = mc_operator_sum([(ON, ON, 1.0), (OFF_IDEAL, ON, 1.0)], OU, PERFECT, 5000, seed=4)
    states = [random_density_matrix(rng) for _ in range(5)]
    for rho, est in zip(states, op.expectations(states)):
        direct = op.expectation(rho)
        assert est.value == pytest.approx(direct.value, abs=1e-12)
        assert est.std_error == pytest.approx(direct.std_error, rel=1e-9)
        assert expectation(op.operator(), rho) == pytest.approx(direct.value, abs=1e-12)


# attenuations

def test_zero_noise_attenuations():
    chi = estimate_attenuations(OuParams(0.0, 1.0), PERFECT, ON, ON, 1000, seed=1)
    for name in ("chi_a", "chi_b", "chi_curly", "chi_square", "chi_ab"):
        assert getattr(chi, name) == 0.0


def test_perfect_ou_attenuations_follow_gaussian_block():
    exact = _local_chi(OU, ON)
    chi = estimate_attenuations(OU, PERFECT, ON, ON, 100_000, seed=6)
    se = chi.std_errors
    assert abs(chi.chi_a - exact) <= 3 * se["chi_a"]
    assert abs(chi.chi_b - exact) <= 3 * se["chi_b"]
    assert abs(chi.chi_curly - exact) <= 3 * se["chi_curly"]
    assert abs(chi.chi_square + exact) <= 3 * se["chi_square"]
    assert abs(chi.chi_ab - exact) <= 3 * se["chi_ab"]


def test_independent_attenuations_vanish():
    chi = estimate_attenuations(OU, INDEPENDENT, ON, ON, 100_000, seed=7)
    assert abs(chi.chi_curly) <= 3 * chi.std_errors["chi_curly"]
    assert abs(chi.chi_square) <= 3 * chi.std_errors["chi_square"]


def test_gaussian_quadrature_matches_phase_variance():
    exact = _local_chi(OU, ON)
    alphas, _ = simulate_phases(OU, PERFECT, [ON], [OFF_IDEAL], 100_000, seed=8)
    half_sq = 0.5 * alphas[0] ** 2
    se = half_sq.std(ddof=1) / math.sqrt(len(half_sq))
    assert abs(half_sq.mean() - exact) <= 3 * se


def test_realness_violation_raises(rng):
    alpha = 0.4 + 0.3 * rng.normal(size=5000)
    with pytest.raises(OddCumulantError, match="alpha"):
        attenuations_from_phases(alpha, np.zeros(5000))


def test_skewed_zero_mean_phase_is_caught(rng):
    # zero mean but a third cumulant: <sin> = Im exp(-i)/(1-i) != 0
    alpha = rng.exponential(size=20_000) - 1.0
    with pytest.raises(OddCumulantError):
        attenuations_from_phases(alpha, np.zeros(20_000))


def test_deep_decoherence_warns(rng):
    alpha = 50.0 * rng.normal(size=5000)
    with pytest.warns(DeepDecoherenceWarning):
        chi = attenuations_from_phases(alpha, np.zeros(5000), realness_nsigma=1e9)
    assert math.isinf(chi.chi_a)


def test_assemble_examples():
    zero = AttenuationSet(0.0, 0.0, 0.0, 0.0, 0.0)
    assert np.allclose(assemble_avg_correlator(zero), PAULI_XX)
    x = 0.37
    assert np.allclose(assemble_avg_correlator(AttenuationSet(x, 0, 0, 0, 0)), math.exp(-x) * PAULI_XX)
    gauss = assemble_avg_correlator(AttenuationSet(x, x, x, -x, x))
    expected = (PAULI_XX + PAULI_YY) / 2 + math.exp(-4 * x) * (PAULI_XX - PAULI_YY) / 2
    assert np.allclose(gauss, expected)


def test_swapped_set():
    s = AttenuationSet(0.1, 0.2, 0.3, -0.4, 0.5, {"chi_curly": 1.0, "chi_square": 2.0})
    t = s.swapped()
    assert (t.chi_curly, t.chi_square, t.chi_ab) == (-0.4, 0.3, -0.5)
    assert t.std_errors == {"chi_curly": 2.0, "chi_square": 1.0}


CONSISTENCY_GRID = [
    (OU, PERFECT, ON),
    (OU, SharedFraction(0.4), ON),
    (OU, INDEPENDENT, ON),
    (RtnParams(0.5, 1.0), PERFECT, On(1.5, 2)),
    (RtnParams(2.0, 1.0), INDEPENDENT, On(3.0, 4)),
]


@pytest.mark.parametrize("noise,corr,on", CONSISTENCY_GRID)
def test_mc_matches_assembled_operator(noise, corr, on, rng):
    states = [bell_state("phi+"), bell_state("psi-"), random_density_matrix(rng)]
    star = OnStar(on.omega_p, on.n)
    for k, (a, b) in enumerate([(on, on), (on, star), (on, OFF_IDEAL), (OFF_IDEAL, on)]):
        alphas, betas = simulate_phases(noise, corr, [a], [b], 50_000, seed=100 + k)
        op = assemble_avg_correlator(attenuations_from_phases(alphas[0], betas[0]))
        direct = mc_operator_sum([(a, b, 1.0)], noise, corr, 50_000, seed=200 + k).expectations(states)
        for rho, est in zip(states, direct):
            # the assembled value is an average of c1 cos(a-b) + c2 cos(a+b)
            c1 = expectation((PAULI_XX + PAULI_YY) / 2, rho)
            c2 = expectation((PAULI_XX - PAULI_YY) / 2, rho)
            per = c1 * np.cos(alphas[0] - betas[0]) + c2 * np.cos(alphas[0] + betas[0])
            se_op = per.std(ddof=1) / math.sqrt(len(per))
            combined = math.hypot(est.std_error, se_op)
            assert abs(est.value - expectation(op, rho)) <= 3 * combined + 1e-12


@pytest.mark.parametrize("noise,corr,on", CONSISTENCY_GRID)
def test_on_star_swaps_nonlocal_attenuations(noise, corr, on):
    plain = estimate_attenuations(noise, corr, on, on, 50_000, seed=31)
    star = estimate_attenuations(noise, corr, on, OnStar(on.omega_p, on.n), 50_000, seed=32)
    tol_1 = 3 * math.hypot(plain.std_errors["chi_curly"], star.std_errors["chi_square"])
    tol_2 = 3 * math.hypot(plain.std_errors["chi_square"], star.std_errors["chi_curly"])
    assert abs(star.chi_square - plain.chi_curly) <= tol_1 + 1e-12
    assert abs(star.chi_curly - plain.chi_square) <= tol_2 + 1e-12


def test_on_star_swap_is_exact_on_common_numbers():
    on = On(2.0, 2)
    plain = estimate_attenuations(OU, SharedFraction(0.6), on, on, 5000, seed=41)
    star = estimate_attenuations(OU, SharedFraction(0.6), on, OnStar(2.0, 2), 5000, seed=41)
    assert star.chi_curly == pytest.approx(plain.chi_square, abs=1e-12)
    assert star.chi_square == pytest.approx(plain.chi_curly, abs=1e-12)


def test_standard_error_scaling():
    errors = []
    for n in (1_000, 10_000, 100_000):
        est = mc_average_correlator(bell_state("phi+"), OU, PERFECT, ON, ON, n, seed=77)
        errors.append(est.std_error * math.sqrt(n))
    assert max(errors) / min(errors) < 1.5


def test_worker_count_does_not_change_results():
    n = 12 * BLOCK_SIZE + 17
    ref = mc_operator_sum([(ON, ON, 1.0), (ON, OFF_IDEAL, -1.0)], OU, SharedFraction(0.5), n, seed=99).samples
    for workers in (4, 16):
        other = mc_operator_sum([(ON, ON, 1.0), (ON, OFF_IDEAL, -1.0)], OU, SharedFraction(0.5), n, seed=99,
                                workers=workers).samples
        assert np.array_equal(ref, other)
    a1, _ = simulate_phases(RtnParams(1.0, 1.0), PERFECT, [ON], [ON], n, seed=5)
    a4, _ = simulate_phases(RtnParams(1.0, 1.0), PERFECT, [ON], [ON], n, seed=5, workers=4)
    assert np.array_equal(a1, a4)


def test_ou_discretization_bias_is_negligible():
    """Exact variance of the discretized phase versus the continuous-time value."""
    for noise, on in ((OU, ON), (OuParams(1.0, 0.2), On(3.0, 4)), (OuParams(1.0, 5.0), On(1.0, 2))):
        (f,), T = resolve_filters([on], noise)
        exact = gaussian_attenuation_quadrature(f, f, noise, "A")
        biases = []
        for dt in (default_dt(noise, T, [f]), default_dt(noise, T, [f]) / 2):
            m = int(round(T / dt)) + 1
            w = interpolant_weights(f, dt, m)
            k = np.arange(m)
            cov = noise.sigma**2 * np.exp(-np.abs(k[:, None] - k[None, :]) * dt / noise.tau_c)
            biases.append(abs(0.5 * w @ cov @ w - exact))
        chi = estimate_attenuations(noise, PERFECT, on, OFF_IDEAL, 100_000, seed=3)
        assert biases[0] < 0.1 * chi.std_errors["chi_a"]
        assert biases[1] < biases[0] / 3


def test_off_physical_in_pipeline():
    rtn = RtnParams(0.1, 0.1)
    on = On(0.3, 2)
    chi = estimate_attenuations(rtn, PERFECT, OffPhysical(), on, 20_000, seed=12)
    assert chi.chi_a < 1e-3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_phases(OU, PERFECT, [OffPhysical()], [ON], 1000, seed=1)
