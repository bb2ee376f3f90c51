import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import REFERENCE_QOS, random_feasible_instance, snr_power
from nomavlc.allocation import (AllocationResult, QosSpec, allocate_mobility, allocate_sh_baseline,
                                allocate_static, effective_gains, grpa, layer_noise_nodes, minimum_powers,
                                omega_update, printed_gradient, project_budget, rates_approx_nats,
                                recursion_power, stationarity_residual, sum_rate_gradient)
from nomavlc.channel import MobilityModel, lambertian_order
from nomavlc.config import ExperimentConfig
from nomavlc.errors import DomainError, IterationDegeneracyError, OrderingError
from nomavlc.noise import NoiseParams
from nomavlc.rates import expected_rates, rates_sh, rates_static


@pytest.fixture
def static_h():
    return ExperimentConfig().static_gains()


def reference_qos(total):
    return QosSpec(np.array(REFERENCE_QOS), total)


# GRPA ---------------------------------------------------------------------------

def test_grpa_examples():
    assert grpa([2.0], 3.0).powers.tolist() == [3.0]
    np.testing.assert_allclose(grpa([1.5, 1.5, 1.5], 3.0).powers, [1.0, 1.0, 1.0], rtol=1e-15)
    np.testing.assert_allclose(grpa([1.0, 2.0], 1.0).powers, [0.8, 0.2], rtol=1e-15)


def test_grpa_validation():
    with pytest.raises(OrderingError):
        grpa([2.0, 1.0], 1.0)
    with pytest.raises(DomainError):
        grpa([0.0, 1.0], 1.0)


@given(st.lists(st.floats(0.1, 10.0), min_size=1, max_size=8), st.floats(1e-3, 1e4))
def test_grpa_budget_and_order(h, total):
    p = grpa(sorted(h), total).powers
    assert math.fsum(p) == pytest.approx(total, rel=1e-12)
    assert np.all(np.diff(p) <= 1e-12 * total)


# projections ------------------------------------------------------------------------

def test_project_budget_examples():
    np.testing.assert_array_equal(project_budget([0.25, 0.75], 1.0), [0.25, 0.75])
    np.testing.assert_allclose(project_budget(np.zeros(4), 1.0), [0.25] * 4)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.floats(0.1, 100))
def test_project_budget_is_least_squares(p, total):
    p = np.array(p)
    out = project_budget(p, total)
    assert math.fsum(out) == pytest.approx(total, abs=1e-9)
    np.testing.assert_allclose(project_budget(out, total), out, atol=1e-12)
    # least-squares oracle: minimize |x - p| subject to 1'x = total via the KKT system
    U = p.size
    kkt = np.block([[np.eye(U), np.ones((U, 1))], [np.ones((1, U)), np.zeros((1, 1))]])
    ref = np.linalg.solve(kkt, np.concatenate([p, [total]]))[:U]
    np.testing.assert_allclose(out, ref, atol=1e-9)


def test_omega_update_cases():
    U, total = 4, 2.0
    p = np.array([0.3, 0.7, 0.1, 0.9])
    proj = project_budget(p, total)
    # zero bracket
    zero_rhs = (p - p.mean()) + total / U
    np.testing.assert_allclose(omega_update(p, zero_rhs, total), 0.0, atol=1e-15)
    # bracket in the null space
    np.testing.assert_allclose(omega_update(p, zero_rhs + 3.0, total), 0.0, atol=1e-14)
    # zero-mean bracket comes back unchanged and solves the projector system
    b = np.random.default_rng(0).normal(size=U)
    b -= b.mean()
    om = omega_update(p, zero_rhs + b, total)
    np.testing.assert_allclose(om, b, atol=1e-14)
    proj_mat = np.eye(U) - np.ones((U, U)) / U
    np.testing.assert_allclose(proj_mat @ om, b, atol=1e-14)
    assert omega_update(p, proj, total).shape == (U,)


# recursion and gradient ------------------------------------------------------------------

def test_recursion_two_user_formula():
    qos = QosSpec([0.5, 1.0], 10.0)
    quiet = NoiseParams(1.0, 0.0)
    p1 = 3.0
    want = ((2**1.0 - 1) / 2**2.0) / ((2**0.5 - 1) / (2 * p1))
    assert recursion_power(2, [p1, 0.0], qos, quiet) == pytest.approx(want, rel=1e-15)


def test_recursion_beta_raises_power():
    qos = QosSpec([0.5, 1.0, 0.3], 10.0)
    p = [3.0, 2.0, 1.0]
    quiet = NoiseParams(2.0, 0.0)
    loud = NoiseParams(2.0, 0.3)
    for u in (2, 3):
        assert recursion_power(u, p, qos, loud) > recursion_power(u, p, qos, quiet)


def test_recursion_errors():
    qos = QosSpec([0.5, 1.0], 10.0)
    with pytest.raises(DomainError):
        recursion_power(1, [1.0, 1.0], qos, NoiseParams(1.0, 0.0))
    with pytest.raises(IterationDegeneracyError):
        recursion_power(2, [0.0, 1.0], qos, NoiseParams(1.0, 0.0))
    with pytest.raises(IterationDegeneracyError):
        # beta² term swamps the denominator for a tiny P_1
        recursion_power(2, [1e-3, 1.0], qos, NoiseParams(1.0, 0.9))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        U = int(rng.integers(1, 6))
        h = np.sort(rng.uniform(0.5, 4.0, U))
        p = rng.uniform(0.5, 5.0, U)
        noise = NoiseParams(rng.uniform(0.5, 3.0), rng.uniform(0.0, 0.5))
        for u in range(1, U + 1):
            d = 1e-6 * p[u - 1]
            hi, lo = p.copy(), p.copy()
            hi[u - 1] += d
            lo[u - 1] -= d
            fd = (np.sum(rates_approx_nats(hi, h, noise)) - np.sum(rates_approx_nats(lo, h, noise))) / (2 * d)
            assert sum_rate_gradient(u, p, h, noise) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_gradient_first_layer_and_beta_sign():
    h = np.array([1.0, 2.0, 3.0])
    p = np.array([3.0, 2.0, 1.0])
    noise = NoiseParams(2.0, 0.5)
    inter1 = 3.0 + 4.0
    assert sum_rate_gradient(1, p, h, noise) == pytest.approx(1 / (2 * (p[0] + inter1)), rel=1e-15)
    for u in (2, 3):
        assert sum_rate_gradient(u, p, h, noise.with_beta(0.0)) <= sum_rate_gradient(u, p, h, noise)


def test_printed_gradient_differs():
    h, p, noise = np.array([1.0, 2.0]), np.array([3.0, 1.0]), NoiseParams(2.0, 0.5)
    assert printed_gradient(1, p, h, noise) == sum_rate_gradient(1, p, h, noise)
    assert abs(printed_gradient(2, p, h, noise) - sum_rate_gradient(2, p, h, noise)) > 1e-3


# static allocator ----------------------------------------------------------------------------

def test_single_user():
    res = allocate_static([1.3], QosSpec([0.5], 7.0), NoiseParams(2.0, 0.5))
    assert res.powers.powers.tolist() == [7.0]
    assert res.iterations == 1 and res.status == "converged"


def test_qos_size_mismatch(static_h, ref_noise):
    with pytest.raises(DomainError):
        allocate_static(static_h, QosSpec([0.1, 0.2], 100.0), ref_noise)
    with pytest.raises(DomainError):
        allocate_static(static_h, reference_qos(1e4), ref_noise, method="magic")


def test_random_feasible_instances():
    rng = np.random.default_rng(8)
    for _ in range(200):
        h, qos, noise = random_feasible_instance(rng)
        res = allocate_static(h, qos, noise)
        p = res.powers.powers
        assert res.converged and res.iterations <= 10_000
        assert abs(math.fsum(p) - qos.total_power) <= 1e-9
        assert np.all(p >= 0)
        assert np.all(rates_sh(p, h, noise.alpha) >= qos.thresholds - 1e-6)
        assert stationarity_residual(p, h, qos, noise) <= 1e-5


def test_zero_beta_equals_sh_baseline(static_h):
    quiet = NoiseParams(2.0, 0.0)
    qos = reference_qos(snr_power(34, quiet))
    a = allocate_static(static_h, qos, quiet)
    b = allocate_sh_baseline(static_h, qos, quiet)
    np.testing.assert_allclose(a.powers.powers, b.powers.powers, atol=1e-6 * qos.total_power)


def test_infeasible_falls_back_to_budget(static_h, ref_noise):
    qos = reference_qos(snr_power(10, ref_noise))
    assert qos.total_power < np.sum(minimum_powers(static_h, qos, ref_noise.alpha))
    res = allocate_static(static_h, qos, ref_noise)
    assert res.status == "infeasible" and not res.converged
    assert math.fsum(res.powers.powers) == pytest.approx(qos.total_power, abs=1e-9)


def test_minimum_powers_meet_thresholds_exactly(static_h):
    qos = reference_qos(1.0)
    p = minimum_powers(static_h, qos, 2.0)
    np.testing.assert_allclose(rates_sh(p, static_h, 2.0), REFERENCE_QOS, rtol=1e-12)


def test_proposed_dominates_on_static_preset(static_h, ref_noise):
    for snr in range(0, 31, 2):
        qos = reference_qos(snr_power(snr, ref_noise))
        prop = allocate_static(static_h, qos, ref_noise)
        sh = allocate_sh_baseline(static_h, qos, ref_noise)
        g = np.sum(rates_static(grpa(static_h, qos.total_power), static_h, ref_noise))
        assert prop.sum_rate >= g - 1e-9
        assert prop.sum_rate >= sh.sum_rate - 1e-9


def test_recursion_method_runs(static_h, ref_noise):
    qos = reference_qos(snr_power(34, ref_noise))
    res = allocate_static(static_h, qos, ref_noise, method="recursion")
    assert res.method == "recursion"
    assert math.fsum(res.powers.powers) == pytest.approx(qos.total_power, abs=1e-9)
    assert np.all(res.powers.powers >= 0)
    assert "degenerate_steps" in res.diagnostics


def test_allocation_csv(tmp_path, static_h, ref_noise):
    res = allocate_static(static_h, reference_qos(snr_power(34, ref_noise)), ref_noise)
    assert isinstance(res, AllocationResult)
    path = tmp_path / "a.csv"
    res.to_csv(path)
    text = path.read_text().splitlines()
    assert text[0] == "# status=converged"
    body = [ln for ln in text if not ln.startswith("#")]
    assert body[0] == "user,power,achieved_rate_bpcu"
    assert float(body[1].split(",")[1]) == res.powers.powers[0]
    assert len(body) == 5


# mobility allocator ------------------------------------------------------------------------------

def test_layer_noise_nodes_integrate_moments():
    mod = MobilityModel.from_bounds(1.0, 3.0, lambertian_order(math.radians(50)))
    nn, w = layer_noise_nodes(mod, 4, 2.0)
    assert nn.shape == w.shape == (4, 64)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, rtol=1e-14)
    # E[h²] recovered from the nodes matches the effective gains
    mus = np.sum(w * 4.0 / nn, axis=1)
    np.testing.assert_allclose(np.sqrt(mus), effective_gains(mod, 4), rtol=1e-9)


@pytest.mark.parametrize("objective", ["expected", "jensen"])
def test_mobility_tight_support_equals_static(ref_noise, objective):
    c = 2.0
    mod = MobilityModel.from_bounds(c, c * (1 + 1e-6), 1.0)
    qos = QosSpec([0.2, 0.6], snr_power(20, ref_noise))
    mob = allocate_mobility(mod, 2, qos, ref_noise, objective=objective)
    sta = allocate_static(effective_gains(mod, 2), qos, ref_noise)
    np.testing.assert_allclose(mob.powers.powers, sta.powers.powers, atol=1e-6 * qos.total_power)


def test_mobility_widening_changes_allocation(ref_noise):
    m = lambertian_order(math.radians(50))
    qos = reference_qos(snr_power(30, ref_noise))
    a = allocate_mobility(MobilityModel.from_bounds(1.0, 3.0, m), 4, qos, ref_noise)
    b = allocate_mobility(MobilityModel.from_bounds(1.0, 5.0, m), 4, qos, ref_noise)
    assert np.max(np.abs(a.powers.powers - b.powers.powers)) > 1e-3


@pytest.mark.parametrize("hmax, deg", [(3.0, 50), (5.0, 60)])
def test_mobility_expected_objective_dominates(ref_noise, hmax, deg):
    mod = MobilityModel.from_bounds(1.0, hmax, lambertian_order(math.radians(deg)))
    g = effective_gains(mod, 4)
    for snr in range(0, 31, 2):
        qos = reference_qos(snr_power(snr, ref_noise))
        prop = allocate_mobility(mod, 4, qos, ref_noise)
        sh = allocate_mobility(mod, 4, qos, ref_noise, baseline=True)
        grp = np.sum(expected_rates(grpa(g, qos.total_power), ref_noise, mod))
        np.testing.assert_allclose(prop.achieved_rates, expected_rates(prop.powers, ref_noise, mod), rtol=1e-12)
        assert prop.sum_rate >= grp - 1e-9
        assert prop.sum_rate >= sh.sum_rate - 1e-9


@pytest.mark.xfail(strict=True, reason="optimizing the rate at the effective gains (a Jensen proxy) loses to "
                                       "the beta=0 design on the mobility-averaged sum rate above ~10 dB")
def test_mobility_jensen_objective_dominates(ref_noise):
    mod = MobilityModel.from_bounds(1.0, 3.0, lambertian_order(math.radians(50)))
    for snr in range(0, 31, 2):
        qos = reference_qos(snr_power(snr, ref_noise))
        prop = allocate_mobility(mod, 4, qos, ref_noise, objective="jensen")
        sh = allocate_mobility(mod, 4, qos, ref_noise, baseline=True, objective="jensen")
        mean = lambda r: np.sum(expected_rates(r.powers, ref_noise, mod))  # noqa: E731
        assert mean(prop) >= mean(sh) - 1e-9


def test_mobility_bad_objective(ref_noise):
    mod = MobilityModel.from_bounds(1.0, 3.0, 1.0)
    with pytest.raises(DomainError):
        allocate_mobility(mod, 2, QosSpec([0.1, 0.1], 100.0), ref_noise, objective="other")
