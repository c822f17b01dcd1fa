import math

import numpy as np
import pytest
from scipy import integrate

from roughwave.chaos import (
    K2_closed,
    K_trunc,
    beta_int,
    gamma1_closed,
    gamma1_window_average,
    gamma_n,
    kappa_value,
    rho_trunc,
    sin_int,
    sin_int_constant,
    time_simplex_factor,
    write_chaos_table,
)
from roughwave.errors import ValidationError
from roughwave.hilbert import SampledFunction, gagliardo_form, make_params

P35 = make_params(0.35)

# closed form of the sin-integral constant, derived independently of the
# quadrature extraction: C_a = pi / (2^a Gamma(2-a) cos(pi a/2))
CLOSED_C = {
    -0.5: 4.726543602414709,
    0.0: math.pi,
    0.3: 3.1518732489963908,
    0.6: 3.974297912289623,
    0.7: 4.746372660086426,
}


def test_sin_int_classical_value():
    assert sin_int(0.0, 2.0) == pytest.approx(2 * math.pi, rel=1e-9)


@pytest.mark.parametrize("alpha", sorted(CLOSED_C))
def test_sin_int_constant_vs_closed_form(alpha):
    c, err = sin_int_constant(alpha)
    assert c == pytest.approx(CLOSED_C[alpha], rel=1e-9)
    assert err >= 0


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 0.3, 0.7])
@pytest.mark.parametrize("t", [0.5, 2.0, 4.0])
def test_sin_int_scaling_law(alpha, t):
    ratio = sin_int(alpha, t) / sin_int(alpha, 1.0)
    assert ratio == pytest.approx(t ** (1 - alpha), rel=1e-10)


def test_sin_int_validation():
    with pytest.raises(ValidationError):
        sin_int(1.0, 1.0)
    with pytest.raises(ValidationError):
        sin_int(0.3, 0.0)


def test_parseval_constant_identity():
    # c_H * C_{1-2H} = 2^(2H-2): pins the spectral kappa convention
    for H in (0.3, 0.35, 0.45):
        p = make_params(H)
        c, _ = sin_int_constant(1 - 2 * H)
        assert p.c_H * c == pytest.approx(2.0 ** (2 * H - 2), rel=1e-9)


def test_beta_int_examples():
    assert beta_int([0.0], 3.0) == pytest.approx(3.0, rel=1e-14)
    # brute-force simplex quadrature oracle confirms Gamma(2)^2/Gamma(5)
    assert beta_int([1.0, 1.0], 1.0) == pytest.approx(1.0 / 24.0, rel=1e-14)
    assert beta_int([0.5, -0.5], 1.0) == pytest.approx(math.pi / 4.0, rel=1e-12)


def test_beta_int_vs_simplex_brute_force():
    def brute(a1, a2, t):
        def inner(t2):
            v, _ = integrate.quad(lambda t1: (t2 - t1) ** a1, 0, t2)
            return v * (t - t2) ** a2

        v, _ = integrate.quad(inner, 0, t)
        return v

    for alphas, t in (((1.0, 1.0), 1.0), ((0.5, -0.5), 1.0), ((0.4, 2.0), 0.7)):
        assert beta_int(alphas, t) == pytest.approx(brute(*alphas, t), rel=1e-6)


def test_beta_int_validation():
    with pytest.raises(ValidationError):
        beta_int([-1.0, 0.5], 1.0)
    with pytest.raises(ValidationError):
        beta_int([0.5], -1.0)


def test_time_simplex_factor_vs_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(4):
        a, b = rng.uniform(0.05, 6.0, 2)
        t = rng.uniform(0.3, 1.5)
        brute, _ = integrate.dblquad(
            lambda y, x: math.sin(a * x) ** 2 * math.sin(b * y) ** 2,
            0,
            t,
            lambda x: 0,
            lambda x: t - x,
        )
        assert time_simplex_factor(a, b, t) == pytest.approx(brute, rel=1e-10, abs=1e-14)


# ---------------------------------------------------------------------------
# gamma_1


def test_gamma1_zero_frequency_closed_form():
    # kappa * C_{1-2H} t^(2H+1)/(2H+1) with kappa = c_H collapses to
    # 2^(2H-2) t^(2H+1)/(2H+1)
    for t in (0.5, 1.0):
        expect = 2.0 ** (2 * 0.35 - 2) * t ** (1.7) / 1.7
        term = gamma_n(1, t, 0.0, P35)
        assert term.value == pytest.approx(expect, rel=1e-6)
        assert gamma1_closed(t, 0.0, P35) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize(
    "t,x,frozen",
    [
        (1.0, 0.5, 0.0939070610430008),  # adaptive quadrature of the power integrand
        (1.0, 3.0, -0.009055313817168854),
    ],
)
def test_gamma1_frequency_vs_power_oracle(t, x, frozen):
    term = gamma_n(1, t, x, P35)
    assert term.value == pytest.approx(frozen, abs=5e-6)
    assert gamma1_closed(t, x, P35) == pytest.approx(frozen, rel=1e-9)


def test_gamma1_even_and_decaying():
    left = gamma_n(1, 1.0, -0.7, P35).value
    right = gamma_n(1, 1.0, 0.7, P35).value
    assert left == pytest.approx(right, rel=1e-12)
    mags = [abs(gamma1_closed(1.0, x, P35)) for x in (3.0, 6.0, 12.0, 24.0)]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_gamma1_parseval_vs_gagliardo_route():
    """Frequency quadrature against the physical-space Gagliardo evaluation
    C_H int_0^t <G_s(x-.), G_s(.)> ds (midpoint rule in s, exact cell pairing)."""
    t, x = 0.5, 0.25
    n = 48
    total = 0.0
    for i in range(n):
        s = t * (i + 0.5) / n
        m = 64
        h = 2 * s / m
        # align x to the common grid of the two indicator supports
        steps = round(x / h)
        xs = steps * h
        f = SampledFunction(xs - s, h, np.full(m, 0.5))
        g = SampledFunction(-s, h, np.full(m, 0.5))
        total += gagliardo_form(f, g, P35) * (t / n)
    freq = gamma_n(1, t, x, P35).value
    assert freq == pytest.approx(total, rel=2e-3)


# ---------------------------------------------------------------------------
# gamma_2 / gamma_3 and the series


def test_gamma2_against_brute_oracle():
    # frozen from nested adaptive quadrature of the two-frequency integrand
    for t, oracle in ((0.5, 0.0038456097776299976), (1.0, 0.04059002273662243)):
        term = gamma_n(2, t, 0.0, P35)
        assert term.value == pytest.approx(oracle, rel=2e-3)
        assert term.value > 0
        assert term.error < 0.01 * term.value


def test_gamma2_even_in_x():
    a = gamma_n(2, 0.5, 0.4, P35).value
    b = gamma_n(2, 0.5, -0.4, P35).value
    assert a == pytest.approx(b, rel=1e-12)


def test_gamma3_requires_flag():
    with pytest.raises(ValidationError, match="order 3"):
        gamma_n(3, 0.5, 0.0, P35)
    with pytest.raises(ValidationError):
        gamma_n(4, 0.5, 0.0, P35, allow_order3=True)


def test_rho_trunc_series():
    res = rho_trunc(0.5, 0.0, P35, n_max=2)
    direct = gamma_n(1, 0.5, 0.0, P35).value + gamma_n(2, 0.5, 0.0, P35).value / 2
    assert res.value == pytest.approx(direct, rel=1e-12)
    assert res.value > 0
    assert res.tail_estimate >= 0
    with pytest.raises(ValidationError):
        rho_trunc(0.5, 0.0, P35, n_max=5)


def test_rho_positive_at_probed_times():
    for t in (0.25, 0.5, 1.0):
        assert rho_trunc(t, 0.0, P35, n_max=2).value > 0


# ---------------------------------------------------------------------------
# limiting covariance


def test_K2_closed_frozen_values():
    # frozen from the independent nested-quadrature route (rel dev 5e-7)
    assert K2_closed(1.0, P35) == pytest.approx(0.032992401606013994, rel=1e-10)
    assert K2_closed(0.5, P35) == pytest.approx(0.0015627228025999894, rel=1e-10)


def test_K2_positive_and_scaling():
    for H in (0.28, 0.35, 0.42, 0.49):
        p = make_params(H)
        assert K2_closed(1.0, p) > 0
        ratio = K2_closed(2.0, p) / K2_closed(1.0, p)
        assert ratio == pytest.approx(2.0 ** (4 * H + 3), rel=1e-10)


def test_K_trunc_n2_equals_closed_form():
    series = K_trunc(1.0, P35, n_max=2)
    assert series.value == K2_closed(1.0, P35)
    assert math.isnan(series.tail_estimate)


def test_K_trunc_order3_and_monotonicity():
    # K3 grid value sits inside its own refinement band of the independent
    # resolved-panel oracle 1.087e-5 at t=0.5
    s = K_trunc(0.5, P35, n_max=3)
    k3 = s.terms[-1]
    assert k3.order == 3
    assert abs(k3.value - 1.087e-5) <= max(3 * k3.error, 1e-6)
    vals = [K_trunc(t, P35, n_max=3).value for t in (0.25, 0.5, 1.0)]
    assert vals[0] < vals[1] < vals[2]
    assert all(v > 0 for v in vals)


def test_kappa_convention_switch():
    spec = gamma_n(1, 0.5, 0.0, P35, convention="spectral").value
    gag = gamma_n(1, 0.5, 0.0, P35, convention="gagliardo").value
    assert gag / spec == pytest.approx(P35.C_H / P35.c_H, rel=1e-9)
    with pytest.raises(ValidationError):
        kappa_value(P35, "other")


def test_gamma1_window_average_decays(tmp_path):
    vals = [gamma1_window_average(R, 1.0, P35) for R in (10, 20, 40, 80)]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # decay rate ~ R^(2H-1) = R^(-0.3)
    rate = math.log(vals[0] / vals[-1]) / math.log(8.0)
    assert 0.2 < rate < 0.4


def test_write_chaos_table(tmp_path):
    path = tmp_path / "terms.csv"
    n = write_chaos_table(path, P35, [0.5], [0.0, 0.5], n_max=2)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "H,t,x,n,value,error_estimate,kappa_convention"
    assert len(lines) == n + 1
    assert all("spectral" in line for line in lines[1:])
