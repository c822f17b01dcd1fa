import numpy as np
import pytest

from roughwave.errors import ValidationError
from roughwave.hilbert import (
    HurstParams,
    SampledFunction,
    gagliardo_form,
    increment_cov,
    make_params,
    rh_cov,
    spectral_form,
    step_inner_exact,
)

P35 = make_params(0.35)


def test_make_params_constants():
    # C_H = H(1-2H)/2 by direct evaluation
    assert P35.C_H == pytest.approx(0.0525, abs=1e-12)
    # c_H = Gamma(1.7) sin(0.35 pi) / (2 pi), frozen from a gamma-function oracle
    assert P35.c_H == pytest.approx(0.12885232561538923, rel=1e-12)


@pytest.mark.parametrize("bad", [0.25, 0.5, 0.1, 0.7, -0.3])
def test_make_params_rejects_boundary_and_outside(bad):
    with pytest.raises(ValidationError, match="1/4, 1/2"):
        make_params(bad)


def test_rh_cov_values():
    assert rh_cov(1.0, 1.0, P35) == pytest.approx(1.0)
    assert rh_cov(1.0, 0.0, P35) == 0.0
    assert rh_cov(1.0, 2.0, P35) == pytest.approx(0.8122523963562354, rel=1e-12)


def test_increment_cov_values():
    p50 = HurstParams.__new__(HurstParams)  # H=0.5 only for the Brownian sanity value
    object.__setattr__(p50, "H", 0.5)
    assert increment_cov(0, 1, 1, 2, p50) == pytest.approx(0.0, abs=1e-15)
    assert increment_cov(3, 4, 3, 4, P35) == pytest.approx(1.0)
    assert increment_cov(0, 1, 1, 2, P35) == pytest.approx(-0.18774760364376453, rel=1e-12)
    with pytest.raises(ValidationError):
        increment_cov(1, 0, 0, 1, P35)


def test_increment_cov_disjoint_negative_randomized():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = rng.uniform(-5, 5)
        b = a + rng.uniform(0.01, 3)
        c = b + rng.uniform(0.001, 4)
        d = c + rng.uniform(0.01, 3)
        H = rng.uniform(0.2505, 0.4995)
        assert increment_cov(a, b, c, d, make_params(H)) <= 1e-14


def test_gagliardo_indicator_norms():
    z = SampledFunction(0.0, 0.25, np.zeros(4))
    assert gagliardo_form(z, z, P35) == 0.0
    one = SampledFunction.indicator(0.0, 1.0, 16)
    assert gagliardo_form(one, one, P35) == pytest.approx(1.0, abs=1e-4)
    lam = SampledFunction.indicator(0.0, 0.5, 8)
    assert gagliardo_form(lam, lam, P35) == pytest.approx(0.5**0.7, abs=1e-4)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0, 2.0])
def test_gagliardo_scaling_law(lam):
    f = SampledFunction.indicator(0.0, lam, 8)
    assert gagliardo_form(f, f, P35) == pytest.approx(lam ** (2 * 0.35), rel=1e-10)


def test_gagliardo_shift_invariance():
    f = SampledFunction(0.0, 0.125, np.array([1.0, -2.0, 0.5, 0.5, 3.0]))
    g = SampledFunction(0.25, 0.125, np.array([2.0, 1.0, -1.0]))
    a = 13 * 0.125
    fs = SampledFunction(f.x0 + a, f.h, f.values)
    gs = SampledFunction(g.x0 + a, g.h, g.values)
    assert gagliardo_form(fs, gs, P35) == pytest.approx(gagliardo_form(f, g, P35), rel=1e-12)


def test_spectral_matches_exact_and_gagliardo():
    one = SampledFunction.indicator(0.0, 1.0, 4)
    val = spectral_form(one, one, P35)
    assert val == pytest.approx(1.0, abs=1e-3)
    f = SampledFunction.indicator(0.0, 1.0, 4)
    g = SampledFunction.indicator(1.0, 2.0, 4)
    # must agree with the exact increment covariance of adjacent unit cells
    assert spectral_form(f, g, P35) == pytest.approx(-0.18774760364376453, abs=1e-3)


def test_three_way_agreement_randomized():
    rng = np.random.default_rng(42)
    h = 0.25
    for _ in range(10):
        nf, ng = rng.integers(2, 9, size=2)
        f = SampledFunction(h * rng.integers(-8, 4), h, rng.uniform(-1, 1, nf).round(2))
        g = SampledFunction(h * rng.integers(-8, 4), h, rng.uniform(-1, 1, ng).round(2))
        exact = step_inner_exact(f, g, P35)
        gag = gagliardo_form(f, g, P35)
        spec = spectral_form(f, g, P35)
        tol = 1e-3 * (1 + abs(exact))
        assert abs(gag - exact) < tol
        assert abs(spec - exact) < tol
        assert abs(spec - gag) < tol


def test_step_inner_exact_matches_rh_cov():
    # <1_[0,x], 1_[0,y]> = R_H(x, y)
    f = SampledFunction.indicator(0.0, 1.5, 6)
    g = SampledFunction.indicator(0.0, 0.75, 3)
    assert step_inner_exact(f, g, P35) == pytest.approx(rh_cov(1.5, 0.75, P35), rel=1e-12)


def test_spectral_form_reports_tail_and_raises():
    from roughwave.errors import NumericError

    f = SampledFunction.indicator(0.0, 1.0, 2)
    val, tail = spectral_form(f, f, P35, full_output=True)
    assert tail >= 0
    with pytest.raises(NumericError):
        spectral_form(f, f, P35, xi_max=5.0)


def test_sampled_function_validation():
    with pytest.raises(ValidationError):
        SampledFunction(0.0, -0.1, np.ones(3))
    with pytest.raises(ValidationError):
        SampledFunction(0.0, 0.1, np.array([1.0, np.inf]))
    with pytest.raises(ValidationError):
        gagliardo_form(
            SampledFunction(0.0, 0.1, np.ones(2)),
            SampledFunction(0.05, 0.1, np.ones(2)),
            P35,
        )
