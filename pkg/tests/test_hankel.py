import math

import mpmath as mp
import numpy as np
import pytest
from numpy.polynomial import chebyshev as C
from scipy import integrate

from rmtlab.counting import CountingField, h_at
from rmtlab.eqmeasure import gue, quartic, solve_equilibrium
from rmtlab.errors import DomainError, EdgeTooClose, NormalizationUnavailable, PrecisionExhausted
from rmtlab.hankel import (
    HankelSpec,
    PolyWeight,
    QuadratureLayout,
    cdf_mp,
    diffid_y_check,
    exp_moment_exact,
    log_exp_moment_exact,
    log_hankel,
    log_ratio,
    ortho_basis,
    predict_merging,
    predict_single_jump,
    predict_smooth_term,
)
from rmtlab.sampler import SamplerJob, run_replicas, sample_gue

JUMP = math.sqrt(2) * math.pi
GUE = solve_equilibrium(gue())


def gaussian_log_det(N):
    # weight exp(-2 N x^2) = exp(-x^2 / (2 s^2)), s^2 = 1/(4N)
    s2 = 1 / (4 * N)
    return N / 2 * math.log(2 * math.pi) + N * N / 2 * math.log(s2) + sum(math.lgamma(k + 1) for k in range(N))


def test_n1_gaussian_integral():
    assert float(log_hankel(HankelSpec(1))) == pytest.approx(math.log(math.sqrt(math.pi / 2)), abs=1e-14)
    with mp.workdps(50):
        assert abs(log_hankel(HankelSpec(1)) - mp.log(mp.sqrt(mp.pi / 2))) < mp.mpf(10) ** -45


def test_n1_single_jump_closed_form():
    x, g = 0.3, 0.5
    with mp.workdps(50):
        phi = mp.ncdf(2 * mp.mpf(x))
        closed = mp.log(mp.sqrt(mp.pi / 2) * (mp.exp(JUMP * mp.mpf(g)) * phi + 1 - phi))
        got = log_hankel(HankelSpec(1, x1=x, x2=x, gamma1=g))
        assert abs(got - closed) < mp.mpf(10) ** -40
    quad = integrate.quad(lambda t: math.exp(-2 * t * t) * (math.exp(JUMP * g) if t <= x else 1.0), -8, 8,
                          points=[x], epsabs=1e-14)[0]
    assert float(got) == pytest.approx(math.log(quad), abs=1e-12)


@pytest.mark.parametrize("N", [2, 5, 9, 14])
def test_gaussian_hankel_closed_form(N):
    assert float(log_hankel(HankelSpec(N))) == pytest.approx(gaussian_log_det(N), abs=1e-10)


def test_jumps_absent_position_invariance():
    with mp.workdps(50):
        a = log_hankel(HankelSpec(6, x1=-0.4, x2=0.7))
        b = log_hankel(HankelSpec(6, x1=0.1, x2=0.2))
        assert abs(a - b) < mp.mpf(10) ** -24


def test_panel_layout_invariance():
    spec = HankelSpec(8, x1=-0.2, x2=0.35, gamma1=0.4, gamma2=-0.3, w=PolyWeight([0, 0.5, 0.2]))
    with mp.workdps(50):
        a = log_hankel(spec)
        b = log_hankel(spec, layout=QuadratureLayout(panel_width=0.17, degree=6))
        assert abs(a - b) < mp.mpf(10) ** -24 * abs(a)


def test_spec_validation():
    with pytest.raises(DomainError):
        HankelSpec(0)
    with pytest.raises(DomainError):
        HankelSpec(3, x1=0.5, x2=0.1)
    with pytest.raises(DomainError):
        HankelSpec(3, x1=-1.0)


def test_precision_retry_and_exhaustion():
    # 20 digits is not enough at N=12; the doubled attempt is
    v20 = log_hankel(HankelSpec(12), 20)
    assert float(v20) == pytest.approx(gaussian_log_det(12), abs=1e-10)
    with pytest.raises(PrecisionExhausted) as info:
        log_hankel(HankelSpec(20), 8)
    assert info.value.condition_digits > 8


def test_ortho_basis_orthonormal_and_kappa_path():
    spec = HankelSpec(8, x1=-0.3, x2=0.2, gamma1=0.5, gamma2=0.3, potential=quartic())
    basis = ortho_basis(spec)
    with mp.workdps(50):
        gram = basis.gram
        err = max(abs(gram[i, j] - (1 if i == j else 0)) for i in range(8) for j in range(8))
        assert err < mp.mpf(10) ** -20
        assert all(k > 0 for k in basis.kappa)
        assert abs(basis.log_det() - log_hankel(spec)) < mp.mpf(10) ** -18


def test_ortho_recurrence():
    basis = ortho_basis(HankelSpec(6, x1=0.1, x2=0.1, gamma1=0.7))
    x = mp.mpf("0.37")
    with mp.workdps(50):
        for k in range(1, 5):
            lhs = x * basis(k, x)
            rhs = basis.a[k + 1] * basis(k + 1, x) + basis.b[k] * basis(k, x) + basis.a[k] * basis(k - 1, x)
            assert abs(lhs - rhs) < mp.mpf(10) ** -30


def test_cdf_mp_matches_float():
    for pot in (gue(), quartic()):
        m = solve_equilibrium(pot)
        for x in (-0.8, 0.0, 0.45):
            assert float(cdf_mp(pot, x)) == pytest.approx(float(m.cdf(x)), abs=1e-14)


def test_exp_moment_examples():
    assert exp_moment_exact(0.3, 0.0, 5) == 1
    with mp.workdps(50):
        closed = mp.exp(-JUMP * mp.mpf("0.25")) * (mp.exp(JUMP * mp.mpf("0.5")) * mp.mpf("0.5") + mp.mpf("0.5"))
        assert abs(exp_moment_exact(0.0, 0.5, 1) - closed) < mp.mpf(10) ** -20
    with pytest.raises(NormalizationUnavailable):
        log_exp_moment_exact(0.0, 0.5, 13)


def test_exp_moment_against_monte_carlo():
    N, x, g = 8, 0.2, 0.7
    exact = float(exp_moment_exact(x, g, N))
    vals = np.array([math.exp(g * h_at(CountingField(s, GUE), x))
                     for s in run_replicas(SamplerJob("gue", N), 40_000, master_seed=77)])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - exact) < 4 * se


def test_heine_identity():
    N = 6
    w = PolyWeight([0.0, 0.3, -0.2])
    with mp.workdps(50):
        exact = float(mp.exp(log_hankel(HankelSpec(N, w=w)) - log_hankel(HankelSpec(N))))
    vals = np.array([math.exp(np.sum(w(sample_gue(N, s).values))) for s in range(40_000)])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - exact) < 4 * se


def test_diffid_position_identity():
    chk = diffid_y_check(HankelSpec(4, x1=-0.3, x2=0.3, gamma1=0.4, gamma2=0.4), 1e-6)
    assert chk.gap < 1e-8
    # the CD kernel is nonnegative, so rhs has the sign of -(1 - e^{sqrt2 pi g2})
    assert chk.rhs * (1 - mp.exp(JUMP * 0.4)) <= 0
    flat = diffid_y_check(HankelSpec(4, x1=-0.3, x2=0.3, gamma1=0.4, gamma2=0.0), 1e-6)
    assert flat.rhs == 0
    assert abs(flat.lhs) < 1e-20
    with pytest.raises(DomainError):
        diffid_y_check(HankelSpec(11, x1=-0.3, x2=0.3), 1e-6)
    with pytest.raises(DomainError):
        diffid_y_check(HankelSpec(4, x1=0.3, x2=0.3), 1e-6)


def test_diffid_with_smooth_weight_and_quartic():
    spec = HankelSpec(5, x1=-0.5, x2=0.1, gamma1=-0.2, gamma2=0.6, w=PolyWeight([0, 0.4]), potential=quartic())
    assert diffid_y_check(spec, 1e-6).gap < 1e-8


def test_predictions_vanish_trivially():
    assert predict_single_jump(0.2, 0.0, 10, GUE) == 0.0
    assert predict_merging(-0.1, 0.1, 0.5, 0.0, 10, GUE) == 0.0
    assert predict_smooth_term(0.0, 0.0, 0.0, 0.0, lambda t: 0 * t, 10, GUE) == 0.0
    with pytest.raises(EdgeTooClose):
        predict_single_jump(0.9, 0.5, 8, GUE)


def _single_drift(x, g, N):
    exact = float(log_hankel(HankelSpec(N, x1=x, x2=x, gamma1=g)) - log_hankel(HankelSpec(N)))
    return exact - predict_single_jump(x, g, N, GUE)


def test_single_jump_drift_bands():
    d = [_single_drift(x, 0.6, 10) for x in (-0.5, 0.0, 0.5)]
    assert max(d) - min(d) < 1.5
    assert abs(_single_drift(0.3, 0.6, 8) - _single_drift(0.3, 0.6, 12)) < 1.0


def _merging_drift(x1, x2, g1, g2, N):
    exact = float(log_hankel(HankelSpec(N, x1=x1, x2=x2, gamma1=g1, gamma2=g2))
                  - log_hankel(HankelSpec(N, x1=x1, x2=x1, gamma1=g1 + g2)))
    return exact - predict_merging(x1, x2, g1, g2, N, GUE)


def test_merging_drift_bands():
    N = 8
    d = [_merging_drift(-0.1, -0.1 + sep, 0.5, 0.5, N) for sep in (1 / (2 * N), 2 / N, 0.2)]
    assert max(d) - min(d) < 1.5
    d = [_merging_drift(-0.1, 0.1, 0.5, 0.5, n) for n in (6, 8, 10, 12)]
    assert max(d) - min(d) < 1.5
    assert _merging_drift(-0.1, 0.1, 0.5, 0.0, 8) == pytest.approx(0.0, abs=1e-12)


def test_smooth_term_linear_w():
    assert predict_smooth_term(0.0, 0.0, 0.0, 0.0, lambda t: t, 10, GUE) == pytest.approx(0.125, abs=1e-12)
    for N in (6, 10, 14):
        assert log_ratio(HankelSpec(N, w=PolyWeight([0, 1]))) == pytest.approx(0.125, abs=0.05)


def test_smooth_term_with_jump():
    t2 = C.Chebyshev.basis(2)
    pred_extra = 0.4 / math.sqrt(2) * math.sqrt(1 - 0.09) * -0.6
    base = predict_smooth_term(0.3, 0.3, 0.4, 0.0, t2, 10, GUE) - predict_smooth_term(0.3, 0.3, 0.0, 0.0, t2, 10, GUE)
    assert base == pytest.approx(pred_extra, abs=1e-10)
    w = PolyWeight([-1, 0, 2])
    drift = [log_ratio(HankelSpec(N, x1=0.3, x2=0.3, gamma1=0.4, w=w))
             - predict_smooth_term(0.3, 0.3, 0.4, 0.0, t2, N, GUE) for N in (6, 8, 10, 12, 14)]
    assert max(drift) - min(drift) < 1.5


def test_poly_weight_types():
    w = PolyWeight([1, 2, 3])
    assert w(2.0) == 17.0
    assert np.allclose(w(np.array([0.0, 1.0])), [1, 6])
    assert w(mp.mpf(2)) == 17
    assert w == PolyWeight([1.0, 2.0, 3.0]) and hash(w) == hash(PolyWeight([1, 2, 3]))


def test_exp_moment_is_finite_for_negative_gamma():
    v = float(exp_moment_exact(-0.4, -0.8, 6))
    assert v > 0 and math.isfinite(v)
