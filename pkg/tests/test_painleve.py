import numpy as np
import pytest

import rmtlab.painleve as pv
from rmtlab.errors import BranchAmbiguity, DomainError, ShootingFailed
from rmtlab.painleve import constant_candidate, integrate_sigma_pv, output_grid, residual


@pytest.fixture(scope="module")
def base():
    return integrate_sigma_pv(0.8, 0.2)


def test_small_r_value(base):
    assert base.sigma[0] == pytest.approx(0.25, abs=1e-3)
    assert np.all(np.isfinite(base.sigma))
    assert np.all(np.diff(base.r_grid) > 0)


def test_large_r_line(base):
    slope, intercept = base.linear_fit()
    assert slope == pytest.approx(-0.6 / (2 * np.sqrt(2)), rel=0.02)
    assert intercept == pytest.approx(0.09, rel=0.05)


def test_residual_small(base):
    assert residual(base) < 1e-6


def test_residual_order_under_refinement():
    coarse = integrate_sigma_pv(0.8, 0.2, step=0.01)
    fine = integrate_sigma_pv(0.8, 0.2, step=0.005)
    # cubic-spline second derivatives are second order in the grid step
    assert residual(fine) < 0.5 * residual(coarse)


def test_constant_candidates(base):
    # the small-r value (g1 + g2)^2 / 4 = 2 a^2 is itself a constant solution
    assert residual(constant_candidate(0.8, 0.2, base.r_grid)) == pytest.approx(0.0, abs=1e-14)
    off = constant_candidate(0.8, 0.2, base.r_grid, value=0.3)
    assert residual(off) == pytest.approx(abs(0.3**2 - 4 * (1.0**2 / 8) ** 2), rel=1e-12)
    assert residual(off) > 1e-3


def test_symmetry_probe(base):
    swapped = integrate_sigma_pv(0.2, 0.8)
    assert swapped.linear_fit()[0] == pytest.approx(-base.linear_fit()[0], rel=1e-3)
    assert swapped.sigma[0] == pytest.approx(base.sigma[0], abs=1e-3)


def test_opposite_gammas():
    s = integrate_sigma_pv(0.5, -0.5)
    assert s.sigma[0] == pytest.approx(0.0, abs=1e-3)
    slope, intercept = s.linear_fit()
    assert slope == pytest.approx(-1 / (2 * np.sqrt(2)), rel=0.02)
    assert intercept == pytest.approx(0.25, rel=0.05)


@pytest.mark.parametrize("g1, g2", [(0.5, -0.3), (1.0, 0.4)])
def test_other_pairs_slope_and_residual(g1, g2):
    s = integrate_sigma_pv(g1, g2)
    assert s.linear_fit()[0] == pytest.approx(s.target_slope(), rel=0.02)
    assert s.sigma[0] == pytest.approx((g1 + g2) ** 2 / 4, abs=2e-3)
    assert residual(s) < 1e-6


def test_output_grid_shape():
    r = output_grid(1e-3, 40.0, 0.01)
    assert r[0] == pytest.approx(1e-3) and r[-1] == pytest.approx(40.0)
    assert np.all(np.diff(r) > 0)
    assert np.max(np.diff(r)) <= 0.01 + 1e-12


def test_domain_errors():
    with pytest.raises(DomainError):
        integrate_sigma_pv(0.5, 0.5)
    with pytest.raises(DomainError):
        integrate_sigma_pv(0.8, 0.2, r_min=2.0)


def test_shooting_failure(monkeypatch):
    monkeypatch.setattr(pv, "_admissible", lambda *a: False)
    with pytest.raises(ShootingFailed):
        integrate_sigma_pv(0.8, 0.2)


def test_branch_ambiguity_reported(monkeypatch):
    real_rhs = pv._rhs

    def flat_rhs(a2):
        f = real_rhs(a2)

        def g(r, y):
            out = f(r, y)
            # zero third derivative exactly where tau'' vanishes
            return out if abs(y[2]) > 1e-9 else [out[0], out[1], 0.0]
        return g

    monkeypatch.setattr(pv, "_rhs", flat_rhs)
    with pytest.raises(BranchAmbiguity):
        integrate_sigma_pv(0.8, 0.2)
