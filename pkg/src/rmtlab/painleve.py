"""The sigma-form of Painleve V on the ray s = -i r, r > 0.

With tau(r) = sigma(-i r), a = (g1 + g2) / (2 sqrt2) and E = tau - r tau' - 2 tau'^2,
the purely imaginary parameters turn the sigma-form into the real equation

    r^2 tau''^2 = 4 (tau'^2 - a^2)^2 - E^2.

Solving this for tau'' forces a branch choice at every zero of tau''.  We
integrate its derivative instead,

    r^2 tau''' = 8 tau' (tau'^2 - a^2) + E (r + 4 tau') - r tau'',

which crosses such zeros smoothly and conserves
r^2 tau''^2 - 4 (tau'^2 - a^2)^2 + E^2, so a trajectory started on the
second-order equation stays on it.

Near r = 0 the solution is tau = 2a^2 + B r + (a^2 - B^2) r^2 + ..., with
tau(0) = (g1 + g2)^2 / 4.  The free slope B is found by bisection so that
the large-r behaviour tau ~ -(g1 - g2) / (2 sqrt2) r + (g1 - g2)^2 / 4 holds.
The bisection only targets the slope.  The intercept is read off the same
line fit; the shot trajectories carry a small bounded oscillation about that
line, which limits how closely the fitted intercept can match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import BranchAmbiguity, DomainError, ShootingFailed

RTOL = 1e-10
ATOL = 1e-12
BLOWUP = 1e3


@dataclass(frozen=True)
class SigmaPVSolution:
    gamma1: float
    gamma2: float
    r_grid: np.ndarray
    sigma: np.ndarray
    sigma_prime: np.ndarray
    shooting_param: float

    @property
    def a2(self) -> float:
        return (self.gamma1 + self.gamma2) ** 2 / 8

    def target_slope(self) -> float:
        return -(self.gamma1 - self.gamma2) / (2 * np.sqrt(2))

    def target_intercept(self) -> float:
        return (self.gamma1 - self.gamma2) ** 2 / 4

    def linear_fit(self, start_fraction: float = 0.5) -> tuple[float, float]:
        """Least-squares (slope, intercept) of tau on [start_fraction * r_max, r_max]."""
        keep = self.r_grid >= start_fraction * self.r_grid[-1]
        slope, intercept = np.polyfit(self.r_grid[keep], self.sigma[keep], 1)
        return float(slope), float(intercept)


def _rhs(a2):
    def f(r, y):
        t, tp, tpp = y
        e = t - r * tp - 2 * tp * tp
        return [tp, tpp, (8 * tp * (tp * tp - a2) + e * (r + 4 * tp) - r * tpp) / (r * r)]
    return f


def _blowup(r, y):
    return abs(y[0]) - BLOWUP


_blowup.terminal = True


def _second_deriv_zero(r, y):
    return y[2]


def _initial(a2, B, r0):
    d = a2 - B * B
    return [2 * a2 + B * r0 + d * r0 * r0, B + 2 * d * r0, 2 * d]


def _trajectory(a2, B, r_min, r_max, dense=False):
    events = [_blowup, _second_deriv_zero] if dense else [_blowup]
    return solve_ivp(_rhs(a2), [r_min, r_max], _initial(a2, B, r_min), method="DOP853",
                     rtol=RTOL, atol=ATOL, dense_output=True, events=events)


def _admissible(sol, r_max, slope_bound):
    if sol.status != 0 or sol.t[-1] < r_max:
        return False
    r = np.linspace(sol.t[0], r_max, 400)
    return bool(np.all(np.abs(sol.sol(r)[0]) <= 10 * (1 + slope_bound * r)))


def _fit_slope(sol, r_max):
    r = np.linspace(r_max / 2, r_max, 400)
    return float(np.polyfit(r, sol.sol(r)[0], 1)[0])


def integrate_sigma_pv(gamma1: float, gamma2: float, r_min: float = 1e-3, r_max: float = 40.0,
                       bracket: tuple[float, float] = (-1.0, 1.0), tol: float = 1e-11,
                       step: float = 0.0015) -> SigmaPVSolution:
    if not (0 < r_min < 1 < r_max):
        raise DomainError("need 0 < r_min < 1 < r_max")
    if gamma1 == gamma2:
        raise DomainError("gamma1 == gamma2 gives no large-r slope to shoot for")
    a2 = (gamma1 + gamma2) ** 2 / 8
    target = -(gamma1 - gamma2) / (2 * np.sqrt(2))
    bound = 2 * abs(target) + 1

    def excess(B):
        # trajectories that blow up or leave the linear envelope count as too low
        sol = _trajectory(a2, B, r_min, r_max)
        if not _admissible(sol, r_max, bound):
            return -np.inf
        return _fit_slope(sol, r_max) - target

    lo, hi = bracket
    d_lo, d_hi = excess(lo), excess(hi)
    for _ in range(12):
        if d_lo < 0 < d_hi:
            break
        width = hi - lo
        if d_hi <= 0:
            lo, d_lo, hi = hi, d_hi, hi + width
            d_hi = excess(hi)
        else:
            hi, d_hi, lo = lo, d_lo, lo - width
            d_lo = excess(lo)
    else:
        raise ShootingFailed(f"no sign change of the slope excess in [{lo}, {hi}]")

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    B = hi  # the upper end is always admissible

    sol = _trajectory(a2, B, r_min, r_max, dense=True)
    if sol.status != 0:
        raise ShootingFailed("accepted trajectory did not reach r_max")
    f = _rhs(a2)
    for r, y in zip(sol.t_events[1], sol.y_events[1]):
        if abs(f(r, y)[2]) < 1e-8:
            raise BranchAmbiguity(f"tau'' and tau''' vanish together near r = {r:.6g}")
    r = output_grid(r_min, r_max, step)
    y = sol.sol(r)
    return SigmaPVSolution(float(gamma1), float(gamma2), r, y[0], y[1], float(B))


def output_grid(r_min: float, r_max: float, step: float) -> np.ndarray:
    """Geometric below r = 1, uniform with spacing ``step`` above."""
    inner = np.geomspace(r_min, 1.0, 2000)
    outer = np.linspace(1.0, r_max, int(np.ceil((r_max - 1.0) / step)) + 1)
    return np.concatenate([inner[:-1], outer])


def residual(solution: SigmaPVSolution) -> float:
    """max over the grid of |r^2 tau''^2 - 4 (tau'^2 - a^2)^2 + E^2| with spline derivatives."""
    return float(np.max(np.abs(residual_profile(solution))))


def residual_profile(solution: SigmaPVSolution) -> np.ndarray:
    r = solution.r_grid
    spline = CubicSpline(r, solution.sigma)
    t, tp, tpp = spline(r), spline(r, 1), spline(r, 2)
    a2 = solution.a2
    e = t - r * tp - 2 * tp * tp
    return r * r * tpp * tpp - 4 * (tp * tp - a2) ** 2 + e * e


def constant_candidate(gamma1: float, gamma2: float, r_grid, value: float | None = None) -> SigmaPVSolution:
    """tau held constant, by default at its r -> 0 value (g1 + g2)^2 / 4.

    With tau' = tau'' = 0 the equation reduces to tau^2 = 4 a^4, so the default
    constant solves it exactly; every other constant leaves a residual
    |value^2 - 4 a^4|.
    """
    r = np.asarray(r_grid, dtype=float)
    c = (gamma1 + gamma2) ** 2 / 4 if value is None else float(value)
    return SigmaPVSolution(float(gamma1), float(gamma2), r, np.full_like(r, c), np.zeros_like(r), float("nan"))
