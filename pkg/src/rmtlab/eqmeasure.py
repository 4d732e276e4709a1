"""One-cut potentials on [-1, 1] and their equilibrium measures.

A potential is stored as a polynomial V.  Its derivative has the Chebyshev
expansion V'(x) = sum_k c_k T_k(x); when the support is exactly [-1, 1] the
equilibrium density is

    dmu/dx = psi(x) sqrt(1 - x^2),   psi = (1 / 2 pi) sum_{k>=1} c_k U_{k-1},

so solving for the measure is a change of basis.  Everything downstream works
in the angle variable x = cos(theta), where the CDF is a trigonometric
polynomial and the edge singularities disappear.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

from .errors import BadNormalization, CrossCheckFailure, DomainError, NotOneCut

log = logging.getLogger(__name__)

SUPPORT_C1 = 4.0


@dataclass(frozen=True)
class Potential:
    """Polynomial confining potential.

    ``poly`` holds monomial coefficients of V in ascending order.  Evaluation
    uses Horner's rule so that it also works on ``mpmath.mpf`` inputs.
    """

    name: str
    poly: tuple

    def evaluate(self, x):
        acc = 0 * x
        for coef in reversed(self.poly):
            acc = acc * x + coef
        return acc

    __call__ = evaluate

    def derivative(self, x):
        dpoly = P.polyder(np.asarray(self.poly, dtype=float))
        acc = 0 * x
        for coef in reversed(dpoly):
            acc = acc * x + float(coef)
        return acc

    @property
    def cheb_full(self) -> np.ndarray:
        """Chebyshev-T coefficients c_0..c_K of V'."""
        return C.poly2cheb(P.polyder(np.asarray(self.poly, dtype=float)))

    @property
    def deriv_cheb(self) -> np.ndarray:
        """c_1..c_K; c_0 must vanish for a measure supported on [-1, 1]."""
        return self.cheb_full[1:]

    @property
    def K(self) -> int:
        return len(self.deriv_cheb)

    @classmethod
    def from_deriv_cheb(cls, name: str, coeffs, v0: float = 0.0) -> "Potential":
        """Build V from c_1..c_K (V' = sum c_k T_k) with V(0) = v0."""
        cheb = np.concatenate([[0.0], np.asarray(coeffs, dtype=float)])
        poly = C.cheb2poly(C.chebint(cheb))
        poly[0] += v0 - P.polyval(0.0, poly)
        return cls(name, tuple(float(c) for c in poly))


def gue() -> Potential:
    return Potential("gue", (0.0, 0.0, 2.0))


def quartic() -> Potential:
    """x^4 + x^2 rescaled as V(b x) so that the support is [-1, 1]."""
    # V_b'(x) = 4 b^4 x^3 + 2 b^2 x, whose T_1 coefficient is 3 b^4 + 2 b^2
    b = optimize.brentq(lambda s: 3 * s**4 + 2 * s**2 - SUPPORT_C1, 0.1, 2.0, xtol=1e-15)
    return Potential("quartic", (0.0, 0.0, b**2, 0.0, b**4))


BUILTIN_POTENTIALS = {"gue": gue, "quartic": quartic}


def get_potential(name: str) -> Potential:
    try:
        return BUILTIN_POTENTIALS[name]()
    except KeyError:
        raise DomainError(f"unknown potential {name!r}; known: {sorted(BUILTIN_POTENTIALS)}") from None


def cheb_u_series(coeffs, x):
    """Evaluate sum_k coeffs[k] U_k(x) by Clenshaw recurrence."""
    x = np.asarray(x, dtype=float)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for c in reversed(coeffs):
        b1, b2 = c + 2 * x * b1 - b2, b1
    return b1


def gauss_chebyshev_u(n: int):
    """Nodes and weights for int g(t) sqrt(1 - t^2) dt on [-1, 1]."""
    k = np.arange(1, n + 1)
    theta = k * np.pi / (n + 1)
    return np.cos(theta), np.pi / (n + 1) * np.sin(theta) ** 2


@dataclass(frozen=True)
class EquilibriumMeasure:
    potential: Potential
    density_cheb: np.ndarray
    lagrange_ell: float
    edge_c_minus: float
    edge_c_plus: float
    _table: tuple = field(default=None, repr=False, compare=False)

    def psi_at(self, x):
        return cheb_u_series(self.density_cheb, x)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < 1
        root = np.sqrt(np.where(inside, 1 - x * x, 0.0))
        return np.where(inside, self.psi_at(x) * root, 0.0)

    def cdf_theta(self, phi):
        """mu([cos(phi), 1]) measured from the left: F(cos phi) for phi in [0, pi]."""
        phi = np.asarray(phi, dtype=float)
        d = self.density_cheb
        out = d[0] * 0.5 * (np.pi - phi + 0.5 * np.sin(2 * phi))
        for k in range(1, len(d)):
            out = out + d[k] * 0.5 * (np.sin((k + 2) * phi) / (k + 2) - np.sin(k * phi) / k)
        return out

    def cdf(self, x):
        """F(x) = mu_V((-inf, x]); 0 left of -1 and 1 right of 1."""
        x = np.asarray(x, dtype=float)
        phi = np.arccos(np.clip(x, -1.0, 1.0))
        return np.where(x <= -1, 0.0, np.where(x >= 1, 1.0, self.cdf_theta(phi)))

    def _inverse_table(self):
        if self._table is None:
            phi = np.linspace(0.0, np.pi, 4097)
            object.__setattr__(self, "_table", (phi, self.cdf_theta(phi)))
        return self._table

    def inverse_cdf_theta(self, u, tol=1e-15, maxiter=80):
        """Angles phi with F(cos phi) = u, by safeguarded Newton inside a bracket."""
        u = np.asarray(u, dtype=float)
        phi_tab, g_tab = self._inverse_table()
        # g_tab decreases from 1 to 0
        phi = np.interp(u, g_tab[::-1], phi_tab[::-1])
        lo = np.zeros_like(phi)
        hi = np.full_like(phi, np.pi)
        for _ in range(maxiter):
            g = self.cdf_theta(phi) - u
            # g is decreasing in phi: g > 0 means phi too small
            lo = np.where(g > 0, phi, lo)
            hi = np.where(g <= 0, phi, hi)
            if np.all(np.abs(g) <= tol):
                break
            slope = -self.psi_at(np.cos(phi)) * np.sin(phi) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                step = phi - g / slope
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            phi = np.where(bad, 0.5 * (lo + hi), step)
        return phi

    def inverse_cdf(self, u):
        return np.cos(self.inverse_cdf_theta(u))

    def integrate(self, f: Callable, n: int = 512) -> float:
        """int f dmu_V by Gauss-Chebyshev quadrature of the second kind."""
        t, w = gauss_chebyshev_u(n)
        return float(np.sum(w * self.psi_at(t) * f(t)))

    def log_potential(self, x: float) -> float:
        """2 int log|x - y| dmu_V(y) - V(x); equals -ell on the support."""
        def integrand(theta):
            y = np.cos(theta)
            return np.log(abs(x - y)) * self.psi_at(y) * np.sin(theta) ** 2

        pts = [float(np.arccos(x))] if abs(x) < 1 else None
        val, _ = integrate.quad(integrand, 0.0, np.pi, points=pts, limit=400, epsabs=1e-13, epsrel=1e-13)
        return 2 * val - float(self.potential.evaluate(x))


@dataclass(frozen=True)
class QuantileTable:
    N: int
    kappa: np.ndarray


def solve_equilibrium(potential: Potential, check_points: int = 1000) -> EquilibriumMeasure:
    c = potential.cheb_full
    if len(c) < 2 or abs(c[1] - SUPPORT_C1) > 1e-6:
        c1 = c[1] if len(c) > 1 else 0.0
        raise BadNormalization(f"{potential.name}: T_1 coefficient of V' is {c1!r}, expected 4")
    if abs(c[0]) > 1e-8:
        raise BadNormalization(f"{potential.name}: V' has a T_0 component {c[0]!r}; support is not [-1, 1]")
    d = c[1:] / (2 * np.pi)

    grid = np.linspace(-1.0, 1.0, check_points)
    psi = cheb_u_series(d, grid)
    if np.any(psi <= 0):
        raise NotOneCut(f"{potential.name}: psi_V <= 0 at x = {grid[np.argmin(psi)]:.6g}")

    m = EquilibriumMeasure(potential, d, 0.0, 0.0, 0.0)
    ell = -m.log_potential(0.0)
    for x in (-1.5, 1.5):
        if m.log_potential(x) > -ell:
            raise NotOneCut(f"{potential.name}: Euler-Lagrange inequality fails at x = {x}")

    def edge(psi_end):
        return (3.0 / (2 * np.sqrt(2) * psi_end)) ** (2.0 / 3.0)

    return EquilibriumMeasure(
        potential,
        d,
        lagrange_ell=ell,
        edge_c_minus=edge(float(m.psi_at(-1.0))),
        edge_c_plus=edge(float(m.psi_at(1.0))),
    )


def quantiles(measure: EquilibriumMeasure, N: int) -> QuantileTable:
    if N < 1:
        raise DomainError("N must be positive")
    j = np.arange(1, N + 1)
    kappa = measure.inverse_cdf(j / N)
    kappa[-1] = 1.0
    return QuantileTable(N, kappa)


def _first_kind_nodes(n: int):
    return np.cos((2 * np.arange(1, n + 1) - 1) * np.pi / (2 * n))


def _hilbert_fixed(f, x, n):
    t = _first_kind_nodes(n)
    ft = f(t)
    x = np.atleast_1d(x)
    diff = x[:, None] - t[None, :]
    hit = np.abs(diff) < 1e-13
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (ft[None, :] - f(x)[:, None]) / diff
    terms = np.where(hit, 0.0, terms)
    out = terms.sum(axis=1) / n
    rows = np.any(hit, axis=1)
    if np.any(rows):
        # a node landed on x: switch to n + 1 nodes for those points
        out[rows] = _hilbert_fixed(f, x[rows], n + 1)
    return out


def finite_hilbert(f: Callable, x, n: int = 512, tol: float = 1e-9, max_nodes: int = 1 << 16):
    """(Uf)(x) = (1/pi) PV int f(t) / ((x - t) sqrt(1 - t^2)) dt.

    The singular part integrates to zero for |x| < 1, so the transform is the
    Gauss-Chebyshev sum of the difference quotient (f(t) - f(x)) / (x - t).
    The node count doubles until two levels agree to ``tol``.  ``f`` must
    accept numpy arrays.
    """
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(xa) >= 1):
        raise DomainError("finite Hilbert transform needs |x| < 1")
    prev = _hilbert_fixed(f, xa, n)
    while n < max_nodes:
        n *= 2
        cur = _hilbert_fixed(f, xa, n)
        if np.max(np.abs(cur - prev)) <= tol:
            prev = cur
            break
        prev = cur
    return float(prev[0]) if scalar else prev


def chebyshev_coefficients(f: Callable, tol: float = 1e-14, max_deg: int = 1024):
    """Chebyshev-T coefficients of f on [-1, 1]; returns (coeffs, resolved_as_polynomial)."""
    deg = 32
    while True:
        coef = C.chebinterpolate(f, deg)
        scale = max(np.max(np.abs(coef)), 1e-300)
        tail = np.max(np.abs(coef[-4:]))
        if tail <= tol * scale or deg >= max_deg:
            break
        deg *= 2
    nz = np.nonzero(np.abs(coef) > tol * scale)[0]
    coef = coef[: nz[-1] + 1] if nz.size else coef[:1]
    polynomial = len(coef) <= deg // 2
    return coef, polynomial


@dataclass(frozen=True)
class VarianceCheck:
    series: float
    hilbert: float
    polynomial: bool

    @property
    def discrepancy(self) -> float:
        return abs(self.series - self.hilbert)


def _hilbert_bilinear(f, g, fprime_coef, n=256):
    t, w = gauss_chebyshev_u(n)
    ug = finite_hilbert(g, t)
    return float(-np.sum(w * C.chebval(t, fprime_coef) * ug) / (2 * np.pi))


def variance_cross_check(f: Callable, g: Callable | None = None) -> VarianceCheck:
    """Covariance sigma^2(f; g) by the Chebyshev series and by the Hilbert formula."""
    g = f if g is None else g
    fc, fpoly = chebyshev_coefficients(f)
    gc, gpoly = (fc, fpoly) if g is f else chebyshev_coefficients(g)
    m = min(len(fc), len(gc))
    k = np.arange(m)
    series = 0.25 * float(np.sum(k[1:] * fc[1:m] * gc[1:m]))
    hilbert = _hilbert_bilinear(f, g, C.chebder(fc) if len(fc) > 1 else [0.0])
    return VarianceCheck(series, hilbert, fpoly and gpoly)


def sigma_bilinear(f: Callable, g: Callable, tol: float = 1e-8) -> float:
    chk = variance_cross_check(f, g)
    log.debug("sigma cross-check: series=%r hilbert=%r", chk.series, chk.hilbert)
    if chk.polynomial and chk.discrepancy > tol:
        raise CrossCheckFailure(f"variance formulas disagree by {chk.discrepancy:.3e}")
    return chk.series


def sigma_variance(f: Callable, tol: float = 1e-8) -> float:
    """Limiting variance of sum f(lambda_j) - N int f dmu_V: (1/4) sum k fhat_k^2."""
    return sigma_bilinear(f, f, tol)
