"""Exact finite-N Hankel determinants for weights with up to two jumps,

    h(l) = exp(sqrt2 pi g1 1{l <= x1} + sqrt2 pi g2 1{l <= x2} + w(l) - N V(l)),

computed in extended precision with mpmath.  Moments come from panelled
Gauss-Legendre quadrature split at every discontinuity and at +-1, so each
panel integrates an entire function.  The module also provides the exact
exponential moment of the counting field, the position differential
identity, and the leading-order asymptotic predictions the determinants are
compared against.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from mpmath import mp
from mpmath.calculus.quadrature import GaussLegendre

from .eqmeasure import EquilibriumMeasure, Potential, finite_hilbert, gue, sigma_variance, solve_equilibrium
from .errors import DomainError, EdgeTooClose, NormalizationUnavailable, PrecisionExhausted

DEFAULT_DIGITS = 50
JUMP = math.sqrt(2) * math.pi


class PolyWeight:
    """Polynomial w(x) = sum a_k x^k usable on floats, numpy arrays and mpf alike."""

    def __init__(self, coeffs):
        self.coeffs = tuple(float(c) for c in coeffs)

    def __call__(self, x):
        acc = 0 * x
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def __repr__(self):
        return f"PolyWeight({list(self.coeffs)})"

    def __eq__(self, other):
        return isinstance(other, PolyWeight) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)


@dataclass(frozen=True)
class HankelSpec:
    """Weight with jumps of heights sqrt2 pi g_j at x_j and a smooth factor e^w.

    ``w`` must accept mpf arguments; PolyWeight does.  x1, x2 may be mpf
    when finite differences need more than double precision.
    """

    N: int
    x1: object = 0.0
    x2: object = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    w: Callable | None = None
    potential: Potential = field(default_factory=gue)

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be positive")
        if not (-1 < self.x1 <= self.x2 < 1):
            raise DomainError("need -1 < x1 <= x2 < 1")


@dataclass(frozen=True)
class QuadratureLayout:
    """Panel layout: maximum panel width and Gauss-Legendre degree (3 * 2^(degree-1) nodes)."""

    panel_width: float = 0.25
    degree: int = 5


@functools.lru_cache(maxsize=8)
def _gl_nodes(degree: int, prec: int):
    with mp.workprec(prec):
        return tuple(GaussLegendre(mp).calc_nodes(degree, prec))


def cutoff(spec: HankelSpec, digits: int) -> float:
    """A such that the integrand of every moment beyond +-A is below 10^-(digits+5) of its bulk size."""
    N = spec.N
    w = spec.w or (lambda t: 0.0)
    jump = JUMP * (abs(spec.gamma1) + abs(spec.gamma2))
    bulk = max(float(w(t)) - N * float(spec.potential(t)) for t in np.linspace(-1, 1, 41))
    need = (digits + 5) * math.log(10) + 10

    def log_tail(t):
        return (2 * N) * math.log(abs(t)) + float(w(t)) - N * float(spec.potential(t)) + jump

    A = 1.5
    while A < 200:
        if all(bulk - log_tail(s * A) > need and bulk - log_tail(s * (A + 1)) > need for s in (-1, 1)):
            return A
        A += 0.25
    raise DomainError("weight does not decay fast enough for a finite cutoff")


def _panels(spec: HankelSpec, A: float, layout: QuadratureLayout):
    cuts = sorted({mp.mpf(-A), mp.mpf(A), mp.mpf(-1), mp.mpf(1), mp.mpf(spec.x1), mp.mpf(spec.x2)})
    for a, b in zip(cuts[:-1], cuts[1:]):
        pieces = max(1, math.ceil(float(b - a) / layout.panel_width))
        step = (b - a) / pieces
        for i in range(pieces):
            yield a + i * step, a + (i + 1) * step


def moments(spec: HankelSpec, count: int, digits: int = DEFAULT_DIGITS,
            layout: QuadratureLayout = QuadratureLayout()) -> list:
    """m_k = int l^k h(l) dl for k < count, at the current working precision."""
    A = cutoff(spec, digits)
    x1, x2 = mp.mpf(spec.x1), mp.mpf(spec.x2)
    j1, j2 = JUMP * mp.mpf(spec.gamma1), JUMP * mp.mpf(spec.gamma2)
    nodes = _gl_nodes(layout.degree, mp.prec)
    w = spec.w
    N = spec.N
    m = [mp.zero] * count
    for a, b in _panels(spec, A, layout):
        mid = (a + b) / 2
        half = (b - a) / 2
        jump = (j1 if mid <= x1 else 0) + (j2 if mid <= x2 else 0)
        for s, ws in nodes:
            t = mid + half * s
            expo = jump - N * spec.potential(t)
            if w is not None:
                expo += w(t)
            val = half * ws * mp.exp(expo)
            for k in range(count):
                m[k] += val
                val *= t
    return m


def _hankel_matrix(m, N, shift=0):
    return mp.matrix([[m[i + j + shift] for j in range(N)] for i in range(N)])


def _condition_digits(H) -> float:
    try:
        inv = mp.inverse(H)
    except ZeroDivisionError:
        # singular at working precision: every digit is gone
        return float(mp.dps)
    return float(mp.log10(mp.mnorm(H, 1) * mp.mnorm(inv, 1)))


def _log_hankel_at(spec, digits, layout):
    with mp.workdps(digits):
        m = moments(spec, 2 * spec.N - 1, digits, layout)
        H = _hankel_matrix(m, spec.N)
        lost = _condition_digits(H)
        if lost > digits / 2:
            raise PrecisionExhausted(
                f"Hankel matrix condition ~1e{lost:.1f} exceeds half of {digits} digits", condition_digits=lost
            )
        det = mp.det(H)
        if det <= 0:
            raise PrecisionExhausted("Hankel determinant not positive at working precision", lost)
        return mp.log(det)


def log_hankel(spec: HankelSpec, precision_digits: int = DEFAULT_DIGITS,
               layout: QuadratureLayout = QuadratureLayout()):
    """log D_N for the weight of ``spec`` as an mpf; retries once at doubled precision."""
    try:
        return _log_hankel_at(spec, precision_digits, layout)
    except PrecisionExhausted:
        return _log_hankel_at(spec, 2 * precision_digits, layout)


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal polynomials p_k = sum_i coeffs[k][i] x^i for the weight.

    Recurrence x p_k = a_{k+1} p_{k+1} + b_k p_k + a_k p_{k-1}; ``a[0]`` is 0.
    """

    coeffs: tuple
    kappa: tuple
    a: tuple
    b: tuple
    gram: object
    digits: int

    def __call__(self, k: int, x):
        with mp.workdps(self.digits):
            acc = mp.zero
            for c in reversed(self.coeffs[k]):
                acc = acc * x + c
            return acc

    def kernel_diagonal(self, x):
        """sum_{j<N} p_j(x)^2."""
        with mp.workdps(self.digits):
            return mp.fsum(self(k, x) ** 2 for k in range(len(self.coeffs)))

    def log_det(self):
        """log D_N through the leading coefficients: -2 sum log kappa_k."""
        with mp.workdps(self.digits):
            return -2 * mp.fsum(mp.log(k) for k in self.kappa)


def ortho_basis(spec: HankelSpec, precision_digits: int = DEFAULT_DIGITS,
                layout: QuadratureLayout = QuadratureLayout()) -> OrthoBasis:
    """Orthonormal basis by Cholesky of the moment matrix: H = L L^T, p = L^{-1} (1, x, ...)."""
    N = spec.N
    with mp.workdps(precision_digits):
        m = moments(spec, 2 * N, precision_digits, layout)
        H = _hankel_matrix(m, N)
        L = mp.cholesky(H)
        Linv = mp.inverse(L)
        coeffs = tuple(tuple(Linv[k, i] for i in range(k + 1)) for k in range(N))
        kappa = tuple(Linv[k, k] for k in range(N))
        J = Linv * _hankel_matrix(m, N, shift=1) * Linv.T
        gram = Linv * H * Linv.T
        a = (mp.zero,) + tuple(J[k - 1, k] for k in range(1, N))
        b = tuple(J[k, k] for k in range(N))
    return OrthoBasis(coeffs, kappa, a, b, gram, precision_digits)


# ---------------------------------------------------------------- exact exponential moment

def cdf_mp(potential: Potential, x):
    """Equilibrium CDF F(x) evaluated at working precision."""
    c = [mp.mpf(float(v)) for v in potential.cheb_full[1:]]
    d = [ck / (2 * mp.pi) for ck in c]
    phi = mp.acos(mp.mpf(x))
    out = d[0] * (mp.pi - phi + mp.sin(2 * phi) / 2) / 2
    for k in range(1, len(d)):
        out += d[k] * (mp.sin((k + 2) * phi) / (k + 2) - mp.sin(k * phi) / k) / 2
    return out


@functools.lru_cache(maxsize=64)
def _log_partition(N: int, potential: Potential, digits: int):
    return log_hankel(HankelSpec(N, potential=potential), digits)


def log_exp_moment_exact(x, gamma: float, N: int, potential: Potential | None = None,
                         precision_digits: int = DEFAULT_DIGITS):
    """log E exp(gamma h_N(x)) = log D_N(x; gamma) - log Z_N - sqrt2 pi gamma N F(x)."""
    potential = potential or gue()
    if N > 12:
        raise NormalizationUnavailable("exact exponential moments are limited to N <= 12")
    if gamma == 0:
        return mp.zero
    spec = HankelSpec(N, x1=x, x2=x, gamma1=gamma, potential=potential)
    with mp.workdps(precision_digits):
        logd = log_hankel(spec, precision_digits)
        logz = _log_partition(N, potential, precision_digits)
        return logd - logz - JUMP * mp.mpf(gamma) * N * cdf_mp(potential, x)


def exp_moment_exact(x, gamma: float, N: int, potential: Potential | None = None,
                     precision_digits: int = DEFAULT_DIGITS):
    with mp.workdps(precision_digits):
        return mp.exp(log_exp_moment_exact(x, gamma, N, potential, precision_digits))


# ---------------------------------------------------------------- differential identity

@dataclass(frozen=True)
class DiffIdCheck:
    lhs: object
    rhs: object
    gap: float


def diffid_y_check(spec: HankelSpec, dy: float, precision_digits: int = DEFAULT_DIGITS) -> DiffIdCheck:
    """Centered difference of log D_N in x2 against the Christoffel-Darboux expression

        -exp(w(x2) - N V(x2)) (1 - e^{sqrt2 pi g2}) sum_{j<N} p_j(x2)^2.
    """
    if spec.N > 10:
        raise DomainError("differential identity check is limited to N <= 10")
    if not spec.x1 < spec.x2:
        raise DomainError("need x1 < x2")
    with mp.workdps(precision_digits):
        h = mp.mpf(dy)
        x2 = mp.mpf(spec.x2)
        up = log_hankel(replace(spec, x2=x2 + h), precision_digits)
        down = log_hankel(replace(spec, x2=x2 - h), precision_digits)
        lhs = (up - down) / (2 * h)
        basis = ortho_basis(spec, precision_digits)
        expo = -spec.N * spec.potential(x2) + (spec.w(x2) if spec.w is not None else 0)
        rhs = -mp.exp(expo) * (1 - mp.exp(JUMP * mp.mpf(spec.gamma2))) * basis.kernel_diagonal(x2)
        return DiffIdCheck(lhs, rhs, float(abs(lhs - rhs)))


# ---------------------------------------------------------------- asymptotic predictions

def predict_single_jump(x: float, gamma: float, N: int, measure: EquilibriumMeasure, m: float = 2.0) -> float:
    """Leading terms of log D_N(x; gamma; 0) / D_N(x; 0; 0):

        sqrt2 pi gamma N F(x) + gamma^2/2 log N + 3 gamma^2/4 log(1 - x^2).
    """
    if abs(x) > 1 - m * N ** (-2.0 / 3.0):
        raise EdgeTooClose(f"|x| = {abs(x)} is within {m} N^(-2/3) of the edge")
    return float(JUMP * gamma * N * measure.cdf(x) + 0.5 * gamma**2 * math.log(N)
                 + 0.75 * gamma**2 * math.log1p(-x * x))


def predict_merging(x1: float, x2: float, gamma1: float, gamma2: float, N: int,
                    measure: EquilibriumMeasure) -> float:
    """Leading terms of log D_N(x1, x2; g1, g2) - log D_N(x1; g1 + g2):

        sqrt2 pi g2 N mu_V([x1, x2]) - g1 g2 max(0, log(|x2 - x1| N)).
    """
    if not x1 <= x2:
        raise DomainError("need x1 <= x2")
    mass = float(measure.cdf(x2) - measure.cdf(x1))
    merge = max(0.0, math.log(abs(x2 - x1) * N)) if x2 > x1 else 0.0
    return JUMP * gamma2 * N * mass - gamma1 * gamma2 * merge


def predict_smooth_term(x1: float, x2: float, gamma1: float, gamma2: float, w: Callable, N: int,
                        measure: EquilibriumMeasure) -> float:
    """Leading terms of log D_N(...; w) / D_N(...; 0):

        N int w dmu_V + sigma(w)^2 / 2 + sum_j (g_j / sqrt2) sqrt(1 - x_j^2) (Uw)(x_j),

    with U the finite Hilbert transform.  ``w`` must accept numpy arrays.
    """
    out = N * measure.integrate(w) + 0.5 * sigma_variance(w)
    for xj, gj in ((x1, gamma1), (x2, gamma2)):
        if gj:
            out += gj / math.sqrt(2) * math.sqrt(1 - xj * xj) * finite_hilbert(w, xj)
    return float(out)


def log_ratio(spec: HankelSpec, precision_digits: int = DEFAULT_DIGITS) -> float:
    """log D_N(spec) - log D_N(spec without w), the quantity predict_smooth_term targets."""
    with mp.workdps(precision_digits):
        return float(log_hankel(spec, precision_digits) - log_hankel(replace(spec, w=None), precision_digits))


def measure_for(potential: Potential) -> EquilibriumMeasure:
    return _measure_cache(potential)


@functools.lru_cache(maxsize=8)
def _measure_cache(potential: Potential) -> EquilibriumMeasure:
    return solve_equilibrium(potential)


__all__ = [
    "DiffIdCheck", "HankelSpec", "OrthoBasis", "PolyWeight", "QuadratureLayout", "cdf_mp", "cutoff",
    "diffid_y_check", "exp_moment_exact", "log_exp_moment_exact", "log_hankel", "log_ratio", "moments",
    "ortho_basis", "predict_merging", "predict_single_jump", "predict_smooth_term",
]
