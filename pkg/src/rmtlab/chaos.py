"""Multiplicative-chaos measures built from the counting field, from its
mesoscopic smoothing, and from the limiting log-correlated Gaussian field.
Also the exact thick-point measure and the freezing free energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .counting import JUMP, CountingField, h_at, harmonic_extension
from .eqmeasure import EquilibriumMeasure
from .errors import DiagonalError, DomainError, InsufficientReplicas, NormalizationUnavailable
from .sampler import Spectrum

NORMALIZATIONS = ("monte-carlo", "hankel-exact", "surrogate")
MIN_MC_REPLICAS = 50
HANKEL_MAX_N = 12


@dataclass(frozen=True)
class GaussianField:
    """Truncated series X(x) = sum_k sqrt(2/k) xi_k sin(k theta), x = cos(theta).

    sin(k theta) = U_{k-1}(x) sqrt(1 - x^2), so this is the Chebyshev-U form.
    Outside [-1, 1] the field is 0.
    """

    xi: np.ndarray

    @property
    def K(self) -> int:
        return self.xi.size

    def _basis(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        theta = np.arccos(np.clip(x, -1.0, 1.0))
        k = np.arange(1, self.K + 1)
        return np.sin(np.outer(theta, k)) * np.sqrt(2.0 / k), np.abs(x) <= 1

    def eval(self, x):
        basis, inside = self._basis(x)
        out = np.where(inside, basis @ self.xi, 0.0)
        return float(out[0]) if np.ndim(x) == 0 else out

    def variance(self, x):
        """Variance of the K-term partial sum at x."""
        basis, inside = self._basis(x)
        out = np.where(inside, np.sum(basis**2, axis=1), 0.0)
        return float(out[0]) if np.ndim(x) == 0 else out


def sample_field(K: int, seed: int) -> GaussianField:
    """Fields with the same seed share their leading coefficients, so different K couple."""
    if K < 1:
        raise DomainError("K must be at least 1")
    return GaussianField(np.random.default_rng(seed).standard_normal(K))


def sigma_kernel(x: float, y: float) -> float:
    """Covariance log|(1 - xy + sqrt(1-x^2) sqrt(1-y^2)) / (x - y)| of the limiting field."""
    if x == y:
        raise DiagonalError("the covariance kernel is infinite on the diagonal")
    if not (-1 < x < 1 and -1 < y < 1):
        raise DomainError("sigma_kernel needs both points in (-1, 1)")
    num = 1 - x * y + np.sqrt(1 - x * x) * np.sqrt(1 - y * y)
    return float(np.log(abs(num / (x - y))))


@dataclass(frozen=True)
class ChaosMeasure:
    grid: np.ndarray
    density: np.ndarray
    gamma: float
    normalization_kind: str

    def __post_init__(self):
        if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
            raise DomainError("chaos density must be finite and nonnegative")

    def total_mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def mass(self, a: float, b: float) -> float:
        keep = (self.grid >= a) & (self.grid <= b)
        return float(np.trapezoid(self.density[keep], self.grid[keep]))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing with at least two points")
    if grid[0] <= -1 or grid[-1] >= 1:
        raise DomainError("grid must lie in (-1, 1)")
    return grid


def _check_gamma(gamma: float, cap: float = 2.0) -> None:
    if not abs(gamma) < cap:
        raise DomainError(f"|gamma| must be below {cap}")


def log_normalizer(replicas: Sequence[Spectrum], measure: EquilibriumMeasure, gamma: float, grid,
                   kind: str = "monte-carlo") -> np.ndarray:
    """log of the estimate of E exp(gamma h_N(x)) on the grid.

    monte-carlo averages over all replicas; hankel-exact uses the exact
    determinant ratio (N <= 12 only). The surrogate shape
    N^{gamma^2/2} (1-x^2)^{3 gamma^2/4} is returned without its constant,
    which chaos_density calibrates.
    """
    grid = _check_grid(grid)
    N = replicas[0].n
    if kind == "monte-carlo":
        if len(replicas) < MIN_MC_REPLICAS:
            raise InsufficientReplicas(f"monte-carlo normalization needs >= {MIN_MC_REPLICAS} replicas")
        logs = np.array([gamma * h_at(CountingField(s, measure), grid) for s in replicas])
        return logsumexp(logs, axis=0) - np.log(len(replicas))
    if kind == "hankel-exact":
        if N > HANKEL_MAX_N:
            raise NormalizationUnavailable(f"hankel-exact normalization is limited to N <= {HANKEL_MAX_N}")
        from .hankel import log_exp_moment_exact

        return np.array([float(log_exp_moment_exact(x, gamma, N, measure.potential)) for x in grid])
    if kind == "surrogate":
        return 0.5 * gamma**2 * np.log(N) + 0.75 * gamma**2 * np.log1p(-grid**2)
    raise DomainError(f"unknown normalization kind {kind!r}")


def _densities(logs: np.ndarray, log_norm: np.ndarray) -> np.ndarray:
    return np.exp(logs - log_norm)


def chaos_density(replicas: Sequence[Spectrum], measure: EquilibriumMeasure, gamma: float, grid,
                  normalization_kind: str = "monte-carlo", designated: int = 0,
                  log_norm: np.ndarray | None = None) -> ChaosMeasure:
    """Density exp(gamma h_N(x)) / E-hat exp(gamma h_N(x)) of one designated replica.

    A precomputed ``log_norm`` (from log_normalizer on independent replicas,
    say) overrides the normalization computed from ``replicas``.
    """
    _check_gamma(gamma)
    grid = _check_grid(grid)
    if gamma == 0:
        return ChaosMeasure(grid, np.ones_like(grid), 0.0, normalization_kind)
    if log_norm is None:
        log_norm = log_normalizer(replicas, measure, gamma, grid, normalization_kind)
        if normalization_kind == "surrogate":
            # constant chosen so the mean total mass over the replicas is the grid length
            masses = [np.trapezoid(np.exp(gamma * h_at(CountingField(s, measure), grid) - log_norm), grid)
                      for s in replicas]
            log_norm = log_norm + np.log(np.mean(masses) / (grid[-1] - grid[0]))
    logs = gamma * h_at(CountingField(replicas[designated], measure), grid)
    return ChaosMeasure(grid, _densities(logs, log_norm), float(gamma), normalization_kind)


def meso_chaos_density(replicas: Sequence[Spectrum], measure: EquilibriumMeasure, gamma: float, alpha: float,
                       grid, designated: int = 0) -> ChaosMeasure:
    """Chaos measure of the field smoothed at scale eps_N = N^{alpha - 1}; monte-carlo normalized."""
    _check_gamma(gamma)
    grid = _check_grid(grid)
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if gamma == 0:
        return ChaosMeasure(grid, np.ones_like(grid), 0.0, "monte-carlo")
    if len(replicas) < MIN_MC_REPLICAS:
        raise InsufficientReplicas(f"monte-carlo normalization needs >= {MIN_MC_REPLICAS} replicas")
    eps = replicas[0].n ** (alpha - 1.0)
    logs = np.array([gamma * harmonic_extension(CountingField(s, measure), grid, eps) for s in replicas])
    log_norm = logsumexp(logs, axis=0) - np.log(len(replicas))
    return ChaosMeasure(grid, _densities(logs[designated], log_norm), float(gamma), "monte-carlo")


def reference_gmc(K: int, gamma: float, grid, seed: int) -> ChaosMeasure:
    """exp(gamma X_K - gamma^2/2 Var X_K) for the K-term Gaussian series."""
    _check_gamma(gamma, cap=np.sqrt(2))
    grid = _check_grid(grid)
    field = sample_field(K, seed)
    dens = np.exp(gamma * field.eval(grid) - 0.5 * gamma**2 * field.variance(grid))
    return ChaosMeasure(grid, dens, float(gamma), "reference")


def gini(weights) -> float:
    """Gini coefficient of nonnegative weights (0 = uniform, near 1 = concentrated)."""
    w = np.sort(np.asarray(weights, dtype=float))
    n = w.size
    if n == 0 or w.sum() == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(np.sum((2 * ranks - n - 1) * w) / (n * w.sum()))


# ---------------------------------------------------------------- exact set functionals

@dataclass(frozen=True)
class ThickPointReport:
    gamma: float
    lebesgue_measure: float
    exponent: float | None

    @property
    def empty(self) -> bool:
        return self.exponent is None


def _segments(field: CountingField):
    """Breakpoints -1 = p_0 <= p_1 <= ... <= p_{N+1} = 1 and the count on [p_k, p_{k+1})."""
    p = np.concatenate(([-1.0], np.clip(field.values, -1.0, 1.0), [1.0]))
    return p, np.arange(field.N + 1)


def thick_points(field: CountingField, gamma: float, sign: int = 1) -> ThickPointReport:
    """Exact Lebesgue measure of {x in [-1, 1] : sign * h_N(x) >= gamma log N}."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    N = field.N
    level = gamma * np.log(N) / JUMP if N > 1 else 0.0
    p, count = _segments(field)
    F = field.measure.cdf(p)
    u_lo, u_hi = F[:-1], F[1:]
    if sign == 1:
        # h >= t  <=>  F(x) <= (j - level)/N, a left piece of the segment
        cut = (count - level) / N
        top = np.minimum(u_hi, cut)
        live = top > u_lo
        ends = field.measure.inverse_cdf(top[live])
        ends = np.where(top[live] >= u_hi[live], p[1:][live], ends)
        total = np.sum(ends - p[:-1][live])
    else:
        cut = (count + level) / N
        bottom = np.maximum(u_lo, cut)
        live = bottom < u_hi
        starts = field.measure.inverse_cdf(bottom[live])
        starts = np.where(bottom[live] <= u_lo[live], p[:-1][live], starts)
        total = np.sum(p[1:][live] - starts)
    total = float(min(max(total, 0.0), 2.0))
    exponent = float(np.log(total) / np.log(N)) if total > 0 and N > 1 else None
    return ThickPointReport(float(gamma), total, exponent)


def log_partition(field: CountingField, gamma: float, nodes: int = 24) -> float:
    """log int_{-1}^{1} exp(gamma h_N(x)) dx, exact up to quadrature.

    Each inter-eigenvalue segment is integrated in theta = arccos(x), where the
    integrand exp(gamma sqrt2 pi (j - N G(theta))) sin(theta) is smooth.  Segments
    carrying more than two units of N mu_V mass are split further.
    """
    N = field.N
    p, count = _segments(field)
    theta = np.arccos(p)  # decreasing
    mass = N * np.diff(field.measure.cdf(p))
    pieces = np.maximum(1, np.ceil(mass / 2.0)).astype(int)
    seg = np.repeat(np.arange(p.size - 1), pieces)
    frac = np.concatenate([np.arange(m) for m in pieces])
    width = (theta[:-1] - theta[1:])[seg] / pieces[seg]
    lo = theta[1:][seg] + frac * width
    s, w = np.polynomial.legendre.leggauss(nodes)
    th = lo[:, None] + 0.5 * width[:, None] * (s[None, :] + 1)
    g = field.measure.cdf_theta(th)
    keep = width > 0
    th, g, seg, width = th[keep], g[keep], seg[keep], width[keep]
    logs = gamma * JUMP * (count[seg][:, None] - N * g) + np.log(np.sin(th)) + np.log(0.5 * width[:, None] * w[None, :])
    return float(logsumexp(logs))


def free_energy(field: CountingField, gamma: float) -> float:
    """(1 / log N) log int_{-1}^{1} exp(gamma h_N(x)) dx."""
    if gamma <= 0:
        raise DomainError("free energy is defined for gamma > 0")
    if field.N < 2:
        raise DomainError("free energy needs N >= 2")
    return log_partition(field, gamma) / np.log(field.N)
