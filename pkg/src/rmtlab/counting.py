"""The centered eigenvalue counting field

    h_N(x) = sqrt(2) pi (#{j : lambda_j <= x} - N F(x))

and statistics computed exactly from it.  h_N jumps up by sqrt(2) pi at
every eigenvalue and decreases in between, so its extrema are attained at
eigenvalues (maximum) or as left limits there (minimum); no grid is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .eqmeasure import EquilibriumMeasure, gauss_chebyshev_u, quantiles
from .errors import DomainError
from .sampler import Spectrum

JUMP = np.sqrt(2) * np.pi


@dataclass(frozen=True)
class CountingField:
    spectrum: Spectrum
    measure: EquilibriumMeasure

    def __post_init__(self):
        name = self.spectrum.provenance.get("potential")
        if name is not None and name != self.measure.potential.name:
            raise DomainError(f"spectrum drawn for {name!r} but measure is for {self.measure.potential.name!r}")

    @property
    def N(self) -> int:
        return self.spectrum.n

    @property
    def values(self) -> np.ndarray:
        return self.spectrum.values


@dataclass(frozen=True)
class ExtremaReport:
    max_value: float
    min_value: float
    argmax: float
    argmin: float
    max_over_R: float
    min_over_R: float


def h_at(field: CountingField, x):
    """h_N(x), right-continuous; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    counts = np.searchsorted(field.values, x, side="right")
    out = JUMP * (counts - field.N * field.measure.cdf(x))
    return float(out) if out.ndim == 0 else out


def _left_limits(field: CountingField) -> np.ndarray:
    lam = field.values
    below = np.searchsorted(lam, lam, side="left")
    return JUMP * (below - field.N * field.measure.cdf(lam))


def extrema(field: CountingField) -> ExtremaReport:
    lam = field.values
    at = h_at(field, lam)
    left = _left_limits(field)
    i, k = int(np.argmax(at)), int(np.argmin(left))
    return ExtremaReport(
        max_value=float(at[i]),
        min_value=float(left[k]),
        argmax=float(lam[i]),
        argmin=float(lam[k]),
        max_over_R=max(float(at[i]), 0.0),
        min_over_R=min(float(left[k]), 0.0),
    )


def rigidity_stat(field: CountingField) -> float:
    """max_j pi psi(k_j) sqrt(1 - k_j^2) |lambda_j - k_j| * N / log N."""
    N = field.N
    if N < 2:
        raise DomainError("rigidity statistic needs N >= 2")
    kappa = quantiles(field.measure, N).kappa
    psi = field.measure.psi_at(kappa)
    dev = np.pi * psi * np.sqrt(np.clip(1 - kappa**2, 0, None)) * np.abs(field.values - kappa)
    return float(np.max(dev) * N / np.log(N))


def ks_distance(field: CountingField) -> float:
    """Kolmogorov-Smirnov distance between the empirical law and mu_V."""
    rep = extrema(field)
    return max(abs(rep.max_over_R), abs(rep.min_over_R)) / (JUMP * field.N)


def harmonic_extension(field: CountingField, x, eps: float, nodes: int | None = None):
    """h_N(x + i eps), the Poisson smoothing (phi_eps * h_N)(x).

    Written with arg(z - t) in (0, pi) for Im z > 0:

        sqrt(2) (N int arg(z - t) dmu_V(t) - sum_j arg(z - lambda_j)).
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    n = nodes or max(256, int(np.ceil(8.0 / eps)))
    t, w = gauss_chebyshev_u(n)
    wt = w * field.measure.psi_at(t)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(xs.size)
    lam = field.values
    step = max(1, 2_000_000 // max(lam.size, n))
    for s in range(0, xs.size, step):
        xc = xs[s:s + step, None]
        smooth = np.arctan2(eps, xc - t[None, :]) @ wt
        atoms = np.arctan2(eps, xc - lam[None, :]).sum(axis=1)
        out[s:s + step] = np.sqrt(2) * (field.N * smooth - atoms)
    return float(out[0]) if np.ndim(x) == 0 else out


def linear_statistic(field: CountingField, f: Callable) -> float:
    """sum_j f(lambda_j) - N int f dmu_V."""
    return float(np.sum(f(field.values)) - field.N * field.measure.integrate(f))


def bulk_eigenvalue_stat(field: CountingField, j: int | None = None, midpoint: bool = False) -> float:
    """pi rho(k) N (lambda_j - k) / sqrt(log N / 2), rho the equilibrium density.

    Asymptotically standard normal for a bulk index j (default N/2).  The
    centre k is the quantile F^{-1}(j/N), or F^{-1}((j - 1/2)/N) with
    midpoint=True; the two differ by half a spacing, which is a shift of
    order 1/sqrt(log N) in the statistic.
    """
    N = field.N
    if N < 2:
        raise DomainError("bulk statistic needs N >= 2")
    j = N // 2 if j is None else j
    if not 1 <= j <= N:
        raise DomainError("index out of range")
    kappa = float(field.measure.inverse_cdf((j - 0.5 * midpoint) / N))
    rho = float(field.measure.density(kappa))
    return float(np.pi * rho * N * (field.values[j - 1] - kappa) / np.sqrt(0.5 * np.log(N)))


def edge_scale(measure: EquilibriumMeasure, side: int = 1) -> float:
    """Airy length scale (pi sqrt2 psi(+-1))^(-2/3) of the largest (side=1) or smallest eigenvalue."""
    return float((np.pi * np.sqrt(2) * measure.psi_at(float(side))) ** (-2.0 / 3.0))


def edge_stat(field: CountingField, airy: bool = True) -> float:
    """Rescaled largest eigenvalue (lambda_N - 1) N^(2/3) / s.

    With airy=True, s is edge_scale and the limit law is Tracy-Widom (beta=2).
    With airy=False, s is the constant c_+ = (3 / (2 sqrt2 psi(1)))^(2/3),
    which is the scale of the quantile gap 1 - kappa_{N-1}, not of the fluctuations.
    """
    s = edge_scale(field.measure) if airy else field.measure.edge_c_plus
    return float((field.values[-1] - 1.0) * field.N ** (2.0 / 3.0) / s)
