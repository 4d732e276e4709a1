"""Eigenvalue samplers for the unitary-invariant ensemble with density
prod |l_i - l_j|^2 prod exp(-N V(l_j)).

GUE spectra are exact (Dumitriu-Edelman tridiagonal model at beta = 2).  For
any other one-cut potential a single-site Metropolis chain on the log-gas is
provided.  Replicas draw from independent substreams derived from a master
seed, so results do not depend on scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.linalg import LinAlgError, eigvalsh_tridiagonal

from .eqmeasure import Potential, gue, solve_equilibrium
from .errors import ChainDiverged, DomainError, EigensolveFailure, ReplicaError

SPECTRUM_FORMAT = "rmtlab-spectrum v1"
MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise DomainError("a spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite eigenvalue")
        if np.any(np.diff(v) < 0):
            v = np.sort(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class McmcParams:
    sweeps: int
    burn_in: int
    proposal_scale: float
    thinning: int

    def __post_init__(self):
        if min(self.sweeps, self.burn_in, self.thinning) <= 0 or self.proposal_scale <= 0:
            raise DomainError("MCMC parameters must be positive")
        if self.burn_in > self.sweeps:
            raise DomainError("burn_in exceeds total sweeps")

    @classmethod
    def defaults(cls, N: int) -> "McmcParams":
        return cls(sweeps=200 * N, burn_in=50 * N, proposal_scale=1.0 / N, thinning=N)


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replica_seed(master_seed: int, r: int) -> int:
    """Seed of replica r: mix64(mix64(master_seed) + r + 1).

    The double mix decorrelates neighbouring masters as well as neighbouring
    replicas; distinct (master, r) pairs collide only as a 64-bit hash would.
    """
    return mix64(mix64(master_seed) + r + 1)


def sample_gue(N: int, seed: int) -> Spectrum:
    """Exact GUE spectrum with entry variance 1/(4N); bulk fills [-1, 1]."""
    if N < 1:
        raise DomainError("N must be positive")
    rng = np.random.default_rng(seed)
    diag = rng.standard_normal(N)
    off = np.sqrt(rng.chisquare(2 * np.arange(N - 1, 0, -1)) / 2) if N > 1 else np.empty(0)
    try:
        ev = eigvalsh_tridiagonal(diag, off, lapack_driver="sterf") if N > 1 else diag.copy()
    except LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    ev /= 2 * np.sqrt(N)
    return Spectrum(ev, {"sampler_kind": "gue-tridiagonal", "seed": int(seed), "potential": "gue", "N": N})


@numba.njit(cache=True)
def _horner(poly, x):
    acc = 0.0
    for k in range(poly.size - 1, -1, -1):
        acc = acc * x + poly[k]
    return acc


@numba.njit(cache=True, nogil=True)
def _metropolis_sweeps(lam, poly, n_weight, steps, uniforms):
    """Run steps.shape[0] sweeps of single-site updates in place; return accepts."""
    n = lam.size
    accepted = 0
    for s in range(steps.shape[0]):
        for i in range(n):
            old = lam[i]
            new = old + steps[s, i]
            delta = -n_weight * (_horner(poly, new) - _horner(poly, old))
            for j in range(n):
                if j != i:
                    delta += 2.0 * (np.log(abs(new - lam[j])) - np.log(abs(old - lam[j])))
            if delta >= 0.0 or uniforms[s, i] < np.exp(delta):
                lam[i] = new
                accepted += 1
    return accepted


def log_density(values, potential: Potential) -> float:
    """Unnormalized log density 2 sum_{i<j} log|l_i - l_j| - N sum V(l_j)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    diff = np.abs(v[:, None] - v[None, :])
    iu = np.triu_indices(n, 1)
    return float(2 * np.sum(np.log(diff[iu])) - n * np.sum(potential.evaluate(v)))


def metropolis_log_ratio(values, i: int, new: float, potential: Potential) -> float:
    """log of density(proposal) / density(current) for moving particle i to ``new``."""
    v = np.asarray(values, dtype=float)
    old = v[i]
    others = np.delete(v, i)
    n = v.size
    return float(
        2 * np.sum(np.log(np.abs(new - others)) - np.log(np.abs(old - others)))
        - n * (potential.evaluate(new) - potential.evaluate(old))
    )


def sample_invariant(potential: Potential, N: int, params: McmcParams | None = None, seed: int = 0,
                     chunk: int = 256) -> Spectrum:
    """One spectrum from a Metropolis log-gas chain started at the classical locations."""
    if N < 2:
        raise DomainError("the log-gas chain needs N >= 2")
    params = params or McmcParams.defaults(N)
    measure = solve_equilibrium(potential)
    lam = measure.inverse_cdf((np.arange(1, N + 1) - 0.5) / N).copy()
    poly = np.asarray(potential.poly, dtype=float)
    rng = np.random.default_rng(seed)

    accepted_burn = accepted = 0
    trace = []
    done = 0
    while done < params.sweeps:
        block = min(chunk, params.sweeps - done)
        if done < params.burn_in:
            block = min(block, params.burn_in - done)
        else:
            # stop exactly on thinning boundaries so the trace is evenly spaced
            block = min(block, params.thinning - (done - params.burn_in) % params.thinning)
        steps = rng.normal(0.0, params.proposal_scale, size=(block, N))
        uniforms = rng.random(size=(block, N))
        acc = _metropolis_sweeps(lam, poly, float(N), steps, uniforms)
        done += block
        if done <= params.burn_in:
            accepted_burn += acc
            continue
        accepted += acc
        if np.any(np.abs(lam) > 10):
            raise ChainDiverged(f"|lambda| > 10 after burn-in (proposal_scale={params.proposal_scale})")
        if (done - params.burn_in) % params.thinning == 0:
            trace.append(float(np.sum(lam * lam)))

    kept = params.sweeps - params.burn_in
    prov = {
        "sampler_kind": "log-gas-metropolis",
        "seed": int(seed),
        "potential": potential.name,
        "N": N,
        "acceptance_rate": accepted / (kept * N) if kept else float("nan"),
        "burn_in_acceptance_rate": accepted_burn / (params.burn_in * N),
        "sum_sq_trace": trace,
        "params": {
            "sweeps": params.sweeps,
            "burn_in": params.burn_in,
            "proposal_scale": params.proposal_scale,
            "thinning": params.thinning,
        },
    }
    return Spectrum(np.sort(lam), prov)


@dataclass(frozen=True)
class SamplerJob:
    """Picklable description of one sampler call; ``job(seed)`` draws a spectrum."""

    kind: str
    N: int
    potential: Potential = field(default_factory=gue)
    params: McmcParams | None = None

    def __call__(self, seed: int) -> Spectrum:
        if self.kind == "gue":
            return sample_gue(self.N, seed)
        if self.kind == "invariant":
            return sample_invariant(self.potential, self.N, self.params, seed)
        raise DomainError(f"unknown sampler kind {self.kind!r}")


def _draw(job, r: int, seed: int) -> Spectrum:
    try:
        spec = job(seed)
    except Exception as exc:
        raise ReplicaError(r, exc) from exc
    spec.provenance["replica"] = r
    return spec


def run_replicas(job, M: int, master_seed: int, workers: int = 1) -> list[Spectrum]:
    """Draw M spectra; replica r always uses replica_seed(master_seed, r).

    With workers > 1 replicas run in separate processes (the eigensolver holds
    the GIL); results come back in replica order either way.
    """
    if M < 1:
        raise DomainError("M must be positive")
    seeds = [replica_seed(master_seed, r) for r in range(M)]
    if workers <= 1:
        return [_draw(job, r, seeds[r]) for r in range(M)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_draw, [job] * M, range(M), seeds))


def write_spectrum(path, spectrum: Spectrum) -> None:
    path = Path(path)
    lines = [f"# {SPECTRUM_FORMAT}", "# provenance " + json.dumps(spectrum.provenance, sort_keys=True), "value"]
    lines += [f"{v:.17g}" for v in spectrum.values]
    path.write_text("\n".join(lines) + "\n")


def read_spectrum(path) -> Spectrum:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != f"# {SPECTRUM_FORMAT}":
        raise DomainError(f"{path}: not a {SPECTRUM_FORMAT} file")
    prov = {}
    body = []
    for line in text[1:]:
        if line.startswith("# provenance "):
            prov = json.loads(line[len("# provenance "):])
        elif line.startswith("#") or line == "value" or not line.strip():
            continue
        else:
            body.append(float(line))
    return Spectrum(np.array(body), prov)
