"""Command-line harness: ``rmtlab run CONFIG`` and ``rmtlab validate CONFIG``.

Each run writes ``summary.json``, one or more ``data_*.csv`` files and
``config.echo`` into the output directory.  Exit codes: 0 success, 2 bad
configuration, 3 numerical failure, 4 acceptance failure under --enforce.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chaos import chaos_density, free_energy, gini, meso_chaos_density, thick_points
from .config import ExperimentConfig, echo, finite_or_none, load, resolve, validate
from .counting import JUMP, CountingField, extrema, h_at, ks_distance, rigidity_stat
from .eqmeasure import Potential, get_potential, solve_equilibrium
from .errors import ConfigError, ReplicaError, RmtlabError
from .sampler import McmcParams, SamplerJob, run_replicas

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4


@dataclass
class Outcome:
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    acceptance: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)


def summarize(values) -> dict:
    """median, mean and standard error of the finite values."""
    v = np.array([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    out = {"count": int(v.size), "median": None, "mean": None, "stderr": None}
    if v.size:
        out["median"] = float(np.median(v))
        out["mean"] = float(np.mean(v))
    if v.size > 1:
        out["stderr"] = float(np.std(v, ddof=1) / math.sqrt(v.size))
    return out


def aggregate_records(records, keys, group=None) -> dict:
    """Recompute aggregates from per-replica records; ``group`` names the grouping keys."""
    if group is None:
        return {k: summarize([r[k] for r in records]) for k in keys}
    buckets = {}
    for r in records:
        label = ",".join(f"{g}={r[g]}" for g in group)
        buckets.setdefault(label, []).append(r)
    return {label: {k: summarize([r[k] for r in rs]) for k in keys} for label, rs in buckets.items()}


def bracket_rule(rule: str, value, lo: float, hi: float) -> dict:
    ok = value is not None and lo <= value <= hi
    return {"rule": rule, "value": value, "bracket": [lo, hi], "passed": bool(ok)}


def freezing_limit(gamma: float) -> float:
    return gamma**2 / 2 if gamma <= math.sqrt(2) else math.sqrt(2) * gamma - 1


# ---------------------------------------------------------------- experiment plumbing

def potential_of(cfg: ExperimentConfig) -> Potential:
    if isinstance(cfg.potential, str):
        return get_potential(cfg.potential)
    return Potential.from_deriv_cheb("custom", cfg.potential)


def replicas_of(cfg: ExperimentConfig, potential: Potential, M: int | None = None):
    kind = cfg.sampler
    if kind == "auto":
        kind = "gue" if potential.name == "gue" else "invariant"
    params = None
    if kind == "invariant":
        d = McmcParams.defaults(cfg.N)
        params = McmcParams(cfg.sweeps or d.sweeps, cfg.burn_in or d.burn_in,
                            cfg.proposal_scale or d.proposal_scale, cfg.thinning or d.thinning)
    job = SamplerJob(kind, cfg.N, potential, params)
    return run_replicas(job, M or cfg.M, cfg.seed, workers=cfg.workers)


def _fields(cfg, measure, M=None):
    return [CountingField(s, measure) for s in replicas_of(cfg, measure.potential, M)]


def run_eqm(cfg, measure) -> Outcome:
    x = cfg.grid_points()
    rows = list(zip(x, measure.density(x), measure.cdf(x)))
    return Outcome(
        aggregates={
            "lagrange_ell": measure.lagrange_ell,
            "edge_c_minus": measure.edge_c_minus,
            "edge_c_plus": measure.edge_c_plus,
            "psi_chebyshev_u": [float(c) for c in measure.density_cheb],
        },
        tables={"density": (("x", "density", "cdf"), rows)},
    )


def run_sample(cfg, measure) -> Outcome:
    spectra = replicas_of(cfg, measure.potential)
    records, rows = [], []
    for s in spectra:
        rec = {"replica": s.provenance["replica"], "seed": s.provenance["seed"], "N": s.n,
               "sampler_kind": s.provenance["sampler_kind"]}
        if "acceptance_rate" in s.provenance:
            rec["acceptance_rate"] = s.provenance["acceptance_rate"]
        records.append(rec)
        rows += [(rec["replica"], i + 1, v) for i, v in enumerate(s.values)]
    return Outcome(records=records, tables={"spectra": (("replica", "index", "value"), rows)})


def run_rigidity(cfg, measure) -> Outcome:
    recs = [{"replica": r, "N": cfg.N, "value": rigidity_stat(f)} for r, f in enumerate(_fields(cfg, measure))]
    agg = aggregate_records(recs, ["value"])
    return Outcome(recs, agg, [bracket_rule("rigidity-median", agg["value"]["median"], 0.7, 1.3)])


def run_maxfield(cfg, measure) -> Outcome:
    scale = math.sqrt(2) * math.log(cfg.N)
    recs = []
    for r, f in enumerate(_fields(cfg, measure)):
        rep = extrema(f)
        recs.append({"replica": r, "N": cfg.N, "max": rep.max_over_R, "min": rep.min_over_R,
                     "max_ratio": rep.max_over_R / scale, "min_ratio": -rep.min_over_R / scale,
                     "argmax": rep.argmax, "argmin": rep.argmin})
    agg = aggregate_records(recs, ["max", "min", "max_ratio", "min_ratio"])
    return Outcome(recs, agg, [
        bracket_rule("max-ratio-median", agg["max_ratio"]["median"], 0.8, 1.2),
        bracket_rule("min-ratio-median", agg["min_ratio"]["median"], 0.8, 1.2),
    ])


def run_ks(cfg, measure) -> Outcome:
    recs = []
    for r, f in enumerate(_fields(cfg, measure)):
        d = ks_distance(f)
        recs.append({"replica": r, "N": cfg.N, "d_K": d, "value": math.pi * cfg.N * d / math.log(cfg.N)})
    agg = aggregate_records(recs, ["d_K", "value"])
    return Outcome(recs, agg, [bracket_rule("ks-rate-median", agg["value"]["median"], 0.7, 1.3)])


def run_thick(cfg, measure) -> Outcome:
    recs = []
    for r, f in enumerate(_fields(cfg, measure)):
        for g in cfg.gamma:
            for sign in (1, -1):
                rep = thick_points(f, g, sign)
                recs.append({"replica": r, "N": cfg.N, "gamma": g, "sign": sign,
                             "measure": rep.lebesgue_measure, "value": rep.exponent})
    rules = []
    agg = {}
    for g in cfg.gamma:
        for sign in (1, -1):
            vals = [(-math.inf if x["value"] is None else x["value"])
                    for x in recs if x["gamma"] == g and x["sign"] == sign]
            med = float(np.median(vals))
            label = f"gamma={g},sign={sign}"
            agg[label] = {"median": finite_or_none(med), "empty": int(sum(v == -math.inf for v in vals))}
            rules.append(bracket_rule(f"thick-exponent[{label}]", finite_or_none(med),
                                      -g * g / 2 - 0.2, -g * g / 2 + 0.2))
    return Outcome(recs, agg, rules)


def run_freeze(cfg, measure) -> Outcome:
    recs = [{"replica": r, "N": cfg.N, "gamma": g, "value": free_energy(f, g)}
            for r, f in enumerate(_fields(cfg, measure)) for g in cfg.gamma]
    agg = aggregate_records(recs, ["value"], group=["gamma"])
    rules = [bracket_rule(f"freezing[gamma={g}]", agg[f"gamma={g}"]["value"]["median"],
                          freezing_limit(g) - 0.2, freezing_limit(g) + 0.2) for g in cfg.gamma]
    return Outcome(recs, agg, rules)


def _chaos_outcome(cfg, measures_by_gamma) -> Outcome:
    recs, rows = [], []
    for g, cm in measures_by_gamma:
        recs.append({"gamma": g, "total_mass": cm.total_mass(), "gini": gini(cm.density),
                     "normalization": cm.normalization_kind})
        rows += [(g, x, d) for x, d in zip(cm.grid, cm.density)]
    return Outcome(recs, {}, [], {"density": (("gamma", "x", "density"), rows)})


def run_gmc(cfg, measure) -> Outcome:
    spectra = replicas_of(cfg, measure.potential)
    grid = cfg.grid_points()
    return _chaos_outcome(cfg, [(g, chaos_density(spectra, measure, g, grid, cfg.normalization))
                                for g in cfg.gamma])


def run_meso_gmc(cfg, measure) -> Outcome:
    spectra = replicas_of(cfg, measure.potential)
    grid = cfg.grid_points()
    return _chaos_outcome(cfg, [(g, meso_chaos_density(spectra, measure, g, cfg.alpha, grid))
                                for g in cfg.gamma])


def run_dump_field(cfg, measure) -> Outcome:
    (spec,) = replicas_of(cfg, measure.potential, M=1)
    f = CountingField(spec, measure)
    x = cfg.grid_points()
    rep = extrema(f)
    return Outcome(
        [{"replica": 0, "N": cfg.N, "max": rep.max_over_R, "min": rep.min_over_R}],
        {"jump": JUMP},
        [],
        {"field": (("x", "h"), list(zip(x, h_at(f, x))))},
    )


def run_hankel_check(cfg, measure) -> Outcome:
    from . import hankel as hk

    pot = measure.potential
    recs = []
    for N in cfg.Ns:
        if cfg.kind == "single":
            g = cfg.gamma1
            z = hk.log_hankel(hk.HankelSpec(N, potential=pot), cfg.digits)
            for x in cfg.x:
                exact = float(hk.log_hankel(hk.HankelSpec(N, x, x, g, potential=pot), cfg.digits) - z)
                pred = hk.predict_single_jump(x, g, N, measure)
                recs.append({"spec": {"N": N, "x": x, "gamma": g}, "exact": exact,
                             "prediction": pred, "drift": exact - pred})
        elif cfg.kind == "merging":
            both = hk.HankelSpec(N, cfg.x1, cfg.x2, cfg.gamma1, cfg.gamma2, potential=pot)
            merged = hk.HankelSpec(N, cfg.x1, cfg.x1, cfg.gamma1 + cfg.gamma2, potential=pot)
            exact = float(hk.log_hankel(both, cfg.digits) - hk.log_hankel(merged, cfg.digits))
            pred = hk.predict_merging(cfg.x1, cfg.x2, cfg.gamma1, cfg.gamma2, N, measure)
            recs.append({"spec": {"N": N, "x1": cfg.x1, "x2": cfg.x2, "gamma1": cfg.gamma1,
                                  "gamma2": cfg.gamma2}, "exact": exact, "prediction": pred,
                         "drift": exact - pred})
        else:
            w = hk.PolyWeight(cfg.w or (0.0, 1.0))
            spec = hk.HankelSpec(N, cfg.x1, cfg.x2, cfg.gamma1, cfg.gamma2, w, pot)
            exact = hk.log_ratio(spec, cfg.digits)
            pred = hk.predict_smooth_term(cfg.x1, cfg.x2, cfg.gamma1, cfg.gamma2, w, N, measure)
            recs.append({"spec": {"N": N, "x1": cfg.x1, "x2": cfg.x2, "gamma1": cfg.gamma1,
                                  "gamma2": cfg.gamma2, "w": list(w.coeffs)}, "exact": exact,
                         "prediction": pred, "drift": exact - pred})
    drifts = [r["drift"] for r in recs]
    width = max(drifts) - min(drifts)
    return Outcome(recs, {"drift": summarize(drifts), "drift_range": width},
                   [bracket_rule("drift-band", width, 0.0, 1.5)])


def run_pv_check(cfg, measure) -> Outcome:
    from .painleve import integrate_sigma_pv, residual

    sol = integrate_sigma_pv(cfg.gamma1, cfg.gamma2, cfg.r_min, cfg.r_max)
    slope, icpt = sol.linear_fit()
    ts, ti = sol.target_slope(), sol.target_intercept()
    res = residual(sol)
    agg = {"slope_fit": slope, "intercept_fit": icpt, "targets": {"slope": ts, "intercept": ti},
           "residual_max": res, "shooting_param": sol.shooting_param}
    rules = [
        bracket_rule("pv-slope", slope / ts - 1, -0.02, 0.02),
        bracket_rule("pv-intercept", icpt / ti - 1 if ti else None, -0.05, 0.05),
        bracket_rule("pv-residual", res, 0.0, 1e-6),
    ]
    rows = list(zip(sol.r_grid, sol.sigma, sol.sigma_prime))
    return Outcome([], agg, rules, {"pv": (("r", "tau", "tau_prime"), rows)})


RUNNERS = {
    "eqm": run_eqm, "sample": run_sample, "rigidity": run_rigidity, "maxfield": run_maxfield,
    "ks": run_ks, "gmc": run_gmc, "meso-gmc": run_meso_gmc, "thick": run_thick, "freeze": run_freeze,
    "hankel-check": run_hankel_check, "pv-check": run_pv_check, "dump-field": run_dump_field,
}


# ---------------------------------------------------------------- output

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return finite_or_none(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_table(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def build_summary(cfg: ExperimentConfig, raw: dict, outcome: Outcome, seconds: float) -> dict:
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "rmtlab_version": __version__,
        "command": cfg.command,
        "config": {k: raw[k] for k in sorted(raw)},
        "records": outcome.records,
        "aggregates": outcome.aggregates,
        "acceptance": outcome.acceptance,
        "data_files": sorted(f"data_{name}.csv" for name in outcome.tables),
        "wall_clock_seconds": seconds,
    })


def run(raw: dict) -> tuple[dict, Path]:
    """Execute a configuration; returns the summary and the output directory."""
    cfg = resolve(raw)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(echo(raw))
    start = time.perf_counter()
    measure = solve_equilibrium(potential_of(cfg))
    outcome = RUNNERS[cfg.command](cfg, measure)
    seconds = time.perf_counter() - start
    for name, (header, rows) in outcome.tables.items():
        write_table(out / f"data_{name}.csv", header, rows)
    summary = build_summary(cfg, raw, outcome, seconds)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return summary, out


def _error_record(exc: Exception, code: int) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ReplicaError):
        rec["replica"] = exc.index
        rec["cause"] = type(exc.cause).__name__
    return rec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rmtlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="action", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        if name == "run":
            p.add_argument("--enforce", action="store_true", help="exit 4 if any acceptance rule fails")
            p.add_argument("--workers", type=int, help="parallel replica workers")
            p.add_argument("--out", help="output directory")
    args = parser.parse_args(argv)

    try:
        overrides = list(args.set)
        if args.action == "run":
            if args.workers is not None:
                overrides.append(f"workers={args.workers}")
            if args.out:
                overrides.append(f"out={args.out}")
            if args.enforce:
                overrides.append("enforce=true")
        raw = load(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(json.dumps(_error_record(exc, EXIT_CONFIG)), file=sys.stderr)
        return EXIT_CONFIG

    if args.action == "validate":
        problems = validate(raw)
        print(json.dumps({"diagnostics": problems}, indent=2))
        return EXIT_CONFIG if problems else EXIT_OK

    out = None
    try:
        cfg = resolve(raw)
        out = cfg.output_dir()
        summary, out = run(raw)
    except ConfigError as exc:
        code = EXIT_CONFIG
        err = exc
    except RmtlabError as exc:
        code = EXIT_NUMERIC
        err = exc
    else:
        failed = [r["rule"] for r in summary["acceptance"] if not r["passed"]]
        print(json.dumps({"out": str(out), "acceptance": summary["acceptance"]}, indent=2))
        if failed and cfg.enforce:
            print(f"acceptance failed: {', '.join(failed)}", file=sys.stderr)
            return EXIT_ACCEPTANCE
        return EXIT_OK

    record = _error_record(err, code)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(json.dumps(record), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
