"""Experiment dispatch, result files and run manifests.

Each experiment kind returns an :class:`Outcome`: rows for the results CSV
(``t,estimate,stderr,n``), a JSON-able summary, named sub-criteria and the
number of light-cone audit violations left after retries.  Everything except
the manifest's wall time is a function of the configuration alone.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .experiments import (
    audit_failures, brute_force_replica, conjugacy_replica, coupled_replica, coupling_replica,
    current_replica, run_replicas, stack,
)
from .lpp import corner_passage, shape_g, shape_gamma
from .stats.estimators import (
    EnsembleEstimate, cauchy_stable, clt_diagnostic, current_variance, increment_covariance,
    martingale_check, mean_estimate, relation_sides, trend_slope, variance_estimate,
    velocity_and_tails, weighted_slope,
)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 3

# tolerances of the built-in criteria
VELOCITY_TOL = 0.05
CURRENT_REL_TOL = 0.15
RELATION_REL_GAP = 0.15
CAUCHY_REL = 0.1
# bounded curves have exponent 0, sqrt(t) growth has 1/2
BOUNDED_EXPONENT = 0.25
SHAPE_BAND = (3.80, 4.02)
LEVEL_CURVE_TOL = 1e-12


@dataclass
class Outcome:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    violations: int = 0

    @property
    def status(self):
        if self.violations:
            return "inconclusive"
        vals = list(self.criteria.values())
        if any(v is False for v in vals):
            return "fail"
        if any(v is None for v in vals):
            return "inconclusive"
        return "pass"

    @property
    def exit_code(self):
        return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[self.status]


def _est(e):
    return {"value": e.value, "stderr": e.stderr, "n": e.n, "ci95": list(e.ci95)}


def _row(t, e):
    return {"t": float(t), "estimate": e.value, "stderr": e.stderr, "n": e.n}


# ------------------------------------------------------------------ kinds


def _verify_coupling(cfg, workers):
    res = run_replicas(
        coupling_replica, cfg.seed, cfg.replicas, workers, t=cfg.t,
        halfwidth=cfg.observe, samples=cfg.samples, rho=cfg.rho,
    )
    keys = {"envelope_identity": "envelope", "dynamics_identity": "dynamics",
            "second_class_identity": "R", "label_window_certified": "certified"}
    crit = {name: all(r[k] for r in res) for name, k in keys.items()}
    good = [all(r[k] for k in keys.values()) for r in res]
    frac = EnsembleEstimate(len(res), sum(good) / len(res), 0.0)
    summary = {
        "runs": len(res), "runs_exact": int(sum(good)),
        "failed_seeds": [i for i, g in enumerate(good) if not g],
        "events": int(sum(r["events"] for r in res)),
    }
    return Outcome([_row(cfg.t, frac)], summary, crit, int(sum(r["violations"] for r in res)))


def _verify_lpp(cfg, workers):
    n = cfg.replicas
    conj = run_replicas(conjugacy_replica, cfg.seed, n, workers, size=cfg.size)
    brute = run_replicas(brute_force_replica, cfg.seed, n, workers, first=n)
    x = np.linspace(-1, 1, 1002)[1:-1]
    gam = shape_gamma(x, shape_g(x))
    level_err = float(np.max(np.abs(gam - 1.0)))
    crit = {
        "psi_conjugacy": all(conj), "dp_brute_force": all(brute),
        "level_curve": level_err <= LEVEL_CURVE_TOL,
    }
    summary = {
        "grids": n, "conjugacy_exact": int(sum(conj)), "brute_force_exact": int(sum(brute)),
        "level_curve_max_error": level_err, "level_curve_points": len(x),
    }
    rows = []
    if cfg.shape_n:
        vals = run_replicas(
            _corner_ratio, cfg.seed, cfg.shape_trials, workers, first=2 * n, size=cfg.shape_n,
        )
        e = mean_estimate(vals)
        crit["shape_mean"] = SHAPE_BAND[0] <= e.value <= SHAPE_BAND[1]
        summary["shape"] = {"n": cfg.shape_n, "mean_T_over_n": _est(e), "band": list(SHAPE_BAND)}
        rows.append(_row(cfg.shape_n, e))
    return Outcome(rows, summary, crit, 0)


def _corner_ratio(seed, size):
    return corner_passage(seed, size) / size


def _pad(cfg):
    # ``auto``: windows from the front speeds alone; an integer adds fixed padding
    return 0 if cfg.margin == "auto" else int(cfg.margin)


def _coupled(cfg, workers, t, samples, first=0):
    return run_replicas(
        coupled_replica, cfg.seed, cfg.replicas, workers, first=first,
        kernel=cfg.kernel, rho=cfg.rho, t=t, samples=samples, pad=_pad(cfg),
    )


def _current(cfg, workers, t, samples, first=0):
    return run_replicas(
        current_replica, cfg.seed, cfg.replicas, workers, first=first,
        kernel=cfg.kernel, rho=cfg.rho, t=t, samples=samples, pad=_pad(cfg),
    )


def _lln(cfg, workers):
    res = _coupled(cfg, workers, cfg.t, [cfg.t])
    v = cfg.kernel.velocity(cfg.rho)
    e = mean_estimate(stack(res, "R")[:, 0] / cfg.t)
    crit = {
        "velocity_ci_covers": e.covers(v),
        "velocity_within_tolerance": abs(e.value - v) <= VELOCITY_TOL,
    }
    summary = {"velocity": _est(e), "predicted": v, "tolerance": VELOCITY_TOL,
               "retries": int(stack(res, "retries").sum())}
    return Outcome([_row(cfg.t, e)], summary, crit, audit_failures(res))


def _ldp_tails(cfg, workers):
    times = sorted(cfg.times)
    v = cfg.kernel.velocity(cfg.rho)
    R_by_t, bad = [], 0
    for a, t in enumerate(times):
        res = _coupled(cfg, workers, t, [t], first=a * cfg.replicas)
        R_by_t.append(stack(res, "R")[:, 0])
        bad += audit_failures(res)
    rep = velocity_and_tails(R_by_t, times, cfg.epsilon, v)
    rows = []
    for t, k, n, p in zip(times, rep.counts, rep.n, rep.probabilities):
        rows.append(_row(t, EnsembleEstimate(n, p, math.sqrt(p * (1 - p) / n))))
    fit = rep.fit
    if fit.points < 2 or not math.isfinite(fit.stderr):
        ok = None
    else:
        ok = fit.slope < 0 and fit.ci95[1] < 0
    summary = {
        "epsilon": cfg.epsilon, "predicted_velocity": v, "counts": rep.counts,
        "wilson95": [list(c) for c in rep.intervals],
        "fit": {"slope": fit.slope, "stderr": fit.stderr, "ci95": list(fit.ci95),
                "intercept": fit.intercept, "points": fit.points},
    }
    return Outcome(rows, summary, {"tail_slope_negative": ok}, bad)


def _relation(cfg, workers):
    t, rho = cfg.t, cfg.rho
    lhs_runs = _current(cfg, workers, t, [t])
    Ts = [t / 2, t, 2 * t]
    rhs_runs = _coupled(cfg, workers, 2 * t, Ts, first=cfg.replicas)
    A = stack(lhs_runs, "A")[:, 0]
    dwell = stack(rhs_runs, "dwell")
    dwell_s = stack(rhs_runs, "dwell_s")
    lhs, rhs, rhs_exact = relation_sides(A, dwell[:, 1], dwell_s[:, 1], rho, t)
    c = 2 * rho * (1 - rho)
    by_T = [mean_estimate(dwell[:, a]) for a in range(len(Ts))]
    by_T = [EnsembleEstimate(e.n, c * e.value, c * e.stderr) for e in by_T]
    gap = abs(lhs.value - rhs.value) / abs(rhs.value) if rhs.value else math.inf
    crit = {
        "ci_overlap": lhs.overlaps(rhs),
        "relative_gap": gap <= RELATION_REL_GAP,
        "transience_cauchy": cauchy_stable(by_T, CAUCHY_REL),
    }
    summary = {
        "lhs": _est(lhs), "rhs": _est(rhs), "relative_gap": gap,
        "rhs_finite_t_weighted": _est(rhs_exact),
        "rhs_by_horizon": {repr(T): _est(e) for T, e in zip(Ts, by_T)},
    }
    rows = [_row(T, e) for T, e in zip(Ts, by_T)]
    return Outcome(rows, summary, crit, audit_failures(lhs_runs) + audit_failures(rhs_runs))


def _current_kind(cfg, workers):
    t, rho = cfg.t, cfg.rho
    res = _current(cfg, workers, t, [t / 2, t])
    N = stack(res, "N")
    comp = stack(res, "comp")
    var_half = current_variance(N[:, 0], t / 2)
    var = current_variance(N[:, 1], t)
    limit = rho * (1 - rho) * abs(1 - 2 * rho)
    m, mv, target = martingale_check(N[:, 1], comp[:, 1], cfg.kernel(1), rho, t)
    cov = increment_covariance(N[:, 0], N[:, 1])
    crit = {
        "martingale_mean": abs(m.value) <= 3 * m.stderr,
        "martingale_variance": abs(mv.value - target) <= 3 * mv.stderr,
        "increment_covariance_nonpositive": cov.ci95[0] <= 0,
    }
    if limit > 0:
        crit["variance_limit"] = abs(var.value - limit) <= CURRENT_REL_TOL * limit
    summary = {
        "var_over_t": _est(var), "limit": limit, "rel_tolerance": CURRENT_REL_TOL,
        "martingale_mean": _est(m), "martingale_variance": _est(mv),
        "martingale_variance_target": target, "increment_covariance": _est(cov),
    }
    rows = [_row(t / 2, var_half), _row(t, var)]
    return Outcome(rows, summary, crit, audit_failures(res))


def _variance_curve(cfg, workers):
    times = sorted(cfg.times)
    ests, bad = [], 0
    for a, t in enumerate(times):
        res = _current(cfg, workers, t, [t], first=a * cfg.replicas)
        ests.append(mean_estimate(stack(res, "A")[:, 0] ** 2 / t))
        bad += audit_failures(res)
    fit = trend_slope(times, ests)
    expect = cfg.expect or ("bounded" if cfg.kernel.drift != 0 else "growth")
    # growth exponent: slope of log(sigma_t^2 / t) against log t, delta-method weights
    pos = [(t, e) for t, e in zip(times, ests) if e.value > 0 and e.stderr > 0]
    expo = weighted_slope(
        [math.log(t) for t, _ in pos], [math.log(e.value) for _, e in pos],
        [(e.value / e.stderr) ** 2 for _, e in pos],
    )
    if expo.points < 2 or not math.isfinite(expo.stderr):
        ok = None
    elif expect == "growth":
        ok = expo.ci95[0] > 0
    else:
        ok = expo.ci95[1] < BOUNDED_EXPONENT
    summary = {
        "expect": expect, "bounded_exponent": BOUNDED_EXPONENT,
        "exponent": {"slope": expo.slope, "stderr": expo.stderr, "ci95": list(expo.ci95)},
        "linear_fit": {"slope": fit.slope, "stderr": fit.stderr, "ci95": list(fit.ci95)},
    }
    rows = [_row(t, e) for t, e in zip(times, ests)]
    return Outcome(rows, summary, {f"trend_{expect}": ok}, bad)


def _clt(cfg, workers):
    t = cfg.t
    res = _current(cfg, workers, t, [t])
    A = stack(res, "A")[:, 0]
    rep = clt_diagnostic(A, t)
    ve = variance_estimate(A / math.sqrt(t))
    crit = {
        "normality_not_rejected": not rep.rejected(0.01),
        "variance_consistent": rep.variance.overlaps(ve),
    }
    summary = {
        "degenerate": rep.degenerate, "ks_statistic": rep.statistic, "pvalue": rep.pvalue,
        "second_moment": _est(rep.variance), "sample_variance": _est(ve),
    }
    return Outcome([_row(t, rep.variance)], summary, crit, audit_failures(res))


KINDS = {
    "verify-coupling": _verify_coupling, "verify-lpp": _verify_lpp, "lln": _lln,
    "ldp-tails": _ldp_tails, "relation": _relation, "current": _current_kind,
    "variance-curve": _variance_curve, "clt": _clt,
}


# ------------------------------------------------------------------ files


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _num(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return _num(obj)


def dump_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def results_csv(rows):
    out = ["t,estimate,stderr,n"]
    for r in rows:
        out.append(f"{r['t']!r},{r['estimate']!r},{r['stderr']!r},{r['n']}")
    return "\n".join(out) + "\n"


def execute(cfg, workers=1):
    """Run the experiment of ``cfg``; returns ``(outcome, wall seconds)``."""
    t0 = time.perf_counter()
    out = KINDS[cfg.kind](cfg, workers)
    return out, time.perf_counter() - t0


def manifest(cfg, outcome, wall, files, error=None):
    m = {
        "config_text": cfg.text if cfg is not None else None,
        "config": cfg.echo() if cfg is not None else None,
        "code_version": __version__,
        "wall_time_s": wall,
        "audit": {"violations": outcome.violations if outcome else None},
        "criteria": outcome.criteria if outcome else {},
        "status": outcome.status if outcome else "config-error",
        "exit_code": outcome.exit_code if outcome else EXIT_CONFIG,
        "files": files,
    }
    if error:
        m["errors"] = error
    return m


def run_file(path, out_dir=".", workers=1):
    """Full ``run`` command: parse, execute, write files.  Returns the exit code.

    The manifest is written even for configuration errors.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = Path(path).read_text()
    try:
        cfg = parse_config(text)
    except ConfigError as e:
        m = manifest(None, None, 0.0, {}, e.problems)
        m["config_text"] = text
        (out_dir / (Path(path).stem + ".manifest.json")).write_text(dump_json(m))
        return EXIT_CONFIG, m
    stem = cfg.stem
    files = {
        "config": f"{stem}.config.txt", "results": f"{stem}.results.csv",
        "summary": f"{stem}.summary.json", "manifest": f"{stem}.manifest.json",
    }
    (out_dir / files["config"]).write_text(text)
    try:
        outcome, wall = execute(cfg, workers)
    except Exception as e:
        # still leave a manifest behind, then let the error surface
        failed = Outcome(criteria={"completed": False})
        m = manifest(cfg, failed, 0.0, files, [f"{type(e).__name__}: {e}"])
        (out_dir / files["manifest"]).write_text(dump_json(m))
        raise
    summary = {
        "kind": cfg.kind, "config": cfg.echo(), "criteria": outcome.criteria,
        "status": outcome.status, "audit_violations": outcome.violations,
        "results": outcome.summary,
    }
    (out_dir / files["results"]).write_text(results_csv(outcome.rows))
    (out_dir / files["summary"]).write_text(dump_json(summary))
    m = manifest(cfg, outcome, wall, files)
    (out_dir / files["manifest"]).write_text(dump_json(m))
    return outcome.exit_code, m


def validate_text(text):
    """``(ok, message)``: normalized echo or the itemized problems."""
    try:
        cfg = parse_config(text)
    except ConfigError as e:
        return False, "".join(f"error: {p}\n" for p in e.problems)
    return True, "ok\n" + cfg.normalized()

