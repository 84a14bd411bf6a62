"""
Experiment harness: configuration documents, (N x seed) sweeps and CSV
reports.

A configuration is a flat list of ``key = value`` lines; ``#`` starts a
comment. Values are JSON literals (numbers, lists, ``true``/``false``) or
bare strings, and ``[a..b]`` expands to the inclusive integer range::

    algorithm = cc
    problem = kkt-cc
    N = [100, 1000, 10000]
    seeds = [1..20]
    problem.noise = 1.0
"""

import csv
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cc_scgd import run_cc_scgd
from .core import default_schedule_cc, default_schedule_ec
from .diagnostics import fit_loglog_slope
from .ec_scgd import run_ec_scgd
from .problems import PROBLEM_KINDS, make_problem

RAW_COLUMNS = ["algo", "problem", "N", "seed", "obj_gap", "feas_resid",
               "dual_norm_max", "dual_norm_final", "wall_ms"]
METRICS = ["obj_gap", "abs_gap", "feas_resid", "dual_norm_max", "dual_norm_final"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    algorithm: str
    problem: str
    N: list
    seeds: list
    params: dict = field(default_factory=dict)
    lambda0: object = 0.0
    x0: object = "center"
    output: Optional[str] = None
    checkpoints: bool = False
    master_seed: int = 0

    @property
    def runs(self):
        return [(n, s) for n in self.N for s in self.seeds]


_PARAM_KEYS = {
    "problem.scenarios": str,
    "problem.alpha": float,
    "problem.gamma": float,
    "problem.gammas": list,
    "problem.p": list,
    "problem.c_p": list,
    "problem.mu": float,
    "problem.noise": float,
}
_TOP_KEYS = {"algorithm", "problem", "N", "seeds", "lambda0", "x0", "output",
             "checkpoints", "master_seed"}
_RANGE = re.compile(r"^\[\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*\]$")


def _parse_value(raw):
    m = _RANGE.match(raw)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return list(range(a, b + 1))
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
            return raw[1:-1]
        return raw


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int_list(key, v):
    if _is_int(v):
        v = [v]
    if not isinstance(v, list) or not v or not all(_is_int(i) for i in v):
        raise ConfigError(key, f"expected a nonempty list of integers, got {v!r}")
    return v


def _real_list(key, v):
    if _is_real(v):
        v = [v]
    if not isinstance(v, list) or not v or not all(_is_real(i) for i in v):
        raise ConfigError(key, f"expected a nonempty list of numbers, got {v!r}")
    return [float(i) for i in v]


def parse_config(text):
    """Parse and validate a configuration document into a :class:`RunConfig`."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TOP_KEYS and key not in _PARAM_KEYS:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "duplicate key")
        values[key] = _parse_value(raw)

    for key in ("algorithm", "problem", "N", "seeds"):
        if key not in values:
            raise ConfigError(key, "missing required key")

    algorithm = values["algorithm"]
    if algorithm not in ("ec", "cc"):
        raise ConfigError("algorithm", f"must be 'ec' or 'cc', got {algorithm!r}")
    problem = values["problem"]
    if problem not in PROBLEM_KINDS:
        raise ConfigError("problem", f"unknown problem {problem!r}; "
                                     f"choose from {sorted(PROBLEM_KINDS)}")
    if PROBLEM_KINDS[problem] != algorithm:
        raise ConfigError("algorithm", f"problem {problem!r} needs algorithm "
                                       f"{PROBLEM_KINDS[problem]!r}, got {algorithm!r}")

    Ns = _int_list("N", values["N"])
    if any(n < 1 for n in Ns):
        raise ConfigError("N", "every horizon must be >= 1")
    seeds = _int_list("seeds", values["seeds"])
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds", "seeds must be nonnegative")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "seeds must be distinct")

    lambda0 = values.get("lambda0", 0.0)
    lam = np.atleast_1d(_real_list("lambda0", lambda0))
    if np.any(lam < 0):
        raise ConfigError("lambda0", "must be nonnegative")

    x0 = values.get("x0", "center")
    if isinstance(x0, str):
        if x0 not in ("center", "zeros"):
            raise ConfigError("x0", f"expected 'center', 'zeros' or a vector, got {x0!r}")
    else:
        x0 = _real_list("x0", x0)

    checkpoints = values.get("checkpoints", False)
    if not isinstance(checkpoints, bool):
        raise ConfigError("checkpoints", "expected true or false")
    master_seed = values.get("master_seed", 0)
    if not _is_int(master_seed) or master_seed < 0:
        raise ConfigError("master_seed", "expected a nonnegative integer")
    output = values.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path")

    params = {}
    for key, kind in _PARAM_KEYS.items():
        if key not in values:
            continue
        v = values[key]
        name = key.split(".", 1)[1]
        if kind is str:
            if not isinstance(v, str):
                raise ConfigError(key, "expected a path")
        elif kind is float:
            if not _is_real(v):
                raise ConfigError(key, f"expected a number, got {v!r}")
            v = float(v)
        else:
            v = _int_list(key, v) if name == "p" else _real_list(key, v)
        params[name] = v
    _check_params(problem, params)

    return RunConfig(algorithm=algorithm, problem=problem, N=Ns, seeds=seeds,
                     params=params, lambda0=lambda0, x0=x0, output=output,
                     checkpoints=checkpoints, master_seed=master_seed)


def _check_params(problem, params):
    if "alpha" in params and not 0 < params["alpha"] < 1:
        raise ConfigError("problem.alpha", "must lie in (0, 1)")
    if "mu" in params and not params["mu"] > 0:
        raise ConfigError("problem.mu", "must be positive")
    if "p" in params and any(q < 2 or q % 2 for q in params["p"]):
        raise ConfigError("problem.p", "moment orders must be even integers >= 2")
    if "c_p" in params and any(c <= 0 for c in params["c_p"]):
        raise ConfigError("problem.c_p", "must be positive")
    if "p" in params or "c_p" in params:
        if len(params.get("p", [4])) != len(params.get("c_p", [0.5])):
            raise ConfigError("problem.c_p", "needs one bound per moment order")
    if "scenarios" in params and not os.path.isfile(params["scenarios"]):
        raise ConfigError("problem.scenarios", f"no such file {params['scenarios']!r}")
    try:
        make_problem(problem, **params)
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def run_seed(master_seed, N, seed):
    """Seed sequence of one run, a deterministic function of its identifiers."""
    return np.random.SeedSequence([int(master_seed), int(N), int(seed)])


def run_one(config, N, seed, master_seed=None):
    """Execute one ``(N, seed)`` run of ``config`` with a fresh oracle."""
    master = config.master_seed if master_seed is None else master_seed
    problem = make_problem(config.problem, **config.params)
    fs = problem.feasible_set
    if isinstance(config.x0, str):
        x0 = fs.center() if config.x0 == "center" else np.zeros(fs.dim)
    else:
        x0 = config.x0
    if config.algorithm == "ec":
        run, schedule = run_ec_scgd, default_schedule_ec(N)
    else:
        run, schedule = run_cc_scgd, default_schedule_cc(N)
    record = run(problem.oracle, fs, schedule, x0, config.lambda0,
                 run_seed(master, N, seed), f_star=problem.f_star,
                 problem=problem.name, checkpoints=config.checkpoints)
    record.seed = seed
    return record


def _run_job(args):
    config, N, seed, master = args
    try:
        return run_one(config, N, seed, master)
    except Exception as exc:
        raise RuntimeError(f"run N={N} seed={seed} failed: {exc}") from exc


def run_sweep(config, workers=1, master_seed=None):
    """One :class:`RunRecord` per ``(N, seed)`` pair, ordered by ``(N, seed)``.

    Each run seeds its oracle from ``(master_seed, N, seed)``, so the result
    does not depend on ``workers`` or on execution order.
    """
    master = config.master_seed if master_seed is None else master_seed
    jobs = [(config, n, s, master) for n, s in sorted(config.runs)]
    if workers <= 1:
        records = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs))
    return records


# -- reports ---------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def record_row(rec):
    return {"algo": rec.algorithm, "problem": rec.problem, "N": rec.N,
            "seed": rec.seed, "obj_gap": rec.obj_gap, "feas_resid": rec.feas_resid,
            "dual_norm_max": rec.dual_norm_max, "dual_norm_final": rec.dual_norm_final,
            "wall_ms": rec.wall_ms}


def write_raw_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for row in rows:
            w.writerow([row["algo"], row["problem"]]
                       + [_fmt(row[c]) for c in RAW_COLUMNS[2:]])


def read_raw_csv(path):
    """Parse a raw CSV back into row dictionaries (empty fields become ``None``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_COLUMNS:
            raise ValueError(f"{path}: expected columns {RAW_COLUMNS}, got {reader.fieldnames}")
        rows = []
        for r in reader:
            row = {"algo": r["algo"], "problem": r["problem"],
                   "N": int(r["N"]), "seed": int(r["seed"]) if r["seed"] else None}
            for c in RAW_COLUMNS[4:]:
                row[c] = float(r[c]) if r[c] != "" else None
            rows.append(row)
    return rows


def aggregate(rows):
    """Per-N mean and standard error of each metric.

    ``abs_gap`` averages ``|F(x_bar) - F*|``: with a zero initial multiplier
    the signed gap is typically negative, so rates are fitted on its modulus.
    """
    by_N = {}
    for row in rows:
        by_N.setdefault(row["N"], []).append(row)
    out = []
    for N in sorted(by_N):
        group = by_N[N]
        agg = {"N": N, "runs": len(group)}
        for m in METRICS:
            if m == "abs_gap":
                vals = [abs(r["obj_gap"]) for r in group if r["obj_gap"] is not None]
            else:
                vals = [r[m] for r in group if r[m] is not None]
            if vals:
                agg[m + "_mean"] = float(np.mean(vals))
                agg[m + "_se"] = (float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                                  if len(vals) > 1 else 0.0)
            else:
                agg[m + "_mean"] = agg[m + "_se"] = None
        out.append(agg)
    return out


def aggregate_columns():
    cols = ["N", "runs"]
    for m in METRICS:
        cols += [m + "_mean", m + "_se"]
    return cols


def write_aggregate_csv(agg, path):
    cols = aggregate_columns()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for a in agg:
            w.writerow([_fmt(a[c]) for c in cols])


def fitted_slopes(agg, min_N=100):
    """Log-log slopes of the mean ``|gap|`` and residual, where fittable."""
    slopes = {}
    for m in ("abs_gap", "feas_resid"):
        pts = [(a["N"], a[m + "_mean"]) for a in agg
               if a["N"] >= min_N and a[m + "_mean"] is not None and a[m + "_mean"] > 0]
        try:
            slopes[m] = fit_loglog_slope(pts)
        except ValueError:
            slopes[m] = None
    return slopes


def aggregate_path(path):
    root, ext = os.path.splitext(path)
    return f"{root}_agg{ext or '.csv'}"


def summarize(agg, slopes):
    lines = []
    for a in agg:
        parts = [f"N={a['N']:>8d}  runs={a['runs']:>3d}"]
        for m in ("abs_gap", "feas_resid", "dual_norm_final"):
            v = a[m + "_mean"]
            parts.append(f"{m}={'-' if v is None else f'{v:.4g}'}")
        lines.append("  ".join(parts))
    for m, s in slopes.items():
        lines.append(f"slope[{m}] = {'n/a' if s is None else f'{s:.4f}'}")
    return "\n".join(lines)


def emit_report(records, path, min_N=100):
    """Write the raw CSV to ``path`` and the per-N aggregate next to it.

    Returns the summary text (per-N means and fitted slopes).
    """
    if not records:
        raise ValueError("no records to report")
    rows = [record_row(r) for r in records]
    return report_rows(rows, path, aggregate_path(path), min_N=min_N)


def report_rows(rows, raw_path, agg_path, min_N=100):
    try:
        if raw_path is not None:
            write_raw_csv(rows, raw_path)
        agg = aggregate(rows)
        write_aggregate_csv(agg, agg_path)
    except OSError as exc:
        raise OSError(f"cannot write report: {exc}") from exc
    return summarize(agg, fitted_slopes(agg, min_N))
