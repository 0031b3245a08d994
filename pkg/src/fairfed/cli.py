"""Experiment runner.

Subcommands:
  gen     write a synthetic CSV
  oracle  Monte Carlo Bayes baselines of the synthetic generator
  cdp     single-server sweep
  fdp     federated sweep
  sweep   both, selected with --mode

Every sweep writes one CSV row per (cell, replicate, alpha) and a summary file
with means and normal-approximation 95% bands. Settings come from built-in
defaults, then the --config file, then the command line.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from fairfed.classifier import bayes_oracle, evaluate
from fairfed.core import (
    FairFedError,
    FederationConfig,
    InvalidConfig,
    PrivacyBudget,
    RngStream,
    default_delta,
    validate_dataset,
)
from fairfed.datagen import (CsvSchema, SyntheticSpec, load_csv, load_schema, partition_sites, write_csv,
                             write_schema)
from fairfed.pipeline import fit

ROW_COLUMNS = ("mode", "S", "N", "eps", "delta", "alpha", "rep", "seed",
               "error", "empirical_dd", "tau", "flags")
SUMMARY_COLUMNS = ("mode", "S", "N", "eps", "delta", "alpha", "reps",
                   "error_mean", "error_sd", "error_lo", "error_hi",
                   "dd_mean", "dd_sd", "dd_lo", "dd_hi", "tau_mean", "flagged")
ORACLE_COLUMNS = ("alpha", "bayes_risk", "intrinsic_dd", "tau_star", "fair_bayes_risk", "mc_n", "seed")

# FederationConfig fields settable from the [federation] section
_FED_KEYS = {
    "rho_star": float, "C_omega": float, "eta_tol": float, "k_eigen": int,
    "grid_resolution": int, "h": float, "M": int, "monotone": str, "cv_folds": int,
    "cross_fit": "bool", "private_pi": "bool", "noise": "bool", "cv_candidates": "floats",
}


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep over modes x sites x sizes x budgets, with every alpha evaluated per fit.

    ``n`` is the total sample size, shared equally across ``S`` sites.
    ``delta`` of None means (N_s / 2)^-2 per site.
    """

    modes: tuple[str, ...] = ("cdp",)
    alphas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    eps: tuple[float, ...] = (1.0,)
    n: tuple[int, ...] = (5000,)
    sites: tuple[int, ...] = (1,)
    reps: int = 1
    seed: int = 0
    test_n: int = 20000
    delta: float | None = None
    fed: dict = field(default_factory=dict)
    data: str | None = None
    test_data: str | None = None
    schema: str | None = None
    out: str = "results.csv"

    def validate(self) -> None:
        if self.reps < 1:
            raise InvalidConfig("reps must be >= 1")
        for m in self.modes:
            if m not in ("cdp", "fdp"):
                raise InvalidConfig(f"unknown mode {m!r}")
        if not (self.alphas and self.eps and self.n and self.sites):
            raise InvalidConfig("every sweep axis needs at least one value")
        if any(a < 0 for a in self.alphas):
            raise InvalidConfig("alpha must be >= 0")
        if any(s < 1 for s in self.sites) or any(n < 2 * s for n in self.n for s in self.sites):
            raise InvalidConfig("need S >= 1 and at least two records per site")
        if "cdp" in self.modes and any(s != 1 for s in self.sites):
            raise InvalidConfig("the cdp mode runs on a single site; use --sites 1")
        if self.data is not None and self.schema is None:
            raise InvalidConfig("--data needs --schema")
        for c in self.cells():
            self.config_for(*c[1:])  # raises on invalid combinations

    def cells(self):
        """(index, mode, S, N, eps) in a fixed order; the index seeds the mechanisms."""
        out = []
        for mode in self.modes:
            for S in self.sites:
                for N in self.n:
                    for e in self.eps:
                        out.append((len(out), mode, S, N, e))
        return out

    def site_delta(self, S: int, N: int) -> float:
        return self.delta if self.delta is not None else default_delta(N // S)

    def config_for(self, mode: str, S: int, N: int, eps: float) -> FederationConfig:
        budget = PrivacyBudget(eps, self.site_delta(S, N))
        return FederationConfig(budgets=(budget,) * S, alpha=self.alphas[0], **self.fed)


# ---------------------------------------------------------------- data

def _synthetic(plan: ExperimentPlan, N: int, rep: int):
    spec = SyntheticSpec()
    root = RngStream(plan.seed)
    # data and test draws depend on (N, rep) only, so every mode and budget sees the same records
    train = spec.sample(N, root.child("data", N, rep))
    test = spec.sample(plan.test_n, root.child("test", rep))
    return train, test


def _tabular(plan: ExperimentPlan):
    schema = load_schema(plan.schema)
    data = validate_dataset(load_csv(plan.data, schema), policy="clamp")
    test = None
    if plan.test_data is not None:
        test = validate_dataset(load_csv(plan.test_data, schema), policy="clamp")
    return data, test


def _task(args):
    plan, cell, rep = args
    idx, mode, S, N, eps = cell
    root = RngStream(plan.seed)
    if plan.data is None:
        data, test = _synthetic(plan, N, rep)
    else:
        data, test = _tabular(plan)
        if test is None:
            # hold out a fixed share of the file for scoring
            perm = root.child("holdout").generator().permutation(len(data))
            n_test = max(len(data) // 5, 1)
            test, data = data.subset(np.sort(perm[:n_test])), data.subset(np.sort(perm[n_test:]))
        if N > len(data):
            raise InvalidConfig(f"N = {N} exceeds the {len(data)} available records")
        data = data.subset(np.sort(root.child("subsample", N, rep).generator()
                                   .permutation(len(data))[:N]))
    sites = partition_sites(data, S, rng=root.child("partition", S, N, rep))
    config = plan.config_for(mode, S, N, eps)
    fitted = fit(config, sites, mode, root.child("cell", idx, rep))
    rows = []
    for alpha in plan.alphas:
        clf = fitted.classifier(alpha)
        m = evaluate(clf, test)
        rows.append({
            "mode": mode, "S": S, "N": N, "eps": eps, "delta": config.budgets[0].delta,
            "alpha": alpha, "rep": rep, "seed": plan.seed,
            "error": m.misclassification, "empirical_dd": m.empirical_dd,
            "tau": float(clf.tau), "flags": ";".join(m.flags),
        })
    return rows


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FAIRFED_THREADS", "1")))
    except ValueError:
        return 1


def run_rows(plan: ExperimentPlan) -> list[dict]:
    """Every per-replicate row of the plan, in cell / replicate / alpha order."""
    plan.validate()
    tasks = [(plan, cell, rep) for cell in plan.cells() for rep in range(plan.reps)]
    workers = min(_threads(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _band(values):
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    half = 1.96 * sd / math.sqrt(v.size)
    return mean, sd, mean - half, mean + half


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["mode"], r["S"], r["N"], r["eps"], r["delta"], r["alpha"]), []).append(r)
    out = []
    for key, rs in groups.items():
        em, esd, elo, ehi = _band([r["error"] for r in rs])
        dm, dsd, dlo, dhi = _band([r["empirical_dd"] for r in rs])
        out.append(dict(zip(SUMMARY_COLUMNS, (
            *key, len(rs), em, esd, elo, ehi, dm, dsd, dlo, dhi,
            float(np.mean([r["tau"] for r in rs])), sum(1 for r in rs if r["flags"])))))
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def summary_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_summary" + (out.suffix or ".csv"))


def run_plan(plan: ExperimentPlan) -> tuple[Path, Path]:
    rows = run_rows(plan)
    out = Path(plan.out)
    write_rows(out, rows, ROW_COLUMNS)
    summ = summary_path(out)
    write_rows(summ, summarize(rows), SUMMARY_COLUMNS)
    return out, summ


# ---------------------------------------------------------------- argument handling

def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"not a boolean: {text!r}")


def _parse_fed(section) -> dict:
    out = {}
    for key, value in section.items():
        if key not in _FED_KEYS:
            raise InvalidConfig(f"unknown [federation] key {key!r}")
        kind = _FED_KEYS[key]
        if kind == "bool":
            out[key] = _bool(value)
        elif kind == "floats":
            out[key] = _floats(value)
        else:
            out[key] = kind(value)
    return out


def read_config(path) -> dict:
    """Plan settings from an INI file with [experiment], [privacy] and [federation] sections."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise InvalidConfig(f"cannot read config {path}")
    known = {"experiment", "privacy", "federation"}
    extra = set(cp.sections()) - known
    if extra:
        raise InvalidConfig(f"unknown config sections {sorted(extra)}")
    plan = {}
    if cp.has_section("experiment"):
        conv = {"mode": lambda v: tuple(str(v).replace(",", " ").split()), "alpha": _floats,
                "n": _ints, "sites": _ints, "reps": int, "seed": int, "test_n": int,
                "out": str, "data": str, "test_data": str, "schema": str}
        names = {"mode": "modes", "alpha": "alphas"}
        for key, value in cp["experiment"].items():
            if key not in conv:
                raise InvalidConfig(f"unknown [experiment] key {key!r}")
            plan[names.get(key, key)] = conv[key](value)
    if cp.has_section("privacy"):
        for key, value in cp["privacy"].items():
            if key == "eps":
                plan["eps"] = _floats(value)
            elif key == "delta":
                plan["delta"] = float(value)
            else:
                raise InvalidConfig(f"unknown [privacy] key {key!r}")
    if cp.has_section("federation"):
        plan["fed"] = _parse_fed(cp["federation"])
    return plan


def _common(p: argparse.ArgumentParser, with_mode: bool) -> None:
    p.add_argument("--config", help="INI file; command-line flags override it")
    if with_mode:
        p.add_argument("--mode", type=lambda v: tuple(v.replace(",", " ").split()),
                       help="modes to run, e.g. cdp,fdp")
    p.add_argument("--alpha", type=_floats, help="disparity levels, comma separated")
    p.add_argument("--eps", type=_floats, help="per-site privacy budgets")
    p.add_argument("--delta", type=float, help="per-site leakage; default (N_s/2)^-2")
    p.add_argument("--n", type=_ints, help="total sample sizes")
    p.add_argument("--sites", type=_ints, help="numbers of sites S")
    p.add_argument("--reps", type=int, help="replicates per cell")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--test-n", type=int, dest="test_n", help="synthetic test-set size")
    p.add_argument("--h", type=float, help="fixed bandwidth instead of cross-validation")
    p.add_argument("--data", help="CSV of records instead of the synthetic generator")
    p.add_argument("--test-data", dest="test_data", help="CSV of test records")
    p.add_argument("--schema", help="schema file for --data")
    p.add_argument("--out", help="per-replicate CSV; the summary goes next to it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairfed", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic CSV")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--schema", help="also write a matching schema file here")

    o = sub.add_parser("oracle", help="Bayes risk, intrinsic disparity and fair thresholds")
    o.add_argument("--alpha", type=_floats, default=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6))
    o.add_argument("--mc-n", type=int, default=200_000, dest="mc_n")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)

    _common(sub.add_parser("cdp", help="single-server sweep"), with_mode=False)
    _common(sub.add_parser("fdp", help="federated sweep"), with_mode=False)
    _common(sub.add_parser("sweep", help="sweep over modes"), with_mode=True)
    return parser


def plan_from_args(args) -> ExperimentPlan:
    settings = read_config(args.config) if args.config else {}
    fed = dict(settings.pop("fed", {}))
    if args.command in ("cdp", "fdp"):
        settings["modes"] = (args.command,)
    elif getattr(args, "mode", None):
        settings["modes"] = args.mode
    overrides = {"alphas": args.alpha, "eps": args.eps, "delta": args.delta, "n": args.n,
                 "sites": args.sites, "reps": args.reps, "seed": args.seed,
                 "test_n": args.test_n, "data": args.data, "test_data": args.test_data,
                 "schema": args.schema, "out": args.out}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.h is not None:
        fed["h"] = args.h
    valid = {f.name for f in fields(ExperimentPlan)}
    plan = ExperimentPlan(**{k: v for k, v in settings.items() if k in valid})
    return replace(plan, fed=fed)


def _cmd_gen(args) -> None:
    data = SyntheticSpec().sample(args.n, RngStream(args.seed).child("data", args.n, 0))
    schema = CsvSchema.default(data.d)
    write_csv(args.out, data, schema)
    if args.schema:
        write_schema(args.schema, schema)


def _cmd_oracle(args) -> None:
    base = bayes_oracle(SyntheticSpec(), args.alpha, mc_n=args.mc_n,
                        rng=RngStream(args.seed).child("oracle"))
    rows = [dict(zip(ORACLE_COLUMNS, (al, base.bayes_risk_unconstrained, base.intrinsic_dd,
                                      t, r, base.mc_n, args.seed)))
            for al, t, r in zip(base.alphas, base.tau_star, base.fair_bayes_risk)]
    write_rows(args.out, rows, ORACLE_COLUMNS)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            _cmd_gen(args)
        elif args.command == "oracle":
            _cmd_oracle(args)
        else:
            rows_path, summ = run_plan(plan_from_args(args))
            print(f"wrote {rows_path} and {summ}")
    except (FairFedError, OSError, ValueError, KeyError) as exc:
        print(f"fairfed: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
