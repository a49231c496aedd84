"""Command line front end.

    adaptive-consensus check <scenario>
    adaptive-consensus run <scenario> [--scheme S] [--seed N] [--step H] [--horizon T] [--out DIR]
    adaptive-consensus compare <scenario> --schemes a,b,c [--out DIR]

``<scenario>`` is a JSON path or a preset name. Exit codes: 0 success,
1 assumption failure, 2 schema/parse failure, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adaptation as ad
from .agents import gradient_check
from .graph import has_spanning_tree
from .scenario import AssumptionError, ScenarioError, build_scenario, read_document, resolve
from .simulator import run, tail_metrics

EXIT_OK, EXIT_ASSUMPTION, EXIT_SCHEMA, EXIT_DIVERGED = 0, 1, 2, 3
OUT_ENV = "ADAPTIVE_CONSENSUS_OUT"

GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set multiplot layout 2,1
plot for [i=2:{last_p}] '{csv}' using 1:i with lines
plot for [i={first_v}:{last_v}] '{csv}' using 1:i with lines
unset multiplot
"""


@dataclass
class RunManifest:
    scenario: str
    out: Path
    overrides: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        doc, base = read_document(self.scenario)
        return resolve(doc, base, self.overrides)


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def check_report(doc: dict) -> tuple[int, list[str]]:
    """Validate a resolved scenario; returns ``(exit_code, report_lines)``."""
    lines = []
    try:
        sc = build_scenario(doc)
    except AssumptionError as exc:
        return EXIT_ASSUMPTION, [f"FAIL assumption: {exc}"]
    except (ScenarioError, ValueError) as exc:
        return EXIT_SCHEMA, [f"FAIL schema: {exc}"]
    ok = True
    _, root = has_spanning_tree(sc.transform.lap)
    lines.append(f"PASS spanning tree: root agent {root + 1}")

    res = sc.transform.residuals()
    worst = max(res.values())
    good = worst <= 1e-10
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'} transform residuals: max {worst:.2e} "
                 + " ".join(f"{k}={v:.1e}" for k, v in res.items()))

    g = sc.gains
    cert = g.check(sc.transform.R)
    good = all(cert.values())
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'} gains: gamma1={g.gamma1:g} gamma2={g.gamma2:g} "
                 f"abscissa={g.abscissa:.4g} lyapunov_residual={g.residual:.2e} sigma={g.sigma:.4g} "
                 f"P_min={g.P_min:.4g} P_max={g.P_max:.4g}")

    worst = 0.0
    grid = np.linspace(-doc["ic_range"], doc["ic_range"], 201)
    for a in sc.agents:
        for v in grid:
            worst = max(worst, gradient_check(a.regressor, float(v)))
    good = worst <= 1e-6
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'} rho/zeta gradient check: max relative error {worst:.2e}")

    if sc.scheme == "zhang":
        try:
            ad.zhang_params(sc.transform.lap, sc.kappa)
            if sc.agents[0].regressor.m:
                raise ad.SchemeError("the leader must be free of uncertainty")
            lines.append("PASS leader-following form")
        except ad.SchemeError as exc:
            lines.append(f"FAIL leader-following form: {exc}")
            return EXIT_ASSUMPTION, lines
    return (EXIT_OK if ok else EXIT_ASSUMPTION), lines


def _run_dir(out: Path, doc: dict) -> Path:
    d = out / f"{doc.get('name', 'scenario')}_{doc['scheme']}_seed{doc['seed']}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def execute(doc: dict, out: Path) -> dict:
    """Build, run and write one scenario; returns a summary dict (process-pool safe)."""
    sc = build_scenario(doc)
    traj = run(sc)
    d = _run_dir(out, doc)
    csv = traj.write_csv(d / "trajectory.csv")
    traj.meta["gains"]["P"] = sc.gains.P.tolist()
    traj.write_meta(d / "meta.json")
    n = sc.n
    first_v = n + 2
    (d / "plot.gp").write_text(GNUPLOT.format(
        csv=csv.name, last_p=n + 1, first_v=first_v if sc.order == 2 else 2,
        last_v=2 * n + 1 if sc.order == 2 else n + 1))
    summary = {"scheme": sc.scheme, "dir": str(d), "diverged": traj.diverged,
               "final_disagreement": float(traj.disagreement[-1])}
    if not traj.diverged:
        mean, mx = tail_metrics(traj, 0.2)
        summary.update(tail_mean=mean, tail_max=mx)
    else:
        summary.update(diverged_at=traj.meta["diverged_at"], reason=traj.meta["diverged_reason"])
    return summary


def _load(args, overrides) -> dict:
    return RunManifest(args.scenario, Path(args.out or default_out()), overrides).resolved()


def cmd_check(args) -> int:
    try:
        doc = _load(args, {"seed": args.seed})
    except ScenarioError as exc:
        print(f"FAIL schema: {exc}")
        return EXIT_SCHEMA
    code, lines = check_report(doc)
    print("\n".join(lines))
    return code


def _overrides(args) -> dict:
    return {"scheme": getattr(args, "scheme", None), "seed": args.seed, "step": args.step,
            "horizon": args.horizon, "ic_range": args.ic_range, "k": args.k, "kappa": args.kappa}


def cmd_run(args) -> int:
    try:
        doc = _load(args, _overrides(args))
    except ScenarioError as exc:
        print(f"FAIL schema: {exc}")
        return EXIT_SCHEMA
    code, lines = check_report(doc)
    if code != EXIT_OK:
        print("\n".join(lines))
        return code
    try:
        summary = execute(doc, Path(args.out or default_out()))
    except ad.SchemeError as exc:
        print(f"FAIL assumption: {exc}")
        return EXIT_ASSUMPTION
    print(f"wrote {summary['dir']}")
    if summary["diverged"]:
        print(f"DIVERGED at t={summary['diverged_at']:g} ({summary['reason']}); partial log retained")
        return EXIT_DIVERGED
    print(f"tail mean disagreement {summary['tail_mean']:.3e}  tail max {summary['tail_max']:.3e}  "
          f"final {summary['final_disagreement']:.3e}")
    return EXIT_OK


def cmd_compare(args) -> int:
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    unknown = [s for s in schemes if s not in ad.SCHEMES]
    if unknown or not schemes:
        print(f"FAIL schema: unknown schemes {unknown}; choose from {', '.join(ad.SCHEMES)}")
        return EXIT_SCHEMA
    try:
        base = _load(args, _overrides(args))
    except ScenarioError as exc:
        print(f"FAIL schema: {exc}")
        return EXIT_SCHEMA
    docs = []
    for s in schemes:
        doc = dict(base, scheme=s)
        code, lines = check_report(doc)
        if code != EXIT_OK:
            print(f"[{s}]\n" + "\n".join(lines))
            if s == "zhang" and code == EXIT_ASSUMPTION:
                print("zhang needs L = [[0, 0], [-b, L_o + B]]: agent 1 is an uncertainty-free "
                      "leader with no incoming edges and a spanning tree rooted at it")
            return code
        if s in ("zhang", "example1") and doc["order"] != 1:
            print(f"FAIL assumption: the {s} scheme is defined for first-order agents")
            return EXIT_ASSUMPTION
        if s == "example1":
            try:
                ad.example1_update(build_scenario(doc).transform.lap, np.zeros(2), [], 1.0)
            except ad.SchemeError as exc:
                print(f"FAIL assumption: {exc}")
                return EXIT_ASSUMPTION
        docs.append(doc)
    out = Path(args.out or default_out())
    if len(docs) > 1 and args.jobs != 1:
        with ProcessPoolExecutor(max_workers=min(len(docs), args.jobs or len(docs))) as ex:
            results = list(ex.map(execute, docs, [out] * len(docs)))
    else:
        results = [execute(d, out) for d in docs]

    print(f"seed {base['seed']}, tail = last 20% of horizon {base['horizon']:g}")
    print(f"{'scheme':<12} {'tail_mean':>12} {'tail_max':>12} {'final':>12}")
    for r in results:
        if r["diverged"]:
            print(f"{r['scheme']:<12} {'diverged':>12}")
        else:
            note = "  (reference only: needs global state)" if r["scheme"] == "centralized" else ""
            print(f"{r['scheme']:<12} {r['tail_mean']:>12.3e} {r['tail_max']:>12.3e} "
                  f"{r['final_disagreement']:>12.3e}{note}")
    ratios = {}
    ok = [r for r in results if not r["diverged"]]
    if len(ok) > 1:
        print("ratio of tail means (row / column)")
        print(" " * 12 + "".join(f"{r['scheme']:>12}" for r in ok))
        for a in ok:
            row = []
            for b in ok:
                ratio = a["tail_mean"] / b["tail_mean"] if b["tail_mean"] > 0 else float("inf")
                ratios[f"{a['scheme']}/{b['scheme']}"] = ratio
                row.append(f"{ratio:>12.3g}")
            print(f"{a['scheme']:<12}" + "".join(row))
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps({"seed": base["seed"], "results": results,
                                                  "ratios": ratios}, indent=2))
    return EXIT_DIVERGED if any(r["diverged"] for r in results) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-consensus", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme=True):
        p.add_argument("scenario", help="scenario JSON path or preset name")
        if scheme:
            p.add_argument("--scheme", choices=ad.SCHEMES)
        p.add_argument("--seed", type=int)
        p.add_argument("--step", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--ic-range", type=float, dest="ic_range")
        p.add_argument("--k", type=float)
        p.add_argument("--kappa", type=float)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")

    p = sub.add_parser("check", help="validate a scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="simulate one scenario and write CSV + metadata")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several schemes with one seed")
    common(p, scheme=False)
    p.add_argument("--schemes", required=True, help="comma separated, e.g. zhang,distributed")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = one per scheme)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
