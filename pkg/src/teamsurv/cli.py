"""Command-line front end.

Exit codes: 0 on success, 1 on a validation or search error, 2 on an I/O
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import calibration as cal
from . import io as tio
from .errors import TeamSurvError, ValidationError
from .monitor import Monitor
from .simharness import Scenario, generate_series, run_ats_experiment
from .types import StatKind, SurveillancePlan, Team

log = logging.getLogger("teamsurv")


def _ids(text: str | None) -> list[int] | None:
    """'1,2,5' (1-based) -> [0, 1, 4]."""
    if text is None:
        return None
    try:
        ids = [int(x) for x in text.replace("|", ",").split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad node list {text!r}") from None
    if any(i < 1 for i in ids):
        raise ValidationError("node ids are 1-based")
    return [i - 1 for i in ids]


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def build_plan(args) -> SurveillancePlan:
    """Plan from an optional JSON config, with command-line flags on top."""
    d = _load_json(args.plan) if getattr(args, "plan", None) else {}
    if getattr(args, "stat", None):
        d["statistic"] = args.stat
    for key in ("alpha", "k", "threshold", "target_ats", "score_scale"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "exclude_self_pairs", False):
        d["exclude_self_pairs"] = True
    team = _ids(getattr(args, "team", None))
    if team is not None:
        d["team"] = [i + 1 for i in team]
    leader = getattr(args, "leader", None)
    if leader is not None:
        d["leader"] = leader
    if getattr(args, "surrogate", None):
        d["surrogate"] = _load_json(args.surrogate)
    if "statistic" not in d:
        raise ValidationError("no statistic given (use --stat or a plan file)")
    return SurveillancePlan.from_dict(d)


# ---------------------------------------------------------------------------
# commands


def cmd_monitor(args) -> int:
    series = tio.parse_series(args.series)
    means = tio.parse_means(args.means, lam=args.lam, dist_linear=args.dist_linear,
                            n=series.n_max)
    plan = build_plan(args)
    plans = [plan]
    if args.two_sided:
        if plan.statistic is not StatKind.GEWMA:
            raise ValidationError("--two-sided needs --stat GEWMA and a --team")
        h_low = plan.threshold if args.lower_threshold is None else args.lower_threshold
        plans.append(replace(plan, statistic=StatKind.L_GEWMA, threshold=h_low))
    mon = Monitor(plans, means, n_max=series.n_max)
    events = mon.run(series)
    flagged = [e for e in events if e.flagged]
    if args.out_flags:
        tio.write_flags(events if args.all_events else flagged, args.out_flags)
    if args.out_chart:
        pts = [(c.t, c.upper, c.lower, c.upper_limit, c.lower_limit) for c in mon.chart]
        tio.render_chart(pts, args.out_chart, title=plan.statistic.value)
    first = min((e.t for e in flagged), default=None)
    print(json.dumps({"steps": series.T, "flags": len(flagged), "first_flag_t": first}))
    return 0


def cmd_simulate(args) -> int:
    sc = Scenario.load(args.scenario)
    series = generate_series(sc, seed=args.seed, T=args.T)
    tio.write_series(series, args.out)
    print(json.dumps({"T": series.T, "n_max": series.n_max, "out": str(args.out)}))
    return 0


def cmd_ats(args) -> int:
    sc = Scenario.load(args.scenario)
    plan = build_plan(args)
    if sc.has_outbreak():
        rep = run_ats_experiment(sc, plan, args.reps, args.seed,
                                 horizon=args.horizon or 500)
    else:
        rep = cal.estimate_in_control_ats(plan, sc, args.reps, args.horizon, args.seed)
    print(json.dumps(rep.to_dict()))
    return 0


def cmd_calibrate(args) -> int:
    sc = Scenario.load(args.scenario)
    plan = build_plan(args)
    res = cal.calibrate_threshold(plan, sc, args.target_ats, args.tol, args.reps, args.seed)
    out = {"h": res.h, "report": res.report.to_dict(), "probes": len(res.probes)}
    if args.out:
        calibrated = replace(plan, threshold=res.h, target_ats=args.target_ats or plan.target_ats)
        Path(args.out).write_text(json.dumps(calibrated.to_dict(), indent=2) + "\n")
    print(json.dumps(out))
    return 0


def cmd_surrogate(args) -> int:
    kind = {"hd": "HD_LOG", "hg": "HG_RECIP"}[args.kind]
    if args.action == "predict":
        if args.model is None or args.lam is None or args.n is None:
            raise ValidationError("predict needs --model, --lambda and --n")
        model = cal.load_surrogate(args.model)
        if model.kind != kind:
            raise ValidationError(f"model is {model.kind}, --kind asked for {kind}")
        print(json.dumps({"h": cal.predict_threshold(model, args.lam, args.n)}))
        return 0
    if args.grid is None:
        raise ValidationError("fit needs --grid")
    spec = _load_json(args.grid)
    if "samples" in spec:
        samples = [tuple(s) for s in spec["samples"]]
        grid_d = {k: spec[k] for k in ("n_values", "lam_values") if k in spec}
    else:
        plan_d = spec.pop("plan", {"statistic": "DEWMA" if kind == "HD_LOG" else "GEWMA_STAR"})
        grid = cal.CalibrationGrid(**spec)
        plan = SurveillancePlan.from_dict(plan_d)
        samples = cal.calibrate_grid(grid, plan, seed=args.seed)
        grid_d = grid.to_dict()
    if not grid_d:
        grid_d = {"n_values": sorted({int(s[0]) for s in samples}),
                  "lam_values": sorted({float(s[1]) for s in samples})}
    fit = cal.fit_hd_surrogate if kind == "HD_LOG" else cal.fit_hg_surrogate
    model = replace(fit(samples), grid=grid_d, seed=args.seed)
    if args.out:
        cal.save_surrogate(model, args.out)
    print(json.dumps({"kind": kind, "samples": len(samples),
                      "residual_se": model.residual_se, "correlation": model.correlation}))
    return 0


# ---------------------------------------------------------------------------
# parser


def _plan_flags(p, with_stat=True):
    p.add_argument("--plan", help="JSON plan config; other flags override its fields")
    if with_stat:
        p.add_argument("--stat", choices=[k.value for k in StatKind])
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--surrogate", help="fitted surrogate JSON")
    p.add_argument("--team", help="comma-separated 1-based node ids")
    p.add_argument("--leader", type=int, help="1-based leader id")
    p.add_argument("--score-scale", choices=["raw", "memory"])
    p.add_argument("--exclude-self-pairs", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teamsurv", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monitor", help="run a plan over a count series")
    p.add_argument("--series", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--means")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--dist-linear", help="a,b for lambda = a|i-j| + b")
    _plan_flags(p)
    p.add_argument("--two-sided", action="store_true", help="add an L-GEWMA chart on the same team")
    p.add_argument("--lower-threshold", type=float, help="L-GEWMA threshold (default: --threshold)")
    p.add_argument("--out-flags")
    p.add_argument("--all-events", action="store_true", help="write unflagged evaluations too")
    p.add_argument("--out-chart")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="generate a count series from a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ats", help="average time to signal of a plan on a scenario")
    p.add_argument("--scenario", required=True)
    _plan_flags(p)
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_ats)

    p = sub.add_parser("calibrate", help="find h giving a target in-control ATS")
    p.add_argument("--scenario", required=True)
    _plan_flags(p)
    p.add_argument("--target-ats", type=float)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=cal.DEFAULT_PROBE_REPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the calibrated plan here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("surrogate", help="fit or evaluate a threshold surrogate")
    p.add_argument("action", choices=["fit", "predict"])
    p.add_argument("--kind", choices=["hd", "hg"], required=True)
    p.add_argument("--grid", help="grid JSON (CalibrationGrid fields + plan) or {samples: [[n, lambda, h], ...]}")
    p.add_argument("--model")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_surrogate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TeamSurvError as exc:
        # validation failures and unsuccessful searches (no bracket, budget)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
