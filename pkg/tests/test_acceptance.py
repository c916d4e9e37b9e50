"""Acceptance suite: one PASS/FAIL line per criterion.

Run standalone with ``python3 tests/test_acceptance.py`` (prints the lines)
or under pytest, where the lines appear in the terminal summary.  Monte Carlo
calibrations are cached in ``tests/.acceptance_cache`` keyed on their inputs
and on a hash of the package source, so a rerun after a code change starts
fresh.  Set TEAMSURV_NO_CACHE=1 to ignore the cache.

The unknown-team scans run with ``score_scale="memory"`` and the recursive
team statistics with ``exclude_self_pairs=True``; README.md explains both.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import teamsurv
from teamsurv import calibration as cal
from teamsurv import io as tio
from teamsurv.monitor import Monitor, two_sided_plans
from teamsurv.simharness import Scenario, poisson_counts, run_ats_experiment
from teamsurv.types import DistanceLinear, NetworkSnapshot, StatKind, SurveillancePlan, Team

HERE = Path(__file__).resolve().parent
CACHE = HERE / ".acceptance_cache"
ARTIFACTS = HERE / "acceptance_artifacts"
RESULTS: list[str] = []

pytestmark = pytest.mark.slow

# --- shared settings ----------------------------------------------------------

N = 100
CAL_REPS = 500
ATS_REPS = 1000
CAL_TOL = 0.05
HD_GRID = dict(n_values=[95, 110, 125, 140], lam_values=[0.45, 0.6, 0.75, 0.9, 1.0, 1.15],
               alpha=0.10, target_ats=100.0, reps=300, tol_frac=0.03)
HG_GRID = dict(n_values=[20, 25, 30, 35, 40], lam_values=[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
               alpha=0.10, target_ats=100.0, reps=500, tol_frac=0.03)


def _source_hash() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(teamsurv.__file__).parent.glob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


SOURCE = _source_hash()


def _cached(name: str, cfg: dict, fn):
    key = hashlib.sha256(json.dumps([SOURCE, name, cfg], sort_keys=True).encode()).hexdigest()[:20]
    path = CACHE / f"{name}-{key}.json"
    if path.exists() and not os.environ.get("TEAMSURV_NO_CACHE"):
        return json.loads(path.read_text())
    value = fn()
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps(value))
    return value


def _report(cid: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} {cid}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def _calibrated(plan: SurveillancePlan, sc: Scenario, seed: int, reps=CAL_REPS, tol=CAL_TOL,
                target=None) -> float:
    cfg = {"plan": plan.to_dict(), "scenario": sc.to_dict(), "seed": seed, "reps": reps,
           "tol": tol, "target": target}

    def run():
        return cal.calibrate_threshold(plan, sc, target, tol, reps, seed).h

    return _cached("cal", cfg, run)


def _outbreak_ats(plan, lam, team_size, delta, cal_seed, ats_seed):
    """Calibrate on in-control n=100 networks, then measure ATS after the change."""
    h = _calibrated(plan, Scenario("homogeneous", n=N, lam=lam), cal_seed)
    plan = replace(plan, threshold=h)
    sc = Scenario("collaborative", n=N, lam=lam, team=tuple(range(team_size)), delta=delta,
                  change_t=100)

    def run():
        r = run_ats_experiment(sc, plan, ATS_REPS, ats_seed, horizon=500)
        return {"h": h, "ats": r.mean_tts, "se": r.std_error, "censored": r.censored}

    return _cached("ats", {"plan": plan.to_dict(), "sc": sc.to_dict(), "seed": ats_seed,
                           "reps": ATS_REPS}, run)


def _gewma_scan(k):
    return SurveillancePlan(StatKind.GEWMA_STAR, k=k, score_scale="memory")


def _dewma_scan(k):
    return SurveillancePlan(StatKind.DEWMA, k=k, score_scale="memory")


def _within(x, ref, frac):
    return abs(x - ref) <= frac * ref


# --- criteria -----------------------------------------------------------------


def check_c1():
    r = _outbreak_ats(_gewma_scan(0.60), 0.2, 6, 1.0, cal_seed=11, ats_seed=12)
    return _report("C1", _within(r["ats"], 11.62, 0.20),
                   f"GEWMA scan k=0.60 lambda=0.2 team 6 delta 1: ATS {r['ats']:.2f} "
                   f"(se {r['se']:.2f}, h {r['h']:.4f}, {ATS_REPS} reps); need 11.62 +- 20%")


def check_c2():
    g = _outbreak_ats(_gewma_scan(0.60), 0.2, 6, 1.0, cal_seed=11, ats_seed=12)
    d = _outbreak_ats(_dewma_scan(0.45), 0.2, 6, 1.0, cal_seed=21, ats_seed=22)
    gap = d["ats"] - g["ats"]
    sd = math.hypot(d["se"], g["se"])
    return _report("C2", gap > 2 * sd,
                   f"DEWMA k=0.45 ATS {d['ats']:.2f} vs GEWMA k=0.60 ATS {g['ats']:.2f}; "
                   f"difference {gap:+.2f}, need > 2 sd = {2 * sd:.2f}")


def check_c3():
    # these reference values belong to a planted team of 9 (see README)
    g = _outbreak_ats(_gewma_scan(0.50), 0.7, 9, 0.5, cal_seed=31, ats_seed=32)
    d = _outbreak_ats(_dewma_scan(0.40), 0.7, 9, 0.5, cal_seed=41, ats_seed=42)
    ok = _within(g["ats"], 8.54, 0.20) and _within(d["ats"], 8.87, 0.20)
    return _report("C3", ok,
                   f"lambda=0.7 delta 0.5 team 9: GEWMA k=0.50 ATS {g['ats']:.2f} (need 8.54 +- 20%), "
                   f"DEWMA k=0.40 ATS {d['ats']:.2f} (need 8.87 +- 20%)")


def check_c4():
    r = _outbreak_ats(_gewma_scan(0.60), 0.4, 6, 1.0, cal_seed=51, ats_seed=52)
    return _report("C4", r["ats"] < 7,
                   f"GEWMA scan k=0.60 lambda=0.4 team 6 delta 1: ATS {r['ats']:.2f} "
                   f"(se {r['se']:.2f}); need < 7")


def _grid_samples(grid_kw: dict, plan: SurveillancePlan, seed: int):
    """Calibrated (n, lambda, h) per grid cell, each cell cached separately."""
    grid = cal.CalibrationGrid(**grid_kw)
    base = replace(plan, alpha=grid.alpha, target_ats=grid.target_ats)
    samples = []
    for idx, (n, lam) in enumerate(grid.cells()):
        sc = Scenario("homogeneous", n=n, lam=lam)
        cell_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
        h = _calibrated(base, sc, cell_seed, reps=grid.reps, tol=grid.tol_frac,
                        target=grid.target_ats)
        samples.append((n, lam, h))
    return grid, samples


def hd_surrogate():
    grid, samples = _grid_samples(HD_GRID, _dewma_scan(0.45), seed=61)
    return replace(cal.fit_hd_surrogate(samples), grid=grid.to_dict(), seed=61)


def hg_surrogate():
    grid, samples = _grid_samples(HG_GRID, _gewma_scan(0.60), seed=81)
    return replace(cal.fit_hg_surrogate(samples), grid=grid.to_dict(), seed=81)


def check_c5():
    model = hd_surrogate()
    plan = SurveillancePlan(StatKind.ADEWMA, k=0.45, alpha=0.10, threshold=1.005, surrogate=model,
                            score_scale="memory", target_ats=100)
    sc = Scenario("heterogeneous", a=-0.003, b=0.90, m_L=100, m_H=135)

    def run():
        r = cal.estimate_in_control_ats(plan, sc, reps=500, horizon=2000, seed=62)
        return {"ats": r.mean_tts, "se": r.std_error, "censored": r.censored}

    r = _cached("c5", {"plan": plan.to_dict(), "sc": sc.to_dict()}, run)
    return _report("C5", _within(r["ats"], 102.9, 0.20),
                   f"ADEWMA adjustment 1.005, a=-0.003, m 100-135: in-control ATS {r['ats']:.1f} "
                   f"(se {r['se']:.1f}, 500 reps, HD fit corr {model.correlation:.3f}); "
                   f"need 102.9 +- 20%")


def check_c6():
    team = Team(range(6))
    parts, ok = [], True
    for i, lam in enumerate((0.2, 0.7)):
        plan = SurveillancePlan(StatKind.GEWMA, team=team, exclude_self_pairs=True, target_ats=100)
        sc = Scenario("homogeneous", n=N, lam=lam)
        h = _calibrated(plan, sc, seed=70 + i, reps=1000, tol=0.02)

        def run():
            r = cal.estimate_in_control_ats(replace(plan, threshold=h), sc, reps=1000, seed=170 + i)
            return {"ats": r.mean_tts, "se": r.std_error}

        r = _cached("c6", {"plan": plan.to_dict(), "h": h, "lam": lam}, run)
        ok &= abs(r["ats"] - 100) <= 10
        parts.append(f"lambda={lam}: h {h:.4f} fresh ATS {r['ats']:.1f}")
    # surrogate band: thresholds predicted off the grid points
    model = hd_surrogate()
    for j, (n, lam) in enumerate([(100, 0.5), (118, 0.7), (132, 0.85), (103, 1.08)]):
        h = cal.predict_threshold(model, lam, n)
        plan = replace(_dewma_scan(0.45), alpha=0.10, threshold=h)
        sc = Scenario("homogeneous", n=n, lam=lam)

        def run():
            r = cal.estimate_in_control_ats(plan, sc, reps=500, horizon=2000, seed=180 + j)
            return {"ats": r.mean_tts, "se": r.std_error}

        r = _cached("c6b", {"plan": plan.to_dict(), "n": n, "lam": lam}, run)
        ok &= abs(r["ats"] - 100) <= 15
        parts.append(f"surrogate n={n} lambda={lam}: ATS {r['ats']:.1f}")
    return _report("C6", ok, "; ".join(parts) + " (need 100 +- 10 and 100 +- 15)")


def check_c7():
    files = ["tests/test_properties.py", "tests/test_smoothing.py", "tests/test_search.py",
             "tests/test_statistics.py"]
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          cwd=HERE.parent, capture_output=True, text=True)
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    return _report("C7", proc.returncode == 0, f"property suite: {last} ({time.time() - t0:.0f}s)")


def check_c8():
    model = hg_surrogate()
    out = {}
    for lam in (0.2, 0.7):
        plan = SurveillancePlan(StatKind.AGEWMA, k=0.60, alpha=0.10, threshold=1.0, surrogate=model,
                                score_scale="memory", target_ats=100)
        sc = Scenario("homogeneous", n=30, lam=lam)

        def run():
            r = cal.estimate_in_control_ats(plan, sc, reps=500, horizon=2000, seed=90)
            return {"ats": r.mean_tts, "se": r.std_error}

        out[lam] = _cached("c8", {"plan": plan.to_dict(), "lam": lam}, run)["ats"]
    a, b = out[0.2], out[0.7]
    rel = abs(a - b) / min(a, b)
    return _report("C8", rel <= 0.20,
                   f"AGEWMA n=30 in-control ATS {a:.1f} (lambda 0.2) vs {b:.1f} (lambda 0.7); "
                   f"relative gap {rel:.1%}, need <= 20%")


def check_c9():
    n, team = 30, Team(range(6))
    means = DistanceLinear(-0.01, 0.6)
    ic = Scenario("heterogeneous", a=-0.01, b=0.6, m_L=n, m_H=n)
    base = two_sided_plans(team, 0.0, 0.0, exclude_self_pairs=True, target_ats=200)
    hs, fresh = [], []
    for i, plan in enumerate(base):
        h = _calibrated(plan, ic, seed=300 + i, reps=1000, tol=0.03)

        def run():
            r = cal.estimate_in_control_ats(replace(plan, threshold=h), ic, reps=1000, seed=400 + i)
            return r.mean_tts

        hs.append(h)
        fresh.append(_cached("c9", {"plan": plan.to_dict(), "h": h}, run))
    plans = two_sided_plans(team, hs[0], hs[1], exclude_self_pairs=True, target_ats=200)
    # injected epochs: counts up on the team, then down
    up, down = range(201, 261), range(401, 481)
    lam = means.matrix(1, n)
    on_team = np.zeros((n, n), dtype=bool)
    on_team[np.ix_(list(team.members), list(team.members))] = True
    rng = np.random.default_rng(500)
    mon = Monitor(plans, means, n_max=n)
    events = []
    for t in range(1, 601):
        mult = 2.0 if t in up else 0.2 if t in down else 1.0
        y = poisson_counts(np.where(on_team, lam * mult, lam), rng)
        events.extend(e for e in mon.update(NetworkSnapshot(t, y)) if e.flagged)
    ARTIFACTS.mkdir(exist_ok=True)
    tio.render_chart([(c.t, c.upper, c.lower, c.upper_limit, c.lower_limit) for c in mon.chart],
                     ARTIFACTS / "two_sided_chart.svg", title="two-sided team monitor")
    tio.write_flags(events, ARTIFACTS / "two_sided_flags.csv")
    upper = [e.t for e in events if e.statistic == "GEWMA"]
    lower = [e.t for e in events if e.statistic == "L_GEWMA"]
    sides_ok = (any(t in up for t in upper) and any(t in down for t in lower)
                and not any(t in up for t in lower) and not any(t in down for t in upper))
    rate_ok = all(150 <= a <= 250 for a in fresh)
    first_up = min((t for t in upper if t in up), default=None)
    first_down = min((t for t in lower if t in down), default=None)
    return _report("C9", sides_ok and rate_ok,
                   f"up epoch first flagged t={first_up} (GEWMA), down epoch first flagged "
                   f"t={first_down} (L-GEWMA), no wrong-side flags: {sides_ok}; fresh in-control "
                   f"ATS {fresh[0]:.1f} upper / {fresh[1]:.1f} lower, need 200 +- 25%")


CHECKS = [check_c1, check_c2, check_c3, check_c4, check_c5, check_c6, check_c7, check_c8,
          check_c9]


@pytest.mark.parametrize("check", CHECKS, ids=[f"C{i}" for i in range(1, 10)])
def test_acceptance(check):
    assert check()


def main():
    t0 = time.time()
    for check in CHECKS:
        check()
    print(f"\n{sum(r.startswith('PASS') for r in RESULTS)}/{len(RESULTS)} criteria pass "
          f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
