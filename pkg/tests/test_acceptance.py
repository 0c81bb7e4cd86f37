"""Acceptance criteria, one test and one report line each.

Run ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` to print them directly.
Figure-level checks use 1000 paired Monte-Carlo runs at 0 dB with seed 0.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest

from hlisa.baselines import bd_candidates, build_path_codebooks, dpc_sum_capacity, run_2smuhpa, run_bd
from hlisa.channel import ArrayGeometry, run_rng, sample_scenario
from hlisa.config import ScenarioConfig, preset
from hlisa.evaluation import aggregate, benchmark, db_to_power, evaluate_run, solution_rate
from hlisa.precoding import (PathModel, allocate, apply_ms_analog_constraints, lc_select_stream,
                             lisa_select_stream, run_h_lisa, run_lc_h_lisa, run_lc_lisa, run_lisa,
                             waterfill)

RUNS = 1000
SEED = 0
TOL = 1.0
INSTANCES = 500

REPORT: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    REPORT.append(line)
    print(line)


@lru_cache(maxsize=None)
def figure_runs(name: str):
    cfg = preset(name).with_overrides(snr_db=(0.0,), runs=RUNS, seed=SEED)
    per_run = [evaluate_run(cfg, i) for i in range(cfg.runs)]
    return cfg, per_run, aggregate(cfg, per_run)[0]


def band_checks(point, targets: dict, tol: float = TOL):
    parts, ok = [], True
    for alg, target in targets.items():
        mean = point.means[alg]
        good = abs(mean - target) <= tol and point.runs_used[alg] > 0
        ok &= good
        parts.append(f"{alg} {mean:.2f}+-{point.std_errors[alg]:.2f} (target {target:g}+-{tol:g}"
                     f"{'' if good else ' MISS'})")
    return ok, "; ".join(parts)


# ---------------------------------------------------------------------------
# criteria 1-4: figure reproduction at 0 dB
# ---------------------------------------------------------------------------

def check_fig3a():
    _, per_run, pt = figure_runs("fig3a")
    ok, detail = band_checks(pt, {"2SMUHPA-WF": 18, "2SMUHPA": 16, "LISA": 20, "LC-LISA": 20,
                                  "H-LISA": 20, "LC-H-LISA": 20, "capacity": 21})
    rates = [{r.algorithm: r.rate for r in recs} for recs in per_run]
    gap = max(abs(r["LISA"] - r["LC-LISA"]) for r in rates)
    ok &= gap <= 1e-6
    return ok, f"{detail}; max per-run |LISA - LC-LISA| {gap:.1e} (<= 1e-6)"


def check_fig3b():
    _, _, pt = figure_runs("fig3b")
    return band_checks(pt, {"2SMUHPA-WF": 13, "2SMUHPA": 12, "H-LISA": 19, "LC-H-LISA": 19,
                            "LISA": 20.5, "LC-LISA": 20.5, "capacity": 22})


def check_fig6():
    _, _, pt = figure_runs("fig6")
    return band_checks(pt, {"LISA": 26, "LC-LISA": 26, "H-LISA": 25, "LC-H-LISA": 25,
                            "2SMUHPA": 18, "2SMUHPA-WF": 18, "BD": 18, "capacity": 29})


def check_fig7():
    _, _, pt = figure_runs("fig7")
    ok, detail = band_checks(pt, {"2SMUHPA": 39, "2SMUHPA-WF": 39, "H-LISA": 48, "LC-H-LISA": 48,
                                  "LC-LISA": 48, "LISA": 49, "capacity": 65})
    parts = []
    for ams, full in (("H-LISA-AMS", "H-LISA"), ("LC-H-LISA-AMS", "LC-H-LISA")):
        loss = pt.means[full] - pt.means[ams]
        good = abs(loss) <= 1.5
        ok &= good
        parts.append(f"{ams} {pt.means[ams]:.2f} vs {full} ({loss:+.2f} bits, within 1.5{'' if good else ' MISS'})")
    return ok, f"{detail}; " + "; ".join(parts)


@pytest.mark.slow
def test_criterion_1_fig3a():
    ok, detail = check_fig3a()
    record(1, "single-path, single-antenna users", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_2_fig3b():
    ok, detail = check_fig3b()
    record(2, "three paths, single-antenna users", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_3_fig6():
    ok, detail = check_fig6()
    record(3, "two-antenna users with BD", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_4_fig7():
    ok, detail = check_fig7()
    record(4, "16-antenna users and phase-shifter receivers", ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# criterion 5: property suite on random instances
# ---------------------------------------------------------------------------

_BS_SHAPES = ((4, 4), (8, 8), (4, 2))
_MS_SHAPES = ((1, 1), (2, 1), (2, 2), (4, 1))


def random_instance(i: int):
    rng = run_rng(2024, i)
    K = int(rng.integers(1, 9))
    L = int(rng.integers(1, 5))
    bs = ArrayGeometry(*_BS_SHAPES[rng.integers(len(_BS_SHAPES))])
    ms = ArrayGeometry(*_MS_SHAPES[rng.integers(len(_MS_SHAPES))])
    n_rf = int(rng.integers(1, min(8, bs.size) + 1))
    n_rf_ms = int(rng.integers(1, ms.size + 1))
    P = db_to_power(float(rng.uniform(-10, 40)))
    paths = sample_scenario(rng, K, L)
    model = PathModel.from_path_sets(paths, bs, ms)
    return dict(K=K, L=L, bs=bs, ms=ms, n_rf=n_rf, n_rf_ms=n_rf_ms, P=P, paths=paths, model=model)


def instance_solutions(inst):
    H, model, n_rf, P, n_rf_ms = inst["model"].channels, inst["model"], inst["n_rf"], inst["P"], inst["n_rf_ms"]
    sols = {
        "LISA": run_lisa(H, n_rf, P),
        "H-LISA": run_h_lisa(H, n_rf, P),
        "LC-LISA": run_lc_lisa(model, n_rf, P),
        "LC-H-LISA": run_lc_h_lisa(model, n_rf, P),
        "H-LISA-AMS": run_h_lisa(H, n_rf, P, n_rf_ms=n_rf_ms),
        "LC-H-LISA-AMS": run_lc_h_lisa(model, n_rf, P, n_rf_ms=n_rf_ms),
    }
    if inst["K"] <= inst["bs"].size:
        cb = build_path_codebooks(inst["paths"], inst["bs"], inst["ms"])
        for mode, name in (("equal", "2SMUHPA"), ("waterfilling", "2SMUHPA-WF")):
            try:
                sols[name] = run_2smuhpa(H, cb, P, mode)
            except ArithmeticError:
                pass
    n_ms = inst["ms"].size
    if n_rf % n_ms == 0 and inst["ms"].size > 1:
        sols["BD"] = run_bd(H, P, n_rf, bd_candidates(H, n_rf))
    return sols


def cross_gain_ratio(sol, H):
    if sol.num_streams == 0:
        return 0.0
    E = np.stack([sol.stream_equalizers[:, j].conj() @ H[k] for j, k in enumerate(sol.pi)]) @ sol.stream_precoders
    diag = np.abs(np.diag(E))
    off = np.abs(E - np.diag(np.diag(E)))
    return float(off.max() / diag.max())


def structure_errors(inst):
    """Largest violation of the allocation-state invariants for all selectors."""
    H, model = inst["model"].channels, inst["model"]
    K, n_bs, n_ms = H.shape[0], H.shape[2], H.shape[1]
    selectors = [lambda s, c=None: lisa_select_stream(s, H, c),
                 lambda s, c=None: lc_select_stream(s, model, c)]
    selectors += [apply_ms_analog_constraints(sel, inst["n_rf_ms"], n_ms) for sel in selectors]
    worst = 0.0
    for sel in selectors:
        state, *_ = allocate(sel, K, n_bs, n_ms, inst["n_rf"], inst["P"])
        Q, L, T = state.Q, state.L, state.T
        scale = max(1.0, float(np.abs(L).max())) if L.size else 1.0
        errs = [np.abs(Q.conj().T @ Q - np.eye(Q.shape[1])).max() if Q.size else 0.0,
                np.abs(np.triu(L, 1)).max() / scale if L.size else 0.0,
                np.abs(T @ T - T).max(), np.abs(T - T.conj().T).max(),
                np.abs(T @ Q).max() if Q.size else 0.0,
                max(np.abs(S @ S - S).max() for S in state.S)]
        worst = max(worst, *map(float, errs))
    return worst


def bisection_waterfill(lam, P, iters=200):
    floors = 1 / np.asarray(lam, float) ** 2
    lo, hi = 0.0, floors.max() + P
    for _ in range(iters):
        mu = (lo + hi) / 2
        if np.maximum(mu - floors, 0).sum() > P:
            hi = mu
        else:
            lo = mu
    return np.maximum((lo + hi) / 2 - floors, 0)


def check_properties(n=INSTANCES):
    worst = dict(cross=0.0, power=-np.inf, structure=0.0, modulus=0.0, audit=0.0,
                 ams_audit=-np.inf, capacity=-np.inf, waterfill=0.0)
    counts = dict(solutions=0, audited=0, ams_audited=0)
    for i in range(n):
        inst = random_instance(i)
        H, P = inst["model"].channels, inst["P"]
        sols = instance_solutions(inst)
        cap = dpc_sum_capacity(H, P, tol=1e-10, max_iters=5000).capacity
        worst["structure"] = max(worst["structure"], structure_errors(inst))
        for name, sol in sols.items():
            counts["solutions"] += 1
            rate = solution_rate(sol, H)
            worst["cross"] = max(worst["cross"], cross_gain_ratio(sol, H))
            worst["power"] = max(worst["power"], float(np.linalg.norm(sol.stream_precoders) ** 2 - P))
            worst["capacity"] = max(worst["capacity"], rate - cap)
            if sol.analog is not None and sol.num_streams:
                worst["modulus"] = max(worst["modulus"],
                                       float(np.abs(np.abs(sol.analog) - 1 / math.sqrt(H.shape[2])).max()))
            if name.endswith("AMS") and sol.num_streams:
                worst["modulus"] = max(worst["modulus"],
                                       float(np.abs(np.abs(sol.stream_equalizers) - 1 / math.sqrt(H.shape[1])).max()))
            orthonormal = all(np.allclose(G.conj().T @ G, np.eye(G.shape[1]), rtol=0, atol=1e-9) for G in sol.equalizers)
            if orthonormal:
                counts["audited"] += 1
                worst["audit"] = max(worst["audit"], abs(rate - sol.sum_rate))
            else:
                # correlated noise across phase-only equalizers of one user:
                # joint decoding can only gain over per-stream accounting
                counts["ams_audited"] += 1
                worst["ams_audit"] = max(worst["ams_audit"], sol.sum_rate - rate)
        wrng = run_rng(77, i)
        lam = np.exp(wrng.uniform(np.log(1e-2), np.log(1e2), int(wrng.integers(1, 13))))
        Pw = float(np.exp(wrng.uniform(np.log(1e-2), np.log(1e4))))
        alloc = waterfill(lam, Pw)
        oracle = bisection_waterfill(lam, Pw)
        active = alloc.powers > 0
        kkt = np.ptp(alloc.powers[active] + 1 / lam[active] ** 2) / max(1.0, Pw)
        worst["waterfill"] = max(worst["waterfill"], float(np.abs(alloc.powers - oracle).max() / max(1.0, Pw)), kkt)
    checks = [
        ("zero interference", worst["cross"] < 1e-7, f"max relative cross-gain {worst['cross']:.1e} (< 1e-7)"),
        ("power budget", worst["power"] <= 1e-6, f"max excess power {worst['power']:.1e} (<= 1e-6)"),
        ("Q/L/projector structure", worst["structure"] <= 1e-9, f"max violation {worst['structure']:.1e} (<= 1e-9)"),
        ("constant modulus", worst["modulus"] <= 1e-12, f"max modulus error {worst['modulus']:.1e}"),
        ("log-det audit identity", worst["audit"] <= 1e-6,
         f"max |audited - internal| {worst['audit']:.1e} over {counts['audited']} orthonormal-equalizer solutions (<= 1e-6)"),
        ("phase-only equalizer audit bound", worst["ams_audit"] <= 1e-9,
         f"max internal - audited {worst['ams_audit']:.1e} over {counts['ams_audited']} solutions (<= 1e-9)"),
        ("capacity dominance", worst["capacity"] <= 1e-6, f"max rate - capacity {worst['capacity']:.1e} (<= 1e-6)"),
        ("waterfilling vs bisection oracle", worst["waterfill"] <= 1e-6, f"max deviation {worst['waterfill']:.1e} (<= 1e-6)"),
    ]
    ok = all(c[1] for c in checks)
    detail = f"{n} instances, {counts['solutions']} solutions; " + "; ".join(
        f"{name} {'ok' if good else 'VIOLATED'}: {msg}" for name, good, msg in checks)
    return ok, detail


@pytest.mark.slow
def test_criterion_5_properties():
    ok, detail = check_properties()
    record(5, "property suite", ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# criterion 6: high-SNR slope; criterion 7: complexity smoke test
# ---------------------------------------------------------------------------

def check_slope():
    target = 8 * math.log2(10)      # 8 streams, 10 dB
    parts, ok = [], True
    for name in ("fig3a", "fig3b"):
        cfg = preset(name).with_overrides(snr_db=(30.0, 40.0), runs=RUNS, seed=SEED, algorithms=("LISA",))
        lo, hi = aggregate(cfg, [evaluate_run(cfg, i) for i in range(cfg.runs)])
        slope = hi.means["LISA"] - lo.means["LISA"]
        good = abs(slope - target) <= 0.15 * target
        ok &= good
        parts.append(f"{name} LISA {slope:.2f} bits per 10 dB{'' if good else ' MISS'}")
    return ok, f"target {target:.2f} +-15%; " + "; ".join(parts)


def check_complexity(runs=50):
    cfg = ScenarioConfig(L=3, ms_array=(4, 4), seed=SEED, algorithms=("H-LISA", "LC-H-LISA"))
    times = benchmark(cfg, 0.0, runs)
    med = {a: float(np.median(t)) * 1e3 for a, t in times.items()}
    ok = med["LC-H-LISA"] < med["H-LISA"]
    return ok, f"median over {runs} runs: LC-H-LISA {med['LC-H-LISA']:.2f} ms < H-LISA {med['H-LISA']:.2f} ms"


@pytest.mark.slow
def test_criterion_6_slope():
    ok, detail = check_slope()
    record(6, "high-SNR degrees of freedom", ok, detail)
    assert ok, detail


def test_criterion_7_complexity():
    ok, detail = check_complexity()
    record(7, "complexity smoke test", ok, detail)
    assert ok, detail


if __name__ == "__main__":
    checks = [(1, "single-path, single-antenna users", check_fig3a),
              (2, "three paths, single-antenna users", check_fig3b),
              (3, "two-antenna users with BD", check_fig6),
              (4, "16-antenna users and phase-shifter receivers", check_fig7),
              (5, "property suite", check_properties),
              (6, "high-SNR degrees of freedom", check_slope),
              (7, "complexity smoke test", check_complexity)]
    for number, title, fn in checks:
        record(number, title, *fn())
