"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (visible with
``pytest -s`` or in the terminal summary) and then asserts the verdict.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from sindy_forge import benchmarks as B
from sindy_forge.differentiation import estimate
from sindy_forge.features import evaluate, polynomial_library, sqrt_augmented_library
from sindy_forge.metrics import bfr, rmse
from sindy_forge.sindy import SimOptions, SparseModel, fit, rhs, simulate
from sindy_forge.stls import StlsSpec, objective, stls_solve
from sindy_forge.strategies import HiddenStateGuess, boucwen_hidden_fit, estimate_initial_hidden
from sindy_forge.timeseries import Trajectory
from sindy_forge.tuning import parse_config, run_pipeline, strip_timing
from sindy_forge.tuning.config import load_config
from sindy_forge.tuning.pipeline import dumps

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS = []


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


_reports = {}


def pipeline(name):
    if name not in _reports:
        t0 = time.perf_counter()
        rep = run_pipeline(load_config(CONFIGS / f"{name}.toml"))
        _reports[name] = (rep, time.perf_counter() - t0)
    return _reports[name]


def arm(report, name):
    return next(a for a in report["arms"] if a["name"] == name)


# 1. exact sparse recovery

def _random_system(key):
    rng = np.random.default_rng([2024, key])
    n = key // 100 % 3 + 1
    names = tuple(f"x{i}" for i in range(n))
    lib = polynomial_library(n, 1, 2, names + ("u",))
    theta = np.zeros((len(lib), n))
    for i in range(n):
        theta[lib.index(names[i]), i] = -rng.uniform(0.5, 2.0)
    theta[lib.index("u"), 0] = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
    k = int(rng.integers(3, 6))
    free = [(r, c) for r in range(1, len(lib)) for c in range(n) if theta[r, c] == 0]
    while np.count_nonzero(theta) < k:
        r, c = free.pop(int(rng.integers(len(free))))
        theta[r, c] = rng.uniform(0.5, 1.0) * rng.choice([-1, 1])
    return SparseModel(lib, theta, names, ("u",)), rng


def _recovery_case(seed, T=2000, dt=0.01):
    t = np.arange(T) * dt
    u = 0.5 * np.sin(1.3 * t) + 0.3 * np.sin(3.7 * t + 1.0) + 0.2 * np.sin(7.9 * t)
    # redraw (deterministically) until the random quadratic system stays bounded
    for attempt in range(20):
        model, rng = _random_system(100 * seed + attempt)
        try:
            tr = simulate(model, rng.uniform(-0.5, 0.5, model.n), u, dt=dt)
        except Exception:
            continue
        if np.abs(tr.states).max() < 5:
            break
    exact = evaluate(model.library, tr.states, tr.inputs) @ model.theta
    data = Trajectory(0.0, dt, tr.states, tr.inputs, exact, model.state_names, model.input_names)
    return model, fit(data, model.library, StlsSpec(0.1))


def test_criterion_1_exact_sparse_recovery():
    t0 = time.perf_counter()
    good, worst = 0, 0.0
    for seed in range(10):
        truth, got = _recovery_case(seed)
        nz = truth.theta != 0
        rel = float(np.max(np.abs(got.theta[nz] - truth.theta[nz]) / np.abs(truth.theta[nz])))
        worst = max(worst, rel)
        good += bool(np.array_equal(got.theta != 0, nz) and rel <= 1e-5)
    took = time.perf_counter() - t0
    verdict(1, good == 10 and took < 5.0, f"{good}/10 exact supports, worst rel err {worst:.1e}, {took:.2f} s")


# 2. STLS contract

def _instance(seed, orthonormal, T=40):
    rng = np.random.default_rng(seed)
    n_phi = 2 + seed % 7
    phi = rng.standard_normal((T, n_phi))
    phi = np.linalg.qr(phi)[0] if orthonormal else phi / np.linalg.norm(phi, axis=0)
    theta = rng.standard_normal(n_phi) * rng.integers(0, 2, n_phi)
    y = phi @ theta + 0.3 * rng.standard_normal(T) / math.sqrt(T)
    return phi, y, float(rng.uniform(0.05, 1.0))


def _flip_optimal(phi, y, lam):
    res = stls_solve(phi, y, StlsSpec(lam))
    best = objective(phi, y, res.support, lam)
    return all(best <= objective(phi, y, sorted(set(res.support) ^ {h}), lam) + 1e-12 for h in range(phi.shape[1])), res


def test_criterion_2_stls_contract():
    n = 1000
    iter_ok = monotone_ok = ls_ok = 0
    flips = {True: 0, False: 0}
    for seed in range(n):
        for ortho in (True, False):
            phi, y, lam = _instance(seed, ortho)
            ok, res = _flip_optimal(phi, y, lam)
            flips[ortho] += ok
            if ortho:
                continue
            iter_ok += res.iterations <= phi.shape[1]
            monotone_ok += all(set(b) <= set(a) for a, b in zip(res.supports, res.supports[1:]))
            zero = stls_solve(phi, y, StlsSpec(0.0)).theta
            ls_ok += np.max(np.abs(zero - np.linalg.lstsq(phi, y, rcond=None)[0])) <= 1e-10
    ok = iter_ok == monotone_ok == ls_ok == flips[True] == flips[False] == n
    verdict(
        2,
        ok,
        f"iterations {iter_ok}/{n}, monotone {monotone_ok}/{n}, lambda=0 LS {ls_ok}/{n}, "
        f"single-flip optimal {flips[True]}/{n} orthonormal and {flips[False]}/{n} general instances",
    )


# 3. metric oracles

def test_criterion_3_metric_oracles():
    hand = abs(bfr([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) - 50.0) <= 1e-12
    hand &= abs(rmse([1.0, 2.0, 3.0], [2.0, 4.0, 3.0]) - math.sqrt(5 / 3)) <= 1e-12
    rng = np.random.default_rng(3)
    affine = clipped = 0
    for _ in range(1000):
        T = int(rng.integers(2, 60))
        y = rng.standard_normal(T) * rng.uniform(0.1, 100)
        yhat = y + rng.standard_normal(T) * rng.uniform(0.01, 3) * y.std()
        a = rng.uniform(0.1, 10) * rng.choice([-1, 1])
        b = rng.uniform(-100, 100)
        affine += abs(bfr(a * y + b, a * yhat + b) - bfr(y, yhat)) <= 1e-10
        v = bfr(y, yhat)
        worse = np.sum((y - yhat) ** 2) >= np.sum((y - y.mean()) ** 2)
        clipped += (v == 0.0) if worse else (0.0 < v <= 100.0)
    verdict(3, hand and affine == 1000 and clipped == 1000, f"hand cases {'ok' if hand else 'off'}, affine {affine}/1000, clipping {clipped}/1000")


# 4. integrator and differentiation order

def test_criterion_4_integrator_and_difference_order():
    lib = polynomial_library(1, 0, 1, ("y",))
    decay = SparseModel(lib, np.array([[0.0], [-1.0]]), ("y",))
    err = lambda s: abs(simulate(decay, [1.0], np.zeros((11, 0)), SimOptions(substeps=s), dt=0.1).states[-1, 0] - math.exp(-1))
    rk4 = err(1) / err(4)

    def diff_err(dt):
        t = np.arange(0.0, 2 * np.pi, dt)
        return np.max(np.abs(estimate(np.sin(t), dt) - np.cos(t))[1:-1])

    cd = diff_err(0.02) / diff_err(0.01)
    verdict(4, 200 <= rk4 <= 300 and 3.5 <= cd <= 4.5, f"RK4 ratio {rk4:.1f}, central-difference ratio {cd:.3f}")


# 5. Bouc-Wen qualitative reproduction

def test_criterion_5_boucwen_hysteresis():
    rep, took = pipeline("boucwen")
    loops = rep["loops"]["arms"]
    naive, hidden = loops["naive"]["area_ratio"], loops["hidden_ideal"]["area_ratio"]
    r_naive, r_hidden = arm(rep, "naive")["score"]["rmse"], arm(rep, "hidden_ideal")["score"]["rmse"]
    ok = abs(naive) < 0.05 and hidden > 0.70 and r_hidden < r_naive and took < 120
    verdict(5, ok, f"loop area ratio naive {naive:.4f}, hidden {hidden:.3f}; test RMSE hidden {r_hidden:.3g} vs naive {r_naive:.3g}; {took:.1f} s")


# 6. Bouc-Wen structure recovery

def test_criterion_6_boucwen_structure():
    p = B.BoucWenParams()
    ds = B.generate_dataset("boucwen", seed=7)
    guess = HiddenStateGuess({"m_L": p.m_L, "c_L": p.c_L, "k_L": p.k_L})
    rep, _ = pipeline("boucwen")
    lam = arm(rep, "hidden_ideal")["best_point"]["lambda"]
    terms = boucwen_hidden_fit(ds.train, guess, StlsSpec(lam), valid=ds.valid).diagnostics["zdot_terms"]
    truth = p.zdot_terms()
    allowed = {"ydot", "z*|ydot|", "|z|*ydot", "|z|*|ydot|"}
    errs = {k: abs(terms[k] / v - 1) for k, v in truth.items() if k in terms}
    ok = set(terms) <= allowed and {"ydot", "z*|ydot|"} <= set(terms) and all(e <= 0.05 for e in errs.values())
    verdict(6, ok, f"support {sorted(terms)}, relative errors " + ", ".join(f"{k} {e:.3%}" for k, e in errs.items()))


# 7. tanks hidden-state reproduction

def _tanks_truth_model(p):
    lib = sqrt_augmented_library(polynomial_library(2, 1, 1, ("y", "x1", "u")), ["y", "x1"], (0.0, p.x1_max))
    theta = np.zeros((len(lib), 2))
    theta[lib.index("sqrt(x1)"), 0] = p.k3
    theta[lib.index("sqrt(y)"), 0] = -p.k4
    theta[lib.index("sqrt(x1)"), 1] = -p.k1
    theta[lib.index("u"), 1] = p.k2
    return SparseModel(lib, theta, ("y", "x1"), ("u",))


def test_criterion_7_tanks_ordering_and_initial_condition():
    rep, _ = pipeline("tanks")
    s = {a["name"]: a["score"]["bfr"] for a in rep["arms"]}
    gap = s["hidden"] - s["naive_poly"]
    ds = B.generate_dataset("tanks", seed=rep["seed"])
    p = ds.params
    saturates = bool(np.any(ds.train.hidden["x1"] >= p.x1_max) or np.any(ds.train.states[:, 0] >= p.x2_max))
    truth = _tanks_truth_model(p)
    grid = (0.0, p.x1_max, 200)
    cell = p.x1_max / 199
    probes = hits = 0
    for seg in (ds.train, ds.valid, ds.test):
        for k in range(0, seg.states.shape[0], 50):
            y, x1, u = seg.states[k, 0], float(seg.hidden["x1"][k]), seg.inputs[k, 0]
            yd = rhs(truth, [y, x1], [u])[0]
            probes += 1
            hits += abs(estimate_initial_hidden(truth, y, yd, [u], grid) - x1) <= cell
    between = min(s["naive_poly"], s["hidden"]) <= s["arx"] <= max(s["naive_poly"], s["hidden"])
    arx_note = "between naive and hidden" if between else "outside [naive, hidden], reported deviation"
    ok = gap >= 10 and saturates and hits == probes
    verdict(
        7,
        ok,
        f"BFR hidden {s['hidden']:.2f} vs naive_poly {s['naive_poly']:.2f} (gap {gap:.1f}), arx {s['arx']:.2f} ({arx_note}); "
        f"saturation {'present' if saturates else 'absent'}; initial condition within one cell on {hits}/{probes} probes",
    )


# 8. pick-place A/B

def _longest_run(mask):
    best = run = 0
    for v in mask:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def test_criterion_8_pickplace_second_order_beats_first():
    rep, _ = pipeline("pickplace")
    first, second = arm(rep, "first_order")["score"]["bfr"], arm(rep, "second_order")["score"]["bfr"]
    lo, hi = rep["config"]["arms"][1]["options"]["stroke"]
    tol = 0.01 * (hi - lo)
    ysim = np.array(rep["series"]["arms"]["second_order"], dtype=float)
    low_run = _longest_run(np.abs(ysim - lo) <= tol)
    high_run = _longest_run(np.abs(ysim - hi) <= tol)
    ok = second > first and low_run >= 10 and high_run >= 10
    verdict(8, ok, f"BFR second-order {second:.2f} vs first-order {first:.2f}; plateau runs {low_run} at {lo} and {high_run} at {hi} samples")


# 9. determinism

def test_criterion_9_determinism():
    same = []
    for name in ("boucwen", "tanks", "pickplace"):
        first, _ = pipeline(name)
        again = run_pipeline(load_config(CONFIGS / f"{name}.toml"))
        same.append(dumps(strip_timing(first)) == dumps(strip_timing(again)))
    verdict(9, all(same), ", ".join(f"{n} {'identical' if s else 'differs'}" for n, s in zip(("boucwen", "tanks", "pickplace"), same)))


# 10. external-data conformance (data-gated)

EXTERNAL = os.environ.get("SINDY_FORGE_TANKS_DATA")
EQ17 = {"y": -4.822, "y*u": 0.740, "u^2": 1.742}
EQ18 = {"u": -8.594, "sqrt(y)": -1.831, "y*u": 0.426, "u^2": 3.999}
BFR_REF = {"poly": 73.16, "sqrt": 53.09}


def test_criterion_10_external_tanks_conformance():
    if not EXTERNAL:
        msg = "no external data; set SINDY_FORGE_TANKS_DATA to a directory with train.csv, valid.csv, test.csv (columns t, u, y)"
        RESULTS.append(f"criterion 10: SKIPPED ({msg})")
        pytest.skip(msg)
    base = Path(EXTERNAL)
    doc = {
        "seed": 0,
        "data": {"csv": {"schema": {"inputs": ["u"], "states": ["y"]}, "train": str(base / "train.csv"), "valid": str(base / "valid.csv"), "test": str(base / "test.csv")}},
        "arms": [
            {"name": "poly", "strategy": "naive", "library": {"kind": "polynomial", "degree": 2}, "search": {"budget": 200, "space": {"lambda": ["loguniform", 1e-3, 10.0]}}},
            {"name": "sqrt", "strategy": "naive", "library": {"kind": "sqrt_augmented", "base": {"kind": "polynomial", "degree": 2}, "channels": ["y", "u"], "guard": [0.0, 10.0]},
             "search": {"budget": 200, "space": {"lambda": ["loguniform", 1e-3, 10.0]}}},
        ],
    }
    rep = run_pipeline(parse_config(doc))
    lines, ok = [], True
    for name, ref in (("poly", EQ17), ("sqrt", EQ18)):
        a = arm(rep, name)
        got = {c[1]: c[2] for c in a["model"]["coefficients"] if c[0] == "y"}
        coef_ok = set(got) == set(ref) and all(abs(got[k] / v - 1) <= 0.05 for k, v in ref.items())
        bfr_ok = abs(a["score"]["bfr"] - BFR_REF[name]) <= 3.0
        ok &= coef_ok and bfr_ok
        lines.append(f"{name}: BFR {a['score']['bfr']:.2f} (ref {BFR_REF[name]}), terms {json.dumps(got)}")
    verdict(10, ok, "; ".join(lines))
