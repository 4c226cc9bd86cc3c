"""Acceptance gate: one test per criterion, one printed pass/fail line each.

Each test measures its own wall time against the stated budget and prints
`criterion NN: PASS/FAIL (details)` before asserting, so a full run always
shows the complete scorecard.
"""

import dataclasses
import filecmp
import os
import time

import numpy as np
import pytest

from quasishadow.entropy import (
    build_Kn,
    count_separated_qpp,
    harvest_quasi_periodic,
    katok_entropy,
    orbit_sampler,
    theorem_c_check,
    validate_Kn,
)
from quasishadow.geometry import Subspace, subspace_distance, torus_distance
from quasishadow.harness import default_config, run
from quasishadow.lyapnorm import (
    AdaptedNormEvaluator,
    cone_invariance_check,
    norm_equivalence_bounds,
    orbit_evaluators,
    verify_adapted_contraction,
)
from quasishadow.oseledets import (
    BlockParams,
    classify_block,
    classify_orbit,
    estimate_splitting,
    lyapunov_spectrum,
)
from quasishadow.regularity import (
    empirical_holder_fit,
    holder_constants,
    sample_certified_pairs,
)
from quasishadow.shadowing import (
    generate_pseudo_orbit,
    quasi_close,
    quasi_shadow_solve,
    quasi_specification,
    verify_quasi_shadow,
)
from quasishadow.systems import evaluate, make_system

PARAMS = BlockParams(lam=0.96, mu=0.96, lam_p=0.06, mu_p=0.06, eps=0.01)
CAT_EXPONENT = np.log((3.0 + np.sqrt(5.0)) / 2.0)  # 0.9624236501192069
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])

_cache = {}


def _report(num, ok, budget, elapsed, detail=""):
    verdict = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"criterion {num:2d}: {verdict}  ({elapsed:.1f}s/{budget:.0f}s)  "
          f"{detail}")
    assert ok, detail
    assert elapsed < budget, f"time budget exceeded: {elapsed:.1f}s"


def _system(name):
    key = ("sys", name)
    if key not in _cache:
        params = {"nu": 0.05} if name == "cat_x_rot_perturbed" else None
        _cache[key] = make_system(name, params)
    return _cache[key]


def _entropy_estimate(name):
    """Criterion-10 scale Katok estimate, shared with criterion 11."""
    key = ("entropy", name)
    if key not in _cache:
        sysm = _system(name)
        _cache[key] = katok_entropy(sysm, orbit_sampler(sysm, seed=1),
                                    0.05, 0.1, range(4, 17), samples=100000)
    return _cache[key]


def _cxr_theorem_c():
    """Criterion-11 scale Theorem C report, shared with criterion 12."""
    if "theorem_c_cxr" not in _cache:
        cxr = _system("cat_x_rot")
        _cache["theorem_c_cxr"] = theorem_c_check(
            cxr, PARAMS, orbit_sampler(cxr, seed=1), gamma=0.25,
            epsilons=[0.1, 0.05], n_range=range(4, 9), entropy_samples=8000,
            qpp_budget={"ref_length": 150000, "max_candidates": 2000},
            kn_samples=1500)
    return _cache["theorem_c_cxr"]


def test_criterion_01_lyapunov_exactness():
    t0 = time.perf_counter()
    spec = lyapunov_spectrum(_system("cat"), [0.37, 0.58], 10**4)
    errs = np.abs(np.asarray(spec.exponents) - [CAT_EXPONENT, -CAT_EXPONENT])
    ok = bool(np.all(errs < 1e-6))
    _report(1, ok, 1.0, time.perf_counter() - t0,
            f"exponent errors {errs.max():.2e}")


def test_criterion_02_splitting_exactness():
    t0 = time.perf_counter()
    sp_cat = estimate_splitting(_system("cat"), [0.2, 0.7], horizon=60)
    evals, evecs = np.linalg.eigh(CAT)
    e_u = Subspace(2, evecs[:, [np.argmax(evals)]])
    d_u = subspace_distance(sp_cat.E_u, e_u)
    sp_cxr = estimate_splitting(_system("cat_x_rot"), [0.2, 0.7, 0.4],
                                horizon=60)
    fiber = Subspace(3, np.array([[0.0], [0.0], [1.0]]))
    d_c = subspace_distance(sp_cxr.E_c, fiber)
    ok = d_u <= 1e-8 and d_c <= 1e-8
    _report(2, ok, 1.0, time.perf_counter() - t0,
            f"E_u gap {d_u:.2e}, E_c gap {d_c:.2e}")


def test_criterion_03_adapted_norm_suite():
    t0 = time.perf_counter()
    worst = 1.0
    detail = []
    for name in ("cat", "rotation", "cat_x_rot", "cat_x_rot_perturbed"):
        sysm = _system(name)
        certs = classify_orbit(sysm, np.full(sysm.dim, 0.37) + 0.01, 1000,
                               PARAMS, N=20)
        evs = orbit_evaluators(sysm, certs)
        n_pass = 0
        for i, ev in enumerate(evs):
            con = verify_adapted_contraction(ev, samples=8, seed=i)
            eq = norm_equivalence_bounds(ev, samples=8, seed=i)
            n_pass += con["pass"] and eq["pass"]
        # truncation soundness: a longer stored window moves the norm by
        # less than the certified tail bound
        rng = np.random.default_rng(3)
        for cert in certs[::500]:
            ev = AdaptedNormEvaluator(sysm, cert)
            longer = AdaptedNormEvaluator(sysm, cert,
                                          n_tr=ev.N_tr + ev.N_tr // 2)
            for _ in range(5):
                v = rng.standard_normal(sysm.dim)
                assert abs(longer.norm(v) - ev.norm(v)) <= \
                    ev.tail_bound(v) + 1e-12
        worst = min(worst, n_pass / len(evs))
        detail.append(f"{name} {n_pass}/{len(evs)}")
    _report(3, worst == 1.0, 30.0, time.perf_counter() - t0,
            ", ".join(detail))


def test_criterion_04_cone_invariance():
    t0 = time.perf_counter()
    linear_ok = True
    for name in ("cat", "cat_x_rot"):
        sysm = _system(name)
        cert = classify_block(sysm, np.full(sysm.dim, 0.31), PARAMS, N=20)
        rep = cone_invariance_check(sysm, cert, xi=0.1)
        linear_ok &= rep["pass"]
        if name == "cat":
            for fam in ("u", "s"):
                linear_ok &= abs(rep["families"][fam]["varsigma_hat"]
                                 - np.exp(-2 * CAT_EXPONENT)) < 1e-3
    pert = _system("cat_x_rot_perturbed")
    certs = classify_orbit(pert, np.array([0.3, 0.6, 0.1]), 102, PARAMS, N=20)
    evs = orbit_evaluators(pert, certs)
    n_pass = 0
    failures = []
    for i in range(1, 101):
        rep = cone_invariance_check(pert, evs[i].certificate, xi=0.1,
                                    evaluators=(evs[i], evs[i + 1],
                                                evs[i - 1]))
        if rep["pass"]:
            n_pass += 1
        else:
            failures.append((certs[i].point, {
                fam: d["varsigma_hat"] for fam, d in rep["families"].items()}))
    ok = linear_ok and n_pass >= 95
    _report(4, ok, 60.0, time.perf_counter() - t0,
            f"linear exact, perturbed {n_pass}/100"
            + (f", failures {failures}" if failures else ""))


def test_criterion_05_holder_regularity():
    t0 = time.perf_counter()
    linear_ok = True
    for name in ("cat", "cat_x_rot"):
        sysm = _system(name)
        budget = holder_constants(sysm, PARAMS, seed=0)
        pairs = sample_certified_pairs(sysm, PARAMS, 100, seed=0)
        rep = empirical_holder_fit(sysm, pairs, budget)
        dists = [r["distance"] for r in rep["rows"]]
        linear_ok &= rep["pass"] and max(dists) <= 1e-10
    pert = _system("cat_x_rot_perturbed")
    budget = holder_constants(pert, PARAMS, seed=0)
    pairs = sample_certified_pairs(pert, PARAMS, 1000, seed=0)
    rep = empirical_holder_fit(pert, pairs, budget)
    ok = linear_ok and rep["pass"] and rep["pass_rate"] >= 0.95
    _report(5, ok, 120.0, time.perf_counter() - t0,
            f"linear zero-distance, perturbed rate {rep['pass_rate']:.3f} "
            f"over {rep['pairs']} pairs")


def test_criterion_06_classical_shadowing():
    t0 = time.perf_counter()
    cat = _system("cat")
    delta = 1e-6
    cache = []
    worst_sup = 0.0
    worst_res = 0.0
    ok = True
    for i in range(1000):
        po = generate_pseudo_orbit(cat, PARAMS, delta, count=5,
                                   length=(1, 5), rho=0.5, seed=i,
                                   cache=cache)
        res = quasi_shadow_solve(cat, po)
        ok &= res.converged and res.iterations == 1
        ok &= res.max_center_disp() == 0.0
        worst_sup = max(worst_sup, res.sup_error())
        worst_res = max(worst_res, max(res.junction_residuals, default=0.0))
    ok = ok and worst_sup <= 4 * delta and worst_res <= 1e-12
    _report(6, ok, 30.0, time.perf_counter() - t0,
            f"sup {worst_sup:.2e} <= 4delta, one-sweep residual "
            f"{worst_res:.1e}")


def test_criterion_07_theorem_a_contract():
    t0 = time.perf_counter()
    detail = []
    ok = True
    for name in ("cat_x_rot", "cat_x_rot_perturbed"):
        sysm = _system(name)
        cache = []
        converged = 0
        verified = 0
        for i in range(100):
            po = generate_pseudo_orbit(sysm, PARAMS, 1e-8, count=40,
                                       length=(1, 20), rho=0.5, seed=i,
                                       cache=cache)
            try:
                res = quasi_shadow_solve(sysm, po, eta=0.1, xi=0.1,
                                         tol_su=1e-8)
            except RuntimeError:
                continue
            if res.converged:
                converged += 1
                verified += verify_quasi_shadow(sysm, po, res)["pass"]
        ok &= converged >= 99 and verified == converged
        detail.append(f"{name} {converged}/100 converged, "
                      f"{verified} verified")
    _report(7, ok, 300.0, time.perf_counter() - t0, ", ".join(detail))


def test_criterion_08_quasi_closing():
    t0 = time.perf_counter()
    cat = _system("cat")
    base = classify_block(cat, [0.1, 0.2], PARAMS, N=20)
    beta = 0.05
    # exhaustive grid seeding: keep the grid points that are genuine lag-5
    # recurrences (within beta), then quasi-close each
    m = 1800
    axis = (np.arange(m) + 0.5) / m
    candidates = []
    for chunk in np.array_split(axis, 6):
        X = np.stack(np.meshgrid(chunk, axis, indexing="ij"),
                     axis=-1).reshape(-1, 2)
        Y = X
        for _ in range(5):
            Y = cat.forward(Y) % 1.0
        d = (Y - X + 0.5) % 1.0 - 0.5
        candidates.append(X[np.linalg.norm(d, axis=1) < beta])
    candidates = np.concatenate(candidates)
    found = []
    for x in candidates:
        cert = dataclasses.replace(base, point=tuple(x))
        try:
            res = quasi_close(cat, cert, 5, beta=beta)
        except ValueError:
            continue
        if not res.converged:
            continue
        y = np.asarray(res.y_starts[0]) % 1.0
        if torus_distance(evaluate(cat, y, 5), y) > 1e-12:
            continue
        if not any(torus_distance(y, p) < 1e-6 for p in found):
            found.append(y)
    # [DERIVED] #Fix(A^5) = trace(A^5) - 2 = 121 via t_n = 3 t_{n-1} - t_{n-2}
    cat_ok = len(found) == 121

    cxr = _system("cat_x_rot")
    base3 = classify_block(cxr, [0.1, 0.2, 0.3], PARAMS, N=20)
    drift_ok = True
    rng = np.random.default_rng(5)
    for b in found[:20]:
        x = (b[0], b[1], float(rng.random()))
        cert = dataclasses.replace(base3, point=x)
        res = quasi_close(cxr, cert, 5, beta=1e-6)
        drift_ok &= res.converged
        # fiber drift of f^5 is 5 * 1/4 = 1/4 (mod 1)
        drift_ok &= bool(np.all(np.abs(res.u_disp[0] - [0, 0, 0.25]) < 1e-8))
    _report(8, cat_ok and drift_ok, 120.0, time.perf_counter() - t0,
            f"{len(found)}/121 period-5 points, fiber drift 0.25 on 20 seeds")


def test_criterion_09_quasi_specification():
    t0 = time.perf_counter()
    cxr = _system("cat_x_rot")
    x0 = np.array([0.21, 0.68, 0.05])
    anchors = [(evaluate(cxr, x0, 10), 3), (evaluate(cxr, x0, 150), 4),
               (evaluate(cxr, x0, 300), 2)]
    horizon = 60
    res, po, times = quasi_specification(cxr, anchors, PARAMS, delta=0.02,
                                         horizon=horizon, ref_length=10**6,
                                         seed=1, ref_start=x0, tol_su=1e-10)
    ver = verify_quasi_shadow(cxr, po, res)
    ok = res.converged and ver["pass"] and all(x <= horizon for x in times)
    _report(9, ok, 300.0, time.perf_counter() - t0,
            f"3 segments glued, transitions {times} within H = {horizon}, "
            f"contract {ver['pass']}")


def test_criterion_10_entropy():
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("cat", "cat_x_rot"):
        est = _entropy_estimate(name)
        rel = abs(est.h_hat - CAT_EXPONENT) / CAT_EXPONENT
        ok &= rel <= 0.10
        details.append(f"{name} h {est.h_hat:.4f} ({100 * rel:.1f}%)")
    est_rot = _entropy_estimate("rotation")
    ok &= est_rot.h_hat <= 0.02
    details.append(f"rotation h {est_rot.h_hat:.4f}")
    _report(10, ok, 600.0, time.perf_counter() - t0, ", ".join(details))


def test_criterion_11_theorem_c_margin():
    t0 = time.perf_counter()
    # cat: exact counts from the trace recurrence t_n = 3 t_{n-1} - t_{n-2}
    traces = [2.0, 3.0]
    for _ in range(12):
        traces.append(3 * traces[-1] - traces[-2])
    ns = np.arange(6, 13)
    counts = np.array([traces[n] - 2 for n in ns])
    rate_cat = float(np.polyfit(ns, np.log(counts), 1)[0])
    cat_ok = rate_cat >= _entropy_estimate("cat").h_hat
    rep = _cxr_theorem_c()
    cxr_ok = rep["pass"] and rep["margins"]["0.05"] >= -0.1
    _report(11, cat_ok and cxr_ok, 600.0, time.perf_counter() - t0,
            f"cat exact rate {rate_cat:.4f} >= h, cxr margin "
            f"{rep['margins']['0.05']:.3f}, report PASS")


def test_criterion_12_pipeline_audit():
    t0 = time.perf_counter()
    cat = _system("cat")
    l = 1.0 / (3 * 0.05)
    records, _ = build_Kn(cat, orbit_sampler(cat, seed=2), PARAMS, 1, 0.25,
                          l, 8, beta=0.05, samples=3000)
    audit_ok = validate_Kn(cat, PARAMS, records, 1, 0.25, l, 8, beta=0.05)
    got = harvest_quasi_periodic(cat, PARAMS, records, l, 8)
    sep_ok = got.cardinality >= 1
    # independent pairwise separation recheck at (n, (3l)^{-1})
    for a in range(got.cardinality):
        for b in range(a + 1, got.cardinality):
            d = max(float(torus_distance(
                evaluate(cat, np.asarray(got.points[a]["point"]), i),
                evaluate(cat, np.asarray(got.points[b]["point"]), i)))
                for i in range(8))
            sep_ok &= d > got.separation
    lemma_ok = _cxr_theorem_c()["lemma_pass"]
    ok = audit_ok and sep_ok and lemma_ok
    _report(12, ok, 600.0, time.perf_counter() - t0,
            f"{len(records)} block members revalidated, "
            f"{got.cardinality} harvested points separated, lemma trend ok")


def test_criterion_13_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = default_config()
    cfg.values[("system", "name")] = "cat"
    cfg.values[("horizons", "lyap_horizon")] = 2000
    cfg.values[("horizons", "ref_length")] = 30000
    cfg.values[("entropy", "samples")] = 2000
    cfg.values[("entropy", "n_max")] = 7
    cfg.values[("entropy", "qpp_candidates")] = 300
    cfg.values[("shadow", "count")] = 10
    dirs = [tmp_path / "a", tmp_path / "b"]
    codes = [run("all", cfg, out_dir=str(d), seed=17) for d in dirs]
    csvs = sorted(p for p in os.listdir(dirs[0]) if p.endswith(".csv"))
    same = all(filecmp.cmp(dirs[0] / p, dirs[1] / p, shallow=False)
               for p in csvs)
    ok = codes == [0, 0] and same and len(csvs) >= 5
    _report(13, ok, 600.0, time.perf_counter() - t0,
            f"run all twice: exit {codes}, {len(csvs)} CSVs byte-identical")
