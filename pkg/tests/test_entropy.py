import csv
import json

import numpy as np
import pytest

from quasishadow.entropy import (
    EntropyEstimate,
    build_Kn,
    count_separated_qpp,
    harvest_quasi_periodic,
    katok_entropy,
    orbit_sampler,
    theorem_c_check,
    validate_Kn,
    write_entropy_csv,
    write_qpp_csv,
    write_theorem_c_json,
)
from quasishadow.geometry import torus_distance
from quasishadow.oseledets import BlockParams
from quasishadow.systems import evaluate, make_system

PARAMS = BlockParams(lam=0.96, mu=0.96, lam_p=0.06, mu_p=0.06, eps=0.01)
H_CAT = np.log((3.0 + np.sqrt(5.0)) / 2.0)  # 0.9624


@pytest.fixture(scope="module")
def cat():
    return make_system("cat")


@pytest.fixture(scope="module")
def rot():
    return make_system("rotation")


@pytest.fixture(scope="module")
def cat_entropy(cat):
    return katok_entropy(cat, orbit_sampler(cat, seed=1), 0.1, 0.1,
                         range(4, 9), samples=20000)


def test_rotation_covering_constant_in_n(rot):
    # oracle: an isometry has d_n^f = d_1^f, so the table cannot grow
    est = katok_entropy(rot, orbit_sampler(rot, seed=1), 0.05, 0.1,
                        range(4, 10), samples=4000)
    covers = [nc for _, nc, _ in est.table]
    assert len(set(covers)) == 1
    assert est.h_hat <= 0.02


def test_cat_entropy_near_log_eigenvalue(cat_entropy):
    # oracle: h = log((3+sqrt 5)/2); a desk-scale run lands within ~10%
    assert 0.80 <= cat_entropy.h_hat <= 1.06
    assert cat_entropy.fit_residual < 0.2


def test_covering_table_monotone_in_n(cat_entropy):
    covers = [nc for _, nc, _ in cat_entropy.table]
    seps = [ns_ for _, _, ns_ in cat_entropy.table]
    assert covers == sorted(covers)
    assert seps == sorted(seps)


def test_covering_monotone_in_gamma(cat):
    sampler = orbit_sampler(cat, seed=1)
    fine = katok_entropy(cat, sampler, 0.1, 0.1, range(4, 7), samples=8000)
    coarse = katok_entropy(cat, sampler, 0.2, 0.1, range(4, 7), samples=8000)
    for (n1, c1, _), (n2, c2, _) in zip(fine.table, coarse.table):
        assert n1 == n2 and c1 >= c2


def test_count_qpp_cat_period_five(cat):
    # oracle: #Fix(A^5) = trace(A^5) - 2 = 121; mined counts cannot exceed it
    got = count_separated_qpp(cat, PARAMS, 5, 0.05, ref_length=200000,
                              max_candidates=4000)
    assert 0.5 * 121 <= got.cardinality <= 121
    for item in got.points:
        z = np.asarray(item["point"])
        assert torus_distance(evaluate(cat, z, 5), z) <= 1e-10
        assert item["su_residual"] <= 1e-8


def test_count_qpp_monotone_in_epsilon(cat):
    coarse = count_separated_qpp(cat, PARAMS, 5, 0.2, ref_length=100000)
    fine = count_separated_qpp(cat, PARAMS, 5, 0.05, ref_length=100000)
    assert coarse.cardinality <= fine.cardinality


def test_count_qpp_rotation_packs(rot):
    # degenerate bundles: every point is quasi-periodic; packing bound only
    got = count_separated_qpp(rot, PARAMS, 7, 0.05)
    assert got.cardinality == 20
    got2 = count_separated_qpp(rot, PARAMS, 3, 0.1)
    assert got2.cardinality == 10


def test_count_qpp_product_carries_fiber_circle():
    # oracle: each base period-5 point carries a circle of quasi-periodic
    # points (f^5 maps every fiber to itself), so the count exceeds the base
    # count; the drift along the fiber is 5 * 0.25 = 0.25 for every member
    cxr = make_system("cat_x_rot")
    got = count_separated_qpp(cxr, PARAMS, 5, 0.05, ref_length=200000,
                              max_candidates=3000)
    assert got.cardinality > 121
    for item in got.points[:50]:
        assert item["center_disp"] == pytest.approx(0.25, abs=1e-8)


def test_build_Kn_and_validate(cat):
    l = 1.0 / (3 * 0.05)
    recs, info = build_Kn(cat, orbit_sampler(cat, seed=2), PARAMS, 1, 0.25,
                          l, 8, beta=0.05, samples=3000)
    assert len(recs) >= 1
    assert all(8 <= r["m"] <= 10 for r in recs)
    assert validate_Kn(cat, PARAMS, recs, 1, 0.25, l, 8, beta=0.05)
    assert info["n_returning"] >= len(recs)


def test_build_Kn_rejects_short_window(cat):
    with pytest.raises(ValueError, match="window"):
        build_Kn(cat, orbit_sampler(cat, seed=2), PARAMS, 1, -0.5, 5.0, 8,
                 beta=0.05, samples=100)


def test_build_Kn_rotation_packing_bound(rot):
    # n = 8 returns exactly (8 * 0.25 = 2 full turns) but 1/l-separation on
    # the circle caps the cardinality at ceil(l)
    recs, info = build_Kn(rot, orbit_sampler(rot, seed=3), PARAMS, 1, 0.25,
                          5.0, 8, beta=0.05, samples=500)
    assert info["n_returning"] == info["n_block"]  # exact return for all
    assert 1 <= len(recs) <= 5


def test_harvest_yields_true_periodic_points(cat):
    l = 1.0 / (3 * 0.05)
    recs, _ = build_Kn(cat, orbit_sampler(cat, seed=2), PARAMS, 1, 0.25,
                       l, 8, beta=0.05, samples=3000)
    got = harvest_quasi_periodic(cat, PARAMS, recs, l, 8)
    assert got.cardinality >= 1
    for item in got.points:
        z = np.asarray(item["point"])
        assert torus_distance(evaluate(cat, z, item["m"]), z) <= 1e-9
        assert item["center_disp"] == 0.0
    # independent pairwise separation recheck at (n, (3l)^{-1})
    for a in range(got.cardinality):
        for b in range(a + 1, got.cardinality):
            d = max(float(torus_distance(
                evaluate(cat, np.asarray(got.points[a]["point"]), i),
                evaluate(cat, np.asarray(got.points[b]["point"]), i)))
                for i in range(8))
            assert d > got.separation


def test_theorem_c_cat(cat):
    report = theorem_c_check(
        cat, PARAMS, orbit_sampler(cat, seed=1), gamma=0.25,
        epsilons=[0.1, 0.05], n_range=range(4, 9), entropy_samples=8000,
        qpp_budget={"ref_length": 100000, "max_candidates": 1500},
        kn_samples=1500)
    assert report["pass"]
    assert report["h_hat"] > 0.3
    assert report["margins"]["0.05"] >= -0.1
    assert report["lemma_pass"]
    assert len(report["lemma_fractions"]) == 5


def test_theorem_c_rotation_trivial(rot):
    report = theorem_c_check(
        rot, PARAMS, orbit_sampler(rot, seed=1), gamma=0.25,
        epsilons=[0.1, 0.05], n_range=range(4, 8), entropy_samples=2000,
        kn_samples=400)
    assert report["h_hat"] <= 0.02
    assert report["inequality_pass"]


def test_artifact_files(tmp_path, cat_entropy):
    path = tmp_path / "entropy.csv"
    write_entropy_csv(cat_entropy, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(cat_entropy.table)
    assert set(rows[0]) == {"n", "N_cover", "N_separated"}

    qpp_path = tmp_path / "qpp.csv"
    write_qpp_csv([(5, 0.05, 121, 0.96), (6, 0.05, 320, 0.96)], qpp_path)
    with open(qpp_path, newline="") as fh:
        qrows = list(csv.DictReader(fh))
    assert [int(r["count"]) for r in qrows] == [121, 320]

    blob = {"h_hat": 0.96, "pass": True}
    out = tmp_path / "theoremC.json"
    write_theorem_c_json(blob, out)
    assert json.loads(out.read_text()) == blob
