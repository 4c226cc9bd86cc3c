import json

import numpy as np
import pytest

from quasishadow.geometry import Subspace, subspace_distance
from quasishadow.oseledets import (
    BlockParams,
    classify_block,
    classify_orbit,
    estimate_splitting,
    lyapunov_spectrum,
    params_from_spectrum,
    splitting_invariance_defect,
    window_splittings,
)
from quasishadow.systems import CAT_EXPONENT, evaluate, make_system

PARAMS = BlockParams(lam=0.96, mu=0.96, lam_p=0.06, mu_p=0.06, eps=0.01)

CAT_UNSTABLE = np.array([1.0, (np.sqrt(5) - 1) / 2])  # eigenvector for (3+sqrt 5)/2


def test_block_params_ordering_enforced():
    with pytest.raises(ValueError):
        BlockParams(lam=0.5, mu=0.5, lam_p=0.6, mu_p=0.1, eps=0.01)
    with pytest.raises(ValueError):
        BlockParams(lam=-0.5, mu=0.5, lam_p=0.1, mu_p=0.1, eps=0.01)
    with pytest.raises(ValueError):
        BlockParams(lam=0.5, mu=0.5, lam_p=0.1, mu_p=0.1, eps=0.0)


def test_block_params_slack():
    PARAMS.check_slack()
    loose = BlockParams(lam=0.96, mu=0.96, lam_p=0.06, mu_p=0.06, eps=0.08)
    with pytest.raises(ValueError, match="slack"):
        loose.check_slack()


def test_cat_spectrum_exact():
    cat = make_system("cat")
    spec = lyapunov_spectrum(cat, [0.1, 0.2], 10**4)
    assert spec.exponents[0] == pytest.approx(CAT_EXPONENT, abs=1e-6)
    assert spec.exponents[1] == pytest.approx(-CAT_EXPONENT, abs=1e-6)


def test_rotation_spectrum_zero():
    rot = make_system("rotation")
    spec = lyapunov_spectrum(rot, [0.4], 1000)
    assert abs(spec.exponents[0]) <= 1e-12


def test_cat_x_rot_spectrum():
    sysm = make_system("cat_x_rot")
    spec = lyapunov_spectrum(sysm, [0.1, 0.2, 0.3], 5000)
    assert spec.exponents[0] == pytest.approx(CAT_EXPONENT, abs=1e-6)
    assert spec.exponents[1] == pytest.approx(0.0, abs=1e-6)
    assert spec.exponents[2] == pytest.approx(-CAT_EXPONENT, abs=1e-6)


def test_volume_preserving_spectrum_sums():
    for name in ["cat", "cat_x_rot", "rotation"]:
        sysm = make_system(name)
        x = [0.15, 0.35, 0.55][:sysm.dim]
        spec = lyapunov_spectrum(sysm, x, 10**4)
        assert abs(sum(spec.exponents)) <= 0.01


def test_spectrum_requires_minimum_horizon():
    with pytest.raises(ValueError):
        lyapunov_spectrum(make_system("cat"), [0.1, 0.2], 50)


def test_cat_unstable_direction():
    cat = make_system("cat")
    sp = estimate_splitting(cat, [0.1, 0.2], horizon=60)
    target = Subspace.from_spanning(CAT_UNSTABLE)
    assert subspace_distance(sp.E_u, target) <= 1e-8
    # stable direction is the orthogonal eigenline (A is symmetric)
    stable = Subspace.from_spanning(np.array([CAT_UNSTABLE[1], -CAT_UNSTABLE[0]]))
    assert subspace_distance(sp.E_s, stable) <= 1e-8


def test_cat_x_rot_center_is_fiber():
    sysm = make_system("cat_x_rot")
    sp = estimate_splitting(sysm, [0.1, 0.2, 0.3], horizon=60)
    fiber = Subspace.from_spanning(np.array([0.0, 0.0, 1.0]))
    assert subspace_distance(sp.E_c, fiber) <= 1e-8


def test_rotation_has_no_gap():
    with pytest.raises(ValueError, match="gap violation"):
        estimate_splitting(make_system("rotation"), [0.2], horizon=60)


def test_splitting_invariance():
    for name in ["cat", "cat_x_rot", "cat_x_rot_perturbed"]:
        sysm = make_system(name)
        x = np.array([0.12, 0.41, 0.77][:sysm.dim])
        sp_x = estimate_splitting(sysm, x, horizon=100)
        sp_fx = estimate_splitting(sysm, evaluate(sysm, x, 1), horizon=100)
        assert splitting_invariance_defect(sysm, x, sp_x, sp_fx) <= 1e-6


def test_window_splittings_consistent_with_pointwise():
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    x = np.array([0.3, 0.6, 0.1])
    sps = window_splittings(sysm, x, N=3, horizon=60)
    for m in (-3, 0, 2):
        direct = estimate_splitting(sysm, evaluate(sysm, x, m), horizon=60)
        for a, b in ((sps[m + 3].E_s, direct.E_s), (sps[m + 3].E_c, direct.E_c),
                     (sps[m + 3].E_u, direct.E_u)):
            assert subspace_distance(a, b) <= 1e-9


def test_classify_uniform_systems_index_one():
    for name in ["cat", "cat_x_rot"]:
        sysm = make_system(name)
        x = [0.1, 0.2, 0.3][:sysm.dim]
        cert = classify_block(sysm, x, PARAMS, N=50)
        assert cert.kappa == 1
        assert all(m >= 0 for m in cert.margins.values())


def test_classify_cat_center_conditions_vacuous():
    cert = classify_block(make_system("cat"), [0.3, 0.8], PARAMS, N=30)
    assert cert.kappa == 1
    assert cert.margins["center_fwd"] == PARAMS.eps
    assert cert.margins["center_bwd"] == PARAMS.eps


def test_classify_perturbed_distribution_nondegenerate():
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    rng = np.random.default_rng(1)
    kappas = [classify_block(sysm, p, PARAMS, N=20).kappa for p in rng.random((30, 3))]
    assert any(k > 1 for k in kappas)
    assert all(1 <= k <= 64 for k in kappas)


def test_classify_window_monotonicity():
    # enlarging the window can only add conditions, so the index cannot drop
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    rng = np.random.default_rng(2)
    for p in rng.random((10, 3)):
        k_small = classify_block(sysm, p, PARAMS, N=10).kappa
        k_large = classify_block(sysm, p, PARAMS, N=20).kappa
        assert k_small <= k_large


def test_classify_index_nesting():
    # a certificate at index k passes all conditions at k + 1 a fortiori
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    cert = classify_block(sysm, [0.25, 0.5, 0.75], PARAMS, N=20)
    for margin in cert.margins.values():
        assert margin + PARAMS.eps >= 0


def test_classify_k_max_guard():
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError, match="not certified"):
        for p in rng.random((50, 3)):
            classify_block(sysm, p, PARAMS, N=20, k_max=2)


def test_params_from_spectrum_certifies_sampled_points():
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    spec = lyapunov_spectrum(sysm, [0.2, 0.4, 0.6], 5000)
    params = params_from_spectrum(spec)
    params.check_slack()
    rng = np.random.default_rng(4)
    certified = 0
    pts = rng.random((100, 3))
    for p in pts:
        try:
            classify_block(sysm, p, params, N=20)
            certified += 1
        except ValueError:
            pass
    assert certified >= 99


def test_certificate_serializes():
    cert = classify_block(make_system("cat"), [0.1, 0.2], PARAMS, N=20)
    blob = json.loads(cert.to_json())
    assert blob["kappa"] == 1
    assert blob["params"]["eps"] == PARAMS.eps
    assert len(blob["splitting"]["E_u"]) == 2


def test_classify_orbit_matches_pointwise():
    # shared-sweep certificates agree with independent classification
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    x0 = np.array([0.137, 0.482, 0.291])
    certs = classify_orbit(sysm, x0, 12, PARAMS, N=20)
    assert len(certs) == 12
    for j in [0, 4, 11]:
        solo = classify_block(sysm, evaluate(sysm, x0, j), PARAMS, N=20)
        assert certs[j].kappa == solo.kappa
        for name in solo.margins:
            assert certs[j].margins[name] == pytest.approx(solo.margins[name], abs=1e-6)
        assert np.allclose(certs[j].point, solo.point, atol=1e-9)


def test_classify_orbit_anchors_lie_on_orbit():
    sysm = make_system("cat")
    x0 = np.array([0.3, 0.8])
    certs = classify_orbit(sysm, x0, 8, PARAMS, N=20)
    for j, cert in enumerate(certs):
        assert np.allclose(cert.point, evaluate(sysm, x0, j), atol=1e-10)
        assert cert.kappa == 1


def test_classify_orbit_k_max_guard():
    sysm = make_system("cat_x_rot_perturbed", {"nu": 0.05})
    with pytest.raises(ValueError, match="not certified"):
        classify_orbit(sysm, np.array([0.2, 0.6, 0.35]), 200, PARAMS, N=20, k_max=2)
