"""Holder continuity of the invariant splitting: certified budget and empirical fit.

The budget packages the constants of the distribution-Holder estimate: a base
a > max(sup|Df|, sup|Df^-1|)^{1+alpha}, a cocycle-Holder constant D with
|Df^{+-n}_x - Df^{+-n}_y| <= D a^n |x-y|^alpha, the exponent a1 (max of four
rate fractions), and per-bundle constants b1 e^{4 k eps} (ambient metric) and
b2 e^{6 k eps} (adapted norms).  The empirical fit samples certified point
pairs, measures subspace distances in both metrics, checks them against the
budget, and regresses the log-log slope.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .geometry import Subspace, chart_difference, subspace_distance, torus_distance
from .lyapnorm import closed_form_C, epsilon_zero, orbit_evaluators
from .oseledets import BlockParams, classify_block, classify_orbit
from .systems import SystemSpec, cocycle, evaluate

BUNDLES = ("s", "cs", "c", "cu", "u")


@dataclass(frozen=True)
class HolderBudget:
    """Certified constants of the splitting-Holder bounds for one system."""

    a: float
    D: float
    a1: float
    fractions: dict  # the four rate fractions, keyed s / cs / u / cu
    b1: float
    b2: float
    alpha: float
    params: BlockParams

    def exponent(self):
        """Holder exponent of the splitting distances: a1 * alpha."""
        return self.a1 * self.alpha

    def ambient_bound(self, k, separation):
        """b1 e^{4 k eps} sep^{a1 alpha}; exactly zero for linear systems."""
        if self.D == 0.0:
            return 0.0
        return self.b1 * np.exp(4 * k * self.params.eps) * separation ** self.exponent()

    def adapted_bound(self, k, separation):
        """b2 e^{6 k eps} sep^{a1 alpha} with sep measured in the adapted norm."""
        if self.D == 0.0:
            return 0.0
        return self.b2 * np.exp(6 * k * self.params.eps) * separation ** self.exponent()


def holder_constants(system: SystemSpec, params: BlockParams,
                     d_samples=20, n_max=20, seed=0) -> HolderBudget:
    """Certified Holder budget for a system at the given block rates.

    a is set just above the derivative-bound power; D is the smallest constant
    making the cocycle-Holder inequality hold on sampled pairs for n <= n_max,
    doubled as a safety factor (constant cocycles get the exact value 0); the
    four fractions and a1, b1, b2 follow in closed form.
    """
    alpha = system.holder_alpha
    eps = params.eps
    L = system.deriv_bound
    a = 1.01 * L ** (1 + alpha)
    ln_a = np.log(a)

    if system.dims[0] == 0 and system.dims[2] == 0:
        # no hyperbolic bundle: the splitting is the full tangent space
        # everywhere, all distances vanish, and the budget is the zero bound
        return HolderBudget(a=a, D=0.0, a1=1.0, fractions={}, b1=0.0, b2=0.0,
                            alpha=alpha, params=params)

    num_s = params.lam - params.lam_p - 3 * eps
    num_u = params.mu - params.mu_p - 3 * eps
    if num_s <= 0 or num_u <= 0:
        raise ValueError(
            "rates too pinched for a Holder exponent: need lam - lam' > 3 eps "
            "and mu - mu' > 3 eps"
        )
    for den in (ln_a - params.mu_p - eps, ln_a - params.lam_p - eps):
        if den <= 0:
            raise ValueError("ln a must exceed the center rates plus eps")
    fractions = {
        "s": num_s / (ln_a + params.lam - eps),
        "cs": num_u / (ln_a - params.mu_p - eps),
        "u": num_u / (ln_a + params.mu - eps),
        "cu": num_s / (ln_a - params.lam_p - eps),
    }
    a1 = max(fractions.values())
    if not 0.0 < a1 < 1.0:
        raise ValueError(f"exponent fraction a1 = {a1:.4g} outside (0, 1)")

    D = 0.0
    if not system.constant_jacobian:
        rng = np.random.default_rng(seed)
        xs = rng.random((d_samples, system.dim))
        seps = 10.0 ** rng.uniform(-4, -1, size=d_samples)
        for x, sep in zip(xs, seps):
            u = rng.standard_normal(system.dim)
            y = (x + sep * u / np.linalg.norm(u)) % 1.0
            gap = torus_distance(x, y)
            for n in range(1, n_max + 1):
                for sgn in (n, -n):
                    diff = np.linalg.norm(cocycle(system, x, sgn) - cocycle(system, y, sgn), 2)
                    D = max(D, diff / (a ** n * gap ** alpha))
        D *= 2.0  # safety factor on the sampled certification

    prefactor = 3.0 * max(np.exp(num_s), np.exp(num_u))
    b1 = prefactor * max(D, 1.0) ** a1
    # adapted-metric constant: the angle measured in the adapted inner product
    # exceeds the ambient angle by at most 6C e^{2 k eps} (norm equivalence on
    # both components), and the ambient separation is at most 3x the adapted one
    b2 = 6.0 * closed_form_C(eps) * (3.0 ** (a1 * alpha)) * b1
    return HolderBudget(a=a, D=D, a1=a1, fractions=fractions, b1=b1, b2=b2,
                        alpha=alpha, params=params)


@dataclass(frozen=True)
class CertifiedPair:
    """A certified point pair with the evaluator anchored at the first point."""

    cert_x: object
    cert_y: object
    evaluator: object

    @property
    def k(self):
        return max(self.cert_x.kappa, self.cert_y.kappa)


def sample_certified_pairs(system: SystemSpec, params: BlockParams, count,
                           N=20, seed=0, sep_min=1e-9, sep_max=0.2):
    """Certified pairs (x, y) with |x - y| inside the certified-ball radius.

    The x side walks a single orbit so classification and adapted-norm data
    come from shared sweeps; each y is an independent nearby point classified
    on its own.  Separations are log-uniform in [sep_min, radius(k_x)).
    """
    rng = np.random.default_rng(seed)
    x0 = rng.random(system.dim)
    certs_x = classify_orbit(system, x0, count, params, N)
    evs = orbit_evaluators(system, certs_x)
    e0 = epsilon_zero(system, params)
    small_eps = params.eps / system.holder_alpha

    pairs = []
    for cert, ev in zip(certs_x, evs):
        x = np.asarray(cert.point)
        # constant-cocycle systems have a huge certified radius; keep pairs
        # inside the chart so differences stay well-defined
        radius = min(e0 * np.exp(-cert.kappa * small_eps), sep_max)
        sep = 10.0 ** rng.uniform(np.log10(sep_min), np.log10(0.99 * radius))
        u = rng.standard_normal(system.dim)
        y = (x + sep * u / np.linalg.norm(u)) % 1.0
        try:
            cert_y = classify_block(system, y, params, N)
        except ValueError:
            continue  # y not certified at k_max; skip the pair
        pairs.append(CertifiedPair(cert_x=cert, cert_y=cert_y, evaluator=ev))
    return pairs


def _bundle_subspaces(splitting):
    out = {}
    for tag in BUNDLES:
        if tag == "cs":
            S = _join(splitting.E_s, splitting.E_c)
        elif tag == "cu":
            S = _join(splitting.E_c, splitting.E_u)
        else:
            S = getattr(splitting, "E_" + tag)
        if S.rank:
            out[tag] = S
    return out


def _join(A, B):
    if A.rank == 0:
        return B
    if B.rank == 0:
        return A
    return Subspace.from_spanning(np.hstack([A.basis, B.basis]))


def adapted_subspace_distance(evaluator, A: Subspace, B: Subspace, directions=4,
                              seed=0):
    """Subspace distance with lengths measured in the evaluator's adapted norm.

    max over adapted-unit vectors v of one subspace of min_w |v - w|' over the
    other, symmetrized.  With rank-one component bundles the adapted norm is a
    max of absolute affine functions of the approximant's coordinates, so the
    inner minimum is an exact small linear program.  The outer sup is exact
    for lines and sampled over ``directions`` random combinations for higher
    rank, so the result is a certified lower bound of the true distance.
    """
    if A.rank == 0 or B.rank == 0:
        raise ValueError("adapted distance needs nontrivial subspaces")
    sp = evaluator.splitting
    if max(sp.dims) > 1:
        raise NotImplementedError("adapted distance needs rank <= 1 bundles")
    evaluator.norm(np.zeros(sp.ambient_dim))  # populate the unit-series cache
    weights = np.concatenate([
        np.full(E.rank, evaluator._unit_series[tag])
        for tag, E in (("s", sp.E_s), ("c", sp.E_c), ("u", sp.E_u))
    ])
    M = sp.matrix()
    rng = np.random.default_rng(seed)

    def min_norm_over(dst_coeff, v_coeff):
        # min over t of max_i weights_i |v_coeff_i - dst_coeff_i . t|
        consts = weights * v_coeff
        grads = weights[:, None] * dst_coeff
        r = grads.shape[1]
        A_ub = np.block([[-grads, -np.ones((len(consts), 1))],
                         [grads, -np.ones((len(consts), 1))]])
        b_ub = np.concatenate([-consts, consts])
        res = optimize.linprog(np.r_[np.zeros(r), 1.0], A_ub=A_ub, b_ub=b_ub,
                               bounds=[(None, None)] * r + [(0.0, None)],
                               method="highs")
        if not res.success:
            raise RuntimeError(f"adapted-distance subproblem failed: {res.message}")
        return float(res.fun)

    def one_sided(src, dst):
        dirs = [src.basis[:, j] for j in range(src.rank)]
        if src.rank > 1:
            for _ in range(directions):
                c = rng.standard_normal(src.rank)
                dirs.append(src.basis @ (c / np.linalg.norm(c)))
        dst_coeff = np.linalg.solve(M, dst.basis)
        worst = 0.0
        for v in dirs:
            v_coeff = np.linalg.solve(M, v / evaluator.norm(v))
            worst = max(worst, min_norm_over(dst_coeff, v_coeff))
        return worst

    return max(one_sided(A, B), one_sided(B, A))


def empirical_holder_fit(system: SystemSpec, pairs, budget: HolderBudget,
                         float_slack=1e-10):
    """Check the splitting-Holder bounds on certified pairs and fit the slope.

    Per pair and bundle, the subspace distance is measured in the ambient
    metric and in the adapted norm of the pair's x side, each compared against
    the corresponding budget bound at the pair's block index.  Pairs whose two
    splittings disagree in bundle dimensions are excluded and counted.  The
    report carries per-bundle pass rates and the log-log regression exponent.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two certified pairs")
    rows = []
    excluded = 0
    for pid, pair in enumerate(pairs):
        sp_x = pair.cert_x.splitting
        sp_y = pair.cert_y.splitting
        if sp_x.dims != sp_y.dims:
            excluded += 1
            continue
        x = np.asarray(pair.cert_x.point)
        y = np.asarray(pair.cert_y.point)
        k = pair.k
        sep = float(torus_distance(x, y))
        sep_ad = pair.evaluator.norm(chart_difference(x, y))
        bx = _bundle_subspaces(sp_x)
        by = _bundle_subspaces(sp_y)
        for tag in bx:
            dist = float(subspace_distance(bx[tag], by[tag]))
            dist_ad = adapted_subspace_distance(pair.evaluator, bx[tag], by[tag])
            bound = budget.ambient_bound(k, sep)
            bound_ad = budget.adapted_bound(k, sep_ad)
            rows.append({
                "pair_id": pid,
                "bundle": tag,
                "k": k,
                "separation": sep,
                "distance": dist,
                "bound": bound,
                "pass": dist <= bound + float_slack,
                "separation_adapted": sep_ad,
                "distance_adapted": dist_ad,
                "bound_adapted": bound_ad,
                "pass_adapted": dist_ad <= bound_ad + float_slack,
            })

    bundles = {}
    for tag in BUNDLES:
        sub = [r for r in rows if r["bundle"] == tag]
        if not sub:
            continue
        fit_rows = [r for r in sub if r["distance"] > 10 * float_slack]
        if len(fit_rows) >= 10:
            slope = float(np.polyfit(
                np.log([r["separation"] for r in fit_rows]),
                np.log([r["distance"] for r in fit_rows]), 1)[0])
        else:
            slope = None  # distances at noise floor (linear systems)
        bundles[tag] = {
            "count": len(sub),
            "pass_rate": float(np.mean([r["pass"] for r in sub])),
            "pass_rate_adapted": float(np.mean([r["pass_adapted"] for r in sub])),
            "slope": slope,
        }

    both = [r["pass"] and r["pass_adapted"] for r in rows]
    return {
        "check": "holder_fit",
        "exponent": budget.exponent(),
        "pairs": len(pairs) - excluded,
        "excluded": excluded,
        "bundles": bundles,
        "pass_rate": float(np.mean(both)) if rows else 1.0,
        "pass": bool(rows) and float(np.mean(both)) >= 0.95,
        "rows": rows,
    }


def write_holder_report(report, path):
    """holder_report.csv: one row per pair and bundle, adapted-norm quantities."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "bundle", "separation", "distance", "bound", "pass"])
        for r in report["rows"]:
            writer.writerow([
                r["pair_id"], r["bundle"],
                f"{r['separation_adapted']:.17g}",
                f"{r['distance_adapted']:.17g}",
                f"{r['bound_adapted']:.17g}",
                int(r["pass_adapted"]),
            ])
