"""Entropy estimation and quasi-periodic point counting.

Katok's covering numbers N_f(n, gamma, delta) in the Bowen metric d_n^f are
bracketed by a greedy ball cover (upper) and a maximal separated set (lower);
the fitted growth slope estimates the metric entropy.  The K_n construction
selects separated block points whose orbits return to their own partition
cell, quasi-closing turns them into quasi-periodic points, and the Theorem-C
style report compares the counted growth of quasi-periodic points against the
entropy estimate.
"""

import json
from dataclasses import dataclass

import numpy as np

from .geometry import torus_distance, wrap
from .oseledets import BlockParams, classify_block
from .shadowing import ShadowDivergence, quasi_close
from .systems import SystemSpec, evaluate


@dataclass(frozen=True)
class EntropyEstimate:
    gamma: float
    delta: float
    table: tuple          # rows (n, N_cover, N_separated)
    h_hat: float
    fit_range: tuple      # n values used in the fit
    fit_residual: float


@dataclass
class SeparatedQPPSet:
    period: int
    separation: float
    points: list          # dicts: point, m, su_residual, center_disp
    cardinality: int


def orbit_sampler(system: SystemSpec, seed=0, burn=100, stride=3):
    """Sampler drawing 'i.i.d.-in-practice' points by subsampling one long
    orbit with a stride; ergodicity of the reference measure does the mixing."""
    def sample(count):
        rng = np.random.default_rng(seed)
        x = rng.random(system.dim)
        for _ in range(burn):
            x = system.forward(x)
        pts = np.empty((count, system.dim))
        for i in range(count):
            for _ in range(stride):
                x = system.forward(x)
            pts[i] = x
        return pts
    return sample


def _batch_orbits(system, pts, n):
    """Forward orbits of many points at once, shape (count, n + 1, dim)."""
    pts = np.asarray(pts, dtype=float)
    out = np.empty((pts.shape[0], n + 1, pts.shape[1]))
    out[:, 0] = pts
    cur = pts
    for i in range(n):
        cur = wrap(system.forward(cur))
        out[:, i + 1] = cur
    return out


def _dn_distance(traj, center, n):
    """Bowen distance d_n^f between stored trajectories (vectorized)."""
    diff = np.abs(traj[:, :n, :] - center[None, :n, :]) % 1.0
    diff = np.minimum(diff, 1.0 - diff)
    return np.max(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)


class _GridIndex:
    """Bucket trajectories by their joint cell key over selected steps.

    A d_n ball of radius r constrains every step, so points within r of x in
    d_n must sit in the 3^d cell neighborhood of x at each keyed step (cell
    width >= r).  Keying on two well-separated steps prunes candidates far
    harder than the time-zero grid alone once orbits decorrelate.  Buckets
    live in flat arrays; lookups batch through one searchsorted call.
    """

    def __init__(self, traj, steps, r):
        self.steps = tuple(steps)
        self.cells = max(1, int(np.floor(1.0 / r)))
        d = traj.shape[2]
        self.strides = self.cells ** np.arange(d)
        per_step = [
            (np.floor(traj[:, s, :] * self.cells).astype(np.int64)
             % self.cells) @ self.strides
            for s in self.steps]
        span = int(self.cells ** d)
        keys = per_step[0]
        for nxt in per_step[1:]:
            keys = keys * span + nxt
        order = np.argsort(keys, kind="stable")
        skeys = keys[order]
        self.order = order
        self.ukeys, self.starts = np.unique(skeys, return_index=True)
        self.counts = np.diff(np.r_[self.starts, len(skeys)])
        # all 3^d neighbor-cell offsets, and every point's neighbor keys per
        # keyed step, precomputed so the per-center query is pure lookup
        offs = np.array(list(np.ndindex(*(3,) * d))) - 1
        self.span = span
        self.neighbor_keys = [
            ((np.floor(traj[:, s, :] * self.cells).astype(np.int64)[:, None, :]
              + offs[None, :, :]) % self.cells) @ self.strides
            for s in self.steps]

    def near(self, traj, i):
        combined = self.neighbor_keys[0][i]
        for nb in self.neighbor_keys[1:]:
            combined = (combined[:, None] * self.span + nb[i][None, :]).ravel()
        if self.cells < 3:
            # coarse grids alias neighbor offsets onto the same cell
            combined = np.unique(combined)
        pos = np.searchsorted(self.ukeys, combined)
        ok = (pos < len(self.ukeys))
        pos = pos[ok]
        sel = pos[self.ukeys[pos] == combined[ok]]
        if sel.size == 0:
            return np.empty(0, dtype=int)
        return np.concatenate([
            self.order[s:s + c]
            for s, c in zip(self.starts[sel], self.counts[sel])])


def _greedy_cover(traj, n, radius, stop_covered, index=None):
    """First-uncovered greedy ball cover in d_n^f.

    Returns the number of centers placed before ``stop_covered`` points are
    covered.  The centers are pairwise more than ``radius`` apart, so the same
    sweep run to full coverage yields a maximal separated set.
    """
    m = traj.shape[0]
    if index is None:
        index = _GridIndex(traj, (0,) if n <= 1 else (0, n - 1), radius)
    covered = np.zeros(m, dtype=bool)
    n_covered = 0
    centers = 0
    for i in range(m):
        if covered[i]:
            continue
        centers += 1
        cand = index.near(traj, i)
        cand = cand[~covered[cand]]
        hit = cand[_dn_distance(traj[cand], traj[i], n) <= radius]
        covered[hit] = True
        n_covered += hit.size
        if n_covered >= stop_covered:
            break
    return centers


def katok_entropy(system: SystemSpec, sampler, gamma, delta, n_range,
                  samples=20000) -> EntropyEstimate:
    """Covering-number entropy estimate over the given n range.

    For each n the sampled cloud is covered greedily by gamma-balls in d_n^f
    until a (1 - delta) fraction is covered (N_cover), and a maximal
    (n, 2 gamma)-separated subset is extracted (N_separated, a packing lower
    bound since distinct members cannot share a gamma-ball).  h_hat is the
    least-squares slope of ln N_cover on the sample-adequate prefix.
    """
    ns = sorted(n_range)
    pts = sampler(samples)
    traj = _batch_orbits(system, pts, max(ns))
    target = int(np.ceil((1.0 - delta) * samples))
    rows = []
    for n in ns:
        n_cover = _greedy_cover(traj, n, gamma, target)
        n_sep = _greedy_cover(traj, n, 2.0 * gamma, samples)
        # a gamma-ball holds at most one 2gamma-separated point, and halving
        # the radius costs at most 2^dim balls: wider gaps mean undersampling
        limit = 2.0 ** traj.shape[2]
        if n_cover > limit * max(n_sep, 1) and n_cover > 8:
            raise ValueError(
                f"sample budget insufficient at n = {n}: cover/packing "
                f"bracket {n_cover}/{n_sep} wider than factor {limit:g}")
        rows.append((n, n_cover, n_sep))
    # fit on the prefix where balls still hold several samples each, so the
    # cover count tracks N_f rather than the sample count
    # fit on the sample-adequate regime: prefer the cover counts, fall back
    # to the (smaller) separated counts which saturate later, then to the
    # three smallest n as a last resort
    cover_ns = [n for n, nc, _ in rows if nc <= samples / 8]
    sep_ns = [n for n, _, nsep in rows if nsep <= samples / 8]
    if len(cover_ns) >= 3:
        fit_ns, col = cover_ns, 1
    elif len(sep_ns) >= 2:
        fit_ns, col = sep_ns, 2
    else:
        fit_ns, col = ns[:3], 1
    logs = np.log([row[col] for row in rows if row[0] in set(fit_ns)])
    coef, diag = np.polyfit(fit_ns, logs, 1, full=True)[:2]
    residual = float(np.sqrt(diag[0] / len(fit_ns))) if diag.size else 0.0
    return EntropyEstimate(gamma=gamma, delta=delta, table=tuple(rows),
                           h_hat=float(max(coef[0], 0.0)),
                           fit_range=tuple(fit_ns), fit_residual=residual)


def build_Kn(system: SystemSpec, sampler, params: BlockParams, k, gamma, l, n,
             beta, samples=4000, N=20):
    """The separated returning set K_n(gamma, l).

    Partitions the torus by a uniform grid of mesh < beta, keeps sampled block
    points (index <= k) that return to their own cell within [n, (1+gamma)n]
    steps, and extracts a greedy maximal (n, 1/l)-separated subset.  Returns
    (records, info); records hold point, return time m, and the block index.
    The returning set may be empty — that is a valid outcome, not an error.
    """
    horizon = int(np.floor((1.0 + gamma) * n))
    if horizon < n:
        raise ValueError("orbit window shorter than n")
    cells = int(np.ceil(np.sqrt(system.dim) / beta)) + 1
    pts = sampler(samples)
    traj = _batch_orbits(system, pts, horizon)

    # block membership; constant-cocycle systems share one certificate
    if system.constant_jacobian:
        kappa0 = classify_block(system, pts[0], params, N).kappa
        kappas = np.full(samples, kappa0)
    else:
        kappas = np.array([classify_block(system, p, params, N).kappa
                           for p in pts])
    in_block = kappas <= k

    keys = np.floor(traj * cells).astype(int) % cells
    returning = []
    for i in np.nonzero(in_block)[0]:
        home = keys[i, 0]
        for m in range(n, horizon + 1):
            if np.array_equal(keys[i, m], home):
                if not system.constant_jacobian and \
                        classify_block(system, traj[i, m], params, N).kappa > k:
                    continue  # the return must land in the block as well
                returning.append((i, m))
                break
    records = []
    chosen = []
    for i, m in returning:  # greedy separated extraction, deterministic order
        if all(_dn_distance(traj[i:i + 1], traj[j], n)[0] > 1.0 / l
               for j, _ in chosen):
            chosen.append((i, m))
            records.append({"point": pts[i], "m": m, "kappa": int(kappas[i]),
                            "cell": tuple(keys[i, 0])})
    info = {"n": n, "gamma": gamma, "l": l, "beta": beta, "mesh_cells": cells,
            "n_samples": samples, "n_block": int(in_block.sum()),
            "n_returning": len(returning),
            "block_fraction": float(len(returning)) / max(int(in_block.sum()), 1)}
    return records, info


def validate_Kn(system: SystemSpec, params: BlockParams, records, k, gamma, l,
                n, beta, N=20):
    """Independent recheck of the K_n properties (i)-(iii) from stored data."""
    for rec in records:
        if classify_block(system, rec["point"], params, N).kappa > k:
            return False
        m = rec["m"]
        if not n <= m <= (1.0 + gamma) * n:
            return False
        ret = evaluate(system, rec["point"], m)
        if torus_distance(rec["point"], ret) > beta:
            return False
        if classify_block(system, ret, params, N).kappa > k:
            return False
    for a in range(len(records)):
        for b in range(a + 1, len(records)):
            d = max(float(torus_distance(evaluate(system, records[a]["point"], i),
                                         evaluate(system, records[b]["point"], i)))
                    for i in range(n))
            if d <= 1.0 / l:
                return False
    return True


def harvest_quasi_periodic(system: SystemSpec, params: BlockParams, records,
                           l, n, eta=0.1, xi=0.1, beta_close=None, N=20,
                           tol_leaf=1e-8) -> SeparatedQPPSet:
    """Quasi-close every K_n member at its return time and keep the largest
    period class of verified quasi-periodic points.

    Each closed point z(x) stays within (3l)^{-1} of x along the first n
    iterates, so the (n, 1/l) separation of K_n gives (n, (3l)^{-1})
    separation of the harvest; violators and solver failures are dropped and
    logged, not fatal.
    """
    sep = 1.0 / (3.0 * l)
    kept = []
    failures = []
    cert0 = None
    for rec in records:
        try:
            if system.constant_jacobian and cert0 is not None:
                import dataclasses as _dc
                cert = _dc.replace(cert0, point=tuple(rec["point"]))
            else:
                cert = classify_block(system, rec["point"], params, N)
                cert0 = cert
            # the return gap is already below the grid mesh; anything inside
            # the chart radius is an acceptable closing threshold
            beta = beta_close if beta_close is not None else 0.45
            result = quasi_close(system, cert, rec["m"], eta=eta, xi=xi,
                                 beta=beta, N=N)
        except (ValueError, ShadowDivergence) as err:
            failures.append({"point": rec["point"], "error": str(err)})
            continue
        if max(result.junction_residuals, default=0.0) > tol_leaf:
            failures.append({"point": rec["point"], "error": "residual"})
            continue
        kept.append({"point": result.y_starts[0], "m": rec["m"],
                     "su_residual": result.junction_residuals[0],
                     "center_disp": float(np.linalg.norm(result.u_disp[0]))})
    by_m = {}
    for item in kept:
        by_m.setdefault(item["m"], []).append(item)
    if not by_m:
        return SeparatedQPPSet(period=n, separation=sep, points=[], cardinality=0)
    m_best = max(by_m, key=lambda m: (len(by_m[m]), -m))
    group = by_m[m_best]
    separated = []
    for item in group:  # recheck the triangle-chain separation independently
        if all(_pair_dn(system, item["point"], other["point"], n) > sep
               for other in separated):
            separated.append(item)
    return SeparatedQPPSet(period=m_best, separation=sep, points=separated,
                           cardinality=len(separated))


def _pair_dn(system, x, y, n):
    return max(float(torus_distance(evaluate(system, x, i),
                                    evaluate(system, y, i)))
               for i in range(n))


def count_separated_qpp(system: SystemSpec, params: BlockParams, n, epsilon,
                        ref_length=200000, max_candidates=4000, beta_rec=0.05,
                        seed=0, eta=0.1, xi=0.1, N=20,
                        tol_leaf=1e-8) -> SeparatedQPPSet:
    """Lower bound on the number of (n, epsilon)-separated quasi-periodic
    points of period n.

    Mines lag-n recurrences (in the hyperbolic directions) from one reference
    orbit, quasi-closes each candidate, and dedupes greedily by the Bowen
    metric.  Systems with no hyperbolic bundle are handled by pure packing:
    every point is quasi-periodic, so the count is a maximal epsilon-separated
    grid.
    """
    d_s, d_c, d_u = system.dims
    if d_s == 0 and d_u == 0:
        count = int(np.floor(1.0 / epsilon))
        pts = [{"point": np.full(system.dim, (i + 0.5) / count),
                "m": n, "su_residual": 0.0, "center_disp": None}
               for i in range(count)]
        return SeparatedQPPSet(period=n, separation=epsilon, points=pts,
                               cardinality=count)

    rng = np.random.default_rng(seed)
    ref = _batch_orbits(system, rng.random((1, system.dim)), ref_length + n)[0]
    # recurrence is required in the hyperbolic directions only — the center
    # may drift freely (f^n(x) on the center leaf of x); project the lag-n
    # chart difference onto the s/u coefficient block at a reference splitting
    sp = classify_block(system, ref[0], params, N).splitting
    dvec = ((ref[n:] - ref[:-n] + 0.5) % 1.0) - 0.5
    coefs = dvec @ np.linalg.inv(sp.matrix()).T
    su_cols = list(range(d_s)) + list(range(d_s + d_c, system.dim))
    lag = np.sqrt(np.sum(coefs[:, su_cols] ** 2, axis=1))
    lag = np.where(torus_distance(ref[:-n], ref[n:]) < 0.45, lag, np.inf)
    cand_idx = np.nonzero(lag < beta_rec)[0]
    if cand_idx.size > max_candidates:
        cand_idx = cand_idx[np.linspace(0, cand_idx.size - 1, max_candidates,
                                        dtype=int)]
    cert0 = None
    closed = []
    for i in cand_idx:
        x = ref[i]
        try:
            if system.constant_jacobian and cert0 is not None:
                import dataclasses as _dc
                cert = _dc.replace(cert0, point=tuple(x))
            else:
                cert = classify_block(system, x, params, N)
                cert0 = cert
            result = quasi_close(system, cert, n, eta=eta, xi=xi,
                                 beta=1.1 * beta_rec, N=N)
        except (ValueError, ShadowDivergence):
            continue
        if max(result.junction_residuals, default=0.0) > tol_leaf:
            continue
        closed.append({"point": result.y_starts[0], "m": n,
                       "su_residual": result.junction_residuals[0],
                       "center_disp": float(np.linalg.norm(result.u_disp[0]))})
    if not closed:
        return SeparatedQPPSet(period=n, separation=epsilon, points=[],
                               cardinality=0)
    traj = _batch_orbits(system, np.array([c["point"] for c in closed]), n)
    keep = []
    for j in range(len(closed)):  # greedy (n, epsilon) dedupe
        if keep:
            d = _dn_distance(traj[np.asarray(keep)], traj[j], n)
            if np.min(d) <= epsilon:
                continue
        keep.append(j)
    return SeparatedQPPSet(period=n, separation=epsilon,
                           points=[closed[j] for j in keep],
                           cardinality=len(keep))


def theorem_c_check(system: SystemSpec, params: BlockParams, sampler, gamma,
                    epsilons, n_range, k=1, entropy_samples=20000,
                    entropy_gamma=0.05, entropy_delta=0.1,
                    qpp_budget=None, beta_kn=0.05, kn_samples=3000, seed=0):
    """Entropy vs quasi-periodic growth report.

    Estimates h_hat, fits the growth rate of counted quasi-periodic points
    over the n range at every separation scale, and reports the margins
    rate_qpp(eps) - h_hat/(1 + gamma); PASS iff the margin at the smallest
    scale is >= -0.1 nats.  Also trends the returning-mass fraction of the
    K_n construction, which should not decay in n.
    """
    qpp_budget = qpp_budget or {}
    est = katok_entropy(system, sampler, gamma=entropy_gamma,
                        delta=entropy_delta, n_range=n_range,
                        samples=entropy_samples)
    ns = sorted(n_range)
    rates = {}
    counts = {}
    for eps in sorted(epsilons, reverse=True):
        row = []
        for n in ns:
            got = count_separated_qpp(system, params, n, eps, seed=seed,
                                      **qpp_budget)
            row.append(got.cardinality)
        counts[eps] = row
        mask = [i for i, c in enumerate(row) if c > 0]
        if len(mask) >= 2:
            slope = np.polyfit([ns[i] for i in mask],
                               np.log([row[i] for i in mask]), 1)[0]
        else:
            slope = 0.0
        rates[eps] = float(slope)
    floor = gamma  # the Theorem C comparison rate is h_hat / (1 + gamma)
    margins = {eps: rates[eps] - est.h_hat / (1.0 + floor) for eps in rates}
    smallest = min(margins)
    passed = margins[smallest] >= -0.1

    fractions = []
    for n in ns:
        _, info = build_Kn(system, sampler, params, k, gamma, 1.0 / (3 * 0.05),
                           n, beta=beta_kn, samples=kn_samples)
        fractions.append(info["block_fraction"])
    trend = float(np.polyfit(ns, fractions, 1)[0]) if len(ns) >= 2 else 0.0
    lemma_pass = trend >= -1e-3 or fractions[-1] >= fractions[0] - 0.05

    return {
        "h_hat": est.h_hat,
        "entropy_table": [list(r) for r in est.table],
        "rates": {str(e): r for e, r in rates.items()},
        "counts": {str(e): c for e, c in counts.items()},
        "margins": {str(e): m for e, m in margins.items()},
        "pass": bool(passed and lemma_pass),
        "inequality_pass": bool(passed),
        "lemma_fractions": fractions,
        "lemma_trend": trend,
        "lemma_pass": bool(lemma_pass),
        "gamma": gamma,
    }


# ---------------------------------------------------------------------------
# artifacts


def write_entropy_csv(estimate: EntropyEstimate, path):
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["n", "N_cover", "N_separated"])
        for n, nc, nsep in estimate.table:
            w.writerow([n, nc, nsep])


def write_qpp_csv(rows, path):
    """rows: iterables of (n, epsilon, count, rate_fit)."""
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["n", "epsilon", "count", "rate_fit"])
        for n, eps, count, rate in rows:
            w.writerow([n, f"{eps:.17g}", count, f"{rate:.17g}"])


def write_theorem_c_json(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    return report
