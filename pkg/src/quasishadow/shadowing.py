"""Pseudo-orbits and the quasi-shadowing solver with center-direction slack.

A pseudo-orbit is a chain of true orbit segments glued by small jumps, with
block certificates at every segment endpoint, adjacent indices differing by at
most one, and jump sizes controlled by a per-index schedule delta_k.  The
solver corrects the segment starts in the stable and unstable directions only
(forward recursion for stable components, backward for unstable, cyclic for
periodic chains); jump components along the center are never corrected and
accumulate as the quasi displacements u_n.  Quasi-closing and
quasi-specification are derived modes built on periodic chains.
"""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .geometry import chart_add, chart_difference, torus_distance
from .lyapnorm import closed_form_C, epsilon_zero
from .oseledets import BlockParams, classify_block
from .systems import SystemSpec, cocycle, evaluate, orbit

from .regularity import HolderBudget


class ShadowDivergence(RuntimeError):
    """Raised when the correction residual fails to reach tolerance."""


@dataclass(frozen=True)
class DeltaSchedule:
    """Jump-size schedule delta_k: the min of the splitting-continuity branch
    and the cylinder-nesting branch.

    The continuity branch ((1 - varsigma) xi / (b2 e^{6 k eps}))^{1/(a1 alpha)}
    keeps the splitting deviation across a jump below (1 - varsigma) xi, so
    cones of width varsigma xi at the segment end sit inside width-xi cones at
    the next anchor.  The nesting branch
    (gamma / 2)(1 - e^{-lam3 + eps'/theta}) C^{-1} e^{-(1 + 1/theta) k eps'}
    with gamma = (eps0 eta / (3 C2))^{1/theta} keeps the corrected point inside
    the shrinking invariant cylinders.  Linear systems (D = 0) have exact
    splittings and skip the continuity branch.
    """

    eta: float
    xi: float
    varsigma: float
    theta: float
    gamma: float
    C1: float
    C2: float
    lam3: float
    eps0: float
    eps: float
    small_eps: float
    b2: float
    exact_splitting: bool

    def holder_branch(self, k):
        if self.exact_splitting:
            return np.inf
        rhs = (1.0 - self.varsigma) * self.xi / (self.b2 * np.exp(6 * k * self.eps))
        return rhs ** (1.0 / self.theta)

    def junction_branch(self, k):
        decay = 1.0 - np.exp(-self.lam3 + self.small_eps / self.theta)
        C = closed_form_C(self.eps)
        return (self.gamma / 2.0) * decay / C * np.exp(
            -(1.0 + 1.0 / self.theta) * k * self.small_eps)

    def __call__(self, k):
        return float(min(self.holder_branch(k), self.junction_branch(k)))


def delta_schedule(system: SystemSpec, params: BlockParams, budget: HolderBudget,
                   eta=0.1, xi=0.1, varsigma=None, C1=2.0) -> DeltaSchedule:
    """Build the certified jump schedule from the block rates and Holder budget."""
    eps = params.eps
    lam3 = min(params.lam, params.mu) - 4 * eps
    small_eps = eps / system.holder_alpha
    theta = budget.exponent()
    if lam3 <= small_eps / theta:
        raise ValueError("rates too weak: cylinder contraction does not dominate")
    if varsigma is None:
        # worst linear one-step cone-contraction prediction, with headroom
        lam1, mu1 = params.lam - 2 * eps, params.mu - 2 * eps
        lam1_p, mu1_p = params.lam_p + 2 * eps, params.mu_p + 2 * eps
        pred = max(np.exp(mu1_p - mu1), np.exp(lam1_p - lam1),
                   np.exp(-lam1 + lam1_p), np.exp(-mu1 + mu1_p))
        varsigma = min(0.95, 1.25 * pred)
    C2 = 2.0 * system.deriv_bound * C1
    eps0 = epsilon_zero(system, params)
    gamma = (eps0 * eta / (3.0 * C2)) ** (1.0 / theta)
    return DeltaSchedule(eta=eta, xi=xi, varsigma=varsigma, theta=theta,
                         gamma=gamma, C1=C1, C2=C2, lam3=lam3, eps0=eps0,
                         eps=eps, small_eps=small_eps, b2=budget.b2,
                         exact_splitting=budget.D == 0.0)


@dataclass
class PseudoOrbit:
    """A chain of true orbit segments with certified endpoints and small jumps.

    jumps[n] = chart_difference(f^{a_n}(x_n), x_{n+1}), the displacement applied
    at junction n; for periodic chains the last junction wraps to segment 0.
    deltas[n] is the schedule value the jump was checked against.
    """

    segments: list          # (anchor, length) pairs
    points: list            # stored true segment points, shape (a_n + 1, d)
    cert_start: list
    cert_end: list
    jumps: list
    deltas: list
    periodic: bool

    @property
    def s_minus(self):
        return [c.kappa for c in self.cert_start]

    @property
    def s_plus(self):
        return [c.kappa for c in self.cert_end]

    def n_junctions(self):
        return len(self.segments) if self.periodic else len(self.segments) - 1


def validate_pseudo_orbit(system: SystemSpec, po: PseudoOrbit, tol=1e-9):
    """Check the pseudo-orbit invariants; raises ValueError on violation."""
    n_seg = len(po.segments)
    if n_seg == 0:
        raise ValueError("empty pseudo-orbit")
    for n, ((x, a), pts) in enumerate(zip(po.segments, po.points)):
        if a < 1:
            raise ValueError(f"segment {n} has length {a} < 1")
        if len(pts) != a + 1:
            raise ValueError(f"segment {n} stores {len(pts)} points, expected {a + 1}")
        seg = orbit(system, x, a)
        if np.max(torus_distance(seg, pts)) > tol:
            raise ValueError(f"segment {n} is not a true orbit")
    for n in range(po.n_junctions()):
        m = (n + 1) % n_seg
        if abs(po.cert_end[n].kappa - po.cert_start[m].kappa) > 1:
            raise ValueError(
                f"junction {n}: index jump {po.cert_end[n].kappa} -> "
                f"{po.cert_start[m].kappa} exceeds 1")
        end = po.points[n][-1]
        j = chart_difference(end, po.segments[m][0], max_dist=0.45)
        if np.max(np.abs(j - po.jumps[n])) > tol:
            raise ValueError(f"junction {n}: stored jump inconsistent")
        if np.linalg.norm(po.jumps[n]) >= po.deltas[n]:
            raise ValueError(
                f"junction {n}: jump {np.linalg.norm(po.jumps[n]):.3g} "
                f">= delta {po.deltas[n]:.3g}")
    return True


def _certify(system, x, params, N, cache):
    """classify_block with a constant-cocycle shortcut: for those systems the
    certificate is anchor-independent up to its stored point."""
    if system.constant_jacobian and cache:
        return dataclasses.replace(cache[0], point=tuple(np.atleast_1d(x)))
    cert = classify_block(system, x, params, N)
    if system.constant_jacobian:
        cache.append(cert)
    return cert


def generate_pseudo_orbit(system: SystemSpec, params: BlockParams, schedule,
                          count, length, rho, seed=0, N=20, periodic=False,
                          max_retry=50, cache=None) -> PseudoOrbit:
    """Random certified pseudo-orbit with jumps of size <= rho * delta_k.

    ``schedule`` is a callable k -> delta_k or a constant; ``length`` an int or
    an inclusive (lo, hi) range sampled per segment.  Gluing jumps are
    resampled until the landing point certifies with an index step <= 1.
    ``cache`` (a list) can be shared across calls on a constant-cocycle system
    to amortize the one classification it needs.
    """
    if not callable(schedule):
        delta_of = lambda k, v=float(schedule): v
    else:
        delta_of = schedule
    rng = np.random.default_rng(seed)
    if cache is None:
        cache = []
    x = rng.random(system.dim)
    segments, points, cert_start, cert_end, jumps, deltas = [], [], [], [], [], []
    cur_start = _certify(system, x, params, N, cache)
    for n in range(count):
        a = int(length if np.isscalar(length) else rng.integers(length[0], length[1] + 1))
        pts = orbit(system, x, a)
        end_cert = _certify(system, pts[-1], params, N, cache)
        segments.append((np.asarray(x, dtype=float), a))
        points.append(pts)
        cert_start.append(cur_start)
        cert_end.append(end_cert)
        if n == count - 1 and not periodic:
            break
        delta = delta_of(end_cert.kappa)
        if rho > 0 and not np.isfinite(delta):
            raise ValueError("schedule gives an infinite delta; pass a constant")
        if n == count - 1:  # periodic wrap: jump back to the first anchor
            j = chart_difference(pts[-1], segments[0][0])
            if np.linalg.norm(j) >= delta:
                raise ValueError(
                    f"periodic closure gap {np.linalg.norm(j):.3g} exceeds "
                    f"delta {delta:.3g}")
            jumps.append(j)
            deltas.append(delta)
            break
        for attempt in range(max_retry):
            j = rho * delta * _ball_point(rng, system.dim) if rho > 0 \
                else np.zeros(system.dim)
            y = chart_add(pts[-1], j)
            try:
                nxt = _certify(system, y, params, N, cache)
            except ValueError:
                continue
            if abs(nxt.kappa - end_cert.kappa) <= 1:
                break
        else:
            raise ValueError(f"junction {n}: certification retry budget exhausted")
        jumps.append(chart_difference(pts[-1], y))
        deltas.append(delta)
        x = y
        cur_start = nxt
    return PseudoOrbit(segments=segments, points=points, cert_start=cert_start,
                       cert_end=cert_end, jumps=jumps, deltas=deltas,
                       periodic=periodic)


def _ball_point(rng, d):
    v = rng.standard_normal(d)
    return rng.random() ** (1.0 / d) * v / np.linalg.norm(v)


@dataclass
class ShadowResult:
    y_starts: list           # corrected segment starts
    u_disp: list             # per-junction center displacement vectors
    step_errors: list        # per-segment arrays of torus distances to the input
    junction_residuals: list  # per-junction s/u residual norms
    target_scales: list      # eta * eps_{kappa(x_n)} per segment
    iterations: int
    converged: bool
    status: str              # "converged" | "contract_fail"
    eta: float
    xi: float

    def sup_error(self):
        return float(max(np.max(e) for e in self.step_errors))

    def max_center_disp(self):
        return float(max((np.linalg.norm(u) for u in self.u_disp), default=0.0))


def _junction_data(system, po):
    """Cocycles over the segments and restricted transfer blocks per junction."""
    n_seg = len(po.segments)
    cocycles = [cocycle(system, x, a) for x, a in po.segments]
    data = []
    for n in range(po.n_junctions()):
        m = (n + 1) % n_seg
        sp_n = po.cert_start[n].splitting
        sp_m = po.cert_start[m].splitting
        M = sp_m.matrix()
        d_s, d_c, d_u = sp_m.dims
        Ts = Tu = None
        if d_s:
            C = np.linalg.solve(M, cocycles[n] @ sp_n.E_s.basis)
            Ts = C[:d_s, :]
        if d_u:
            C = np.linalg.solve(M, cocycles[n] @ sp_n.E_u.basis)
            Tu = C[d_s + d_c:, :]
        data.append((Ts, Tu))
    return cocycles, data


def _solve_su(po, defects_coeff, transfers):
    """Stable/unstable correction coefficients from the junction equations.

    Stable parts obey a_{m} = Ts_n a_n - alpha_n (forward, contracting),
    unstable parts b_n = Tu_n^{-1}(b_{m} + gamma_n) (backward, contracting);
    periodic chains iterate the sweeps to the cyclic fixed point.
    """
    n_seg = len(po.segments)
    d_s, d_c, d_u = po.cert_start[0].splitting.dims
    a = [np.zeros(d_s) for _ in range(n_seg)]
    b = [np.zeros(d_u) for _ in range(n_seg)]
    sweeps = 1000 if po.periodic else 1
    for _ in range(sweeps):
        prev = ([v.copy() for v in a], [v.copy() for v in b])
        for n in range(po.n_junctions()):
            m = (n + 1) % n_seg
            alpha, _, _ = defects_coeff[n]
            Ts, _ = transfers[n]
            if d_s:
                a[m] = Ts @ a[n] - alpha
        for n in reversed(range(po.n_junctions())):
            m = (n + 1) % n_seg
            _, _, gamma = defects_coeff[n]
            _, Tu = transfers[n]
            if d_u:
                b[n] = np.linalg.solve(Tu, b[m] + gamma)
        if not po.periodic:
            break
        change = max(max((np.max(np.abs(x - y)) for x, y in zip(a, prev[0])), default=0.0),
                     max((np.max(np.abs(x - y)) for x, y in zip(b, prev[1])), default=0.0))
        if change < 1e-16:
            break
    return a, b


def quasi_shadow_solve(system: SystemSpec, po: PseudoOrbit, eta=0.1, xi=0.1,
                       tol_su=1e-10, tol_leaf=1e-8, max_iter=200) -> ShadowResult:
    """Correct segment starts in the s/u directions until junction defects are
    purely central; verify the shadowing contract on the result.

    Raises ShadowDivergence if the residual fails to reach tol_su within
    max_iter; a converged solve that violates the distance or center-cone
    contract returns status "contract_fail".
    """
    validate_pseudo_orbit(system, po)
    n_seg = len(po.segments)
    params = po.cert_start[0].params
    eps0 = epsilon_zero(system, params)
    small_eps = params.eps / system.holder_alpha
    _, transfers = _junction_data(system, po)

    ys = [np.asarray(x, dtype=float).copy() for x, _ in po.segments]

    def defect_coeffs(starts):
        ends = [evaluate(system, y, a) for y, (_, a) in zip(starts, po.segments)]
        out = []
        for n in range(po.n_junctions()):
            m = (n + 1) % n_seg
            w = chart_difference(ends[n], starts[m], max_dist=0.45)
            sp = po.cert_start[m].splitting
            out.append(sp.coefficients(w))
        return out

    def residual(coeffs):
        if not coeffs:
            return 0.0
        return max(np.linalg.norm(np.concatenate([al, ga])) for al, _, ga in coeffs)

    coeffs = defect_coeffs(ys)
    res = residual(coeffs)
    iterations = 0
    while res > tol_su:
        if iterations >= max_iter:
            raise ShadowDivergence(
                f"junction residual {res:.3g} above {tol_su:.3g} after "
                f"{iterations} iterations")
        a, b = _solve_su(po, coeffs, transfers)
        step = 1.0
        while True:
            trial = []
            for n in range(n_seg):
                sp = po.cert_start[n].splitting
                corr = np.zeros(system.dim)
                if sp.E_s.rank:
                    corr += sp.E_s.basis @ a[n]
                if sp.E_u.rank:
                    corr += sp.E_u.basis @ b[n]
                trial.append(chart_add(ys[n], step * corr))
            new_coeffs = defect_coeffs(trial)
            new_res = residual(new_coeffs)
            if new_res < res or step < 1.0 / 64.0:
                break
            step *= 0.5  # safeguarded step: halve when the residual grows
        if new_res >= res and iterations > 0:
            raise ShadowDivergence(
                f"residual stalled at {res:.3g} (target {tol_su:.3g})")
        ys, coeffs, res = trial, new_coeffs, new_res
        iterations += 1

    u_disp = []
    junction_res = []
    for n in range(po.n_junctions()):
        m = (n + 1) % n_seg
        sp = po.cert_start[m].splitting
        al, ce, ga = coeffs[n]
        # u_n is the center overshoot of the flow past the next start:
        # chart_difference(y_{n+1}, f^{a_n}(y_n)) restricted to E^c
        u_disp.append(-(sp.E_c.basis @ ce) if sp.E_c.rank else np.zeros(system.dim))
        junction_res.append(float(np.linalg.norm(np.concatenate([al, ga]))))

    step_errors = []
    target_scales = []
    contract_ok = True
    for n in range(n_seg):
        x, a_n = po.segments[n]
        ypts = orbit(system, ys[n], a_n)
        errs = torus_distance(po.points[n], ypts)
        step_errors.append(np.asarray(errs))
        scale = eta * eps0 * np.exp(-po.cert_start[n].kappa * small_eps)
        target_scales.append(float(scale))
        if np.max(errs) >= scale:
            contract_ok = False
    for n in range(po.n_junctions()):
        m = (n + 1) % n_seg
        sp = po.cert_start[m].splitting
        _, ce, _ = coeffs[n]
        center_len = np.linalg.norm(ce)
        if junction_res[n] > xi * center_len + tol_leaf:
            contract_ok = False

    return ShadowResult(
        y_starts=ys, u_disp=u_disp, step_errors=step_errors,
        junction_residuals=junction_res, target_scales=target_scales,
        iterations=iterations, converged=contract_ok,
        status="converged" if contract_ok else "contract_fail",
        eta=eta, xi=xi)


def verify_quasi_shadow(system: SystemSpec, po: PseudoOrbit,
                        result: ShadowResult, eta=None, xi=None,
                        tol_leaf=1e-8):
    """Independent recomputation of the shadowing contract from scratch.

    Re-evolves the corrected starts, re-measures every step distance against
    the target scale, and re-runs the center-cone test at every junction;
    no solver state is trusted.
    """
    eta = result.eta if eta is None else eta
    xi = result.xi if xi is None else xi
    params = po.cert_start[0].params
    eps0 = epsilon_zero(system, params)
    small_eps = params.eps / system.holder_alpha
    n_seg = len(po.segments)
    segments = []
    ok = True
    ends = []
    for n in range(n_seg):
        x, a_n = po.segments[n]
        ypts = orbit(system, result.y_starts[n], a_n)
        ends.append(ypts[-1])
        errs = np.asarray(torus_distance(po.points[n], ypts))
        scale = eta * eps0 * np.exp(-po.cert_start[n].kappa * small_eps)
        margin = float(scale - np.max(errs))
        segments.append({"segment": n, "max_error": float(np.max(errs)),
                         "scale": float(scale), "margin": margin,
                         "pass": margin > 0.0})
        ok &= margin > 0.0
    junctions = []
    for n in range(po.n_junctions()):
        m = (n + 1) % n_seg
        sp = po.cert_start[m].splitting
        w = chart_difference(ends[n], result.y_starts[m], max_dist=0.45)
        al, ce, ga = sp.coefficients(w)
        su = float(np.linalg.norm(np.concatenate([al, ga])))
        center = float(np.linalg.norm(ce))
        cone_ok = su <= xi * center + tol_leaf
        junctions.append({"junction": n, "su_residual": su,
                          "center_disp": center, "cone_pass": cone_ok})
        ok &= cone_ok
    return {"check": "quasi_shadow", "pass": bool(ok),
            "segments": segments, "junctions": junctions}


def quasi_close(system: SystemSpec, certificate, p, eta=0.1, xi=0.1,
                beta=None, schedule=None, tol_su=1e-10, tol_leaf=1e-8,
                N=20, max_iter=200) -> ShadowResult:
    """Quasi-closing: turn a near-recurrence f^p(x) ~ x into a quasi-periodic
    point via the one-segment periodic pseudo-orbit {x, ..., f^{p-1}(x)}.

    ``beta`` overrides the recurrence threshold (default: the schedule value
    at the certificate's index, which is often impractically small; see the
    delta-schedule notes).
    """
    x = np.asarray(certificate.point, dtype=float)
    params = certificate.params
    fpx = evaluate(system, x, p)
    j = chart_difference(fpx, x, max_dist=0.45)
    # the center drift may be large (it stays uncorrected); the recurrence
    # threshold applies to the hyperbolic part of the return gap only
    v_s, _, v_u = certificate.splitting.decompose(j)
    gap = float(np.linalg.norm(v_s + v_u))
    if beta is None:
        if schedule is None:
            raise ValueError("need beta or a schedule")
        beta = schedule(certificate.kappa)
    if gap >= beta:
        raise ValueError(f"recurrence gap {gap:.3g} >= beta {beta:.3g}")
    end_cert = classify_block(system, fpx, params, N) if not system.constant_jacobian \
        else dataclasses.replace(certificate, point=tuple(fpx))
    if abs(end_cert.kappa - certificate.kappa) > 1:
        raise ValueError("recurrence point certifies at an incompatible index")
    pts = orbit(system, x, p)
    po = PseudoOrbit(
        segments=[(x, p)], points=[pts], cert_start=[certificate],
        cert_end=[end_cert], jumps=[j], deltas=[float(np.linalg.norm(j)) + beta],
        periodic=True)
    return quasi_shadow_solve(system, po, eta=eta, xi=xi, tol_su=tol_su,
                              tol_leaf=tol_leaf, max_iter=max_iter)


def quasi_specification(system: SystemSpec, anchors, params: BlockParams,
                        eta=0.1, xi=0.1, delta=1e-3, horizon=None,
                        ref_length=10**6, seed=0, N=20, tol_su=1e-10,
                        tol_leaf=1e-8, max_iter=200, ref_start=None):
    """Quasi-specification: connect orbit segments through mined transitions
    and shadow the periodic concatenation.

    ``anchors`` is a list of (x_i, a_i); for each consecutive pair (cyclic) a
    transition segment is mined from a single reference orbit: a point z with
    d(z, f^{a_i}(x_i)) < delta and d(f^X(z), x_{i+1}) < delta for some
    transition time X <= horizon.  Returns (ShadowResult, pseudo_orbit,
    transition_times).
    """
    if horizon is None:
        horizon = int(np.ceil(np.log(1.0 / delta) / 0.9)) + 20
    rng = np.random.default_rng(seed)
    if ref_start is None:
        # systems with rational center rotations confine each orbit to a
        # finite fiber lattice; passing a ref_start on the anchors' lattice
        # makes transitions reachable
        ref_start = rng.random(system.dim)
    ref = orbit(system, ref_start, ref_length)
    cell = delta / np.sqrt(system.dim)
    n_cells = max(1, int(np.floor(1.0 / cell)))
    grid = {}
    keys = np.floor(ref * n_cells).astype(int)
    for idx in range(len(ref)):
        grid.setdefault(tuple(keys[idx] % n_cells), []).append(idx)

    def near(point):
        base = np.floor(np.asarray(point) * n_cells).astype(int)
        out = []
        for off in np.ndindex(*(3,) * system.dim):
            key = tuple((base + np.array(off) - 1) % n_cells)
            out.extend(grid.get(key, ()))
        return out

    n_anch = len(anchors)
    transitions = []
    for i in range(n_anch):
        x_i, a_i = anchors[i]
        x_next = np.asarray(anchors[(i + 1) % n_anch][0], dtype=float)
        end = evaluate(system, x_i, a_i)
        found = None
        for idx in sorted(near(end)):
            if torus_distance(ref[idx], end) >= delta:
                continue
            stop = min(idx + horizon, len(ref) - 1)
            for jdx in range(idx + 1, stop + 1):
                if torus_distance(ref[jdx], x_next) < delta:
                    found = (idx, jdx - idx)
                    break
            if found:
                break
        if found is None:
            raise ValueError(
                f"no transition within horizon {horizon} from segment {i}; "
                "the mixing horizon or reference orbit is too short")
        transitions.append(found)

    cache = []
    segments, points, cert_start, cert_end, jumps, deltas = [], [], [], [], [], []
    chain = []

    def extend_chopped(x, a, chunk=5):
        # short chunks with zero-jump junctions keep the unstable rounding
        # amplification per segment bounded (multiple shooting)
        x = np.asarray(x, dtype=float)
        while a > chunk:
            chain.append((x, chunk))
            x = evaluate(system, x, chunk)
            a -= chunk
        chain.append((x, a))

    for i in range(n_anch):
        extend_chopped(anchors[i][0], anchors[i][1])
        idx, X = transitions[i]
        extend_chopped(ref[idx].copy(), X)
    for x, a in chain:
        segments.append((x, a))
        points.append(orbit(system, x, a))
        cert_start.append(_certify(system, x, params, N, cache))
        cert_end.append(_certify(system, points[-1][-1], params, N, cache))
    for n in range(len(chain)):
        m = (n + 1) % len(chain)
        j = chart_difference(points[n][-1], segments[m][0])
        if np.linalg.norm(j) >= delta:
            raise ValueError(f"assembled junction {n} exceeds delta")
        jumps.append(j)
        deltas.append(delta)
    po = PseudoOrbit(segments=segments, points=points, cert_start=cert_start,
                     cert_end=cert_end, jumps=jumps, deltas=deltas, periodic=True)
    result = quasi_shadow_solve(system, po, eta=eta, xi=xi, tol_su=tol_su,
                                tol_leaf=tol_leaf, max_iter=max_iter)
    return result, po, [X for _, X in transitions]


# ---------------------------------------------------------------------------
# artifacts


def write_shadow_trace(system, po: PseudoOrbit, result: ShadowResult, path):
    """shadow_trace.csv: per segment step, input and corrected points, error."""
    import csv as _csv
    d = system.dim
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["segment", "step"]
                   + [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)]
                   + ["step_error", "eps_scale", "pass"])
        for n, ((x0, a), errs) in enumerate(zip(po.segments, result.step_errors)):
            ypts = orbit(system, result.y_starts[n], a)
            for i in range(a + 1):
                w.writerow([n, i]
                           + [f"{v:.17g}" for v in po.points[n][i]]
                           + [f"{v:.17g}" for v in ypts[i]]
                           + [f"{errs[i]:.17g}", f"{result.target_scales[n]:.17g}",
                              int(errs[i] < result.target_scales[n])])


def write_junction(po: PseudoOrbit, result: ShadowResult, path):
    """junction.csv: jump size, center displacement, s/u residual, cone verdict."""
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["junction", "jump_norm", "center_disp_norm", "su_residual",
                    "cone_pass"])
        for n in range(po.n_junctions()):
            center = np.linalg.norm(result.u_disp[n])
            su = result.junction_residuals[n]
            cone = su <= result.xi * center + 1e-8
            w.writerow([n, f"{np.linalg.norm(po.jumps[n]):.17g}",
                        f"{center:.17g}", f"{su:.17g}", int(cone)])


def write_shadow_summary(result: ShadowResult, path, schedule: DeltaSchedule = None,
                         k_range=range(1, 11)):
    blob = {
        "converged": result.converged,
        "status": result.status,
        "iterations": result.iterations,
        "sup_error": result.sup_error(),
        "max_center_disp": result.max_center_disp(),
        "eta": result.eta,
        "xi": result.xi,
        "gamma": schedule.gamma if schedule else None,
        "delta_schedule": ({str(k): schedule(k) for k in k_range}
                           if schedule else None),
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, indent=2)
    return blob
