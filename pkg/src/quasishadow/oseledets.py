"""Lyapunov spectra, splitting estimation, and finite-horizon block classification.

The classifier checks the three inequality families of the block definition
(stable contraction, two-sided center bounds, unstable backward contraction)
on a finite window and reports the minimal uniformity index that passes,
together with worst-case margins.  The index is a lower bound for the true
one: only finitely many (n, m) pairs are examined.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .geometry import Subspace, Splitting, subspace_distance
from .systems import SystemSpec


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: tuple  # nats per iterate, sorted descending
    horizon: int
    point: tuple


@dataclass(frozen=True)
class BlockParams:
    """Rates (lam, mu) and center pinch (lam_p, mu_p) with slack eps, nats/iterate."""

    lam: float
    mu: float
    lam_p: float
    mu_p: float
    eps: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("lam and mu must be positive")
        if not (-self.lam < -self.lam_p < self.mu_p < self.mu):
            raise ValueError("rates must satisfy -lam < -lam_p < mu_p < mu")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def slack_bound(self):
        """The quantity eps must stay well below (separation of the rates)."""
        return min(self.lam, self.mu, abs(self.lam - self.lam_p),
                   abs(self.mu_p + self.lam_p), abs(self.mu - self.mu_p))

    def check_slack(self):
        bound = self.slack_bound() / 10.0
        if self.eps >= bound:
            raise ValueError(
                f"eps = {self.eps} violates the slack requirement eps < {bound:.6g} "
                "(one tenth of the smallest rate separation)"
            )


@dataclass(frozen=True)
class BlockCertificate:
    point: tuple
    params: BlockParams
    horizon: int
    kappa: int
    splitting: Splitting
    margins: dict  # per-condition worst-case slack (log scale) at k = kappa

    def to_json(self):
        d = {
            "point": list(self.point),
            "params": asdict(self.params),
            "horizon": self.horizon,
            "kappa": self.kappa,
            "splitting": {
                "E_s": self.splitting.E_s.basis.tolist(),
                "E_c": self.splitting.E_c.basis.tolist(),
                "E_u": self.splitting.E_u.basis.tolist(),
            },
            "margins": self.margins,
        }
        return json.dumps(d)


def lyapunov_spectrum(system: SystemSpec, x, n: int, warmup=None) -> LyapunovSpectrum:
    """Benettin QR estimate of the Lyapunov exponents along the forward orbit.

    A warmup phase (excluded from the average) aligns the frame with the
    Oseledets filtration before logging begins; for constant cocycles the
    post-warmup increments are exact.
    """
    if n < 100:
        raise ValueError("horizon must be at least 100")
    if warmup is None:
        warmup = min(100, n // 10)
    x0 = np.asarray(x, dtype=float)
    d = system.dim
    Q = _seed_frame(d)
    sums = np.zeros(d)
    p = x0.copy()
    for i in range(warmup + n):
        B = system.jacobian(p) @ Q
        Q, R = np.linalg.qr(B)
        diag = np.diag(R)
        sign = np.sign(diag)
        sign[sign == 0] = 1.0
        Q = Q * sign
        if i >= warmup:
            sums += np.log(np.abs(diag))
        p = system.forward(p)
    exps = tuple(sorted((sums / n).tolist(), reverse=True))
    return LyapunovSpectrum(exponents=exps, horizon=n, point=tuple(np.atleast_1d(x0)))


def _seed_frame(d, seed=12345):
    """Fixed generic orthonormal start frame; the identity can be exactly
    invariant for product systems and then never aligns."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q


def _qr_pos(M):
    Q, R = np.linalg.qr(M)
    sign = np.sign(np.diag(R))
    sign[sign == 0] = 1.0
    return Q * sign


def _window_orbit(system, x, lo, hi):
    """Stored orbit points f^m(x) for m in [lo, hi] (lo <= 0 <= hi).

    The points are realized once, by backward iteration for m < 0 and forward
    iteration for m > 0, and every downstream sweep reads the stored array.
    Re-iterating between anchors instead would decorrelate exponentially and
    silently mix splittings of unrelated orbits.
    """
    x = np.asarray(x, dtype=float) % 1.0
    pts = np.empty((hi - lo + 1, system.dim))
    pts[-lo] = x
    p = x
    for m in range(1, hi + 1):
        p = system.forward(p)
        pts[m - lo] = p
    p = x
    for m in range(1, -lo + 1):
        p = system.backward(p)
        pts[-lo - m] = p
    return pts


def _forward_frames(jacs, d, first, count, horizon):
    """Converged forward-QR frames at stored-orbit indices first .. first+count-1.

    One sweep beginning ``horizon`` steps earlier, so every recorded frame has
    at least ``horizon`` steps of alignment; jacs[j] is Df at orbit index j.
    """
    Q = _seed_frame(d)
    frames = [None] * count
    last = first + count - 1
    for idx in range(first - horizon, last + 1):
        if idx >= first:
            frames[idx - first] = Q.copy()
        if idx == last:
            break
        Q = _qr_pos(jacs[idx] @ Q)
    return frames


def _backward_frames(jacs, d, first, count, horizon):
    """Converged inverse-cocycle QR frames on the same stored window."""
    Q = _seed_frame(d)
    frames = [None] * count
    last = first + count - 1
    for idx in range(last + horizon, first - 1, -1):
        if idx <= last:
            frames[idx - first] = Q.copy()
        if idx == first:
            break
        Q = _qr_pos(np.linalg.inv(jacs[idx - 1]) @ Q)
    return frames


def _intersect(A: Subspace, B: Subspace, dim_c: int, angle_tol=1e-6):
    """Intersection of two subspaces via principal vectors.

    Keeps the ``dim_c`` most aligned principal directions and requires their
    principal angles to be below ``angle_tol``.
    """
    U, s, Vt = np.linalg.svd(A.basis.T @ B.basis)
    s = np.clip(s, -1.0, 1.0)
    if dim_c == 0:
        return Subspace.trivial(A.ambient_dim)
    if len(s) < dim_c or s[dim_c - 1] < np.cos(angle_tol):
        raise ValueError(
            f"intersection dimension mismatch: needed {dim_c} directions, "
            f"cosines {s.tolist()}"
        )
    vecs = A.basis @ U[:, :dim_c]
    return Subspace.from_spanning(vecs)


def estimate_splitting(system: SystemSpec, x, horizon: int, params: BlockParams = None) -> Splitting:
    """Finite-horizon Oseledets splitting at x from converged cocycle frames.

    E^u (resp. E^s) is the dominant subspace of the forward (resp. inverse)
    cocycle; E^c is the principal-vector intersection of the E^{cs} and
    E^{cu} estimates.  Requires a spectral gap around the center band.
    """
    d_s, d_c, d_u = system.dims
    d = system.dim
    if d_s == 0 and d_u == 0:
        raise ValueError("gap violation: spectrum has no hyperbolic part")
    if params is not None:
        spec = lyapunov_spectrum(system, x, max(200, 4 * horizon))
        exps = np.array(spec.exponents)
        gaps = -np.diff(exps)
        boundary_gaps = []
        if d_u > 0:
            boundary_gaps.append(gaps[d_u - 1])
        if d_s > 0:
            boundary_gaps.append(gaps[d - d_s - 1])
        if boundary_gaps and min(boundary_gaps) <= 4 * params.eps:
            raise ValueError(
                f"gap violation: smallest boundary exponent gap {min(boundary_gaps):.4g} "
                f"<= 4 eps = {4 * params.eps:.4g}"
            )

    pts = _window_orbit(system, x, -horizon, horizon)
    jacs = [system.jacobian(p) for p in pts]
    fwd = _forward_frames(jacs, d, horizon, 1, horizon)[0]
    bwd = _backward_frames(jacs, d, horizon, 1, horizon)[0]
    return _splitting_from_frames(system, fwd, bwd)


def _splitting_from_frames(system, fwd, bwd):
    d_s, d_c, d_u = system.dims
    d = system.dim
    E_u = Subspace(d, fwd[:, :d_u]) if d_u else Subspace.trivial(d)
    E_s = Subspace(d, bwd[:, :d_s]) if d_s else Subspace.trivial(d)
    if d_c == 0:
        return Splitting(E_s, Subspace.trivial(d), E_u)
    E_c = _intersect(Subspace(d, bwd[:, :d_s + d_c]), Subspace(d, fwd[:, :d_u + d_c]), d_c)
    return Splitting(E_s, E_c, E_u)


def _window_data(system: SystemSpec, x, N: int, horizon: int):
    """Stored orbit points, Jacobians, and splittings for f^m(x), |m| <= N."""
    pts = _window_orbit(system, x, -(N + horizon), N + horizon)
    jacs = [system.jacobian(p) for p in pts]
    off = N + horizon  # array index of orbit index 0
    if system.dims == (0, system.dim, 0):
        triv = Splitting(Subspace.trivial(system.dim),
                         Subspace(system.dim, np.eye(system.dim)),
                         Subspace.trivial(system.dim))
        return pts, jacs, [triv] * (2 * N + 1)
    fwd = _forward_frames(jacs, system.dim, off - N, 2 * N + 1, horizon)
    bwd = _backward_frames(jacs, system.dim, off - N, 2 * N + 1, horizon)
    sps = [_splitting_from_frames(system, f, b) for f, b in zip(fwd, bwd)]
    return pts, jacs, sps


def window_splittings(system: SystemSpec, x, N: int, horizon: int):
    """Splittings at f^m(x) for m in [-N, N], from two shared QR sweeps."""
    return _window_data(system, x, N, horizon)[2]


def _bundle_transfers(jacobians, bases):
    """Per-step cocycle action expressed in the bundle's own window bases.

    Forward transfer j is Df(x_j) from the bundle at x_j to the bundle at
    x_{j+1}, written as a rank x rank matrix in the orthonormal bases; the
    inverse transfer is its matrix inverse (back to the bundle at x_j).
    Re-expressing at every point keeps the transverse floating-point error
    from being amplified by the dominant cocycle growth over long products.
    """
    fwd = []
    for j in range(len(jacobians)):
        T = bases[j + 1].T @ (jacobians[j] @ bases[j])
        fwd.append(T)
    inv = [np.linalg.inv(T) for T in fwd]
    return fwd, inv


def _worst_excess(transfers, N, coef, eps, forward):
    """Max over window pairs (m, n) of log||Df^{+-n}|bundle|| + coef*n - eps|m|.

    ``transfers`` has 2N entries; entry j acts between window indices j and
    j+1 (forward) or j+1 and j (inverse).
    """
    worst = 0.0  # the (m, n) = (0, 0) term
    r = transfers[0].shape[0]
    if r == 1:
        # rank-one bundles: products are scalars, so the norm scan reduces to
        # prefix sums of log|t_j|
        logs = np.log(np.abs(np.asarray([t[0, 0] for t in transfers])))
        S = np.concatenate([[0.0], np.cumsum(logs)])
        for i in range(2 * N + 1):
            m = i - N
            n_max = N - abs(m)
            if n_max < 1:
                continue
            ns = np.arange(1, n_max + 1)
            sums = (S[i + ns] - S[i]) if forward else (S[i] - S[i - ns])
            worst = max(worst, float(np.max(sums + coef * ns)) - eps * abs(m))
        return worst
    for i in range(2 * N + 1):
        m = i - N
        n_max = N - abs(m)
        M = np.eye(r)
        for n in range(1, n_max + 1):
            M = (transfers[i + n - 1] @ M) if forward else (transfers[i - n] @ M)
            val = np.log(np.linalg.norm(M, 2)) + coef * n - eps * abs(m)
            worst = max(worst, float(val))
    return worst


def classify_block(system: SystemSpec, x, params: BlockParams, N: int,
                   horizon: int = 60, k_max: int = 64) -> BlockCertificate:
    """Finite-horizon block classification at x.

    For every window base point f^m(x) (|m| <= N) and every n with
    |m| + n <= N, the restricted cocycle norms are compared against the
    three block inequalities; the minimal admissible uniformity index is
    read off directly from the worst log-excess.
    """
    x = np.asarray(np.atleast_1d(x), dtype=float)
    eps = params.eps
    all_pts, all_jacs, splittings = _window_data(system, x, N, horizon)
    d_s, d_c, d_u = system.dims

    off = N + horizon
    jacs = all_jacs[off - N:off + N]  # steps between window indices -N .. N

    # required k (log-scale excess / eps) per condition family
    req = {"stable": 0.0, "center_fwd": 0.0, "center_bwd": 0.0, "unstable": 0.0}

    if d_s:
        fwd, _ = _bundle_transfers(jacs, [sp.E_s.basis for sp in splittings])
        req["stable"] = _worst_excess(fwd, N, params.lam - eps, eps, forward=True)
    if d_c:
        fwd, inv = _bundle_transfers(jacs, [sp.E_c.basis for sp in splittings])
        req["center_fwd"] = _worst_excess(fwd, N, -(params.mu_p + eps), eps, forward=True)
        req["center_bwd"] = _worst_excess(inv, N, -(params.lam_p + eps), eps, forward=False)
    if d_u:
        _, inv = _bundle_transfers(jacs, [sp.E_u.basis for sp in splittings])
        req["unstable"] = _worst_excess(inv, N, params.mu - eps, eps, forward=False)

    worst = max(req.values())
    kappa = max(1, int(np.ceil(worst / eps - 1e-12)))
    if kappa > k_max:
        raise ValueError(
            f"point not certified: required index {kappa} exceeds k_max = {k_max}"
        )
    margins = {name: kappa * eps - val for name, val in req.items()}
    return BlockCertificate(
        point=tuple(x), params=params, horizon=N, kappa=kappa,
        splitting=splittings[N], margins=margins,
    )


def classify_orbit(system: SystemSpec, x0, count, params: BlockParams, N: int,
                   horizon: int = 60, k_max: int = 64):
    """Block certificates at f^j(x0) for j = 0 .. count-1 from shared sweeps.

    Equivalent to calling classify_block at each orbit point, but the QR
    sweeps, splittings, and restricted log factors are computed once for the
    whole orbit; per-anchor excesses reduce to running-maximum lookups.
    Requires every subbundle to have rank <= 1 (true for the registry).
    """
    if any(r > 1 for r in system.dims):
        raise NotImplementedError("shared classification needs rank <= 1 bundles")
    eps = params.eps
    d = system.dim
    d_s, d_c, d_u = system.dims
    lo = -(N + horizon)
    hi = count - 1 + N + horizon
    pts = _window_orbit(system, x0, lo, hi)
    jacs = [system.jacobian(p) for p in pts]
    first = horizon  # array index of orbit index -N
    span = count + 2 * N
    if system.dims == (0, d, 0):
        triv = Splitting(Subspace.trivial(d), Subspace(d, np.eye(d)),
                         Subspace.trivial(d))
        sps = [triv] * span
    else:
        fwd = _forward_frames(jacs, d, first, span, horizon)
        bwd = _backward_frames(jacs, d, first, span, horizon)
        sps = [_splitting_from_frames(system, f, b) for f, b in zip(fwd, bwd)]

    prefix = {}
    for tag, rank in (("s", d_s), ("c", d_c), ("u", d_u)):
        if rank == 0:
            prefix[tag] = None
            continue
        steps = np.empty(span - 1)
        for j in range(span - 1):
            b0 = getattr(sps[j], "E_" + tag).basis[:, 0]
            b1 = getattr(sps[j + 1], "E_" + tag).basis[:, 0]
            steps[j] = np.log(abs(float(b1 @ (jacs[first + j] @ b0))))
        prefix[tag] = np.concatenate([[0.0], np.cumsum(steps)])

    def family_excess(tag, coef, forward):
        # H[i, q] = max over 1 <= n <= q of (log restricted factor) + coef*n
        S = prefix[tag]
        ns = np.arange(1, N + 1)
        G = np.full((span, N), -np.inf)
        for n in ns:
            if forward:
                G[:span - n, n - 1] = S[n:] - S[:span - n] + coef * n
            else:
                G[n:, n - 1] = S[:span - n] - S[n:] + coef * n
        H = np.maximum.accumulate(G, axis=1)
        excess = np.zeros(count)
        for m in range(-N, N + 1):
            q = N - abs(m)
            idx = np.arange(count) + N + m
            col = H[idx, q - 1] - eps * abs(m) if q >= 1 else np.full(count, -np.inf)
            excess = np.maximum(excess, col)
        return excess

    req = {"stable": np.zeros(count), "center_fwd": np.zeros(count),
           "center_bwd": np.zeros(count), "unstable": np.zeros(count)}
    if d_s:
        req["stable"] = family_excess("s", params.lam - eps, forward=True)
    if d_c:
        req["center_fwd"] = family_excess("c", -(params.mu_p + eps), forward=True)
        req["center_bwd"] = family_excess("c", -(params.lam_p + eps), forward=False)
    if d_u:
        req["unstable"] = family_excess("u", params.mu - eps, forward=False)

    certs = []
    for j in range(count):
        worst = max(v[j] for v in req.values())
        kappa = max(1, int(np.ceil(worst / eps - 1e-12)))
        if kappa > k_max:
            raise ValueError(
                f"point not certified: required index {kappa} exceeds k_max = {k_max}"
            )
        margins = {name: kappa * eps - v[j] for name, v in req.items()}
        certs.append(BlockCertificate(
            point=tuple(pts[first + N + j]), params=params, horizon=N,
            kappa=kappa, splitting=sps[N + j], margins=margins,
        ))
    return certs


def params_from_spectrum(spectrum: LyapunovSpectrum, margin=0.01, eps=None,
                         center_rate=0.06) -> BlockParams:
    """Block rates from a measured spectrum: lam (mu) just inside the largest
    negative (smallest positive) exponent, with a symmetric center pinch."""
    exps = np.array(spectrum.exponents)
    neg = exps[exps < -center_rate]
    pos = exps[exps > center_rate]
    lam = (abs(neg.max()) - margin) if len(neg) else 0.5
    mu = (pos.min() - margin) if len(pos) else 0.5
    if eps is None:
        eps = 0.9 * min(lam, mu, lam - center_rate, 2 * center_rate, mu - center_rate) / 10.0
    return BlockParams(lam=lam, mu=mu, lam_p=center_rate, mu_p=center_rate, eps=eps)


def splitting_invariance_defect(system: SystemSpec, x, splitting_x: Splitting,
                                splitting_fx: Splitting) -> float:
    """Max subspace distance between Df-pushed bundles at x and the bundles at f(x)."""
    J = system.jacobian(np.asarray(x, dtype=float))
    worst = 0.0
    for Ex, Efx in ((splitting_x.E_s, splitting_fx.E_s),
                    (splitting_x.E_c, splitting_fx.E_c),
                    (splitting_x.E_u, splitting_fx.E_u)):
        if Ex.rank == 0:
            continue
        pushed = Subspace.from_spanning(J @ Ex.basis)
        worst = max(worst, subspace_distance(pushed, Efx))
    return worst
