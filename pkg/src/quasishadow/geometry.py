"""Flat-torus points, tangent-space subspaces, cones, and local charts.

Points on T^d are plain numpy arrays with every coordinate in [0, 1); use
``wrap`` after any arithmetic.  The exponential chart of the flat torus is
addition mod 1, with injectivity radius 1/2, so all chart bookkeeping
reduces to representative selection.
"""

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-12
TRANSVERSALITY_TOL = 1e-9


def wrap(coords):
    """Reduce coordinates to the fundamental domain [0, 1)^d."""
    return np.mod(np.asarray(coords, dtype=float), 1.0)


def torus_distance(x, y):
    """Flat-torus distance: min over integer shifts of the Euclidean distance.

    Vectorized over leading axes; the last axis is the coordinate axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    diff = np.abs(x - y) % 1.0
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def chart_difference(anchor, y, max_dist=0.25):
    """Representative of y - anchor with every coordinate in (-1/2, 1/2].

    Realizes the inverse exponential chart at ``anchor``.  Rejects pairs
    farther apart than ``max_dist`` (default keeps a margin inside the
    injectivity radius 1/2).
    """
    anchor = np.asarray(anchor, dtype=float)
    y = np.asarray(y, dtype=float)
    d = torus_distance(anchor, y)
    if np.any(d >= max_dist):
        raise ValueError(
            f"points too far apart for chart: distance {float(np.max(d)):.6g} >= {max_dist}"
        )
    r = (y - anchor) % 1.0
    r = np.where(r > 0.5, r - 1.0, r)
    return r


def chart_add(anchor, v):
    """Inverse of chart_difference: wrap(anchor + v)."""
    return wrap(np.asarray(anchor, dtype=float) + np.asarray(v, dtype=float))


@dataclass(frozen=True)
class Subspace:
    """A subspace of R^d given by an orthonormal basis (columns of ``basis``)."""

    ambient_dim: int
    basis: np.ndarray  # shape (ambient_dim, rank)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        object.__setattr__(self, "basis", b)
        if b.shape[0] != self.ambient_dim:
            raise ValueError("basis rows must equal ambient_dim")
        if b.shape[1] > self.ambient_dim:
            raise ValueError("rank exceeds ambient dimension")
        if b.shape[1] > 0:
            gram = b.T @ b
            if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10):
                raise ValueError("basis is not orthonormal")

    @property
    def rank(self):
        return self.basis.shape[1]

    @staticmethod
    def from_spanning(vectors, ambient_dim=None):
        """Orthonormalize arbitrary spanning vectors (columns) via QR."""
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[1] == 0:
            return Subspace(ambient_dim or v.shape[0], np.zeros((v.shape[0], 0)))
        q, r = np.linalg.qr(v)
        keep = np.abs(np.diag(r)) > 1e-13
        return Subspace(v.shape[0], q[:, keep])

    @staticmethod
    def trivial(ambient_dim):
        return Subspace(ambient_dim, np.zeros((ambient_dim, 0)))

    def project(self, v):
        """Orthogonal projection of v onto the subspace."""
        return self.basis @ (self.basis.T @ np.asarray(v, dtype=float))

    def contains(self, v, tol=1e-9):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v - self.project(v)) <= tol * max(1.0, np.linalg.norm(v))


def subspace_distance(A: Subspace, B: Subspace) -> float:
    """Symmetric gap between subspaces via principal angles.

    Equals the largest sine of a principal angle when ranks agree; for
    differing ranks the deficient directions contribute distance 1, matching
    the two-sided max-min definition.
    """
    if A.ambient_dim != B.ambient_dim:
        raise ValueError("ambient dimension mismatch")
    if A.rank == 0 or B.rank == 0:
        raise ValueError("zero-rank subspace has no unit vectors")

    def one_sided(P, Q):
        # max over unit v in P of dist(v, Q) = ||(I - proj_Q) restricted to P||;
        # computed from the projection residual, which stays accurate near 0
        R = P.basis - Q.basis @ (Q.basis.T @ P.basis)
        return float(min(1.0, np.linalg.svd(R, compute_uv=False)[0]))

    return max(one_sided(A, B), one_sided(B, A))


@dataclass(frozen=True)
class Splitting:
    """Estimated invariant decomposition E^s + E^c + E^u (orthonormal bases)."""

    E_s: Subspace
    E_c: Subspace
    E_u: Subspace

    def __post_init__(self):
        d = self.E_s.ambient_dim
        if self.E_c.ambient_dim != d or self.E_u.ambient_dim != d:
            raise ValueError("subspaces live in different ambient spaces")
        if self.E_s.rank + self.E_c.rank + self.E_u.rank != d:
            raise ValueError("subbundle dimensions must sum to the ambient dimension")
        M = self.matrix()
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        if smin <= TRANSVERSALITY_TOL:
            raise ValueError(f"splitting is degenerate: smallest singular value {smin:.3g}")

    @property
    def ambient_dim(self):
        return self.E_s.ambient_dim

    @property
    def dims(self):
        return (self.E_s.rank, self.E_c.rank, self.E_u.rank)

    def matrix(self):
        """Concatenated basis [B_s | B_c | B_u], a d x d invertible matrix."""
        return np.hstack([self.E_s.basis, self.E_c.basis, self.E_u.basis])

    def decompose(self, v):
        """Split v = v_s + v_c + v_u along the (generally oblique) splitting."""
        v = np.asarray(v, dtype=float)
        coeff = np.linalg.solve(self.matrix(), v)
        d_s, d_c, d_u = self.dims
        v_s = self.E_s.basis @ coeff[:d_s]
        v_c = self.E_c.basis @ coeff[d_s:d_s + d_c]
        v_u = self.E_u.basis @ coeff[d_s + d_c:]
        return v_s, v_c, v_u

    def coefficients(self, v):
        """Coefficients of v in the concatenated basis, split per bundle."""
        coeff = np.linalg.solve(self.matrix(), np.asarray(v, dtype=float))
        d_s, d_c, d_u = self.dims
        return coeff[:d_s], coeff[d_s:d_s + d_c], coeff[d_s + d_c:]


@dataclass(frozen=True)
class Cone:
    """Closed cone Q(base, width): ||v_2|| <= width * ||v_1|| along base/complement."""

    base: Subspace
    complement: Subspace
    width: float
    norm_tag: str = "ambient"

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("cone width must be positive")
        d = self.base.ambient_dim
        if self.complement.ambient_dim != d:
            raise ValueError("base/complement ambient mismatch")
        if self.base.rank + self.complement.rank != d:
            raise ValueError("base and complement must jointly span the ambient space")
        M = np.hstack([self.base.basis, self.complement.basis])
        if np.linalg.svd(M, compute_uv=False)[-1] <= TRANSVERSALITY_TOL:
            raise ValueError("base and complement are not transverse")


def cone_contains(v, cone: Cone, norm=None) -> bool:
    """Closed-cone membership test; boundary counts as inside.

    ``norm`` evaluates vectors (defaults to the Euclidean norm); pass an
    adapted-norm evaluator to test in a translated norm.
    """
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) == 0.0:
        raise ValueError("cone membership of the zero vector is undefined")
    if norm is None:
        norm = np.linalg.norm
    M = np.hstack([cone.base.basis, cone.complement.basis])
    coeff = np.linalg.solve(M, v)
    r = cone.base.rank
    v1 = cone.base.basis @ coeff[:r]
    v2 = cone.complement.basis @ coeff[r:]
    return norm(v2) <= cone.width * norm(v1)
