"""Concrete torus diffeomorphisms and their derivative cocycles.

Registry:
  cat                 hyperbolic toral automorphism [[2,1],[1,1]] on T^2
  cat_x_rot           cat x circle rotation on T^3 (uniform center = fiber)
  cat_x_rot_perturbed skew-coupled cat x rotation on T^3 (nonconstant splitting)
  rotation            circle rotation on T^1 (zero-entropy control)

All maps act on numpy arrays of shape (d,) or batched (N, d); evaluation is
pure.  Inverses are analytic (the perturbed skew product is inverted by a
contraction iteration on its one scalar coupling, run to machine precision).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import wrap

CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])
CAT_NORM = (3.0 + np.sqrt(5.0)) / 2.0  # spectral norm of the symmetric cat matrix
CAT_EXPONENT = np.log(CAT_NORM)

MAX_ITER_DEFAULT = 10**6
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SystemSpec:
    """A validated torus diffeomorphism with certified regularity constants.

    holder_alpha/holder_K bound the modulus of continuity of the derivative,
    deriv_bound L dominates sup||Df|| and sup||Df^-1||, and dims fixes the
    stable/center/unstable dimension counts used for splitting estimation.
    """

    name: str
    dim: int
    parameters: dict
    holder_alpha: float
    holder_K: float
    deriv_bound: float
    dims: tuple
    forward: Callable = field(repr=False)
    backward: Callable = field(repr=False)
    jacobian: Callable = field(repr=False)
    constant_jacobian: bool = False
    max_iter: int = MAX_ITER_DEFAULT


def evaluate(system: SystemSpec, x, n: int):
    """n-fold composition f^n(x); negative n uses the inverse map."""
    if abs(n) > system.max_iter:
        raise ValueError(f"|n| = {abs(n)} exceeds max iteration count {system.max_iter}")
    x = wrap(x)
    step = system.forward if n >= 0 else system.backward
    for _ in range(abs(n)):
        x = step(x)
    return x


def orbit(system: SystemSpec, x, n: int):
    """Orbit segment [x, f^n(x)] as an array of n+1 points (n >= 0)."""
    if n < 0:
        raise ValueError("orbit length must be nonnegative")
    x = wrap(x)
    pts = np.empty((n + 1,) + np.shape(x))
    pts[0] = x
    for i in range(n):
        x = system.forward(x)
        pts[i + 1] = x
    return pts


def cocycle(system: SystemSpec, x, n: int):
    """D_x f^n as the ordered product of step Jacobians; identity at n = 0."""
    if abs(n) > system.max_iter:
        raise ValueError(f"|n| = {abs(n)} exceeds max iteration count {system.max_iter}")
    x = wrap(x)
    M = np.eye(system.dim)
    if n >= 0:
        for _ in range(n):
            M = system.jacobian(x) @ M
            x = system.forward(x)
    else:
        for _ in range(-n):
            x = system.backward(x)
            M = np.linalg.inv(system.jacobian(x)) @ M
    return M


def jacobian_inverse_at(system: SystemSpec, x):
    """Derivative of f^-1 at x, i.e. (Df at f^-1(x))^-1."""
    return np.linalg.inv(system.jacobian(system.backward(wrap(x))))


# ---------------------------------------------------------------------------
# registry


def _make_cat(params):
    def forward(p):
        return wrap(np.asarray(p) @ CAT.T)

    def backward(p):
        return wrap(np.asarray(p) @ CAT_INV.T)

    def jac(p):
        return CAT

    return SystemSpec(
        name="cat", dim=2, parameters={}, holder_alpha=1.0, holder_K=0.0,
        deriv_bound=CAT_NORM, dims=(1, 0, 1),
        forward=forward, backward=backward, jacobian=jac, constant_jacobian=True,
    )


def _make_rotation(params):
    alpha_rot = float(params.get("alpha_rot", 0.25))

    def forward(p):
        return wrap(np.asarray(p) + alpha_rot)

    def backward(p):
        return wrap(np.asarray(p) - alpha_rot)

    def jac(p):
        return np.eye(1)

    return SystemSpec(
        name="rotation", dim=1, parameters={"alpha_rot": alpha_rot},
        holder_alpha=1.0, holder_K=0.0, deriv_bound=1.0, dims=(0, 1, 0),
        forward=forward, backward=backward, jacobian=jac, constant_jacobian=True,
    )


def _make_cat_x_rot(params):
    alpha_rot = float(params.get("alpha_rot", 0.25))

    def forward(p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        out[..., :2] = p[..., :2] @ CAT.T
        out[..., 2] = p[..., 2] + alpha_rot
        return wrap(out)

    def backward(p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        out[..., :2] = p[..., :2] @ CAT_INV.T
        out[..., 2] = p[..., 2] - alpha_rot
        return wrap(out)

    J = np.eye(3)
    J[:2, :2] = CAT

    def jac(p):
        return J

    return SystemSpec(
        name="cat_x_rot", dim=3, parameters={"alpha_rot": alpha_rot},
        holder_alpha=1.0, holder_K=0.0, deriv_bound=CAT_NORM, dims=(1, 1, 1),
        forward=forward, backward=backward, jacobian=jac, constant_jacobian=True,
    )


def _perturbed_forward(p, nu, alpha_rot):
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    out[..., :2] = p[..., :2] @ CAT.T
    out[..., 0] += nu * np.sin(TWO_PI * p[..., 2])
    out[..., 2] = p[..., 2] + alpha_rot + nu * np.sin(TWO_PI * p[..., 0])
    return wrap(out)


def _perturbed_backward(p, nu, alpha_rot):
    # theta = Theta - alpha - nu sin(2 pi x) and (x, y) = A^-1((X, Y) - nu(sin 2 pi theta, 0))
    # form a contraction in x (factor ~ (2 pi nu)^2); iterate to fixed point.
    p = np.asarray(p, dtype=float)
    X = p[..., 0]
    Y = p[..., 1]
    Theta = p[..., 2]
    x = X - Y  # unperturbed inverse as the initial guess
    for _ in range(60):
        theta = Theta - alpha_rot - nu * np.sin(TWO_PI * x)
        x_new = (X - nu * np.sin(TWO_PI * theta)) - Y
        if np.max(np.abs(x_new - x)) < 1e-16:
            x = x_new
            break
        x = x_new
    theta = Theta - alpha_rot - nu * np.sin(TWO_PI * x)
    bx = X - nu * np.sin(TWO_PI * theta)
    out = np.empty_like(p)
    out[..., 0] = bx - Y
    out[..., 1] = -bx + 2.0 * Y
    out[..., 2] = theta
    return wrap(out)


def _make_cat_x_rot_perturbed(params):
    nu = float(params.get("nu", 0.05))
    alpha_rot = float(params.get("alpha_rot", 0.25))

    def forward(p):
        return _perturbed_forward(p, nu, alpha_rot)

    def backward(p):
        return _perturbed_backward(p, nu, alpha_rot)

    def jac(p):
        p = np.asarray(p, dtype=float)
        J = np.eye(3)
        J[:2, :2] = CAT
        J[0, 2] = nu * TWO_PI * np.cos(TWO_PI * p[2])
        J[2, 0] = nu * TWO_PI * np.cos(TWO_PI * p[0])
        return J

    # invertibility: det J = 1 - (2 pi nu)^2 cos(2 pi theta) cos(2 pi x)
    grid = np.linspace(0.0, 1.0, 101)
    dets = 1.0 - (TWO_PI * nu) ** 2 * np.outer(np.cos(TWO_PI * grid), np.cos(TWO_PI * grid))
    if np.min(np.abs(dets)) < 0.1:
        raise ValueError(f"parameters violate invertibility: |det Df| reaches {np.min(np.abs(dets)):.3g} < 0.1")

    # certified constants: grid-sampled with safety factor 2
    K_grid = (TWO_PI) ** 2 * nu  # exact Lipschitz constant of the Jacobian entries
    holder_K = 2.0 * K_grid
    rng = np.random.default_rng(0)
    pts = rng.random((256, 3))
    L = 1.0
    for q in pts:
        J = jac(q)
        L = max(L, np.linalg.norm(J, 2), np.linalg.norm(np.linalg.inv(J), 2))
    return SystemSpec(
        name="cat_x_rot_perturbed",
        parameters={"nu": nu, "alpha_rot": alpha_rot}, dim=3,
        holder_alpha=1.0, holder_K=holder_K, deriv_bound=1.05 * L, dims=(1, 1, 1),
        forward=forward, backward=backward, jacobian=jac, constant_jacobian=False,
    )


_REGISTRY = {
    "cat": _make_cat,
    "rotation": _make_rotation,
    "cat_x_rot": _make_cat_x_rot,
    "cat_x_rot_perturbed": _make_cat_x_rot_perturbed,
}


def registry_names():
    return sorted(_REGISTRY)


def make_system(name: str, parameters=None) -> SystemSpec:
    """Build a validated SystemSpec from the registry."""
    if name not in _REGISTRY:
        raise KeyError(f"unknown system {name!r}; registry: {registry_names()}")
    return _REGISTRY[name](dict(parameters or {}))
