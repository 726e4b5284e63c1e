"""Projections onto boxes, affine sets, and their intersection.

The optimization phase works inside a moving region: the box intersected
with the affine set tangent to the linearized constraints at the restored
point.  Projection onto that intersection is computed by alternating
projections with Dykstra's correction terms, which converges to the true
projection for intersections of convex sets.  The box projection is applied
last in each sweep so the returned point always satisfies the bounds
exactly.
"""

from dataclasses import dataclass

import numpy as np

from .core import BoxPolytope, ContractError, as_point

_DYKSTRA_TOL = 1e-10
_DYKSTRA_MAX_SWEEPS = 10_000


def project_box(x, box: BoxPolytope):
    """Euclidean projection onto an axis-aligned box."""
    return box.clip(as_point(x, box.dim))


def project_affine(z, A, rhs):
    """Euclidean projection onto ``{x : A x = rhs}``.

    Uses a least-squares solve of ``A A^T lam = A z - rhs``, which handles
    rank-deficient rows; if the system is inconsistent the projection onto
    the closest consistent set is returned.
    """
    z = np.asarray(z, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    if A.shape[0] != rhs.size:
        raise ContractError("affine system shape mismatch")
    gram = A @ A.T
    lam, *_ = np.linalg.lstsq(gram, A @ z - rhs, rcond=None)
    return z - A.T @ lam


@dataclass(frozen=True)
class TangentSet:
    """Box intersected with the tangent affine set ``{x : A (x - center) = 0}``.

    Rows of ``A`` are the constraint gradients at the restored point.
    """

    box: BoxPolytope
    A: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        center = as_point(self.center, self.box.dim)
        if A.shape[1] != self.box.dim:
            raise ContractError("tangent matrix column count != box dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "center", center)

    @property
    def rhs(self):
        return self.A @ self.center

    def contains(self, x, tol=1e-8):
        x = as_point(x, self.box.dim)
        if not self.box.contains(x, tol=tol):
            return False
        resid = float(np.linalg.norm(self.A @ (x - self.center)))
        return resid <= tol * (1.0 + float(np.linalg.norm(x)))


def project_tangent(z, region: TangentSet, tol=_DYKSTRA_TOL,
                    max_sweeps=_DYKSTRA_MAX_SWEEPS):
    """Project ``z`` onto ``region`` by Dykstra's alternating scheme.

    The affine rows need no correction term, only the box does; carrying
    one for the affine part accumulates rounding error without bound.
    Returns ``(x, residual)``: the point satisfies the box exactly and
    the affine rows up to ``residual``, and iteration stops only once
    that violation is below ``tol`` (scaled) and the sweep has settled.
    """
    z = as_point(z, region.box.dim)
    rhs = region.rhs
    rhs_scale = 1.0 + float(np.linalg.norm(rhs))
    x = z.copy()
    q = np.zeros_like(x)  # box correction
    residual = np.inf
    for _ in range(max_sweeps):
        y = project_affine(x, region.A, rhs)
        x_new = project_box(y + q, region.box)
        q = y + q - x_new
        moved = float(np.linalg.norm(x_new - x))
        x = x_new
        residual = float(np.linalg.norm(region.A @ x - rhs))
        if (residual <= tol * rhs_scale
                and moved <= tol * (1.0 + float(np.linalg.norm(x)))):
            break
    return x, residual


def stationarity_residual(x, grad, region):
    """Norm of ``P(x - grad) - x`` for a region with a projection.

    ``region`` is either a :class:`~bira.core.BoxPolytope` or a
    :class:`TangentSet`; ``x`` must belong to it.
    """
    x = as_point(x)
    grad = as_point(grad, x.size)
    if isinstance(region, BoxPolytope):
        if not region.contains(x):
            raise ContractError("stationarity test point outside the box")
        proj = project_box(x - grad, region)
    elif isinstance(region, TangentSet):
        if not region.contains(x):
            raise ContractError("stationarity test point outside the region")
        proj, _ = project_tangent(x - grad, region)
    else:
        raise ContractError(f"unsupported region type {type(region).__name__}")
    return float(np.linalg.norm(proj - x))
