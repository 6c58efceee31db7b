"""Stiefel manifold primitives: random points, tangent projection, retractions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "StiefelPoint",
    "TangentVector",
    "random_stiefel",
    "tangent_project",
    "retract",
    "RETRACTIONS",
]

RETRACTIONS = ("exponential", "polar", "qr", "cayley")

_ORTHO_TOL = 1e-10
_ORTHO_REPAIR_TOL = 1e-6
_TANGENT_TOL = 1e-10


def _qr_positive(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization with the R diagonal forced nonnegative (deterministic)."""
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


@dataclass(frozen=True)
class StiefelPoint:
    """A d x k matrix with orthonormal columns."""

    matrix: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        if u.ndim != 2:
            raise ValueError("matrix must be 2-d")
        d, k = u.shape
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got shape {u.shape}")
        defect = np.linalg.norm(u.T @ u - np.eye(k))
        if defect > _ORTHO_REPAIR_TOL:
            raise ValueError(f"columns are not orthonormal (defect {defect:.3e})")
        if defect > _ORTHO_TOL:
            u, _ = _qr_positive(u)
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TangentVector:
    """A tangent direction xi at a base point U: xi^T U + U^T xi = 0."""

    matrix: np.ndarray
    base: StiefelPoint

    def __post_init__(self):
        xi = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        u = self.base.matrix
        if xi.shape != u.shape:
            raise ValueError(f"tangent shape {xi.shape} != base shape {u.shape}")
        skew_defect = np.linalg.norm(xi.T @ u + u.T @ xi)
        if skew_defect > _TANGENT_TOL:
            raise ValueError(f"not tangent at base (defect {skew_defect:.3e})")
        xi.setflags(write=False)
        object.__setattr__(self, "matrix", xi)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def random_stiefel(d: int, k: int, rng_seed: int) -> StiefelPoint:
    """Orthonormalized Gaussian matrix; Haar up to the QR sign convention."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got d={d}, k={k}")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    gauss = rng.standard_normal((d, k))
    q, _ = _qr_positive(gauss)
    return StiefelPoint(q)


def tangent_project(U: StiefelPoint, G: np.ndarray) -> TangentVector:
    """Project an ambient d x k matrix onto the tangent space at U."""
    u = U.matrix
    g = np.asarray(G, dtype=float)
    if g.shape != u.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {u.shape}")
    sym = (g.T @ u + u.T @ g) / 2.0
    xi = g - u @ sym
    # Symmetrize the residual explicitly so the constructor tolerance holds.
    skew = (xi.T @ u + u.T @ xi) / 2.0
    xi = xi - u @ skew
    return TangentVector(xi, U)


def _retract_qr(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    q, _ = _qr_positive(u + xi)
    return q


def _retract_polar(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    k = u.shape[1]
    # (U + xi)(I + xi^T xi)^{-1/2} via eigendecomposition of the k x k Gram.
    vals, vecs = np.linalg.eigh(xi.T @ xi)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(np.maximum(vals, 0.0) + 1.0)) @ vecs.T
    return (u + xi) @ inv_sqrt


def _retract_exponential(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    d, k = u.shape
    a = u.T @ xi
    # Orthogonal complement component, factored so expm stays 2k x 2k.
    comp = xi - u @ a
    q, r = _qr_positive(comp)
    block = np.zeros((2 * k, 2 * k))
    block[:k, :k] = a
    block[:k, k:] = -r.T
    block[k:, :k] = r
    exp_block = scipy.linalg.expm(block)
    return np.hstack([u, q]) @ exp_block[:, :k]


def _retract_cayley(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    d, k = u.shape
    # W = A B^T with A = [P xi, -U], B = [U, P xi], P = I - U U^T / 2, so the
    # d x d inverse reduces to a 2k x 2k solve (Sherman-Morrison-Woodbury).
    p_xi = xi - 0.5 * u @ (u.T @ xi)
    a = np.hstack([p_xi, -u])
    b = np.hstack([u, p_xi])
    small = np.eye(2 * k) - 0.5 * (b.T @ a)
    rhs = u + 0.5 * a @ (b.T @ u)
    try:
        correction = np.linalg.solve(small, b.T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "Cayley factor is singular; the step is too large, shrink gamma"
        ) from exc
    return rhs + 0.5 * a @ correction


_RETRACT_FNS = {
    "exponential": _retract_exponential,
    "polar": _retract_polar,
    "qr": _retract_qr,
    "cayley": _retract_cayley,
}


def retract(U: StiefelPoint, xi: TangentVector, method: str = "qr") -> StiefelPoint:
    """Move from U along the tangent direction xi and land back on the manifold."""
    if method not in _RETRACT_FNS:
        raise ValueError(f"unknown retraction {method!r}; choose from {RETRACTIONS}")
    if xi.base is not U and not np.array_equal(xi.base.matrix, U.matrix):
        raise ValueError("tangent vector is not based at U")
    if xi.norm == 0.0:
        return U
    return StiefelPoint(_RETRACT_FNS[method](U.matrix, xi.matrix))
