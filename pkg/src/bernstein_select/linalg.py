"""Finite-dimensional linear algebra on R^n.

Subspaces are carried by an orthonormal basis stored column-wise in an
``(n, D)`` array.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

GRAM_TOL = 1e-9


class DimensionError(ValueError):
    pass


class ZeroSpaceWarning(UserWarning):
    """Raised when a metric quantity is requested for S = {0}."""


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of R^n given by an orthonormal basis.

    Parameters
    ----------
    basis : array of shape (n, D)
        Columns are the basis vectors.  ``D == 0`` encodes the zero space.
    """

    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2:
            raise DimensionError("basis must be a 2-d array of shape (n, D)")
        n, d = b.shape
        if n < 1 or d > n:
            raise DimensionError(f"invalid basis shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("basis has non-finite entries")
        if d:
            err = np.max(np.abs(b.T @ b - np.eye(d)))
            if err > GRAM_TOL:
                raise ValueError(f"basis is not orthonormal (Gram error {err:.3e})")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(np.zeros((n, 0)))

    @classmethod
    def coordinate(cls, n: int, indices) -> "Subspace":
        """Span of the canonical vectors e_i, ``indices`` being 1-based."""
        idx = [int(i) - 1 for i in indices]
        if any(i < 0 or i >= n for i in idx):
            raise DimensionError("coordinate index out of range")
        return cls(np.eye(n)[:, idx])

    def gram_error(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.dim))))

    def vectors(self) -> list[np.ndarray]:
        return [self.basis[:, j].copy() for j in range(self.dim)]

    def __repr__(self):
        return f"Subspace(n={self.ambient_dim}, D={self.dim})"


def _as_rows(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        arr = np.atleast_2d(np.asarray(vectors, dtype=float))
    else:
        vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
        if not vecs:
            raise DimensionError("no input vectors; use Subspace.zero(n)")
        lengths = {v.size for v in vecs}
        if len(lengths) != 1:
            raise DimensionError(f"vectors have mismatched lengths {sorted(lengths)}")
        arr = np.vstack(vecs)
    return arr


def orthonormalize(vectors, tol: float | None = None) -> Subspace:
    """Gram-Schmidt with a second re-orthogonalization pass.

    Parameters
    ----------
    vectors : sequence of 1-d arrays of equal length n, or (k, n) array
    tol : float, optional
        A vector whose residual norm after removing the accepted directions
        falls below ``tol`` is dropped.  Defaults to ``1e-10`` times the
        largest input norm.
    """
    rows = _as_rows(vectors)
    n = rows.shape[1]
    norms = np.linalg.norm(rows, axis=1)
    if tol is None:
        tol = 1e-10 * (float(norms.max()) if norms.size else 0.0)
        if tol == 0.0:
            tol = np.finfo(float).tiny
    elif tol <= 0:
        raise ValueError("tol must be positive")
    accepted: list[np.ndarray] = []
    for v in rows:
        w = v.copy()
        for _ in range(2):
            for q in accepted:
                w -= (q @ w) * q
        r = np.linalg.norm(w)
        if r >= tol:
            accepted.append(w / r)
    if not accepted:
        return Subspace.zero(n)
    return Subspace(np.column_stack(accepted))


def _check_vector(S: Subspace, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != S.ambient_dim:
        raise DimensionError(
            f"vector length {y.shape[-1]} does not match ambient dimension {S.ambient_dim}")
    return y


def coefficients(S: Subspace, y) -> np.ndarray:
    """Basis coefficients <y, u_j>.  Accepts a batch of rows."""
    y = _check_vector(S, y)
    return y @ S.basis


def project(S: Subspace, y) -> np.ndarray:
    """Orthogonal projection of ``y`` (or each row of a batch) onto S."""
    y = _check_vector(S, y)
    if S.dim == 0:
        return np.zeros_like(y)
    return (y @ S.basis) @ S.basis.T


def least_squares(S: Subspace, Y) -> np.ndarray:
    """Least-squares fit of ``Y`` in S, identical to :func:`project`."""
    return project(S, Y)


def lambda2(S: Subspace) -> float:
    """max_i |Pi_S e_i|_2, i.e. the largest row norm of the basis matrix."""
    if S.dim == 0:
        warnings.warn("lambda2 of the zero space is 0 by convention", ZeroSpaceWarning, stacklevel=2)
        return 0.0
    return float(np.sqrt(np.max(np.sum(S.basis ** 2, axis=1))))


def lambda_inf(S: Subspace, chunk: int = 1024) -> float:
    """max_i |Pi_S e_i|_1, computed row-block by row-block of the projector."""
    if S.dim == 0:
        warnings.warn("lambda_inf of the zero space is 0 by convention", ZeroSpaceWarning, stacklevel=2)
        return 0.0
    B = S.basis
    best = 0.0
    for start in range(0, B.shape[0], chunk):
        rows = B[start:start + chunk] @ B.T
        best = max(best, float(np.max(np.sum(np.abs(rows), axis=1))))
    return best


def sum_subspace(S1: Subspace, S2: Subspace) -> Subspace:
    if S1.ambient_dim != S2.ambient_dim:
        raise DimensionError("subspaces live in different ambient spaces")
    if S1.dim + S2.dim == 0:
        return Subspace.zero(S1.ambient_dim)
    stacked = np.hstack([S1.basis, S2.basis]).T
    return orthonormalize(stacked, tol=1e-10)


def contains(outer: Subspace, inner: Subspace, tol: float = 1e-9) -> bool:
    """True when every basis vector of ``inner`` lies in ``outer``."""
    if inner.dim == 0:
        return True
    resid = inner.basis.T - project(outer, inner.basis.T)
    return bool(np.max(np.linalg.norm(resid, axis=1)) < tol)
