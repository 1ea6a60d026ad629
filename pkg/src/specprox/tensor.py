"""Block-structured parameter arithmetic and a self-contained small-matrix SVD.

A parameter lives in a product space ``E = E_1 x ... x E_N`` whose factors are
real vector or matrix blocks.  :class:`ParamVec` is an immutable-by-convention
ordered tuple of such blocks; all arithmetic is blockwise and requires exactly
matching shapes.

``full_svd`` factors a real matrix with a one-sided Jacobi iteration.  The
implementation is deliberately self-contained: the sweep order, the
convergence threshold, the orthonormal completion and the sign convention are
all fixed, so a given input always produces bit-identical factors, which is
what makes traces replayable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConformabilityError, InvalidInputError, NumericalError

# Relative off-diagonal Gram threshold for Jacobi convergence.
_JACOBI_REL_TOL = 1e-12
_MAX_SWEEPS = 60


def _as_block(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim not in (1, 2):
        raise InvalidInputError(f"blocks must be 1-d or 2-d arrays, got ndim={arr.ndim}")
    if arr.size == 0 or min(arr.shape) < 1:
        raise InvalidInputError("blocks must have strictly positive dimensions")
    return arr


class ParamVec:
    """Ordered list of real vector/matrix blocks; a point of the product space.

    Parameters
    ----------
    blocks : iterable of array-like
        1-d arrays are vector blocks, 2-d arrays matrix blocks.
    validate : bool
        Check dimensions and finiteness.  Internal arithmetic skips the check
        for speed; anything user-facing validates.
    copy : bool
        Copy the underlying arrays so the value cannot be mutated from outside.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks, *, validate: bool = True, copy: bool = True):
        if validate:
            blocks = tuple(_as_block(b) for b in blocks)
            if not blocks:
                raise InvalidInputError("ParamVec needs at least one block")
            for b in blocks:
                if not np.isfinite(b).all():
                    raise InvalidInputError("non-finite entries in a block")
        else:
            blocks = tuple(blocks)
        if copy:
            blocks = tuple(np.array(b, dtype=float) for b in blocks)
        self.blocks = blocks

    # -- basic protocol ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i) -> np.ndarray:
        return self.blocks[i]

    def __repr__(self) -> str:
        return f"ParamVec(shapes={self.shapes})"

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(b.shape for b in self.blocks)

    @property
    def dim(self) -> int:
        """Total number of scalar entries across blocks."""
        return sum(b.size for b in self.blocks)

    def copy(self) -> "ParamVec":
        return ParamVec(self.blocks, validate=False, copy=True)

    def conformable(self, other: "ParamVec") -> bool:
        return self.shapes == other.shapes

    def _require_conformable(self, other: "ParamVec") -> None:
        if not self.conformable(other):
            raise ConformabilityError(
                f"block shapes differ: {self.shapes} vs {other.shapes}"
            )

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "ParamVec") -> "ParamVec":
        self._require_conformable(other)
        return ParamVec(
            (a + b for a, b in zip(self.blocks, other.blocks)),
            validate=False, copy=False,
        )

    def __sub__(self, other: "ParamVec") -> "ParamVec":
        self._require_conformable(other)
        return ParamVec(
            (a - b for a, b in zip(self.blocks, other.blocks)),
            validate=False, copy=False,
        )

    def __mul__(self, a: float) -> "ParamVec":
        a = float(a)
        return ParamVec((a * b for b in self.blocks), validate=False, copy=False)

    __rmul__ = __mul__

    def __truediv__(self, a: float) -> "ParamVec":
        return self * (1.0 / float(a))

    def __neg__(self) -> "ParamVec":
        return self * -1.0


def zeros(shapes) -> ParamVec:
    """ParamVec of zero blocks with the given shapes."""
    return ParamVec((np.zeros(s) for s in shapes), validate=False, copy=False)


def axpy(a: float, x: ParamVec, y: ParamVec) -> ParamVec:
    """a*x + y, blockwise."""
    x._require_conformable(y)
    a = float(a)
    return ParamVec(
        (a * bx + by for bx, by in zip(x.blocks, y.blocks)),
        validate=False, copy=False,
    )


def dot(x: ParamVec, y: ParamVec) -> float:
    """Euclidean inner product of the product space."""
    x._require_conformable(y)
    return float(sum(np.vdot(bx, by) for bx, by in zip(x.blocks, y.blocks)))


def norm2(x: ParamVec) -> float:
    """Product-space Euclidean norm (Frobenius on matrix blocks)."""
    return math.sqrt(sum(float(np.vdot(b, b)) for b in x.blocks))


def blockwise_frobenius(x: ParamVec) -> list[float]:
    """Per-block Euclidean/Frobenius norms."""
    return [math.sqrt(float(np.vdot(b, b))) for b in x.blocks]


def allclose(x: ParamVec, y: ParamVec, atol: float = 0.0, rtol: float = 1e-12) -> bool:
    if not x.conformable(y):
        return False
    return all(
        np.allclose(a, b, atol=atol, rtol=rtol) for a, b in zip(x.blocks, y.blocks)
    )


# ---------------------------------------------------------------------------
# Singular value decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SvdResult:
    """Full SVD ``M = U @ Diag(sigma) @ V.T``.

    ``U`` is m-by-m orthogonal, ``V`` is n-by-n orthogonal and ``sigma`` holds
    the ``min(m, n)`` singular values in nonincreasing order.  Columns for zero
    singular values are retained; :meth:`reduced` drops them.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        m, n = self.U.shape[0], self.V.shape[0]
        q = min(m, n)
        return (self.U[:, :q] * self.sigma) @ self.V[:, :q].T

    def reduced(self, rel_tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Drop singular triplets with ``sigma_i <= rel_tol * sigma_max``."""
        smax = float(self.sigma[0]) if self.sigma.size else 0.0
        keep = self.sigma > rel_tol * smax
        return self.U[:, : self.sigma.size][:, keep], self.sigma[keep], self.V[:, : self.sigma.size][:, keep]


def _jacobi_sweeps(B: np.ndarray, V: np.ndarray | None) -> None:
    """Cyclic one-sided Jacobi on the columns of B (in place), m >= n.

    Rotates until every column pair has relative Gram off-diagonal below
    the fixed threshold.  V, when given, accumulates the right rotations.
    """
    n = B.shape[1]
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                bp = B[:, p]
                bq = B[:, q]
                app = float(bp @ bp)
                aqq = float(bq @ bq)
                apq = float(bp @ bq)
                denom = math.sqrt(app * aqq)
                if denom == 0.0 or abs(apq) <= _JACOBI_REL_TOL * denom:
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * bp - s * bq
                new_q = s * bp + c * bq
                B[:, p] = new_p
                B[:, q] = new_q
                if V is not None:
                    vp = V[:, p].copy()
                    vq = V[:, q]
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq
        if not rotated:
            return
    raise NumericalError(
        f"one-sided Jacobi did not converge in {_MAX_SWEEPS} sweeps (shape {B.shape})"
    )


def _complete_orthonormal(cols: np.ndarray, sigma: np.ndarray, m: int) -> np.ndarray:
    """m-by-m orthogonal matrix whose leading columns are cols[:, j]/sigma[j].

    Columns with (relatively) vanishing sigma, and the trailing m - n slots,
    are filled deterministically by Gram-Schmidt over the canonical basis,
    always picking the basis vector with the largest residual (lowest index
    on ties).
    """
    n = cols.shape[1]
    smax = float(sigma[0]) if n else 0.0
    tiny = smax * 1e-13 * max(m, n)
    U = np.zeros((m, m))
    filled: list[int] = []
    pending: list[int] = []
    for j in range(n):
        if sigma[j] > tiny and sigma[j] > 0.0:
            U[:, j] = cols[:, j] / sigma[j]
            filled.append(j)
        else:
            pending.append(j)
    pending.extend(range(n, m))
    for slot in pending:
        basis = np.eye(m)
        for j in filled:
            basis -= np.outer(U[:, j], U[:, j] @ basis)
        residuals = np.sqrt((basis * basis).sum(axis=0))
        pick = int(np.argmax(residuals))
        v = basis[:, pick]
        # One more orthogonalization pass for stability.
        for j in filled:
            v = v - (U[:, j] @ v) * U[:, j]
        nv = math.sqrt(float(v @ v))
        if nv <= 1e-8:
            raise NumericalError("orthonormal completion failed")
        U[:, slot] = v / nv
        filled.append(slot)
    return U


def _apply_sign_convention(U: np.ndarray, V: np.ndarray, q: int) -> None:
    """Make the largest-magnitude entry of each left singular vector positive.

    Triplet columns (j < q) flip U and V together so the product is unchanged;
    completion columns flip alone.  np.argmax breaks ties at the lowest index.
    """
    m = U.shape[1]
    for j in range(m):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0.0:
            U[:, j] = -U[:, j]
            if j < q:
                V[:, j] = -V[:, j]
    for j in range(q, V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0.0:
            V[:, j] = -V[:, j]


def full_svd(M) -> SvdResult:
    """Full SVD of a real matrix via one-sided Jacobi on the smaller dimension.

    Deterministic: fixed cyclic sweep order, stable nonincreasing sort of the
    singular values, and a fixed sign convention on the singular vectors.

    Raises
    ------
    InvalidInputError
        If the input is not a finite 2-d array.
    """
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise InvalidInputError("full_svd expects a 2-d matrix with positive dimensions")
    if not np.isfinite(A).all():
        raise InvalidInputError("full_svd: non-finite entries")
    m, n = A.shape
    transposed = m < n
    B = A.T.copy() if transposed else A.copy()
    big, small = B.shape
    W = np.eye(small)
    _jacobi_sweeps(B, W)
    sigma = np.sqrt((B * B).sum(axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    B = B[:, order]
    W = W[:, order]
    left = _complete_orthonormal(B, sigma, big)
    if transposed:
        U, V = W, left
    else:
        U, V = left, W
    q = min(m, n)
    _apply_sign_convention(U, V, q)
    return SvdResult(U=U, sigma=sigma, V=V)


def singular_values(M) -> np.ndarray:
    """Singular values in nonincreasing order (no vector accumulation)."""
    return singular_values_batch(np.asarray(M, dtype=float)[None, :, :])[0]


def singular_values_batch(stack) -> np.ndarray:
    """Singular values of a stack of same-shaped matrices, batched Jacobi.

    The rotation schedule is data-independent, so all matrices in the stack
    are swept simultaneously with vectorized column rotations; this is the
    fast path for property tests that need thousands of small spectra.
    """
    A = np.asarray(stack, dtype=float)
    if A.ndim != 3:
        raise InvalidInputError("singular_values_batch expects an (N, m, n) stack")
    if not np.isfinite(A).all():
        raise InvalidInputError("singular_values_batch: non-finite entries")
    N, m, n = A.shape
    B = np.transpose(A, (0, 2, 1)).copy() if m < n else A.copy()
    small = B.shape[2]
    for _ in range(_MAX_SWEEPS):
        any_rot = False
        for p in range(small - 1):
            for q in range(p + 1, small):
                bp = B[:, :, p]
                bq = B[:, :, q]
                app = (bp * bp).sum(axis=1)
                aqq = (bq * bq).sum(axis=1)
                apq = (bp * bq).sum(axis=1)
                denom = np.sqrt(app * aqq)
                mask = np.abs(apq) > _JACOBI_REL_TOL * denom
                if not mask.any():
                    continue
                any_rot = True
                safe_apq = np.where(mask, apq, 1.0)
                zeta = (aqq - app) / (2.0 * safe_apq)
                t = np.sign(zeta + (zeta == 0.0)) / (np.abs(zeta) + np.hypot(1.0, zeta))
                t = np.where(mask, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c[:, None] * bp - s[:, None] * bq
                new_q = s[:, None] * bp + c[:, None] * bq
                B[:, :, p] = new_p
                B[:, :, q] = new_q
        if not any_rot:
            break
    else:
        raise NumericalError("batched Jacobi did not converge")
    sigma = np.sqrt((B * B).sum(axis=1))
    sigma.sort(axis=1)
    return sigma[:, ::-1]
