"""Brute-force reference solvers for the backward step.

Everything here minimizes the backward-step objective by enumeration, grid
refinement, or exhaustive candidate sampling -- never by the closed forms or
the bisection of :mod:`specprox.prox`.  The objective definition is shared
with the rest of the package; the minimization routes are independent, which
is what makes these usable as equivalence oracles.  Matrix-side spectra are
computed with ``numpy.linalg.svd`` rather than the package's own Jacobi
factorization, keeping the two routes disjoint end to end.
"""

from __future__ import annotations

import math
from itertools import combinations, product

import numpy as np

from .errors import InvalidSpecError
from .prox import (
    FrobeniusBall,
    HardThreshold,
    L2Ball,
    LinfBall,
    LinfSphere,
    RankLimit,
    SignSet,
    SpectralBall,
    SpectralSphere,
    Stiefel,
    Zero,
)
from .reference import BlockRef, Structure

_FEAS_TOL = 1e-9


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------


def transport_cost(entry: BlockRef, y: np.ndarray, gamma: float, x: np.ndarray) -> float:
    """gamma * phi((x - y)/gamma) for a vector block (may be +inf)."""
    z = (np.asarray(x, dtype=float) - y) / gamma
    if entry.structure is Structure.ANISO:
        return gamma * float(np.sum(entry.scalar.h(z)))
    if entry.structure is Structure.ISO:
        return gamma * float(entry.scalar.h(math.sqrt(float(z @ z))))
    raise InvalidSpecError("vector oracle needs an ISO or ANISO entry")


def transport_cost_batch(entry: BlockRef, y: np.ndarray, gamma: float,
                         X: np.ndarray) -> np.ndarray:
    """Vectorized transport cost for a (N, d) batch of candidates."""
    Z = (X - y[None, :]) / gamma
    if entry.structure is Structure.ANISO:
        return gamma * np.asarray(entry.scalar.h(Z)).sum(axis=1)
    norms = np.sqrt((Z * Z).sum(axis=1))
    return gamma * np.asarray(entry.scalar.h(norms))


def _feasible(tag, x: np.ndarray) -> bool:
    if isinstance(tag, Zero):
        return True
    if isinstance(tag, SignSet):
        return bool(np.abs(np.abs(x) - tag.radius).max() <= _FEAS_TOL)
    if isinstance(tag, L2Ball):
        return math.sqrt(float(x @ x)) <= tag.radius + _FEAS_TOL
    if isinstance(tag, LinfBall):
        return float(np.abs(x).max()) <= tag.radius + _FEAS_TOL
    if isinstance(tag, LinfSphere):
        return abs(float(np.abs(x).max()) - tag.radius) <= _FEAS_TOL
    if isinstance(tag, HardThreshold):
        return int(np.count_nonzero(x)) <= tag.sparsity
    raise InvalidSpecError(f"vector oracle does not handle {type(tag).__name__}")


def prox_objective(tag, entry: BlockRef, y: np.ndarray, gamma: float,
                   x: np.ndarray) -> float:
    """Backward-step objective at x: indicator plus transport cost."""
    if not _feasible(tag, x):
        return math.inf
    return transport_cost(entry, y, gamma, x)


# ---------------------------------------------------------------------------
# Exhaustive enumerations (nonconvex separable sets)
# ---------------------------------------------------------------------------


def _clip(y: np.ndarray, r: float) -> np.ndarray:
    return np.clip(y, -r, r)


def enumerate_candidates(tag, entry: BlockRef, y: np.ndarray, gamma: float) -> np.ndarray:
    """All structurally distinct minimizer candidates as an (N, d) stack."""
    d = y.size
    if isinstance(tag, Zero):
        return y[None, :].copy()
    if isinstance(tag, SignSet):
        patterns = np.array(list(product((-1.0, 1.0), repeat=d)))
        return tag.radius * patterns
    if isinstance(tag, LinfSphere):
        cands = []
        for j in range(d):
            for s in (1.0, -1.0):
                # On the face x_j = s*r the remaining coordinates separate
                # and clipping minimizes each 1-d term.
                c = _clip(y, tag.radius)
                c[j] = s * tag.radius
                cands.append(c)
        return np.array(cands)
    if isinstance(tag, HardThreshold):
        cands = []
        for kept in combinations(range(d), tag.sparsity):
            c = np.zeros(d)
            c[list(kept)] = y[list(kept)]
            cands.append(c)
        return np.array(cands)
    if isinstance(tag, LinfBall):
        return _grid_box_candidates(tag, entry, y, gamma)
    raise InvalidSpecError(f"no enumeration for {type(tag).__name__}")


def _grid_box_candidates(tag: LinfBall, entry: BlockRef, y: np.ndarray,
                         gamma: float) -> np.ndarray:
    """1-d grid refinement per coordinate (valid for separable entries)."""
    if entry.structure is not Structure.ANISO:
        raise InvalidSpecError("box grid oracle needs a separable entry")
    r = tag.radius
    d = y.size
    lo = np.full(d, -r)
    hi = np.full(d, r)
    pts = 33
    for _ in range(40):
        grids = np.linspace(lo, hi, pts, axis=1)  # (d, pts)
        cost = entry.scalar.h((grids - y[:, None]) / gamma)
        best = np.argmin(cost, axis=1)
        width = (hi - lo) / (pts - 1)
        center = grids[np.arange(d), best]
        lo = np.maximum(-r, center - width)
        hi = np.minimum(r, center + width)
    return (0.5 * (lo + hi))[None, :]


# ---------------------------------------------------------------------------
# Spherical grid refinement (l2 ball / sphere)
# ---------------------------------------------------------------------------


def spherical_to_cartesian(r: float, angles: np.ndarray) -> np.ndarray:
    """(N, d-1) angle batch -> (N, d) points of the radius-r sphere."""
    N, k = angles.shape
    d = k + 1
    out = np.empty((N, d))
    sin_running = np.full(N, r)
    for i in range(k):
        out[:, i] = sin_running * np.cos(angles[:, i])
        sin_running = sin_running * np.sin(angles[:, i])
    out[:, d - 1] = sin_running
    return out


def cartesian_to_spherical(x: np.ndarray) -> np.ndarray:
    d = x.size
    angles = np.empty(d - 1)
    for i in range(d - 2):
        tail = math.sqrt(float((x[i + 1:] ** 2).sum()))
        angles[i] = math.atan2(tail, float(x[i]))
    # the final angle carries the sign of the last coordinate
    angles[d - 2] = math.atan2(float(x[d - 1]), float(x[d - 2]))
    return angles


def _sphere_refine(entry: BlockRef, y: np.ndarray, gamma: float, r: float,
                   center: np.ndarray, width: np.ndarray, rounds: int,
                   pts: int = 7) -> tuple[float, np.ndarray]:
    k = center.size
    best_val = math.inf
    best_x = None
    for _ in range(rounds):
        axes = [center[i] + width[i] * np.linspace(-1.0, 1.0, pts) for i in range(k)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
        X = spherical_to_cartesian(r, mesh)
        vals = transport_cost_batch(entry, y, gamma, X)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_x = X[j]
        center = mesh[j]
        width = width * (2.0 / (pts - 1)) * 1.2  # keep neighboring cells covered
    return best_val, best_x


def l2_sphere_grid_min(entry: BlockRef, y: np.ndarray, gamma: float, r: float,
                       x_hint: np.ndarray | None = None) -> float:
    """Grid-refined minimum of the transport cost over the radius-r sphere.

    Runs a global coarse-to-fine pass and, when a hint is given, a second
    local pass seeded at the hint; returns the better value.  For d = 1 the
    sphere is the two-point set.
    """
    d = y.size
    if d == 1:
        return min(
            transport_cost(entry, y, gamma, np.array([r])),
            transport_cost(entry, y, gamma, np.array([-r])),
        )
    k = d - 1
    center = np.full(k, 0.5 * math.pi)
    width = np.full(k, 0.5 * math.pi)
    width[-1] = math.pi
    val, _ = _sphere_refine(entry, y, gamma, r, center, width, rounds=24)
    if x_hint is not None:
        hint_val, _ = _sphere_refine(
            entry, y, gamma, r, cartesian_to_spherical(x_hint),
            np.full(k, 0.35), rounds=20,
        )
        val = min(val, hint_val)
    return val


def best_candidate_objective(tag, entry: BlockRef, y: np.ndarray, gamma: float,
                             x_hint: np.ndarray | None = None) -> float:
    """Best objective the brute-force route can certify for this instance."""
    if isinstance(tag, L2Ball):
        ny = math.sqrt(float(y @ y))
        if ny <= tag.radius:
            return transport_cost(entry, y, gamma, y)
        if entry.structure is Structure.ISO:
            # Euclidean projection is exact for radial entries.
            return transport_cost(entry, y, gamma, (tag.radius / ny) * y)
        return l2_sphere_grid_min(entry, y, gamma, tag.radius, x_hint)
    cands = enumerate_candidates(tag, entry, y, gamma)
    vals = transport_cost_batch(entry, y, gamma, cands)
    return float(vals.min())


# ---------------------------------------------------------------------------
# Matrix-side candidates (independent spectra via numpy.linalg)
# ---------------------------------------------------------------------------


def random_feasible_matrices(tag, shape: tuple[int, int], count: int,
                             rng: np.random.Generator) -> np.ndarray:
    """(count, m, n) stack of exactly feasible random candidates."""
    m, n = shape
    G = rng.standard_normal((count, m, n))
    if isinstance(tag, Stiefel):
        q, r = np.linalg.qr(G)
        signs = np.sign(np.einsum("nii->ni", r))
        signs[signs == 0.0] = 1.0
        return tag.radius * q * signs[:, None, :]
    if isinstance(tag, FrobeniusBall):
        norms = np.sqrt((G * G).sum(axis=(1, 2)))
        scale = tag.radius * rng.uniform(0.0, 1.0, count) / np.maximum(norms, 1e-300)
        return G * scale[:, None, None]
    if isinstance(tag, SpectralBall):
        smax = np.linalg.svd(G, compute_uv=False)[:, 0]
        scale = tag.radius * rng.uniform(0.0, 1.0, count) / np.maximum(smax, 1e-300)
        return G * scale[:, None, None]
    if isinstance(tag, SpectralSphere):
        smax = np.linalg.svd(G, compute_uv=False)[:, 0]
        return G * (tag.radius / np.maximum(smax, 1e-300))[:, None, None]
    if isinstance(tag, RankLimit):
        A = rng.standard_normal((count, m, tag.rank))
        B = rng.standard_normal((count, tag.rank, n))
        return A @ B
    raise InvalidSpecError(f"no matrix candidates for {type(tag).__name__}")


def matrix_transport_cost_batch(entry: BlockRef, Y: np.ndarray, gamma: float,
                                X: np.ndarray) -> np.ndarray:
    """gamma * phi((X - Y)/gamma) for a (N, m, n) candidate stack."""
    Z = (X - Y[None, :, :]) / gamma
    if entry.structure is Structure.SPECTRAL_ANISO:
        sig = np.linalg.svd(Z, compute_uv=False)
        return gamma * np.asarray(entry.scalar.h(sig)).sum(axis=1)
    if entry.structure is Structure.SPECTRAL_ISO:
        norms = np.sqrt((Z * Z).sum(axis=(1, 2)))
        return gamma * np.asarray(entry.scalar.h(norms))
    raise InvalidSpecError("matrix oracle needs a spectral entry")


def matrix_transport_cost(entry: BlockRef, Y: np.ndarray, gamma: float,
                          X: np.ndarray) -> float:
    return float(matrix_transport_cost_batch(entry, Y, gamma, X[None, :, :])[0])
