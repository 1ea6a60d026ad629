"""Anisotropic backward steps for the supported constraint sets.

The backward step solves ``argmin_x g(x) + gamma*phi((x - y)/gamma)`` where
``g`` is the indicator of a constraint set (or zero).  For coordinatewise
(ANISO) reference functions the vector sets below have closed forms or a 1-d
bisection; matrix sets reduce to the vector problem on the singular values and
are reassembled with the singular vectors of the input.  For radial (ISO)
reference functions every backward step collapses to the Euclidean projection.

Tie-breaking is deterministic everywhere: ``sign(0) = +1``, and magnitude ties
are resolved toward the lowest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidSpecError, NumericalError
from .reference import BOUNDARY_MARGIN, Barrier, BlockRef, HyperKappa, ReferenceFn, Structure, grad_phi
from .tensor import ParamVec, full_svd


# ---------------------------------------------------------------------------
# Constraint tags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    """No constraint: g identically zero."""


@dataclass(frozen=True)
class SignSet:
    """{x : |x_i| = r for all i}."""

    radius: float


@dataclass(frozen=True)
class L2Ball:
    """{x : ||x||_2 <= r}."""

    radius: float


@dataclass(frozen=True)
class LinfBall:
    """{x : ||x||_inf <= r}."""

    radius: float


@dataclass(frozen=True)
class LinfSphere:
    """{x : ||x||_inf = r}."""

    radius: float


@dataclass(frozen=True)
class HardThreshold:
    """{x : ||x||_0 <= s}."""

    sparsity: int


@dataclass(frozen=True)
class Stiefel:
    """{X in R^{m x n}, n <= m : X^T X = r^2 I}."""

    radius: float


@dataclass(frozen=True)
class FrobeniusBall:
    """{X : ||X||_F <= r}."""

    radius: float


@dataclass(frozen=True)
class SpectralBall:
    """{X : sigma_max(X) <= r}."""

    radius: float


@dataclass(frozen=True)
class SpectralSphere:
    """{X : sigma_max(X) = r}."""

    radius: float


@dataclass(frozen=True)
class RankLimit:
    """{X : rank(X) <= s}."""

    rank: int


VECTOR_TAGS = (Zero, SignSet, L2Ball, LinfBall, LinfSphere, HardThreshold)
MATRIX_TAGS = (Zero, Stiefel, FrobeniusBall, SpectralBall, SpectralSphere, RankLimit)

# Matrix set -> equivalent vector set acting on the singular values.
_SIGMA_TAG = {
    Stiefel: lambda t, n: SignSet(t.radius),
    FrobeniusBall: lambda t, n: L2Ball(t.radius),
    SpectralBall: lambda t, n: LinfBall(t.radius),
    SpectralSphere: lambda t, n: LinfSphere(t.radius),
    RankLimit: lambda t, n: HardThreshold(t.rank),
}


def _validate_tag(tag, shape) -> None:
    if isinstance(tag, Zero):
        return
    if len(shape) == 1:
        if not isinstance(tag, VECTOR_TAGS):
            raise InvalidSpecError(f"{type(tag).__name__} cannot constrain a vector block")
        if isinstance(tag, HardThreshold):
            if not (1 <= tag.sparsity <= shape[0]):
                raise InvalidSpecError(
                    f"sparsity {tag.sparsity} out of range for dimension {shape[0]}"
                )
        elif tag.radius <= 0:
            raise InvalidSpecError("radius must be positive")
    else:
        if not isinstance(tag, MATRIX_TAGS):
            raise InvalidSpecError(f"{type(tag).__name__} cannot constrain a matrix block")
        m, n = shape
        if isinstance(tag, Stiefel) and n > m:
            raise InvalidSpecError("Stiefel blocks need n <= m")
        if isinstance(tag, RankLimit):
            if not (1 <= tag.rank <= min(m, n)):
                raise InvalidSpecError(
                    f"rank {tag.rank} out of range for shape {m}x{n}"
                )
        elif tag.radius <= 0:
            raise InvalidSpecError("radius must be positive")


class ConstraintSpec:
    """One constraint tag per block (a single tag broadcasts)."""

    __slots__ = ("tags", "broadcast")

    def __init__(self, tags):
        if not isinstance(tags, (list, tuple)):
            tags = [tags]
        tags = tuple(tags)
        if not tags:
            raise InvalidSpecError("ConstraintSpec needs at least one tag")
        self.tags = tags
        self.broadcast = len(tags) == 1

    @classmethod
    def unconstrained(cls) -> "ConstraintSpec":
        return cls(Zero())

    def __repr__(self):
        return f"ConstraintSpec({list(self.tags)!r})"

    def tag(self, i: int, nblocks: int):
        if self.broadcast:
            return self.tags[0]
        if len(self.tags) != nblocks:
            raise InvalidSpecError(
                f"spec has {len(self.tags)} tags but the point has {nblocks} blocks"
            )
        return self.tags[i]

    def block_tags(self, x: ParamVec):
        return [self.tag(i, len(x)) for i in range(len(x))]

    def validate_for(self, shapes) -> None:
        shapes = list(shapes)
        for i, shape in enumerate(shapes):
            _validate_tag(self.tag(i, len(shapes)), shape)


def _as_entry(ref) -> BlockRef:
    if isinstance(ref, BlockRef):
        return ref
    if isinstance(ref, ReferenceFn):
        if len(ref.entries) != 1:
            raise InvalidInputError("single-block prox call needs a single-entry reference")
        return ref.entries[0]
    raise InvalidInputError(f"expected ReferenceFn or BlockRef, got {type(ref)!r}")


# ---------------------------------------------------------------------------
# Vector backward steps
# ---------------------------------------------------------------------------


def _sign(y: np.ndarray) -> np.ndarray:
    # sign with sign(0) = +1
    return np.where(y >= 0.0, 1.0, -1.0)


def _clip_inf(y: np.ndarray, r: float) -> np.ndarray:
    return np.clip(y, -r, r)


def _linf_sphere(y: np.ndarray, r: float) -> np.ndarray:
    if np.abs(y).max() >= r:
        return _clip_inf(y, r)
    j = int(np.argmax(np.abs(y)))  # lowest index on ties
    out = y.copy()
    out[j] = r if y[j] >= 0.0 else -r
    return out


def _hard_threshold(y: np.ndarray, s: int) -> np.ndarray:
    order = np.argsort(-np.abs(y), kind="stable")
    out = np.zeros_like(y)
    keep = order[:s]
    out[keep] = y[keep]
    return out


def _l2_root_barrier(y_abs: np.ndarray, lam: float, gamma: float, eps: float) -> np.ndarray:
    """Positive root of x + gamma*(2*lam*x)/(eps + 2*lam*x) = y, coordinatewise."""
    a = eps + 2.0 * gamma * lam - 2.0 * y_abs * lam
    b = 8.0 * lam * eps * y_abs
    disc = np.sqrt(a * a + b)
    # Cancellation-safe quadratic root: use b/(a + sqrt(...)) when a > 0.
    num = np.where(a > 0.0, b / (a + disc), disc - a)
    return num / (4.0 * lam)


def _l2_root_generic(y_abs: np.ndarray, lam: float, gamma: float, scalar) -> np.ndarray:
    """Solve x + gamma*h*'(2*lam*x) = y for x in [0, y] by bisection."""
    lo = np.zeros_like(y_abs)
    hi = y_abs.copy()
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        f = mid + gamma * scalar.h_star_prime(2.0 * lam * mid) - y_abs
        high = f > 0.0
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def _l2_ball_aniso(y: np.ndarray, r: float, scalar, gamma: float) -> np.ndarray:
    ny = math.sqrt(float(y @ y))
    if ny <= r:
        return y.copy()
    y_abs = np.abs(y)
    sgn = _sign(y)
    # The root x(lambda) saturates coordinatewise at |y_i| - gamma; if even the
    # saturated point lies outside the ball, no feasible point has finite
    # transport cost and the backward step is ill-posed for this input.
    saturated = np.maximum(y_abs - gamma, 0.0)
    if float(saturated @ saturated) >= r * r:
        raise NumericalError(
            f"l2-ball unreachable: every feasible point is farther than gamma={gamma:.3e} "
            f"in some coordinate (|y|={ny:.3e}, r={r:.3e})"
        )
    closed_form = isinstance(scalar, Barrier) or (
        isinstance(scalar, HyperKappa) and scalar.kappa == 1.0
    )
    eps = scalar.epsilon

    def x_of(lam: float) -> np.ndarray:
        if closed_form:
            return _l2_root_barrier(y_abs, lam, gamma, eps)
        return _l2_root_generic(y_abs, lam, gamma, scalar)

    def residual(lam: float) -> float:
        if lam == 0.0:
            return ny * ny - r * r
        x = x_of(lam)
        return float(x @ x) - r * r

    tol = 1e-12 * r * r
    lam_lo, lam_hi = 0.0, 1.0
    res_hi = residual(lam_hi)
    doublings = 0
    while res_hi > 0.0:
        lam_lo, lam_hi = lam_hi, 2.0 * lam_hi
        res_hi = residual(lam_hi)
        doublings += 1
        if doublings > 200:
            raise NumericalError(
                f"l2-ball bracket search failed: residual {res_hi:.3e} at lambda {lam_hi:.3e} "
                f"(|y|={ny:.3e}, r={r:.3e}, gamma={gamma:.3e})"
            )
    lam = lam_hi
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        res = residual(lam)
        if abs(res) <= tol:
            return sgn * x_of(lam)
        if res > 0.0:
            lam_lo = lam
        else:
            lam_hi = lam
    raise NumericalError(
        f"l2-ball bisection failed to reach |residual| <= {tol:.3e}: "
        f"residual {res:.3e}, bracket [{lam_lo:.6e}, {lam_hi:.6e}], |y|={ny:.3e}, r={r:.3e}"
    )


def _euclidean_projection(tag, y: np.ndarray) -> np.ndarray:
    if isinstance(tag, Zero):
        return y.copy()
    if isinstance(tag, SignSet):
        return tag.radius * _sign(y)
    if isinstance(tag, L2Ball):
        ny = math.sqrt(float(y @ y))
        if ny <= tag.radius:
            return y.copy()
        return (tag.radius / ny) * y
    if isinstance(tag, LinfBall):
        return _clip_inf(y, tag.radius)
    if isinstance(tag, LinfSphere):
        return _linf_sphere(y, tag.radius)
    if isinstance(tag, HardThreshold):
        return _hard_threshold(y, tag.sparsity)
    raise InvalidSpecError(f"unsupported vector tag {type(tag).__name__}")


def prox_vector(tag, ref, y, gamma: float) -> np.ndarray:
    """Backward step on a vector block.

    ``ref`` must be an ISO or ANISO reference (a single-entry
    :class:`~specprox.reference.ReferenceFn` or a ``BlockRef``).  With an ISO
    reference every closed set reduces to the Euclidean projection; with an
    ANISO reference the closed forms and the l2-ball bisection apply.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError("prox_vector expects a 1-d block")
    if not np.isfinite(y).all():
        raise InvalidInputError("prox_vector: non-finite input")
    if gamma <= 0.0:
        raise InvalidInputError("gamma must be positive")
    e = _as_entry(ref)
    _validate_tag(tag, y.shape)
    if e.structure is Structure.ISO:
        return _euclidean_projection(tag, y)
    if e.structure is not Structure.ANISO:
        raise InvalidSpecError("prox_vector needs an ISO or ANISO reference")
    if isinstance(tag, L2Ball):
        return _l2_ball_aniso(y, tag.radius, e.scalar, gamma)
    # The remaining sets are coordinatewise-separable, so the anisotropic
    # solution coincides with the Euclidean one.
    return _euclidean_projection(tag, y)


def prox_matrix(tag, ref, Y, gamma: float) -> np.ndarray:
    """Backward step on a matrix block via reduction to the singular values.

    Computes a full SVD of ``Y``, applies the corresponding vector backward
    step to ``sigma(Y)``, and reassembles with the same singular vectors.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InvalidInputError("prox_matrix expects a 2-d block")
    if not np.isfinite(Y).all():
        raise InvalidInputError("prox_matrix: non-finite input")
    if gamma <= 0.0:
        raise InvalidInputError("gamma must be positive")
    e = _as_entry(ref)
    if not e.structure.is_spectral:
        raise InvalidSpecError("prox_matrix needs a spectral reference")
    _validate_tag(tag, Y.shape)
    res = full_svd(Y)
    q = res.sigma.size
    if isinstance(tag, Zero):
        return Y.copy()
    sigma_tag = _SIGMA_TAG[type(tag)](tag, q)
    vec_structure = Structure.ANISO if e.structure is Structure.SPECTRAL_ANISO else Structure.ISO
    x_star = prox_vector(sigma_tag, BlockRef(vec_structure, e.scalar), res.sigma, gamma)
    return (res.U[:, :q] * x_star) @ res.V[:, :q].T


def prox(spec: ConstraintSpec, ref: ReferenceFn, y: ParamVec, gamma: float) -> ParamVec:
    """Blockwise backward step over the whole product space."""
    tags = spec.block_tags(y)
    ents = ref.block_entries(y)
    out = []
    for tag, e, b in zip(tags, ents, y.blocks):
        if b.ndim == 1:
            out.append(prox_vector(tag, e, b, gamma))
        else:
            if isinstance(tag, Zero):
                out.append(b.copy())
            else:
                out.append(prox_matrix(tag, e, b, gamma))
    return ParamVec(out, validate=False, copy=False)


# ---------------------------------------------------------------------------
# Subgradient recovery and feasibility
# ---------------------------------------------------------------------------


def _clamp_into_domain(e: BlockRef, z: np.ndarray) -> np.ndarray:
    limit = 1.0 - BOUNDARY_MARGIN
    if e.structure is Structure.ANISO:
        return np.clip(z, -limit, limit)
    if e.structure is Structure.ISO or e.structure is Structure.SPECTRAL_ISO:
        nz = math.sqrt(float(np.vdot(z, z)))
        if nz > limit:
            return (limit / nz) * z
        return z
    res = full_svd(z)
    if res.sigma.size == 0 or res.sigma[0] <= limit:
        return z
    q = res.sigma.size
    sig = np.minimum(res.sigma, limit)
    return (res.U[:, :q] * sig) @ res.V[:, :q].T


def recover_subgradient(x_next: ParamVec, y: ParamVec, gamma: float, ref: ReferenceFn) -> ParamVec:
    """The subgradient of g certified by the backward step.

    Returns ``-grad_phi((x_next - y)/gamma)``, the specific element of the
    subdifferential at the new point that the optimality condition of the
    backward step produces.  The argument is clamped into the domain with
    margin 1e-12 before differentiating.
    """
    z = (x_next - y) * (1.0 / gamma)
    ents = ref.block_entries(z)
    clamped = ParamVec(
        (_clamp_into_domain(e, b) for e, b in zip(ents, z.blocks)),
        validate=False, copy=False,
    )
    return -grad_phi(ref, clamped)


def _feasibility_block(tag, x: np.ndarray) -> float:
    if isinstance(tag, Zero):
        return 0.0
    if x.ndim == 1:
        if isinstance(tag, SignSet):
            return float(np.abs(np.abs(x) - tag.radius).max())
        if isinstance(tag, L2Ball):
            return max(0.0, math.sqrt(float(x @ x)) - tag.radius)
        if isinstance(tag, LinfBall):
            return max(0.0, float(np.abs(x).max()) - tag.radius)
        if isinstance(tag, LinfSphere):
            return abs(float(np.abs(x).max()) - tag.radius)
        if isinstance(tag, HardThreshold):
            mags = np.sort(np.abs(x))[::-1]
            return float(mags[tag.sparsity]) if mags.size > tag.sparsity else 0.0
        raise InvalidSpecError(f"unsupported vector tag {type(tag).__name__}")
    sigma = full_svd(x).sigma
    if isinstance(tag, Stiefel):
        return float(np.abs(sigma - tag.radius).max())
    if isinstance(tag, FrobeniusBall):
        return max(0.0, math.sqrt(float(np.vdot(x, x))) - tag.radius)
    if isinstance(tag, SpectralBall):
        return max(0.0, float(sigma[0]) - tag.radius)
    if isinstance(tag, SpectralSphere):
        return abs(float(sigma[0]) - tag.radius)
    if isinstance(tag, RankLimit):
        return float(sigma[tag.rank]) if sigma.size > tag.rank else 0.0
    raise InvalidSpecError(f"unsupported matrix tag {type(tag).__name__}")


def feasibility_error(spec: ConstraintSpec, x: ParamVec) -> float:
    """Largest blockwise violation of the constraint set (0 when feasible)."""
    return max(
        _feasibility_block(tag, b) for tag, b in zip(spec.block_tags(x), x.blocks)
    )


def g_value(spec: ConstraintSpec, x: ParamVec, tol: float = 1e-9) -> float:
    """Indicator value of the constraint set: 0 within tol, +inf otherwise."""
    return 0.0 if feasibility_error(spec, x) <= tol else math.inf


def feasible_start(spec: ConstraintSpec, shapes) -> ParamVec:
    """A deterministic feasible point to start a run from."""
    shapes = list(shapes)
    blocks = []
    for i, shape in enumerate(shapes):
        tag = spec.tag(i, len(shapes))
        if len(shape) == 1:
            n = shape[0]
            if isinstance(tag, (Zero, L2Ball, LinfBall)):
                blocks.append(np.zeros(n))
            elif isinstance(tag, SignSet):
                blocks.append(np.full(n, tag.radius))
            elif isinstance(tag, LinfSphere):
                b = np.zeros(n)
                b[0] = tag.radius
                blocks.append(b)
            elif isinstance(tag, HardThreshold):
                blocks.append(np.zeros(n))
            else:
                raise InvalidSpecError(f"unsupported vector tag {type(tag).__name__}")
        else:
            m, n = shape
            if isinstance(tag, (Zero, FrobeniusBall, SpectralBall, RankLimit)):
                blocks.append(np.zeros((m, n)))
            elif isinstance(tag, Stiefel):
                blocks.append(tag.radius * np.eye(m, n))
            elif isinstance(tag, SpectralSphere):
                b = np.zeros((m, n))
                b[0, 0] = tag.radius
                blocks.append(b)
            else:
                raise InvalidSpecError(f"unsupported matrix tag {type(tag).__name__}")
    return ParamVec(blocks, validate=False, copy=False)
