"""Reference functions and their conjugate calculus.

A scalar reference function ``h`` is even, nonnegative, strongly convex with
modulus ``epsilon``, vanishes at zero, and has effective domain ``[-1, 1]``
with an exploding derivative at the boundary.  Its conjugate derivative
``h*'`` maps the whole line into ``(-1, 1)`` and acts as a bounded, odd,
monotone nonlinear preconditioner.

Two families are provided:

* :class:`Barrier` -- ``h(t) = -eps*(log(1-|t|) + |t|)`` with the fully
  closed-form conjugate pair ``h*'(s) = s/(eps+|s|)`` and
  ``h*(s) = |s| - eps*log(1+|s|/eps)``.
* :class:`HyperKappa` -- ``h*'(s) = s/(eps^k + |s|^k)^(1/k)``.  ``k = 1``
  recovers the barrier; ``k = 2`` has the closed form
  ``h*(s) = sqrt(eps^2+s^2) - eps``; other exponents evaluate ``h*`` by
  Gauss-Kronrod quadrature accumulated on a cached geometric grid, with the
  residual panel integrated by fixed-order Gauss-Legendre so vectorized
  queries stay cheap and accurate.

A :class:`ReferenceFn` attaches one scalar function and one structure
(coordinatewise, radial, or their spectral lifts acting on singular values)
to every block of a parameter vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import BoundaryError, InvalidConfigError, InvalidInputError
from .tensor import ParamVec, dot, full_svd

BOUNDARY_MARGIN = 1e-12

# Range cap for the conjugate derivative: mathematically |h*'| < 1 strictly,
# but for very flat families (large kappa) the float64 value saturates to 1.0
# at moderate arguments; capping keeps outputs strictly inside the domain.
_RANGE_CAP = 1.0 - 1e-15

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_GL01_NODES = 0.5 * (_GL_NODES + 1.0)
_GL01_WEIGHTS = 0.5 * _GL_WEIGHTS


class Structure(Enum):
    """How a scalar reference function is lifted to a block."""

    ISO = "iso"                        # h(|x|_2)
    ANISO = "aniso"                    # sum_i h(x_i)
    SPECTRAL_ISO = "spectral-iso"      # h(|X|_F)
    SPECTRAL_ANISO = "spectral-aniso"  # sum_i h(sigma_i(X))

    @property
    def is_spectral(self) -> bool:
        return self in (Structure.SPECTRAL_ISO, Structure.SPECTRAL_ANISO)


# ---------------------------------------------------------------------------
# Scalar reference functions
# ---------------------------------------------------------------------------


class Barrier:
    """Logarithmic barrier reference function with scale ``epsilon``.

    ``h(t) = -eps*(log(1-|t|)+|t|)`` on ``(-1, 1)``; strongly convex with
    modulus exactly ``eps``; ``h*'`` saturates as ``s/(eps+|s|)``.
    """

    __slots__ = ("epsilon",)

    def __init__(self, epsilon: float):
        epsilon = float(epsilon)
        if not (epsilon > 0.0) or not math.isfinite(epsilon):
            raise InvalidConfigError(f"Barrier epsilon must be positive, got {epsilon}")
        self.epsilon = epsilon

    def __repr__(self):
        return f"Barrier(epsilon={self.epsilon!r})"

    def __eq__(self, other):
        return isinstance(other, Barrier) and other.epsilon == self.epsilon

    def __hash__(self):
        return hash(("barrier", self.epsilon))

    def h(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t < 1.0, -self.epsilon * (np.log1p(-t) + t), np.inf)
        return out if out.ndim else float(out)

    def h_prime(self, t):
        t = np.asarray(t, dtype=float)
        out = self.epsilon * t / (1.0 - np.abs(t))
        return out if out.ndim else float(out)

    def h_star(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        out = s - self.epsilon * np.log1p(s / self.epsilon)
        return out if out.ndim else float(out)

    def h_star_prime(self, s):
        s = np.asarray(s, dtype=float)
        out = np.clip(s / (self.epsilon + np.abs(s)), -_RANGE_CAP, _RANGE_CAP)
        return out if out.ndim else float(out)


class HyperKappa:
    """Power-family reference function with scale ``epsilon`` and exponent ``kappa``.

    Defined through its conjugate derivative
    ``h*'(s) = s / (eps^k + |s|^k)^(1/k)``, whose inverse has the closed form
    ``h'(t) = eps * t / (1 - |t|^k)^(1/k)`` on ``(-1, 1)``.  ``h`` itself is
    recovered from the conjugacy identity ``h(t) = t*h'(t) - h*(h'(t))``;
    at ``|t| = 1`` the limit ``h(1) = integral_0^inf (1 - h*'(u)) du`` is used
    (finite for ``kappa > 1``, infinite for ``kappa = 1``).
    """

    __slots__ = ("epsilon", "kappa", "_cache")

    def __init__(self, epsilon: float, kappa: float):
        epsilon = float(epsilon)
        kappa = float(kappa)
        if not (epsilon > 0.0) or not math.isfinite(epsilon):
            raise InvalidConfigError(f"HyperKappa epsilon must be positive, got {epsilon}")
        if not (kappa >= 1.0) or not math.isfinite(kappa):
            raise InvalidConfigError(f"HyperKappa kappa must be >= 1, got {kappa}")
        self.epsilon = epsilon
        self.kappa = kappa
        self._cache = None

    def __repr__(self):
        return f"HyperKappa(epsilon={self.epsilon!r}, kappa={self.kappa!r})"

    def __eq__(self, other):
        return (
            isinstance(other, HyperKappa)
            and other.epsilon == self.epsilon
            and other.kappa == self.kappa
        )

    def __hash__(self):
        return hash(("hyper", self.epsilon, self.kappa))

    # -- conjugate derivative and its inverse --------------------------------

    def h_star_prime(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        big = np.maximum(a, self.epsilon)
        low = np.minimum(a, self.epsilon)
        # (eps^k + a^k)^(1/k) = big * (1 + (low/big)^k)^(1/k), overflow-safe
        denom = big * np.power(1.0 + np.power(low / big, self.kappa), 1.0 / self.kappa)
        out = np.clip(s / denom, -_RANGE_CAP, _RANGE_CAP)
        return out if out.ndim else float(out)

    def h_prime(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(
                a < 1.0,
                self.epsilon * t / np.power(1.0 - np.power(a, self.kappa), 1.0 / self.kappa),
                np.where(t >= 0, np.inf, -np.inf),
            )
        return out if out.ndim else float(out)

    # -- conjugate values -----------------------------------------------------

    def _residual(self, u):
        """1 - h*'(u) for u >= 0; integrable tail for kappa > 1."""
        return 1.0 - self.h_star_prime(u)

    def _grid(self):
        if self._cache is not None:
            return self._cache
        eps, k = self.epsilon, self.kappa
        if k > 1.0:
            # a_max such that the residual tail integral is below 1e-15.
            a_max = (eps**k / (k * (k - 1.0) * 1e-15)) ** (1.0 / (k - 1.0))
            a_max = min(max(a_max, 10.0 * eps), 1e30)
        else:
            a_max = 1e30
        lo = eps * 1e-3
        decades = math.log10(a_max / lo)
        n_anchor = max(16, int(math.ceil(48 * decades)))
        anchors = np.concatenate(([0.0], np.geomspace(lo, a_max, n_anchor)))
        panel = np.empty(n_anchor)
        with warnings.catch_warnings():
            # far panels sit at the float64 noise floor of the residual
            warnings.simplefilter("ignore", IntegrationWarning)
            for i in range(n_anchor):
                panel[i], _ = quad(
                    self._residual, anchors[i], anchors[i + 1],
                    epsabs=1e-14, epsrel=1e-12, limit=200,
                )
        cum = np.concatenate(([0.0], np.cumsum(panel)))
        if k > 1.0:
            # residual(u) <= (eps/u)^k / k, so the remaining tail is bounded by
            tail_bound = eps**k * a_max ** (1.0 - k) / (k * (k - 1.0))
        else:
            tail_bound = math.inf
        if tail_bound > 1e-13:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IntegrationWarning)
                tail, _ = quad(self._residual, a_max, np.inf, epsabs=1e-13, limit=500)
        else:
            tail = 0.5 * tail_bound
        self._cache = (anchors, cum, float(cum[-1] + tail))
        return self._cache

    def residual_integral_limit(self) -> float:
        """integral_0^inf (1 - h*'(u)) du; equals h at the domain boundary."""
        if self.kappa == 1.0:
            return math.inf
        if self.kappa == 2.0:
            return self.epsilon
        return self._grid()[2]

    def h_star(self, s):
        s_in = np.asarray(s, dtype=float)
        a = np.abs(s_in)
        if self.kappa == 1.0:
            out = a - self.epsilon * np.log1p(a / self.epsilon)
            return out if out.ndim else float(out)
        if self.kappa == 2.0:
            out = np.hypot(self.epsilon, a) - self.epsilon
            return out if out.ndim else float(out)
        anchors, cum, r_inf = self._grid()
        flat = np.atleast_1d(a).ravel()
        res = np.empty_like(flat)
        inside = flat <= anchors[-1]
        if inside.any():
            q = flat[inside]
            idx = np.searchsorted(anchors, q, side="right") - 1
            idx = np.clip(idx, 0, anchors.size - 2)
            lo = anchors[idx]
            width = q - lo
            nodes = lo[:, None] + width[:, None] * _GL01_NODES[None, :]
            partial = width * (self._residual(nodes) @ _GL01_WEIGHTS)
            res[inside] = cum[idx] + partial
        if (~inside).any():
            # Beyond the cached grid the residual integral has converged.
            res[~inside] = r_inf
        out = (flat - res).reshape(np.atleast_1d(a).shape)
        if s_in.ndim == 0:
            return float(out[0])
        return out.reshape(s_in.shape)

    def h(self, t):
        t_in = np.asarray(t, dtype=float)
        a = np.abs(t_in)
        flat = np.atleast_1d(a).ravel()
        out = np.empty_like(flat)
        interior = flat < 1.0
        if interior.any():
            ti = flat[interior]
            u = self.h_prime(ti)
            out[interior] = ti * u - self.h_star(u)
        boundary = flat == 1.0
        if boundary.any():
            out[boundary] = self.residual_integral_limit()
        outside = flat > 1.0
        if outside.any():
            out[outside] = np.inf
        out = out.reshape(np.atleast_1d(a).shape)
        if t_in.ndim == 0:
            return float(out[0])
        return out.reshape(t_in.shape)


# ---------------------------------------------------------------------------
# Blockwise reference functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockRef:
    """Structure plus scalar reference function for a single block."""

    structure: Structure
    scalar: object  # Barrier | HyperKappa


class ReferenceFn:
    """Blockwise reference function ``phi(x) = sum_i phi_i(x_i)``.

    ``entries`` is either a single :class:`BlockRef` (or ``(structure,
    scalar)`` pair), broadcast over all blocks, or one entry per block.
    """

    __slots__ = ("entries", "broadcast")

    def __init__(self, entries):
        if isinstance(entries, BlockRef) or (
            isinstance(entries, tuple) and len(entries) == 2 and isinstance(entries[0], Structure)
        ):
            entries = [entries]
            broadcast = True
        else:
            entries = list(entries)
            broadcast = len(entries) == 1
        norm = []
        for e in entries:
            if isinstance(e, BlockRef):
                norm.append(e)
            else:
                s, sc = e
                norm.append(BlockRef(Structure(s), sc))
        if not norm:
            raise InvalidConfigError("ReferenceFn needs at least one entry")
        self.entries = tuple(norm)
        self.broadcast = broadcast

    @classmethod
    def uniform(cls, structure: Structure, scalar) -> "ReferenceFn":
        return cls(BlockRef(structure, scalar))

    def __repr__(self):
        return f"ReferenceFn({list(self.entries)!r})"

    def entry(self, i: int, nblocks: int) -> BlockRef:
        if self.broadcast:
            return self.entries[0]
        if len(self.entries) != nblocks:
            raise InvalidConfigError(
                f"reference has {len(self.entries)} entries but the point has {nblocks} blocks"
            )
        return self.entries[i]

    def block_entries(self, x: ParamVec) -> list[BlockRef]:
        return [self.entry(i, len(x)) for i in range(len(x))]

    def block_domain_radii(self, shapes) -> list[float]:
        """Per-block sup of the block norm over the block domain."""
        shapes = list(shapes)
        out = []
        for i, shape in enumerate(shapes):
            e = self.entry(i, len(shapes))
            if e.structure is Structure.ANISO:
                if len(shape) != 1:
                    raise InvalidConfigError("ANISO applies to vector blocks")
                out.append(math.sqrt(shape[0]))
            elif e.structure is Structure.ISO:
                if len(shape) != 1:
                    raise InvalidConfigError("ISO applies to vector blocks")
                out.append(1.0)
            elif e.structure is Structure.SPECTRAL_ANISO:
                if len(shape) != 2:
                    raise InvalidConfigError("SPECTRAL_ANISO applies to matrix blocks")
                out.append(math.sqrt(min(shape)))
            else:
                if len(shape) != 2:
                    raise InvalidConfigError("SPECTRAL_ISO applies to matrix blocks")
                out.append(1.0)
        return out

    def domain_radius(self, x_or_shapes) -> float:
        """sup of the product-space norm over the domain of phi."""
        shapes = x_or_shapes.shapes if isinstance(x_or_shapes, ParamVec) else x_or_shapes
        return math.sqrt(sum(r * r for r in self.block_domain_radii(shapes)))


def _require_finite(x: ParamVec) -> None:
    for b in x.blocks:
        if not np.isfinite(b).all():
            raise InvalidInputError("non-finite entries")


# -- forward preconditioner --------------------------------------------------


def _precondition_block(e: BlockRef, d: np.ndarray) -> np.ndarray:
    sc = e.scalar
    if e.structure is Structure.ANISO:
        return sc.h_star_prime(d)
    if e.structure is Structure.ISO:
        nd = math.sqrt(float(np.vdot(d, d)))
        if nd == 0.0:
            return np.zeros_like(d)
        return (sc.h_star_prime(nd) / nd) * d
    if e.structure is Structure.SPECTRAL_ISO:
        nd = math.sqrt(float(np.vdot(d, d)))
        if nd == 0.0:
            return np.zeros_like(d)
        return (sc.h_star_prime(nd) / nd) * d
    res = full_svd(d)
    q = res.sigma.size
    vals = sc.h_star_prime(res.sigma)
    return (res.U[:, :q] * vals) @ res.V[:, :q].T


def precondition(ref: ReferenceFn, d: ParamVec) -> ParamVec:
    """Apply the dual-space preconditioner: the conjugate gradient of phi.

    Coordinatewise for ANISO, radial for ISO, and acting on singular values
    for the spectral structures.  Odd and bounded: every output block stays
    strictly inside the block domain.
    """
    _require_finite(d)
    ents = ref.block_entries(d)
    return ParamVec(
        (_precondition_block(e, b) for e, b in zip(ents, d.blocks)),
        validate=False, copy=False,
    )


# -- primal values -----------------------------------------------------------


def _phi_block(e: BlockRef, x: np.ndarray) -> float:
    sc = e.scalar
    if e.structure is Structure.ANISO:
        return float(np.sum(sc.h(x)))
    if e.structure is Structure.ISO:
        return float(sc.h(math.sqrt(float(np.vdot(x, x)))))
    if e.structure is Structure.SPECTRAL_ISO:
        return float(sc.h(math.sqrt(float(np.vdot(x, x)))))
    sigma = full_svd(x).sigma
    return float(np.sum(sc.h(sigma)))


def phi(ref: ReferenceFn, x: ParamVec) -> float:
    """Value of the reference function; +inf outside its domain."""
    _require_finite(x)
    return sum(_phi_block(e, b) for e, b in zip(ref.block_entries(x), x.blocks))


def _phi_star_block(e: BlockRef, y: np.ndarray) -> float:
    sc = e.scalar
    if e.structure is Structure.ANISO:
        return float(np.sum(sc.h_star(y)))
    if e.structure is Structure.ISO or e.structure is Structure.SPECTRAL_ISO:
        return float(sc.h_star(math.sqrt(float(np.vdot(y, y)))))
    sigma = full_svd(y).sigma
    return float(np.sum(sc.h_star(sigma)))


def phi_star(ref: ReferenceFn, y: ParamVec) -> float:
    """Convex conjugate of phi; finite, nonnegative, even, zero at zero."""
    _require_finite(y)
    return sum(_phi_star_block(e, b) for e, b in zip(ref.block_entries(y), y.blocks))


# -- primal gradient ---------------------------------------------------------


def _grad_phi_block(e: BlockRef, x: np.ndarray) -> np.ndarray:
    sc = e.scalar
    limit = 1.0 - BOUNDARY_MARGIN
    if e.structure is Structure.ANISO:
        if np.abs(x).max() > limit:
            raise BoundaryError("coordinate too close to the domain boundary")
        return sc.h_prime(x)
    if e.structure is Structure.ISO or e.structure is Structure.SPECTRAL_ISO:
        nx = math.sqrt(float(np.vdot(x, x)))
        if nx > limit:
            raise BoundaryError("norm too close to the domain boundary")
        if nx == 0.0:
            return np.zeros_like(x)
        return (sc.h_prime(nx) / nx) * x
    res = full_svd(x)
    if res.sigma.size and res.sigma[0] > limit:
        raise BoundaryError("singular value too close to the domain boundary")
    q = res.sigma.size
    vals = sc.h_prime(res.sigma)
    return (res.U[:, :q] * vals) @ res.V[:, :q].T


def grad_phi(ref: ReferenceFn, x: ParamVec) -> ParamVec:
    """Gradient of phi, the inverse map of :func:`precondition`.

    Requires the input strictly inside the domain with margin 1e-12;
    otherwise raises :class:`BoundaryError`.
    """
    _require_finite(x)
    ents = ref.block_entries(x)
    return ParamVec(
        (_grad_phi_block(e, b) for e, b in zip(ents, x.blocks)),
        validate=False, copy=False,
    )


def bregman_dual(ref: ReferenceFn, a: ParamVec, b: ParamVec) -> float:
    """Bregman divergence of the conjugate: D_{phi*}(a, b).

    Nonnegative and zero exactly at a = b, by strict convexity of phi*.
    """
    diff = a - b
    return phi_star(ref, a) - phi_star(ref, b) - dot(precondition(ref, b), diff)
