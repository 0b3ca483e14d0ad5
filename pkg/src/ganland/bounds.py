"""Closed-form precision bounds for generators that push a standard
Gaussian latent onto a target supported by M components at pairwise
distance D, together with the special functions they need.

All bounds are driven by the latent-space gap epsilon = D / (2 L), where
L bounds the generator's Lipschitz constant.  Values can exceed [0, 1]
when a bound is vacuous, so evaluators return both the raw number and a
clamped copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_E = math.exp(-1.0)


class DomainError(ValueError):
    """Argument outside a function's mathematical domain."""


# ---------------------------------------------------------------------------
# Special functions


def phi(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _phi_density(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT_2PI


# Acklam's rational approximation of the normal quantile (seed for the
# Newton polish below; |error| < 1.2e-9 over (0, 1)).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _phi_inv_seed(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q
                + _C[5]) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q
                 + _C[5]) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r
            + _A[5]) * q / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r
                             + _B[4]) * r + 1.0)


def phi_inv(p: float) -> float:
    """Normal quantile: rational seed plus one Newton step on phi.

    For p > 1/2 the quantile is computed as -phi_inv(1 - p): 1 - p is an
    exact float there, and the erfc-based CDF keeps full relative
    precision in the lower tail where the Newton residual is formed.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"phi_inv requires p in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -phi_inv(1.0 - p)
    x = _phi_inv_seed(p)
    dens = _phi_density(x)
    if dens > 0.0:
        x -= (phi(x) - p) / dens
    return x


def lambert_w0(x: float) -> float:
    """Principal Lambert W branch by Halley iteration, x >= -1/e."""
    if x < -INV_E:
        raise DomainError(f"lambert_w0 requires x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    # initial guess: branch-point series near -1/e, w log(x) beyond e
    if x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
        if p < 1e-3:  # series already below 1e-12 residual; Halley is
            return w  # singular at the branch point itself
    elif x < math.e:
        w = x / math.e if x < 0 else x / (1.0 + x) * (1.0 + math.log1p(x))
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            return w
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-16 * max(1.0, abs(w)):
            return w
    return w


# ---------------------------------------------------------------------------
# Bound inputs


@dataclass(frozen=True)
class BoundInputs:
    """Shared bound arguments; epsilon = D / (2 L) is derived."""

    D: float
    L: float
    M: int
    beta_bar: float = 1.0

    def __post_init__(self) -> None:
        if self.D <= 0 or self.L <= 0:
            raise DomainError("D and L must be > 0")
        if self.M < 2:
            raise DomainError("M must be >= 2")
        if not 0.0 < self.beta_bar <= 1.0:
            raise DomainError("beta_bar must be in (0, 1]")
        if self.beta_bar * self.M <= 1.0:
            raise DomainError("beta_bar * M must exceed 1")

    @property
    def epsilon(self) -> float:
        return self.D / (2.0 * self.L)


@dataclass(frozen=True)
class PartitionWeights:
    """Component measures w_k in (0, 1/4] with total at most 1."""

    w: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(not 0.0 < wk <= 0.25 for wk in self.w):
            raise DomainError("every weight must lie in (0, 1/4]")
        if math.fsum(self.w) > 1.0 + 1e-12:
            raise DomainError("weights must sum to at most 1")

    @property
    def w_complement(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.w))

    @property
    def w_max(self) -> float:
        return max(self.w)

    @classmethod
    def equal(cls, k: int) -> "PartitionWeights":
        return cls(tuple([1.0 / k] * k))


@dataclass(frozen=True)
class BoundValue:
    raw: float

    @property
    def clamped(self) -> float:
        return min(1.0, max(0.0, self.raw))


# ---------------------------------------------------------------------------
# Two-mode bound (implicit and product-log forms)


def _two_mode_residual(alpha: float, epsilon: float) -> float:
    if alpha <= 0.0:
        return -1.0
    if alpha >= 1.0:
        return 2.0 * epsilon / SQRT_2PI
    gap = (2.0 * epsilon / SQRT_2PI) * math.exp(-0.5 * phi_inv(alpha / 2.0) ** 2)
    return alpha + gap - 1.0


def thm2_bound(D: float, L: float) -> float:
    """Supremum of alpha with alpha + (D / (sqrt(2 pi) L)) *
    exp(-phi_inv(alpha/2)^2 / 2) <= 1, by bisection on the increasing
    residual.  The returned value satisfies the inequality; value + 1e-9
    does not (unless the bound is the trivial 1)."""
    if D <= 0 or L <= 0:
        raise DomainError("D and L must be > 0")
    eps = D / (2.0 * L)
    if _two_mode_residual(1.0, eps) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _two_mode_residual(mid, eps) <= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def thm2_bound_lambert(D: float, L: float) -> float:
    """Product-log form 1 - sqrt(2/pi) W(eps^2); a valid relaxation of the
    implicit bound only in its high-precision regime (alpha >= 3/4)."""
    if D <= 0 or L <= 0:
        raise DomainError("D and L must be > 0")
    eps = D / (2.0 * L)
    return 1.0 - math.sqrt(2.0 / math.pi) * lambert_w0(eps * eps)


# ---------------------------------------------------------------------------
# M-mode bounds


def _boundary_factor(epsilon: float, x: float) -> float:
    return (1.0 + x * x) / (x * x) * math.exp(-0.5 * epsilon * epsilon) * math.exp(
        -epsilon * x
    )


def thm3_bound(inputs: BoundInputs) -> BoundValue:
    """Equal-measure M-mode precision bound
    (1 + x^2)/x^2 * exp(-eps^2/2) * exp(-eps x), x = phi_inv(1 - 1/(beta M))."""
    bm = inputs.beta_bar * inputs.M
    if bm <= 2.0:
        raise DomainError(
            f"beta_bar * M = {bm} <= 2: the quantile x = phi_inv(1 - 1/(beta_bar M)) "
            "must be positive"
        )
    x = phi_inv(1.0 - 1.0 / bm)
    return BoundValue(_boundary_factor(inputs.epsilon, x))


def thm3_bound_general(inputs: BoundInputs, weights: PartitionWeights) -> BoundValue:
    """Unequal-measure variant: (1 + x^2)/x^2 e^{-eps^2/2} e^{-eps x} - w_c
    with x = phi_inv(1 - max(w_c, w_max))."""
    top = max(weights.w_complement, weights.w_max)
    if top >= 0.5:
        raise DomainError(
            f"max(w_complement, w_max) = {top} >= 1/2 makes the quantile nonpositive"
        )
    x = phi_inv(1.0 - top)
    return BoundValue(_boundary_factor(inputs.epsilon, x) - weights.w_complement)


def thm3_asymptotic(inputs: BoundInputs) -> BoundValue:
    """Large-M limit exp(-eps^2/2) exp(-eps sqrt(2 log(beta M)))."""
    bm = inputs.beta_bar * inputs.M
    if bm <= 1.0:
        raise DomainError("beta_bar * M must exceed 1")
    eps = inputs.epsilon
    return BoundValue(
        math.exp(-0.5 * eps * eps) * math.exp(-eps * math.sqrt(2.0 * math.log(bm)))
    )


def partition_boundary_lower(epsilon: float, weights: PartitionWeights) -> BoundValue:
    """Lower bound on the Gaussian measure of the union of inner
    epsilon-boundaries of a partition: 1 - (1+x^2)/x^2 e^{-eps^2/2} e^{-eps x},
    x = phi_inv(1 - max_k w_k).  Can be negative (vacuous) for small eps;
    the clamped view floors it at 0."""
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    k = len(weights.w)
    total = math.fsum(weights.w)
    if k < 4 or abs(total - 1.0) > 1e-12:
        raise DomainError(
            "partition_boundary_lower requires K >= 4 and w_k in (0, 1/4] "
            f"summing to 1 (got K={k}, sum={total})"
        )
    x = phi_inv(1.0 - weights.w_max)
    return BoundValue(1.0 - _boundary_factor(epsilon, x))


def phi_inv_lower_crudeman(k: float) -> float:
    """Explicit lower bound on phi_inv(1 - 1/K) for K >= 8:
    sqrt(2 log(K (q^2 - 1) / (sqrt(2 pi) q^3))) with q = sqrt(2 log(sqrt(2 pi) K))."""
    if k < 8:
        raise DomainError(f"the bound needs K >= 8, got {k}")
    q = math.sqrt(2.0 * math.log(SQRT_2PI * k))
    arg = k * (q * q - 1.0) / (SQRT_2PI * q ** 3)
    return math.sqrt(2.0 * math.log(arg))


def heatmap_grid(
    m_list: list[int], d_list: list[float], L: float, beta_bar: float = 1.0
) -> list[tuple[int, float, float]]:
    """thm3_bound (clamped) over an (M, D) grid at fixed L and recall."""
    rows = []
    for m in m_list:
        for d in d_list:
            value = thm3_bound(BoundInputs(D=d, L=L, M=m, beta_bar=beta_bar))
            rows.append((m, d, value.clamped))
    return rows
