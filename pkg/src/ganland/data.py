"""Synthetic disconnected targets: 2-D Gaussian mixtures on a grid, plus
the standard-normal latent sampler.  All randomness flows through the
counter-based streams in :mod:`ganland.rng`, so every sample set is a pure
function of its seed.

Stream layout for ``sample_mixture(spec, n, seed)``: component indices
come from ``derive_seed(seed, "component")`` as ``floor(u_i * M)`` over n
uniforms, and offsets from ``derive_seed(seed, "offset")`` as 2n normals
(x then y per point) scaled by the component standard deviation.
``sample_latent`` draws ``n * d`` normals (row-major) from the seed
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_seed, normals, uniforms


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """M equally weighted Gaussian components with pairwise spacing >= D.

    For perfect-square M the centers sit on a sqrt(M) x sqrt(M) grid with
    spacing D, centered at the origin; an explicit center list overrides
    the grid.  component_std defaults to 0.05 * D, which keeps modes
    visually disjoint at the spacings studied here.
    """

    M: int
    D: float
    component_std: float | None = None
    centers: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.D <= 0:
            raise ValueError("D must be > 0")
        if self.centers is None:
            side = math.isqrt(self.M)
            if side * side != self.M:
                raise ValueError(
                    "M must be a perfect square unless centers are given"
                )
        else:
            c = np.asarray(self.centers, dtype=np.float64)
            if c.shape != (self.M, 2):
                raise ValueError("centers must have shape (M, 2)")
        if self.sigma <= 0:
            raise ValueError("component_std must be > 0")

    @property
    def sigma(self) -> float:
        return 0.05 * self.D if self.component_std is None else self.component_std

    def grid_centers(self) -> np.ndarray:
        if self.centers is not None:
            return np.asarray(self.centers, dtype=np.float64)
        side = math.isqrt(self.M)
        coords = (np.arange(side) - (side - 1) / 2.0) * self.D
        xx, yy = np.meshgrid(coords, coords, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def min_center_distance(self) -> float:
        c = self.grid_centers()
        if len(c) == 1:
            return math.inf
        d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
        return float(d[~np.eye(len(c), dtype=bool)].min())


@dataclass(frozen=True)
class LatentSpec:
    """Standard multivariate Gaussian latent in d dimensions."""

    d: int = 2

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("latent dimension must be >= 1")


@dataclass
class SampleSet:
    """An n x dim point matrix with provenance tag and the seed that made it."""

    points: np.ndarray
    origin: str  # "real" or "generated"
    seed: int = 0

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty n x dim matrix")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        if self.origin not in ("real", "generated"):
            raise ValueError("origin must be 'real' or 'generated'")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_mixture(spec: GaussianMixtureSpec, n: int, seed: int) -> SampleSet:
    """n points from the mixture: uniform component, N(center, sigma^2 I)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    centers = spec.grid_centers()
    u = uniforms(derive_seed(seed, "component"), n)
    comp = np.minimum((u * spec.M).astype(np.int64), spec.M - 1)
    offsets = normals(derive_seed(seed, "offset"), 2 * n).reshape(n, 2)
    pts = centers[comp] + spec.sigma * offsets
    return SampleSet(pts, "real", seed)


def mixture_component_index(spec: GaussianMixtureSpec, n: int, seed: int) -> np.ndarray:
    """The component assignment used by sample_mixture for the same call."""
    u = uniforms(derive_seed(seed, "component"), n)
    return np.minimum((u * spec.M).astype(np.int64), spec.M - 1)


def sample_latent(spec: LatentSpec, n: int, seed: int) -> SampleSet:
    """n i.i.d. N(0, I_d) latent points."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = normals(seed, n * spec.d).reshape(n, spec.d)
    return SampleSet(pts, "generated", seed)


# ---------------------------------------------------------------------------
# CSV interchange: header x0,...,x{dim-1}, 17 significant digits


def write_samples_csv(samples: SampleSet, path: str) -> None:
    dim = samples.dim
    lines = [",".join(f"x{i}" for i in range(dim))]
    for row in samples.points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    from .autodiff import _atomic_write

    _atomic_write(path, "\n".join(lines) + "\n")


def read_samples_csv(path: str, origin: str = "real") -> SampleSet:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not all(h == f"x{i}" for i, h in enumerate(header)):
            raise ValueError(f"{path}: expected header x0,...,x{{dim-1}}")
        pts = np.loadtxt(fh, delimiter=",", ndmin=2)
    return SampleSet(pts, origin)
