"""Point-set quality metrics over raw Euclidean coordinates.

The precision/recall estimator is the k-NN ball construction: a candidate
point counts as precise when it falls inside the union of closed balls
centered at reference points with radii equal to each center's k-th
nearest neighbor distance within its own set.  Everything here is exact
(no approximate neighbor search); distance matrices are produced in row
blocks so memory stays bounded, and every distance is computed as
sqrt(sum((a - b)^2)) so a scalar-loop oracle reproduces the values bit
for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import ContractError, Mlp, forward
from .data import SampleSet
from .jfn import jfn_exact_batch
from .rng import derive_seed, uniforms

_BLOCK = 512


def _dist_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def knn_radii(points: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor in the set,
    the query point itself excluded."""
    n = points.shape[0]
    if not 1 <= k <= n - 1:
        raise ContractError(f"k={k} out of range for a set of {n} points")
    radii = np.empty(n)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        d = _dist_block(points[lo:hi], points)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        radii[lo:hi] = np.partition(d, k - 1, axis=1)[:, k - 1]
    return radii


def covered_flags(
    queries: np.ndarray, refs: np.ndarray, ref_radii: np.ndarray
) -> np.ndarray:
    """True where a query lies in some closed ball around a reference."""
    n = queries.shape[0]
    flags = np.empty(n, dtype=bool)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        d = _dist_block(queries[lo:hi], refs)
        flags[lo:hi] = (d <= ref_radii).any(axis=1)
    return flags


@dataclass
class PrReport:
    precision: float
    recall: float
    k: int
    n_x: int
    n_y: int
    per_point_precision: np.ndarray
    per_point_recall: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "k": self.k,
            "n_x": self.n_x,
            "n_y": self.n_y,
        }


def improved_pr(d_x: SampleSet, d_y: SampleSet, k: int) -> PrReport:
    """k-NN support precision/recall of generated set d_x against real d_y.

    precision: fraction of d_x inside the k-NN ball union over d_y;
    recall: fraction of d_y inside the k-NN ball union over d_x.
    """
    x, y = d_x.points, d_y.points
    if x.shape[1] != y.shape[1]:
        raise ContractError("point sets must share a dimension")
    if not 1 <= k < min(len(x), len(y)):
        raise ContractError(f"k={k} must satisfy 1 <= k < min(n_x, n_y)")
    y_radii = knn_radii(y, k)
    x_radii = knn_radii(x, k)
    pp = covered_flags(x, y, y_radii)
    pr = covered_flags(y, x, x_radii)
    return PrReport(
        precision=float(pp.mean()),
        recall=float(pr.mean()),
        k=k,
        n_x=len(x),
        n_y=len(y),
        per_point_precision=pp,
        per_point_recall=pr,
    )


@dataclass
class MarginalCurve:
    kept_ratios: np.ndarray
    cumulative_precision: np.ndarray
    marginal_precision: np.ndarray
    merged: np.ndarray  # True where a ratio added no new points

    def rows(self) -> list[tuple[float, float, float, int]]:
        return [
            (float(r), float(m), float(c), int(f))
            for r, m, c, f in zip(
                self.kept_ratios,
                self.marginal_precision,
                self.cumulative_precision,
                self.merged,
            )
        ]


def marginal_precision_curve(
    gen: Mlp,
    real: SampleSet,
    latents: SampleSet,
    ratios: Sequence[float],
    k: int,
) -> MarginalCurve:
    """Precision of each newly admitted JFN bucket as the keep ratio grows.

    Generated points are ranked by exact JFN ascending (ties by latent
    index); bucket i holds the ranks between consecutive ratios.  Since a
    generated point's precision flag only depends on the real set, flags
    are computed once and averaged per bucket.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.ndim != 1 or len(ratios) == 0:
        raise ContractError("ratios must be a nonempty 1-D grid")
    if not ((ratios > 0).all() and (ratios <= 1).all()):
        raise ContractError("ratios must lie in (0, 1]")
    if not (np.diff(ratios) > 0).all():
        raise ContractError("ratios must be strictly increasing")
    fake = forward(gen, latents.points)
    values = jfn_exact_batch(gen, latents.points)
    order = np.argsort(values, kind="stable")
    y_radii = knn_radii(real.points, k)
    flags = covered_flags(fake[order], real.points, y_radii).astype(np.float64)

    n = len(flags)
    cuts = np.ceil(ratios * n).astype(int)
    cumulative = np.empty(len(ratios))
    marginal = np.empty(len(ratios))
    merged = np.zeros(len(ratios), dtype=bool)
    prefix = np.concatenate([[0.0], np.cumsum(flags)])
    prev = 0
    for i, c in enumerate(cuts):
        cumulative[i] = prefix[c] / c
        if c == prev:
            marginal[i] = marginal[i - 1]
            merged[i] = True
        else:
            marginal[i] = (prefix[c] - prefix[prev]) / (c - prev)
            prev = c
    return MarginalCurve(ratios, cumulative, marginal, merged)


def hausdorff(a: SampleSet, b: SampleSet) -> float:
    """max(sup_a inf_b, sup_b inf_a) of pairwise Euclidean distances."""
    pa, pb = a.points, b.points
    if pa.shape[1] != pb.shape[1]:
        raise ContractError("point sets must share a dimension")

    def directed(p: np.ndarray, q: np.ndarray) -> float:
        worst = 0.0
        for lo in range(0, len(p), _BLOCK):
            d = _dist_block(p[lo : lo + _BLOCK], q)
            worst = max(worst, float(d.min(axis=1).max()))
        return worst

    return max(directed(pa, pb), directed(pb, pa))


def _psd_sqrt(mat: np.ndarray, tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -tol:
        raise ValueError(
            f"matrix not PSD within tolerance {tol}: min eigenvalue {vals.min()}"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_gaussian(a: SampleSet, b: SampleSet, tol: float = 1e-8) -> float:
    """Frechet distance between Gaussian fits of the two sets:
    ||m_a - m_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    pa, pb = a.points, b.points
    dim = pa.shape[1]
    if pb.shape[1] != dim:
        raise ContractError("point sets must share a dimension")
    if len(pa) < dim + 1 or len(pb) < dim + 1:
        raise ContractError("need at least dim + 1 points per set")
    ma, mb = pa.mean(axis=0), pb.mean(axis=0)
    sa = np.cov(pa, rowvar=False)
    sb = np.cov(pb, rowvar=False)
    sa, sb = np.atleast_2d(sa), np.atleast_2d(sb)
    root_b = _psd_sqrt((sb + sb.T) / 2.0, tol)
    inner = root_b @ sa @ root_b
    cross = _psd_sqrt((inner + inner.T) / 2.0, tol)
    diff = ma - mb
    return float(diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross))


# ---------------------------------------------------------------------------
# Support-overlap convergence study


def default_k_rule(n: int) -> int:
    """k = ceil(log(n)^1.5): grows faster than log n, slower than n."""
    return max(1, math.ceil(math.log(n) ** 1.5))


@dataclass(frozen=True)
class UniformOverlapPair:
    """1-D uniforms U[0,1] vs U[offset, offset+1] with known support overlap."""

    offset: float
    name: str = ""

    @property
    def alpha_true(self) -> float:
        return float(np.clip(1.0 - abs(self.offset), 0.0, 1.0))

    @property
    def beta_true(self) -> float:
        return self.alpha_true

    def sample_x(self, n: int, seed: int) -> np.ndarray:
        return uniforms(derive_seed(seed, "overlap-x"), n)[:, None]

    def sample_y(self, n: int, seed: int) -> np.ndarray:
        return self.offset + uniforms(derive_seed(seed, "overlap-y"), n)[:, None]


@dataclass
class ConvergenceRow:
    name: str
    n: int
    k: int
    alpha: float
    alpha_true: float
    abs_err: float
    beta: float
    beta_true: float


def pr_convergence_experiment(
    families: Sequence[UniformOverlapPair],
    n_grid: Sequence[int],
    k_rule: Callable[[int], int] = default_k_rule,
    seeds: int = 1,
    base_seed: int = 0,
) -> list[ConvergenceRow]:
    """Measure |alpha_k^n - alpha_true| for distributions with known
    support overlap, averaging the estimate over independent seeds."""
    rows = []
    for fam in families:
        for n in n_grid:
            k = k_rule(n)
            alphas, betas = [], []
            for s in range(seeds):
                seed = derive_seed(base_seed, fam.name or "pair", n, s)
                x = SampleSet(fam.sample_x(n, seed), "generated", seed)
                y = SampleSet(fam.sample_y(n, seed), "real", seed)
                report = improved_pr(x, y, k)
                alphas.append(report.precision)
                betas.append(report.recall)
            alpha = float(np.mean(alphas))
            rows.append(
                ConvergenceRow(
                    name=fam.name or f"offset={fam.offset}",
                    n=n,
                    k=k,
                    alpha=alpha,
                    alpha_true=fam.alpha_true,
                    abs_err=abs(alpha - fam.alpha_true),
                    beta=float(np.mean(betas)),
                    beta_true=fam.beta_true,
                )
            )
    return rows
