import math

import numpy as np
import pytest
from scipy.special import ndtr

from ganland.data import (
    GaussianMixtureSpec,
    LatentSpec,
    SampleSet,
    mixture_component_index,
    read_samples_csv,
    sample_latent,
    sample_mixture,
    write_samples_csv,
)
from ganland.rng import _mix64_scalar, derive_seed, normals, uniforms


class TestRngStreams:
    def test_vectorized_matches_scalar_reference(self):
        # literal transcription of the documented splitmix64 recurrence
        GOLDEN = 0x9E3779B97F4A7C15
        mask = (1 << 64) - 1
        seed = 42

        def ref(i):
            bits = _mix64_scalar((seed + i * GOLDEN) & mask)
            return (bits >> 11) * (1.0 / (1 << 53))

        got = uniforms(seed, 16)
        want = np.array([ref(i) for i in range(1, 17)])
        assert np.array_equal(got, want)

    def test_offset_gives_identical_stream_suffix(self):
        full = uniforms(7, 100)
        tail = uniforms(7, 40, offset=60)
        assert np.array_equal(full[60:], tail)

    def test_normals_are_box_muller_of_uniform_pairs(self):
        u = uniforms(3, 8)
        z = normals(3, 8)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        assert np.array_equal(z[0::2], r * np.cos(2 * np.pi * u[1::2]))
        assert np.array_equal(z[1::2], r * np.sin(2 * np.pi * u[1::2]))

    def test_derive_seed_separates_domains(self):
        a = derive_seed(5, "real", 0)
        b = derive_seed(5, "real", 1)
        c = derive_seed(5, "fake", 0)
        assert len({a, b, c}) == 3


class TestMixtureSpec:
    def test_grid_min_distance_equals_spacing(self):
        spec = GaussianMixtureSpec(M=9, D=9.0)
        assert spec.min_center_distance() == 9.0

    def test_default_component_std(self):
        assert GaussianMixtureSpec(M=4, D=10.0).sigma == pytest.approx(0.5)

    def test_explicit_centers(self):
        centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
        spec = GaussianMixtureSpec(M=3, D=5.0, centers=centers)
        assert spec.min_center_distance() == 5.0

    def test_non_square_m_without_centers_rejected(self):
        with pytest.raises(ValueError):
            GaussianMixtureSpec(M=5, D=3.0)


class TestSampleMixture:
    def test_single_tight_mode_collapses_to_center(self):
        spec = GaussianMixtureSpec(M=1, D=1.0, component_std=1e-12)
        got = sample_mixture(spec, 3, seed=9)
        assert np.abs(got.points - 0.0).max() < 1e-9

    def test_component_counts_within_binomial_bound(self):
        spec = GaussianMixtureSpec(M=9, D=9.0)
        n = 90_000
        comp = mixture_component_index(spec, n, seed=17)
        counts = np.bincount(comp, minlength=9)
        p = 1.0 / 9.0
        slack = 3.0 * math.sqrt(n * p * (1 - p))
        assert np.abs(counts - n * p).max() <= slack

    def test_per_component_law(self):
        spec = GaussianMixtureSpec(M=4, D=8.0)
        n = 80_000
        samples = sample_mixture(spec, n, seed=3)
        comp = mixture_component_index(spec, n, seed=3)
        centers = spec.grid_centers()
        for c in range(4):
            cluster = samples.points[comp == c] - centers[c]
            assert np.abs(cluster.mean(axis=0)).max() < 4 * spec.sigma / math.sqrt(
                (comp == c).sum()
            ) * 2 + 0.01
            cov = np.cov(cluster, rowvar=False)
            assert np.abs(cov - spec.sigma**2 * np.eye(2)).max() < 0.01

    def test_deterministic_per_seed(self):
        spec = GaussianMixtureSpec(M=9, D=9.0)
        a = sample_mixture(spec, 100, seed=5)
        b = sample_mixture(spec, 100, seed=5)
        assert np.array_equal(a.points, b.points)


class TestSampleLatent:
    def test_moments(self):
        got = sample_latent(LatentSpec(2), 100_000, seed=11)
        assert np.abs(got.points.mean(axis=0)).max() < 0.02
        assert np.abs(got.points.var(axis=0) - 1.0).max() < 0.03

    def test_same_seed_identical(self):
        a = sample_latent(LatentSpec(3), 50, seed=2)
        b = sample_latent(LatentSpec(3), 50, seed=2)
        assert np.array_equal(a.points, b.points)

    def test_kolmogorov_smirnov_vs_normal_cdf(self):
        n = 10_000
        x = np.sort(sample_latent(LatentSpec(1), n, seed=23).points[:, 0])
        cdf = ndtr(x)
        upper = np.arange(1, n + 1) / n - cdf
        lower = cdf - np.arange(0, n) / n
        ks = max(upper.max(), lower.max())
        assert ks < 1.63 / math.sqrt(n)  # 99% critical value


class TestSampleSet:
    def test_rejects_nonfinite_and_empty(self):
        with pytest.raises(ValueError):
            SampleSet(np.array([[np.inf, 0.0]]), "real")
        with pytest.raises(ValueError):
            SampleSet(np.zeros((0, 2)), "real")
        with pytest.raises(ValueError):
            SampleSet(np.zeros((1, 2)), "synthetic")

    def test_csv_round_trip_exact(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(25, 2)) * 1e3
        original = SampleSet(pts, "generated", seed=1)
        path = tmp_path / "pts.csv"
        write_samples_csv(original, str(path))
        loaded = read_samples_csv(str(path), origin="generated")
        assert np.array_equal(loaded.points, original.points)
        header = path.read_text().splitlines()[0]
        assert header == "x0,x1"
