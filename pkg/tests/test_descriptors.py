import math

import numpy as np
import pytest

from driftgauge import (
    EmbeddingSet,
    MomentSummary,
    ProjectionBasis,
    SWDConfig,
    compute_delta,
    frechet_descriptor,
    hybrid_swd,
    mahalanobis_descriptor,
    moments,
    pca_directions,
    random_directions,
    sliced_w2,
    sliced_w2_per_slice,
    variance_log_ratios,
)
from driftgauge.errors import DimensionMismatch
from helpers import (
    exact_principal_directions,
    exact_w2_squared_1d,
    explained_variance_fraction,
    subspace_angle,
)


def es(rows):
    return EmbeddingSet(data=np.asarray(rows, dtype=np.float32))


def gaussian_set(n, d, seed, mean=0.0, std=1.0):
    rng = np.random.default_rng(seed)
    return EmbeddingSet(data=(mean + std * rng.standard_normal((n, d))).astype(np.float32))


class TestSWDConfig:
    def test_all_random_forbids_pca_slices(self):
        with pytest.raises(ValueError):
            SWDConfig(mode="all_random", k_pca=1, l_random=8)

    def test_all_random_needs_at_least_one_slice(self):
        with pytest.raises(ValueError):
            SWDConfig(mode="all_random", k_pca=0, l_random=0)

    def test_hybrid_needs_pca_slices(self):
        with pytest.raises(ValueError):
            SWDConfig(mode="hybrid", k_pca=0, l_random=8)

    def test_digest_binds_config_and_floor(self):
        a = SWDConfig(seed=1)
        assert a.digest(1e-8) != a.digest(1e-6)
        assert a.digest() != SWDConfig(seed=2).digest()
        assert a.digest() == SWDConfig(seed=1).digest()


class TestFrechet:
    def test_identity(self):
        ms = MomentSummary(mean=np.array([1.0, 2.0]), var=np.array([0.5, 2.0]), count=3)
        assert frechet_descriptor(ms, ms) == 0.0

    def test_mean_shift_only(self):
        a = MomentSummary(mean=np.zeros(2), var=np.ones(2), count=5)
        b = MomentSummary(mean=np.array([3.0, 4.0]), var=np.ones(2), count=5)
        assert frechet_descriptor(a, b) == pytest.approx(25.0)

    def test_scale_shift_only(self):
        a = MomentSummary(mean=np.zeros(2), var=np.ones(2), count=5)
        b = MomentSummary(mean=np.zeros(2), var=np.full(2, 9.0), count=5)
        assert frechet_descriptor(a, b) == pytest.approx(8.0)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = MomentSummary(mean=rng.standard_normal(6), var=rng.uniform(0.1, 2, 6), count=4)
        b = MomentSummary(mean=rng.standard_normal(6), var=rng.uniform(0.1, 2, 6), count=4)
        assert frechet_descriptor(a, b) == pytest.approx(frechet_descriptor(b, a))

    def test_dimension_mismatch(self):
        a = MomentSummary(mean=np.zeros(2), var=np.ones(2), count=1)
        b = MomentSummary(mean=np.zeros(3), var=np.ones(3), count=1)
        with pytest.raises(DimensionMismatch):
            frechet_descriptor(a, b)

    def test_variance_log_ratio_diagnostic(self):
        a = MomentSummary(mean=np.zeros(2), var=np.array([1.0, 4.0]), count=1)
        b = MomentSummary(mean=np.zeros(2), var=np.array([np.e, 4.0]), count=1)
        assert np.allclose(variance_log_ratios(a, b), [1.0, 0.0])


class TestMahalanobis:
    def test_equal_radii(self):
        ms = MomentSummary(mean=np.zeros(2), var=np.ones(2), count=1)
        mean_r, std_r = mahalanobis_descriptor(ms, es([[3.0, 4.0], [3.0, 4.0]]))
        assert mean_r == pytest.approx(5.0)
        assert std_r == pytest.approx(0.0)

    def test_target_at_source_mean(self):
        ms = MomentSummary(mean=np.array([2.0, -1.0]), var=np.ones(2), count=1)
        mean_r, std_r = mahalanobis_descriptor(ms, es([[2.0, -1.0]]))
        assert mean_r == pytest.approx(0.0) and std_r == pytest.approx(0.0)

    def test_chi_distribution_mean(self):
        # whitened radii of standard normals follow a chi distribution with
        # D degrees of freedom: E[r] = sqrt(2) * Gamma((D+1)/2) / Gamma(D/2)
        d = 16
        target = gaussian_set(10_000, d, seed=123)
        ms = MomentSummary(mean=np.zeros(d), var=np.ones(d), count=1)
        mean_r, _ = mahalanobis_descriptor(ms, target)
        exact = math.sqrt(2) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))
        assert mean_r == pytest.approx(exact, abs=0.05)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((40, 3)).astype(np.float32)
        ms = MomentSummary(mean=np.zeros(3), var=np.full(3, 2.0), count=1)
        a = mahalanobis_descriptor(ms, EmbeddingSet(data=data))
        b = mahalanobis_descriptor(ms, EmbeddingSet(data=data[rng.permutation(40)]))
        assert a == pytest.approx(b)


class TestRandomDirections:
    def test_unit_norms(self):
        basis = random_directions(3, 5, seed=0)
        assert np.allclose(np.linalg.norm(basis.directions, axis=1), 1.0, atol=1e-6)
        assert basis.provenance == ("random",) * 3

    def test_deterministic(self):
        a = random_directions(4, 7, seed=9)
        b = random_directions(4, 7, seed=9)
        assert np.array_equal(a.directions, b.directions)

    def test_one_dimensional(self):
        basis = random_directions(8, 1, seed=2)
        assert set(np.round(basis.directions.ravel(), 12)) <= {1.0, -1.0}


class TestPcaDirections:
    def test_line_data_recovers_direction(self):
        rng = np.random.default_rng(1)
        line = np.linspace(-2, 2, 60)[:, None] * np.array([[3.0, 4.0, 0.0]]) / 5.0
        data = EmbeddingSet(data=line.astype(np.float32))
        basis = pca_directions(data, 1, seed=4)
        exact = exact_principal_directions(data.data, 1)
        cosine = abs(float(basis.directions[0] @ exact[0]))
        assert cosine >= 0.999

    def test_isotropic_variance_fraction(self):
        data = gaussian_set(5000, 16, seed=11)
        basis = pca_directions(data, 2, seed=5)
        frac = explained_variance_fraction(data.data, basis.directions)
        assert frac == pytest.approx(2 / 16, abs=0.05)

    def test_exact_rank_subspace(self):
        rng = np.random.default_rng(2)
        u = rng.standard_normal((8, 2))
        v = rng.standard_normal((2, 4))
        data = EmbeddingSet(data=(u @ v).astype(np.float32))
        basis = pca_directions(data, 2, seed=6)
        exact = exact_principal_directions(data.data, 2)
        assert subspace_angle(basis.directions, exact) <= 1e-6

    def test_rank_deficient_padding(self):
        # rank-1 data after centering, k=2: one pca row plus one random pad
        line = np.outer(np.arange(10, dtype=np.float32), [1.0, 0.0, 0.0])
        basis = pca_directions(EmbeddingSet(data=line), 2, seed=7)
        assert basis.rank_deficient
        assert basis.provenance == ("pca", "random")
        assert np.allclose(np.linalg.norm(basis.directions, axis=1), 1.0, atol=1e-6)

    def test_orthonormal_rows(self):
        data = gaussian_set(500, 12, seed=13, std=2.0)
        basis = pca_directions(data, 5, seed=8)
        gram = basis.directions @ basis.directions.T
        assert np.allclose(gram, np.eye(5), atol=1e-8)

    def test_k_bounds(self):
        data = gaussian_set(10, 4, seed=0)
        with pytest.raises(ValueError):
            pca_directions(data, 5, seed=0)


class TestSlicedW2:
    def test_identical_sets_zero(self):
        a = gaussian_set(50, 4, seed=3)
        basis = random_directions(6, 4, seed=1)
        assert sliced_w2(a, a, basis) == 0.0

    def test_one_dimensional_pairing(self):
        a = es([[0.0], [2.0]])
        b = es([[1.0], [3.0]])
        basis = ProjectionBasis(directions=np.array([[1.0]]), provenance=("random",))
        assert sliced_w2(a, b, basis) == pytest.approx(1.0)

    def test_gaussian_closed_form_mean_shift(self):
        a = gaussian_set(20_000, 1, seed=21)
        b = gaussian_set(20_000, 1, seed=22, mean=3.0)
        basis = ProjectionBasis(directions=np.array([[-1.0]]), provenance=("random",))
        assert sliced_w2(a, b, basis) == pytest.approx(3.0, abs=0.05)

    def test_matches_assignment_oracle_equal_sizes(self):
        rng = np.random.default_rng(30)
        for _ in range(25):
            n = int(rng.integers(2, 65))
            d = int(rng.integers(1, 9))
            a = EmbeddingSet(data=rng.standard_normal((n, d)).astype(np.float32))
            b = EmbeddingSet(data=(rng.standard_normal((n, d)) + 0.5).astype(np.float32))
            basis = random_directions(3, d, seed=int(rng.integers(1 << 30)))
            per_slice = sliced_w2_per_slice(a, b, basis)
            for l in range(3):
                pa = a.data.astype(np.float64) @ basis.directions[l]
                pb = b.data.astype(np.float64) @ basis.directions[l]
                oracle = exact_w2_squared_1d(pa, pb)
                assert per_slice[l] == pytest.approx(oracle, rel=1e-6, abs=1e-12)

    def test_symmetric(self):
        a = gaussian_set(64, 5, seed=31)
        b = gaussian_set(64, 5, seed=32, mean=1.0)
        basis = random_directions(8, 5, seed=2)
        assert sliced_w2(a, b, basis) == pytest.approx(sliced_w2(b, a, basis))

    def test_translation_invariant(self):
        rng = np.random.default_rng(33)
        a = rng.standard_normal((40, 3))
        b = rng.standard_normal((40, 3)) * 1.5
        shift = rng.standard_normal(3) * 10
        basis = random_directions(5, 3, seed=3)
        before = sliced_w2(EmbeddingSet(data=a.astype(np.float32)),
                           EmbeddingSet(data=b.astype(np.float32)), basis)
        after = sliced_w2(EmbeddingSet(data=(a + shift).astype(np.float32)),
                          EmbeddingSet(data=(b + shift).astype(np.float32)), basis)
        assert after == pytest.approx(before, rel=1e-4)

    def test_negated_direction_same_per_slice(self):
        a = gaussian_set(30, 4, seed=34)
        b = gaussian_set(45, 4, seed=35, mean=0.7)
        d = random_directions(1, 4, seed=4).directions
        plus = ProjectionBasis(directions=d, provenance=("random",))
        minus = ProjectionBasis(directions=-d, provenance=("random",))
        va = sliced_w2_per_slice(a, b, plus)
        vb = sliced_w2_per_slice(a, b, minus)
        assert va[0] == pytest.approx(vb[0], rel=1e-9)

    def test_unequal_sizes_quantile_grid(self):
        # quantile alignment approaches the sorted pairing as sizes match
        a = gaussian_set(400, 1, seed=36)
        b = gaussian_set(500, 1, seed=37, mean=2.0)
        basis = ProjectionBasis(directions=np.array([[1.0]]), provenance=("random",))
        approx = sliced_w2(a, b, basis, quantiles=512)
        assert approx == pytest.approx(2.0, abs=0.15)

    def test_dimension_mismatch(self):
        a = gaussian_set(10, 3, seed=38)
        b = gaussian_set(10, 4, seed=39)
        basis = random_directions(2, 3, seed=5)
        with pytest.raises(DimensionMismatch):
            sliced_w2(a, b, basis)


class TestHybridSWD:
    def test_identical_sets_zero(self):
        a = gaussian_set(300, 8, seed=41)
        assert hybrid_swd(a, a, SWDConfig(seed=1)) == 0.0

    def test_all_random_equals_plain_sliced(self):
        a = gaussian_set(200, 6, seed=42)
        b = gaussian_set(250, 6, seed=43, mean=0.5)
        cfg = SWDConfig.all_random(12, seed=77)
        direct = sliced_w2(a, b, random_directions(12, 6, seed=77), cfg.quantiles)
        assert hybrid_swd(a, b, cfg) == pytest.approx(direct, rel=1e-12)

    def test_monotone_in_mean_shift(self):
        from scipy.stats import spearmanr

        src = gaussian_set(2000, 16, seed=44)
        values = []
        for i, delta in enumerate([0.0, 0.5, 1.0, 2.0, 4.0]):
            tgt = gaussian_set(2000, 16, seed=45 + i, mean=0.0)
            shifted = EmbeddingSet(
                data=(tgt.data + np.eye(16, dtype=np.float32)[0] * delta)
            )
            values.append(hybrid_swd(src, shifted, SWDConfig(seed=9)))
        rho = spearmanr(values, [0.0, 0.5, 1.0, 2.0, 4.0]).statistic
        assert rho == pytest.approx(1.0)

    def test_deterministic(self):
        a = gaussian_set(500, 8, seed=46)
        b = gaussian_set(700, 8, seed=47, mean=1.0)
        cfg = SWDConfig(seed=123)
        assert hybrid_swd(a, b, cfg) == hybrid_swd(a, b, cfg)

    def test_small_joint_cloud_pads_k(self):
        # fewer joint rows than k_pca: basis is topped up with random slices
        a = es([[1.0, 2.0, 3.0], [2.0, 1.0, 0.0]])
        b = es([[0.0, 0.0, 1.0], [5.0, 1.0, 2.0]])
        value = hybrid_swd(a, b, SWDConfig(k_pca=8, l_random=2, seed=3))
        assert np.isfinite(value) and value >= 0


class TestComputeDelta:
    def test_identity_components(self):
        a = gaussian_set(400, 8, seed=51)
        delta = compute_delta(a, a, SWDConfig(seed=2))
        assert delta.sd_f == pytest.approx(0.0, abs=1e-9)
        assert delta.sd_sw == pytest.approx(0.0, abs=1e-9)
        assert delta.euclid_mean == pytest.approx(0.0, abs=1e-9)
        ms = moments(a)
        self_radius, _ = mahalanobis_descriptor(ms, a)
        assert delta.sd_m_mean == pytest.approx(self_radius)

    def test_swap_symmetry_pattern(self):
        a = gaussian_set(300, 6, seed=52)
        b = gaussian_set(300, 6, seed=53, mean=1.0, std=2.0)
        cfg = SWDConfig(seed=3)
        ab = compute_delta(a, b, cfg)
        ba = compute_delta(b, a, cfg)
        assert ab.sd_f == pytest.approx(ba.sd_f, rel=1e-9)
        assert ab.sd_sw == pytest.approx(ba.sd_sw, rel=1e-9)
        assert ab.euclid_mean == pytest.approx(ba.euclid_mean, rel=1e-9)
        assert ab.sd_m_mean != pytest.approx(ba.sd_m_mean, rel=1e-3)

    def test_known_mean_shift(self):
        a = gaussian_set(40_000, 2, seed=54)
        b = EmbeddingSet(data=(gaussian_set(40_000, 2, seed=55).data + np.array([3.0, 4.0], dtype=np.float32)))
        delta = compute_delta(a, b, SWDConfig(seed=4))
        assert delta.sd_f == pytest.approx(25.0, abs=0.5)
        assert delta.euclid_mean == pytest.approx(5.0, abs=0.05)

    def test_components_nonnegative_finite_random_pairs(self):
        rng = np.random.default_rng(56)
        for trial in range(10):
            n = int(rng.integers(5, 200))
            m = int(rng.integers(5, 200))
            d = int(rng.integers(2, 24))
            a = EmbeddingSet(data=(rng.standard_normal((n, d)) * rng.uniform(0.1, 5)).astype(np.float32))
            b = EmbeddingSet(data=(rng.standard_normal((m, d)) * rng.uniform(0.1, 5) + rng.standard_normal(d)).astype(np.float32))
            delta = compute_delta(a, b, SWDConfig(k_pca=2, l_random=4, seed=trial))
            feats = delta.features()
            assert np.all(np.isfinite(feats)) and np.all(feats >= 0)

    def test_digest_recorded(self):
        a = gaussian_set(50, 3, seed=57)
        cfg = SWDConfig(k_pca=2, l_random=2, seed=5)
        delta = compute_delta(a, a, cfg, variance_floor=1e-6)
        assert delta.config_digest == cfg.digest(1e-6)

    def test_serialization_round_trip(self):
        from driftgauge import ShiftDescriptor

        a = gaussian_set(60, 4, seed=58)
        b = gaussian_set(80, 4, seed=59, mean=0.3)
        delta = compute_delta(a, b, SWDConfig(k_pca=2, l_random=2, seed=6))
        back = ShiftDescriptor.from_dict(delta.to_dict())
        assert back == delta
