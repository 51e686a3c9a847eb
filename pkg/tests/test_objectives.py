import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from master_style.features import FeatureMap
from master_style.objectives import (
    GAMMAS,
    LossWeights,
    content_loss,
    cosine,
    distortion_demo,
    is_monotone_decreasing,
    similarity_metric,
    style_loss,
    total_loss,
)
from master_style.tensor import Tensor

from oracles import brute_similarity


def pyr(arrays: dict) -> dict:
    return {k: FeatureMap(Tensor(np.asarray(v, dtype=float))) for k, v in arrays.items()}


def random_pyr(rng, batch=2, shapes=None):
    shapes = shapes or {2: (6, 3), 3: (5, 4), 4: (4, 2)}
    return {k: rng.normal(size=(batch, n, c)) for k, (n, c) in shapes.items()}


def brute_content(fc: dict, fcs: dict, eps=1e-5) -> float:
    total = 0.0
    for x in fc:
        norms = []
        for a, b in zip(fc[x], fcs[x]):
            ia = (a - a.mean(0)) / np.sqrt(a.var(0) + eps)
            ib = (b - b.mean(0)) / np.sqrt(b.var(0) + eps)
            norms.append(math.sqrt(float(((ia - ib) ** 2).sum())))
        total += sum(norms) / len(norms)
    return total


class TestContentLoss:
    def test_identical_is_zero(self):
        p = random_pyr(np.random.default_rng(0))
        assert content_loss(pyr(p), pyr(p)).item() == 0.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        a, b = random_pyr(rng), random_pyr(rng)
        assert content_loss(pyr(a), pyr(b)).item() == pytest.approx(brute_content(a, b), rel=1e-12)

    def test_per_channel_affine_invariance(self):
        rng = np.random.default_rng(2)
        a, b = random_pyr(rng), random_pyr(rng)
        scaled = {k: v * rng.uniform(0.5, 3.0, size=v.shape[-1]) + rng.normal(size=v.shape[-1]) for k, v in a.items()}
        base = content_loss(pyr(a), pyr(b)).item()
        assert content_loss(pyr(scaled), pyr(b)).item() == pytest.approx(base, rel=1e-4)

    def test_degenerate_level_contributes_zero(self):
        assert content_loss(pyr({2: [[[3.0]]]}), pyr({2: [[[-1.0]]]})).item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            content_loss(pyr({2: np.zeros((1, 3, 2))}), pyr({2: np.zeros((1, 4, 2))}))


class TestStyleLoss:
    def test_identical_is_zero(self):
        p = random_pyr(np.random.default_rng(3))
        assert style_loss(pyr(p), pyr(p)).item() == 0.0

    def test_hand_case(self):
        fs = {2: [[[-1.0], [1.0]]]}  # mean 0, std 1
        fcs = {2: [[[0.0], [2.0]]]}  # mean 1, std 1
        assert style_loss(pyr(fs), pyr(fcs)).item() == 1.0

    def test_constant_image_crops(self):
        const = np.full((1, 16, 3), 0.4)
        crop = np.full((1, 4, 3), 0.4)
        # only rounding in the token means separates the two
        assert style_loss(pyr({2: const}), pyr({2: crop})).item() < 1e-15

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_token_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_pyr(rng, batch=1), random_pyr(rng, batch=1)
        perm = {k: v[:, rng.permutation(v.shape[1])] for k, v in a.items()}
        np.testing.assert_allclose(style_loss(pyr(perm), pyr(b)).item(), style_loss(pyr(a), pyr(b)).item(),
                                   rtol=1e-12)

    def test_style_batch_broadcasts(self):
        rng = np.random.default_rng(4)
        s, c = random_pyr(rng, batch=1), random_pyr(rng, batch=3)
        full = style_loss(pyr(s), pyr(c)).item()
        parts = [style_loss(pyr(s), pyr({k: v[i : i + 1] for k, v in c.items()})).item() for i in range(3)]
        assert full == pytest.approx(np.mean(parts), rel=1e-12)


class TestTotalLoss:
    def test_default_weight(self):
        assert total_loss(2.0, 0.5) == 7.0

    def test_zero_weight(self):
        assert total_loss(2.0, 0.5, LossWeights(0.0)) == 2.0

    def test_unit_weight_zero_style(self):
        assert total_loss(3.0, 0.0, LossWeights(1.0)) == 3.0

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            LossWeights(-1.0)


class TestSimilarityMetric:
    def test_identical_is_zero(self):
        p = random_pyr(np.random.default_rng(5))
        assert similarity_metric(pyr(p), pyr(p)).item() == 0.0

    def test_orthogonal_vs_parallel_two_tokens(self):
        c = {3: [[[1.0, 0.0], [0.0, 1.0]]], 4: [[[1.0, 0.0], [0.0, 1.0]]]}
        cs = {3: [[[1.0, 1.0], [2.0, 2.0]]], 4: [[[1.0, 0.0], [0.0, 1.0]]]}
        c_np = {k: np.array(v) for k, v in c.items()}
        cs_np = {k: np.array(v) for k, v in cs.items()}
        got = similarity_metric(pyr(c), pyr(cs)).item()
        assert got == pytest.approx(brute_similarity(c_np, cs_np), abs=1e-10)
        assert got > 0

    def test_matches_brute_force_on_200_small_instances(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(200):
            shapes = {x: (int(rng.integers(1, 5)), int(rng.integers(1, 4))) for x in (3, 4)}
            a, b = random_pyr(rng, batch=int(rng.integers(1, 3)), shapes=shapes), None
            b = {k: rng.normal(size=v.shape) for k, v in a.items()}
            worst = max(worst, abs(similarity_metric(pyr(a), pyr(b)).item() - brute_similarity(a, b)))
        assert worst < 1e-10

    def test_zero_rows_have_unit_distance(self):
        c = {3: np.array([[[0.0, 0.0], [1.0, 2.0], [0.0, 0.0]]]), 4: np.array([[[0.0], [3.0]]])}
        cs = {3: np.array([[[1.0, -1.0], [0.5, 2.0], [2.0, 0.0]]]), 4: np.array([[[-1.0], [0.0]]])}
        got = similarity_metric(pyr(c), pyr(cs)).item()
        assert got == pytest.approx(brute_similarity(c, cs), abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_joint_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        shapes = {3: (5, 3), 4: (4, 3)}
        a, b = random_pyr(rng, 1, shapes), random_pyr(rng, 1, shapes)
        perms = {k: rng.permutation(v.shape[1]) for k, v in a.items()}
        pa = {k: v[:, perms[k]] for k, v in a.items()}
        pb = {k: v[:, perms[k]] for k, v in b.items()}
        np.testing.assert_allclose(similarity_metric(pyr(pa), pyr(pb)).item(),
                                   similarity_metric(pyr(a), pyr(b)).item(), rtol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_all_losses_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a, b = pyr(random_pyr(rng)), pyr(random_pyr(rng))
        assert content_loss(a, b).item() >= 0
        assert style_loss(a, b).item() >= 0
        assert similarity_metric(a, b).item() >= 0


class TestDistortionDemo:
    def test_before(self):
        assert abs(distortion_demo().cos_before - 0.733) <= 1e-3

    def test_after_residual(self):
        report = distortion_demo()
        assert report.cos_after_residual >= 0.998
        assert report.cos_after_attention >= 0.998
        assert min(report.attention_to_s1) > 0.99

    def test_scaled_sequence_decreases_toward_original(self):
        report = distortion_demo()
        assert report.gammas == list(GAMMAS)
        assert is_monotone_decreasing(report.cos_after_scaled)
        assert all(c > report.cos_before for c in report.cos_after_scaled)
        assert report.cos_after_scaled[-1] - report.cos_before < 0.02

    def test_scaled_values_by_direct_computation(self):
        c1, c2, s1 = np.array([0.5, 1.0]), np.array([4.0, 1.5]), np.array([3.5, 0.0])
        expected = [float((g * c1 + s1) @ (g * c2 + s1) / np.linalg.norm(g * c1 + s1) / np.linalg.norm(g * c2 + s1))
                    for g in GAMMAS]
        np.testing.assert_allclose(distortion_demo().cos_after_scaled, expected, rtol=1e-14)

    def test_cosine_helper(self):
        assert cosine([1, 0], [0, 1]) == 0.0
        assert cosine([2, 0], [3, 0]) == 1.0

    def test_report_lines(self):
        lines = distortion_demo().lines()
        assert lines[0].startswith("cos_before=0.7327")
