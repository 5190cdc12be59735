import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pooled_mean_loop
from protoseg.exceptions import EmptyBackground, EmptyClassMask, ZeroVector
from protoseg.inference import InferenceConfig, score_map
from protoseg.prototype import PrototypeSet, background_prototype, build_prototype_set, foreground_prototype

from conftest import random_masks


def test_constant_features_give_constant_prototype():
    f = np.full((3, 3, 4), 2.5)
    m = np.zeros((3, 3), dtype=int)
    m[1, 1] = 1
    np.testing.assert_array_equal(foreground_prototype([f], [m], 1), np.full(4, 2.5))
    np.testing.assert_array_equal(background_prototype([f], [m]), np.full(4, 2.5))


def test_two_pixel_average():
    f = np.array([[[1.0]], [[4.0]]])
    m = np.ones((2, 1), dtype=int)
    np.testing.assert_allclose(foreground_prototype([f], [m], 1), [2.5])


def test_random_two_shot_matches_oracle(rng):
    feats = [rng.normal(size=(4, 4, 3)) for _ in range(2)]
    masks = random_masks(rng, 2, 4, 4, 2, ensure=[1, 0])
    np.testing.assert_allclose(foreground_prototype(feats, masks, 1), pooled_mean_loop(feats, masks, 1), atol=1e-12)


def test_shot_without_class_is_skipped(rng):
    feats = [rng.normal(size=(3, 3, 2)) for _ in range(2)]
    masks = [np.ones((3, 3), dtype=int), np.zeros((3, 3), dtype=int)]
    np.testing.assert_allclose(foreground_prototype(feats, masks, 1), feats[0].mean(axis=(0, 1)), atol=1e-12)


def test_empty_errors():
    f = np.ones((2, 2, 1))
    with pytest.raises(EmptyClassMask):
        foreground_prototype([f], [np.zeros((2, 2), dtype=int)], 1)
    with pytest.raises(EmptyBackground):
        background_prototype([[f]], [[np.ones((2, 2), dtype=int)]])


def test_background_two_way_two_shot_matches_oracle(rng):
    feats = [[rng.normal(size=(5, 4, 3)) for _ in range(2)] for _ in range(2)]
    masks = [random_masks(rng, 2, 5, 4, 3, ensure=[c, 0]) for c in (1, 2)]
    flat_f = [f for g in feats for f in g]
    flat_m = [m for g in masks for m in g]
    np.testing.assert_allclose(background_prototype(feats, masks), pooled_mean_loop(flat_f, flat_m, 0), atol=1e-12)


def test_build_one_way_one_shot(rng):
    ps = build_prototype_set([[rng.normal(size=(3, 3, 4))]], [[np.array([[0, 1, 1], [0, 0, 1], [1, 1, 0]])]])
    assert ps.vectors.shape == (2, 4) and ps.way == 1


def test_orthogonal_one_hot_construction():
    # class c pixels carry e_c; background pixels are zero
    f1 = np.zeros((2, 2, 3))
    f1[0, 0] = [1, 0, 0]
    f2 = np.zeros((2, 2, 3))
    f2[1, 1] = [0, 1, 0]
    m1 = np.array([[1, 0], [0, 0]])
    m2 = np.array([[0, 0], [0, 2]])
    ps = build_prototype_set([[f1], [f2]], [[m1], [m2]])
    np.testing.assert_array_equal(ps.foreground, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(ps.background, [0, 0, 0])
    with pytest.raises(ZeroVector):
        score_map(f1 + 1.0, ps, InferenceConfig("fidelity"))


def test_random_two_way_three_shot_matches_oracle(rng):
    feats = [[rng.normal(size=(4, 5, 3)) for _ in range(3)] for _ in range(2)]
    masks = [random_masks(rng, 3, 4, 5, 3, ensure=[c, 0]) for c in (1, 2)]
    ps = build_prototype_set(feats, masks)
    for c in (1, 2):
        np.testing.assert_allclose(ps.vectors[c], pooled_mean_loop(feats[c - 1], masks[c - 1], c), atol=1e-12)


def test_masks_are_aligned_to_feature_resolution():
    f = np.arange(16, dtype=float).reshape(2, 2, 4)
    m = np.zeros((4, 4), dtype=int)
    m[:2, :2] = 1
    np.testing.assert_array_equal(foreground_prototype([f], [m], 1), f[0, 0])


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_shot_permutation_and_duplication(seed, k):
    r = np.random.default_rng(seed)
    feats = [r.normal(size=(3, 3, 2)) for _ in range(k)]
    masks = random_masks(r, k, 3, 3, 2, ensure=[1, 0])
    p = foreground_prototype(feats, masks, 1)
    order = r.permutation(k)
    permuted = foreground_prototype([feats[i] for i in order], [masks[i] for i in order], 1)
    np.testing.assert_allclose(permuted, p, rtol=0, atol=1e-15)
    np.testing.assert_allclose(foreground_prototype(feats * 2, masks * 2, 1), p, atol=1e-12)
    # per-channel convex hull of the pooled pixels
    pooled = np.concatenate([f[m == 1] for f, m in zip(feats, masks)])
    assert np.all(p >= pooled.min(axis=0) - 1e-12) and np.all(p <= pooled.max(axis=0) + 1e-12)


def test_prototype_set_accessors():
    ps = PrototypeSet.from_parts(np.zeros(3), np.ones((2, 3)))
    assert ps.way == 2 and ps.dim == 3
    np.testing.assert_array_equal(ps.background, np.zeros(3))
