import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from das.encoders import (
    Target,
    TargetSet,
    ToyEncoder,
    cosine_score,
    ensemble_gradient,
    load_embedding,
    save_embedding,
    weighted_objective,
)

# Unit embedding of the all-0.5 224px image under the default toy seed 0x0DA5
# (first eight entries). Cross-checked against the pure-Python oracle below.
GOLDEN_GRAY_HEAD = [
    -0.043961854422, -0.0145370917, 0.037219000913, 0.051719584479,
    -0.073216216329, 0.07835483645, -0.086283858497, -0.043689955972,
]


def toy_gray_oracle(seed=0x0DA5, dim=512, n_in=3072):
    """Scalar reimplementation: sequential splitmix64, Box-Muller pairs, row sums."""
    mask = (1 << 64) - 1
    state = seed
    scale = math.sqrt(1.0 / n_in)
    out = []
    for _ in range(dim):
        acc = 0.0
        for _ in range(n_in // 2):
            pair = []
            for _ in range(2):
                state = (state + 0x9E3779B97F4A7C15) & mask
                z = state
                z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
                z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
                pair.append((z ^ (z >> 31)) >> 11)
            u1 = 1.0 - pair[0] * 2.0**-53
            u2 = pair[1] * 2.0**-53
            r = math.sqrt(-2.0 * math.log(u1))
            acc += r * math.cos(2 * math.pi * u2) + r * math.sin(2 * math.pi * u2)
        # pooled gray image is 0.5 everywhere
        out.append(math.tanh(0.5 * scale * acc))
    norm = math.sqrt(sum(x * x for x in out))
    return np.array(out) / norm


@pytest.fixture(scope="module")
def toy224():
    return ToyEncoder()


def test_cosine_examples():
    u = np.array([1.0, 2.0, -0.5])
    assert cosine_score(u, u) == pytest.approx(1.0)
    assert cosine_score(np.array([2.0, -1.0, 0.0]), u) == pytest.approx(0.0)
    assert cosine_score(3 * u, u) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cosine_score(np.zeros(3), u)
    with pytest.raises(ValueError):
        cosine_score(np.ones(2), u)


def test_weighted_objective_examples(rng):
    u, v = rng.normal(size=(2, 16))
    assert weighted_objective(v, TargetSet.single(u)) == pytest.approx(cosine_score(v, u))
    cancel = TargetSet([Target(u, 1.0), Target(u, -1.0)])
    assert weighted_objective(v, cancel) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        TargetSet([])


def test_weighted_objective_three_toy_targets(toy32, rng):
    imgs = rng.uniform(size=(4, 32, 32, 3))
    us = [toy32.embed(im) for im in imgs[:3]]
    v = toy32.embed(imgs[3])
    targets = TargetSet([Target(u, w) for u, w in zip(us, (0.3, -0.3, -0.3))])
    direct = sum(w * np.dot(v, u) / (np.linalg.norm(v) * np.linalg.norm(u)) for u, w in zip(us, (0.3, -0.3, -0.3)))
    assert weighted_objective(v, targets) == pytest.approx(direct, abs=1e-14)


@given(st.permutations(range(4)), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30)
def test_weighted_objective_linear_and_permutation_invariant(perm, a, b):
    rng = np.random.default_rng(0)
    us = rng.normal(size=(4, 8))
    v = rng.normal(size=8)
    w = rng.normal(size=4)
    base = TargetSet([Target(u, x) for u, x in zip(us, w)])
    shuffled = TargetSet([Target(us[i], w[i]) for i in perm])
    assert weighted_objective(v, shuffled) == pytest.approx(weighted_objective(v, base), abs=1e-12)
    w2 = rng.normal(size=4)
    mixed = TargetSet([Target(u, a * x + b * y) for u, x, y in zip(us, w, w2)])
    other = TargetSet([Target(u, y) for u, y in zip(us, w2)])
    expected = a * weighted_objective(v, base) + b * weighted_objective(v, other)
    assert weighted_objective(v, mixed) == pytest.approx(expected, abs=1e-12)


def test_toy_identical_images(toy224, rng):
    img = rng.uniform(size=(224, 224, 3))
    a, b = toy224.embed(img), toy224.embed(img.copy())
    assert np.array_equal(a, b)
    assert cosine_score(a, b) == pytest.approx(1.0)


def test_toy_unit_norm(toy224, rng):
    for _ in range(3):
        v = toy224.embed(rng.uniform(size=(224, 224, 3)))
        assert v.shape == (512,)
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-6


def test_toy_wrong_size(toy224):
    with pytest.raises(ValueError):
        toy224.embed(np.zeros((32, 32, 3)))
    with pytest.raises(ValueError):
        toy224.embed(np.full((224, 224, 3), np.nan))


def test_toy_golden_vector(toy224):
    v = toy224.embed(np.full((224, 224, 3), 0.5))
    np.testing.assert_allclose(v[:8], GOLDEN_GRAY_HEAD, atol=1e-12)


@pytest.mark.slow
def test_toy_golden_vector_against_scalar_oracle(toy224):
    v = toy224.embed(np.full((224, 224, 3), 0.5))
    np.testing.assert_allclose(v, toy_gray_oracle(), atol=1e-13)


def test_toy_feature_maps(toy224, rng):
    img = rng.uniform(size=(224, 224, 3))
    (fine, coarse), _ = toy224.feature_maps(img)
    np.testing.assert_allclose(fine[0], img.reshape(32, 7, 32, 7, 3).mean(axis=(1, 3)), atol=1e-13)
    np.testing.assert_allclose(coarse[0], fine[0].reshape(8, 4, 8, 4, 3).mean(axis=(1, 3)), atol=1e-13)


def test_toy_zero_weight_gradient(toy32, rng):
    targets = TargetSet([Target(rng.normal(size=512), 0.0), Target(rng.normal(size=512), 0.0)])
    _, g = toy32.objective_and_grad(rng.uniform(size=(2, 32, 32, 3)), targets)
    assert np.all(g == 0)


@pytest.mark.parametrize("size", [224, 32, 8])
def test_toy_gradient_finite_differences(size, rng):
    enc = ToyEncoder(input_size=size)
    img = rng.uniform(size=(size, size, 3))
    targets = TargetSet([Target(rng.normal(size=512), 1.0), Target(rng.normal(size=512), -0.4)])
    _, grad = enc.objective_and_grad(img[None], targets)
    grad = grad[0]

    def f(x):
        return weighted_objective(enc.forward(x[None])[0][0], targets)

    h = 1e-5
    coords = [tuple(rng.integers(0, n) for n in img.shape) for _ in range(20)]
    fd, an = [], []
    for c in coords:
        plus, minus = img.copy(), img.copy()
        plus[c] += h
        minus[c] -= h
        fd.append((f(plus) - f(minus)) / (2 * h))
        an.append(grad[c])
    fd, an = np.array(fd), np.array(an)
    assert np.linalg.norm(fd - an) <= 1e-3 * np.linalg.norm(an)


def test_toy_gradient_scale_invariant_targets(toy32, rng):
    u = rng.normal(size=512)
    img = rng.uniform(size=(1, 32, 32, 3))
    _, g1 = toy32.objective_and_grad(img, TargetSet.single(u))
    _, g2 = toy32.objective_and_grad(img, TargetSet.single(7.5 * u))
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-18)


def test_ensemble_single_and_duplicate(toy32, rng):
    views = rng.uniform(size=(3, 32, 32, 3))
    t = TargetSet.single(rng.normal(size=512))
    _, own = toy32.objective_and_grad(views, t)
    g1, _ = ensemble_gradient([toy32], views, [t])
    g2, _ = ensemble_gradient([toy32, toy32], views, [t, t])
    np.testing.assert_array_equal(g1, own)
    np.testing.assert_allclose(g2, own, rtol=1e-15, atol=0)


def test_ensemble_two_seeds_is_mean(toy32, rng):
    other = ToyEncoder(seed=77, input_size=32)
    views = rng.uniform(size=(2, 32, 32, 3))
    ref = rng.uniform(size=(32, 32, 3))
    ta, tb = TargetSet.single(toy32.embed(ref)), TargetSet.single(other.embed(ref))
    _, ga = toy32.objective_and_grad(views, ta)
    _, gb = other.objective_and_grad(views, tb)
    g, values = ensemble_gradient([toy32, other], views, [ta, tb])
    np.testing.assert_allclose(g, (ga + gb) / 2, atol=1e-18)
    assert values.shape == (2, 2)


def test_ensemble_normalized_reduction(toy32, rng):
    views = rng.uniform(size=(2, 32, 32, 3))
    t = TargetSet.single(rng.normal(size=512))
    g, _ = ensemble_gradient([toy32], views, [t], reduction="normalized")
    np.testing.assert_allclose(np.linalg.norm(g.reshape(2, -1), axis=1), 1.0)


def test_ensemble_missing_capability(rng):
    class EmbedOnly(ToyEncoder):
        capabilities = frozenset({"image_embed"})

    enc = EmbedOnly(input_size=32)
    with pytest.raises(TypeError):
        ensemble_gradient([enc], rng.uniform(size=(1, 32, 32, 3)), [TargetSet.single(np.ones(512))])


def test_toy_has_no_text(toy32):
    with pytest.raises(TypeError):
        toy32.text_embed("a photo of a dog")


def test_embedding_file_round_trip(tmp_path, rng):
    raw = rng.normal(size=512) * 4.0
    path = tmp_path / "e.json"
    save_embedding(path, raw)
    payload = path.read_text()
    assert '"dim": 512' in payload
    np.testing.assert_allclose(load_embedding(path), raw / np.linalg.norm(raw), atol=1e-15)


def test_embedding_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 3, "data": [1, 2]}')
    with pytest.raises(ValueError):
        load_embedding(bad)
    bad.write_text('{"data": [1, 2]}')
    with pytest.raises(ValueError):
        load_embedding(bad)
