import numpy as np
import pytest

from protoicl.errors import ConfigError
from protoicl.outlier import LOFConfig, exclude_and_mean, lof_scores

from lof_oracle import brute_force_lof

FOUR_POINTS = np.array([(1.0, 0.0), (0.999, 0.02), (1.0, -0.02), (0.0, 1.0)])


def test_identical_directions_score_one(rng):
    d = rng.normal(size=5)
    pts = d * rng.uniform(0.5, 3, size=(12, 1))
    np.testing.assert_allclose(lof_scores(pts, LOFConfig(3)), 1.0, atol=1e-12)


def test_four_point_example():
    scores = lof_scores(FOUR_POINTS, LOFConfig(2, 1.5))
    np.testing.assert_allclose(scores, brute_force_lof(FOUR_POINTS, 2), rtol=1e-9)
    assert scores[3] > 100 * 1.5
    # inliers stay of order one (the centre point sits at 1.6 for k=2)
    assert np.all((scores[:3] > 0.5) & (scores[:3] < 2.0))


def test_scale_invariant(rng):
    pts = rng.normal(size=(30, 4))
    scaled = pts * rng.uniform(0.1, 10, size=(30, 1))
    np.testing.assert_allclose(lof_scores(pts, LOFConfig(5)), lof_scores(scaled, LOFConfig(5)), rtol=1e-9)


def test_permutation_equivariant(rng):
    pts = rng.normal(size=(25, 3))
    perm = rng.permutation(25)
    s = lof_scores(pts, LOFConfig(4))
    np.testing.assert_allclose(lof_scores(pts[perm], LOFConfig(4)), s[perm], rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(25, 120))
    pts = rng.normal(size=(n, int(rng.integers(2, 8))))
    for k in (2, 5, 20):
        np.testing.assert_allclose(lof_scores(pts, LOFConfig(k)), brute_force_lof(pts, k), rtol=1e-9, atol=0)


def test_config_validation():
    with pytest.raises(ConfigError):
        LOFConfig(0)
    with pytest.raises(ConfigError):
        LOFConfig(5, 1.0)
    with pytest.raises(ConfigError):
        lof_scores(np.ones((3, 2)), LOFConfig(3))


def ring(axis: int, n: int = 30, radius: float = 0.05) -> np.ndarray:
    """Evenly spaced directions around a unit axis; every point has LOF 1 by symmetry."""
    phi = 2 * np.pi * np.arange(n) / n
    pts = np.zeros((n, 3))
    pts[:, axis] = 1.0
    others = [i for i in range(3) if i != axis]
    pts[:, others[0]] = radius * np.cos(phi)
    pts[:, others[1]] = radius * np.sin(phi)
    return pts


class TestExcludeAndMean:
    def test_clean_data_mean_unchanged(self):
        pts = ring(0)
        assert lof_scores(pts, LOFConfig(5)).max() < 1.5
        out = exclude_and_mean({0: pts}, LOFConfig(5, 1.5))
        np.testing.assert_allclose(out[0], pts.mean(axis=0), atol=1e-6)

    def test_four_point_outlier_removed(self):
        out = exclude_and_mean({0: FOUR_POINTS}, LOFConfig(2, 1.5))[0]
        cluster = FOUR_POINTS[:3].mean(axis=0)
        np.testing.assert_allclose(out, cluster, atol=1e-3)
        assert out @ cluster / (np.linalg.norm(out) * np.linalg.norm(cluster)) > 1 - 1e-9

    def test_only_contaminated_class_moves(self, rng):
        clean = ring(0)
        dirty = ring(1)
        dirty[0] = [0.0, 0.0, 1.0]
        out = exclude_and_mean({0: clean, 1: dirty}, LOFConfig(5, 1.5))
        np.testing.assert_allclose(out[0], clean.mean(axis=0), atol=1e-12)
        assert np.linalg.norm(out[1] - dirty.mean(axis=0)) > 0.02
        assert out[1][2] < dirty.mean(axis=0)[2]

    def test_small_class_skipped(self, caplog):
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = exclude_and_mean({3: pts}, LOFConfig(5))
        np.testing.assert_array_equal(out[3], pts.mean(axis=0))

    def test_all_flagged_falls_back(self, monkeypatch):
        import protoicl.outlier as mod
        monkeypatch.setattr(mod, "lof_scores", lambda p, c: np.full(len(p), 10.0))
        pts = np.arange(12, dtype=float).reshape(6, 2) + 1
        out = mod.exclude_and_mean({0: pts}, LOFConfig(2))
        np.testing.assert_array_equal(out[0], pts.mean(axis=0))
