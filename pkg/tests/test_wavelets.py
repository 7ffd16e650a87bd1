import numpy as np
import pytest

from csskit.wavelets import FAMILIES, Wavelet2D


def dense_matrix(wav):
    """Materialize the analysis map column by column."""
    n = wav.rows * wav.cols
    W = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        W[:, j] = wav.forward(e.reshape(wav.rows, wav.cols)).ravel()
    return W


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("shape", [(8, 8), (16, 16), (8, 4)])
def test_round_trip(family, shape):
    rng = np.random.default_rng(0)
    wav = Wavelet2D(*shape, family)
    img = rng.normal(size=shape)
    back = wav.inverse(wav.forward(img))
    assert np.max(np.abs(back - img)) < 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_parseval(family):
    rng = np.random.default_rng(1)
    wav = Wavelet2D(16, 16, family)
    img = rng.normal(size=(16, 16))
    coeffs = wav.forward(img)
    assert abs(np.linalg.norm(coeffs) - np.linalg.norm(img)) < 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_analysis_matrix_is_orthonormal(family):
    wav = Wavelet2D(8, 8, family)
    W = dense_matrix(wav)
    np.testing.assert_allclose(W @ W.T, np.eye(64), atol=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_adjoint_identity(family):
    rng = np.random.default_rng(2)
    wav = Wavelet2D(8, 8, family)
    for _ in range(5):
        x = rng.normal(size=(8, 8))
        theta = rng.normal(size=(8, 8))
        lhs = float(np.sum(wav.inverse(theta) * x))
        rhs = float(np.sum(theta * wav.forward(x)))
        assert abs(lhs - rhs) < 1e-12 * (np.linalg.norm(x) * np.linalg.norm(theta) + 1)


def test_constant_image_haar_single_coefficient():
    wav = Wavelet2D(16, 16, "haar")
    coeffs = wav.forward(np.full((16, 16), 3.0))
    # all energy in the coarsest scaling coefficient, stored top-left
    assert coeffs[0, 0] == pytest.approx(3.0 * 16.0, rel=1e-12)
    rest = coeffs.copy()
    rest[0, 0] = 0.0
    assert np.max(np.abs(rest)) < 1e-12


def test_levels_default_and_validation():
    wav = Wavelet2D(16, 4, "haar")
    assert wav.levels == 2  # log2 of the smaller side
    with pytest.raises(ValueError):
        Wavelet2D(12, 16, "haar")  # 12 not divisible by 2^levels
    with pytest.raises(ValueError):
        Wavelet2D(16, 16, "haar", levels=5)
    with pytest.raises(ValueError):
        Wavelet2D(16, 16, "unknown-family")


def test_single_level_haar_quadrants():
    # one level: the ll quadrant of a constant image carries everything
    wav = Wavelet2D(4, 4, "haar", levels=1)
    coeffs = wav.forward(np.ones((4, 4)))
    np.testing.assert_allclose(coeffs[:2, :2], 2.0 * np.ones((2, 2)), atol=1e-14)
    assert np.max(np.abs(coeffs[2:, :])) < 1e-14
    assert np.max(np.abs(coeffs[:, 2:])) < 1e-14


def test_forward_cols_matches_per_column_transform():
    rng = np.random.default_rng(3)
    wav = Wavelet2D(8, 4, "db4")
    S = rng.normal(size=(32, 3))
    out = wav.forward_cols(S)
    for j in range(3):
        expected = wav.forward(S[:, j].reshape(8, 4)).ravel()
        np.testing.assert_allclose(out[:, j], expected, rtol=1e-12)
    np.testing.assert_allclose(wav.inverse_cols(out), S, atol=1e-12)
