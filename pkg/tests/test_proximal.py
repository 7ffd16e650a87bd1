import numpy as np
import pytest
from scipy.optimize import brentq

from csskit.operators import NotTightFrame, make_core_operator
from csskit.proximal import (
    hard_threshold_topk,
    l2ball_project_fb,
    l2ball_project_tightframe,
    simplex_project_rows,
    soft_threshold,
    tv_norm,
    tv_prox,
)


class DenseOp:
    """Plain matrix as a forward/adjoint pair (no tight-frame constant)."""

    nu = None

    def __init__(self, A):
        self.A = A

    def forward(self, x):
        return self.A @ x

    def adjoint(self, r):
        return self.A.T @ r


def kkt_ball_projection(A, s, y, epsilon):
    """Dense oracle: argmin ||u - s|| s.t. ||y - A u|| <= epsilon.

    Feasible points are fixed; otherwise the constraint is active and the
    KKT stationarity u = (I + lam A^T A)^{-1} (s + lam A^T y) holds for the
    multiplier lam > 0 solving ||y - A u(lam)|| = epsilon.
    """
    if np.linalg.norm(y - A @ s) <= epsilon:
        return s.copy()
    if epsilon == 0.0:  # affine set: minimal-norm correction
        return s + A.T @ np.linalg.solve(A @ A.T, y - A @ s)
    n = A.shape[1]
    AtA = A.T @ A
    Aty = A.T @ y

    def u_of(lam):
        return np.linalg.solve(np.eye(n) + lam * AtA, s + lam * Aty)

    def gap(lam):
        return np.linalg.norm(y - A @ u_of(lam)) - epsilon

    hi = 1.0
    while gap(hi) > 0 and hi < 1e14:
        hi *= 10.0
    lam = brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-15)
    return u_of(lam)


def test_soft_threshold_examples():
    np.testing.assert_array_equal(
        soft_threshold(np.array([3.0, -0.5, 0.0]), 1.0), [2.0, 0.0, 0.0])
    v = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(soft_threshold(v, 0.0), v)
    with pytest.raises(ValueError):
        soft_threshold(v, -0.1)


def test_soft_threshold_matches_grid_prox():
    ts = np.linspace(-5, 5, 200001)
    for x in np.arange(-2.0, 2.5, 0.5):
        objective = np.abs(ts) + 0.5 * (ts - x) ** 2
        best = ts[np.argmin(objective)]
        got = float(soft_threshold(np.array([x]), 1.0)[0])
        assert abs(got - best) <= ts[1] - ts[0]


def test_hard_threshold_examples():
    np.testing.assert_array_equal(
        hard_threshold_topk(np.array([1.0, -3.0, 2.0]), 2), [0.0, -3.0, 2.0])
    v = np.array([0.3, -0.1, 2.0])
    np.testing.assert_array_equal(hard_threshold_topk(v, 3), v)
    np.testing.assert_array_equal(hard_threshold_topk(v, 0), np.zeros(3))
    # tie broken toward the lowest index
    np.testing.assert_array_equal(
        hard_threshold_topk(np.array([1.0, 1.0, 0.0]), 1), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        hard_threshold_topk(v, 4)


def test_tv_norm_oracle():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    # per-pixel forward differences: sqrt(5) + 2 + 1 + 0
    assert tv_norm(img) == pytest.approx(3.0 + np.sqrt(5.0), rel=1e-14)
    assert tv_norm(np.full((5, 7), 2.5)) == 0.0


def test_tv_prox_constant_fixed_point():
    img = np.full((8, 8), 1.25)
    np.testing.assert_array_equal(tv_prox(img, 0.7), img)


def test_tv_prox_two_pixel_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=2) * 3.0
        lam = rng.uniform(0.05, 2.0)
        got = tv_prox(x.reshape(2, 1), lam, max_iters=3000, tol=1e-12).ravel()
        # exact prox of lam*|u1-u0|: move both ends toward each other
        d = x[1] - x[0]
        t = np.sign(d) * min(lam, abs(d) / 2.0)
        exact = np.array([x[0] + t, x[1] - t])
        assert np.max(np.abs(got - exact)) < 1e-3


def test_tv_prox_large_lambda_approaches_mean():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.0, 1.0, size=(8, 8))
    out = tv_prox(img, 1e3, max_iters=5000, tol=1e-13)
    assert np.max(np.abs(out - img.mean())) < 1e-3


def test_tv_prox_never_increases_rof_objective():
    rng = np.random.default_rng(2)
    for _ in range(10):
        img = rng.normal(size=(12, 12))
        lam = rng.uniform(0.01, 1.0)
        out = tv_prox(img, lam, max_iters=30)  # deliberately few iterations
        before = lam * tv_norm(img)
        after = lam * tv_norm(out) + 0.5 * np.sum((out - img) ** 2)
        assert after <= before + 1e-12


def test_simplex_rows_examples():
    np.testing.assert_allclose(
        simplex_project_rows(np.array([[0.3, 0.7]])), [[0.3, 0.7]], atol=1e-15)
    np.testing.assert_allclose(
        simplex_project_rows(np.array([[2.0, 0.0]])), [[1.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(
        simplex_project_rows(np.array([[0.4, 0.4, 0.4]])),
        np.full((1, 3), 1.0 / 3.0), atol=1e-15)


def test_simplex_rows_matches_support_enumeration():
    # exact oracle: try every active support, keep the KKT-consistent one
    def project_row(x):
        best = None
        d = len(x)
        for mask in range(1, 2**d):
            T = [i for i in range(d) if mask >> i & 1]
            theta = (sum(x[i] for i in T) - 1.0) / len(T)
            w = np.zeros(d)
            ok = True
            for i in range(d):
                if i in T:
                    w[i] = x[i] - theta
                    ok &= w[i] >= -1e-12
                else:
                    ok &= x[i] - theta <= 1e-12
            if ok:
                best = w
        return best

    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 4)) * 2.0
    got = simplex_project_rows(X)
    for i in range(X.shape[0]):
        np.testing.assert_allclose(got[i], project_row(X[i]), atol=1e-10)


def test_simplex_rows_idempotent_and_feasible():
    rng = np.random.default_rng(4)
    P = simplex_project_rows(rng.normal(size=(30, 5)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P.min() >= 0.0
    np.testing.assert_allclose(simplex_project_rows(P), P, atol=1e-12)


def test_tightframe_ball_feasible_input_unchanged():
    core = make_core_operator("random-convolution", 4, 8, seed=0)
    rng = np.random.default_rng(5)
    s = rng.normal(size=(8, 1))
    y = core.forward(s).ravel() + 0.0

    class CoreVec:
        nu = core.nu

        def forward(self, x):
            return core.forward(x).ravel()

        def adjoint(self, r):
            return core.adjoint(r.reshape(-1, 1))

    out = l2ball_project_tightframe(s, y, CoreVec(), 1e-3)
    np.testing.assert_array_equal(out, s)


def test_tightframe_ball_affine_case_orthogonal():
    core = make_core_operator("random-convolution", 16, 16, seed=1)
    rng = np.random.default_rng(6)
    s = rng.normal(size=16)
    y = rng.normal(size=16)
    out = l2ball_project_tightframe(s, y, core, 0.0)
    assert np.linalg.norm(core.forward(out) - y) < 1e-9


@pytest.mark.parametrize("epsilon", [0.0, 0.3])
def test_tightframe_ball_matches_kkt_oracle(epsilon):
    core = make_core_operator("random-convolution", 4, 8, seed=2)
    A = core.as_matrix()
    rng = np.random.default_rng(7)
    for _ in range(5):
        s = rng.normal(size=8)
        y = rng.normal(size=4) * 2.0
        got = l2ball_project_tightframe(s, y, core, epsilon)
        oracle = kkt_ball_projection(A, s, y, epsilon)
        assert np.max(np.abs(got - oracle)) < 1e-8


def test_tightframe_ball_requires_nu():
    A = np.random.default_rng(8).normal(size=(4, 8))
    with pytest.raises(NotTightFrame):
        l2ball_project_tightframe(np.zeros(8), np.ones(4), DenseOp(A), 0.1)


def test_fb_ball_feasible_input_unchanged():
    A = np.random.default_rng(9).normal(size=(4, 8))
    s = np.zeros(8)
    y = A @ s  # residual 0 <= epsilon
    out, converged = l2ball_project_fb(s, y, DenseOp(A), 0.5)
    assert converged
    np.testing.assert_array_equal(out, s)


def test_fb_ball_agrees_with_tightframe_closed_form():
    core = make_core_operator("random-convolution", 8, 16, seed=3)
    rng = np.random.default_rng(10)
    s = rng.normal(size=16)
    y = rng.normal(size=8) * 2.0
    exact = l2ball_project_tightframe(s, y, core, 0.2)
    approx, converged = l2ball_project_fb(
        s, y, core, 0.2, max_iters=5000, tol=1e-12)
    assert converged
    assert np.max(np.abs(approx - exact)) < 1e-5


def test_fb_ball_matches_kkt_oracle_dense():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(8, 16)) / np.sqrt(8.0)
    op = DenseOp(A)
    for _ in range(3):
        s = rng.normal(size=16)
        y = rng.normal(size=8) * 2.0
        eps = 0.25
        got, converged = l2ball_project_fb(s, y, op, eps, max_iters=8000, tol=1e-12)
        assert converged
        oracle = kkt_ball_projection(A, s, y, eps)
        assert np.max(np.abs(got - oracle)) < 1e-4
        # terminal residual honors the ball up to the documented slack
        assert np.linalg.norm(y - A @ got) <= eps * (1.0 + 1e-3)


def test_prox_maps_are_nonexpansive():
    rng = np.random.default_rng(12)
    core = make_core_operator("random-convolution", 8, 16, seed=4)
    y = rng.normal(size=8)
    for _ in range(10):
        a = rng.normal(size=16)
        b = rng.normal(size=16)
        gap = np.linalg.norm(a - b)
        assert np.linalg.norm(
            soft_threshold(a, 0.4) - soft_threshold(b, 0.4)) <= gap + 1e-10
        assert np.linalg.norm(
            simplex_project_rows(a[None, :]) - simplex_project_rows(b[None, :])
        ) <= gap + 1e-10
        assert np.linalg.norm(
            l2ball_project_tightframe(a, y, core, 0.3)
            - l2ball_project_tightframe(b, y, core, 0.3)) <= gap + 1e-10
    for _ in range(5):
        a = rng.normal(size=(8, 8))
        b = rng.normal(size=(8, 8))
        pa = tv_prox(a, 0.3, max_iters=5000, tol=1e-13)
        pb = tv_prox(b, 0.3, max_iters=5000, tol=1e-13)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10
