import numpy as np
import pytest

from csskit.model import MixingMatrix, SourceMatrix, mix, validate_sources
from csskit.operators import (
    MeasurementSet,
    SamplingOperator,
    add_noise,
    decorrelate_measurements,
    make_core_operator,
    make_sampling_operator,
)
from csskit.proximal import simplex_project_rows, tv_norm
from csskit.scenes import SceneSpec, accuracy, generate_scene, reconstruction_snr
from csskit.solvers import (
    RecoveryProblem,
    SolveResult,
    SolverConfig,
    bpdn_solve,
    harden_sources,
    iht_ss_solve,
    l1_ss_synthesis_solve,
    ppxa_solve,
    reconstruct_cube,
    tvdn_solve,
)
from csskit.wavelets import Wavelet2D

RC = "random-convolution"


def noiseless(y):
    return MeasurementSet(np.asarray(y, dtype=np.float64), 0.0, np.inf, {})


class IdentityCore:
    def __init__(self, n1):
        self.kind = "identity-stub"
        self.m_hat = n1
        self.n1 = n1
        self.nu = 1.0

    def forward(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def adjoint(self, y):
        return np.asarray(y, dtype=np.float64).copy()

    def as_matrix(self):
        return np.eye(self.n1)


@pytest.fixture(scope="module")
def det_scene():
    return generate_scene(SceneSpec(8, 8, channels=4, rho=2, seed=3))


@pytest.fixture(scope="module")
def desk_scene():
    return generate_scene(SceneSpec(16, 16, channels=6, rho=2, seed=5))


def true_sparsity(wavelet, sources):
    return int(np.count_nonzero(np.abs(wavelet.forward_cols(sources.data)) > 1e-12))


# --- determined orthogonal instances: every solver hits the ground truth ----


@pytest.mark.parametrize(
    "method", ["ppxa-tv", "ppxa-l1", "iht", "l1-ss", "bpdn", "tvdn"]
)
def test_determined_instance_recovers_truth(det_scene, method):
    scene = det_scene
    wav = Wavelet2D(8, 8)
    if method in ("bpdn", "tvdn"):
        op = make_sampling_operator("uniform", RC, 64, 4, seed=1, m_hat=64)
        y = op.forward(scene.cube.data)
        cfg = SolverConfig(max_iters=150, rel_tol=1e-7)
        if method == "bpdn":
            cube, _ = bpdn_solve(y, op, wav, 0.0, cfg)
        else:
            cube, _ = tvdn_solve(y, op, 0.0, cfg, rows=8, cols=8)
        assert np.max(np.abs(cube.data - scene.cube.data)) < 1e-6
        return
    op = make_sampling_operator(
        "decorrelating", RC, 64, 4, seed=1, m_hat=64, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    if method == "iht":
        k = true_sparsity(wav, scene.sources)
        res = iht_ss_solve(
            RecoveryProblem(noiseless(y), op, wav, 2),
            SolverConfig(max_iters=100, iht_k=k),
        )
    elif method == "l1-ss":
        res = l1_ss_synthesis_solve(
            y, op, scene.mixing, wav, 0.0, SolverConfig(max_iters=400, rel_tol=1e-8)
        )
    else:
        prior = "tv" if method == "ppxa-tv" else "l1-wavelet"
        res = ppxa_solve(
            RecoveryProblem(noiseless(y), op, wav, 2, prior=prior),
            SolverConfig(max_iters=200, rel_tol=1e-7),
        )
    assert not res.diverged
    assert np.max(np.abs(res.s_hat - scene.sources.data)) < 1e-6


def test_single_source_identity_sampling_is_exact():
    # rho = 1 forces every simplex row to the constant 1
    n1 = 16
    H = MixingMatrix(np.array([[1.0]]))
    op = SamplingOperator("decorrelating", IdentityCore(n1), n1, 1, mixing=H)
    S = np.ones((n1, 1))
    y = op.forward(S @ H.data.T, space="data")
    prob = RecoveryProblem(noiseless(y), op, Wavelet2D(4, 4), 1, prior="tv")
    res = ppxa_solve(prob, SolverConfig(max_iters=100))
    assert np.max(np.abs(res.s_hat - 1.0)) < 1e-6
    assert res.residual < 1e-9


# --- constrained splitting solver -------------------------------------------


def test_ppxa_tv_quarter_rate_exact_separation(desk_scene):
    scene = desk_scene
    op = make_sampling_operator(
        "decorrelating", RC, 256, 6, seed=7, m_hat=64, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    prob = RecoveryProblem(noiseless(y), op, Wavelet2D(16, 16), 2)
    # small prox weight tightens feasibility fast on noiseless instances
    res = ppxa_solve(
        prob,
        SolverConfig(beta=0.05, max_iters=400, rel_tol=1e-9,
                     tv_max_iters=150, tv_tol=1e-6),
    )
    assert accuracy(scene.labels, res.s_hat) == 1.0
    xhat = reconstruct_cube(res.s_hat, scene.mixing, shape=(16, 16))
    assert reconstruction_snr(scene.cube, xhat) >= 60.0


def test_ppxa_noisy_measurements_stay_useful(desk_scene):
    scene = desk_scene
    op = make_sampling_operator(
        "decorrelating", RC, 256, 6, seed=9, m_hat=64, mixing=scene.mixing
    )
    mset = add_noise(op.forward(scene.cube.data, space="data"), 30.0, seed=10)
    prob = RecoveryProblem(mset, op, Wavelet2D(16, 16), 2)
    res = ppxa_solve(prob, SolverConfig(max_iters=400))
    assert accuracy(scene.labels, res.s_hat) >= 0.95
    assert reconstruction_snr(scene.sources.data, res.s_hat) >= 20.0


def test_ppxa_certified_output_invariants(desk_scene):
    scene = desk_scene
    op = make_sampling_operator(
        "decorrelating", RC, 256, 6, seed=11, m_hat=64, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    prob = RecoveryProblem(noiseless(y), op, Wavelet2D(16, 16), 2, prior="l1-wavelet")
    res = ppxa_solve(prob, SolverConfig(max_iters=1500, rel_tol=1e-7))
    assert res.converged
    # certified feasibility: residual within slack, rows exactly stochastic
    assert res.residual <= 0.0 + 1e-6 * np.linalg.norm(y)
    assert np.all(res.s_hat >= 0.0)
    np.testing.assert_allclose(res.s_hat.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(
        simplex_project_rows(res.s_hat), res.s_hat, atol=1e-12
    )
    assert len(res.trace) == res.iterations


def test_ppxa_infeasible_ball_reports_unconverged():
    scene = generate_scene(SceneSpec(4, 4, channels=3, rho=2, seed=13))
    op = make_sampling_operator(
        "decorrelating", RC, 16, 3, seed=14, m_hat=16, mixing=scene.mixing
    )
    # simplex rows bound ||L(S)||, so this target is unreachable at eps ~ 0
    y_bad = 1e3 * np.ones(op.m)
    mset = MeasurementSet(y_bad, 1e-6, 120.0, {})
    prob = RecoveryProblem(mset, op, Wavelet2D(4, 4), 2)
    res = ppxa_solve(prob, SolverConfig(max_iters=150))
    assert not res.converged and not res.diverged
    assert np.isfinite(res.residual) and res.residual > 1.0
    np.testing.assert_allclose(res.s_hat.sum(axis=1), 1.0, atol=1e-9)


def test_scheme_equivalence_postprocessed_uniform_vs_decorrelating(desk_scene):
    scene = desk_scene
    uni = make_sampling_operator("uniform", RC, 256, 6, seed=15, m_hat=64)
    dec = make_sampling_operator(
        "decorrelating", RC, 256, 6, seed=15, m_hat=64, mixing=scene.mixing
    )
    Y_star, _ = decorrelate_measurements(
        uni.y_as_matrix(uni.forward(scene.cube.data)), scene.mixing
    )
    y_direct = dec.forward(scene.cube.data, space="data")
    wav = Wavelet2D(16, 16)
    cfg = SolverConfig(max_iters=300, rel_tol=1e-7)
    r_post = ppxa_solve(
        RecoveryProblem(noiseless(Y_star.ravel(order="F")), dec, wav, 2), cfg
    )
    r_direct = ppxa_solve(RecoveryProblem(noiseless(y_direct), dec, wav, 2), cfg)
    assert np.max(np.abs(r_post.s_hat - r_direct.s_hat)) < 1e-8


# --- hard-thresholding solver ------------------------------------------------


def test_iht_step_contracts():
    scene = generate_scene(SceneSpec(8, 8, channels=4, rho=2, seed=17))
    op = make_sampling_operator(
        "decorrelating", RC, 64, 4, seed=18, m_hat=32, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    wav = Wavelet2D(8, 8)
    k = 6
    steps: dict[int, dict[int, np.ndarray]] = {}

    def monitor(it, step, theta):
        steps.setdefault(it, {})[step] = theta.copy()

    iht_ss_solve(
        RecoveryProblem(noiseless(y), op, wav, 2),
        SolverConfig(max_iters=5, iht_k=k, rel_tol=0.0),
        step_monitor=monitor,
    )
    assert sorted(steps) == [1, 2, 3, 4, 5]
    for rec in steps.values():
        t2, t3, t4 = rec[2], rec[3], rec[4]
        assert np.count_nonzero(t2) <= k
        omega = np.sqrt(64.0) * np.linalg.norm(t2, axis=0) / np.linalg.norm(t2)
        gram = t3.T @ t3
        assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-9
        np.testing.assert_allclose(np.linalg.norm(t3, axis=0), omega, atol=1e-9)
        S4 = wav.inverse_cols(t4)
        np.testing.assert_allclose(S4.sum(axis=1), 1.0, atol=1e-9)
        assert S4.min() > -1e-9


def test_iht_quarter_rate_separation(desk_scene):
    scene = desk_scene
    wav = Wavelet2D(16, 16)
    op = make_sampling_operator(
        "decorrelating", RC, 256, 6, seed=19, m_hat=64, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    res = iht_ss_solve(
        RecoveryProblem(noiseless(y), op, wav, 2),
        SolverConfig(max_iters=300, iht_k=true_sparsity(wav, scene.sources)),
    )
    assert accuracy(scene.labels, res.s_hat) >= 0.9


def test_iht_flags_starved_source_column():
    H = MixingMatrix(np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]]))
    core = make_core_operator(RC, 16, 16, seed=20)
    op = SamplingOperator("decorrelating", core, 16, 3, mixing=H)
    s0 = np.abs(np.random.default_rng(21).normal(size=16)) + 0.1
    y = np.column_stack([core.forward(s0), np.zeros(16)]).ravel(order="F")
    res = iht_ss_solve(
        RecoveryProblem(noiseless(y), op, Wavelet2D(4, 4), 2),
        SolverConfig(max_iters=3, iht_k=2, rel_tol=0.0),
    )
    assert "zero-column" in res.flags


def test_iht_flags_zero_matrix():
    H = MixingMatrix(np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]]))
    op = make_sampling_operator(
        "decorrelating", RC, 16, 3, seed=22, m_hat=8, mixing=H
    )
    res = iht_ss_solve(
        RecoveryProblem(noiseless(np.zeros(16)), op, Wavelet2D(4, 4), 2),
        SolverConfig(max_iters=2, iht_k=2, rel_tol=0.0),
    )
    assert "zero-matrix" in res.flags


def test_iht_requires_budget():
    scene = generate_scene(SceneSpec(4, 4, channels=3, rho=2, seed=23))
    op = make_sampling_operator(
        "decorrelating", RC, 16, 3, seed=24, m_hat=8, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    prob = RecoveryProblem(noiseless(y), op, Wavelet2D(4, 4), 2)
    with pytest.raises(ValueError):
        iht_ss_solve(prob, SolverConfig())
    with pytest.raises(ValueError):
        iht_ss_solve(prob, SolverConfig(iht_k=1))


# --- cube baselines -----------------------------------------------------------


def test_bpdn_one_sparse_per_channel_support_recovery():
    wav = Wavelet2D(8, 4)
    theta = np.zeros((32, 2))
    theta[5, 0] = 1.0
    theta[20, 1] = -1.3
    X = wav.inverse_cols(theta)
    op = make_sampling_operator("uniform", RC, 32, 2, seed=25, m_hat=16)
    y = op.forward(X)
    # prox weight must sit below the unit coefficient scale or the l1 step
    # zeroes every iterate and the change criterion fires vacuously
    cube, res = bpdn_solve(
        y, op, wav, 0.0, SolverConfig(beta=0.1, max_iters=1500, rel_tol=1e-9)
    )
    t_hat = wav.forward_cols(cube.data)
    for j, idx in ((0, 5), (1, 20)):
        col = np.abs(t_hat[:, j])
        assert int(col.argmax()) == idx
        assert np.delete(col, idx).max() < 1e-4 * col[idx]
    np.testing.assert_allclose(t_hat[5, 0], 1.0, atol=1e-3)
    np.testing.assert_allclose(t_hat[20, 1], -1.3, atol=1e-3)


def test_bpdn_objective_certificate(det_scene):
    # the returned point is feasible and never beats the truth by more than slack
    scene = det_scene
    wav = Wavelet2D(8, 8)
    op = make_sampling_operator("uniform", RC, 64, 4, seed=26, m_hat=32)
    y = op.forward(scene.cube.data)
    cube, res = bpdn_solve(y, op, wav, 0.0, SolverConfig(max_iters=2000, rel_tol=1e-9))
    l1_hat = np.abs(wav.forward_cols(cube.data)).sum()
    l1_true = np.abs(wav.forward_cols(scene.cube.data)).sum()
    assert l1_hat <= l1_true + 1e-4
    assert res.residual <= 1e-6 * np.linalg.norm(y)


def test_tvdn_piecewise_constant_recovery(det_scene):
    scene = det_scene
    op = make_sampling_operator("uniform", RC, 64, 4, seed=27, m_hat=32)
    y = op.forward(scene.cube.data)
    cube, res = tvdn_solve(
        y, op, 0.0,
        SolverConfig(beta=0.1, max_iters=600, rel_tol=1e-9,
                     tv_max_iters=150, tv_tol=1e-6),
        rows=8, cols=8,
    )
    assert reconstruction_snr(scene.cube, cube) >= 40.0


def test_tvdn_objective_certificate(det_scene):
    # determined feasible instance: certification pins the exact solution,
    # so its objective cannot exceed the truth
    scene = det_scene
    op = make_sampling_operator("uniform", RC, 64, 4, seed=41, m_hat=64)
    y = op.forward(scene.cube.data)
    cube, res = tvdn_solve(
        y, op, 0.0, SolverConfig(max_iters=200, rel_tol=1e-7), rows=8, cols=8
    )
    tv_hat = sum(tv_norm(cube.data[:, j].reshape(8, 8)) for j in range(4))
    tv_true = sum(tv_norm(scene.cube.data[:, j].reshape(8, 8)) for j in range(4))
    assert tv_hat <= tv_true + 1e-4
    assert res.residual <= 1e-6 * np.linalg.norm(y)


def test_cube_baselines_reject_decorrelating(det_scene):
    op = make_sampling_operator(
        "decorrelating", RC, 64, 4, seed=28, m_hat=32, mixing=det_scene.mixing
    )
    with pytest.raises(ValueError):
        bpdn_solve(np.zeros(op.m), op, Wavelet2D(8, 8), 0.0)
    with pytest.raises(ValueError):
        tvdn_solve(np.zeros(op.m), op, 0.0, rows=8, cols=8)


def test_tvdn_rejects_bad_spatial_factorization():
    op = make_sampling_operator("uniform", RC, 64, 2, seed=29, m_hat=32)
    with pytest.raises(ValueError):
        tvdn_solve(np.zeros(op.m), op, 0.0, rows=5, cols=5)


# --- unconstrained synthesis source separation --------------------------------


def test_l1_ss_decoupled_path_matches_joint_solve():
    scene = generate_scene(SceneSpec(16, 16, channels=5, rho=2, seed=31))
    op = make_sampling_operator(
        "decorrelating", RC, 256, 5, seed=32, m_hat=64, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    wav = Wavelet2D(16, 16)
    cfg = SolverConfig(beta=0.1, max_iters=2000, rel_tol=1e-9)
    auto = l1_ss_synthesis_solve(y, op, scene.mixing, wav, 0.0, cfg)
    joint = l1_ss_synthesis_solve(y, op, scene.mixing, wav, 0.0, cfg, decouple=False)
    assert np.max(np.abs(auto.s_hat - joint.s_hat)) < 1e-6


def test_l1_ss_identity_mixing_reduces_to_cube_baseline():
    wav = Wavelet2D(8, 8)
    theta = np.zeros((64, 2))
    theta[[3, 17], 0] = (1.0, -0.7)
    theta[[40, 9], 1] = (0.8, 1.2)
    X = wav.inverse_cols(theta)
    op = make_sampling_operator("uniform", RC, 64, 2, seed=33, m_hat=32)
    y = op.forward(X)
    cfg = SolverConfig(beta=0.1, max_iters=2500, rel_tol=1e-9)
    res = l1_ss_synthesis_solve(y, op, MixingMatrix(np.eye(2)), wav, 0.0, cfg)
    cube, _ = bpdn_solve(y, op, wav, 0.0, cfg)
    assert np.max(np.abs(res.s_hat - cube.data)) < 1e-5


def test_l1_ss_two_sparse_per_source_exact_recovery():
    wav = Wavelet2D(8, 8)
    rng = np.random.default_rng(34)
    H = MixingMatrix(rng.random((4, 2)) + np.eye(4, 2))
    theta = np.zeros((64, 2))
    theta[[3, 17], 0] = (1.0, -0.7)
    theta[[40, 9], 1] = (0.8, 1.2)
    S = wav.inverse_cols(theta)
    op = make_sampling_operator(
        "decorrelating", RC, 64, 4, seed=35, m_hat=32, mixing=H
    )
    y = op.forward(S @ H.data.T, space="data")
    res = l1_ss_synthesis_solve(
        y, op, H, wav, 0.0, SolverConfig(beta=0.1, max_iters=2000, rel_tol=1e-9)
    )
    assert np.max(np.abs(res.theta_hat - theta)) < 1e-4
    assert res.converged


def test_l1_ss_decouple_flag_validation():
    op = make_sampling_operator("uniform", RC, 16, 2, seed=36, m_hat=8)
    with pytest.raises(ValueError):
        l1_ss_synthesis_solve(
            np.zeros(op.m), op, MixingMatrix(np.eye(2)), Wavelet2D(4, 4), 0.0,
            decouple=True,
        )


# --- hardening and reconstruction ---------------------------------------------


def test_harden_sources_rules():
    S = np.array([[0.2, 0.8], [0.5, 0.5], [-1.0, -2.0]])
    out = harden_sources(S)
    np.testing.assert_array_equal(
        out.data, [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]
    )
    assert out.disjoint
    assert validate_sources(out, disjoint=True).ok


def test_reconstruct_cube_exact_and_error_bound():
    rng = np.random.default_rng(37)
    S = simplex_project_rows(rng.random((16, 2)))
    H = MixingMatrix(rng.random((5, 2)) + np.eye(5, 2))
    X = mix(SourceMatrix(S), H, shape=(4, 4))
    xhat = reconstruct_cube(S, H, shape=(4, 4))
    np.testing.assert_array_equal(xhat.data, X.data)
    assert (xhat.rows, xhat.cols, xhat.channels) == (4, 4, 5)
    sigma_max = H.singular_values[0]
    for _ in range(20):
        S_pert = S + rng.normal(scale=0.3, size=S.shape)
        err = np.linalg.norm(X.data - reconstruct_cube(S_pert, H, shape=(4, 4)).data)
        assert err <= sigma_max * np.linalg.norm(S - S_pert) + 1e-10


def test_reconstruct_cube_rank_one_equality():
    rng = np.random.default_rng(38)
    h = MixingMatrix(rng.random((6, 1)) + 0.5)
    S = rng.random((16, 1))
    S_pert = S + rng.normal(size=S.shape)
    err = np.linalg.norm(
        reconstruct_cube(S, h).data - reconstruct_cube(S_pert, h).data
    )
    expected = np.linalg.norm(h.data) * np.linalg.norm(S - S_pert)
    assert err == pytest.approx(expected, rel=1e-12)


def test_reconstruct_cube_validation():
    H = MixingMatrix(np.eye(3, 2))
    with pytest.raises(ValueError):
        reconstruct_cube(np.zeros((8, 3)), H)
    with pytest.raises(ValueError):
        reconstruct_cube(np.zeros((8, 2)), H, shape=(3, 3))


# --- configuration and result plumbing ----------------------------------------


def test_solver_config_validation():
    for bad in (
        dict(beta=0.0),
        dict(max_iters=0),
        dict(rel_tol=1.0),
        dict(rel_tol=-0.1),
        dict(iht_k=0),
        dict(gamma_step=0.0),
        dict(tv_max_iters=0),
        dict(ball_max_iters=0),
    ):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_recovery_problem_validation(det_scene):
    scene = det_scene
    op = make_sampling_operator(
        "decorrelating", RC, 64, 4, seed=39, m_hat=32, mixing=scene.mixing
    )
    y = op.forward(scene.cube.data, space="data")
    wav = Wavelet2D(8, 8)
    with pytest.raises(ValueError):
        RecoveryProblem(noiseless(y), op, wav, 2, prior="ridge")
    with pytest.raises(ValueError):
        RecoveryProblem(noiseless(y[:-1]), op, wav, 2)
    with pytest.raises(ValueError):
        RecoveryProblem(noiseless(y), op, Wavelet2D(4, 4), 2)
    with pytest.raises(ValueError):
        RecoveryProblem(noiseless(y), op, wav, 3)
    uni = make_sampling_operator("uniform", RC, 64, 4, seed=40, m_hat=16)
    with pytest.raises(ValueError):
        RecoveryProblem(noiseless(np.zeros(uni.m)), uni, wav, 2)


def test_solve_result_validation():
    with pytest.raises(ValueError):
        SolveResult(None, None, 2, 0.0, 0.0, True, False, trace=((0.0, 0.0),))
    with pytest.raises(ValueError):
        SolveResult(None, None, 0, np.nan, 0.0, True, False, trace=())
