"""Recovery solvers: parallel proximal splitting for the convex
source-separation problems, a constrained iterative-hard-thresholding
variant for disjoint sources, and the classical full-cube baselines.

All solvers share one proximal engine. Each iteration evaluates
``prox_{m*beta*f_i}`` at its own auxiliary point, averages the results, and
updates the auxiliary points by ``G_i += 2*S_new - S_old - P_i``. With three
functions this is the parallel proximal algorithm; with two it reduces to
Douglas-Rachford up to parameterization (the baselines use that form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import HsiCube, MixingMatrix, SourceMatrix
from .operators import MeasurementSet, SamplingOperator, SourceSpaceMap, operator_norm
from .proximal import (
    hard_threshold_topk,
    l2ball_project_fb,
    l2ball_project_tightframe,
    simplex_project_rows,
    soft_threshold,
    tv_prox,
)
from .wavelets import Wavelet2D

PRIORS = ("tv", "l1-wavelet")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by all solvers.

    beta is the proximal weight of the splitting; gamma_step overrides the
    hard-thresholding step size (default 1/||M||^2 with the operator norm
    from 50 power iterations, exact for tight frames); iht_k is the sparsity
    budget of the hard-thresholding solver.
    """

    beta: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-5
    iht_k: int | None = None
    gamma_step: float | None = None
    tv_max_iters: int = 100
    tv_tol: float = 1e-5
    ball_max_iters: int = 200
    ball_tol: float = 1e-6
    power_iters: int = 50

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_iters < 1 or self.tv_max_iters < 1 or self.ball_max_iters < 1:
            raise ValueError("iteration budgets must be positive")
        if not 0 <= self.rel_tol < 1:
            raise ValueError("rel_tol must lie in [0, 1)")
        if self.iht_k is not None and self.iht_k < 1:
            raise ValueError("iht_k must be positive")
        if self.gamma_step is not None and self.gamma_step <= 0:
            raise ValueError("gamma_step must be positive")


@dataclass(frozen=True)
class RecoveryProblem:
    """A source-recovery instance: measurements, acquisition, prior, wavelet.

    ``mixing`` defines the source-to-cube map for the dense/uniform schemes;
    the decorrelating scheme carries its own. ``constraints`` toggles the
    row-simplex (nonnegativity + unit sum) constraint on the sources.
    """

    measurements: MeasurementSet
    operator: SamplingOperator
    wavelet: Wavelet2D
    rho: int
    prior: str = "tv"
    constraints: bool = True
    mixing: MixingMatrix | None = None

    def __post_init__(self) -> None:
        if self.prior not in PRIORS:
            raise ValueError(f"prior must be one of {PRIORS}")
        if self.measurements.m != self.operator.m:
            raise ValueError(
                f"{self.measurements.m} measurements vs operator output {self.operator.m}"
            )
        if self.wavelet.n1 != self.operator.n1:
            raise ValueError("wavelet dims do not match the pixel count")
        mixing = self.effective_mixing
        if mixing is None:
            raise ValueError("source recovery needs a mixing matrix")
        if mixing.rho != self.rho:
            raise ValueError(f"mixing has {mixing.rho} sources, expected {self.rho}")

    @property
    def effective_mixing(self) -> MixingMatrix | None:
        return self.mixing if self.mixing is not None else self.operator.mixing


@dataclass(frozen=True)
class SolveResult:
    """Solver output: estimates, certification residuals, and the trace.

    ``residual`` is ``||y - op(S_hat)||`` of the returned (certified)
    estimate; ``raw_residual`` belongs to the uncertified final iterate.
    ``converged`` means the iterate-change criterion fired AND the certified
    point sits on the measurement ball (within 1e-6*||y|| slack); a stalled
    infeasible run reports False. ``trace`` holds one
    ``(residual, relative_change)`` pair per iteration.
    """

    s_hat: np.ndarray | None
    theta_hat: np.ndarray | None
    iterations: int
    residual: float
    raw_residual: float
    converged: bool
    diverged: bool
    trace: tuple
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.trace) != self.iterations:
            raise ValueError("trace must have one entry per iteration")
        if not math.isfinite(self.residual):
            raise ValueError("certified residual must be finite")


class _SynthesisMap:
    """Compose a source-space map with per-column wavelet synthesis."""

    def __init__(self, inner, wavelet: Wavelet2D):
        self.inner = inner
        self.wavelet = wavelet
        self.nu = inner.nu

    def forward(self, theta):
        return self.inner.forward(self.wavelet.inverse_cols(theta))

    def adjoint(self, y):
        return self.wavelet.forward_cols(self.inner.adjoint(y))


class _CubeMap:
    """Adapter presenting a sampling operator as a plain cube-space map."""

    def __init__(self, op: SamplingOperator):
        self.op = op
        self.nu = op.nu

    def forward(self, X):
        return self.op.forward(X, space="data")

    def adjoint(self, y):
        return self.op.adjoint(y)


class _CoreColumnsMap:
    """The core operator applied per column, with stacked vector output."""

    def __init__(self, core, cols: int):
        self.core = core
        self.cols = cols
        self.nu = core.nu

    def forward(self, S):
        return self.core.forward(S).ravel(order="F")

    def adjoint(self, y):
        return self.core.adjoint(y.reshape(self.core.m_hat, self.cols, order="F"))


def _ball_machinery(L, y, epsilon, config, shape):
    """Return (prox, certify) for the measurement-fidelity ball of L.

    Tight frames get the exact closed form; everything else the iterative
    dual forward-backward projection with a one-time operator-norm estimate.
    """
    if L.nu is not None:
        def project(S):
            return l2ball_project_tightframe(S, y, L, epsilon, L.nu)
    else:
        norm_est = operator_norm(L, shape, iters=config.power_iters)

        def project(S):
            out, _ = l2ball_project_fb(
                S, y, L, epsilon, config.ball_max_iters, config.ball_tol, norm_est
            )
            return out

    return (lambda S, w: project(S)), project


def _run_engine(proxes, shape, config, residual_fn):
    """Averaged proximal splitting over an arbitrary prox list."""
    m = len(proxes)
    weight = m * config.beta
    gammas = [np.zeros(shape) for _ in proxes]
    s = np.zeros(shape)
    trace = []
    converged = diverged = False
    for _ in range(config.max_iters):
        ps = [prox(g, weight) for prox, g in zip(proxes, gammas)]
        s_new = sum(ps) / m
        if not np.all(np.isfinite(s_new)):
            diverged = True
            break
        for g, p in zip(gammas, ps):
            g += 2.0 * s_new - s - p
        change = np.linalg.norm(s_new - s) / max(np.linalg.norm(s), 1.0)
        s = s_new
        trace.append((residual_fn(s), change))
        if change < config.rel_tol:
            converged = True
            break
    return s, trace, converged, diverged


def _tv_columns_prox(wavelet, config):
    def prox(S, w):
        out = np.empty_like(S)
        for j in range(S.shape[1]):
            img = S[:, j].reshape(wavelet.rows, wavelet.cols)
            out[:, j] = tv_prox(img, w, config.tv_max_iters, config.tv_tol).ravel()
        return out

    return prox


def ppxa_solve(problem: RecoveryProblem, config: SolverConfig | None = None) -> SolveResult:
    """Recover sources by parallel proximal splitting.

    Splits the problem into the sparsity/smoothness prior, the indicator of
    the measurement ball ``||y - L(S)|| <= epsilon``, and (when constraints
    are on) the indicator of the per-row probability simplex. The returned
    estimate is the final average certified by one ball projection followed
    by one simplex projection, so its rows are exactly stochastic; the
    certified residual may exceed epsilon by a small slack (reported).

    Parameters
    ----------
    problem : RecoveryProblem
    config : SolverConfig, optional

    Returns
    -------
    SolveResult
        ``s_hat`` is the certified ``(n1, rho)`` source estimate.
    """
    config = config if config is not None else SolverConfig()
    y = problem.measurements.y
    epsilon = problem.measurements.epsilon
    L = SourceSpaceMap(problem.operator, problem.effective_mixing)
    shape = (problem.operator.n1, problem.rho)

    if problem.prior == "tv":
        prior_prox = _tv_columns_prox(problem.wavelet, config)
    else:
        wav = problem.wavelet

        def prior_prox(S, w):
            return wav.inverse_cols(soft_threshold(wav.forward_cols(S), w))

    ball_prox, ball_project = _ball_machinery(L, y, epsilon, config, shape)
    proxes = [prior_prox, ball_prox]
    if problem.constraints:
        proxes.append(lambda S, w: simplex_project_rows(S))

    def residual(S):
        return float(np.linalg.norm(y - L.forward(S)))

    s, trace, converged, diverged = _run_engine(proxes, shape, config, residual)
    raw = residual(s)
    s_cert = ball_project(s)
    if problem.constraints:
        s_cert = simplex_project_rows(s_cert)
    res_cert = residual(s_cert)
    # an iterate can stall (change below rel_tol) without being feasible,
    # e.g. on an unreachable measurement ball; only certified points count
    converged = converged and res_cert <= epsilon + 1e-6 * np.linalg.norm(y)
    return SolveResult(
        s_hat=s_cert,
        theta_hat=None,
        iterations=len(trace),
        residual=res_cert,
        raw_residual=raw,
        converged=converged,
        diverged=diverged,
        trace=tuple(trace),
    )


def iht_ss_solve(problem: RecoveryProblem, config: SolverConfig,
                 step_monitor=None) -> SolveResult:
    """Recover disjoint sources by constrained iterative hard thresholding.

    Each iteration applies, in order: (1) a gradient step on the residual
    with step ``gamma``; (2) global hard thresholding to the ``k`` largest
    wavelet coefficients; (3) a procrustes-style orthogonalization that
    makes the coefficient Gram matrix diagonal while preserving per-source
    energy ratios; (4) the row-simplex projection in the image domain.

    ``step_monitor(iteration, step, theta)``, when given, is called after
    each of the four steps with the current coefficient matrix (read-only
    introspection; used by contract tests).

    Raises ``ValueError`` unless ``config.iht_k`` is set and at least
    ``rho``. A source column zeroed by thresholding keeps a zero scale in
    the orthogonalization and is reported in ``flags``.
    """
    if config.iht_k is None:
        raise ValueError("iht requires the sparsity budget config.iht_k")
    if config.iht_k < problem.rho:
        raise ValueError("sparsity budget below the source count")
    k = config.iht_k
    y = problem.measurements.y
    wav = problem.wavelet
    L = SourceSpaceMap(problem.operator, problem.effective_mixing)
    M = _SynthesisMap(L, wav)
    n1 = problem.operator.n1
    shape = (n1, problem.rho)
    gamma = config.gamma_step
    if gamma is None:
        norm_sq = M.nu if M.nu is not None else operator_norm(M, shape, config.power_iters) ** 2
        gamma = 1.0 / norm_sq

    def notify(iteration, step, theta):
        if step_monitor is not None:
            step_monitor(iteration, step, theta)

    theta = np.zeros(shape)
    flags: set[str] = set()
    trace = []
    converged = diverged = False
    for it in range(1, config.max_iters + 1):
        prev = theta
        theta = theta + gamma * M.adjoint(y - M.forward(theta))
        notify(it, 1, theta)
        theta = hard_threshold_topk(theta.ravel(order="F"), k).reshape(shape, order="F")
        notify(it, 2, theta)
        fro = np.linalg.norm(theta)
        if not math.isfinite(fro):
            # squared norms overflow before the iterate itself goes non-finite,
            # and nan scaling would crash the svd; bail out as diverged
            diverged = True
            theta = prev
            break
        if fro > 0.0:
            col_norms = np.linalg.norm(theta, axis=0)
            if np.any(col_norms == 0.0):
                flags.add("zero-column")
            omega = math.sqrt(n1) * col_norms / fro
            U, _, Vt = np.linalg.svd(theta * omega[None, :], full_matrices=False)
            theta = (U @ Vt) * omega[None, :]
        else:
            flags.add("zero-matrix")
        notify(it, 3, theta)
        theta = wav.forward_cols(simplex_project_rows(wav.inverse_cols(theta)))
        notify(it, 4, theta)
        if not np.all(np.isfinite(theta)):
            diverged = True
            theta = prev
            break
        change = np.linalg.norm(theta - prev) / max(np.linalg.norm(prev), 1.0)
        trace.append((float(np.linalg.norm(y - M.forward(theta))), change))
        if change < config.rel_tol:
            converged = True
            break
    s_hat = wav.inverse_cols(theta)
    res = float(np.linalg.norm(y - L.forward(s_hat)))
    return SolveResult(
        s_hat=s_hat,
        theta_hat=theta,
        iterations=len(trace),
        residual=res,
        raw_residual=res,
        converged=converged,
        diverged=diverged,
        trace=tuple(trace),
        flags=tuple(sorted(flags)),
    )


def _two_function_solve(M, y, epsilon, config, shape, prior_prox):
    ball_prox, ball_project = _ball_machinery(M, y, epsilon, config, shape)

    def residual(t):
        return float(np.linalg.norm(y - M.forward(t)))

    t, trace, converged, diverged = _run_engine(
        [prior_prox, ball_prox], shape, config, residual
    )
    raw = residual(t)
    t_cert = ball_project(t)
    res_cert = residual(t_cert)
    converged = converged and res_cert <= epsilon + 1e-6 * np.linalg.norm(y)
    return t_cert, raw, res_cert, trace, converged, diverged


def bpdn_solve(y, operator: SamplingOperator, wavelet: Wavelet2D, epsilon: float,
               config: SolverConfig | None = None) -> tuple[HsiCube, SolveResult]:
    """Full-cube baseline: minimum-l1 wavelet coefficients per channel.

    Solves for the channelwise coefficient matrix subject to the
    measurement ball of the cube-space operator, then synthesizes the cube.
    The measurements must come from a cube-space scheme (dense or uniform).
    """
    if operator.scheme == "decorrelating":
        raise ValueError("cube baselines need dense or uniform measurements")
    config = config if config is not None else SolverConfig()
    M = _SynthesisMap(_CubeMap(operator), wavelet)
    shape = (operator.n1, operator.n2)

    def prior_prox(t, w):
        return soft_threshold(t, w)

    t_cert, raw, res, trace, converged, diverged = _two_function_solve(
        M, np.asarray(y, dtype=np.float64), epsilon, config, shape, prior_prox
    )
    cube = HsiCube(wavelet.rows, wavelet.cols, operator.n2, wavelet.inverse_cols(t_cert))
    result = SolveResult(
        s_hat=None,
        theta_hat=t_cert,
        iterations=len(trace),
        residual=res,
        raw_residual=raw,
        converged=converged,
        diverged=diverged,
        trace=tuple(trace),
    )
    return cube, result


def tvdn_solve(y, operator: SamplingOperator, epsilon: float,
               config: SolverConfig | None = None, *, rows: int,
               cols: int) -> tuple[HsiCube, SolveResult]:
    """Full-cube baseline: minimum per-channel total variation.

    Same structure as the l1 baseline with the per-channel TV prox as the
    prior; the unknown is the cube itself. ``rows``/``cols`` fix the spatial
    unflattening of the pixel axis.
    """
    if operator.scheme == "decorrelating":
        raise ValueError("cube baselines need dense or uniform measurements")
    if rows * cols != operator.n1:
        raise ValueError("spatial shape does not factor the pixel count")
    config = config if config is not None else SolverConfig()
    M = _CubeMap(operator)
    shape = (operator.n1, operator.n2)

    def prior_prox(X, w):
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = tv_prox(
                X[:, j].reshape(rows, cols), w, config.tv_max_iters, config.tv_tol
            ).ravel()
        return out

    x_cert, raw, res, trace, converged, diverged = _two_function_solve(
        M, np.asarray(y, dtype=np.float64), epsilon, config, shape, prior_prox
    )
    cube = HsiCube(rows, cols, operator.n2, x_cert)
    result = SolveResult(
        s_hat=None,
        theta_hat=None,
        iterations=len(trace),
        residual=res,
        raw_residual=raw,
        converged=converged,
        diverged=diverged,
        trace=tuple(trace),
    )
    return cube, result


def l1_ss_synthesis_solve(y, operator: SamplingOperator, H: MixingMatrix,
                          wavelet: Wavelet2D, epsilon: float,
                          config: SolverConfig | None = None,
                          decouple: bool | None = None) -> SolveResult:
    """Source recovery as unconstrained synthesis-sparsity minimization.

    Minimizes the l1 norm of the stacked source coefficients over the
    measurement ball; no simplex constraint. Under the decorrelating scheme
    with epsilon = 0 the problem separates exactly into one recovery per
    source; that path is taken automatically (``decouple=False`` forces the
    joint solve, e.g. to cross-check the separation).
    """
    config = config if config is not None else SolverConfig()
    y = np.asarray(y, dtype=np.float64)
    L = SourceSpaceMap(operator, H)
    shape = (operator.n1, H.rho)
    separable = operator.scheme == "decorrelating" and epsilon == 0.0
    if decouple is None:
        decouple = separable
    elif decouple and not separable:
        raise ValueError("decoupling requires decorrelating measurements with epsilon=0")

    def prior_prox(t, w):
        return soft_threshold(t, w)

    if decouple:
        core = operator.core
        Y = y.reshape(core.m_hat, H.rho, order="F")
        thetas = []
        traces = []
        all_conv = True
        any_div = False
        for j in range(H.rho):
            Mj = _SynthesisMap(_CoreColumnsMap(core, 1), wavelet)
            t_cert, _, _, trace, conv, div = _two_function_solve(
                Mj, Y[:, j], 0.0, config, (operator.n1, 1), prior_prox
            )
            thetas.append(t_cert[:, 0])
            traces.append(trace)
            all_conv &= conv
            any_div |= div
        theta = np.column_stack(thetas)
        iters = max(len(t) for t in traces)
        merged = []
        for n in range(iters):
            res = math.sqrt(
                sum(t[min(n, len(t) - 1)][0] ** 2 for t in traces)
            )
            chg = max(t[min(n, len(t) - 1)][1] for t in traces)
            merged.append((res, chg))
        M = _SynthesisMap(L, wavelet)
        raw = float(np.linalg.norm(y - M.forward(theta)))
        return SolveResult(
            s_hat=wavelet.inverse_cols(theta),
            theta_hat=theta,
            iterations=iters,
            residual=raw,
            raw_residual=raw,
            converged=all_conv,
            diverged=any_div,
            trace=tuple(merged),
        )

    M = _SynthesisMap(L, wavelet)
    t_cert, raw, res, trace, converged, diverged = _two_function_solve(
        M, y, epsilon, config, shape, prior_prox
    )
    return SolveResult(
        s_hat=wavelet.inverse_cols(t_cert),
        theta_hat=t_cert,
        iterations=len(trace),
        residual=res,
        raw_residual=raw,
        converged=converged,
        diverged=diverged,
        trace=tuple(trace),
    )


def harden_sources(S_hat) -> SourceMatrix:
    """One-hot per-pixel labels from soft abundances (argmax, lowest index wins)."""
    S = np.asarray(S_hat.data if isinstance(S_hat, SourceMatrix) else S_hat, dtype=np.float64)
    out = np.zeros_like(S)
    out[np.arange(S.shape[0]), np.argmax(S, axis=1)] = 1.0
    return SourceMatrix(out, disjoint=True)


def reconstruct_cube(S_hat, H: MixingMatrix, shape: tuple[int, int] | None = None) -> HsiCube:
    """Cube estimate ``S_hat @ H.T``; error obeys
    ``||X - X_hat||_F <= sigma_max(H) * ||S - S_hat||_F``."""
    S = np.asarray(S_hat.data if isinstance(S_hat, SourceMatrix) else S_hat, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] != H.rho:
        raise ValueError(f"expected (n1, {H.rho}) sources")
    rows, cols = shape if shape is not None else (S.shape[0], 1)
    if rows * cols != S.shape[0]:
        raise ValueError("shape does not factor the pixel count")
    return HsiCube(rows, cols, H.n2, S @ H.data.T)
