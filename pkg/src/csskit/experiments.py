"""Experiment harness: sweep sampling rates, noise levels, and trials over
a scene/method combination, producing deterministic result rows.

Every grid cell derives its own seeds from the config seed via
``SeedSequence(seed, spawn_key=(rate_index, snr_index, trial))``, so results
are a pure function of the config regardless of execution order. The CSV
omits wall-clock time for that reason; timing stays on the in-memory rows.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import MixingMatrix
from .operators import SCHEMES, add_noise, make_sampling_operator
from .scenes import Scene, SceneSpec, accuracy, generate_scene, reconstruction_snr
from .solvers import (
    RecoveryProblem,
    SolverConfig,
    bpdn_solve,
    iht_ss_solve,
    l1_ss_synthesis_solve,
    ppxa_solve,
    reconstruct_cube,
    tvdn_solve,
)
from .wavelets import Wavelet2D

METHODS = ("ppxa-tv", "ppxa-l1", "iht", "bpdn", "tvdn", "l1-ss")
SOURCE_METHODS = ("ppxa-tv", "ppxa-l1", "iht", "l1-ss")

CSV_FIELDS = [
    "rows", "cols", "channels", "rho", "partition", "disjoint", "target_xi",
    "scheme", "core", "method", "wavelet", "rate", "snr_db", "trial", "seed",
    "reconstruction_snr_db", "source_snr_db", "accuracy", "iterations",
    "converged", "diverged",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid: scene x scheme x method over rates/SNRs/trials.

    ``rates`` size the acquisition: core rows per block ``round(rate*n1)``
    for the blockwise schemes, total rows ``round(rate*n1*n2)`` for dense.
    """

    scene: SceneSpec
    scheme: str
    method: str = "ppxa-tv"
    core: str = "random-convolution"
    rates: tuple = (0.25,)
    snrs_db: tuple = (math.inf,)
    trials: int = 1
    seed: int = 0
    wavelet: str = "haar"
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: str | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method in ("bpdn", "tvdn") and self.scheme == "decorrelating":
            raise ValueError("cube baselines need dense or uniform measurements")
        if not all(0.0 < r <= 1.0 for r in self.rates):
            raise ValueError("rates must lie in (0, 1]")
        if not self.rates or not self.snrs_db:
            raise ValueError("need at least one rate and one snr")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ResultRow:
    rows: int
    cols: int
    channels: int
    rho: int
    partition: str
    disjoint: bool
    target_xi: float | None
    scheme: str
    core: str
    method: str
    wavelet: str
    rate: float
    snr_db: float
    trial: int
    seed: int
    reconstruction_snr_db: float
    source_snr_db: float | None
    accuracy: float | None
    wall_time_s: float
    iterations: int
    converged: bool
    diverged: bool


def _cell_seeds(config: ExperimentConfig, i_rate: int, i_snr: int, trial: int):
    ss = np.random.SeedSequence(config.seed, spawn_key=(i_rate, i_snr, trial))
    scene_seed, op_seed, noise_seed = (int(v) for v in ss.generate_state(3))
    return scene_seed, op_seed, noise_seed


def _operator_sizes(scheme: str, rate: float, n1: int, n2: int):
    if scheme == "dense":
        return None, max(1, min(n1 * n2, round(rate * n1 * n2)))
    return max(1, min(n1, round(rate * n1))), None


def _default_iht_k(scene: Scene, wavelet: Wavelet2D) -> int:
    theta = wavelet.forward_cols(np.asarray(scene.sources.data))
    return max(1, int(np.count_nonzero(np.abs(theta) > 1e-12)))


def _solve_cell(config: ExperimentConfig, scene: Scene, rate: float,
                snr_db: float, op_seed: int, noise_seed: int):
    spec = config.scene
    n1 = spec.rows * spec.cols
    m_hat, m = _operator_sizes(config.scheme, rate, n1, spec.channels)
    op = make_sampling_operator(
        config.scheme, config.core, n1, spec.channels, seed=op_seed,
        m_hat=m_hat, m=m, mixing=scene.mixing)
    y_clean = op.forward(np.asarray(scene.cube.data), space="data")
    mset = add_noise(y_clean, snr_db, noise_seed)
    wav = Wavelet2D(spec.rows, spec.cols, config.wavelet)
    solver = config.solver

    start = time.perf_counter()
    if config.method in ("ppxa-tv", "ppxa-l1", "iht"):
        prior = "l1-wavelet" if config.method == "ppxa-l1" else "tv"
        problem = RecoveryProblem(
            mset, op, wav, spec.rho, prior=prior, constraints=True,
            mixing=scene.mixing)
        if config.method == "iht":
            if solver.iht_k is None:
                solver = dataclasses.replace(solver, iht_k=_default_iht_k(scene, wav))
            result = iht_ss_solve(problem, solver)
        else:
            result = ppxa_solve(problem, solver)
        cube_hat = reconstruct_cube(result.s_hat, scene.mixing, (spec.rows, spec.cols))
        s_hat = result.s_hat
    elif config.method == "l1-ss":
        result = l1_ss_synthesis_solve(
            mset.y, op, scene.mixing, wav, mset.epsilon, solver)
        cube_hat = reconstruct_cube(result.s_hat, scene.mixing, (spec.rows, spec.cols))
        s_hat = result.s_hat
    elif config.method == "bpdn":
        cube_hat, result = bpdn_solve(mset.y, op, wav, mset.epsilon, solver)
        s_hat = None
    else:
        cube_hat, result = tvdn_solve(
            mset.y, op, mset.epsilon, solver, rows=spec.rows, cols=spec.cols)
        s_hat = None
    wall = time.perf_counter() - start

    rec_snr = reconstruction_snr(scene.cube, cube_hat)
    src_snr = None
    acc = None
    if s_hat is not None:
        src_snr = reconstruction_snr(np.asarray(scene.sources.data), s_hat)
        if spec.disjoint:
            acc = accuracy(scene.labels, s_hat)
    return cube_hat, result, rec_snr, src_snr, acc, wall


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run the full grid; rows come back in (rate, snr, trial) order.

    A diverged solve is recorded on its row and the sweep continues. When
    ``config.output`` is set the rows are also written as an RFC-4180 CSV
    (without the volatile wall-time column).
    """
    spec = config.scene
    cells = list(itertools.product(
        enumerate(config.rates), enumerate(config.snrs_db), range(config.trials)))

    def run_cell(cell):
        (i_rate, rate), (i_snr, snr_db), trial = cell
        scene_seed, op_seed, noise_seed = _cell_seeds(config, i_rate, i_snr, trial)
        scene = generate_scene(dataclasses.replace(spec, seed=scene_seed))
        _, result, rec_snr, src_snr, acc, wall = _solve_cell(
            config, scene, rate, snr_db, op_seed, noise_seed)
        return ResultRow(
            rows=spec.rows, cols=spec.cols, channels=spec.channels,
            rho=spec.rho, partition=spec.partition, disjoint=spec.disjoint,
            target_xi=spec.target_xi, scheme=config.scheme, core=config.core,
            method=config.method, wavelet=config.wavelet, rate=rate,
            snr_db=snr_db, trial=trial, seed=config.seed,
            reconstruction_snr_db=rec_snr, source_snr_db=src_snr,
            accuracy=acc, wall_time_s=wall, iterations=result.iterations,
            converged=result.converged, diverged=result.diverged)

    workers = int(os.environ.get("CSSKIT_THREADS", "1") or 1)
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]

    if config.output is not None:
        from .io import write_results_csv

        write_results_csv([dataclasses.asdict(r) for r in rows], CSV_FIELDS,
                          config.output)
    return rows
