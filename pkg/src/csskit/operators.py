"""Matrix-free sampling operators for the three acquisition schemes.

Schemes, acting on a cube ``X`` of shape ``(n1, n2)`` with vectorization
``ravel(order="F")``:

- ``dense``: one unstructured operator on the stacked vector, ``y = A X_vec``.
  Materialized explicitly at desk scale (baseline only).
- ``uniform``: the same core operator ``A_core`` (shape ``m_hat x n1``) on
  every channel, ``Y = A_core @ X``, transmitted as ``vec(Y)``.
- ``decorrelating``: pseudo-inverse mixing composed with the core, so the
  measurements of ``X = S @ H.T`` reduce to per-source core samples:
  ``vec(A_core @ X @ pinv(H).T) = vec(A_core @ S)``. The mixing matrix drops
  out of the recovery problem entirely.

All operators are pure deterministic functions of ``(kind, dims, seed)`` and
immutable after construction; ``forward``/``adjoint`` are re-entrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import MixingMatrix

CORE_KINDS = ("gaussian", "bernoulli", "random-convolution")
SCHEMES = ("dense", "uniform", "decorrelating")


class NotTightFrame(ValueError):
    """Operator does not satisfy forward(adjoint(.)) = nu * identity."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class CoreOperator:
    """The ``m_hat x n1`` core sampling map applied per source or channel.

    gaussian: i.i.d. N(0, 1/m_hat) entries. bernoulli: +-1/sqrt(m_hat)
    equiprobable. random-convolution: sqrt(n1/m_hat) times a random row
    subset of the unitary circular convolution ifft(sigma * fft(x)) with
    conjugate-symmetric unit-modulus phases sigma (real output); rows are
    drawn uniformly without replacement. The random-convolution core is a
    tight frame: forward(adjoint(y)) = (n1/m_hat) * y exactly.

    ``forward``/``adjoint`` accept vectors of length ``n1``/``m_hat`` or
    matrices with that many rows (columns mapped independently).
    """

    def __init__(self, kind: str, m_hat: int, n1: int, seed: int):
        if kind not in CORE_KINDS:
            raise ValueError(f"unknown core kind {kind!r}")
        if not 1 <= m_hat <= n1:
            raise ValueError(f"need 1 <= m_hat <= n1, got m_hat={m_hat}, n1={n1}")
        self.kind = kind
        self.m_hat = int(m_hat)
        self.n1 = int(n1)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        if kind == "gaussian":
            self._mat = rng.normal(0.0, 1.0 / math.sqrt(m_hat), size=(m_hat, n1))
        elif kind == "bernoulli":
            self._mat = (2.0 * rng.integers(0, 2, size=(m_hat, n1)) - 1.0) / math.sqrt(m_hat)
        else:
            if not _is_pow2(n1):
                raise ValueError("random-convolution needs n1 a power of two")
            sigma = np.empty(n1, dtype=np.complex128)
            half = n1 // 2
            if half >= 1:
                theta = rng.uniform(0.0, 2.0 * np.pi, size=max(half - 1, 0))
                signs = 2.0 * rng.integers(0, 2, size=2) - 1.0
                sigma[0] = signs[0]
                sigma[half] = signs[1]
                sigma[1:half] = np.exp(1j * theta)
                sigma[half + 1 :] = np.conj(sigma[1:half][::-1])
            else:
                sigma[0] = 2.0 * rng.integers(0, 2) - 1.0
            self._sigma = sigma
            self._omega = rng.choice(n1, size=m_hat, replace=False)
            self._scale = math.sqrt(n1 / m_hat)

    @property
    def nu(self) -> float | None:
        """Tight-frame constant, or None when the core is not a tight frame."""
        if self.kind == "random-convolution":
            return self.n1 / self.m_hat
        return None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n1:
            raise ValueError(f"expected {self.n1} rows, got {x.shape[0]}")
        if self.kind != "random-convolution":
            return self._mat @ x
        spec = self._sigma if x.ndim == 1 else self._sigma[:, None]
        conv = np.fft.ifft(spec * np.fft.fft(x, axis=0), axis=0).real
        return self._scale * conv[self._omega]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != self.m_hat:
            raise ValueError(f"expected {self.m_hat} rows, got {y.shape[0]}")
        if self.kind != "random-convolution":
            return self._mat.T @ y
        z = np.zeros((self.n1,) + y.shape[1:], dtype=np.float64)
        z[self._omega] = y
        spec = np.conj(self._sigma) if y.ndim == 1 else np.conj(self._sigma)[:, None]
        return self._scale * np.fft.ifft(spec * np.fft.fft(z, axis=0), axis=0).real

    def as_matrix(self) -> np.ndarray:
        """Dense ``m_hat x n1`` realization (oracles and the dense scheme)."""
        if self.kind != "random-convolution":
            return self._mat.copy()
        # circulant with first column ifft(sigma), restricted to sampled rows
        c = np.fft.ifft(self._sigma).real
        idx = (self._omega[:, None] - np.arange(self.n1)[None, :]) % self.n1
        return self._scale * c[idx]


def make_core_operator(kind: str, m_hat: int, n1: int, seed: int) -> CoreOperator:
    """Construct the core sampling operator for ``(kind, m_hat, n1, seed)``."""
    return CoreOperator(kind, m_hat, n1, seed)


def verify_tight_frame(core, tol: float = 1e-8) -> float:
    """Probe forward(adjoint(.)) on all output-space basis vectors.

    Returns the constant ``nu`` when the Gram deviates from ``nu * Id`` by
    less than ``tol`` (relative to nu); raises :class:`NotTightFrame`
    otherwise. Gaussian/bernoulli cores are expected to fail.
    """
    m = core.m_hat
    gram = core.forward(core.adjoint(np.eye(m)))
    nu = core.n1 / core.m_hat
    dev = np.abs(gram - nu * np.eye(m)).max()
    if dev >= tol * nu:
        raise NotTightFrame(f"max deviation {dev:.3e} >= {tol:.1e} * nu")
    return nu


def operator_norm(op, input_shape, iters: int = 50, seed: int = 0) -> float:
    """Largest singular value of a forward/adjoint pair by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(input_shape)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(int(iters)):
        w = op.adjoint(op.forward(v))
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
    return math.sqrt(lam)


class SamplingOperator:
    """Scheme-tagged acquisition map from a cube to a measurement vector.

    Use :func:`make_sampling_operator` to construct. ``forward`` consumes an
    ``(n1, n2)`` cube matrix (the decorrelating scheme also accepts an
    ``(n1, rho)`` source matrix, selected by column count or the explicit
    ``space`` argument) and emits the measurement vector in pixel-major
    order. ``adjoint`` is the exact transpose of the cube-space map.
    """

    def __init__(self, scheme: str, core: CoreOperator, n1: int, n2: int,
                 mixing: MixingMatrix | None = None):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if scheme == "decorrelating" and mixing is None:
            raise ValueError("decorrelating scheme requires the mixing matrix")
        if scheme == "dense":
            if core.n1 != n1 * n2:
                raise ValueError("dense core must act on the stacked cube vector")
        elif core.n1 != n1:
            raise ValueError(f"core acts on {core.n1} pixels, cube has {n1}")
        if mixing is not None and mixing.n2 != n2:
            raise ValueError(f"mixing has {mixing.n2} channels, cube has {n2}")
        self.scheme = scheme
        self.core = core
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.mixing = mixing
        self._dense_mat = core.as_matrix() if scheme == "dense" else None

    @property
    def rho(self) -> int | None:
        return None if self.mixing is None else self.mixing.rho

    @property
    def m(self) -> int:
        if self.scheme == "dense":
            return self.core.m_hat
        if self.scheme == "uniform":
            return self.core.m_hat * self.n2
        return self.core.m_hat * self.mixing.rho

    @property
    def nu(self) -> float | None:
        """Tight-frame constant of the cube-space map, if any."""
        if self.scheme in ("dense", "uniform"):
            return self.core.nu
        return None  # pinv(H) spoils tightness in cube space

    def _resolve_space(self, arr: np.ndarray, space: str | None) -> str:
        if self.scheme != "decorrelating":
            return "data"
        if space is not None:
            if space not in ("data", "sources"):
                raise ValueError("space must be 'data' or 'sources'")
            return space
        rho = self.mixing.rho
        if self.n2 == rho:
            raise ValueError("n2 == rho is ambiguous; pass space= explicitly")
        if arr.shape[1] == self.n2:
            return "data"
        if arr.shape[1] == rho:
            return "sources"
        raise ValueError(f"got {arr.shape[1]} columns, expected {self.n2} or {rho}")

    def forward(self, arr: np.ndarray, space: str | None = None) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != self.n1:
            raise ValueError(f"expected an ({self.n1}, .) matrix")
        if self.scheme == "dense":
            if arr.shape[1] != self.n2:
                raise ValueError(f"expected {self.n2} channels")
            return self._dense_mat @ arr.ravel(order="F")
        if self.scheme == "uniform":
            if arr.shape[1] != self.n2:
                raise ValueError(f"expected {self.n2} channels")
            return self.core.forward(arr).ravel(order="F")
        if self._resolve_space(arr, space) == "data":
            arr = arr @ self.mixing.pinv.T
        return self.core.forward(arr).ravel(order="F")

    def adjoint(self, y: np.ndarray, space: str | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError(f"expected measurement vector of length {self.m}")
        if self.scheme == "dense":
            return (self._dense_mat.T @ y).reshape(self.n1, self.n2, order="F")
        if self.scheme == "uniform":
            return self.core.adjoint(y.reshape(self.core.m_hat, self.n2, order="F"))
        Y = y.reshape(self.core.m_hat, self.mixing.rho, order="F")
        back = self.core.adjoint(Y)
        if space == "sources":
            return back
        return back @ self.mixing.pinv

    def y_as_matrix(self, y: np.ndarray) -> np.ndarray:
        """Unstack a measurement vector into its ``(m_hat, channels)`` matrix."""
        if self.scheme == "dense":
            raise ValueError("dense measurements have no matrix layout")
        cols = self.n2 if self.scheme == "uniform" else self.mixing.rho
        return np.asarray(y, dtype=np.float64).reshape(self.core.m_hat, cols, order="F")


def make_sampling_operator(scheme: str, kind: str, n1: int, n2: int, seed: int,
                           m_hat: int | None = None, m: int | None = None,
                           mixing: MixingMatrix | None = None) -> SamplingOperator:
    """Build a sampling operator; ``m_hat`` sizes the per-block core
    (uniform/decorrelating), ``m`` the dense one."""
    if scheme == "dense":
        if m is None:
            raise ValueError("dense scheme requires m")
        core = CoreOperator(kind, m, n1 * n2, seed)
    else:
        if m_hat is None:
            raise ValueError(f"{scheme} scheme requires m_hat")
        core = CoreOperator(kind, m_hat, n1, seed)
    return SamplingOperator(scheme, core, n1, n2, mixing=mixing)


class SourceSpaceMap:
    """The solver-facing linear map from sources ``S`` to measurements.

    decorrelating: block application of the core to each source column
    (tight frame whenever the core is). dense/uniform: the cube-space map
    composed with the mixing, ``S -> op(S @ H.T)``.
    """

    def __init__(self, op: SamplingOperator, mixing: MixingMatrix | None = None):
        mixing = mixing if mixing is not None else op.mixing
        if mixing is None:
            raise ValueError("source-space map requires a mixing matrix")
        self.op = op
        self.mixing = mixing
        self.shape_in = (op.n1, mixing.rho)
        self.m = op.m

    @property
    def nu(self) -> float | None:
        if self.op.scheme == "decorrelating":
            return self.op.core.nu
        return None

    def forward(self, S: np.ndarray) -> np.ndarray:
        if self.op.scheme == "decorrelating":
            return self.op.core.forward(np.asarray(S, dtype=np.float64)).ravel(order="F")
        return self.op.forward(np.asarray(S, dtype=np.float64) @ self.mixing.data.T)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        if self.op.scheme == "decorrelating":
            return self.op.adjoint(y, space="sources")
        return self.op.adjoint(y) @ self.mixing.data


@dataclass(frozen=True)
class MeasurementSet:
    """Measurement vector with its noise-ball radius and provenance.

    ``epsilon`` is the oracle bound: the exact norm of the injected noise
    (0 when noiseless). ``descriptor`` records whatever is needed to rebuild
    the acquisition (scheme, seeds, dims).
    """

    y: np.ndarray
    epsilon: float
    snr_db: float
    descriptor: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ValueError("measurements must be a finite vector")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if (self.epsilon == 0.0) != (self.snr_db == np.inf):
            raise ValueError("epsilon == 0 exactly when snr_db is infinite")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.y.size


def add_noise(y_clean: np.ndarray, snr_db: float, seed: int,
              descriptor: dict[str, Any] | None = None) -> MeasurementSet:
    """Add i.i.d. gaussian noise rescaled to hit ``snr_db`` exactly.

    ``20*log10(||y_clean|| / ||z||) == snr_db`` by post-hoc rescaling of the
    drawn noise; ``epsilon`` is the exact noise norm. ``snr_db=inf`` leaves
    the measurements untouched.
    """
    y_clean = np.asarray(y_clean, dtype=np.float64)
    if not snr_db > 0:
        raise ValueError("snr_db must be positive (use inf for noiseless)")
    desc = dict(descriptor or {})
    desc.update(noise_seed=int(seed), snr_db=float(snr_db))
    if snr_db == np.inf:
        return MeasurementSet(y_clean.copy(), 0.0, np.inf, desc)
    signal = np.linalg.norm(y_clean)
    if signal == 0.0:
        raise ValueError("cannot set a finite SNR on zero measurements")
    z = np.random.default_rng(seed).standard_normal(y_clean.size)
    z *= (signal * 10.0 ** (-snr_db / 20.0)) / np.linalg.norm(z)
    return MeasurementSet(y_clean + z, float(np.linalg.norm(z)), float(snr_db), desc)


def decorrelate_measurements(Y: np.ndarray, H: MixingMatrix | np.ndarray) -> tuple[np.ndarray, float]:
    """Post-process uniform measurements: ``Y_star = Y @ pinv(H).T``.

    For ``Y = A_core @ X @ ...`` with ``X = S @ H.T`` this recovers the
    per-source core samples ``A_core @ S``. Returns ``(Y_star, z_gain)``
    where ``z_gain = sigma_max(pinv(H))`` rescales a noise-norm bound.
    """
    if not isinstance(H, MixingMatrix):
        H = MixingMatrix(H)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != H.n2:
        raise ValueError(f"expected measurements with {H.n2} columns")
    z_gain = float(1.0 / H.singular_values[-1])
    return Y @ H.pinv.T, z_gain
