"""Measurement-count bounds, recovery-guarantee constants, and empirical
restricted-isometry estimation.

The bound formulas are scaling laws: leading constants default to 1 and the
results are meaningful comparatively (across schemes), not absolutely. All
logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidRegime(ValueError):
    """Sparsity too large for the bound's logarithmic factor to be positive."""


BOUND_SCHEMES = (
    "dense-bpdn",
    "dense-ss",
    "uniform-ss",
    "decorrelating-ss",
    "decorrelating-ss-decoupled",
)


@dataclass(frozen=True)
class BoundQuery:
    """Inputs for a measurement-count estimate."""

    scheme: str
    k: int
    n1: int
    n2: int
    rho: int
    xi: float = 1.0
    c: float = 1.0

    def __post_init__(self) -> None:
        if self.scheme not in BOUND_SCHEMES:
            raise ValueError(f"unknown bound scheme {self.scheme!r}")
        if self.k < 1:
            raise ValueError("sparsity k must be >= 1")
        if min(self.n1, self.n2, self.rho) < 1:
            raise ValueError("dims must be positive")
        if self.xi < 1.0:
            raise ValueError("condition number must be >= 1")
        if self.c <= 0:
            raise ValueError("leading constant must be positive")


@dataclass(frozen=True)
class BoundEstimate:
    """A measurement-count estimate with the formula it came from."""

    m: float
    formula: str
    note: str = "scaling law with unit leading constant; compare across schemes"


@dataclass(frozen=True)
class GuaranteeConstants:
    """Recovery-guarantee constants; unset (None) when the regime is invalid."""

    alpha: float | None
    beta: float | None
    c0p: float | None
    c1p: float | None
    tau: float
    gamma: float
    valid: bool


def _log_factor(num: float, den: float) -> float:
    if num <= den:
        raise InvalidRegime(
            f"log({num:g}/{den:g}) <= 0: sparsity too large for this bound"
        )
    return math.log(num / den)


def measurement_bound(q: BoundQuery) -> BoundEstimate:
    """Evaluate the per-scheme measurement-count scaling law.

    dense-bpdn:   c * n2 * k * ln(n1 / k)
    dense-ss:     c * g * k * ln(rho * n1 / (g * k)),  g = 1 + 2 * xi**2
    uniform-ss:   c * n2 * k * ln(n1 / k)
    decorrelating-ss:           c * rho * k * ln(n1 / k)
    decorrelating-ss-decoupled: c * k * ln(rho * n1 / k)
    """
    k, n1, n2, rho, c = q.k, q.n1, q.n2, q.rho, q.c
    if q.scheme == "dense-bpdn":
        val = c * n2 * k * _log_factor(n1, k)
        formula = "c*n2*k*ln(n1/k)"
    elif q.scheme == "dense-ss":
        g = gamma_prime(q.xi)
        val = c * g * k * _log_factor(rho * n1, g * k)
        formula = "c*(1+2*xi^2)*k*ln(rho*n1/((1+2*xi^2)*k))"
    elif q.scheme == "uniform-ss":
        val = c * n2 * k * _log_factor(n1, k)
        formula = "c*n2*k*ln(n1/k)"
    elif q.scheme == "decorrelating-ss":
        val = c * rho * k * _log_factor(n1, k)
        formula = "c*rho*k*ln(n1/k)"
    else:  # decorrelating-ss-decoupled
        val = c * k * _log_factor(rho * n1, k)
        formula = "c*k*ln(rho*n1/k)"
    return BoundEstimate(m=float(val), formula=formula)


def gamma_prime(xi: float) -> float:
    """Sparsity inflation factor 1 + 2*xi**2 of the joint dense bound."""
    if xi < 1.0:
        raise ValueError("condition number must be >= 1")
    return 1.0 + 2.0 * xi * xi


def theorem1_constants(delta_star: float, L: float, U: float, tau: float) -> GuaranteeConstants:
    """Error-bound constants for sparse recovery at inflated support size.

    With xi = U/L and d = delta_star:

        alpha = 2 / (sqrt(tau*(1-d)/(1+d))/xi - 1)
        beta  = 2*U*sqrt(tau*(1+d)) / (same denominator)
        c0p   = alpha + (2 + alpha)/sqrt(tau)
        c1p   = beta * (1 + 1/sqrt(tau))

    The guarantee is valid iff d < 1/3 and tau >= 2*xi**2 (equivalently the
    support inflation gamma = 1 + tau is at least 1 + 2*xi**2); a
    nonpositive denominator also invalidates it, leaving the constants unset.
    """
    if not 0.0 <= delta_star < 1.0:
        raise ValueError("delta_star must lie in [0, 1)")
    if L <= 0 or U < L or tau <= 0:
        raise ValueError("need 0 < L <= U and tau > 0")
    xi = U / L
    gamma = 1.0 + tau
    denom = math.sqrt(tau * (1.0 - delta_star) / (1.0 + delta_star)) / xi - 1.0
    valid = delta_star < 1.0 / 3.0 and tau >= 2.0 * xi * xi and denom > 0.0
    if denom <= 0.0 or not valid:
        return GuaranteeConstants(None, None, None, None, tau=tau, gamma=gamma, valid=False)
    alpha = 2.0 / denom
    beta = 2.0 * U * math.sqrt(tau * (1.0 + delta_star)) / denom
    return GuaranteeConstants(
        alpha=alpha,
        beta=beta,
        c0p=alpha + (2.0 + alpha) / math.sqrt(tau),
        c1p=beta * (1.0 + 1.0 / math.sqrt(tau)),
        tau=tau,
        gamma=gamma,
        valid=True,
    )


def kron_rip_bound(deltas) -> float:
    """Isometry-constant bound for a Kronecker product: prod(1 + d_i) - 1."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0:
        raise ValueError("need at least one constant")
    if np.any(deltas < 0):
        raise ValueError("constants must be nonnegative")
    return float(np.prod(1.0 + deltas) - 1.0)


def _as_apply(obj, dim_hint=None):
    """Normalize an operator argument to (apply_fn, input_dim)."""
    if obj is None:
        return None, dim_hint
    if isinstance(obj, np.ndarray):
        if obj.ndim != 2:
            raise ValueError("matrix operators must be 2-D")
        return (lambda x: obj @ x), obj.shape[1]
    fwd = getattr(obj, "forward", None)
    if fwd is None:
        raise ValueError("operator must be an ndarray or expose forward()")
    dim = getattr(obj, "n1", dim_hint)
    if dim is None:
        raise ValueError("cannot infer operator input dimension")
    return fwd, int(dim)


def empirical_rip(op, k: int, trials: int, seed: int, dictionary=None,
                  dim: int | None = None) -> tuple[float, float, float]:
    """Monte-Carlo isometry estimate over random k-sparse unit probes.

    Probes have uniformly random support and gaussian coefficients,
    normalized to unit norm; the map is ``op`` composed with ``dictionary``
    when one is given (probes live in the dictionary's domain). Returns
    ``(L_hat, U_hat, delta_hat)`` with ``delta_hat = max(1 - L_hat**2,
    U_hat**2 - 1)``. This samples finitely many supports and directions, so
    it is a LOWER bound on the true restricted-isometry constant.
    """
    dict_apply, dict_dim = _as_apply(dictionary, dim)
    op_apply, op_dim = _as_apply(op, dim if dict_apply is None else None)
    n = dict_dim if dict_apply is not None else op_dim
    if n is None:
        raise ValueError("pass dim= when operators do not expose their input size")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}")
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(int(trials)):
        x = np.zeros(n)
        support = rng.choice(n, size=k, replace=False)
        coefs = rng.standard_normal(k)
        x[support] = coefs / np.linalg.norm(coefs)
        if dict_apply is not None:
            x = dict_apply(x)
        if op_apply is not None:
            x = op_apply(x)
        nrm = np.linalg.norm(x)
        lo = min(lo, nrm)
        hi = max(hi, nrm)
    return float(lo), float(hi), float(max(1.0 - lo * lo, hi * hi - 1.0))
