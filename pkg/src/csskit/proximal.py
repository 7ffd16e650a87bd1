"""Proximity and projection operators used by the solvers.

TV convention (values are discretization dependent, so it is fixed here):
forward differences with replicate boundary, i.e. the gradient is zero past
the last row/column, and the isotropic per-pixel magnitude is summed. The
divergence below is the exact negative adjoint of that gradient.
"""

from __future__ import annotations

import numpy as np

#: Chambolle dual step; any value < 1/4 is provably convergent for this
#: gradient/divergence pair.
TV_DUAL_STEP = 0.249


def soft_threshold(v, alpha):
    """Elementwise shrinkage sign(v) * max(|v| - alpha, 0); prox of alpha*l1."""
    if alpha < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - alpha, 0.0)


def hard_threshold_topk(v, k):
    """Keep the k largest-magnitude entries, zero the rest.

    Ties break toward the lowest flat index (C order for nd input).
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    out = np.zeros_like(v)
    if k == 0:
        return out
    flat = v.ravel()
    # stable sort on (-|v|, index): equal magnitudes keep ascending index order
    order = np.argsort(-np.abs(flat), kind="stable")[:k]
    out.ravel()[order] = flat[order]
    return out


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad; last row/col of the dual field is ignored
    dx = np.zeros_like(px)
    if px.shape[0] > 1:
        dx[0, :] = px[0, :]
        dx[1:-1, :] = px[1:-1, :] - px[:-2, :]
        dx[-1, :] = -px[-2, :]
    dy = np.zeros_like(py)
    if py.shape[1] > 1:
        dy[:, 0] = py[:, 0]
        dy[:, 1:-1] = py[:, 1:-1] - py[:, :-2]
        dy[:, -1] = -py[:, -2]
    return dx + dy


def tv_norm(image):
    """Isotropic total variation under the module's discretization."""
    gx, gy = _grad(np.asarray(image, dtype=np.float64))
    return float(np.sum(np.sqrt(gx**2 + gy**2)))


def tv_prox(image, lam, max_iters=100, tol=1e-5):
    """Prox of lam*TV at ``image`` via Chambolle's dual projection.

    Iterates p <- (p + tau*grad(div p - image/lam)) / (1 + tau*|...|) and
    returns image - lam*div(p). Stops when the relative dual change drops
    below ``tol``. The ROF objective lam*TV(u) + 0.5*||u - image||^2 at the
    output never exceeds its value at the input (guarded explicitly).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2-D image")
    if lam == 0 or image.size < 2:
        return image.copy()
    px = np.zeros_like(image)
    py = np.zeros_like(image)
    scaled = image / lam
    for _ in range(int(max_iters)):
        gx, gy = _grad(_div(px, py) - scaled)
        mag = np.sqrt(gx**2 + gy**2)
        denom = 1.0 + TV_DUAL_STEP * mag
        px_new = (px + TV_DUAL_STEP * gx) / denom
        py_new = (py + TV_DUAL_STEP * gy) / denom
        change = np.sqrt(np.sum((px_new - px) ** 2 + (py_new - py) ** 2))
        base = max(np.sqrt(np.sum(px**2 + py**2)), 1e-12)
        px, py = px_new, py_new
        if change / base < tol:
            break
    u = image - lam * _div(px, py)
    if lam * tv_norm(u) + 0.5 * np.sum((u - image) ** 2) > lam * tv_norm(image):
        return image.copy()
    return u


def simplex_project_rows(S):
    """Euclidean projection of each row onto {w >= 0, sum w = 1}.

    Sort-and-threshold in one vectorized pass.
    """
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    n, d = S.shape
    u = -np.sort(-S, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, d + 1)
    cond = u * j > css - 1.0
    rho = d - np.argmax(cond[:, ::-1], axis=1)  # largest j satisfying cond
    theta = (css[np.arange(n), rho - 1] - 1.0) / rho
    return np.maximum(S - theta[:, None], 0.0)


def l2ball_project_tightframe(s, y, op, epsilon, nu=None):
    """Exact projection of ``s`` onto {x : ||y - op(x)|| <= epsilon}.

    Valid only when op is a tight frame (op o adjoint = nu * Id): the
    projection is s + (1/nu) * adjoint(r) * (1 - epsilon/||r||)_+ with
    r = y - op(s). epsilon = 0 degenerates to the affine projection.
    """
    nu = op.nu if nu is None else nu
    if nu is None:
        from .operators import NotTightFrame

        raise NotTightFrame("operator provides no tight-frame constant")
    s = np.asarray(s, dtype=np.float64)
    r = y - op.forward(s)
    rn = np.linalg.norm(r)
    if rn <= epsilon:
        return s.copy()
    return s + op.adjoint(r) * ((1.0 - epsilon / rn) / nu)


def l2ball_project_fb(s, y, op, epsilon, max_iters=200, tol=1e-6, op_norm=None):
    """Projection onto {x : ||y - op(x)|| <= epsilon} by dual forward-backward.

    Best effort for operators without a tight-frame constant. Returns
    ``(projection, converged)``; feasible inputs return unchanged.
    ``op_norm`` (an upper estimate of ||op||) is computed by power iteration
    when not supplied.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r0 = y - op.forward(s)
    if np.linalg.norm(r0) <= epsilon * (1.0 + 1e-9) + 1e-15:
        return s.copy(), True
    if op_norm is None:
        from .operators import operator_norm

        op_norm = operator_norm(op, s.shape)
    sigma = 1.0 / max(op_norm**2, 1e-30)
    v = np.zeros_like(y)
    u_prev = None
    converged = False
    for _ in range(int(max_iters)):
        u = s - op.adjoint(v)
        w = v / sigma + op.forward(u)
        # projection of w onto the epsilon-ball around y
        d = w - y
        dn = np.linalg.norm(d)
        proj = y + d * (epsilon / dn) if dn > epsilon else w
        v = sigma * (w - proj)
        if u_prev is not None and np.linalg.norm(u - u_prev) / max(
            np.linalg.norm(u_prev), 1.0
        ) < tol:
            converged = True
            break
        u_prev = u
    return s - op.adjoint(v), converged
