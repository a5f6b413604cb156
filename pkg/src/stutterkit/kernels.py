"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback with identical semantics. The active backend is picked once at
import time:

* ``STUTTERKIT_NUMBA=0`` (or ``STUTTERKIT_DETERMINISTIC=1``) forces the
  numpy path,
* otherwise numba is used when importable, numpy when it is not.

``BACKEND`` records the choice; ``get_impl(name)`` exposes both paths so
tests and the kernel benchmark can compare them directly.
"""

from __future__ import annotations

import math
import os
import types

import numpy as np
from scipy.special import erf as _erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def _np_gelu_fwd(x):
    return 0.5 * x * (1.0 + _erf(x * _INV_SQRT2))


def _np_gelu_bwd(x, dy):
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def _np_softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_rows_bwd(p, dp):
    inner = (dp * p).sum(axis=1, keepdims=True)
    return p * (dp - inner)


def _np_layernorm_fwd(x, w, b, eps):
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    return xhat * w + b, xhat, rstd


def _np_layernorm_bwd_dx(dyw, xhat, rstd):
    n = xhat.shape[1]
    mean_dyw = dyw.sum(axis=1, keepdims=True) / n
    mean_dyw_xhat = (dyw * xhat).sum(axis=1, keepdims=True) / n
    return (dyw - mean_dyw - xhat * mean_dyw_xhat) * rstd[:, None]


def _np_adamw_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / bc1
    vhat = v / bc2
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)


def _np_box_smooth_rows(x, half):
    """Mean filter of width 2*half+1 along axis 1, edges clipped."""
    n = x.shape[1]
    out = np.empty_like(x)
    padded = np.concatenate(
        [np.zeros((x.shape[0], 1), x.dtype), np.cumsum(x, axis=1)], axis=1
    )
    for j in range(n):
        lo = max(0, j - half)
        hi = min(n - 1, j + half)
        out[:, j] = (padded[:, hi + 1] - padded[:, lo]) / (hi - lo + 1)
    return out


_NUMPY_IMPL = types.SimpleNamespace(
    name="numpy",
    gelu_fwd=_np_gelu_fwd,
    gelu_bwd=_np_gelu_bwd,
    softmax_rows=_np_softmax_rows,
    softmax_rows_bwd=_np_softmax_rows_bwd,
    layernorm_fwd=_np_layernorm_fwd,
    layernorm_bwd_dx=_np_layernorm_bwd_dx,
    adamw_update=_np_adamw_update,
    box_smooth_rows=_np_box_smooth_rows,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_impl():
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def gelu_fwd(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_out = out.ravel()
        for i in prange(flat_x.shape[0]):
            xi = flat_x[i]
            flat_out[i] = 0.5 * xi * (1.0 + math.erf(xi * _INV_SQRT2))
        return out

    @njit(cache=True, parallel=True)
    def gelu_bwd(x, dy):
        dx = np.empty_like(x)
        flat_x = x.ravel()
        flat_dy = dy.ravel()
        flat_dx = dx.ravel()
        for i in prange(flat_x.shape[0]):
            xi = flat_x[i]
            cdf = 0.5 * (1.0 + math.erf(xi * _INV_SQRT2))
            pdf = _INV_SQRT2PI * math.exp(-0.5 * xi * xi)
            flat_dx[i] = flat_dy[i] * (cdf + xi * pdf)
        return dx

    @njit(cache=True, parallel=True)
    def softmax_rows(x):
        n, m = x.shape
        out = np.empty_like(x)
        for i in prange(n):
            row_max = x[i, 0]
            for j in range(1, m):
                if x[i, j] > row_max:
                    row_max = x[i, j]
            total = 0.0
            for j in range(m):
                e = math.exp(x[i, j] - row_max)
                out[i, j] = e
                total += e
            for j in range(m):
                out[i, j] /= total
        return out

    @njit(cache=True, parallel=True)
    def softmax_rows_bwd(p, dp):
        n, m = p.shape
        dx = np.empty_like(p)
        for i in prange(n):
            inner = 0.0
            for j in range(m):
                inner += dp[i, j] * p[i, j]
            for j in range(m):
                dx[i, j] = p[i, j] * (dp[i, j] - inner)
        return dx

    @njit(cache=True, parallel=True)
    def layernorm_fwd(x, w, b, eps):
        n, d = x.shape
        y = np.empty_like(x)
        xhat = np.empty_like(x)
        rstd = np.empty(n, x.dtype)
        for i in prange(n):
            mean = 0.0
            for j in range(d):
                mean += x[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                diff = x[i, j] - mean
                var += diff * diff
            var /= d
            r = 1.0 / math.sqrt(var + eps)
            rstd[i] = r
            for j in range(d):
                h = (x[i, j] - mean) * r
                xhat[i, j] = h
                y[i, j] = h * w[j] + b[j]
        return y, xhat, rstd

    @njit(cache=True, parallel=True)
    def layernorm_bwd_dx(dyw, xhat, rstd):
        n, d = xhat.shape
        dx = np.empty_like(xhat)
        for i in prange(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                s1 += dyw[i, j]
                s2 += dyw[i, j] * xhat[i, j]
            s1 /= d
            s2 /= d
            for j in range(d):
                dx[i, j] = (dyw[i, j] - s1 - xhat[i, j] * s2) * rstd[i]
        return dx

    @njit(cache=True, parallel=True)
    def adamw_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
        for i in prange(p.shape[0]):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            mhat = mi / bc1
            vhat = vi / bc2
            p[i] -= lr * (mhat / (math.sqrt(vhat) + eps) + weight_decay * p[i])

    @njit(cache=True, parallel=True)
    def box_smooth_rows(x, half):
        n, m = x.shape
        out = np.empty_like(x)
        for i in prange(n):
            for j in range(m):
                lo = j - half
                if lo < 0:
                    lo = 0
                hi = j + half
                if hi > m - 1:
                    hi = m - 1
                acc = 0.0
                for k in range(lo, hi + 1):
                    acc += x[i, k]
                out[i, j] = acc / (hi - lo + 1)
        return out

    return types.SimpleNamespace(
        name="numba",
        gelu_fwd=gelu_fwd,
        gelu_bwd=gelu_bwd,
        softmax_rows=softmax_rows,
        softmax_rows_bwd=softmax_rows_bwd,
        layernorm_fwd=layernorm_fwd,
        layernorm_bwd_dx=layernorm_bwd_dx,
        adamw_update=adamw_update,
        box_smooth_rows=box_smooth_rows,
    )


def _pick_backend():
    flag = os.environ.get("STUTTERKIT_NUMBA", "").strip().lower()
    deterministic = os.environ.get("STUTTERKIT_DETERMINISTIC", "").strip().lower()
    if flag in {"0", "false", "off"} or deterministic in {"1", "true", "on"}:
        return _NUMPY_IMPL
    try:
        return _build_numba_impl()
    except ImportError:
        return _NUMPY_IMPL


_ACTIVE = _pick_backend()
BACKEND = _ACTIVE.name

gelu_fwd = _ACTIVE.gelu_fwd
gelu_bwd = _ACTIVE.gelu_bwd
softmax_rows = _ACTIVE.softmax_rows
softmax_rows_bwd = _ACTIVE.softmax_rows_bwd
layernorm_fwd = _ACTIVE.layernorm_fwd
layernorm_bwd_dx = _ACTIVE.layernorm_bwd_dx
adamw_update = _ACTIVE.adamw_update
box_smooth_rows = _ACTIVE.box_smooth_rows


def get_impl(name: str):
    """Return the kernel namespace for ``name`` ("numpy" or "numba")."""
    if name == "numpy":
        return _NUMPY_IMPL
    if name == "numba":
        return _build_numba_impl()
    raise ValueError(f"unknown kernel backend: {name!r}")


def warm_up() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    x = np.linspace(-1.0, 1.0, 8).reshape(2, 4)
    w = np.ones(4)
    b = np.zeros(4)
    gelu_fwd(x)
    gelu_bwd(x, x)
    p = softmax_rows(x)
    softmax_rows_bwd(p, x)
    _, xhat, rstd = layernorm_fwd(x, w, b, 1e-5)
    layernorm_bwd_dx(x, xhat, rstd)
    adamw_update(w.copy(), b, b.copy(), b.copy(), 0.1, 0.9, 0.999, 1e-8, 0.0, 0.1, 0.001)
    box_smooth_rows(x, 1)
