"""Forward/backward pairs for the differentiable building blocks.

Each ``*_fwd`` returns ``(out, cache)``; the matching ``*_bwd`` takes the
upstream gradient and the cache. All functions accept arbitrary leading
batch axes. Parameters that broadcast over those axes get their gradients
reduced back with :func:`sum_to`.
"""
from __future__ import annotations

import math

import numpy as np

from .tensor import DTYPE, LN_EPS, softmax_rows


def sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == tuple(shape):
        return g
    lead = g.ndim - len(shape)
    g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _t(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# -- linear ---------------------------------------------------------------

def linear_fwd(x, w, b=None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def linear_bwd(dy, cache):
    """dx keeps dy's batch shape; reduce it with sum_to when x was broadcast."""
    x, w, has_b = cache
    dx = dy @ w.T
    xb = np.broadcast_to(x, dy.shape[:-1] + x.shape[-1:])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = xb.reshape(-1, x.shape[-1]).T @ dy2
    db = dy2.sum(axis=0) if has_b else None
    return dx, dw, db


# -- activations ------------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu_fwd(x):
    u = _GELU_C * (x + 0.044715 * (x * x * x))
    th = np.tanh(u)
    return 0.5 * x * (1.0 + th), (x, th)


def gelu_bwd(dy, cache):
    x, th = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
    return dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * du)


# -- layer norm -------------------------------------------------------------

def layer_norm_fwd(x, gamma, beta, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_bwd(dy, cache):
    xhat, inv, gamma = cache
    n = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, n).sum(axis=0)
    dbeta = dy.reshape(-1, n).sum(axis=0)
    dxhat = dy * gamma
    dx = inv / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


# -- softmax ------------------------------------------------------------------

def softmax_bwd(dp, p):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


# -- attention ----------------------------------------------------------------

def _split_heads(x, h):
    if h == 1:
        return x
    *lead, n, dim = x.shape
    return np.moveaxis(x.reshape(*lead, n, h, dim // h), -2, -3)


def _merge_heads(x, h):
    if h == 1:
        return x
    x = np.moveaxis(x, -3, -2)
    *lead, n, hh, dh = x.shape
    return x.reshape(*lead, n, hh * dh)


def attention_fwd(q, k, v, bias=None, n_heads=1):
    """softmax(q k^T / sqrt(d_head) + bias) v, optionally split into heads.

    ``bias`` broadcasts against the (..., Lq, Lk) logits and is shared by all
    heads.
    """
    dh = q.shape[-1] // n_heads
    scale = 1.0 / math.sqrt(dh)
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    logits = (qh @ _t(kh)) * scale
    if bias is not None:
        b = bias if n_heads == 1 else np.expand_dims(bias, -3)
        logits = logits + b
    p = softmax_rows(logits)
    out = _merge_heads(p @ vh, n_heads)
    return out, (qh, kh, vh, p, scale, n_heads, None if bias is None else np.shape(bias))


def attention_bwd(dout, cache):
    """Returns (dq, dk, dv, dbias); dbias is the gradient w.r.t. the logits,
    summed over heads but not reduced to the bias' own shape."""
    qh, kh, vh, p, scale, h, bias_shape = cache
    do = _split_heads(dout, h)
    dp = do @ _t(vh)
    dvh = _t(p) @ do
    dlog = softmax_bwd(dp, p)
    dqh = (dlog @ kh) * scale
    dkh = (_t(dlog) @ qh) * scale
    dbias = None
    if bias_shape is not None:
        dbias = dlog if h == 1 else dlog.sum(axis=-3)
    return _merge_heads(dqh, h), _merge_heads(dkh, h), _merge_heads(dvh, h), dbias


# -- similarity -------------------------------------------------------------

def cosine01_fwd(u, v):
    """(cos(u, v) + 1) / 2 over the last axis, clamped to [0, 1].

    Zero-norm pairs map to 0.5 and carry no gradient.
    """
    nu = np.sqrt((u * u).sum(axis=-1))
    nv = np.sqrt((v * v).sum(axis=-1))
    denom = nu * nv
    ok = denom > 0
    safe = np.where(ok, denom, 1.0)
    c = np.where(ok, (u * v).sum(axis=-1) / safe, 0.0)
    raw = (c + 1.0) * 0.5
    h = np.clip(raw, 0.0, 1.0)
    active = ok & (raw > 0.0) & (raw < 1.0)
    return h, (u, v, nu, nv, c, active)


def cosine01_bwd(dh, cache):
    u, v, nu, nv, c, active = cache
    dc = np.where(active, 0.5 * dh, 0.0)
    nu_s = np.where(nu > 0, nu, 1.0)[..., None]
    nv_s = np.where(nv > 0, nv, 1.0)[..., None]
    cc = c[..., None]
    dcx = dc[..., None]
    du = dcx * (v / (nu_s * nv_s) - cc * u / nu_s**2)
    dv = dcx * (u / (nu_s * nv_s) - cc * v / nv_s**2)
    return du, dv


# -- clamped log / power ------------------------------------------------------

def clamped_log_fwd(h, floor):
    hc = np.maximum(h, floor)
    return np.log(hc), (h, hc, floor)


def clamped_log_bwd(dy, cache):
    h, hc, floor = cache
    return np.where(h > floor, dy / hc, 0.0)


def clamped_pow_fwd(h, floor, power):
    hc = np.maximum(h, floor)
    if power == 0:
        return np.ones_like(hc), (h, hc, floor, power)
    return hc**power, (h, hc, floor, power)


def clamped_pow_bwd(dy, cache):
    h, hc, floor, power = cache
    if power == 0:
        return np.zeros_like(h, dtype=DTYPE)
    return np.where(h > floor, dy * power * hc ** (power - 1), 0.0)
