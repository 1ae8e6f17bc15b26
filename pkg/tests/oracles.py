"""Explicit-loop reference implementations used only by the tests."""
import math

import numpy as np


def vec_mat(x, w):
    return np.array([sum(x[i] * w[i, j] for i in range(len(x))) for j in range(w.shape[1])])


def gelu(x):
    return 0.5 * x * (1 + math.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))


def layer_norm(x, gamma, beta, eps=1e-5):
    n = len(x)
    mu = sum(x) / n
    var = sum((xi - mu) ** 2 for xi in x) / n
    return np.array([(x[i] - mu) / math.sqrt(var + eps) * gamma[i] + beta[i] for i in range(n)])


def attend(query, keys, values, scale, bias=None):
    scores = [sum(query[c] * k[c] for c in range(len(query))) * scale for k in keys]
    if bias is not None:
        scores = [s + b for s, b in zip(scores, bias)]
    top = max(scores)
    w = [math.exp(s - top) for s in scores]
    z = sum(w)
    out = np.zeros(len(values[0]))
    for wi, v in zip(w, values):
        out += wi / z * np.asarray(v)
    return out


def qformer(x, p):
    layer = p.layers[0]
    dim = p.queries.shape[1]
    keys = [vec_mat(row, layer.w_k) for row in x]
    values = [vec_mat(row, layer.w_v) for row in x]
    out = []
    for m in range(p.queries.shape[0]):
        q0 = p.queries[m]
        a = attend(vec_mat(q0, layer.w_q), keys, values, 1 / math.sqrt(dim))
        h1 = q0 + a
        f1 = vec_mat(h1, layer.w_ff1) + layer.b_ff1
        g = np.array([gelu(v) for v in f1])
        h2 = h1 + vec_mat(g, layer.w_ff2) + layer.b_ff2
        out.append(layer_norm(h2, layer.ln_gamma, layer.ln_beta))
    return np.array(out)


def self_attention_slots(queries, pq, p):
    seq = list(queries) + list(pq)
    dim = queries.shape[1]
    keys = [vec_mat(s, p.attn_k) for s in seq]
    values = [vec_mat(s, p.attn_v) for s in seq]
    rows = []
    for j in range(queries.shape[0]):
        o = attend(vec_mat(queries[j], p.attn_q), keys, values, 1 / math.sqrt(dim))
        rows.append(vec_mat(o, p.w_out))
    return np.array(rows)


def sam_ratio_form(vs, w_q, keys, h_flat, alpha):
    """H_i^alpha exp(q_j . k_i / sqrt d) normalized per row, written with scalar loops."""
    d = w_q.shape[1]
    out = np.zeros((vs.shape[0], keys.shape[0]))
    for j in range(vs.shape[0]):
        q = vec_mat(vs[j], w_q)
        w = [h_flat[i] ** alpha * math.exp(sum(q[c] * keys[i, c] for c in range(d)) / math.sqrt(d))
             for i in range(keys.shape[0])]
        out[j] = np.array(w) / sum(w)
    return out


def hstf_z(sam, values, h_flat, beta, gamma, ln_beta):
    rows = []
    for j in range(sam.shape[0]):
        acc = np.zeros(values.shape[1])
        for i in range(values.shape[0]):
            acc += h_flat[i] ** beta * sam[j, i] * values[i]
        rows.append(layer_norm(acc, gamma, ln_beta))
    return np.array(rows)


def plain_cross_attention(vs, w_q, keys, values, gamma, ln_beta):
    d = w_q.shape[1]
    rows = []
    for j in range(vs.shape[0]):
        q = vec_mat(vs[j], w_q)
        rows.append(layer_norm(attend(q, keys, values, 1 / math.sqrt(d)), gamma, ln_beta))
    return np.array(rows)


def temporal_row(pos, n_frames, dim, scale=500.0):
    p = pos * scale / n_frames
    out = []
    for i in range(dim // 2):
        rate = 10000.0 ** (2 * i / dim)
        out += [math.sin(p / rate), math.cos(p / rate)]
    return np.array(out)


def plain_stfm_attention(vq, pq, pb, hs, scale=500.0):
    """Prompt-fused queries attending over temporally encoded tokens, no similarity terms."""
    t_, m_, dim = vq.shape
    tokens = [vq[t, m] + temporal_row(t, t_, dim, scale) for t in range(t_) for m in range(m_)]
    keys = np.array([vec_mat(x, pb.w_k) for x in tokens])
    values = np.array([vec_mat(x, pb.w_v) for x in tokens])
    vs = self_attention_slots(pb.queries, pq, pb)
    return plain_cross_attention(vs, hs.w_q, keys, values, hs.ln_gamma, hs.ln_beta)
