import math

import numpy as np
import pytest

from oracles import hstf_z, sam_ratio_form
from stfm.errors import ConfigError, ShapeError
from stfm.hstf import HstfParams, hstf_output, hstf_sam, hstf_sam_ratio, init_hstf, stfm_forward
from stfm.pbtf import KeyValueBank, init_pbtf, project_kv
from stfm.temporal import VpeConfig
from stfm.tensor import Rng, softmax_rows


def instance(seed, n=2, t=3, m=2, dim=4, d=4, alpha=1.0, beta=0.0):
    r = Rng(seed)
    vs = r.gaussian((n, dim))
    kv = KeyValueBank(r.gaussian((t * m, d)), r.gaussian((t * m, d)))
    h = r.uniform((t, m), 0.05, 1.0)
    return vs, kv, h, init_hstf(r, dim, d, alpha=alpha, beta=beta)


def test_alpha_zero_is_plain_softmax():
    vs, kv, h, p = instance(0, alpha=0.0)
    plain = softmax_rows(vs @ p.w_q @ kv.keys.T / math.sqrt(4))
    np.testing.assert_allclose(hstf_sam(vs, kv, h, p), plain, atol=1e-12)


def test_all_ones_similarity_ignores_alpha():
    vs, kv, h, p = instance(1)
    ones = np.ones_like(h)
    ref = hstf_sam(vs, kv, ones, p)
    for a in (0.0, 0.5, 3.0):
        p.alpha = a
        np.testing.assert_allclose(hstf_sam(vs, kv, ones, p), ref, atol=1e-14)


def test_ratio_form_oracle():
    vs, kv, h, p = instance(2, n=1, t=2, m=1, dim=2, d=2, alpha=0.7)
    expected = sam_ratio_form(vs, p.w_q, kv.keys, h.reshape(-1), 0.7)
    np.testing.assert_allclose(hstf_sam(vs, kv, h, p), expected, atol=1e-12)
    np.testing.assert_allclose(hstf_sam_ratio(vs, kv, h, p), expected, atol=1e-12)


def test_ratio_law():
    vs, kv, h, p = instance(3, n=3, t=4, m=2, alpha=1.3)
    sam = hstf_sam(vs, kv, h, p)
    logits = vs @ p.w_q @ kv.keys.T
    hf = h.reshape(-1)
    for j in range(3):
        for a in range(8):
            for b in range(8):
                lhs = math.log(sam[j, a] / sam[j, b])
                rhs = 1.3 * math.log(hf[a] / hf[b]) + (logits[j, a] - logits[j, b]) / 2.0
                assert abs(lhs - rhs) < 1e-9


def test_negative_alpha_rejected():
    with pytest.raises(ConfigError):
        HstfParams(np.eye(2), np.ones(2), np.zeros(2), alpha=-0.1)
    with pytest.raises(ConfigError):
        HstfParams(np.eye(2), np.ones(2), np.zeros(2), beta=-1.0)
    with pytest.raises(ConfigError):
        HstfParams(np.eye(2), np.ones(2), np.zeros(2), h_floor=0.0)


def test_shape_mismatch():
    vs, kv, h, p = instance(4)
    with pytest.raises(ShapeError):
        hstf_sam(vs, kv, np.ones((4, 2)), p)
    with pytest.raises(ShapeError):
        hstf_sam(vs[:, :3], kv, h, p)


def test_output_beta_zero_is_layernormed_average():
    vs, kv, h, p = instance(5)
    sam = hstf_sam(vs, kv, h, p)
    z = hstf_output(sam, kv, h, p)
    agg = sam @ kv.values
    ref = (agg - agg.mean(1, keepdims=True)) / np.sqrt(agg.var(1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(z, ref, atol=1e-12)
    assert np.all(np.abs(z.mean(axis=1)) < 1e-10)
    assert np.all(np.abs(z.var(axis=1) - 1) < 1e-3)


def test_output_beta_one_oracle():
    vs, kv, h, p = instance(6, n=1, t=2, m=1, beta=1.0)
    p.ln_gamma[:] = Rng(1).gaussian(4)
    p.ln_beta[:] = Rng(2).gaussian(4)
    sam = hstf_sam(vs, kv, h, p)
    expected = hstf_z(sam, kv.values, h.reshape(-1), 1.0, p.ln_gamma, p.ln_beta)
    np.testing.assert_allclose(hstf_output(sam, kv, h, p), expected, atol=1e-12)


def test_zero_similarity_is_floored():
    vs, kv, h, p = instance(7)
    h[0, 0] = 0.0
    sam = hstf_sam(vs, kv, h, p)
    assert np.all(np.isfinite(sam))
    assert np.all(sam[:, 0] > 0)


def test_row_stochastic_many():
    for seed in range(200):
        vs, kv, h, p = instance(seed, n=3, t=3, m=3, alpha=seed % 4 * 0.5)
        sam = hstf_sam(vs, kv, h, p)
        assert np.all(sam >= 0)
        np.testing.assert_allclose(sam.sum(axis=1), 1.0, atol=1e-9)


def test_monotone_in_similarity():
    vs, kv, h, p = instance(8, alpha=1.0)
    sam = hstf_sam(vs, kv, h, p)
    h2 = h.copy()
    h2[1, 0] = min(1.0, h2[1, 0] * 1.5)
    sam2 = hstf_sam(vs, kv, h2, p)
    assert np.all(sam2[:, 2] > sam[:, 2])


def test_token_permutation_equivariance():
    vs, kv, h, p = instance(9, t=3, m=2, beta=1.0)
    perm = Rng(0).permutation(6)
    kv2 = KeyValueBank(kv.keys[perm], kv.values[perm])
    h2 = h.reshape(-1)[perm].reshape(3, 2)
    sam, sam2 = hstf_sam(vs, kv, h, p), hstf_sam(vs, kv2, h2, p)
    np.testing.assert_allclose(sam2, sam[:, perm], atol=1e-12)
    np.testing.assert_allclose(hstf_output(sam2, kv2, h2, p), hstf_output(sam, kv, h, p), atol=1e-12)


def test_floored_frame_is_suppressed():
    t, m = 4, 3
    vs, kv, _, p = instance(10, t=t, m=m, alpha=1.0)
    h = np.full((t, m), 0.9)
    h[2] = p.h_floor
    sam = hstf_sam(vs, kv, h, p)
    frame_mass = sam[:, 2 * m:3 * m].sum(axis=1)
    assert np.all(frame_mass < (p.h_floor / h.max()) * t * m)


def test_stfm_forward_shapes_and_determinism():
    r = Rng(4)
    pb = init_pbtf(r, n_tokens=16, dim=8)
    hs = init_hstf(r, 8)
    vq, pq = r.gaussian((5, 3, 8)), r.gaussian((3, 8))
    out = stfm_forward(vq, pq, pb, hs, VpeConfig(8))
    assert out.z.shape == (16, 8) and out.sam.shape == (16, 15) and out.h.shape == (5, 3)
    again = stfm_forward(vq, pq, pb, hs, VpeConfig(8))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(out, again))


def test_stfm_forward_composition():
    r = Rng(5)
    pb = init_pbtf(r, n_tokens=4, dim=8)
    hs = init_hstf(r, 8, beta=1.0)
    vq, pq = r.gaussian((3, 2, 8)), r.gaussian((2, 8))
    out = stfm_forward(vq, pq, pb, hs, VpeConfig(8))
    from stfm.pbtf import pbtf_queries
    from stfm.similarity import similarity_matrix
    from stfm.temporal import add_temporal_encoding
    h = similarity_matrix(vq, pq)
    kv = project_kv(add_temporal_encoding(vq, VpeConfig(8)), pb)
    sam = hstf_sam(pbtf_queries(pq, pb), kv, h, hs)
    np.testing.assert_allclose(out.h, h, atol=1e-14)
    np.testing.assert_allclose(out.sam, sam, atol=1e-12)
    np.testing.assert_allclose(out.z, hstf_output(sam, kv, h, hs), atol=1e-12)


def test_large_alpha_concentrates_on_matching_token():
    r = Rng(6)
    t, m = 4, 2
    pb = init_pbtf(r, n_tokens=3, dim=8)
    hs = init_hstf(r, 8, alpha=50.0)
    vq, pq = r.gaussian((t, m, 8)) * 0.1, r.gaussian((m, 8)) * 0.1
    h = np.full((t, m), 0.5)
    h[2, 1] = 1.0
    from stfm.pbtf import pbtf_queries
    sam = hstf_sam(pbtf_queries(pq, pb), project_kv(vq, pb), h, hs)
    assert np.all(sam[:, 2 * m + 1] > 0.999)
