import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stfm.config import ExperimentConfig
from stfm.data import generate_dataset, generate_instance, make_world, relevant_frames
from stfm.errors import ConfigError
from stfm.tensor import Rng


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@pytest.mark.parametrize("distractors", ["noise", "latent"])
def test_relevant_frames_align_with_prompt_latent(distractors):
    cfg = ExperimentConfig.desk(distractors=distractors)
    world, rng = make_world(cfg), Rng(3)
    rel, irr = [], []
    for _ in range(1000):
        inst = generate_instance(cfg, rng, world)
        rel += [_cos(z, inst.topic) for z in inst.frame_latents[inst.relevant]]
        irr += [_cos(z, inst.topic) for z in inst.frame_latents[~inst.relevant]]
    assert np.mean(rel) - np.mean(irr) >= 0.5


def test_noiseless_single_frame_is_linear_image():
    cfg = ExperimentConfig.desk(noise=0.0, n_relevant=1)
    world = make_world(cfg)
    inst = generate_instance(cfg, Rng(0), world)
    (t,) = np.flatnonzero(inst.relevant)
    expected = inst.topic @ world.visual_embed
    for patch in inst.patches[t]:
        np.testing.assert_allclose(patch, expected, atol=1e-12)
    np.testing.assert_allclose(inst.prompt, np.tile(inst.topic @ world.text_embed, (cfg.N_p, 1)), atol=1e-12)


def test_target_is_mean_readout_of_relevant_latents():
    cfg = ExperimentConfig.desk(n_relevant=4)
    world = make_world(cfg)
    inst = generate_instance(cfg, Rng(5), world)
    expected = np.mean([z @ world.readout for z in inst.frame_latents[inst.relevant]], axis=0)
    np.testing.assert_allclose(inst.target, expected, atol=1e-12)


def test_shapes():
    cfg = ExperimentConfig.desk(T=6, N_v=3, C=5, N_p=2, D=4, d=3, n_relevant=2)
    inst = generate_instance(cfg, Rng(0))
    assert inst.patches.shape == (6, 3, 5)
    assert inst.prompt.shape == (2, 4)
    assert inst.relevant.shape == (6,) and inst.relevant.sum() == 2
    assert inst.target.shape == (3,)


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 20), r=st.integers(1, 20), placement=st.sampled_from(["random", "contiguous", "first"]),
       seed=st.integers(0, 2**32))
def test_mask_contract(t, r, placement, seed):
    if r > t:
        with pytest.raises(ConfigError):
            ExperimentConfig(T=t, n_relevant=r)
        return
    mask = relevant_frames(ExperimentConfig(T=t, n_relevant=r, placement=placement), Rng(seed))
    assert mask.shape == (t,) and mask.dtype == bool and mask.sum() == r
    idx = np.flatnonzero(mask)
    if placement != "random":
        assert idx[-1] - idx[0] == r - 1
    if placement == "first":
        assert idx[0] == 0


def test_zero_relevant_frames_is_config_error():
    with pytest.raises(ConfigError):
        ExperimentConfig(n_relevant=0)


def test_dataset_streams_are_reproducible_and_distinct():
    cfg = ExperimentConfig.desk()
    a, b = generate_dataset(cfg, 8, 0), generate_dataset(cfg, 8, 0)
    assert a.fingerprint() == b.fingerprint()
    assert generate_dataset(cfg, 8, 1).fingerprint() != a.fingerprint()
    assert generate_dataset(cfg.replace(seed=1), 8, 0).fingerprint() != a.fingerprint()
    # model-only fields leave the data untouched
    assert generate_dataset(cfg.replace(alpha=0.0, pbtf=False, N=16), 8, 0).fingerprint() == a.fingerprint()


def test_empty_dataset():
    ds = generate_dataset(ExperimentConfig.desk(), 0, 1)
    assert len(ds) == 0 and ds.patches.shape[1:] == (15, 16, 32)
