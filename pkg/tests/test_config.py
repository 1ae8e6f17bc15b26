import json

import pytest

from stfm.config import ExperimentConfig
from stfm.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.T, cfg.M, cfg.N, cfg.S, cfg.alpha, cfg.beta) == (15, 32, 32, 500.0, 1.0, 0.0)
    assert cfg.n_relevant / cfg.T == pytest.approx(0.2)


def test_desk_preset():
    cfg = ExperimentConfig.desk()
    assert (cfg.T, cfg.M, cfg.N, cfg.D, cfg.n_train, cfg.epochs) == (15, 8, 8, 32, 512, 30)


def test_model_config_plumbing():
    m = ExperimentConfig(N=16, pbtf=False, vpe=False, similarity_after_vpe=True).model_config()
    assert m.n_tokens == 16 and not m.fuse_text and not m.use_vpe and m.sim_after_vpe


@pytest.mark.parametrize("bad", [
    {"T": 0}, {"alpha": -1.0}, {"beta": -0.5}, {"placement": "middle"}, {"distractors": "x"},
    {"n_relevant": 16}, {"optimizer": "lbfgs"}, {"noise": -1.0},
])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_file_roundtrip(tmp_path):
    cfg = ExperimentConfig(N=16, lr=1e-4, vpe=False)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_file(path) == cfg


def test_file_accepts_kebab_keys_and_rejects_unknown(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n-train": 10, "similarity-after-vpe": True}))
    cfg = ExperimentConfig.from_file(path)
    assert cfg.n_train == 10 and cfg.similarity_after_vpe
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(path)
