"""scikit-learn wrapper around the training loop.

``X`` is a pair ``(patches, prompts)`` of shapes (n, T, N_v, C) and
(n, N_p, D); ``y`` is (n, d) or (n,).
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ExperimentConfig
from .data import Dataset
from .training import predict, train
from .validation import check_targets, check_video_prompt


class STFMRegressor(RegressorMixin, TransformerMixin, BaseEstimator):
    """Prompt-filtered video token model with a linear readout.

    ``transform`` returns the mean-pooled visual tokens (n, d) and
    ``predict`` the readout; ``score`` is the R^2 of ``predict``.
    """

    def __init__(self, M=8, N=8, d=32, alpha=1.0, beta=0.0, S=500.0, vpe=True, pbtf=True,
                 similarity_after_vpe=False, share_qformer=False, epochs=30, batch_size=32,
                 lr=3e-3, weight_decay=0.05, warmup_steps=20, optimizer="adamw", seed=0):
        self.M = M
        self.N = N
        self.d = d
        self.alpha = alpha
        self.beta = beta
        self.S = S
        self.vpe = vpe
        self.pbtf = pbtf
        self.similarity_after_vpe = similarity_after_vpe
        self.share_qformer = share_qformer
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.optimizer = optimizer
        self.seed = seed

    def _config(self, patches, prompts) -> ExperimentConfig:
        n, t, n_v, c = patches.shape
        return ExperimentConfig(
            T=t, N_v=n_v, C=c, N_p=prompts.shape[1], D=prompts.shape[2], d=self.d,
            M=self.M, N=self.N, alpha=self.alpha, beta=self.beta, S=self.S, vpe=self.vpe,
            pbtf=self.pbtf, similarity_after_vpe=self.similarity_after_vpe,
            share_qformer=self.share_qformer, n_relevant=1, n_train=n, n_test=0,
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, warmup_steps=self.warmup_steps,
            optimizer=self.optimizer, seed=self.seed,
        )

    def fit(self, X, y):
        patches, prompts = check_video_prompt(X)
        y2 = check_targets(y, patches.shape[0])
        cfg = self._config(patches, prompts)
        self.n_outputs_ = y2.shape[1]
        self.model_config_ = replace(cfg.model_config(), out_dim=self.n_outputs_)
        # no relevance mask is known for user data; the attention-mass metric is then 0
        ds = Dataset(patches, prompts, np.zeros(patches.shape[:2], dtype=bool), y2)
        self.params_, self.report_ = train(cfg, data=(ds, ds.take(slice(0, 0))), mcfg=self.model_config_)
        self._squeeze = np.ndim(y) == 1
        return self

    def _outputs(self, X):
        check_is_fitted(self, "params_")
        patches, prompts = check_video_prompt(X)
        return predict(self.params_, self.model_config_, patches, prompts)

    def transform(self, X):
        return self._outputs(X).z.mean(axis=-2)

    def predict(self, X):
        pred = self._outputs(X).pred
        return pred[:, 0] if self._squeeze else pred

    def attention(self, X):
        """Similarity matrices (n, T, M) and attention maps (n, N, T*M)."""
        out = self._outputs(X)
        return out.h, out.sam

