"""Central finite differences as an independent check on ``model.backward``."""
from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .model import ModelConfig, init_params, loss_and_grad
from .params import ParamSet
from .tensor import Rng

REL_FLOOR = 1e-8


def finite_diff_grad(loss_fn: Callable[[ParamSet], float], params: ParamSet, name: str,
                     index: tuple[int, ...], h: float = 1e-5) -> float:
    """(loss(theta + h e) - loss(theta - h e)) / 2h for one coordinate; params are restored."""
    arr = params[name]
    old = arr[index]
    try:
        arr[index] = old + h
        up = loss_fn(params)
        arr[index] = old - h
        down = loss_fn(params)
    finally:
        arr[index] = old
    return (up - down) / (2.0 * h)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(numeric), REL_FLOOR)


def gradcheck_model(cfg: ModelConfig, seed: int, n_coords: int = 20, h: float = 1e-5,
                    batch: int = 2, n_patches: int = 3, n_prompt: int = 3) -> dict[str, float]:
    """Max relative error per parameter tensor on a random model and batch."""
    rng = Rng(seed)
    params = init_params(cfg, rng.child(0))
    drng = rng.child(1)
    vf = drng.gaussian((batch, cfg.n_frames, n_patches, cfg.patch_dim))
    pf = drng.gaussian((batch, n_prompt, cfg.p_dim))
    y = drng.gaussian((batch, cfg.o_dim))
    _, grads, _ = loss_and_grad(params, cfg, vf, pf, y)

    def loss_fn(p):
        return loss_and_grad(p, cfg, vf, pf, y)[0]

    crng = rng.child(2)
    worst = {}
    for name, arr in params.items():
        flat = crng.choice(arr.size, size=min(n_coords, arr.size), replace=False)
        errs = []
        for f in flat:
            idx = np.unravel_index(int(f), arr.shape)
            fd = finite_diff_grad(loss_fn, params, name, idx, h)
            errs.append(relative_error(float(grads[name][idx]), fd))
        worst[name] = max(errs)
    return worst
