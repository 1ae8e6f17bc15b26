"""Training loop, relevance metrics and the ablation / token-budget experiments."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, generate_dataset
from .errors import ShapeError, TrainingDivergedError
from .model import ModelConfig, Outputs, forward, init_params, loss_and_grad
from .optim import OptimizerState, optimizer_step
from .params import ParamSet
from .tensor import Rng

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
TRAIN_STREAM, TEST_STREAM = 0, 1
INIT_KEY, ORDER_KEY = 7, 9
EVAL_CHUNK = 64

# (label, alpha, beta, pbtf, vpe): baseline first, then the alpha/beta, PBTF and no-VPE rows
ABLATION_ROWS = (
    ("baseline", 0.0, 0.0, False, True),
    ("alpha=0,beta=1", 0.0, 1.0, False, True),
    ("alpha=0.5,beta=1", 0.5, 1.0, False, True),
    ("alpha=1,beta=1", 1.0, 1.0, False, True),
    ("alpha=1,beta=0", 1.0, 0.0, False, True),
    ("alpha=1,beta=1,pbtf", 1.0, 1.0, True, True),
    ("alpha=1,beta=0,pbtf", 1.0, 0.0, True, True),
    ("alpha=1,beta=0,pbtf,no-vpe", 1.0, 0.0, True, False),
)
TOKEN_BUDGETS = (32, 16)


@dataclass
class Report:
    """Run summary; ``to_json`` is key-sorted so identical runs give identical text."""

    kind: str
    seed: int
    config: dict
    data: dict = field(default_factory=dict)
    epoch_loss: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(**json.loads(text))


def attention_mass(sam: np.ndarray, mask: np.ndarray, M: int) -> float:
    """Mean over attention rows of the weight landing on tokens of relevant frames.

    ``sam`` is (N, T*M) or batched (B, N, T*M); ``mask`` is (T,) or (B, T).
    """
    sam = np.asarray(sam, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if sam.ndim not in (2, 3) or mask.ndim != sam.ndim - 1:
        raise ShapeError(f"attention map {sam.shape} and mask {mask.shape} have incompatible ranks")
    if sam.shape[-1] != mask.shape[-1] * M or sam.shape[:-2] != mask.shape[:-1]:
        raise ShapeError(f"attention map {sam.shape} does not cover mask {mask.shape} with M={M}")
    cols = np.repeat(mask, M, axis=-1)
    mass = np.where(cols[..., None, :], sam, 0.0).sum(axis=-1)
    return float(np.clip(mass.mean(), 0.0, 1.0))


def make_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    return generate_dataset(cfg, cfg.n_train, TRAIN_STREAM), generate_dataset(cfg, cfg.n_test, TEST_STREAM)


def init_model(cfg: ExperimentConfig, mcfg: ModelConfig | None = None) -> ParamSet:
    return init_params(mcfg or cfg.model_config(), Rng(cfg.seed).child(INIT_KEY))


def predict(ps: ParamSet, mcfg: ModelConfig, patches: np.ndarray, prompts: np.ndarray) -> Outputs:
    """Forward pass in fixed-size chunks; the outputs are concatenated along the batch."""
    parts = [forward(ps, mcfg, patches[s:s + EVAL_CHUNK], prompts[s:s + EVAL_CHUNK])[0]
             for s in range(0, len(patches), EVAL_CHUNK)]
    return Outputs(*(np.concatenate(a) for a in zip(*parts)))


def evaluate(ps: ParamSet, cfg: ExperimentConfig, ds: Dataset, mcfg: ModelConfig | None = None) -> dict:
    if len(ds) == 0:
        return {"loss": None, "attention_mass": None}
    out = predict(ps, mcfg or cfg.model_config(), ds.patches, ds.prompts)
    return {
        "loss": float(np.mean((out.pred - ds.targets) ** 2)),
        "attention_mass": attention_mass(out.sam, ds.relevant, cfg.M),
    }


def _diverged(loss: float) -> bool:
    return not np.isfinite(loss) or loss > DIVERGENCE_LIMIT


def train(cfg: ExperimentConfig, model: ParamSet | None = None,
          data: tuple[Dataset, Dataset] | None = None,
          mcfg: ModelConfig | None = None) -> tuple[ParamSet, Report]:
    """Minibatch optimization of the readout MSE; ``model`` is copied, never mutated.

    ``data`` defaults to the synthetic train/test split of ``cfg`` and
    ``mcfg`` to ``cfg.model_config()``.
    """
    mcfg = mcfg or cfg.model_config()
    ps = init_model(cfg, mcfg) if model is None else model.copy()
    train_ds, test_ds = make_data(cfg) if data is None else data
    state = OptimizerState(kind=cfg.optimizer, lr=cfg.lr, weight_decay=cfg.weight_decay,
                           warmup_steps=cfg.warmup_steps, warmup_lr=cfg.warmup_lr)
    order = Rng(cfg.seed).child(ORDER_KEY)

    start = evaluate(ps, cfg, train_ds, mcfg)
    start_test = evaluate(ps, cfg, test_ds, mcfg)
    epoch_loss = []
    for epoch in range(cfg.epochs):
        perm = order.permutation(len(train_ds))
        for s in range(0, len(train_ds), cfg.batch_size):
            b = train_ds.take(perm[s:s + cfg.batch_size])
            try:
                loss, grads, _ = loss_and_grad(ps, mcfg, b.patches, b.prompts, b.targets)
            except FloatingPointError as e:
                raise TrainingDivergedError(f"epoch {epoch} step {state.step}: {e}") from e
            if _diverged(loss):
                raise TrainingDivergedError(f"epoch {epoch} step {state.step}: minibatch loss {loss}")
            optimizer_step(ps, grads, state)
        epoch_loss.append(evaluate(ps, cfg, train_ds, mcfg)["loss"])
        log.info("epoch %d loss %.6g", epoch, epoch_loss[-1])
        if _diverged(epoch_loss[-1]):
            raise TrainingDivergedError(f"epoch {epoch}: training loss {epoch_loss[-1]}")
    end_test = evaluate(ps, cfg, test_ds, mcfg)
    report = Report(
        kind="train",
        seed=cfg.seed,
        config=cfg.to_dict(),
        data={"train": train_ds.fingerprint(), "test": test_ds.fingerprint()},
        epoch_loss=epoch_loss,
        metrics={
            "initial_loss": start["loss"],
            "final_loss": epoch_loss[-1] if epoch_loss else start["loss"],
            "initial_attention_mass": start_test["attention_mass"],
            "attention_mass": end_test["attention_mass"],
            "test_loss": end_test["loss"],
            "uniform_attention_mass": cfg.n_relevant / cfg.T,
        },
    )
    return ps, report


def _cell(label: str, report: Report, **extra) -> dict:
    return {"label": label, "seed": report.seed, "data": report.data, **extra,
            "final_loss": report.metrics["final_loss"], "test_loss": report.metrics["test_loss"],
            "attention_mass": report.metrics["attention_mass"]}


def run_ablation_grid(cfg: ExperimentConfig, seeds: tuple[int, ...] | None = None) -> Report:
    """Train every ablation row on shared data; with several seeds, also count winners."""
    seeds = (cfg.seed,) if seeds is None else tuple(seeds)
    cells = []
    for seed in seeds:
        base = cfg.replace(seed=seed)
        data = make_data(base)
        for label, a, b, pbtf, vpe in ABLATION_ROWS:
            _, rep = train(base.replace(alpha=a, beta=b, pbtf=pbtf, vpe=vpe), data=data)
            cells.append(_cell(label, rep, alpha=a, beta=b, pbtf=pbtf, vpe=vpe))
    summary = {}
    for label, *_ in ABLATION_ROWS:
        m = np.array([c["attention_mass"] for c in cells if c["label"] == label])
        summary[label] = {"attention_mass_mean": float(m.mean()), "attention_mass_std": float(m.std())}
    wins = dict.fromkeys(summary, 0)
    for seed in seeds:
        row = [c for c in cells if c["seed"] == seed]
        wins[max(row, key=lambda c: c["attention_mass"])["label"]] += 1
    for label in summary:
        summary[label]["max_mass_wins"] = wins[label]
    return Report(kind="ablation", seed=cfg.seed, config=cfg.to_dict(), cells=cells,
                  metrics={"rows": summary, "n_seeds": len(seeds)})


def token_budget_sweep(cfg: ExperimentConfig, budgets: tuple[int, ...] = TOKEN_BUDGETS) -> Report:
    """Same data and seed at each visual-token budget N."""
    data = make_data(cfg)
    cells = []
    for n in budgets:
        ps, rep = train(cfg.replace(N=n), data=data)
        cells.append(_cell(f"N={n}", rep, N=n, query_rows=int(ps["pbtf.queries"].shape[0])))
    ref = cells[0]["final_loss"]
    metrics = {f"loss_ratio_{c['label']}": c["final_loss"] / ref for c in cells}
    return Report(kind="token_budget", seed=cfg.seed, config=cfg.to_dict(), cells=cells, metrics=metrics)
