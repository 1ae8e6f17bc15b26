"""Command-line entry point: ``stfm <subcommand> [flags]``.

Every ExperimentConfig field is a flag (``N_v`` -> ``--N-v``). Values from
``--config`` are applied first and explicit flags override them. Failures
print one JSON line ``{"error": <kind>, "message": ...}`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ExperimentConfig
from .errors import CheckpointError, ConfigError, ShapeError, TrainingDivergedError
from .gradcheck import gradcheck_model
from .heatmap import dump_heatmaps
from .model import ModelConfig, forward
from .training import init_model, make_data, run_ablation_grid, token_budget_sweep, train

EXIT_FAILURE = 1
EXIT_USAGE = 2
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class GradcheckFailed(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="JSON file with ExperimentConfig keys")
    g.add_argument("--preset", choices=("default", "desk"), default="default",
                   help="desk uses M=N=8 for fast single-core runs")
    for f in fields(ExperimentConfig):
        kind = type(f.default)
        if kind is bool:
            g.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            g.add_argument(_flag(f.name), dest=f.name, type=kind, default=None, metavar=kind.__name__.upper())
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("-v", "--verbose", action="store_true")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.desk() if args.preset == "desk" else ExperimentConfig()
    if args.config is not None:
        overrides = ExperimentConfig.from_file(args.config).to_dict()
        explicit = json.loads(args.config.read_text())
        base = base.replace(**{k: overrides[k] for k in (n.replace("-", "_") for n in explicit)})
    flags = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig) if getattr(args, f.name) is not None}
    return base.replace(**flags)


def _write(out_dir: Path, name: str, text: str) -> Path:
    path = out_dir / name
    path.write_text(text)
    return path


def _timing(out_dir: Path, started: float) -> None:
    # wall-clock lives beside the report so the report itself stays reproducible
    _write(out_dir, "timing.json", json.dumps({"wall_clock_s": time.perf_counter() - started}) + "\n")


def cmd_train(args, cfg: ExperimentConfig) -> dict:
    params, report = train(cfg)
    report_path = _write(args.out_dir, "report.json", report.to_json())
    ckpt = checkpoint.save(params, args.out_dir / "model.stfm")
    return {"report": str(report_path), "checkpoint": str(ckpt), **report.metrics}


def cmd_ablate(args, cfg: ExperimentConfig) -> dict:
    seeds = tuple(range(cfg.seed, cfg.seed + args.n_seeds))
    report = run_ablation_grid(cfg, seeds)
    path = _write(args.out_dir, "ablation.json", report.to_json())
    return {"report": str(path), "rows": report.metrics["rows"]}


def cmd_sweep_tokens(args, cfg: ExperimentConfig) -> dict:
    budgets = tuple(int(n) for n in args.budgets.split(","))
    report = token_budget_sweep(cfg, budgets)
    path = _write(args.out_dir, "token_budget.json", report.to_json())
    return {"report": str(path), **report.metrics}


def cmd_dump_heatmaps(args, cfg: ExperimentConfig) -> dict:
    mcfg = cfg.model_config()
    if args.checkpoint is None:
        params, _ = train(cfg)
    else:
        params = checkpoint.load(args.checkpoint, expected=init_model(cfg, mcfg))
    _, test = make_data(cfg.replace(n_test=max(cfg.n_test, args.instance + 1)))
    i = args.instance
    out, _ = forward(params, mcfg, test.patches[i:i + 1], test.prompts[i:i + 1])
    written = dump_heatmaps(out.h[0], out.sam[0], args.out_dir / f"instance{i}")
    mask = _write(args.out_dir, f"instance{i}_relevant.json",
                  json.dumps([int(v) for v in np.flatnonzero(test.relevant[i])]) + "\n")
    return {"files": [str(p) for p in written] + [str(mask)]}


def cmd_gradcheck(args, cfg: ExperimentConfig) -> dict:
    mcfg = ModelConfig(n_frames=3, n_queries=2, n_tokens=2, dim=4, patch_dim=4,
                       alpha=cfg.alpha, beta=cfg.beta, use_vpe=cfg.vpe, fuse_text=cfg.pbtf,
                       sim_after_vpe=cfg.similarity_after_vpe, share_qformer=cfg.share_qformer)
    worst = {}
    for k in range(args.n_models):
        for name, err in gradcheck_model(mcfg, seed=cfg.seed + k, n_coords=args.coords).items():
            worst[name] = max(worst.get(name, 0.0), err)
    result = {"max_relative_error": worst, "tolerance": args.tol,
              "passed": all(e < args.tol for e in worst.values())}
    _write(args.out_dir, "gradcheck.json", json.dumps(result, sort_keys=True, indent=2) + "\n")
    if not result["passed"]:
        bad = sorted(k for k, e in worst.items() if e >= args.tol)
        raise GradcheckFailed(f"relative error >= {args.tol} for {bad}")
    return result


COMMANDS = {
    "train": cmd_train,
    "ablate": cmd_ablate,
    "sweep-tokens": cmd_sweep_tokens,
    "dump-heatmaps": cmd_dump_heatmaps,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stfm", description="Prompt-guided video token filtering experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {
        "train": sub.add_parser("train", help="train one model, write report.json and model.stfm"),
        "ablate": sub.add_parser("ablate", help="alpha/beta/PBTF/VPE ablation grid"),
        "sweep-tokens": sub.add_parser("sweep-tokens", help="compare visual-token budgets"),
        "dump-heatmaps": sub.add_parser("dump-heatmaps", help="write H and SAM as CSV and PGM"),
        "gradcheck": sub.add_parser("gradcheck", help="finite-difference check of all gradients"),
    }
    for p in subs.values():
        _add_config_flags(p)
    subs["ablate"].add_argument("--n-seeds", type=int, default=1)
    subs["sweep-tokens"].add_argument("--budgets", default="32,16")
    subs["dump-heatmaps"].add_argument("--checkpoint", type=Path)
    subs["dump-heatmaps"].add_argument("--instance", type=int, default=0)
    subs["gradcheck"].add_argument("--n-models", type=int, default=10)
    subs["gradcheck"].add_argument("--coords", type=int, default=20)
    subs["gradcheck"].add_argument("--tol", type=float, default=GRADCHECK_TOL)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail("UsageError", str(e), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = config_from_args(args)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args, cfg)
        _timing(args.out_dir, started)
    except (ConfigError, json.JSONDecodeError) as e:
        return _fail(type(e).__name__, str(e), EXIT_USAGE)
    except (CheckpointError, ShapeError, TrainingDivergedError, GradcheckFailed, OSError, ValueError) as e:
        return _fail(type(e).__name__, str(e), EXIT_FAILURE)
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
