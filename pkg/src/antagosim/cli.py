"""Command line entry point: ``antago-sim <mode> --config <file> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from .config import MODES, ConfigError
from .control import PRESETS, FeedbackSource
from .estimator import PolynomialPoseEstimator
from .harness import (
    EpisodeAborted,
    evaluate,
    run_closed_loop,
    run_openloop,
    summarize,
    train_pipeline,
    write_json,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("antagosim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="antago-sim", description="Antagonistic soft-actuator joint simulator")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--model", help="estimator model JSON (selfsense, evaluate)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--preset", choices=sorted(PRESETS), help="override control.preset")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _episode_outputs(out: Path, ep_log, cfg, model=None, **extra):
    out.mkdir(parents=True, exist_ok=True)
    ep_log.write_csv(out / "episode.csv")
    write_json(summarize(ep_log, cfg, model, **extra), out / "summary.json")


def _load_model(path) -> PolynomialPoseEstimator:
    try:
        return PolynomialPoseEstimator.load(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load model {path}: {exc}") from None


def run(args) -> int:
    cfg = config_mod.load(args.config)
    changes = {"mode": args.mode}
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = replace(cfg, **changes)
    if args.preset:
        cfg = replace(cfg, control=replace(cfg.control, preset=args.preset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "openloop":
        _episode_outputs(out, run_openloop(cfg), cfg)
    elif args.mode == "benchmark":
        _episode_outputs(out, run_closed_loop(cfg, FeedbackSource.GROUND_TRUTH), cfg)
    elif args.mode == "train":
        model, meta = train_pipeline(cfg)
        model.save(out / "model.json", metadata=meta)
        write_json({"mode": "train", "seed": cfg.seed, "estimator_metrics": model.metrics_,
                    "metadata": meta, "config": config_mod.to_mapping(cfg)}, out / "summary.json")
    elif args.mode == "selfsense":
        if not args.model:
            raise ConfigError("selfsense mode needs --model")
        model = _load_model(args.model)
        _episode_outputs(out, run_closed_loop(cfg, FeedbackSource.SELF_SENSING, model), cfg, model)
    else:  # evaluate
        if args.model:
            model = _load_model(args.model)
        else:
            model, meta = train_pipeline(cfg)
            model.save(out / "model.json", metadata=meta)
        # each episode picks its own <kind>_bm / <kind>_ss preset unless one is forced
        log_bm = run_closed_loop(cfg, FeedbackSource.GROUND_TRUTH)
        log_ss = run_closed_loop(cfg, FeedbackSource.SELF_SENSING, model)
        _episode_outputs(out / "benchmark", log_bm, cfg)
        _episode_outputs(out / "selfsense", log_ss, cfg, model)
        report = evaluate(log_bm, log_ss)
        report.update(seed=cfg.seed, estimator_metrics={"r2": model.metrics_["r2"], "rmse": model.metrics_["rmse"]},
                      config=config_mod.to_mapping(cfg))
        write_json(report, out / "summary.json")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"antago-sim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EpisodeAborted as exc:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        exc.log.write_csv(out / "episode.csv")
        write_json({"mode": args.mode, "aborted": True, "diagnostic": exc.diagnostic,
                    "n_ticks": len(exc.log)}, out / "summary.json")
        print(f"antago-sim: runtime fault: {exc.diagnostic}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"antago-sim: runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
