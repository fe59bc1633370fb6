"""Command line entry points: pretrain, train, eval, analyze, serve."""

from __future__ import annotations

import argparse
import json
import sys

from safecredit.continual import FeedbackBuffer
from safecredit.experiment.config import load_run_config
from safecredit.experiment.runner import (
    run_analyze,
    run_eval,
    run_pretrain,
    run_train,
)
from safecredit.experiment.service import LabelService


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="safecredit",
        description="Constraint learning from trajectory labels + safe RL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="generate scripted data and pretrain "
                                        "the constraint model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="directory for the checkpoint "
                                               "and report (default: out_dir)")

    p = sub.add_parser("train", help="full constrained training run")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval", help="evaluate a saved policy")
    p.add_argument("--config", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--ssv", default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("analyze", help="score diagnostics for a trajectory log")
    p.add_argument("--ssv", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="serve a persisted label queue")
    p.add_argument("--buffer", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8712)

    args = parser.parse_args(argv)

    if args.command == "pretrain":
        config = load_run_config(args.config)
        seed = config.seeds[0] if args.seed is None else args.seed
        out = args.out or config.out_dir
        _, report, _, _ = run_pretrain(config, seed, out_dir=out)
        print(json.dumps(report.to_dict(), indent=2))
        return 0
    if args.command == "train":
        config = load_run_config(args.config)
        summary = run_train(config)
        print(json.dumps({"mean": summary["mean"], "std": summary["std"]},
                         indent=2))
        return 0
    if args.command == "eval":
        config = load_run_config(args.config)
        metrics = run_eval(config, args.policy, ssv_path=args.ssv,
                           n_episodes=args.episodes, out_path=args.out)
        print(json.dumps(metrics, indent=2))
        return 0
    if args.command == "analyze":
        report = run_analyze(args.ssv, args.trajectories, args.budget,
                             out_dir=args.out)
        print(json.dumps({"mean_flat_ratio": report.mean_flat_ratio,
                          "n_crossing": report.n_crossing,
                          "buckets": report.buckets}, indent=2))
        return 0
    if args.command == "serve":
        buffer = FeedbackBuffer.load(args.buffer)
        service = LabelService(buffer, host=args.host, port=args.port)
        service.start()
        print(f"label service at {service.url} (Ctrl-C to stop)")
        try:
            service._thread.join()
        except KeyboardInterrupt:
            service.stop()
            buffer.save(args.buffer)
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
