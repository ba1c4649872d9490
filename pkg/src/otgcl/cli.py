"""Command-line interface: train, eval, embed, tune, gen-sbm.

Config precedence: built-in defaults, then the --config JSON file, then
explicit command-line flags. Exit codes: 0 success, 1 usage error,
2 runtime failure; diagnostics go to stderr. Set OTGCL_LOG=DEBUG|INFO|...
for verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import graphstore, layers, pipeline
from ._kernels import BACKEND

SCHEMA_VERSION = 1

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract here is exit 1 for usage errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(pipeline.TrainConfig)}


def load_config(path: str | None, overrides: dict) -> pipeline.TrainConfig:
    values = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise UsageError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise UsageError(f"malformed config file {path}: {e}") from e
        for key, val in raw.items():
            if key not in CONFIG_FIELDS:
                raise UsageError(f"unknown config field {key!r}")
            values[key] = val
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    cfg = pipeline.TrainConfig(**values)
    cfg.validate()
    return cfg


def config_as_dict(cfg: pipeline.TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def report_as_dict(report: pipeline.RunReport) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "kernel_backend": BACKEND,
        "config": config_as_dict(report.config),
        "history": report.history,
        "accuracy": None,
    }
    if report.probe_repeats:
        out["accuracy"] = {"mean": report.accuracy_mean,
                           "std": report.accuracy_std,
                           "repeats": report.probe_repeats}
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_embeddings(embeddings: np.ndarray, g: graphstore.Graph, outdir: Path) -> None:
    """Embeddings in the container features format (meta.json + features.tsv)."""
    outdir.mkdir(parents=True, exist_ok=True)
    meta = {"n_nodes": int(embeddings.shape[0]),
            "n_features": int(embeddings.shape[1]),
            "n_classes": g.n_classes}
    _write_json(outdir / "meta.json", meta)
    with open(outdir / "features.tsv", "w") as fh:
        for row in embeddings:
            fh.write("\t".join("%.9g" % x for x in row) + "\n")


def _load_model(model_dir: Path, g: graphstore.Graph):
    cfg_path = model_dir / "config.json"
    ckpt_path = model_dir / "checkpoint.bin"
    if not cfg_path.is_file() or not ckpt_path.is_file():
        raise FileNotFoundError(
            f"model directory {model_dir} needs config.json and checkpoint.bin")
    cfg = load_config(str(cfg_path), {})
    model = pipeline.Model(g.n_features, cfg)
    model.load_state(layers.load_params(ckpt_path))
    return model, cfg


def _embeddings_from(model, g):
    from .autodiff import Tensor
    a_hat = Tensor(graphstore.normalize_adjacency(g))
    return model.encode(a_hat, Tensor(g.features)).values


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    g = graphstore.load_graph(args.data)
    cfg = load_config(args.config, _config_overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = pipeline.evaluate(g, cfg, n_repeats=args.repeats)
    _write_json(out / "config.json", config_as_dict(cfg))
    _write_json(out / "report.json", report_as_dict(report))
    _write_json(out / "timing.json", {"wall_clock_seconds": report.wall_clock})
    layers.save_params(report.model.named_params(), out / "checkpoint.bin")
    print(f"accuracy: {report.accuracy_mean:.2f} ± {report.accuracy_std:.2f} "
          f"({report.probe_repeats} probes)")
    return 0


def cmd_eval(args) -> int:
    g = graphstore.load_graph(args.data)
    model, cfg = _load_model(Path(args.model), g)
    embeddings = _embeddings_from(model, g)
    mean, std = pipeline.probe_embeddings(embeddings, g, cfg.seed, args.repeats)
    print(f"accuracy: {mean:.2f} ± {std:.2f} ({args.repeats} probes)")
    return 0


def cmd_embed(args) -> int:
    g = graphstore.load_graph(args.data)
    model, _ = _load_model(Path(args.model), g)
    write_embeddings(_embeddings_from(model, g), g, Path(args.out))
    print(f"wrote embeddings for {g.n_nodes} nodes to {args.out}")
    return 0


def cmd_tune(args) -> int:
    g = graphstore.load_graph(args.data)
    base = load_config(args.config, _config_overrides(args))
    best_cfg, trial_log = pipeline.random_search(
        g, base, trials=args.trials, seed=args.search_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "trials.json", trial_log)
    _write_json(out / "best_config.json", config_as_dict(best_cfg))
    best = max(trial_log, key=lambda t: (t["val_accuracy"], -t["trial"]))
    print(f"best trial {best['trial']}: val accuracy {best['val_accuracy']:.2f} "
          f"(lr={best['lr']:.3g}, alpha={best['alpha']:.3g}, beta={best['beta']:.3g})")
    return 0


def cmd_gen_sbm(args) -> int:
    g = graphstore.gen_sbm(args.n_per_block, args.blocks, args.p_in,
                           args.p_out, args.seed)
    graphstore.save_graph(g, args.out)
    print(f"wrote SBM graph: {g.n_nodes} nodes, {len(g.edges)} edges, "
          f"{g.n_classes} blocks to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

_OVERRIDE_FLAGS = ("alpha", "beta", "tau", "k", "s_size", "lr", "epochs",
                   "seed", "hidden_dim", "latent_dim", "gw_metric", "ablation",
                   "sigma_convention", "eps_sinkhorn", "threads")


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    for name in _OVERRIDE_FLAGS:
        flag = "--" + name.replace("_", "-")
        if name in ("k", "s_size", "epochs", "seed", "hidden_dim",
                    "latent_dim", "threads"):
            p.add_argument(flag, type=int, default=None)
        elif name in ("gw_metric", "ablation", "sigma_convention"):
            p.add_argument(flag, type=str, default=None)
        else:
            p.add_argument(flag, type=float, default=None)
    p.add_argument("--denominator-includes-positive", action="store_true",
                   default=None,
                   help="add the positive pair to the contrastive denominator")


def _config_overrides(args) -> dict:
    out = {name: getattr(args, name) for name in _OVERRIDE_FLAGS}
    out["denominator_includes_positive"] = args.denominator_includes_positive
    return out


def build_parser() -> _Parser:
    parser = _Parser(prog="otgcl",
                     description="Graph self-supervised learning with "
                                 "Gaussian subgraph embeddings and optimal-transport "
                                 "contrastive losses.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="pre-train and write report + checkpoint")
    p.add_argument("--data", required=True, help="container directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--repeats", type=int, default=5, help="probe repetitions")
    _add_override_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="probe a trained checkpoint, print mean ± std")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="directory written by train")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("embed", help="write embeddings in the container features format")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("tune", help="random hyperparameter search on validation accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--search-seed", type=int, default=0)
    _add_override_flags(p)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("gen-sbm", help="write a synthetic block-model container")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-block", type=int, default=100)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen_sbm)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, os.environ.get("OTGCL_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "fn", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (graphstore.GraphFormatError, FileNotFoundError, ValueError,
            OSError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
