#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Command-line front end: ``dmf-poi prepare | graph | train | eval | sweep | synth``.

A typical run on a synthetic corpus:

.. code-block:: bash

   dmf-poi synth --output checkins.csv --seed 7
   dmf-poi prepare --input checkins.csv --output dataset.json --split 0.9 --seed 7
   dmf-poi graph --input checkins.csv --dataset dataset.json --output graph.json --n 2
   dmf-poi train --dataset dataset.json --graph graph.json --model dmf --output run/
   dmf-poi eval --dataset dataset.json --checkpoint run/checkpoint.avro --output run/

Parameters come from the defaults, the ``DMF_SEED`` environment variable (seed
only), a JSON file given with ``--config``, and flags, each layer overriding the
previous one. A config file may hold top-level keys and per-command sections::

    {"seed": 7, "train": {"T": 50, "beta": 0.1}}

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
from dataclasses import fields
import logging
from pathlib import Path
import sys

from . import __version__, settings
from .dataio import filter_interactions, load_dataset, normalize, parse_checkins, save_dataset, split
from .dmfcore import HyperParams, hyperparams_for
from .evaluation import evaluate, stats_frame
from .exceptions import DataError, DMFError, UnreadableFile, UsageError
from .forms import (
    EvalForm,
    GraphForm,
    PrepareForm,
    SweepForm,
    SynthForm,
    TrainForm,
    clean_parameters,
)
from .geograph import (
    DistanceKernel,
    build_graph,
    cross_city_edges,
    derive_locations,
    graph_from_dict,
    graph_to_dict,
)
from .runner import load_model, run_sweep, sweep_cells, train_model
from .synth import SynthConfig, generate
from .utils import configure_logging, log_and_print
from .utils.codecs import dump_json, load_json


LOGGER = logging.getLogger(__name__)

GLOBAL_OPTIONS = ("command", "handler", "config", "log_level", "log_format")
DMF_KINDS = ("dmf", "gdmf", "ldmf")


class ArgumentParser(argparse.ArgumentParser):
    """Raises `UsageError` instead of exiting on bad arguments."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(parser, *names, **kwargs):
    # None means "not given" so lower-precedence layers show through
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def _switch(parser, *names, **kwargs):
    parser.add_argument(*names, action="store_true", default=None, **kwargs)


def _add_hyperparams(parser):
    _flag(parser, "--model", choices=settings.MODEL_KINDS)
    _flag(parser, "--k", dest="K", type=int, help="Latent dimension K.")
    _flag(parser, "--theta", type=float, help="Learning rate.")
    _flag(parser, "--alpha", type=float, help="User regularizer (lambda for mf and bpr).")
    _flag(parser, "--beta", type=float, help="Global item factor regularizer.")
    _flag(parser, "--gamma", type=float, help="Personal item factor regularizer.")
    _flag(parser, "--d", dest="D", type=int, help="Maximum random walk distance.")
    _flag(parser, "--m", dest="m", type=int, help="Negatives per observed rating.")
    _flag(parser, "--t", dest="T", type=int, help="Epochs.")
    _flag(parser, "--seed", type=int)
    _switch(parser, "--freeze-q", dest="freeze_q", help="Keep personal factors at zero.")
    _flag(parser, "--walk-scale", dest="walk_scale", choices=("layer", "normalized"))
    _flag(parser, "--walk-mode", dest="walk_mode", choices=("deterministic-layers", "sampled"))
    _switch(parser, "--neg-same-city", dest="neg_same_city")


def build_parser():
    parser = ArgumentParser(prog="dmf-poi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="JSON config file.")
    parser.add_argument("--log-level", dest="log_level", default="INFO")
    parser.add_argument("--log-format", dest="log_format", default="plain", choices=("plain", "json"))
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    prepare = commands.add_parser("prepare", help="Parse, filter, normalize and split check-ins.")
    _flag(prepare, "--input")
    _flag(prepare, "--output")
    _flag(prepare, "--split", dest="train_fraction", type=float)
    _flag(prepare, "--seed", type=int)
    _flag(prepare, "--normalize", choices=("binary", "minmax"))
    _flag(prepare, "--min-interactions", dest="min_interactions", type=int)
    _flag(prepare, "--max-interactions", dest="max_interactions", type=int)
    _switch(prepare, "--skip-malformed", dest="skip_malformed")
    prepare.set_defaults(handler=cmd_prepare)

    graph = commands.add_parser("graph", help="Build the user adjacency graph.")
    _flag(graph, "--input", help="Check-in CSV.")
    _flag(graph, "--dataset")
    _flag(graph, "--output")
    _flag(graph, "--n", type=int, help="Maximum neighbors per user.")
    _flag(graph, "--f", choices=("constant", "gaussian"), help="Distance kernel.")
    _flag(graph, "--sigma", type=float, help="Gaussian kernel bandwidth in km.")
    _switch(graph, "--skip-malformed", dest="skip_malformed")
    graph.set_defaults(handler=cmd_graph)

    train = commands.add_parser("train", help="Train a model.")
    _flag(train, "--dataset")
    _flag(train, "--graph")
    _flag(train, "--output", help="Output directory.")
    _flag(train, "--checkpoint-every", dest="checkpoint_every", type=int)
    _add_hyperparams(train)
    train.set_defaults(handler=cmd_train)

    evaluate_ = commands.add_parser("eval", help="Evaluate a checkpoint.")
    _flag(evaluate_, "--dataset")
    _flag(evaluate_, "--checkpoint")
    _flag(evaluate_, "--output", help="Output directory.")
    _flag(evaluate_, "--k-values", dest="k_values", help="Comma-separated, e.g. 5,10.")
    _switch(evaluate_, "--city-candidates", dest="city_candidates")
    evaluate_.set_defaults(handler=cmd_eval)

    sweep = commands.add_parser("sweep", help="Train and evaluate over a parameter grid.")
    _flag(sweep, "--dataset")
    _flag(sweep, "--graph")
    _flag(sweep, "--output", help="Output directory; holds the resumable manifest.")
    _flag(sweep, "--betas", help="Comma-separated beta grid.")
    _flag(sweep, "--gammas", help="Comma-separated gamma grid.")
    _flag(sweep, "--ds", dest="Ds", help="Comma-separated walk distance grid.")
    _flag(sweep, "--ks", dest="Ks", help="Comma-separated latent dimension grid.")
    _flag(sweep, "--k-values", dest="k_values")
    _switch(sweep, "--city-candidates", dest="city_candidates")
    _flag(sweep, "--workers", type=int)
    _add_hyperparams(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    synth = commands.add_parser("synth", help="Generate a synthetic check-in corpus.")
    _flag(synth, "--output")
    _flag(synth, "--cities", type=int)
    _flag(synth, "--users", type=int, help="Users per city.")
    _flag(synth, "--items", type=int, help="Items per city.")
    _flag(synth, "--groups", type=int, help="Preference groups per city.")
    _flag(synth, "--p-in", dest="p_in", type=float)
    _flag(synth, "--p-out", dest="p_out", type=float)
    _flag(synth, "--seed", type=int)
    synth.set_defaults(handler=cmd_synth)

    return parser


def _config_layer(config, command):
    layer = {k: v for k, v in config.items() if not isinstance(v, dict)}
    layer.update(config.get(command, {}))
    return layer


def parameters(form_class, args, config):
    """Validated parameters: defaults < DMF_SEED < config file < flags."""
    flags = {k: v for k, v in vars(args).items() if k not in GLOBAL_OPTIONS}
    return clean_parameters(
        form_class,
        {"seed": settings.env_seed()},
        _config_layer(config, args.command),
        flags,
    )


def hyperparams(params):
    return HyperParams(**{f.name: params[f.name] for f in fields(HyperParams)})


def _output_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_checkins(path, skip_malformed):
    with open(path, "rb") as fin:
        return parse_checkins(fin, skip_malformed=skip_malformed)


def _load_graph(params, kind, D):
    if params.get("graph"):
        return graph_from_dict(load_json(params["graph"]))
    if kind in ("dmf", "gdmf") and D > 0:
        raise UsageError(f"--graph is required for model {kind} with D={D}")
    return None


def cmd_prepare(args, config):
    p = parameters(PrepareForm, args, config)
    records = _read_checkins(p["input"], p["skip_malformed"])
    records = filter_interactions(records, p["min_interactions"], p["max_interactions"])
    dataset = split(normalize(records, p["normalize"]), p["train_fraction"], p["seed"])
    output = Path(p["output"])
    output.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, output)
    log_and_print(
        LOGGER,
        f"Wrote {output}: {dataset.I} users, {dataset.J} items, "
        f"{len(dataset.train)} train and {len(dataset.test)} test ratings",
    )


def cmd_graph(args, config):
    p = parameters(GraphForm, args, config)
    dataset = load_dataset(p["dataset"])
    # the check-ins the dataset was built from
    records = [
        r for r in _read_checkins(p["input"], p["skip_malformed"])
        if r.user_id in dataset.user_index and r.item_id in dataset.item_index
    ]
    kernel = DistanceKernel(kind=p["f"], sigma=p["sigma"])
    graph = build_graph(derive_locations(records, dataset.user_index), p["n"], kernel)
    output = Path(p["output"])
    output.parent.mkdir(parents=True, exist_ok=True)
    dump_json(graph_to_dict(graph), output)
    log_and_print(
        LOGGER,
        f"Wrote {output}: {graph.I} users, {len(graph.edges())} edges, "
        f"{cross_city_edges(graph)} cross-city edges",
    )


def cmd_train(args, config):
    p = parameters(TrainForm, args, config)
    kind = p["model"]
    hp = hyperparams(p)
    effective = hyperparams_for(kind, hp) if kind in DMF_KINDS else hp
    dataset = load_dataset(p["dataset"])
    graph = _load_graph(p, kind, effective.D)
    output = _output_dir(p["output"])

    trained = train_model(
        kind, dataset, graph, hp, checkpoint_dir=output, checkpoint_every=p["checkpoint_every"]
    )
    trained.save(output / "checkpoint.avro")
    stats_frame(trained.history).to_csv(output / "epochs.csv", index=False, lineterminator="\n")
    report = {
        "schema_version": settings.SCHEMA_VERSION,
        "model": kind,
        "hyperparams": trained.hp.to_dict(),
        "epochs": len(trained.history),
        "final": trained.history[-1].to_dict(),
    }
    if trained.communication is not None:
        report["communication"] = trained.communication
    dump_json(report, output / "train.json")
    log_and_print(
        LOGGER,
        f"Trained {kind} for {len(trained.history)} epochs: "
        f"train_loss={trained.history[-1].train_loss:.6f}, wrote {output}",
    )


def cmd_eval(args, config):
    p = parameters(EvalForm, args, config)
    dataset = load_dataset(p["dataset"])
    trained = load_model(p["checkpoint"])
    hp = trained.hp
    report = evaluate(
        trained.scorer(),
        dataset,
        k_values=p["k_values"],
        model_kind=trained.kind,
        city_candidates=p["city_candidates"],
        params={"K": hp.K, "D": hp.D, "beta": hp.beta, "gamma": hp.gamma},
    )
    output = _output_dir(p["output"])
    dump_json(report.to_dict(), output / "eval.json")
    report.to_frame().to_csv(output / "eval.csv", index=False, lineterminator="\n")
    cells = ", ".join(f"{name}={value:.4f}" for name, value in report.metrics().items())
    log_and_print(LOGGER, f"{trained.kind} on {report.users_evaluated} users: {cells}")


def cmd_sweep(args, config):
    p = parameters(SweepForm, args, config)
    kind = p["model"]
    hp = hyperparams(p)
    dataset = load_dataset(p["dataset"])
    graph = _load_graph(p, kind, 0 if kind == "ldmf" else max(p["Ds"]))
    cells = sweep_cells(p["Ks"], p["Ds"], p["betas"], p["gammas"])
    csv_path = run_sweep(
        kind,
        dataset,
        graph,
        hp,
        cells,
        p["output"],
        k_values=p["k_values"],
        city_candidates=p["city_candidates"],
        workers=p["workers"],
    )
    log_and_print(LOGGER, f"Wrote {len(cells)} sweep rows to {csv_path}")


def cmd_synth(args, config):
    p = parameters(SynthForm, args, config)
    corpus = generate(
        SynthConfig(
            cities=p["cities"],
            users_per_city=p["users"],
            items_per_city=p["items"],
            groups=p["groups"],
            p_in=p["p_in"],
            p_out=p["p_out"],
            seed=p["seed"],
        )
    )
    output = Path(p["output"])
    output.parent.mkdir(parents=True, exist_ok=True)
    corpus.to_csv(output)
    log_and_print(LOGGER, f"Wrote {len(corpus.records)} check-ins to {output}")


def _load_config(path):
    try:
        config = load_json(path)
    except UnreadableFile as e:
        raise UsageError(f"Config file {path} is not readable JSON") from e
    if not isinstance(config, dict):
        raise UsageError(f"Config file {path} must hold a JSON object")
    return config


def main(argv=None):
    """Run one command; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level, args.log_format)
        config = _load_config(args.config) if args.config else {}
        args.handler(args, config)
    except DMFError as e:
        LOGGER.error(str(e))
        print(f"dmf-poi: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"dmf-poi: error: {e}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as e:
        print(f"dmf-poi: error: {e}", file=sys.stderr)
        return UsageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
