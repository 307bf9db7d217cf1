#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Model dispatch shared by the ``train``, ``eval`` and ``sweep`` commands.

`train_model` trains any of the five model kinds and returns a `TrainedModel`
that knows how to score, checkpoint and report itself. `run_sweep` runs a grid
of train-and-evaluate cells and keeps a manifest so an interrupted sweep picks
up where it stopped.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import hashlib
import itertools
import logging
import os
from pathlib import Path
import threading

import pandas as pd

from . import settings
from .baselines import (
    CENTRAL_KINDS,
    bpr_train,
    load_central_checkpoint,
    mf_train,
    save_central_checkpoint,
)
from .dmfcore import (
    hyperparams_for,
    init_states,
    load_checkpoint,
    make_bus,
    save_checkpoint,
    train,
)
from .dataio import dataset_to_dict
from .evaluation import DMFScorer, evaluate
from .exceptions import UnreadableFile, UsageError
from .geograph import graph_to_dict
from .simbus import cost_report
from .utils.codecs import load_json, read_avro_file, to_json


LOGGER = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SWEEP_CSV = "sweep.csv"


@dataclass
class TrainedModel:
    """A trained model of any kind with its training history."""

    kind: str
    hp: object
    model: object  # list of NodeState, or CentralModel
    history: list = field(default_factory=list)
    communication: dict = None

    @property
    def is_central(self):
        return self.kind in CENTRAL_KINDS

    def scorer(self):
        return self.model if self.is_central else DMFScorer(self.model)

    def save(self, path, epoch=None):
        if self.is_central:
            save_central_checkpoint(path, self.model, epoch=epoch)
        else:
            save_checkpoint(path, self.model, self.hp, model_kind=self.kind, epoch=epoch)


def train_model(kind, dataset, graph, hp, checkpoint_dir=None, checkpoint_every=0):
    """Train model ``kind`` on ``dataset``.

    DMF kinds go through `hyperparams_for`, so ``ldmf`` and ``gdmf`` are the
    DMF loop with D=0 and frozen personal factors respectively.

    Args:
        checkpoint_dir (Path): Where periodic checkpoints go.
        checkpoint_every (int): Write ``epoch-XXXX.avro`` every this many epochs; 0 never.
    """
    if kind not in settings.MODEL_KINDS:
        raise ValueError(f"Unknown model kind {kind!r}")

    def periodic(epoch, model, trained):
        if checkpoint_every and checkpoint_dir is not None and epoch % checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"epoch-{epoch:04d}.avro"
            trained.save(path, epoch=epoch)
            LOGGER.info(f"Wrote checkpoint {path}")

    if kind in CENTRAL_KINDS:
        trained = TrainedModel(kind=kind, hp=hp, model=None)
        fit = mf_train if kind == "mf" else bpr_train

        def on_epoch_end(epoch, model, stats):
            trained.model = model
            periodic(epoch, model, trained)

        trained.model = fit(dataset, hp, on_epoch_end=on_epoch_end)
        trained.history = list(trained.model.history)
        return trained

    hp = hyperparams_for(kind, hp)
    policy = hp.policy()
    states = init_states(dataset.I, dataset.J, hp)
    bus = make_bus(states, hp, policy)
    trained = TrainedModel(kind=kind, hp=hp, model=states)
    _, history = train(
        dataset,
        graph if policy.D > 0 else None,
        policy,
        hp,
        states=states,
        bus=bus,
        on_epoch_end=lambda epoch, model, stats: periodic(epoch, model, trained),
    )
    trained.history = history
    trained.communication = cost_report(bus.meter)
    return trained


def load_model(path):
    """Load any checkpoint written by `TrainedModel.save`."""
    _, metadata = read_avro_file(path)
    kind = metadata.get("dmf.model_kind")
    if kind in CENTRAL_KINDS:
        model = load_central_checkpoint(path)
        return TrainedModel(kind=kind, hp=model.hp, model=model)
    if kind in settings.MODEL_KINDS:
        states, hp, kind = load_checkpoint(path)
        return TrainedModel(kind=kind, hp=hp, model=states)
    raise UnreadableFile(f"{path} is not a dmf_poi checkpoint (model kind {kind!r})")


# Sweeps
CELL_FIELDS = ("K", "D", "beta", "gamma")


def sweep_cells(Ks, Ds, betas, gammas):
    """Grid cells in a fixed order: K, then D, then beta, then gamma."""
    return [
        {"K": K, "D": D, "beta": beta, "gamma": gamma}
        for K, D, beta, gamma in itertools.product(Ks, Ds, betas, gammas)
    ]


def cell_key(cell):
    return f"K={cell['K']},D={cell['D']},beta={cell['beta']!r},gamma={cell['gamma']!r}"


def run_cell(kind, dataset, graph, hp, cell, k_values, city_candidates=False):
    """Train and evaluate one grid cell; returns its flat result row."""
    cell_hp = replace(hp, K=cell["K"], D=cell["D"], beta=cell["beta"], gamma=cell["gamma"])
    trained = train_model(kind, dataset, graph, cell_hp)
    report = evaluate(
        trained.scorer(),
        dataset,
        k_values=k_values,
        model_kind=kind,
        city_candidates=city_candidates,
        params=dict(cell),
    )
    row = report.csv_row()
    communication = trained.communication or {}
    row["messages"] = communication.get("messages", 0)
    row["bytes_total"] = communication.get("bytes_total", 0)
    row["bytes_positive_only"] = communication.get("bytes_positive_only", 0)
    row["final_train_loss"] = trained.history[-1].train_loss
    row["final_test_loss"] = trained.history[-1].test_loss
    return row


def sweep_fingerprint(kind, dataset, graph, hp, k_values, city_candidates):
    """SHA-256 of everything a sweep's rows depend on besides the grid cell itself."""
    shared = {k: v for k, v in hp.to_dict().items() if k not in CELL_FIELDS}
    payload = {
        "model": kind,
        "hyperparams": shared,
        "k_values": sorted(set(int(k) for k in k_values)),
        "city_candidates": bool(city_candidates),
        "dataset": dataset_to_dict(dataset),
        "graph": None if graph is None else graph_to_dict(graph),
    }
    return hashlib.sha256(to_json(payload).encode("utf-8")).hexdigest()


def _write_manifest(path, manifest):
    tmp = Path(f"{path}.tmp")
    tmp.write_text(to_json(manifest), encoding="utf-8")
    os.replace(tmp, path)


def run_sweep(kind, dataset, graph, hp, cells, output_dir, k_values=settings.K_VALUES,
              city_candidates=False, workers=1):
    """Run every grid cell not already in the manifest, then write the sweep CSV.

    Rows are written in grid order whatever ``workers`` is. Returns the CSV path.

    Raises:
        UsageError: ``output_dir`` holds a manifest of another model, dataset,
            graph or shared hyper-parameters.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = output_dir / MANIFEST
    fingerprint = sweep_fingerprint(kind, dataset, graph, hp, k_values, city_candidates)
    if manifest_path.exists():
        manifest = load_json(manifest_path)
    else:
        manifest = {
            "schema_version": settings.SCHEMA_VERSION,
            "model": kind,
            "fingerprint": fingerprint,
            "completed": {},
        }
    if manifest.get("model") != kind:
        raise UsageError(
            f"{manifest_path} belongs to a {manifest.get('model')!r} sweep, not {kind!r}"
        )
    if manifest.get("fingerprint") != fingerprint:
        raise UsageError(
            f"{manifest_path} was written for other data or settings; "
            "use a fresh output directory"
        )
    completed = manifest["completed"]
    pending = [cell for cell in cells if cell_key(cell) not in completed]
    LOGGER.info(
        f"Sweep of {len(cells)} cells: {len(cells) - len(pending)} done, "
        f"{len(pending)} to run on {workers} worker(s)"
    )

    lock = threading.Lock()

    def work(cell):
        row = run_cell(kind, dataset, graph, hp, cell, k_values, city_candidates)
        with lock:
            completed[cell_key(cell)] = row
            _write_manifest(manifest_path, manifest)
        LOGGER.info(f"Finished sweep cell {cell_key(cell)}")
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # list() re-raises the first failure
            list(pool.map(work, pending))
    else:
        for cell in pending:
            work(cell)

    frame = pd.DataFrame([completed[cell_key(cell)] for cell in cells])
    csv_path = output_dir / SWEEP_CSV
    frame.to_csv(csv_path, index=False, lineterminator="\n")
    return csv_path
