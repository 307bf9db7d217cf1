#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Centralized comparison models: least-squares MF and pairwise BPR.

Both train one shared item matrix ``V`` for all users on the same `Dataset`
the decentralized models use, and score ``U[i] . V[j]``. The regularizer
``lambda`` is taken from ``HyperParams.alpha``.
"""

from dataclasses import dataclass, field
import json
import logging
import math
import time

import numpy as np
from scipy.special import expit

from . import settings
from .dataio import sample_negatives
from .dmfcore import EPOCH_STREAM, INIT_STREAM, EpochStats, HyperParams
from .exceptions import NonFiniteUpdate, UnreadableFile
from .utils import seeded_rng
from .utils.codecs import check_schema_version, parse_schema, read_avro_file, write_avro_file


LOGGER = logging.getLogger(__name__)

CENTRAL_KINDS = ("mf", "bpr")

FACTOR_MATRIX_SCHEMA = parse_schema({
    "type": "record",
    "name": "FactorMatrix",
    "namespace": "dmf_poi",
    "fields": [
        {"name": "name", "type": "string"},
        {"name": "rows", "type": {"type": "array", "items": {"type": "array", "items": "double"}}},
    ],
})


@dataclass
class CentralModel:
    """User factors ``U`` (I x K) and one shared item matrix ``V`` (J x K)."""

    U: np.ndarray
    V: np.ndarray
    hp: HyperParams
    kind: str = "mf"
    history: list = field(default_factory=list)

    def predict(self, i, j):
        return float(self.U[i] @ self.V[j])

    def scores(self, i):
        """Scores of every item for user ``i``."""
        return self.V @ self.U[i]


def init_model(I, J, hp, kind):
    """Draw ``U`` then ``V`` uniformly from [0, 1/sqrt(K)]."""
    rng = seeded_rng(hp.seed, INIT_STREAM)
    high = 1.0 / math.sqrt(hp.K)
    U = rng.uniform(0.0, high, size=(I, hp.K))
    V = rng.uniform(0.0, high, size=(J, hp.K))
    return CentralModel(U=U, V=V, hp=hp, kind=kind)


# MF
def mf_gradients(u, v, r, confidence, lam):
    """Gradients of the single-sample least-squares objective w.r.t. u and v."""
    e = confidence * (r - float(u @ v))
    return -e * v + lam * u, -e * u + lam * v


def mf_sample_loss(u, v, r, confidence, lam):
    residual = r - float(u @ v)
    return 0.5 * confidence * residual * residual + 0.5 * lam * (float(u @ u) + float(v @ v))


# BPR
def bpr_gradients(u, v_pos, v_neg, lam):
    """Gradients of ``-ln sigmoid(u . (v_pos - v_neg))`` plus L2 terms.

    Returns:
        (g_u, g_pos, g_neg)
    """
    diff = v_pos - v_neg
    sigma = float(expit(-float(u @ diff)))
    return (
        -sigma * diff + lam * u,
        -sigma * u + lam * v_pos,
        sigma * u + lam * v_neg,
    )


def bpr_sample_loss(u, v_pos, v_neg, lam):
    x = float(u @ (v_pos - v_neg))
    return float(np.logaddexp(0.0, -x)) + 0.5 * lam * (
        float(u @ u) + float(v_pos @ v_pos) + float(v_neg @ v_neg)
    )


def _step(model, i, rows, grads, theta):
    """SGD step on ``U[i]`` and the item rows, all or nothing."""
    u_new = model.U[i] - theta * grads[0]
    v_new = [model.V[j] - theta * g for j, g in zip(rows, grads[1:])]
    if not (np.isfinite(u_new).all() and all(np.isfinite(v).all() for v in v_new)):
        raise NonFiniteUpdate(i, rows[0], detail=f"{model.kind} step")
    model.U[i] = u_new
    for j, v in zip(rows, v_new):
        model.V[j] = v


def _universes(dataset, hp):
    if not hp.neg_same_city:
        return None
    by_city = dataset.city_items()
    return [by_city.get(city, []) for city in dataset.user_city]


def central_train_loss(model, dataset):
    """Least-squares objective over observed training pairs, per training rating."""
    if not dataset.train:
        return 0.0
    lam = model.hp.alpha
    ii, jj, r, confidence = dataset.train_arrays()
    V = model.V[jj]
    residual = r - np.einsum("nk,nk->n", model.U[ii], V)
    U = model.U[np.unique(ii)]
    total = 0.5 * float(confidence @ (residual * residual))
    total += 0.5 * lam * (float(np.sum(V * V)) + float(np.sum(U * U)))
    return total / len(dataset.train)


def bpr_pairs_loss(model, pairs):
    """Mean `bpr_sample_loss` over ``(i, pos, neg)`` index triples."""
    if not pairs:
        return 0.0
    lam = model.hp.alpha
    ii, pos, neg = np.asarray(pairs, dtype=int).T
    U, V_pos, V_neg = model.U[ii], model.V[pos], model.V[neg]
    x = np.einsum("nk,nk->n", U, V_pos - V_neg)
    reg = np.sum(U * U, axis=1) + np.sum(V_pos * V_pos, axis=1) + np.sum(V_neg * V_neg, axis=1)
    return float(np.mean(np.logaddexp(0.0, -x) + 0.5 * lam * reg))


def central_test_loss(model, dataset):
    if not dataset.test:
        return 0.0
    residuals = [r - model.predict(i, j) for i, j, r in dataset.test]
    return sum(0.5 * e * e for e in residuals) / len(residuals)


def _mf_epoch(model, dataset, rated, universes, rng):
    hp = model.hp
    lam = hp.alpha
    for idx in rng.permutation(len(dataset.train)):
        rating = dataset.train[idx]
        i = rating.i
        samples = [(rating.j, rating.r, rating.confidence)]
        if hp.m > 0:
            negatives = sample_negatives(
                i, hp.m, rated[i], dataset.J, rng,
                universe=None if universes is None else universes[i],
            )
            samples.extend((n.item_id, n.rating, n.confidence) for n in negatives)
        for j, r, c in samples:
            grads = mf_gradients(model.U[i], model.V[j], r, c, lam)
            _step(model, i, [j], grads, hp.theta)
    return central_train_loss(model, dataset)


def _bpr_epoch(model, dataset, rated, universes, rng):
    hp = model.hp
    lam = hp.alpha
    pairs = []
    for idx in rng.permutation(len(dataset.train)):
        rating = dataset.train[idx]
        i = rating.i
        negatives = sample_negatives(
            i, 1, rated[i], dataset.J, rng,
            universe=None if universes is None else universes[i],
        )
        if not negatives:
            continue
        j_pos, j_neg = rating.j, negatives[0].item_id
        u, v_pos, v_neg = model.U[i], model.V[j_pos], model.V[j_neg]
        pairs.append((i, j_pos, j_neg))
        _step(model, i, [j_pos, j_neg], bpr_gradients(u, v_pos, v_neg, lam), hp.theta)
    # the epoch's pairs, scored with the model the pass ended on
    return bpr_pairs_loss(model, pairs)


_EPOCHS = {"mf": _mf_epoch, "bpr": _bpr_epoch}


def _train(kind, dataset, hp, on_epoch_end=None):
    model = init_model(dataset.I, dataset.J, hp, kind)
    rated = dataset.rated_items()
    universes = _universes(dataset, hp)
    run_epoch = _EPOCHS[kind]
    LOGGER.info(
        f"Training {kind}: {dataset.I} users, {dataset.J} items, "
        f"{len(dataset.train)} train ratings, K={hp.K}, T={hp.T}"
    )
    for epoch in range(1, hp.T + 1):
        start = time.perf_counter()
        rng = seeded_rng(hp.seed, EPOCH_STREAM, epoch)
        try:
            loss = run_epoch(model, dataset, rated, universes, rng)
        except NonFiniteUpdate as e:
            e.epoch = epoch
            LOGGER.error(str(e))
            raise
        stats = EpochStats(
            epoch=epoch,
            train_loss=loss,
            test_loss=central_test_loss(model, dataset),
            messages=0,
            bytes=0,
        )
        model.history.append(stats)
        LOGGER.info(
            f"epoch {epoch}/{hp.T}: train_loss={stats.train_loss:.6f} "
            f"test_loss={stats.test_loss:.6f} ({time.perf_counter() - start:.2f}s)"
        )
        if on_epoch_end is not None:
            on_epoch_end(epoch, model, stats)
    return model


def mf_train(dataset, hp=HyperParams(), on_epoch_end=None):
    """Centralized least-squares MF with the same negative sampling as DMF."""
    return _train("mf", dataset, hp, on_epoch_end)


def bpr_train(dataset, hp=HyperParams(), on_epoch_end=None):
    """Centralized BPR, one uniformly sampled unrated item per observed rating."""
    return _train("bpr", dataset, hp, on_epoch_end)


def save_central_checkpoint(path, model, epoch=None):
    metadata = {
        "dmf.schema_version": settings.SCHEMA_VERSION,
        "dmf.model_kind": model.kind,
        "dmf.hyperparams": json.dumps(model.hp.to_dict(), sort_keys=True),
        "dmf.epoch": model.hp.T if epoch is None else epoch,
    }
    records = [
        {"name": "U", "rows": model.U.tolist()},
        {"name": "V", "rows": model.V.tolist()},
    ]
    write_avro_file(path, FACTOR_MATRIX_SCHEMA, records, metadata=metadata, seed=model.hp.seed)


def load_central_checkpoint(path):
    """Read a `CentralModel` written by `save_central_checkpoint`."""
    records, metadata = read_avro_file(path)
    check_schema_version(metadata.get("dmf.schema_version"), f"checkpoint {path}")
    try:
        hp = HyperParams.from_dict(json.loads(metadata["dmf.hyperparams"]))
        matrices = {
            rec["name"]: np.array(rec["rows"], dtype=float).reshape(-1, hp.K) for rec in records
        }
        return CentralModel(
            U=matrices["U"], V=matrices["V"], hp=hp, kind=metadata["dmf.model_kind"]
        )
    except (KeyError, TypeError, ValueError) as e:
        raise UnreadableFile(f"checkpoint {path} is incomplete: {e!r}") from e
