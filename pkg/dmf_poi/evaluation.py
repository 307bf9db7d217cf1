#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Top-k recommendation and precision/recall at k.

Any object with a ``scores(i)`` method returning one score per item is a
scorer: `DMFScorer` wraps trained node states and
`dmf_poi.baselines.CentralModel` scores with its shared item matrix. Metric
code never looks further into a model than that.

Basic workflow:

.. code:: python

    report = evaluate(DMFScorer(states), dataset, k_values=(5, 10), model_kind="dmf")
    report.to_dict()   # {"metrics": {"P@5": ..., "R@5": ..., "P@10": ..., "R@10": ...}, ...}
"""

from dataclasses import dataclass, field
import logging

import numpy as np
import pandas as pd

from . import settings
from .exceptions import EmptyTestSet, InsufficientCandidates, NoTestUsers


LOGGER = logging.getLogger(__name__)


class DMFScorer:
    """Scores items for user ``i`` with node ``i``'s own factors."""

    def __init__(self, states):
        self.states = states

    def scores(self, i):
        node = self.states[i]
        return (node.P + node.Q) @ node.u


@dataclass
class EvalReport:
    """Mean P@k and R@k over the users that have test items.

    ``per_k`` maps k to ``(mean P@k, mean R@k)``. ``users_short`` counts the
    evaluated users whose candidate list held fewer than the largest k items.
    """

    k_values: tuple
    per_k: dict
    users_evaluated: int
    model_kind: str
    params: dict = field(default_factory=dict)
    users_short: int = 0

    def metrics(self):
        cells = {}
        for k in self.k_values:
            precision, recall = self.per_k[k]
            cells[f"P@{k}"] = precision
            cells[f"R@{k}"] = recall
        return cells

    def to_dict(self):
        return {
            "schema_version": settings.SCHEMA_VERSION,
            "model_kind": self.model_kind,
            "k_values": list(self.k_values),
            "users_evaluated": self.users_evaluated,
            "users_short": self.users_short,
            "metrics": self.metrics(),
            "params": dict(sorted(self.params.items())),
        }

    def csv_row(self):
        """Flat dict: model, run parameters, then the metric cells."""
        row = {"model": self.model_kind}
        row.update(self.params)
        row.update(self.metrics())
        row["users_evaluated"] = self.users_evaluated
        row["users_short"] = self.users_short
        return row

    def to_frame(self):
        return pd.DataFrame([self.csv_row()])


def candidate_items(n_items, exclude=(), candidates=None):
    """Ascending item indices in ``candidates`` (default: all) minus ``exclude``."""
    if candidates is None:
        allowed = np.ones(n_items, dtype=bool)
    else:
        allowed = np.zeros(n_items, dtype=bool)
        chosen = list(candidates)
        if chosen:
            allowed[chosen] = True
    excluded = list(exclude)
    if excluded:
        allowed[excluded] = False
    return np.flatnonzero(allowed)


def recommend_topk(scorer, user, k, exclude=(), candidates=None):
    """The ``k`` best-scoring items for ``user``.

    Args:
        scorer: Object with ``scores(i)``.
        user (int): User index.
        k (int): Number of items, >= 1.
        exclude (iterable of int): Items never recommended, usually the train items.
        candidates (iterable of int): Restrict to these items; all items by default.

    Returns:
        Item indices by descending score, ties by ascending index.

    Raises:
        InsufficientCandidates: fewer than ``k`` items remain after exclusion.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scorer.scores(user), dtype=float)
    items = candidate_items(len(scores), exclude, candidates)
    if len(items) < k:
        raise InsufficientCandidates(
            f"User {user} has {len(items)} candidate items, fewer than k={k}."
        )
    order = np.lexsort((items, -scores[items]))
    return [int(j) for j in items[order[:k]]]


def precision_recall_at_k(recommended, test_items, k):
    """``(|hits| / k, |hits| / |test_items|)`` for one user.

    A list shorter than ``k`` counts its empty slots as misses.
    """
    if len(recommended) > k:
        raise ValueError(f"Expected at most {k} recommendations, got {len(recommended)}")
    if not test_items:
        raise EmptyTestSet("Precision/recall needs at least one test item.")
    hits = len(set(recommended) & set(test_items))
    return hits / k, hits / len(test_items)


def evaluate(scorer, dataset, k_values=settings.K_VALUES, model_kind="dmf",
             city_candidates=False, params=None):
    """Mean P@k and R@k over every user with test items.

    Each user is ranked once at the largest k; smaller k use prefixes of that
    list. Candidates are all items minus the user's train items, optionally
    restricted to items of the user's city. A user with fewer candidates than
    the largest k is ranked over all of them, and the report counts such users
    in ``users_short``.

    Raises:
        NoTestUsers: no user has a test item.
    """
    k_values = tuple(sorted(set(int(k) for k in k_values)))
    if not k_values:
        raise ValueError("k_values must not be empty")
    test_items = dataset.test_items()
    users = [i for i in range(dataset.I) if test_items[i]]
    if not users:
        raise NoTestUsers("No user has test items.")

    rated = dataset.rated_items()
    by_city = dataset.city_items() if city_candidates else None
    k_max = k_values[-1]
    sums = {k: [0.0, 0.0] for k in k_values}
    short = 0
    for i in users:
        candidates = by_city.get(dataset.user_city[i], []) if by_city is not None else None
        depth = min(k_max, len(candidate_items(dataset.J, rated[i], candidates)))
        if depth < k_max:
            short += 1
        ranked = (
            recommend_topk(scorer, i, depth, exclude=rated[i], candidates=candidates)
            if depth else []
        )
        for k in k_values:
            precision, recall = precision_recall_at_k(ranked[:k], test_items[i], k)
            sums[k][0] += precision
            sums[k][1] += recall

    n = len(users)
    per_k = {k: (p / n, r / n) for k, (p, r) in sums.items()}
    if short:
        LOGGER.warning(f"{short} of {n} users have fewer than {k_max} candidate items")
    LOGGER.info(
        f"Evaluated {model_kind} on {n} users: "
        + ", ".join(f"P@{k}={p:.4f} R@{k}={r:.4f}" for k, (p, r) in per_k.items())
    )
    return EvalReport(
        k_values=k_values,
        per_k=per_k,
        users_evaluated=n,
        model_kind=model_kind,
        params=dict(params or {}),
        users_short=short,
    )


def stats_frame(history):
    """One row per `EpochStats`."""
    return pd.DataFrame([stats.to_dict() for stats in history])


def loss_curve(history):
    """Train and test loss per epoch, indexed by epoch."""
    frame = stats_frame(history)
    if frame.empty:
        return pd.DataFrame(columns=["train_loss", "test_loss"])
    return frame.set_index("epoch")[["train_loss", "test_loss"]]
