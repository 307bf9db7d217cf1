# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""Small fixtures shared by the test modules."""

import io
import os

from dmf_poi.dataio import Dataset, Rating
from dmf_poi.geograph import AdjacencyGraph

SLOW = os.environ.get("DMF_SLOW_TESTS") == "1"
SLOW_REASON = "set DMF_SLOW_TESTS=1 to run acceptance-scale experiments"


def make_dataset(train, test=(), I=None, J=None, user_city=None, item_city=None):
    """Dataset from ``(i, j, r[, confidence])`` train tuples and ``(i, j, r)`` test tuples."""
    ratings = [Rating(*t) for t in train]
    pairs = [(r.i, r.j) for r in ratings] + [(i, j) for i, j, _ in test]
    I = I if I is not None else 1 + max(i for i, _ in pairs)
    J = J if J is not None else 1 + max(j for _, j in pairs)
    return Dataset(
        user_index={f"u{i}": i for i in range(I)},
        item_index={f"p{j}": j for j in range(J)},
        train=ratings,
        test=list(test),
        user_city=list(user_city) if user_city is not None else ["c"] * I,
        item_city=list(item_city) if item_city is not None else ["c"] * J,
    )


def chain_graph(I, city="c"):
    """Users ``0 - 1 - ... - I-1`` with unit weights."""
    return AdjacencyGraph.from_edges(
        I, [(i, i + 1, 1.0) for i in range(I - 1)], cities=[city] * I
    )


def csv_bytes(*lines, header="user_id,item_id,count,lat,lon,city"):
    """A check-in CSV byte stream."""
    return io.BytesIO(("\n".join((header,) + lines) + "\n").encode("utf-8"))
