# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""Tests for the ``simbus`` module."""

from unittest import TestCase

import numpy as np

from dmf_poi.dmfcore import GradientMessage, HyperParams, train
from dmf_poi.geograph import reach
from dmf_poi.simbus import (
    GRADIENT_MESSAGE_SCHEMA,
    CostMeter,
    GradientBus,
    cost_report,
    decode_message,
    encode_message,
)

from .helpers import chain_graph, make_dataset


def message(K=5, origin=0):
    return GradientMessage(origin=origin, item=2, grad_p=np.arange(K, dtype=float),
                           order=1, weight=1.0, layer_size=3)


class Deliver(TestCase):
    """Tests for ``GradientBus.deliver``"""

    def test_accounting(self):
        """Test three recipients at K=5 add 3 messages and 60 bytes"""

        seen = []
        bus = GradientBus(5, lambda recipient, msg: seen.append(recipient))
        bus.deliver(message(), [7, 3, 5])
        self.assertEqual((bus.meter.messages, bus.meter.bytes), (3, 60))
        self.assertEqual(seen, [3, 5, 7])

    def test_negatives_counted_apart(self):
        """Test negative-sample deliveries count only toward the totals"""

        bus = GradientBus(2, lambda recipient, msg: None)
        bus.deliver(message(K=2), [1], positive=True)
        bus.deliver(message(K=2), [1, 2], positive=False)
        report = cost_report(bus.meter)
        self.assertEqual((report["messages"], report["bytes_total"]), (3, 24))
        self.assertEqual(
            (report["messages_positive_only"], report["bytes_positive_only"]), (1, 8)
        )
        self.assertEqual(report["per_user"], [{"user": 0, "messages": 3, "bytes": 24}])

    def test_empty_recipients(self):
        """Test delivering to nobody is rejected"""

        bus = GradientBus(2, lambda recipient, msg: None)
        with self.assertRaises(ValueError):
            bus.deliver(message(K=2), [])

    def test_record(self):
        """Test a recording bus logs every delivery"""

        bus = GradientBus(5, lambda recipient, msg: None, record=True)
        msg = message()
        bus.deliver(msg, [2, 1])
        self.assertEqual(bus.log, [(1, msg), (2, msg)])

    def test_batch_callback(self):
        """Test a batch callback takes the sorted recipients in one call"""

        calls = []
        bus = GradientBus(5, record=True,
                          batch_callback=lambda recipients, msg: calls.append(list(recipients)))
        msg = message()
        bus.deliver(msg, {4, 0, 2})
        self.assertEqual(calls, [[0, 2, 4]])
        self.assertEqual(bus.log, [(0, msg), (2, msg), (4, msg)])
        self.assertEqual(bus.meter.messages, 3)

    def test_needs_a_callback(self):
        """Test a bus without any callback is rejected"""

        with self.assertRaises(ValueError):
            GradientBus(5)


class CostReport(TestCase):
    """Tests for ``cost_report``"""

    def test_fresh(self):
        """Test a fresh meter reports zeros"""

        report = cost_report(CostMeter(4))
        self.assertEqual(report["messages"], 0)
        self.assertEqual(report["bytes_total"], 0)
        self.assertEqual(report["bytes_per_message"], 16)
        self.assertEqual(report["per_user"], [])

    def test_training_recount(self):
        """Test the bytes of a run equal the reach of every processed sample times 4K"""

        hp = HyperParams(K=3, D=2, m=2, T=2, seed=5)
        train_ratings = [(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (4, 3, 1.0), (4, 0, 1.0)]
        dataset = make_dataset(train_ratings, I=5, J=10)
        graph = chain_graph(5)
        _, history = train(dataset, graph, hp=hp)

        per_epoch = sum((1 + hp.m) * reach(graph, i, hp.D) for i, _, _ in train_ratings)
        positive = sum(reach(graph, i, hp.D) for i, _, _ in train_ratings)
        for stats in history:
            self.assertEqual(stats.messages, per_epoch)
            self.assertEqual(stats.bytes, per_epoch * 4 * hp.K)
            self.assertEqual(stats.messages_positive_only, positive)
            self.assertEqual(stats.bytes_positive_only, positive * 4 * hp.K)

    def test_monotone_in_walk_distance(self):
        """Test a longer walk never sends fewer messages"""

        dataset = make_dataset([(i, i % 4, 1.0) for i in range(8)], J=6)
        graph = chain_graph(8)
        counts = []
        for D in range(4):
            _, history = train(dataset, graph, hp=HyperParams(K=2, D=D, m=1, T=1, seed=2))
            counts.append(history[0].messages)
        self.assertEqual(counts[0], 0)
        self.assertEqual(counts, sorted(counts))


class MessageCodec(TestCase):
    """Tests for ``encode_message`` and ``decode_message``"""

    def test_schema_fields(self):
        """Test the wire schema carries only the gradient and its routing fields"""

        names = {f["name"] for f in GRADIENT_MESSAGE_SCHEMA["fields"]}
        self.assertEqual(names, {"origin", "item", "grad_p", "order", "weight", "layer_size"})

    def test_decode(self):
        """Test a decoded message matches the original"""

        msg = message()
        again = decode_message(encode_message(msg))
        self.assertEqual((again.origin, again.item, again.order, again.layer_size),
                         (msg.origin, msg.item, msg.order, msg.layer_size))
        self.assertEqual(again.weight, msg.weight)
        np.testing.assert_array_equal(again.grad_p, msg.grad_p)
