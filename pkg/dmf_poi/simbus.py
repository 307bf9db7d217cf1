#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""In-process message bus that delivers gradient messages between learner nodes.

The bus plays the part a Pub/Sub broker plays between real devices: the
training loop publishes one `GradientMessage` per walk order and the bus hands
it to each recipient's callback, in ascending user index, while a `CostMeter`
counts what would have crossed the network.

Basic workflow:

.. code:: python

    def apply(recipient, msg):
        apply_neighbor_update(states[recipient], msg, theta)

    bus = GradientBus(K=5, callback=apply)
    bus.deliver(msg, recipients=[3, 7])
    report = cost_report(bus.meter)

Each message is accounted as ``4 * K`` bytes, the size of its gradient payload.

See especially:

.. autosummary::
   :nosignatures:

   GradientBus.deliver
   CostMeter
   cost_report
   encode_message
"""

import logging

import numpy as np

from . import settings
from .utils.codecs import avro_to_dict, dict_to_avro, parse_schema


LOGGER = logging.getLogger(__name__)

# The wire schema of a gradient message. It has no field for a rating, a user
# factor or a personal item factor.
GRADIENT_MESSAGE_SCHEMA = {
    "type": "record",
    "name": "GradientMessage",
    "namespace": "dmf_poi",
    "fields": [
        {"name": "origin", "type": "int"},
        {"name": "item", "type": "int"},
        {"name": "grad_p", "type": {"type": "array", "items": "double"}},
        {"name": "order", "type": "int"},
        {"name": "weight", "type": "double"},
        {"name": "layer_size", "type": "int"},
    ],
}
_PARSED_SCHEMA = parse_schema(GRADIENT_MESSAGE_SCHEMA)


class CostMeter:
    """Counts delivered messages and their payload bytes.

    ``bytes == messages * 4 * K`` at all times. Counters for deliveries caused by
    observed (positive) ratings are kept separately from the totals, which also
    include sampled negatives.
    """

    def __init__(self, K):
        self.K = K
        self.messages = 0
        self.bytes = 0
        self.messages_positive = 0
        self.bytes_positive = 0
        self.per_user = {}  # origin -> [messages, bytes]

    @property
    def bytes_per_message(self):
        return settings.BYTES_PER_FLOAT * self.K

    def record(self, origin, n, positive=True):
        """Account ``n`` deliveries sent by ``origin``."""
        size = n * self.bytes_per_message
        self.messages += n
        self.bytes += size
        if positive:
            self.messages_positive += n
            self.bytes_positive += size
        counts = self.per_user.setdefault(origin, [0, 0])
        counts[0] += n
        counts[1] += size


class GradientBus:
    """Delivers gradient messages to recipient nodes through ``callback``.

    Args:
        K (int): Latent dimension, for byte accounting.
        callback (Callable): ``callback(recipient, msg)`` applies a message at a node.
        meter (CostMeter): Shared meter; a fresh one by default.
        record (bool): Keep a log of ``(recipient, msg)`` deliveries in ``self.log``.
        batch_callback (Callable): ``batch_callback(recipients, msg)`` applies a
            message at all recipients in one call; used instead of ``callback`` when set.
    """

    def __init__(self, K, callback=None, meter=None, record=False, batch_callback=None):
        if callback is None and batch_callback is None:
            raise ValueError("GradientBus needs a callback or a batch_callback")
        self.K = K
        self.callback = callback
        self.batch_callback = batch_callback
        self.meter = meter if meter is not None else CostMeter(K)
        self.log = [] if record else None

    def deliver(self, msg, recipients, positive=True):
        """Hand ``msg`` to every recipient, in ascending user index.

        Args:
            msg (GradientMessage): The gradient to deliver.
            recipients (iterable of int): Non-empty set of user indices.
            positive (bool): Whether the message stems from an observed rating.
        """
        recipients = sorted(recipients)
        if not recipients:
            raise ValueError("deliver needs at least one recipient")

        self.meter.record(msg.origin, len(recipients), positive)
        if self.batch_callback is not None:
            self.batch_callback(recipients, msg)
        else:
            for recipient in recipients:
                self.callback(recipient, msg)
        if self.log is not None:
            self.log.extend((recipient, msg) for recipient in recipients)


def cost_report(meter):
    """Totals and per-user breakdown of a `CostMeter` as a JSON-ready dict."""
    return {
        "K": meter.K,
        "bytes_per_message": meter.bytes_per_message,
        "messages": meter.messages,
        "bytes_total": meter.bytes,
        "messages_positive_only": meter.messages_positive,
        "bytes_positive_only": meter.bytes_positive,
        "per_user": [
            {"user": user, "messages": counts[0], "bytes": counts[1]}
            for user, counts in sorted(meter.per_user.items())
        ],
    }


def encode_message(msg):
    """Serialize a `GradientMessage` to schemaless Avro bytes."""
    record = {
        "origin": int(msg.origin),
        "item": int(msg.item),
        "grad_p": [float(g) for g in msg.grad_p],
        "order": int(msg.order),
        "weight": float(msg.weight),
        "layer_size": int(msg.layer_size),
    }
    return dict_to_avro(record, _PARSED_SCHEMA)


def decode_message(bytes_data):
    """Rebuild a `GradientMessage` from `encode_message` output."""
    from .dmfcore import GradientMessage  # dmfcore imports this module

    record = avro_to_dict(bytes_data, _PARSED_SCHEMA)
    record["grad_p"] = np.array(record["grad_p"], dtype=float)
    return GradientMessage(**record)
