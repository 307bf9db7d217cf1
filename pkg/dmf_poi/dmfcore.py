#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Decentralized matrix factorization: learner node state and the training loop.

Every user ``i`` is a node holding

- ``u``: its user factor u_i (K-vector),
- ``P``: its copy of the global item factors, row ``j`` is p^i_j (J x K),
- ``Q``: its personal item factors, row ``j`` is q^i_j (J x K).

A node scores item ``j`` as ``u . (P[j] + Q[j])``. When a node trains on one of
its ratings it updates its own ``u``, ``P[j]`` and ``Q[j]`` and publishes the
gradient of ``P[j]`` on the `GradientBus`; nodes within walk distance D apply
that gradient to their own ``P[j]``. Ratings, user factors and personal factors
never leave the node.

Basic workflow:

.. code:: python

    hp = HyperParams(K=5, D=2, m=3, T=100, seed=7)
    states, stats = train(dataset, graph, hp=hp)
    save_checkpoint("checkpoint.avro", states, hp, model_kind="dmf")

The ablations are configurations of the same loop: ``hyperparams_for("ldmf", hp)``
sets D=0 and ``hyperparams_for("gdmf", hp)`` freezes the personal factors at 0.

See especially:

.. autosummary::
   :nosignatures:

   init_state
   local_gradients
   apply_local_update
   apply_neighbor_update
   train_epoch
   train
"""

from dataclasses import asdict, dataclass, replace
import json
import logging
import math
import time

import numpy as np

from . import settings
from .dataio import sample_negatives
from .exceptions import NonFiniteUpdate, UnreadableFile
from .geograph import WalkPolicy, dissemination_plan, empty_graph
from .simbus import GradientBus
from .utils import seeded_rng
from .utils.codecs import check_schema_version, parse_schema, read_avro_file, write_avro_file


LOGGER = logging.getLogger(__name__)

# first key of every seeded stream, so init and epoch streams never coincide
INIT_STREAM = 0
EPOCH_STREAM = 1

NODE_STATE_SCHEMA = parse_schema({
    "type": "record",
    "name": "NodeState",
    "namespace": "dmf_poi",
    "fields": [
        {"name": "user", "type": "int"},
        {"name": "u", "type": {"type": "array", "items": "double"}},
        {"name": "P", "type": {"type": "array", "items": {"type": "array", "items": "double"}}},
        {"name": "Q", "type": {"type": "array", "items": {"type": "array", "items": "double"}}},
    ],
})


@dataclass(frozen=True)
class HyperParams:
    """Hyper-parameters of a DMF run.

    Attributes:
        K: latent dimension.
        theta: learning rate.
        alpha, beta, gamma: regularizers of u_i, p^i_j and q^i_j.
        D: maximum walk distance; 0 turns communication off.
        m: sampled negatives per observed rating.
        T: epochs.
        seed: root seed of every random stream.
        freeze_q: keep the personal factors at zero.
        walk_scale: ``layer`` or ``normalized`` neighbor-update scaling.
        walk_mode: ``deterministic-layers`` or ``sampled``.
        neg_same_city: sample negatives among the user's city's items only.
    """

    K: int = settings.LATENT_DIM
    theta: float = settings.LEARNING_RATE
    alpha: float = settings.USER_REG
    beta: float = settings.GLOBAL_ITEM_REG
    gamma: float = settings.PERSONAL_ITEM_REG
    D: int = settings.WALK_DISTANCE
    m: int = settings.NEGATIVES
    T: int = settings.EPOCHS
    seed: int = settings.SEED
    freeze_q: bool = False
    walk_scale: str = settings.WALK_SCALE
    walk_mode: str = settings.WALK_MODE
    neg_same_city: bool = False

    def __post_init__(self):
        problems = []
        if self.K < 1:
            problems.append(f"K must be >= 1, got {self.K}")
        if not self.theta > 0:
            problems.append(f"theta must be > 0, got {self.theta}")
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.D < 0:
            problems.append(f"D must be >= 0, got {self.D}")
        if self.m < 0:
            problems.append(f"m must be >= 0, got {self.m}")
        if self.T < 1:
            problems.append(f"T must be >= 1, got {self.T}")
        if problems:
            raise ValueError("Invalid hyper-parameters: " + "; ".join(problems))
        self.policy()  # validates walk_mode and walk_scale

    def policy(self):
        """The `WalkPolicy` these hyper-parameters describe."""
        return WalkPolicy(D=self.D, mode=self.walk_mode, scale=self.walk_scale)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def hyperparams_for(kind, hp):
    """Hyper-parameters of DMF model ``kind``: ``dmf``, ``gdmf`` or ``ldmf``.

    GDMF keeps no personal factors (``freeze_q``); LDMF never communicates (D=0).
    """
    if kind == "dmf":
        return hp
    if kind == "gdmf":
        return replace(hp, freeze_q=True)
    if kind == "ldmf":
        return replace(hp, D=0)
    raise ValueError(f"{kind!r} is not a DMF model kind; use dmf, gdmf or ldmf")


@dataclass
class NodeState:
    """One learner node: user factor, global item copy, personal item factors."""

    user: int
    u: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    freeze_q: bool = False


class NodeTable:
    """Every node of a run, stored as stacked arrays.

    ``U`` is I x K, ``P`` and ``Q`` are I x J x K. Indexing returns a
    `NodeState` whose arrays are views into the table, so updates made through
    a node land in the table.
    """

    def __init__(self, U, P, Q, freeze_q=False):
        self.U = U
        self.P = P
        self.Q = Q
        self.freeze_q = freeze_q

    def __len__(self):
        return self.U.shape[0]

    def __getitem__(self, i):
        i = range(len(self))[i]
        return NodeState(user=i, u=self.U[i], P=self.P[i], Q=self.Q[i], freeze_q=self.freeze_q)

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _stacked(states):
    """``(U, P, Q)`` of a `NodeTable` or of a list of `NodeState`."""
    if isinstance(states, NodeTable):
        return states.U, states.P, states.Q
    return (
        np.stack([node.u for node in states]),
        np.stack([node.P for node in states]),
        np.stack([node.Q for node in states]),
    )


@dataclass(frozen=True, eq=False)
class GradientMessage:
    """The only payload nodes exchange: a global item factor gradient.

    Attributes:
        origin: sending user i.
        item: item j.
        grad_p: dL/dp^i_j, a K-vector.
        order: walk order d >= 1 at which the recipient sits.
        weight: W_ii' as resolved by the walk policy.
        layer_size: |N^d(i)|.
    """

    origin: int
    item: int
    grad_p: np.ndarray
    order: int
    weight: float
    layer_size: int


@dataclass(frozen=True)
class EpochStats:
    """Losses and communication counters of one epoch."""

    epoch: int
    train_loss: float
    test_loss: float
    messages: int
    bytes: int
    messages_positive_only: int = 0
    bytes_positive_only: int = 0

    def to_dict(self):
        return asdict(self)


def init_state(user, J, hp, rng=None):
    """Initialize a node with entries drawn uniformly from [0, 1/sqrt(K)].

    Without ``rng`` the draws come from a stream keyed by ``(hp.seed, user)``, so
    a node's initial state does not depend on how many other nodes exist.
    Under ``freeze_q`` the personal factors are drawn and then zeroed, which
    keeps ``u`` and ``P`` identical to the unfrozen run.
    """
    if rng is None:
        rng = seeded_rng(hp.seed, INIT_STREAM, user)
    high = 1.0 / math.sqrt(hp.K)
    u = rng.uniform(0.0, high, size=hp.K)
    P = rng.uniform(0.0, high, size=(J, hp.K))
    Q = rng.uniform(0.0, high, size=(J, hp.K))
    if hp.freeze_q:
        Q[:] = 0.0
    return NodeState(user=user, u=u, P=P, Q=Q, freeze_q=hp.freeze_q)


def init_states(I, J, hp):
    """Initialize nodes ``0..I-1`` into a `NodeTable`.

    Node ``i`` holds exactly what ``init_state(i, J, hp)`` returns.
    """
    table = NodeTable(
        np.empty((I, hp.K)), np.empty((I, J, hp.K)), np.empty((I, J, hp.K)),
        freeze_q=hp.freeze_q,
    )
    for i in range(I):
        node = init_state(i, J, hp)
        table.U[i] = node.u
        table.P[i] = node.P
        table.Q[i] = node.Q
    return table


def predict(node, j):
    """Predicted rating ``u . (P[j] + Q[j])``, unclamped."""
    return float(node.u @ (node.P[j] + node.Q[j]))


def local_gradients(node, j, r, confidence, hp):
    """Gradients of the single-sample objective w.r.t. u_i, p^i_j and q^i_j.

    With ``e = confidence * (r - u . v)`` and ``v = p + q``::

        g_u = -e v + alpha u
        g_p = -e u + beta p
        g_q = -e u + gamma q

    Returns:
        (g_u, g_p, g_q) as new arrays.
    """
    u = node.u
    p = node.P[j]
    q = node.Q[j]
    v = p + q
    e = confidence * (r - float(u @ v))
    g_u = -e * v + hp.alpha * u
    g_p = -e * u + hp.beta * p
    g_q = -e * u + hp.gamma * q
    return g_u, g_p, g_q


def sample_loss(node, j, r, confidence, hp):
    """Single-sample objective whose gradients `local_gradients` returns."""
    u = node.u
    p = node.P[j]
    q = node.Q[j]
    residual = r - float(u @ (p + q))
    return (
        0.5 * confidence * residual * residual
        + 0.5 * hp.alpha * float(u @ u)
        + 0.5 * hp.beta * float(p @ p)
        + 0.5 * hp.gamma * float(q @ q)
    )


def apply_local_update(node, j, grads, theta):
    """SGD step on ``u``, ``P[j]`` and (unless frozen) ``Q[j]``.

    Raises:
        NonFiniteUpdate: a new entry is NaN or Inf. The node is left unchanged.
    """
    g_u, g_p, g_q = grads
    u_new = node.u - theta * g_u
    p_new = node.P[j] - theta * g_p
    q_new = node.Q[j] if node.freeze_q else node.Q[j] - theta * g_q
    if not (np.isfinite(u_new).all() and np.isfinite(p_new).all() and np.isfinite(q_new).all()):
        raise NonFiniteUpdate(node.user, j, detail=f"local step, |g_u|={np.linalg.norm(g_u):.3g}")
    node.u[:] = u_new
    node.P[j] = p_new
    node.Q[j] = q_new


def apply_neighbor_update(node, msg, theta, walk_scale=settings.WALK_SCALE):
    """Apply a received gradient to this node's copy of the item's global factor.

    ``layer`` scaling steps by ``theta * layer_size * weight``, ``normalized``
    scaling by ``theta * weight``. ``u`` and ``Q`` are never touched.
    """
    if msg.order < 1:
        raise ValueError(f"Neighbor messages have order >= 1, got {msg.order}")
    step = theta * msg.weight
    if walk_scale == "layer":
        step *= msg.layer_size
    if step == 0.0:
        return
    p_new = node.P[msg.item] - step * msg.grad_p
    if not np.isfinite(p_new).all():
        raise NonFiniteUpdate(
            node.user, msg.item, detail=f"gradient from user {msg.origin}, order {msg.order}"
        )
    node.P[msg.item] = p_new


def apply_layer_update(table, recipients, msg, theta, walk_scale=settings.WALK_SCALE):
    """`apply_neighbor_update` for several nodes of a `NodeTable` at once.

    Every recipient takes the same step. Nothing changes if any new entry is
    NaN or Inf.
    """
    if msg.order < 1:
        raise ValueError(f"Neighbor messages have order >= 1, got {msg.order}")
    step = theta * msg.weight
    if walk_scale == "layer":
        step *= msg.layer_size
    if step == 0.0:
        return
    rows = table.P[recipients, msg.item] - step * msg.grad_p
    finite = np.isfinite(rows).all(axis=1)
    if not finite.all():
        raise NonFiniteUpdate(
            recipients[int(np.argmin(finite))],
            msg.item,
            detail=f"gradient from user {msg.origin}, order {msg.order}",
        )
    table.P[recipients, msg.item] = rows


def make_bus(states, hp, policy=None, meter=None, record=False):
    """A `GradientBus` that applies delivered gradients to ``states``.

    A `NodeTable` takes each delivery in one `apply_layer_update`; a list of
    nodes takes it recipient by recipient through `apply_neighbor_update`.
    """
    scale = (policy or hp.policy()).scale
    theta = hp.theta

    if isinstance(states, NodeTable):
        def apply_many(recipients, msg):
            apply_layer_update(states, recipients, msg, theta, scale)

        return GradientBus(hp.K, meter=meter, record=record, batch_callback=apply_many)

    def apply(recipient, msg):
        apply_neighbor_update(states[recipient], msg, theta, scale)

    return GradientBus(hp.K, apply, meter=meter, record=record)


def train_loss(states, dataset, hp):
    """Objective over the observed training pairs, per training rating.

    Squared errors at each rating's confidence plus the regularizers of the
    touched vectors: u_i of every user with training data, p^i_j and q^i_j of
    every training pair.
    """
    if not dataset.train:
        return 0.0
    U, P, Q = _stacked(states)
    ii, jj, r, confidence = dataset.train_arrays()
    u, p, q = U[ii], P[ii, jj], Q[ii, jj]
    residual = r - np.einsum("nk,nk->n", u, p + q)
    users = np.unique(ii)
    total = (
        0.5 * np.sum(confidence * residual * residual)
        + 0.5 * hp.beta * np.sum(p * p)
        + 0.5 * hp.gamma * np.sum(q * q)
        + 0.5 * hp.alpha * np.sum(U[users] * U[users])
    )
    return float(total) / len(dataset.train)


def test_loss(states, dataset):
    """Mean of ``(r - prediction)**2 / 2`` over the test set, 0.0 if it is empty."""
    if not dataset.test:
        return 0.0
    U, P, Q = _stacked(states)
    ii, jj, r = dataset.test_arrays()
    residual = r - np.einsum("nk,nk->n", U[ii], P[ii, jj] + Q[ii, jj])
    return float(np.sum(0.5 * residual * residual)) / len(dataset.test)


def _negative_universes(dataset):
    by_city = dataset.city_items()
    return [by_city.get(city, []) for city in dataset.user_city]


def _process_sample(states, graph, policy, hp, rng, bus, i, j, r, confidence, positive):
    node = states[i]
    grads = local_gradients(node, j, r, confidence, hp)
    apply_local_update(node, j, grads, hp.theta)
    for delivery in dissemination_plan(graph, policy, i, rng):
        msg = GradientMessage(
            origin=i,
            item=j,
            grad_p=grads[1],
            order=delivery.order,
            weight=delivery.weight,
            layer_size=delivery.layer_size,
        )
        bus.deliver(msg, delivery.recipients, positive=positive)


def train_epoch(states, graph, policy, dataset, hp, rng, bus, epoch=1):
    """One pass over a shuffle of the training ratings.

    Each observed rating is processed first, then its ``m`` sampled negatives
    (rating 0.0, confidence 1/m). Processing a sample computes its gradients,
    updates the node, and disseminates the global item gradient over ``bus``
    to the recipients of `dissemination_plan`.

    Returns:
        `EpochStats` with the losses after the pass and this pass's counters.
    """
    meter = bus.meter
    before = (meter.messages, meter.bytes, meter.messages_positive, meter.bytes_positive)
    rated = dataset.rated_items()
    universes = _negative_universes(dataset) if hp.neg_same_city else None

    order = rng.permutation(len(dataset.train))
    try:
        for idx in order:
            rating = dataset.train[idx]
            i = rating.i
            negatives = ()
            if hp.m > 0:
                negatives = sample_negatives(
                    i, hp.m, rated[i], dataset.J, rng,
                    universe=None if universes is None else universes[i],
                )
            _process_sample(
                states, graph, policy, hp, rng, bus, i, rating.j, rating.r,
                rating.confidence, True,
            )
            for neg in negatives:
                _process_sample(
                    states, graph, policy, hp, rng, bus, i, neg.item_id, neg.rating,
                    neg.confidence, False,
                )
    except NonFiniteUpdate as e:
        e.epoch = epoch
        LOGGER.error(str(e))
        raise

    return EpochStats(
        epoch=epoch,
        train_loss=train_loss(states, dataset, hp),
        test_loss=test_loss(states, dataset),
        messages=meter.messages - before[0],
        bytes=meter.bytes - before[1],
        messages_positive_only=meter.messages_positive - before[2],
        bytes_positive_only=meter.bytes_positive - before[3],
    )


def train(dataset, graph=None, policy=None, hp=HyperParams(), states=None, bus=None,
          on_epoch_end=None):
    """Run ``hp.T`` epochs of decentralized training.

    Args:
        dataset (Dataset): Train (and optionally test) ratings.
        graph (AdjacencyGraph): User graph; may be None when D is 0.
        policy (WalkPolicy): Defaults to ``hp.policy()``.
        hp (HyperParams): Hyper-parameters.
        states (list of NodeState): Start from these nodes instead of `init_states`.
        bus (GradientBus): Bus wired to ``states``; `make_bus` by default.
        on_epoch_end (Callable): ``on_epoch_end(epoch, states, stats)`` after each epoch.

    Returns:
        (states, list of `EpochStats`)
    """
    policy = policy or hp.policy()
    if graph is None:
        if policy.D > 0:
            raise ValueError("A user graph is required when the walk distance D > 0")
        graph = empty_graph(dataset.user_city or [""] * dataset.I)
    if graph.I != dataset.I:
        raise ValueError(f"Graph has {graph.I} users but the dataset has {dataset.I}")

    if states is None:
        states = init_states(dataset.I, dataset.J, hp)
    if bus is None:
        bus = make_bus(states, hp, policy)

    LOGGER.info(
        f"Training DMF: {dataset.I} users, {dataset.J} items, {len(dataset.train)} "
        f"train ratings, K={hp.K}, D={policy.D}, mode={policy.mode}, "
        f"scale={policy.scale}, freeze_q={hp.freeze_q}, T={hp.T}"
    )
    history = []
    for epoch in range(1, hp.T + 1):
        start = time.perf_counter()
        rng = seeded_rng(hp.seed, EPOCH_STREAM, epoch)
        stats = train_epoch(states, graph, policy, dataset, hp, rng, bus, epoch=epoch)
        history.append(stats)
        LOGGER.info(
            f"epoch {epoch}/{hp.T}: train_loss={stats.train_loss:.6f} "
            f"test_loss={stats.test_loss:.6f} messages={stats.messages} "
            f"bytes={stats.bytes} ({time.perf_counter() - start:.2f}s)"
        )
        if on_epoch_end is not None:
            on_epoch_end(epoch, states, stats)
    return states, history


def save_checkpoint(path, states, hp, model_kind="dmf", epoch=None):
    """Write all node states to an Avro container file with the hyper-parameters."""
    metadata = {
        "dmf.schema_version": settings.SCHEMA_VERSION,
        "dmf.model_kind": model_kind,
        "dmf.hyperparams": json.dumps(hp.to_dict(), sort_keys=True),
        "dmf.epoch": hp.T if epoch is None else epoch,
    }
    records = (
        {"user": node.user, "u": node.u.tolist(), "P": node.P.tolist(), "Q": node.Q.tolist()}
        for node in states
    )
    write_avro_file(path, NODE_STATE_SCHEMA, records, metadata=metadata, seed=hp.seed)


def load_checkpoint(path):
    """Read a checkpoint written by `save_checkpoint`.

    Returns:
        (states, hp, model_kind)
    """
    records, metadata = read_avro_file(path)
    check_schema_version(metadata.get("dmf.schema_version"), f"checkpoint {path}")
    try:
        hp = HyperParams.from_dict(json.loads(metadata["dmf.hyperparams"]))
        K = hp.K
        records = sorted(records, key=lambda rec: rec["user"])
        states = NodeTable(
            np.array([rec["u"] for rec in records], dtype=float).reshape(-1, K),
            np.stack([np.array(rec["P"], dtype=float).reshape(-1, K) for rec in records]),
            np.stack([np.array(rec["Q"], dtype=float).reshape(-1, K) for rec in records]),
            freeze_q=hp.freeze_q,
        )
        kind = metadata["dmf.model_kind"]
    except (KeyError, TypeError, ValueError) as e:
        raise UnreadableFile(f"checkpoint {path} is incomplete: {e!r}") from e
    return states, hp, kind
