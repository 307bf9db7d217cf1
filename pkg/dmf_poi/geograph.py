#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""User adjacency graph from geography, and random walks over it.

Two users may only be connected if they live in the same city; within a city
every user proposes its ``N`` nearest users, and edges are inserted greedily in
ascending distance order while both endpoints have fewer than ``N`` neighbors.
Edge weights come from a `DistanceKernel` (constant 1 by default).

Basic workflow:

.. code:: python

    locations = derive_locations(records, dataset.user_index)
    graph = build_graph(locations, N=2, kernel=DistanceKernel("constant"))

    layers = neighbor_layers(graph, i, D=2)   # [N^1(i), N^2(i)]
    plan = dissemination_plan(graph, WalkPolicy(D=2), i)

See especially:

.. autosummary::
   :nosignatures:

   haversine
   build_graph
   neighbor_layers
   transition_prob
   walk_prob
   dissemination_plan
"""

from collections import namedtuple
from dataclasses import dataclass
import logging
import math

from astropy.coordinates import angular_separation
import networkx as nx
import numpy as np
import scipy.sparse as sp

from . import settings
from .dataio import dominant_cities, records_frame
from .exceptions import InvalidSigma, IsolatedUser, UnlocatedUsers, UnreadableFile
from .utils.codecs import check_schema_version


LOGGER = logging.getLogger(__name__)

WALK_MODES = ("deterministic-layers", "sampled")
WALK_SCALES = ("layer", "normalized")

Delivery = namedtuple("Delivery", ["order", "layer_size", "weight", "recipients"])
Delivery.__doc__ = """Recipients of one gradient at walk order ``order``.

``weight`` is the resolved W_{ii'} and ``layer_size`` the size of N^order(i)
(1 for sampled walks). ``recipients`` is a tuple of user indices in ascending order.
"""


@dataclass(frozen=True)
class UserLocation:
    """A user's position: centroid of its check-ins in its dominant city."""

    user: int
    lat: float
    lon: float
    city: str


@dataclass(frozen=True)
class DistanceKernel:
    """Maps a distance in km to an edge weight in [0, 1].

    ``constant`` gives 1.0 for every edge; ``gaussian`` gives
    ``exp(-d**2 / (2 * sigma**2))``.
    """

    kind: str = settings.DISTANCE_KERNEL
    sigma: float = settings.GAUSSIAN_SIGMA_KM

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian"):
            raise ValueError(f"Unknown distance kernel {self.kind!r}")
        if self.kind == "gaussian" and (self.sigma is None or self.sigma <= 0):
            raise InvalidSigma(
                f"The gaussian kernel needs sigma > 0 (km), got {self.sigma!r}."
            )

    @property
    def is_constant(self):
        return self.kind == "constant"

    def __call__(self, d):
        if self.is_constant:
            return 1.0
        return math.exp(-(d * d) / (2.0 * self.sigma * self.sigma))

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class WalkPolicy:
    """How far, and to whom, a rating event's gradient travels.

    Attributes:
        D: maximum walk distance; 0 disables communication.
        mode: ``deterministic-layers`` sends to every member of N^1(i)..N^D(i);
              ``sampled`` walks D steps and sends to the endpoint of each step.
        scale: ``layer`` multiplies neighbor updates by |N^d(i)|, ``normalized``
               drops that factor.
    """

    D: int = settings.WALK_DISTANCE
    mode: str = settings.WALK_MODE
    scale: str = settings.WALK_SCALE

    def __post_init__(self):
        if self.D < 0:
            raise ValueError(f"Walk distance D must be >= 0, got {self.D}")
        if self.mode not in WALK_MODES:
            raise ValueError(f"Unknown walk mode {self.mode!r}; use one of {WALK_MODES}")
        if self.scale not in WALK_SCALES:
            raise ValueError(f"Unknown walk scale {self.scale!r}; use one of {WALK_SCALES}")


class AdjacencyGraph:
    """Capped, same-city, weighted user graph.

    Wraps a ``networkx.Graph`` whose nodes are user indices ``0..I-1`` with a
    ``city`` attribute and whose edges carry ``weight``. The graph is immutable
    once built; BFS layers, transition rows and dissemination plans are cached.
    """

    def __init__(self, graph, N, kernel):
        self.graph = graph
        self.N = N
        self.kernel = kernel
        self._layers = {}
        self._rows = {}
        self._plans = {}
        self._transition = None

    @classmethod
    def from_edges(cls, I, edges, N=settings.MAX_NEIGHBORS, kernel=None, cities=None):
        """Build a graph directly from ``(i, j, w)`` triples."""
        graph = nx.Graph()
        for i in range(I):
            graph.add_node(i, city=cities[i] if cities is not None else "")
        for i, j, w in edges:
            graph.add_edge(int(i), int(j), weight=float(w))
        return cls(graph, N, kernel or DistanceKernel())

    @property
    def I(self):  # noqa: E743
        return self.graph.number_of_nodes()

    def city(self, i):
        return self.graph.nodes[i]["city"]

    def neighbors(self, i):
        """Direct neighbors of ``i`` in ascending index order."""
        return sorted(self.graph.neighbors(i))

    def degree(self, i):
        return self.graph.degree(i)

    def weight(self, i, k):
        data = self.graph.get_edge_data(i, k)
        return 0.0 if data is None else data["weight"]

    def edges(self):
        """Sorted ``(i, j, w)`` triples with ``i < j``."""
        return sorted(
            (min(a, b), max(a, b), data["weight"])
            for a, b, data in self.graph.edges(data=True)
        )


def haversine(a, b):
    """Great-circle distance in km between two ``(lat, lon)`` points in degrees.

    Uses an Earth radius of 6371.0 km. The central angle comes from
    ``astropy.coordinates.angular_separation``, which stays accurate for both
    tiny and antipodal separations.
    """
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    return float(settings.EARTH_RADIUS_KM * angular_separation(lon1, lat1, lon2, lat2))


def pairwise_km(lats, lons):
    """Matrix of great-circle distances in km between all pairs of points."""
    lat = np.radians(np.asarray(lats, dtype=float))
    lon = np.radians(np.asarray(lons, dtype=float))
    return settings.EARTH_RADIUS_KM * angular_separation(
        lon[:, None], lat[:, None], lon[None, :], lat[None, :]
    )


def derive_locations(records, user_index=None):
    """Locate each user at the centroid of its check-ins in its dominant city.

    Args:
        records (list of CheckinRecord): Check-ins; every indexed user needs at least one.
        user_index (dict): user_id -> index. Defaults to first-appearance order.

    Returns:
        list of `UserLocation` sorted by user index.

    Raises:
        UnlocatedUsers: an indexed user has no check-ins.
    """
    frame = records_frame(records)
    if user_index is None:
        user_index = {u: n for n, u in enumerate(dict.fromkeys(frame["user_id"]))}
    else:
        frame = frame[frame["user_id"].isin(user_index.keys())]

    cities = dominant_cities(frame, "user_id")
    missing = [u for u in user_index if u not in cities]
    if missing:
        raise UnlocatedUsers(f"{len(missing)} users have no check-ins, e.g. {missing[:3]}")

    home = frame[frame["city"] == frame["user_id"].map(cities)]
    centroids = home.groupby("user_id", sort=False)[["lat", "lon"]].mean()

    locations = [
        UserLocation(
            user=user_index[u],
            lat=float(centroids.at[u, "lat"]),
            lon=float(centroids.at[u, "lon"]),
            city=cities[u],
        )
        for u in user_index
    ]
    return sorted(locations, key=lambda loc: loc.user)


def build_graph(locations, N=settings.MAX_NEIGHBORS, kernel=None):
    """Build the capped same-city adjacency graph.

    Within each city every user proposes its ``N`` nearest users (ties to the
    smaller index). Proposed pairs are then inserted in ascending
    ``(distance, i, j)`` order, skipping any pair where an endpoint already has
    ``N`` neighbors. Each edge is weighted by ``kernel(distance)``.

    Args:
        locations (list of UserLocation): One per user index ``0..I-1``.
        N (int): Degree cap, at least 1.
        kernel (DistanceKernel): Distance to weight mapping; constant by default.

    Returns:
        `AdjacencyGraph`
    """
    if N < 1:
        raise ValueError(f"The degree cap N must be >= 1, got {N}")
    kernel = kernel or DistanceKernel()

    graph = nx.Graph()
    by_city = {}
    for loc in sorted(locations, key=lambda loc: loc.user):
        graph.add_node(loc.user, city=loc.city)
        by_city.setdefault(loc.city, []).append(loc)

    proposals = {}
    for city in sorted(by_city):
        locs = by_city[city]
        users = np.array([loc.user for loc in locs])
        dist = pairwise_km([loc.lat for loc in locs], [loc.lon for loc in locs])
        for row, a in enumerate(users):
            order = np.lexsort((users, dist[row]))
            nearest = [int(col) for col in order if users[col] != a][:N]
            for col in nearest:
                lo, hi = sorted((row, col))
                proposals[(int(users[lo]), int(users[hi]))] = float(dist[lo, hi])

    degree = dict.fromkeys(graph.nodes, 0)
    for (a, b), d in sorted(proposals.items(), key=lambda item: (item[1], item[0])):
        if degree[a] < N and degree[b] < N:
            graph.add_edge(a, b, weight=kernel(d), km=d)
            degree[a] += 1
            degree[b] += 1

    LOGGER.info(
        f"Built adjacency graph: {graph.number_of_nodes()} users, "
        f"{graph.number_of_edges()} edges, {len(by_city)} cities, N={N}"
    )
    return AdjacencyGraph(graph, N, kernel)


def cross_city_edges(graph):
    """Number of edges joining users of different cities (always 0 for built graphs)."""
    return sum(1 for a, b in graph.graph.edges if graph.city(a) != graph.city(b))


def _layers(graph, i, D):
    key = (i, D)
    cached = graph._layers.get(key)
    if cached is None:
        layers = [set() for _ in range(D)]
        if D > 0:
            lengths = nx.single_source_shortest_path_length(graph.graph, i, cutoff=D)
            for node, d in lengths.items():
                if d >= 1:
                    layers[d - 1].add(node)
        cached = tuple(frozenset(layer) for layer in layers)
        graph._layers[key] = cached
    return cached


def neighbor_layers(graph, i, D):
    """BFS layers ``[N^1(i), ..., N^D(i)]``: users at shortest-path distance exactly d."""
    if D < 0:
        raise ValueError(f"D must be >= 0, got {D}")
    return [set(layer) for layer in _layers(graph, i, D)]


def reach(graph, i, D):
    """Number of users within ``D`` hops of ``i``, excluding ``i``."""
    return sum(len(layer) for layer in _layers(graph, i, D))


def _transition_row(graph, i):
    row = graph._rows.get(i)
    if row is None:
        neighbors = graph.neighbors(i)
        weights = np.array([graph.weight(i, k) for k in neighbors], dtype=float)
        total = weights.sum()
        if not neighbors or total <= 0:
            raise IsolatedUser(i)
        row = (neighbors, weights / total)
        graph._rows[i] = row
    return row


def transition_prob(graph, i, k):
    """Probability that a walk at ``i`` steps to neighbor ``k``: w_ik / sum_i' w_ii'."""
    neighbors, probs = _transition_row(graph, i)
    if k not in neighbors:
        raise ValueError(f"User {k} is not a direct neighbor of user {i}")
    return float(probs[neighbors.index(k)])


def transition_matrix(graph):
    """Row-normalized transition matrix as ``scipy.sparse.csr_array``.

    Rows of isolated users are all zero.
    """
    if graph._transition is None:
        rows, cols, data = [], [], []
        for i in range(graph.I):
            try:
                neighbors, probs = _transition_row(graph, i)
            except IsolatedUser:
                continue
            rows.extend([i] * len(neighbors))
            cols.extend(neighbors)
            data.extend(probs.tolist())
        graph._transition = sp.csr_array(
            (np.array(data, dtype=float), (np.array(rows, dtype=int), np.array(cols, dtype=int))),
            shape=(graph.I, graph.I),
        )
    return graph._transition


def walk_distribution(graph, i, d):
    """Distribution of a ``d``-step random walk started at ``i``, over all users."""
    if d < 1:
        raise ValueError(f"Walk length d must be >= 1, got {d}")
    _transition_row(graph, i)  # raises IsolatedUser
    transition = transition_matrix(graph)
    x = np.zeros(graph.I)
    x[i] = 1.0
    for _ in range(d):
        x = transition.T @ x
    return x


def walk_prob(graph, i, k, d):
    """Probability that a ``d``-step random walk from ``i`` ends at ``k``."""
    return float(walk_distribution(graph, i, d)[k])


def dissemination_plan(graph, policy, i, rng=None):
    """Who receives user ``i``'s gradient, at which order and weight.

    ``deterministic-layers`` returns one `Delivery` per non-empty layer
    (weight 1.0 under a constant kernel) or, under a non-constant kernel, one per
    recipient weighted by ``walk_prob(graph, i, i', d)``. These plans are cached.

    ``sampled`` draws a ``D``-step walk from ``rng`` and returns one `Delivery`
    per step whose endpoint is not ``i`` itself, with weight 1.0.
    """
    if policy.D == 0:
        return ()
    if policy.mode == "sampled":
        if rng is None:
            raise ValueError("The sampled walk mode needs a random generator")
        return _sampled_plan(graph, policy.D, i, rng)

    key = (i, policy.D)
    plan = graph._plans.get(key)
    if plan is None:
        plan = []
        for d, layer in enumerate(_layers(graph, i, policy.D), start=1):
            if not layer:
                continue
            members = sorted(layer)
            if graph.kernel.is_constant:
                plan.append(Delivery(d, len(layer), 1.0, tuple(members)))
            else:
                dist = walk_distribution(graph, i, d)
                plan.extend(
                    Delivery(d, len(layer), float(dist[k]), (k,)) for k in members
                )
        plan = tuple(plan)
        graph._plans[key] = plan
    return plan


def _sampled_plan(graph, D, i, rng):
    plan = []
    current = i
    for d in range(1, D + 1):
        try:
            neighbors, probs = _transition_row(graph, current)
        except IsolatedUser:
            break
        current = neighbors[int(rng.choice(len(neighbors), p=probs))]
        if current != i:
            plan.append(Delivery(d, 1, 1.0, (current,)))
    return plan


def graph_to_dict(graph):
    """JSON-ready dict: edge list ``{"i", "j", "w"}`` plus N, kernel and city map."""
    return {
        "schema_version": settings.SCHEMA_VERSION,
        "I": graph.I,
        "N": graph.N,
        "kernel": graph.kernel.to_dict(),
        "cities": [graph.city(i) for i in range(graph.I)],
        "edges": [{"i": i, "j": j, "w": w} for i, j, w in graph.edges()],
    }


def graph_from_dict(data):
    """Rebuild an `AdjacencyGraph` from `graph_to_dict` output."""
    if not isinstance(data, dict):
        raise UnreadableFile(f"graph must be a JSON object, got {type(data).__name__}")
    check_schema_version(data.get("schema_version"), "graph")
    try:
        kernel = DistanceKernel(**data["kernel"])
        edges = [(e["i"], e["j"], e["w"]) for e in data["edges"]]
        I, N, cities = data["I"], data["N"], data["cities"]
    except (KeyError, TypeError) as e:
        raise UnreadableFile(f"graph has a missing or malformed field: {e!r}") from e
    return AdjacencyGraph.from_edges(I, edges, N=N, kernel=kernel, cities=cities)


def empty_graph(cities):
    """Edgeless graph over ``len(cities)`` users, for runs without communication."""
    return AdjacencyGraph.from_edges(len(cities), [], cities=list(cities))
