# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""Tests for the ``geograph`` module."""

import itertools
import math
from unittest import TestCase

import numpy as np

from dmf_poi.dataio import CheckinRecord
from dmf_poi.exceptions import (
    DataError,
    InvalidSigma,
    IsolatedUser,
    UnlocatedUsers,
    UnreadableFile,
    UnsupportedSchema,
)
from dmf_poi.geograph import (
    AdjacencyGraph,
    DistanceKernel,
    UserLocation,
    WalkPolicy,
    build_graph,
    cross_city_edges,
    derive_locations,
    dissemination_plan,
    graph_from_dict,
    graph_to_dict,
    haversine,
    neighbor_layers,
    reach,
    transition_prob,
    walk_prob,
)
from dmf_poi.utils import seeded_rng

from .helpers import chain_graph


class Haversine(TestCase):
    """Tests for ``haversine``"""

    def test_identical_points(self):
        """Test identical points are 0 km apart"""

        self.assertEqual(haversine((10, 20), (10, 20)), 0.0)

    def test_quarter_circle(self):
        """Test a quarter great circle on the equator"""

        self.assertAlmostEqual(haversine((0, 0), (0, 90)), math.pi / 2 * 6371.0, delta=0.01)

    def test_meridian_arc(self):
        """Test a 0.1 degree meridian arc"""

        self.assertAlmostEqual(haversine((40.7, -74.0), (40.8, -74.0)), 11.119, delta=0.01)
        self.assertAlmostEqual(haversine((40.7, -74.0), (40.8, -74.0)),
                               haversine((40.8, -74.0), (40.7, -74.0)), places=9)


class DeriveLocations(TestCase):
    """Tests for ``derive_locations``"""

    def test_majority_city_centroid(self):
        """Test the dominant city wins and the position is its centroid"""

        records = [
            CheckinRecord("u", "a", 1, 40.0, -74.0, "NYC"),
            CheckinRecord("u", "b", 1, 41.0, -73.0, "NYC"),
            CheckinRecord("u", "c", 1, 42.0, -75.0, "NYC"),
            CheckinRecord("u", "d", 1, 34.0, -118.0, "LA"),
        ]
        (loc,) = derive_locations(records)
        self.assertEqual(loc.city, "NYC")
        self.assertAlmostEqual(loc.lat, 41.0)
        self.assertAlmostEqual(loc.lon, -74.0)

    def test_singleton(self):
        """Test a single record gives its own city and coordinates"""

        (loc,) = derive_locations([CheckinRecord("u", "a", 1, 1.5, 2.5, "X")])
        self.assertEqual((loc.user, loc.lat, loc.lon, loc.city), (0, 1.5, 2.5, "X"))

    def test_tie_is_lexicographic(self):
        """Test a 2/2 tie goes to the lexicographically smaller city"""

        records = [CheckinRecord("u", f"p{n}", 1, 0.0, 0.0, city)
                   for n, city in enumerate(["NYC", "LA", "NYC", "LA"])]
        self.assertEqual(derive_locations(records)[0].city, "LA")

    def test_user_index_order(self):
        """Test locations follow a given user index"""

        records = [CheckinRecord("a", "p", 1, 0.0, 0.0, "X"), CheckinRecord("b", "p", 1, 1.0, 1.0, "X")]
        locs = derive_locations(records, {"b": 0, "a": 1})
        self.assertEqual([(l.user, l.lat) for l in locs], [(0, 1.0), (1, 0.0)])

    def test_user_without_checkins(self):
        """Test an indexed user with no check-ins is a data error"""

        records = [CheckinRecord("a", "p", 1, 0.0, 0.0, "X")]
        with self.assertRaises(UnlocatedUsers) as ctx:
            derive_locations(records, {"a": 0, "b": 1})
        self.assertIsInstance(ctx.exception, DataError)


class BuildGraph(TestCase):
    """Tests for ``build_graph``"""

    def setUp(self):
        rng = seeded_rng(0)
        self.locations = [
            UserLocation(i, 40.0 + rng.random() * 0.1, -74.0 + rng.random() * 0.1,
                         "A" if i < 15 else "B")
            for i in range(30)
        ]

    def test_degree_cap(self):
        """Test no user gets more than N neighbors"""

        for N in (1, 2, 3):
            graph = build_graph(self.locations, N=N)
            self.assertTrue(all(graph.degree(i) <= N for i in range(graph.I)))

    def test_constant_weights(self):
        """Test the constant kernel weights every edge 1.0"""

        graph = build_graph(self.locations, N=2)
        self.assertGreater(len(graph.edges()), 0)
        self.assertTrue(all(w == 1.0 for _, _, w in graph.edges()))

    def test_no_cross_city_edges(self):
        """Test users in different cities are never joined, however close"""

        locations = [UserLocation(0, 0.0, 0.0, "A"), UserLocation(1, 0.0, 0.0001, "B")]
        self.assertEqual(build_graph(locations, N=2).edges(), [])
        self.assertEqual(cross_city_edges(build_graph(self.locations, N=3)), 0)

    def test_nearest_first(self):
        """Test the greedy insertion links the two closest users of a line"""

        locations = [UserLocation(i, 0.0, lon, "A") for i, lon in enumerate([0.0, 0.01, 0.03, 0.06])]
        graph = build_graph(locations, N=1)
        self.assertEqual([(i, j) for i, j, _ in graph.edges()], [(0, 1), (2, 3)])

    def test_gaussian_kernel(self):
        """Test gaussian weights decay with distance and need sigma > 0"""

        with self.assertRaises(InvalidSigma):
            DistanceKernel("gaussian", 0.0)
        kernel = DistanceKernel("gaussian", 2.0)
        graph = build_graph(self.locations, N=2, kernel=kernel)
        for i, j, w in graph.edges():
            d = haversine((self.locations[i].lat, self.locations[i].lon),
                          (self.locations[j].lat, self.locations[j].lon))
            self.assertAlmostEqual(w, math.exp(-d * d / 8.0))

    def test_serialization(self):
        """Test a graph survives its JSON form"""

        graph = build_graph(self.locations, N=2)
        again = graph_from_dict(graph_to_dict(graph))
        self.assertEqual(again.edges(), graph.edges())
        self.assertEqual([again.city(i) for i in range(again.I)],
                         [graph.city(i) for i in range(graph.I)])

    def test_rejects_other_versions_and_missing_fields(self):
        """Test another schema version or a missing field is a data error"""

        data = graph_to_dict(build_graph(self.locations, N=2))
        with self.assertRaises(UnsupportedSchema):
            graph_from_dict(dict(data, schema_version=data["schema_version"] + 1))
        del data["edges"]
        with self.assertRaises(UnreadableFile):
            graph_from_dict(data)


class NeighborLayers(TestCase):
    """Tests for ``neighbor_layers`` and ``reach``"""

    def test_chain(self):
        """Test a chain gives one user per layer"""

        self.assertEqual(neighbor_layers(chain_graph(3), 0, 2), [{1}, {2}])

    def test_isolated(self):
        """Test an isolated user has empty layers"""

        graph = AdjacencyGraph.from_edges(2, [])
        self.assertEqual(neighbor_layers(graph, 0, 3), [set(), set(), set()])
        self.assertEqual(reach(graph, 0, 3), 0)

    def test_triangle(self):
        """Test layers use shortest-path distance"""

        graph = AdjacencyGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
        self.assertEqual(neighbor_layers(graph, 0, 2), [{1, 2}, set()])
        self.assertEqual(reach(graph, 0, 2), 2)


class TransitionProb(TestCase):
    """Tests for ``transition_prob``"""

    def test_weights(self):
        """Test probabilities are weights over the neighbors' total"""

        graph = AdjacencyGraph.from_edges(3, [(0, 1, 1.0), (0, 2, 3.0)])
        self.assertEqual(transition_prob(graph, 0, 1), 0.25)
        self.assertEqual(transition_prob(graph, 0, 2), 0.75)
        self.assertEqual(transition_prob(graph, 1, 0), 1.0)

    def test_isolated(self):
        """Test an isolated user raises IsolatedUser"""

        with self.assertRaises(IsolatedUser):
            transition_prob(AdjacencyGraph.from_edges(2, []), 0, 1)

    def test_not_a_neighbor(self):
        """Test asking about a non-neighbor is rejected"""

        with self.assertRaises(ValueError):
            transition_prob(chain_graph(3), 0, 2)


class WalkProb(TestCase):
    """Tests for ``walk_prob``"""

    def test_chain(self):
        """Test a 2-step walk along a chain"""

        self.assertAlmostEqual(walk_prob(chain_graph(3), 0, 2, 2), 0.5)

    def test_one_step(self):
        """Test d=1 reduces to the transition probability"""

        graph = AdjacencyGraph.from_edges(3, [(0, 1, 1.0), (0, 2, 3.0)])
        self.assertAlmostEqual(walk_prob(graph, 0, 2, 1), transition_prob(graph, 0, 2))

    def test_enumeration(self):
        """Test 3-step walk probabilities against enumeration of every walk"""

        rng = seeded_rng(3)
        edges = [(a, b, float(rng.uniform(0.1, 1.0)))
                 for a, b in itertools.combinations(range(6), 2) if rng.random() < 0.6]
        edges += [(a, a + 1, 0.5) for a in range(5) if not any(e[:2] == (a, a + 1) for e in edges)]
        graph = AdjacencyGraph.from_edges(6, edges)

        def step(a, b):
            total = sum(graph.weight(a, k) for k in graph.neighbors(a))
            return graph.weight(a, b) / total

        for start in range(6):
            expected = np.zeros(6)
            for path in itertools.product(range(6), repeat=3):
                nodes = (start,) + path
                if all(graph.weight(a, b) > 0 for a, b in zip(nodes, nodes[1:])):
                    expected[path[-1]] += np.prod([step(a, b) for a, b in zip(nodes, nodes[1:])])
            got = [walk_prob(graph, start, k, 3) for k in range(6)]
            np.testing.assert_allclose(got, expected, atol=1e-12)
            self.assertAlmostEqual(sum(got), 1.0)

    def test_isolated(self):
        """Test a walk from an isolated user raises IsolatedUser"""

        with self.assertRaises(IsolatedUser):
            walk_prob(AdjacencyGraph.from_edges(2, []), 0, 1, 2)


class DisseminationPlan(TestCase):
    """Tests for ``dissemination_plan``"""

    def test_layers(self):
        """Test deterministic plans deliver each layer with its size and unit weight"""

        plan = dissemination_plan(chain_graph(4), WalkPolicy(D=2), 1)
        self.assertEqual([(d.order, d.layer_size, d.weight, d.recipients) for d in plan],
                         [(1, 2, 1.0, (0, 2)), (2, 1, 1.0, (3,))])

    def test_no_walk(self):
        """Test D=0 delivers nothing"""

        self.assertEqual(tuple(dissemination_plan(chain_graph(3), WalkPolicy(D=0), 0)), ())

    def test_walk_weights(self):
        """Test a non-constant kernel weights each recipient by its walk probability"""

        graph = AdjacencyGraph.from_edges(
            3, [(0, 1, 0.5), (1, 2, 0.25)], kernel=DistanceKernel("gaussian", 1.0)
        )
        plan = dissemination_plan(graph, WalkPolicy(D=2), 0)
        self.assertEqual([(d.order, d.recipients) for d in plan], [(1, (1,)), (2, (2,))])
        self.assertAlmostEqual(plan[0].weight, 1.0)
        self.assertAlmostEqual(plan[1].weight, walk_prob(graph, 0, 2, 2))

    def test_sampled(self):
        """Test sampled walks deliver to walk endpoints other than the origin"""

        graph = chain_graph(5)
        rng = seeded_rng(8)
        for _ in range(100):
            plan = dissemination_plan(graph, WalkPolicy(D=3, mode="sampled"), 2, rng)
            for d in plan:
                self.assertEqual((d.layer_size, d.weight), (1, 1.0))
                self.assertNotEqual(d.recipients, (2,))
                self.assertLessEqual(abs(d.recipients[0] - 2), d.order)

    def test_sampled_step_frequencies(self):
        """Test the first sampled step follows the transition probabilities"""

        # user 0 has neighbors 1 and 2 with probabilities 0.75 and 0.25
        graph = AdjacencyGraph.from_edges(
            3, [(0, 1, 0.75), (0, 2, 0.25)], kernel=DistanceKernel("gaussian", 1.0)
        )
        rng = seeded_rng(21)
        firsts = [
            dissemination_plan(graph, WalkPolicy(D=1, mode="sampled"), 0, rng)[0].recipients[0]
            for _ in range(4000)
        ]
        self.assertAlmostEqual(firsts.count(1) / len(firsts), 0.75, delta=0.03)
