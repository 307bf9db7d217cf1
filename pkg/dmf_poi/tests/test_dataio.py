# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""Tests for the ``dataio`` module."""

import io
import os
import tempfile
from unittest import TestCase

import numpy as np

from dmf_poi.dataio import (
    CheckinRecord,
    dataset_from_dict,
    dataset_to_dict,
    filter_interactions,
    load_dataset,
    normalize,
    parse_checkins,
    sample_negatives,
    save_dataset,
    split,
)
from dmf_poi.exceptions import (
    DataError,
    DegenerateSplit,
    EmptyInput,
    MalformedRow,
    UnreadableFile,
    UnsupportedSchema,
)
from dmf_poi.utils import seeded_rng

from .helpers import csv_bytes, make_dataset


def record(user, item, count=1, city="NYC", lat=40.7, lon=-74.0):
    return CheckinRecord(user, item, count, lat, lon, city)


class ParseCheckins(TestCase):
    """Tests for ``parse_checkins``"""

    def test_field_mapping(self):
        """Test a data row maps directly onto a CheckinRecord"""

        records = parse_checkins(csv_bytes("u1,p1,2,40.7,-74.0,NYC"))
        self.assertEqual(records, [CheckinRecord("u1", "p1", 2, 40.7, -74.0, "NYC")])

    def test_header_only(self):
        """Test a header-only file gives an empty list"""

        self.assertEqual(parse_checkins(csv_bytes()), [])

    def test_empty_stream(self):
        """Test a stream without a header row raises EmptyInput"""

        with self.assertRaises(EmptyInput):
            parse_checkins(io.BytesIO(b""))

    def test_columns_by_header_name(self):
        """Test columns are located by header name, with optional timestamp"""

        source = csv_bytes(
            "NYC,-74.0,40.7,3,p1,u1,1600000000",
            header="city,lon,lat,count,item_id,user_id,timestamp",
        )
        (rec,) = parse_checkins(source)
        self.assertEqual((rec.user_id, rec.item_id, rec.count), ("u1", "p1", 3))
        self.assertEqual(rec.timestamp, 1600000000)

    def test_crlf_and_bom(self):
        """Test CRLF line endings and a UTF-8 byte order mark are accepted"""

        data = "\ufeffuser_id,item_id,count,lat,lon,city\r\nu1,p1,1,1.0,2.0,A\r\n"
        records = parse_checkins(io.BytesIO(data.encode("utf-8")))
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0].city, "A")

    def test_malformed_rows_report_line(self):
        """Test bad count, coordinates and field counts raise MalformedRow with the line"""

        bad_rows = ["u1,p1,0,40.7,-74.0,NYC", "u1,p1,1,north,-74.0,NYC",
                    "u1,p1,1,95.0,-74.0,NYC", "u1,p1,1,40.7"]
        for bad in bad_rows:
            with self.subTest(row=bad), self.assertRaises(MalformedRow) as ctx:
                parse_checkins(csv_bytes("u0,p0,1,1.0,1.0,A", bad))
            self.assertEqual(ctx.exception.line, 3)

    def test_skip_malformed(self):
        """Test malformed rows are dropped when skipping is requested"""

        source = csv_bytes("u1,p1,1,1.0,1.0,A", "u2,p2,x,1.0,1.0,A", "u3,p3,1,1.0,1.0,A")
        records = parse_checkins(source, skip_malformed=True)
        self.assertEqual([r.user_id for r in records], ["u1", "u3"])

    def test_missing_column(self):
        """Test a header without a required column is rejected"""

        with self.assertRaises(MalformedRow):
            parse_checkins(csv_bytes("u1,p1,1,1.0,1.0", header="user_id,item_id,count,lat,lon"))

    def test_too_many_fields(self):
        """Test a row with more fields than the header is malformed"""

        with self.assertRaises(MalformedRow) as ctx:
            parse_checkins(csv_bytes("u0,p0,1,1.0,1.0,A", "u1,p1,1,1.0,1.0,A,extra"))
        self.assertEqual(ctx.exception.line, 3)

    def test_blank_lines(self):
        """Test blank lines are skipped and later rows keep their line numbers"""

        records = parse_checkins(csv_bytes("u1,p1,1,1.0,1.0,A", "", "u2,p2,1,1.0,1.0,A"))
        self.assertEqual([r.user_id for r in records], ["u1", "u2"])
        with self.assertRaises(MalformedRow) as ctx:
            parse_checkins(csv_bytes("u1,p1,1,1.0,1.0,A", "", "u2,p2,x,1.0,1.0,A"))
        self.assertEqual(ctx.exception.line, 4)

    def test_invalid_utf8(self):
        """Test bytes that are not UTF-8 are a data error at their line"""

        data = b"user_id,item_id,count,lat,lon,city\nu1,p1,1,1.0,1.0,A\nu2,p\xff,1,1.0,1.0,A\n"
        with self.assertRaises(MalformedRow) as ctx:
            parse_checkins(io.BytesIO(data))
        self.assertEqual(ctx.exception.line, 3)
        self.assertIsInstance(ctx.exception, DataError)

    def test_surrounding_whitespace(self):
        """Test fields are stripped before they are checked"""

        (rec,) = parse_checkins(csv_bytes(" u1 , p1 , 2 , 40.7 , -74.0 , NYC "))
        self.assertEqual(rec, CheckinRecord("u1", "p1", 2, 40.7, -74.0, "NYC"))

    def test_stream_left_open(self):
        """Test the caller's stream is still usable after parsing"""

        source = csv_bytes("u1,p1,1,1.0,1.0,A")
        parse_checkins(source)
        self.assertFalse(source.closed)


class Normalize(TestCase):
    """Tests for ``normalize``"""

    def test_binary(self):
        """Test binary mode rates any count 1.0 and collapses duplicates"""

        ds = normalize([record("u1", "p1", 5), record("u1", "p1", 2), record("u2", "p1", 1)])
        self.assertEqual([(r.i, r.j, r.r, r.confidence) for r in ds.train],
                         [(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)])
        self.assertEqual(ds.test, [])

    def test_minmax(self):
        """Test minmax mode scales counts by the user's largest count"""

        ds = normalize([record("u1", "p1", 1), record("u1", "p2", 4)], mode="minmax")
        self.assertEqual([r.r for r in ds.train], [0.25, 1.0])

    def test_first_appearance_indices(self):
        """Test indices follow first appearance in the input"""

        ds = normalize([record("b", "y"), record("a", "x"), record("b", "x")])
        self.assertEqual(ds.user_index, {"b": 0, "a": 1})
        self.assertEqual(ds.item_index, {"y": 0, "x": 1})

    def test_dominant_cities(self):
        """Test each user and item is labelled with its dominant city"""

        records = [record("u1", "p1", 3, city="NYC"), record("u1", "p2", 1, city="LA"),
                   record("u2", "p2", 5, city="LA")]
        ds = normalize(records)
        self.assertEqual(ds.user_city, ["NYC", "LA"])
        self.assertEqual(ds.item_city, ["NYC", "LA"])

    def test_empty(self):
        """Test normalizing nothing raises EmptyInput"""

        with self.assertRaises(EmptyInput):
            normalize([])


class FilterInteractions(TestCase):
    """Tests for ``filter_interactions``"""

    def test_fixpoint(self):
        """Test removal repeats until every user and item meets the minimum"""

        # p3 and u4 fall below 2 first, which leaves u3 and p4 with one partner each
        records = [
            record("u1", "p1"), record("u1", "p2"),
            record("u2", "p1"), record("u2", "p2"),
            record("u3", "p3"), record("u3", "p4"),
            record("u4", "p4"),
        ]
        kept = filter_interactions(records, min_interactions=2)
        self.assertEqual({(r.user_id, r.item_id) for r in kept},
                         {("u1", "p1"), ("u1", "p2"), ("u2", "p1"), ("u2", "p2")})

    def test_maximum(self):
        """Test users above the maximum are removed"""

        records = [record("u1", "p1"), record("u1", "p2"), record("u1", "p3"), record("u2", "p1")]
        kept = filter_interactions(records, max_interactions=2)
        self.assertEqual([r.user_id for r in kept], ["u2"])


class Split(TestCase):
    """Tests for ``split``"""

    def setUp(self):
        self.dataset = make_dataset([(i, i % 7, 1.0) for i in range(100)], J=7)

    def test_ninety_ten(self):
        """Test 100 ratings at 0.9 give 90 train and 10 test ratings"""

        ds = split(self.dataset, 0.9, seed=3)
        self.assertEqual((len(ds.train), len(ds.test)), (90, 10))
        pairs = [(r.i, r.j) for r in ds.train] + [(i, j) for i, j, _ in ds.test]
        self.assertEqual(sorted(pairs), sorted((r.i, r.j) for r in self.dataset.train))

    def test_deterministic(self):
        """Test the same seed gives the same partition"""

        self.assertEqual(split(self.dataset, 0.9, 11).test, split(self.dataset, 0.9, 11).test)

    def test_reference_shuffle(self):
        """Test the partition matches an independent Fisher-Yates shuffle of the same stream"""

        ds = make_dataset([(i, 0, 1.0) for i in range(10)], J=1)
        rng = seeded_rng(5)
        perm = list(range(10))
        for i in range(9, 0, -1):
            j = int(rng.integers(0, i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        expected_train = sorted(perm[:5])

        result = split(ds, 0.5, seed=5)
        self.assertEqual([r.i for r in result.train], expected_train)

    def test_degenerate(self):
        """Test a split leaving one side empty raises DegenerateSplit"""

        with self.assertRaises(DegenerateSplit):
            split(make_dataset([(0, 0, 1.0)]), 0.9, seed=1)

    def test_fraction_bounds(self):
        """Test fractions outside (0, 1) are rejected"""

        with self.assertRaises(ValueError):
            split(self.dataset, 1.0, seed=1)


class SampleNegatives(TestCase):
    """Tests for ``sample_negatives``"""

    def test_forced_full_unrated_set(self):
        """Test all unrated items come back when there are no more than m"""

        negatives = sample_negatives(0, 3, {1, 2}, 5, seeded_rng(1))
        self.assertEqual([n.item_id for n in negatives], [0, 3, 4])
        for n in negatives:
            self.assertEqual(n.rating, 0.0)
            self.assertEqual(n.confidence, 1.0 / 3)

    def test_saturated_user(self):
        """Test a user who rated everything gets no negatives"""

        self.assertEqual(sample_negatives(0, 3, {0, 1, 2, 3, 4}, 5, seeded_rng(1)), [])

    def test_distinct_and_unrated(self):
        """Test samples are distinct and never among the rated items"""

        rng = seeded_rng(2)
        rated = set(range(0, 40, 3))
        for _ in range(200):
            items = [n.item_id for n in sample_negatives(0, 5, rated, 40, rng)]
            self.assertEqual(len(set(items)), 5)
            self.assertFalse(set(items) & rated)

    def test_uniform(self):
        """Test draws are uniform over the unrated items within 4 sigma"""

        J, draws = 50, 20000
        rng = seeded_rng(9)
        counts = np.zeros(J)
        for _ in range(draws):
            for n in sample_negatives(0, 3, {0}, J, rng):
                counts[n.item_id] += 1
        self.assertEqual(counts[0], 0)
        p = 3.0 / (J - 1)
        expected = draws * p
        sigma = np.sqrt(draws * p * (1 - p))
        self.assertTrue(np.all(np.abs(counts[1:] - expected) < 4 * sigma))

    def test_universe(self):
        """Test a candidate universe restricts the draws"""

        rng = seeded_rng(4)
        for _ in range(50):
            items = {n.item_id for n in sample_negatives(0, 2, {5}, 20, rng, universe=[5, 6, 7, 8])}
            self.assertTrue(items <= {6, 7, 8})

    def test_m_must_be_positive(self):
        """Test m < 1 is rejected"""

        with self.assertRaises(ValueError):
            sample_negatives(0, 0, set(), 5, seeded_rng(1))


class SaveDataset(TestCase):
    """Tests for ``save_dataset`` and ``load_dataset``"""

    def test_reload_and_bytes(self):
        """Test a saved dataset reloads equal and saves to identical bytes"""

        ds = split(normalize([record(f"u{n % 4}", f"p{n % 6}") for n in range(24)]), 0.75, 1)
        with tempfile.TemporaryDirectory() as tmp:
            first, second = os.path.join(tmp, "a.json"), os.path.join(tmp, "b.json")
            save_dataset(ds, first)
            reloaded = load_dataset(first)
            save_dataset(reloaded, second)
            with open(first, "rb") as a, open(second, "rb") as b:
                self.assertEqual(a.read(), b.read())
        self.assertEqual(reloaded.train, ds.train)
        self.assertEqual(reloaded.test, ds.test)

    def test_rejects_other_versions_and_missing_fields(self):
        """Test another schema version or a missing field is a data error"""

        data = dataset_to_dict(make_dataset([(0, 0, 1.0)], test=[(0, 1, 1.0)]))
        with self.assertRaises(UnsupportedSchema):
            dataset_from_dict(dict(data, schema_version=data["schema_version"] + 1))
        del data["train"]
        with self.assertRaises(UnreadableFile):
            dataset_from_dict(data)
        with self.assertRaises(UnreadableFile):
            dataset_from_dict([1, 2])
