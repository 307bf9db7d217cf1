#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Check-in ingestion: parse, filter, normalize, split, and sample negatives.

Basic workflow:

.. code:: python

    with open("checkins.csv", "rb") as fin:
        records = parse_checkins(fin)

    records = filter_interactions(records, min_interactions=2)
    dataset = split(normalize(records, mode="binary"), train_fraction=0.9, seed=7)
    save_dataset(dataset, "dataset.json")

Ratings are implicit feedback. In ``binary`` mode every visited (user, item)
pair gets rating 1.0; in ``minmax`` mode counts are scaled by the user's
largest count. Sampled unobserved ratings are 0.0 with confidence 1/m.

See especially:

.. autosummary::
   :nosignatures:

   parse_checkins
   normalize
   split
   sample_negatives
"""

from dataclasses import dataclass, field
import io
import logging
import math

import numpy as np
import pandas as pd

from . import settings
from .exceptions import DegenerateSplit, EmptyInput, MalformedRow, UnreadableFile
from .utils import fisher_yates_permutation, seeded_rng
from .utils.codecs import check_schema_version, dump_json, load_json


LOGGER = logging.getLogger(__name__)

_UTF8_BOM = b"\xef\xbb\xbf"
_INTEGER = r"[+-]?\d+"
# fills every field of a row that has more fields than the header
_OVERFLOW = "\x00overflow"


@dataclass(frozen=True)
class CheckinRecord:
    """One user-item interaction with its location and city label."""

    user_id: str
    item_id: str
    count: int
    lat: float
    lon: float
    city: str
    timestamp: int = None


@dataclass(frozen=True)
class Rating:
    """An indexed training rating."""

    i: int
    j: int
    r: float
    confidence: float = 1.0


@dataclass(frozen=True)
class NegativeSample:
    """A sampled unobserved rating: rating 0.0 at confidence 1/m."""

    item_id: int
    rating: float
    confidence: float


@dataclass
class Dataset:
    """Indexed ratings with the index maps that produced them.

    ``train`` holds `Rating` objects, ``test`` holds ``(i, j, r)`` tuples.
    ``user_city`` and ``item_city`` give the dominant city of each index.
    """

    user_index: dict
    item_index: dict
    train: list
    test: list = field(default_factory=list)
    user_city: list = field(default_factory=list)
    item_city: list = field(default_factory=list)

    @property
    def I(self):  # noqa: E743
        return len(self.user_index)

    @property
    def J(self):
        return len(self.item_index)

    def rated_items(self):
        """Set of train items per user index."""
        rated = [set() for _ in range(self.I)]
        for rating in self.train:
            rated[rating.i].add(rating.j)
        return rated

    def train_arrays(self):
        """Train ratings as arrays ``(i, j, r, confidence)``."""
        table = np.array(
            [(r.i, r.j, r.r, r.confidence) for r in self.train], dtype=float
        ).reshape(-1, 4)
        return table[:, 0].astype(int), table[:, 1].astype(int), table[:, 2], table[:, 3]

    def test_arrays(self):
        """Test ratings as arrays ``(i, j, r)``."""
        table = np.array(self.test, dtype=float).reshape(-1, 3)
        return table[:, 0].astype(int), table[:, 1].astype(int), table[:, 2]

    def test_items(self):
        """Set of test items per user index."""
        items = [set() for _ in range(self.I)]
        for i, j, _ in self.test:
            items[i].add(j)
        return items

    def city_items(self):
        """Sorted item indices per city label."""
        by_city = {}
        for j, city in enumerate(self.item_city):
            by_city.setdefault(city, []).append(j)
        return by_city


@dataclass(frozen=True)
class CheckinFormat:
    """CSV layout of a check-in file. Columns are located by header name."""

    delimiter: str = ","
    required: tuple = settings.CHECKIN_COLUMNS
    optional: tuple = settings.OPTIONAL_CHECKIN_COLUMNS


def parse_checkins(source, fmt=CheckinFormat(), skip_malformed=False):
    """Parse check-in records from a UTF-8 CSV byte stream.

    Rows are numbered by physical line, header included, so a quoted field
    spanning several lines shifts the reported numbers of the rows after it.

    Args:
        source (binary file-like): CSV with a header row.
        fmt (CheckinFormat): Delimiter and column names.
        skip_malformed (bool): Log and drop malformed rows instead of raising.

    Returns:
        list of `CheckinRecord` in file order.

    Raises:
        EmptyInput: the stream has no header row.
        MalformedRow: a row is invalid and ``skip_malformed`` is False, or the
            bytes are not UTF-8.
    """
    text = _decode(source.read())
    header = _read_header(text, fmt)
    frame = _read_rows(text, header, fmt)
    if frame.empty:
        return []

    problems = _row_problems(frame)
    bad = problems.dropna()
    if not bad.empty:
        if not skip_malformed:
            raise MalformedRow(int(bad.index[0]), bad.iloc[0])
        for line, reason in bad.items():
            LOGGER.warning(str(MalformedRow(int(line), reason)))
        LOGGER.info(f"Skipped {len(bad)} malformed check-in rows")

    good = frame[problems.isna()]
    timestamps = (
        good["timestamp"] if "timestamp" in good else pd.Series("", index=good.index)
    )
    return [
        CheckinRecord(
            user_id=user_id,
            item_id=item_id,
            count=int(count),
            lat=float(lat),
            lon=float(lon),
            city=city,
            timestamp=int(timestamp) if timestamp else None,
        )
        for user_id, item_id, count, lat, lon, city, timestamp in zip(
            good["user_id"], good["item_id"], good["count"], good["lat"],
            good["lon"], good["city"], timestamps,
        )
    ]


def _decode(data):
    if data.startswith(_UTF8_BOM):
        data = data[len(_UTF8_BOM):]
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data[: e.start].count(b"\n") + 1
        raise MalformedRow(line, f"invalid UTF-8 at byte {e.start}") from e


def _read_header(text, fmt):
    try:
        columns = pd.read_csv(
            io.StringIO(text), sep=fmt.delimiter, nrows=0, engine="python"
        ).columns
    except pd.errors.EmptyDataError:
        raise EmptyInput("Check-in input is empty; a header row is required.")

    header = [str(name).strip() for name in columns]
    missing = [name for name in fmt.required if name not in header]
    if missing:
        raise MalformedRow(1, f"header lacks columns {missing}")
    if len(set(header)) != len(header):
        raise MalformedRow(1, "header repeats a column name")
    return header


def _read_rows(text, header, fmt):
    """Data rows as stripped strings, indexed by line number, blank lines dropped.

    Missing fields read as NaN; rows with too many fields read as all `_OVERFLOW`.
    """
    frame = pd.read_csv(
        io.StringIO(text),
        sep=fmt.delimiter,
        header=0,
        names=header,
        index_col=False,
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
        engine="python",
        on_bad_lines=lambda fields: [_OVERFLOW] * len(header),
    ).astype(object)
    frame.index = frame.index + 2

    for name in fmt.required + fmt.optional:
        if name in frame:
            frame[name] = frame[name].str.strip()

    first = frame.iloc[:, 0]
    blank = (first.isna() | (first == "")) & frame.iloc[:, 1:].isna().all(axis=1)
    return frame[~blank]


def _row_problems(frame):
    """First problem of each row as a message, NaN for valid rows."""
    wrong_width = frame.isna().any(axis=1) | (frame == _OVERFLOW).any(axis=1)

    count_text = frame["count"].fillna("")
    count_integral = count_text.str.fullmatch(_INTEGER, na=False)
    count = pd.to_numeric(count_text.where(count_integral), errors="coerce")
    lat = pd.to_numeric(frame["lat"], errors="coerce")
    lon = pd.to_numeric(frame["lon"], errors="coerce")

    checks = [
        (wrong_width, "fields missing or extra; expected one per header column"),
        (~count_integral, "count " + count_text.map(repr) + " is not an integer"),
        (count < 1, "count must be >= 1, got " + count_text),
        (lat.isna() | lon.isna(), "lat/lon must be numeric"),
        (
            ~lat.between(-90.0, 90.0) | ~lon.between(-180.0, 180.0),
            "coordinates (" + lat.astype(str) + ", " + lon.astype(str) + ") out of bounds",
        ),
        (frame["city"] == "", "city is empty"),
    ]
    if "timestamp" in frame:
        stamp = frame["timestamp"].fillna("")
        checks.append(
            ((stamp != "") & ~stamp.str.fullmatch(_INTEGER, na=False),
             "timestamp must be integer seconds")
        )

    problems = pd.Series(np.nan, index=frame.index, dtype=object)
    for mask, reason in checks:
        problems = problems.mask(problems.isna() & mask, reason)
    return problems


def records_frame(records):
    """Check-in records as a `pandas.DataFrame`, one row per record."""
    return pd.DataFrame(
        {
            "user_id": [r.user_id for r in records],
            "item_id": [r.item_id for r in records],
            "count": [r.count for r in records],
            "lat": [r.lat for r in records],
            "lon": [r.lon for r in records],
            "city": [r.city for r in records],
        }
    )


def dominant_cities(frame, key):
    """City with the most check-ins per ``key`` value; ties go to the smaller name.

    Args:
        frame (pandas.DataFrame): Output of `records_frame`.
        key (str): ``"user_id"`` or ``"item_id"``.

    Returns:
        dict mapping each ``key`` value to its dominant city.
    """
    totals = frame.groupby([key, "city"], sort=True)["count"].sum().reset_index()
    totals = totals.sort_values([key, "count", "city"], ascending=[True, False, True])
    first = totals.drop_duplicates(subset=key, keep="first")
    return dict(zip(first[key], first["city"]))


def filter_interactions(records, min_interactions=1, max_interactions=None):
    """Drop users and items with too few or too many distinct partners.

    Removal repeats until no user or item violates the bounds, since dropping an
    item can push a user below ``min_interactions`` and vice versa.

    Returns:
        The surviving records, in their original order.
    """
    if not records:
        return []
    upper = math.inf if max_interactions is None else max_interactions
    frame = records_frame(records)
    pairs = frame[["user_id", "item_id"]].drop_duplicates()

    rounds = 0
    while True:
        user_deg = pairs.groupby("user_id")["item_id"].transform("size")
        item_deg = pairs.groupby("item_id")["user_id"].transform("size")
        keep = user_deg.between(min_interactions, upper) & item_deg.between(
            min_interactions, upper
        )
        if keep.all():
            break
        pairs = pairs[keep]
        rounds += 1

    kept = set(zip(pairs["user_id"], pairs["item_id"]))
    survivors = [r for r in records if (r.user_id, r.item_id) in kept]
    LOGGER.info(
        f"Interaction filter kept {len(survivors)} of {len(records)} records "
        f"after {rounds} rounds"
    )
    return survivors


def normalize(records, mode=settings.NORMALIZE_MODE):
    """Index records and map check-in counts onto ratings in [0, 1].

    Duplicate (user, item) rows collapse into one rating whose count is the sum
    of the rows' counts. Indices follow first appearance in ``records``.

    Args:
        records (list of CheckinRecord): Non-empty.
        mode (str): ``"binary"`` (every pair rates 1.0) or ``"minmax"`` (count
                    divided by the user's largest count).

    Returns:
        `Dataset` with every rating in ``train`` at confidence 1.0 and ``test`` empty.
    """
    if not records:
        raise EmptyInput("Cannot normalize an empty list of check-in records.")
    if mode not in ("binary", "minmax"):
        raise ValueError(f"Unknown normalize mode {mode!r}; use 'binary' or 'minmax'.")

    frame = records_frame(records)
    user_codes, users = pd.factorize(frame["user_id"])
    item_codes, items = pd.factorize(frame["item_id"])
    frame["i"] = user_codes
    frame["j"] = item_codes

    pairs = frame.groupby(["i", "j"], sort=False)["count"].sum().reset_index()
    if mode == "binary":
        pairs["r"] = 1.0
    else:
        pairs["r"] = pairs["count"] / pairs.groupby("i")["count"].transform("max")

    user_city = dominant_cities(frame, "user_id")
    item_city = dominant_cities(frame, "item_id")

    return Dataset(
        user_index={u: n for n, u in enumerate(users)},
        item_index={v: n for n, v in enumerate(items)},
        train=[
            Rating(int(i), int(j), float(r), 1.0)
            for i, j, r in zip(pairs["i"], pairs["j"], pairs["r"])
        ],
        test=[],
        user_city=[user_city[u] for u in users],
        item_city=[item_city[v] for v in items],
    )


def split(dataset, train_fraction=settings.TRAIN_FRACTION, seed=settings.SEED):
    """Partition the dataset's ratings into train and test.

    ``round(train_fraction * n)`` ratings go to train. The assignment is the
    first positions of a seeded Fisher-Yates permutation; both sides keep the
    input order of the ratings.

    Raises:
        ValueError: ``train_fraction`` not in (0, 1).
        DegenerateSplit: either side ends up empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")

    ratings = [(r.i, r.j, r.r) for r in dataset.train] + list(dataset.test)
    n_total = len(ratings)
    n_train = int(math.floor(train_fraction * n_total + 0.5))
    if n_train == 0 or n_train == n_total:
        raise DegenerateSplit(
            f"Splitting {n_total} ratings at {train_fraction} leaves "
            f"{n_train} train and {n_total - n_train} test ratings."
        )

    perm = fisher_yates_permutation(n_total, seeded_rng(seed))
    in_train = set(perm[:n_train])

    train, test = [], []
    for pos, (i, j, r) in enumerate(ratings):
        if pos in in_train:
            train.append(Rating(i, j, r, 1.0))
        else:
            test.append((i, j, r))

    return Dataset(
        user_index=dataset.user_index,
        item_index=dataset.item_index,
        train=train,
        test=test,
        user_city=dataset.user_city,
        item_city=dataset.item_city,
    )


def sample_negatives(user, m, rated, J, rng, universe=None):
    """Sample up to ``m`` items the user has not rated, as 0.0 ratings at confidence 1/m.

    Items are drawn uniformly without replacement from ``universe`` (default:
    all ``J`` items) minus ``rated``. When no more than ``m`` candidates remain,
    all of them are returned in ascending order.

    Args:
        user (int): Sampling user; only used in log messages.
        m (int): Negatives per positive, at least 1.
        rated (set of int): The user's train items.
        J (int): Number of items.
        rng (numpy.random.Generator): Caller-owned generator.
        universe (list of int): Optional candidate pool, e.g. same-city items.

    Returns:
        list of `NegativeSample`
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    confidence = 1.0 / m

    if universe is None:
        n_unrated = J - len(rated)
        if n_unrated <= 0:
            return []
        if n_unrated <= m or len(rated) > J // 2:
            unrated = [j for j in range(J) if j not in rated]
            picks = _choose(unrated, m, rng)
        else:
            picks = []
            chosen = set()
            while len(picks) < m:
                j = int(rng.integers(0, J))
                if j not in rated and j not in chosen:
                    chosen.add(j)
                    picks.append(j)
    else:
        unrated = [j for j in universe if j not in rated]
        if not unrated:
            return []
        picks = _choose(unrated, m, rng)

    return [NegativeSample(item_id=j, rating=0.0, confidence=confidence) for j in picks]


def _choose(candidates, m, rng):
    if len(candidates) <= m:
        return sorted(candidates)
    picks = rng.choice(len(candidates), size=m, replace=False)
    return [candidates[int(p)] for p in picks]


def dataset_to_dict(dataset):
    """JSON-ready dict of a `Dataset`, versioned with ``schema_version``."""
    return {
        "schema_version": settings.SCHEMA_VERSION,
        "user_index": dataset.user_index,
        "item_index": dataset.item_index,
        "user_city": list(dataset.user_city),
        "item_city": list(dataset.item_city),
        "train": [[r.i, r.j, r.r, r.confidence] for r in dataset.train],
        "test": [[i, j, r] for i, j, r in dataset.test],
    }


def dataset_from_dict(data):
    """Rebuild a `Dataset` from `dataset_to_dict` output.

    Raises:
        UnsupportedSchema: ``data`` carries another schema version.
        UnreadableFile: a field is missing or has the wrong shape.
    """
    if not isinstance(data, dict):
        raise UnreadableFile(f"dataset must be a JSON object, got {type(data).__name__}")
    check_schema_version(data.get("schema_version"), "dataset")
    try:
        return Dataset(
            user_index=dict(data["user_index"]),
            item_index=dict(data["item_index"]),
            train=[Rating(int(i), int(j), float(r), float(c)) for i, j, r, c in data["train"]],
            test=[(int(i), int(j), float(r)) for i, j, r in data["test"]],
            user_city=list(data["user_city"]),
            item_city=list(data["item_city"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise UnreadableFile(f"dataset has a missing or malformed field: {e!r}") from e


def save_dataset(dataset, path):
    """Write a `Dataset` as canonical JSON."""
    dump_json(dataset_to_dict(dataset), path)


def load_dataset(path):
    """Read a `Dataset` written by `save_dataset`."""
    return dataset_from_dict(load_json(path))
