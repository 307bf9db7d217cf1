#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Synthetic check-in corpora with city structure and latent preference groups.

Each city has ``groups`` preference groups. A group owns a spatial center a few
kilometers from the city center; its users and items scatter around that
center, so users who live near each other tend to like the same places. A user
visits each item of its own group with probability ``p_in`` and every other
item of its city with probability ``p_out``. Nobody leaves their city.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
import pandas as pd

from . import settings
from .dataio import CheckinRecord
from .utils import seeded_rng


LOGGER = logging.getLogger(__name__)

CITY_SPACING_DEG = 5.0  # cities are hundreds of km apart
GROUP_OFFSET_KM = 5.0
SCATTER_KM = 1.0


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic corpus."""

    cities: int = settings.SYNTH_CITIES
    users_per_city: int = settings.SYNTH_USERS_PER_CITY
    items_per_city: int = settings.SYNTH_ITEMS_PER_CITY
    groups: int = settings.SYNTH_GROUPS
    p_in: float = settings.SYNTH_P_IN
    p_out: float = settings.SYNTH_P_OUT
    seed: int = settings.SEED

    def __post_init__(self):
        if min(self.cities, self.users_per_city, self.items_per_city, self.groups) < 1:
            raise ValueError("cities, users_per_city, items_per_city and groups must be >= 1")
        if not 0.0 <= self.p_out < self.p_in <= 1.0:
            raise ValueError(f"Need 0 <= p_out < p_in <= 1, got p_out={self.p_out} p_in={self.p_in}")


@dataclass
class SynthCorpus:
    """Generated check-ins plus the ground truth that produced them."""

    records: list
    user_truth: dict  # user_id -> (city, group)
    item_truth: dict  # item_id -> (city, group)

    def frame(self):
        return pd.DataFrame(
            {
                "user_id": [r.user_id for r in self.records],
                "item_id": [r.item_id for r in self.records],
                "count": [r.count for r in self.records],
                "lat": [r.lat for r in self.records],
                "lon": [r.lon for r in self.records],
                "city": [r.city for r in self.records],
            }
        )

    def to_csv(self, path):
        self.frame().to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def _km_to_deg(km, lat):
    lat_deg = np.degrees(km / settings.EARTH_RADIUS_KM)
    return lat_deg, lat_deg / math.cos(math.radians(lat))


def generate(config=SynthConfig()):
    """Draw a corpus from ``config``; the same config gives the same corpus."""
    rng = seeded_rng(config.seed)
    records, user_truth, item_truth = [], {}, {}

    for c in range(config.cities):
        city = f"city{c}"
        lat0 = 30.0 + CITY_SPACING_DEG * c
        lon0 = 100.0 + CITY_SPACING_DEG * c

        angles = 2.0 * np.pi * (np.arange(config.groups) + rng.random(config.groups)) / config.groups
        dlat, dlon = _km_to_deg(GROUP_OFFSET_KM, lat0)
        centers = np.column_stack([lat0 + dlat * np.sin(angles), lon0 + dlon * np.cos(angles)])
        slat, slon = _km_to_deg(SCATTER_KM, lat0)

        item_groups = np.arange(config.items_per_city) % config.groups
        item_pos = centers[item_groups] + rng.normal(size=(config.items_per_city, 2)) * [slat, slon]
        item_ids = [f"c{c}_v{v}" for v in range(config.items_per_city)]
        for v, item_id in enumerate(item_ids):
            item_truth[item_id] = (city, int(item_groups[v]))

        for u in range(config.users_per_city):
            user_id = f"c{c}_u{u}"
            group = u % config.groups
            user_truth[user_id] = (city, group)
            probs = np.where(item_groups == group, config.p_in, config.p_out)
            visits = np.flatnonzero(rng.random(config.items_per_city) < probs)
            counts = rng.integers(1, 4, size=len(visits))
            for v, count in zip(visits, counts):
                records.append(
                    CheckinRecord(
                        user_id=user_id,
                        item_id=item_ids[v],
                        count=int(count),
                        lat=round(float(item_pos[v, 0]), 6),
                        lon=round(float(item_pos[v, 1]), 6),
                        city=city,
                    )
                )

    LOGGER.info(
        f"Generated {len(records)} check-ins: {config.cities} cities, "
        f"{config.users_per_city} users and {config.items_per_city} items per city"
    )
    return SynthCorpus(records=records, user_truth=user_truth, item_truth=item_truth)
