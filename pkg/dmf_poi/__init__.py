#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""The `dmf_poi` module simulates decentralized matrix factorization for POI recommendation.

Every user is a learner node holding its own user factor, a local copy of the
global item factors and a private matrix of personal item factors. Nodes only
ever exchange gradients of the global item factors, and only with geo-nearby
users in the same city.
"""

__version__ = "0.1.0"
