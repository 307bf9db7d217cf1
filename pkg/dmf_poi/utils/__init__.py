# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""General utilities used across modules

Logging
-------

``configure_logging`` applies ``settings.LOGGING``. With ``fmt="json"`` records
are written by Google Cloud Logging's ``StructuredLogHandler``; when the
``DMF_GCP_PROJECT`` environment variable is set, records are also shipped to
Cloud Logging for that project:

.. code-block:: python
   :linenos:

   from dmf_poi.utils import configure_logging, log_and_print

   configure_logging(level="DEBUG", fmt="json")
   log_and_print(logger, "Wrote 90 train and 10 test ratings")

Random numbers
--------------

Every random draw in the package comes from a ``numpy.random.Generator`` built
by ``seeded_rng`` from a tuple of integer keys, e.g. ``seeded_rng(seed, epoch)``.
Generators are owned by the caller and never shared between runs.
"""

import copy
import logging
import logging.config

import numpy as np

from .. import settings


def configure_logging(level="INFO", fmt="plain"):
    """Configure the ``dmf_poi`` logger.

    Args:
        level (str): Logging level name.
        fmt (str): ``"plain"`` for human-readable lines, ``"json"`` for
                   Cloud Logging structured JSON.
    """
    config = copy.deepcopy(settings.LOGGING)
    if fmt == "json":
        config['handlers']['console'] = dict(settings.STRUCTURED_HANDLER)
    config['loggers']['dmf_poi']['level'] = level.upper()
    logging.config.dictConfig(config)

    project = settings.env_gcp_project()
    if project is not None:
        from google.cloud import logging as gc_logging

        log_client = gc_logging.Client(project=project)
        log_client.setup_logging(log_level=logging.getLevelName(level.upper()))


def log_and_print(logger, msg, severity="INFO"):
    """Log ``msg`` at ``severity`` and echo it to stdout."""
    logger.log(logging.getLevelName(severity), msg)
    print(msg)


def seeded_rng(*keys):
    """Return a ``numpy.random.Generator`` seeded from integer ``keys``."""
    return np.random.default_rng([int(k) for k in keys])


def fisher_yates_permutation(n, rng):
    """Permutation of ``range(n)`` by a Fisher-Yates shuffle.

    Position ``i`` (from ``n - 1`` down to 1) is swapped with a position drawn by
    ``rng.integers(0, i + 1)``. The draw sequence is part of the contract, so a
    reference shuffle fed the same generator reproduces it exactly.
    """
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
