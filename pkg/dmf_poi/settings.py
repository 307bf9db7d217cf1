#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Default settings for `dmf_poi`.

Hyper-parameter defaults mirror the experimental setting of the DMF
evaluation: user regularizer 0.1, learning rate 0.1, at most 2 direct
neighbors, 3 sampled unobserved ratings per observed rating, and k in {5, 10}.

Values here are the lowest-precedence layer. A JSON config file passed with
``--config`` overrides them, and command-line flags override both.
"""
import environ


# Data
TRAIN_FRACTION = 0.9
NORMALIZE_MODE = "binary"
MIN_INTERACTIONS = 1
MAX_INTERACTIONS = None  # no upper bound
CHECKIN_COLUMNS = ("user_id", "item_id", "count", "lat", "lon", "city")
OPTIONAL_CHECKIN_COLUMNS = ("timestamp",)

# Geography
EARTH_RADIUS_KM = 6371.0
MAX_NEIGHBORS = 2  # N
DISTANCE_KERNEL = "constant"
GAUSSIAN_SIGMA_KM = None

# Model
LATENT_DIM = 5  # K
LEARNING_RATE = 0.1  # theta
USER_REG = 0.1  # alpha, also lambda for the centralized baselines
GLOBAL_ITEM_REG = 0.01  # beta
PERSONAL_ITEM_REG = 0.01  # gamma
WALK_DISTANCE = 2  # D
NEGATIVES = 3  # m
EPOCHS = 100  # T
SEED = 42
WALK_SCALE = "layer"
WALK_MODE = "deterministic-layers"
MODEL_KINDS = ("dmf", "mf", "bpr", "gdmf", "ldmf")

# Communication accounting: each gradient is K floats of 4 bytes
BYTES_PER_FLOAT = 4

# Evaluation
K_VALUES = (5, 10)

# Sweeps
SWEEP_BETAS = (1e-3, 1e-2, 1e-1, 1e0, 1e1)
SWEEP_GAMMAS = (1e-3, 1e-2, 1e-1, 1e0, 1e1)
SWEEP_WALK_DISTANCES = (1, 2, 3, 4)
SWEEP_LATENT_DIMS = (5, 10, 15)

# Synthetic corpus
SYNTH_CITIES = 2
SYNTH_USERS_PER_CITY = 200
SYNTH_ITEMS_PER_CITY = 50
SYNTH_GROUPS = 2
SYNTH_P_IN = 0.3
SYNTH_P_OUT = 0.02

# Serialization
SCHEMA_VERSION = 1

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
            'stream': 'ext://sys.stderr',
        },
    },
    'loggers': {
        'dmf_poi': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

# Handler used by ``--log-format json``. Writes Cloud Logging structured JSON.
STRUCTURED_HANDLER = {
    'class': 'google.cloud.logging.handlers.StructuredLogHandler',
    'stream': 'ext://sys.stderr',
}


def env_seed():
    """Seed fallback from the ``DMF_SEED`` environment variable, or None."""
    return environ.Env().int("DMF_SEED", default=None)


def env_gcp_project():
    """Google Cloud project for log shipping, from ``DMF_GCP_PROJECT``, or None."""
    return environ.Env().str("DMF_GCP_PROJECT", default=None)
