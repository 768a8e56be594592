"""
Settings tables and defaults shared across covsel.
"""

import os
from enum import Enum


class OrderingMethod(Enum):
    MINDEG = "mindeg"
    RCM = "rcm"
    NATURAL = "natural"


ORDERING_OPTIONS = {
    "mindeg": {"name": "Minimum degree", "description": "greedy minimum degree, ties by smallest index"},
    "rcm": {"name": "Reverse Cuthill-McKee", "description": "bandwidth reduction, scipy csgraph"},
    "natural": {"name": "Natural", "description": "identity permutation"},
}
ORDERING_ORDER = ["mindeg", "rcm", "natural"]
DEFAULT_ORDERING = "mindeg"


# Thresholding
DEFAULT_BLOCK_SIZE = 4000

# Sample covariance blocks: samples are summed in aligned chunks of this
# many (a power of two), and one product tile holds at most this many values
COV_SAMPLE_CHUNK = 64
COV_TILE_VALUES = 1 << 21

# Dense oracles and checkers refuse matrices larger than this
DENSE_LIMIT = 400

# Amalgamated supernodes may carry at most this share of explicit zeros
AMALGAMATION_MAX_ZERO_FRACTION = 0.25

# Number of worker threads for blockwise kernels
THREADS_ENV = "COVSEL_THREADS"
DEFAULT_THREADS = 1


# Counter-based stream tags; a stream is (seed, column, tag)
STREAM_TAGS = {
    "values": 0,
    "corruption": 1,
    "samples": 2,
}


BENCH_PRESETS = {
    "smoke": {
        "name": "Smoke",
        "sizes": [200, 400, 800],
        "bandwidth": 11,
        "seed": 7,
        "amalgamate": 8,
        "ordering": "natural",
    },
    "desk": {
        "name": "Desk scale",
        "sizes": [1000, 2000, 5000, 10000, 20000, 50000],
        "bandwidth": 101,
        "seed": 7,
        "amalgamate": 16,
        "ordering": "natural",
    },
    "full": {
        "name": "Full scale",
        "sizes": [1000, 2000, 5000, 10000, 20000, 50000, 100000, 200000],
        "bandwidth": 101,
        "seed": 7,
        "amalgamate": 16,
        "ordering": "natural",
    },
}
BENCH_PRESET_ORDER = ["smoke", "desk", "full"]
DEFAULT_BENCH_PRESET = "desk"


def default_threads() -> int:
    """Thread count from the environment, or the default when unset or invalid."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return DEFAULT_THREADS
    return value if value >= 1 else DEFAULT_THREADS
