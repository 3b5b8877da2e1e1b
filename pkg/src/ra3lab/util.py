"""Shared plumbing: counter-based RNG streams, config hashing, atomic file IO."""

import hashlib
import json
import os
import tempfile

import numpy as np

# Fixed stream indices so adding parallelism never reshuffles draws.
STREAMS = {
    "mdp": 0,
    "planner": 1,
    "pruning": 2,
    "world": 3,
    "em": 4,
    "rlvr": 5,
    "verify": 6,
}


def rng_stream(seed, component, index=0):
    """Independent Generator for (seed, component, index).

    Uses Philox keyed on (seed, component id, index), so streams are a
    counter-based split of the global seed: the same triple always yields
    the same stream regardless of how many other streams were created.
    """
    comp = STREAMS[component] if isinstance(component, str) else int(component)
    key = (np.uint64(seed) << np.uint64(32)) ^ np.uint64(comp * 1_000_003 + index)
    return np.random.Generator(np.random.Philox(key=key))


def config_hash(obj):
    """Stable sha256 of a JSON-serializable config (sorted keys)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write(path, text):
    """Write via temp file + rename so readers never see partial output."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj, indent=2):
    atomic_write(path, json.dumps(obj, indent=indent, sort_keys=True) + "\n")
