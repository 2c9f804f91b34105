"""Named random substreams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *ids: int) -> np.random.Generator:
    """Return a generator for stage ``name`` that does not depend on other stages.

    Reordering or skipping stages leaves every other stage's draws unchanged.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_key(name), *map(int, ids)))
    return np.random.default_rng(ss)
