"""Labeled random substreams derived from one root seed."""

import zlib

import numpy as np


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label``; changing one label's use never shifts another's stream."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode("utf-8"))])
