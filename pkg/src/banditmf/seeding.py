"""Master-seed splitting.

Every random stream in a run is derived from one master seed and a stage
label: ``sha256(f"{master}/{label}")``, first 8 bytes big-endian, fed to
``numpy.random.default_rng``. Stages therefore never share a stream, and
adding a new stage does not perturb the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels: object) -> int:
    key = "/".join([str(int(master))] + [str(label) for label in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stage_rng(master: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
