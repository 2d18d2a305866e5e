"""Writer for the engine's binary feature-file format.

The format is the contract between this package and the matching engine:
magic ``CMF1``, little-endian u16 version (1), u8 modality (0 audio,
1 video), u32 frame count T, u32 width D, then T*D float32 values in
row-major order. The engine's reader validates everything written here;
this package deliberately reimplements the writer instead of importing the
engine so the two sides stay coupled only through the bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CMF1"
VERSION = 1
MODALITY_CODES = {"audio": 0, "video": 1}


def write_cmf(values: np.ndarray, modality: str, path: str | Path) -> None:
    if modality not in MODALITY_CODES:
        raise ValueError(f"modality must be audio or video, got {modality!r}")
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"expected a (T, D) array, got shape {arr.shape}")
    t, d = arr.shape
    header = MAGIC + struct.pack("<HBII", VERSION, MODALITY_CODES[modality], t, d)
    Path(path).write_bytes(header + arr.tobytes())
