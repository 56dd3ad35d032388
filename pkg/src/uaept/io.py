"""File formats: binary PGM masks, f32g grids/stacks and JSON helpers.

f32g layout: one JSON header line ``{"dims": [...], "dtype": "f32le"}``
terminated by ``\\n``, then the raw little-endian float32 payload in C order.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import ExtremePoints

F32G_DTYPE = "f32le"
_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def write_pgm(path, image) -> None:
    """Write an 8-bit P5 image.  Boolean masks are stored as 0/255."""
    a = np.asarray(image)
    if a.ndim != 2:
        raise FormatError(f"PGM needs a 2-D array, got shape {a.shape}")
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    elif a.dtype != np.uint8:
        if a.min() < 0 or a.max() > 255:
            raise FormatError("PGM values must lie in [0, 255]")
        a = a.astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise FormatError(f"{path}: not a binary (P5) PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    body = data[m.end() :]
    if len(body) < w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_mask(path, mask) -> None:
    write_pgm(path, np.asarray(mask, dtype=bool))


def read_mask(path) -> np.ndarray:
    return read_pgm(path) >= 128


def write_f32g(path, array) -> None:
    a = np.asarray(array)
    if a.ndim not in (2, 3):
        raise FormatError(f"f32g holds 2-D grids or 3-D stacks, got shape {a.shape}")
    header = json.dumps({"dims": list(a.shape), "dtype": F32G_DTYPE}) + "\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_f32g(path) -> np.ndarray:
    """Read an f32g file as a float32 array of its stored dims."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing f32g header line")
    try:
        header = json.loads(data[:nl])
        dims = [int(d) for d in header["dims"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: bad f32g header") from exc
    if header.get("dtype") != F32G_DTYPE:
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if len(dims) not in (2, 3) or any(d < 1 for d in dims):
        raise FormatError(f"{path}: bad dims {dims}")
    body = data[nl + 1 :]
    n = math.prod(dims)
    if len(body) != 4 * n:
        raise FormatError(f"{path}: expected {4 * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(dims).copy()


def round_floats(obj, digits: int = 9):
    """Recursively round floats to ``digits`` significant digits for JSON."""
    if isinstance(obj, float) or isinstance(obj, np.floating):
        x = float(obj)
        if not math.isfinite(x):
            raise FormatError(f"cannot serialise non-finite float {x}")
        return float(f"{x:.{digits}g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(round_floats(obj), indent=2, sort_keys=False) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def write_points(path, ep: ExtremePoints) -> None:
    dump_json(path, ep.to_json())


def read_points(path) -> ExtremePoints:
    obj = load_json(path)
    try:
        return ExtremePoints.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: expected keys top/bottom/left/right as [row, col]") from exc
