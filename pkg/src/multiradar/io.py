"""Binary container for slow-time cubes and image sequences, plus CSV helpers.

Container layout (all integers little-endian)::

    offset 0   8 bytes   magic b"MRDATA\\x00\\x01" (last byte is the format version)
    offset 8   uint32    header length H in bytes
    offset 12  H bytes   UTF-8 JSON header
    offset 12+H          raw array data, C order, dtype given in the header

The header holds ``kind`` ("cube" or "image"), ``shape``, ``dtype`` and a
``meta`` object with the fields needed to rebuild the Python object. Data is
stored as complex64; readers return complex128.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .imaging import ImageGrid, RadarImage
from .scene import SlowTimeCube

MAGIC = b"MRDATA\x00\x01"
STORE_DTYPE = "<c8"


class ContainerError(ValueError):
    """File is not a valid container or holds the wrong kind of data."""


def _write(path, kind: str, data: np.ndarray, meta: dict) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(data, dtype=STORE_DTYPE)
    header = json.dumps({"kind": kind, "shape": list(arr.shape), "dtype": STORE_DTYPE, "meta": meta},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(arr.tobytes())
    return path


def _read(path, kind: str):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ContainerError(f"{path}: bad magic {magic!r}")
        (n,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(n).decode("utf-8"))
        if header.get("kind") != kind:
            raise ContainerError(f"{path}: holds {header.get('kind')!r}, expected {kind!r}")
        shape = tuple(header["shape"])
        raw = f.read()
    dtype = np.dtype(header["dtype"])
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise ContainerError(f"{path}: {len(raw)} data bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.complex128)
    return data, header["meta"]


def write_cube(path, cube: SlowTimeCube) -> Path:
    meta = {
        "radar_id": int(cube.radar_id),
        "range_bin_size": float(cube.range_bin_size),
        "t0": float(cube.t0),
        "slow_dt": float(cube.slow_dt),
        "wavelength": float(cube.wavelength),
        "element_x": [float(v) for v in cube.element_x],
    }
    return _write(path, "cube", cube.samples, meta)


def read_cube(path) -> SlowTimeCube:
    data, m = _read(path, "cube")
    return SlowTimeCube(radar_id=m["radar_id"], samples=data, range_bin_size=m["range_bin_size"],
                        t0=m["t0"], slow_dt=m["slow_dt"], wavelength=m["wavelength"],
                        element_x=np.array(m["element_x"]))


def write_image(path, image: RadarImage) -> Path:
    g = image.grid
    meta = {
        "radar_id": int(image.radar_id),
        "grid": {"x_min": g.x_min, "x_max": g.x_max, "y_min": g.y_min, "y_max": g.y_max,
                 "pixel_size": g.pixel_size},
        "slow_dt": float(image.slow_dt),
        "t0": float(image.t0),
    }
    return _write(path, "image", image.frames, meta)


def read_image(path) -> RadarImage:
    data, m = _read(path, "image")
    return RadarImage(radar_id=m["radar_id"], grid=ImageGrid(**m["grid"]), frames=data,
                      slow_dt=m["slow_dt"], t0=m["t0"])


def write_magnitude_csv(path, image: RadarImage, frame=None) -> Path:
    """``|I|`` of one frame, or the mean magnitude over frames when ``frame`` is None.

    Rows run along y (first row is ``grid.y_min``), columns along x.
    """
    mag = np.abs(image.frames).mean(axis=0) if frame is None else np.abs(image.frames[frame])
    np.savetxt(path, mag, delimiter=",", fmt="%.6e")
    return Path(path)


def write_label_csv(path, labels: np.ndarray) -> Path:
    """Integer grid (e.g. a cluster image) as CSV, same orientation as the magnitude CSV."""
    np.savetxt(path, np.asarray(labels, dtype=int), delimiter=",", fmt="%d")
    return Path(path)


def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else v


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
