"""Binary containers and quicklook export.

Every array file is a UTF-8 text header of ``key = value`` lines terminated by
a blank line, followed by the payload as little-endian float32 in C order.
The header always carries ``magic``, ``kind``, ``dtype``, ``shape`` and
``order``; everything else is free-form metadata (grids, config echo).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "FMSTCT-ARRAY-1"


class ContainerError(ValueError):
    pass


def write_array(path, kind: str, data: np.ndarray, meta: dict | None = None,
                dims: str = "") -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    header = {
        "magic": MAGIC,
        "kind": kind,
        "dtype": "float32-le",
        "shape": " ".join(str(s) for s in data.shape),
        "order": dims or "row-major",
    }
    for k, v in (meta or {}).items():
        header[k] = _fmt(v)
    text = "".join(f"{k} = {v}\n" for k, v in header.items()) + "\n"
    with open(path, "wb") as fh:
        fh.write(text.encode("utf-8"))
        fh.write(data.tobytes(order="C"))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    s = str(v)
    if "\n" in s:
        raise ContainerError("header values must be single-line")
    return s


def read_array(path, kind: str | None = None) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n\n")
    if end < 0:
        raise ContainerError(f"{path}: missing header terminator")
    header = {}
    for line in raw[:end].decode("utf-8").splitlines():
        k, _, v = line.partition("=")
        header[k.strip()] = v.strip()
    if header.get("magic") != MAGIC:
        raise ContainerError(f"{path}: not an array container")
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"{path}: expected kind={kind}, found {header.get('kind')}")
    shape = tuple(int(s) for s in header["shape"].split())
    data = np.frombuffer(raw[end + 2:], dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ContainerError(f"{path}: payload size does not match shape {shape}")
    return data.reshape(shape).astype(np.float64), header


def write_pgm(path, img: np.ndarray, window=(0.0, 3.0)) -> None:
    """16-bit binary PGM with ``window = (lo, hi)`` mapped onto 0..65535.

    Row 0 of the file is the top of the image (largest y).
    """
    lo, hi = window
    if hi <= lo:
        raise ValueError("window must satisfy lo < hi")
    scaled = np.clip((np.asarray(img, float) - lo) / (hi - lo), 0.0, 1.0)
    pix = np.round(scaled[::-1] * 65535).astype(">u2")
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ContainerError("only binary PGM (P5) is supported")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dt = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[4], dtype=dt).reshape(h, w)
