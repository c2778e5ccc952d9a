"""Depth/label/feature file formats and PLY export."""
from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .labels import InstanceLabelMap
from .panogeom import DepthMap, ImageGrid, PlaneParam, unit_rays

ENCODINGS = ("png16mm", "pfm", "raw")
FEATURE_MAGIC = b"PHVF"
_FEATURE_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def _check_aspect(shape):
    try:
        ImageGrid.from_shape(shape)
    except ValueError as e:
        raise FormatError(str(e)) from None


# ---------------------------------------------------------------- PNG16

def _read_png16(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.array(im)
    except (OSError, SyntaxError) as e:
        raise FormatError(f"cannot read PNG {path}: {e}") from None
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image, got shape {arr.shape}")
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise FormatError(f"{path}: unsupported pixel type {arr.dtype}")
    return arr.astype(np.int64)


def _write_png16(path, arr: np.ndarray):
    a = np.asarray(arr)
    if a.min(initial=0) < 0 or a.max(initial=0) > 65535:
        raise FormatError("values do not fit in 16 bits")
    Image.fromarray(a.astype(np.uint16)).save(path, format="PNG")


# ---------------------------------------------------------------- PFM

def write_pfm(path, values: np.ndarray):
    a = np.asarray(values, dtype="<f4")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        f.write(np.flipud(a).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"(Pf|PF)\s+(\d+)\s+(\d+)\s+(\S+)\s", data)
    if not m:
        raise FormatError(f"{path}: not a PFM file")
    if m.group(1) != b"Pf":
        raise FormatError(f"{path}: colour PFM is not a depth map")
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    payload = data[m.end():]
    if len(payload) != w * h * 4:
        raise FormatError(f"{path}: payload size {len(payload)} != {w}x{h} floats")
    return np.flipud(np.frombuffer(payload, dtype=dtype).reshape(h, w)).astype(np.float32)


# ---------------------------------------------------------------- depth

def load_depth(path, encoding: str = "png16mm") -> DepthMap:
    """Decode a depth panorama into metres; sentinels become invalid pixels."""
    path = Path(path)
    if encoding == "png16mm":
        raw = _read_png16(path)
        _check_aspect(raw.shape)
        return DepthMap(raw / 1000.0, raw != 0)
    if encoding == "pfm":
        vals = read_pfm(path).astype(np.float64)
    elif encoding == "raw":
        buf = np.fromfile(path, dtype="<f4")
        h = int(round(np.sqrt(buf.size / 2)))
        if 2 * h * h != buf.size:
            raise FormatError(f"{path}: {buf.size} floats is not an H x 2H panorama")
        vals = buf.reshape(h, 2 * h).astype(np.float64)
    else:
        raise ValueError(f"unknown depth encoding {encoding!r}; choose from {ENCODINGS}")
    _check_aspect(vals.shape)
    return DepthMap(vals)


def save_depth(depth: DepthMap, path, encoding: str = "png16mm"):
    if encoding == "png16mm":
        mm = np.where(depth.valid, np.rint(depth.values * 1000.0), 0)
        _write_png16(path, np.clip(mm, 0, 65535))
    elif encoding == "pfm":
        write_pfm(path, np.where(depth.valid, depth.values, 0.0))
    elif encoding == "raw":
        np.where(depth.valid, depth.values, 0.0).astype("<f4").tofile(path)
    else:
        raise ValueError(f"unknown depth encoding {encoding!r}")


# ---------------------------------------------------------------- labels

def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def save_labels(lmap: InstanceLabelMap, path, meta: dict | None = None) -> Path:
    """16-bit id image plus a JSON sidecar ``{"planes": {id: {...}}, "meta": {...}}``."""
    ids = lmap.ids
    if ids and ids[-1] > 65535:
        raise FormatError("more than 65535 instance ids")
    _write_png16(path, lmap.labels)
    counts = np.bincount(lmap.labels.ravel(), minlength=(ids[-1] + 1) if ids else 1)
    planes = {
        str(i): {"kind": lmap.table[i].kind.value, "n": list(lmap.table[i].n), "pixel_count": int(counts[i])}
        for i in ids
    }
    doc = {"planes": planes}
    if meta:
        doc["meta"] = meta
    side = _sidecar(path)
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return side


def load_labels(path) -> InstanceLabelMap:
    raw = _read_png16(path)
    side = _sidecar(path)
    try:
        doc = json.loads(side.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing plane table {side}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{side}: {e}") from None
    table = {int(k): PlaneParam.from_dict(v) for k, v in doc.get("planes", {}).items()}
    try:
        return InstanceLabelMap(raw, table)
    except ValueError as e:
        raise FormatError(str(e)) from None


def load_meta(path) -> dict:
    return json.loads(_sidecar(path).read_text()).get("meta", {})


# ---------------------------------------------------------------- features

def save_feature_map(features: np.ndarray, path):
    f = np.asarray(features, dtype="<f4")
    if f.ndim == 2:
        f = f[None]
    d, h, w = f.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, d, h, w))
        fh.write(f.tobytes())


def load_feature_map(path, grid: ImageGrid | None = None) -> np.ndarray:
    """(D, H, W) float32 map from the ``PHVF`` header + little-endian payload format."""
    data = Path(path).read_bytes()
    if len(data) < _FEATURE_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, d, h, w = _FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    payload = data[_FEATURE_HEADER.size:]
    if len(payload) != d * h * w * 4:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, header says {d}x{h}x{w} floats")
    if grid is not None and (h, w) != grid.shape:
        raise FormatError(f"{path}: feature map is {h}x{w}, depth is {grid.height}x{grid.width}")
    return np.frombuffer(payload, dtype="<f4").reshape(d, h, w).copy()


# ---------------------------------------------------------------- PLY

def _colour(i: int) -> tuple[int, int, int]:
    rng = np.random.default_rng(i)
    return tuple(int(c) for c in rng.integers(40, 256, size=3))


def export_ply(lmap: InstanceLabelMap, path) -> tuple[int, int]:
    """ASCII PLY of every planar pixel at its plane's depth; returns (vertices, faces)."""
    pd = lmap.planar_depth()
    ok = (lmap.labels > 0) & np.isfinite(pd)
    pts = pd[..., None] * unit_rays(lmap.grid)
    index = np.full(lmap.grid.shape, -1, dtype=np.int64)
    index[ok] = np.arange(int(ok.sum()))

    lab = np.where(ok, lmap.labels, 0)
    a = index[:-1]
    b = np.roll(index, -1, axis=1)[:-1]
    c = index[1:]
    d = np.roll(index, -1, axis=1)[1:]
    la, lb = lab[:-1], np.roll(lab, -1, axis=1)[:-1]
    lc, ld = lab[1:], np.roll(lab, -1, axis=1)[1:]
    quad = (la > 0) & (la == lb) & (la == lc) & (la == ld)
    tris = np.concatenate([
        np.stack([a[quad], c[quad], b[quad]], axis=1),
        np.stack([b[quad], c[quad], d[quad]], axis=1),
    ])
    lut = np.zeros((max(lmap.ids, default=0) + 1, 3), dtype=np.int64)
    for i in lmap.ids:
        lut[i] = _colour(i)
    vlab = lmap.labels[ok]
    verts = pts[ok]
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(verts)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        f.write(f"element face {len(tris)}\nproperty list uchar int vertex_indices\nend_header\n")
        np.savetxt(f, np.column_stack([verts, lut[vlab]]), fmt=["%.6f"] * 3 + ["%d"] * 3)
        np.savetxt(f, np.column_stack([np.full(len(tris), 3), tris]), fmt="%d")
    return len(verts), len(tris)
