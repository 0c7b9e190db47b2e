"""3D scalar volumes and binary masks with physical voxel spacing.

A :class:`Volume3D` holds the image as a float64 array of shape
``(nx, ny, nz)``; flattening in Fortran order yields the canonical
x-fastest voxel ordering shared by every module and by the on-disk
formats.  Two formats are supported: a small NRRD subset (attached
header, raw or gzip encoding, little-endian) and a raw file with a
JSON sidecar.
"""

from __future__ import annotations

import gzip
import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Volume3D",
    "Mask3D",
    "VolumeFormatError",
    "load_volume",
    "save_volume",
    "load_mask",
    "save_mask",
    "sample_trilinear",
    "extract_slice",
]

VALUE_KINDS = ("uint8", "int16", "uint16", "float32")

_KIND_TO_DTYPE = {
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "uint16": np.dtype("<u2"),
    "float32": np.dtype("<f4"),
}

_NRRD_TYPE_TO_KIND = {
    "uchar": "uint8",
    "unsigned char": "uint8",
    "uint8": "uint8",
    "uint8_t": "uint8",
    "short": "int16",
    "short int": "int16",
    "signed short": "int16",
    "int16": "int16",
    "int16_t": "int16",
    "ushort": "uint16",
    "unsigned short": "uint16",
    "uint16": "uint16",
    "uint16_t": "uint16",
    "float": "float32",
    "float32": "float32",
}

_KIND_TO_NRRD_TYPE = {
    "uint8": "uchar",
    "int16": "short",
    "uint16": "ushort",
    "float32": "float",
}

_AXES = {"x": 0, "y": 1, "z": 2}


class VolumeFormatError(ValueError):
    """Raised for unreadable or unsupported volume files."""


@dataclass(frozen=True)
class Volume3D:
    """Axis-aligned scalar volume.

    scalars: shape (nx, ny, nz), float64; ``scalars.ravel(order="F")``
        is the flat x-fastest representation.
    spacing_mm: per-axis voxel size in mm.
    value_kind: dtype the volume had (or will have) on disk.
    """

    scalars: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    value_kind: str = "float32"

    def __post_init__(self):
        arr = np.asarray(self.scalars, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"scalars must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"dims must each be >= 1, got {arr.shape}")
        sp = tuple(float(s) for s in self.spacing_mm)
        if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
            raise ValueError(f"spacing_mm must be 3 finite positive reals, got {self.spacing_mm}")
        if self.value_kind not in VALUE_KINDS:
            raise ValueError(f"value_kind must be one of {VALUE_KINDS}, got {self.value_kind!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "scalars", arr)
        object.__setattr__(self, "spacing_mm", sp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.scalars.shape

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing_mm
        return sx * sy * sz


@dataclass(frozen=True)
class Mask3D:
    """Binary segmentation mask on the same grid layout as Volume3D."""

    bits: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=bool)
        if arr.ndim != 3:
            raise ValueError(f"bits must be 3D, got shape {arr.shape}")
        sp = tuple(float(s) for s in self.spacing_mm)
        if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
            raise ValueError(f"spacing_mm must be 3 finite positive reals, got {self.spacing_mm}")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)
        object.__setattr__(self, "spacing_mm", sp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing_mm
        return sx * sy * sz


# ---------------------------------------------------------------------------
# NRRD subset
# ---------------------------------------------------------------------------

def _parse_nrrd(data: bytes, path: str):
    end = data.find(b"\n\n")
    end_crlf = data.find(b"\r\n\r\n")
    if end_crlf != -1 and (end == -1 or end_crlf < end):
        header_bytes, payload = data[:end_crlf], data[end_crlf + 4:]
    elif end != -1:
        header_bytes, payload = data[:end], data[end + 2:]
    else:
        raise VolumeFormatError(f"{path}: no blank line terminating the NRRD header")

    lines = header_bytes.decode("ascii", errors="replace").splitlines()
    if not lines or not lines[0].startswith("NRRD"):
        raise VolumeFormatError(f"{path}: missing NRRD magic line")

    fields: dict[str, str] = {}
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise VolumeFormatError(f"{path}: malformed header line {line!r}")
        key, _, value = line.partition(":")
        fields[key.strip().lower()] = value.strip()

    for req in ("type", "dimension", "sizes", "encoding"):
        if req not in fields:
            raise VolumeFormatError(f"{path}: missing required field '{req}'")
    if "data file" in fields or "datafile" in fields:
        raise VolumeFormatError(f"{path}: detached 'data file' headers are not supported")
    if fields["dimension"] != "3":
        raise VolumeFormatError(f"{path}: unsupported field 'dimension: {fields['dimension']}' (only 3)")

    kind = _NRRD_TYPE_TO_KIND.get(fields["type"].lower())
    if kind is None:
        raise VolumeFormatError(f"{path}: unsupported field 'type: {fields['type']}'")

    try:
        sizes = tuple(int(s) for s in fields["sizes"].split())
    except ValueError:
        raise VolumeFormatError(f"{path}: unparsable field 'sizes: {fields['sizes']}'") from None
    if len(sizes) != 3 or min(sizes) < 1:
        raise VolumeFormatError(f"{path}: invalid field 'sizes: {fields['sizes']}'")

    endian = fields.get("endian", "little").lower()
    if endian != "little":
        raise VolumeFormatError(f"{path}: unsupported field 'endian: {fields['endian']}'")

    spacing = (1.0, 1.0, 1.0)
    if "spacings" in fields:
        try:
            spacing = tuple(float(s) for s in fields["spacings"].split())
        except ValueError:
            raise VolumeFormatError(f"{path}: unparsable field 'spacings: {fields['spacings']}'") from None
        if len(spacing) != 3:
            raise VolumeFormatError(f"{path}: invalid field 'spacings: {fields['spacings']}'")
    elif "space directions" in fields:
        spacing = _diagonal_spacing(fields["space directions"], path)

    encoding = fields["encoding"].lower()
    if encoding == "gzip":
        try:
            payload = gzip.decompress(payload)
        except OSError as exc:
            raise VolumeFormatError(f"{path}: gzip payload failed to decompress ({exc})") from None
    elif encoding != "raw":
        raise VolumeFormatError(f"{path}: unsupported field 'encoding: {fields['encoding']}'")

    dtype = _KIND_TO_DTYPE[kind]
    expected = sizes[0] * sizes[1] * sizes[2] * dtype.itemsize
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{path}: payload is {len(payload)} bytes but field 'sizes: {fields['sizes']}' "
            f"with type {kind} requires {expected}"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    scalars = flat.astype(np.float64).reshape(sizes, order="F")
    return scalars, spacing, kind


def _diagonal_spacing(value: str, path: str) -> tuple[float, float, float]:
    vecs = []
    for token in value.replace(") (", ")|(").split("|"):
        token = token.strip().lstrip("(").rstrip(")")
        try:
            vecs.append([float(c) for c in token.split(",")])
        except ValueError:
            raise VolumeFormatError(f"{path}: unparsable field 'space directions: {value}'") from None
    if len(vecs) != 3 or any(len(v) != 3 for v in vecs):
        raise VolumeFormatError(f"{path}: invalid field 'space directions: {value}'")
    m = np.array(vecs)
    if np.any(m - np.diag(np.diag(m)) != 0.0) or np.any(np.diag(m) <= 0):
        raise VolumeFormatError(
            f"{path}: unsupported field 'space directions: {value}' (only positive diagonal)"
        )
    d = np.diag(m)
    return (float(d[0]), float(d[1]), float(d[2]))


def _write_nrrd(path: str, scalars: np.ndarray, spacing, kind: str, encoding: str = "raw") -> None:
    dtype = _KIND_TO_DTYPE[kind]
    payload = np.ascontiguousarray(scalars.astype(dtype).ravel(order="F")).tobytes()
    if encoding == "gzip":
        payload = gzip.compress(payload)
    elif encoding != "raw":
        raise ValueError(f"unsupported encoding {encoding!r}")
    header = "\n".join(
        [
            "NRRD0004",
            f"type: {_KIND_TO_NRRD_TYPE[kind]}",
            "dimension: 3",
            "sizes: {} {} {}".format(*scalars.shape),
            "spacings: {:.17g} {:.17g} {:.17g}".format(*spacing),
            "endian: little",
            f"encoding: {encoding}",
        ]
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(b"\n\n")
        f.write(payload)


# ---------------------------------------------------------------------------
# Raw + JSON sidecar
# ---------------------------------------------------------------------------

def _load_sidecar(path: str):
    with open(path, "r", encoding="utf-8") as f:
        meta = json.load(f)
    for req in ("dims", "spacing_mm", "dtype", "data_file"):
        if req not in meta:
            raise VolumeFormatError(f"{path}: sidecar missing key '{req}'")
    dims = tuple(int(d) for d in meta["dims"])
    spacing = tuple(float(s) for s in meta["spacing_mm"])
    kind = str(meta["dtype"])
    if kind not in VALUE_KINDS:
        raise VolumeFormatError(f"{path}: unsupported sidecar dtype {kind!r}")
    data_path = os.path.join(os.path.dirname(os.path.abspath(path)), meta["data_file"])
    with open(data_path, "rb") as f:
        payload = f.read()
    dtype = _KIND_TO_DTYPE[kind]
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{data_path}: payload is {len(payload)} bytes but dims {list(dims)} "
            f"with dtype {kind} require {expected}"
        )
    scalars = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(dims, order="F")
    return scalars, spacing, kind


def _save_sidecar(path: str, scalars: np.ndarray, spacing, kind: str) -> None:
    base, _ = os.path.splitext(path)
    data_file = os.path.basename(base) + ".raw"
    meta = {
        "dims": list(scalars.shape),
        "spacing_mm": list(spacing),
        "dtype": kind,
        "data_file": data_file,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    payload = np.ascontiguousarray(scalars.astype(_KIND_TO_DTYPE[kind]).ravel(order="F")).tobytes()
    with open(os.path.join(os.path.dirname(os.path.abspath(path)), data_file), "wb") as f:
        f.write(payload)


# ---------------------------------------------------------------------------
# Public I/O
# ---------------------------------------------------------------------------

def load_volume(path: str) -> Volume3D:
    """Load a volume from NRRD (``.nrrd``) or raw+JSON sidecar (``.json``)."""
    if not path:
        raise ValueError("empty path")
    if path.endswith(".json"):
        scalars, spacing, kind = _load_sidecar(path)
    else:
        with open(path, "rb") as f:
            data = f.read()
        scalars, spacing, kind = _parse_nrrd(data, path)
    return Volume3D(scalars=scalars, spacing_mm=spacing, value_kind=kind)


def save_volume(vol: Volume3D, path: str, encoding: str = "raw") -> None:
    """Write a volume; format chosen by extension (.nrrd or .json sidecar)."""
    if not path:
        raise ValueError("empty path")
    if path.endswith(".json"):
        _save_sidecar(path, vol.scalars, vol.spacing_mm, vol.value_kind)
    else:
        _write_nrrd(path, vol.scalars, vol.spacing_mm, vol.value_kind, encoding)


def load_mask(path: str) -> Mask3D:
    """Load a binary mask (any supported volume file; nonzero = set)."""
    vol = load_volume(path)
    return Mask3D(bits=vol.scalars != 0.0, spacing_mm=vol.spacing_mm)


def save_mask(mask: Mask3D, path: str, encoding: str = "raw") -> None:
    """Write a mask as a uint8 volume with values in {0, 1}."""
    if not path:
        raise ValueError("empty path")
    scalars = mask.bits.astype(np.float64)
    if path.endswith(".json"):
        _save_sidecar(path, scalars, mask.spacing_mm, "uint8")
    else:
        _write_nrrd(path, scalars, mask.spacing_mm, "uint8", encoding)


# ---------------------------------------------------------------------------
# Sampling and slicing
# ---------------------------------------------------------------------------

def sample_trilinear(vol: Volume3D, points) -> float | np.ndarray:
    """Trilinear interpolation at continuous voxel coordinates.

    Coordinates outside ``[0, n-1]`` per axis are clamped to the border.
    Accepts a single (x, y, z) triple or an (N, 3) array.  Nested lerps
    keep constant neighborhoods exact, which the inflation gate relies on.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    p = np.atleast_2d(pts)
    if p.shape[1] != 3:
        raise ValueError(f"points must be (x,y,z) triples, got shape {pts.shape}")
    hi = np.array(vol.dims, dtype=np.float64) - 1.0
    q = np.clip(p, 0.0, hi)
    i0 = np.floor(q).astype(np.intp)
    f = q - i0
    i1 = np.minimum(i0 + 1, np.array(vol.dims, dtype=np.intp) - 1)

    s = vol.scalars
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    def lerp(a, b, t):
        return a + t * (b - a)

    c00 = lerp(s[x0, y0, z0], s[x1, y0, z0], fx)
    c10 = lerp(s[x0, y1, z0], s[x1, y1, z0], fx)
    c01 = lerp(s[x0, y0, z1], s[x1, y0, z1], fx)
    c11 = lerp(s[x0, y1, z1], s[x1, y1, z1], fx)
    out = lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    return float(out[0]) if single else out


def extract_slice(vol: Volume3D, axis: str, index: int) -> np.ndarray:
    """2D slice indexed ``[u, v]`` with (u, v) the remaining axes in ascending order."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    a = _AXES[axis]
    n = vol.dims[a]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range for axis {axis} with {n} slices")
    if a == 0:
        return vol.scalars[index, :, :]
    if a == 1:
        return vol.scalars[:, index, :]
    return vol.scalars[:, :, index]


def extract_mask_slice(mask: Mask3D, axis: str, index: int) -> np.ndarray:
    """Boolean counterpart of :func:`extract_slice` for masks."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    a = _AXES[axis]
    n = mask.dims[a]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range for axis {axis} with {n} slices")
    if a == 0:
        return mask.bits[index, :, :]
    if a == 1:
        return mask.bits[:, index, :]
    return mask.bits[:, :, index]
