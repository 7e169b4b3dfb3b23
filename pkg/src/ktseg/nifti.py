"""Minimal NIfTI-1 single-file reader/writer.

Supports exactly the subset needed for label/probability volumes:

* single-file format, magic ``n+1\\0`` (348-byte header at offset 0)
* datatypes uint8 (code 2), int16 (code 4), float32 (code 16)
* little- or big-endian files, detected through ``sizeof_hdr``
* optional gzip container, detected by the leading bytes ``1f 8b``

The orientation fields (qform/sform) are not interpreted; volumes are
treated as plain voxel grids with a per-axis spacing. Files that require
intensity rescaling (``scl_slope`` other than 0/1) are refused rather than
silently returned unscaled.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .volumes import VolumeGeometry

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extender
MAGIC = b"n+1\x00"

# datatype code -> (kind name, numpy dtype char, bitpix)
_DATATYPES = {
    2: ("uint8", "u1", 8),
    4: ("int16", "i2", 16),
    16: ("float32", "f4", 32),
}
_KIND_TO_CODE = {name: (code, char, bits) for code, (name, char, bits) in _DATATYPES.items()}

SAMPLE_KINDS = tuple(_KIND_TO_CODE)


class NiftiError(ValidationError):
    """Base class for NIfTI parsing problems."""


class NiftiFormatError(NiftiError):
    """The file is not a NIfTI-1 single-file volume."""


class UnsupportedNiftiError(NiftiError):
    """Valid NIfTI-1, but outside the supported subset."""


class CorruptNiftiError(NiftiError):
    """Header and payload disagree (truncated or damaged file)."""


def _open_for_read(path: Path):
    raw = open(path, "rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=raw)
    return raw


def read_volume(path) -> tuple[VolumeGeometry, np.ndarray, str]:
    """Read a NIfTI-1 volume.

    Returns (geometry, samples, kind) where samples has shape (nz, ny, nx)
    in native byte order and kind is one of {"uint8", "int16", "float32"}.
    """
    path = Path(path)
    with _open_for_read(path) as f:
        try:
            header = f.read(HEADER_SIZE)
        except (OSError, EOFError) as exc:  # bad gzip stream
            raise CorruptNiftiError(f"{path}: cannot decompress: {exc}") from exc
        if len(header) < HEADER_SIZE:
            raise NiftiFormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")

        if struct.unpack_from("<i", header, 0)[0] == HEADER_SIZE:
            order = "<"
        elif struct.unpack_from(">i", header, 0)[0] == HEADER_SIZE:
            order = ">"
        else:
            raise NiftiFormatError(f"{path}: sizeof_hdr is not {HEADER_SIZE} in either byte order")

        magic = header[344:348]
        if magic != MAGIC:
            raise NiftiFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")

        dim = struct.unpack_from(order + "8h", header, 40)
        ndim = dim[0]
        if not 1 <= ndim <= 7:
            raise NiftiFormatError(f"{path}: dim[0] = {ndim} outside 1..7")
        if any(d > 1 for d in dim[4 : ndim + 1]):
            raise UnsupportedNiftiError(f"{path}: more than 3 non-trivial dimensions: {dim[: ndim + 1]}")
        sizes = [dim[i] if ndim >= i else 1 for i in (1, 2, 3)]
        if any(d < 1 for d in sizes):
            raise NiftiFormatError(f"{path}: non-positive dimension in {dim[: ndim + 1]}")

        datatype, bitpix = struct.unpack_from(order + "hh", header, 70)
        if datatype not in _DATATYPES:
            raise UnsupportedNiftiError(f"{path}: unsupported datatype code {datatype}")
        kind, char, expected_bits = _DATATYPES[datatype]
        if bitpix != expected_bits:
            raise NiftiFormatError(f"{path}: bitpix {bitpix} does not match datatype {kind}")

        pixdim = struct.unpack_from(order + "8f", header, 76)
        spacing = [pixdim[i] if ndim >= i and pixdim[i] > 0 else 1.0 for i in (1, 2, 3)]

        scl_slope, scl_inter = struct.unpack_from(order + "ff", header, 112)
        if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
            raise UnsupportedNiftiError(
                f"{path}: intensity rescaling (slope={scl_slope}, inter={scl_inter}) not supported"
            )

        vox_offset = struct.unpack_from(order + "f", header, 108)[0]
        if vox_offset != int(vox_offset) or int(vox_offset) < HEADER_SIZE:
            raise NiftiFormatError(f"{path}: invalid vox_offset {vox_offset}")
        skip = int(vox_offset) - HEADER_SIZE
        if skip and len(f.read(skip)) < skip:
            raise CorruptNiftiError(f"{path}: file ends before vox_offset {int(vox_offset)}")

        geometry = VolumeGeometry(dims=tuple(sizes), spacing=tuple(spacing))
        nbytes = geometry.voxel_count * (expected_bits // 8)
        try:
            payload = f.read(nbytes)
        except (OSError, EOFError) as exc:
            raise CorruptNiftiError(f"{path}: cannot decompress payload: {exc}") from exc
        if len(payload) < nbytes:
            raise CorruptNiftiError(
                f"{path}: payload truncated ({len(payload)} of {nbytes} bytes)"
            )

    samples = np.frombuffer(payload, dtype=np.dtype(order + char))
    samples = samples.astype(samples.dtype.newbyteorder("="), copy=False)
    return geometry, samples.reshape(geometry.shape), kind


def write_volume(geometry: VolumeGeometry, samples, kind: str, path) -> None:
    """Write samples as a little-endian NIfTI-1 file; gzip when path ends in .gz.

    read_volume(write_volume(...)) is bit-exact; samples whose values do not
    survive the cast to `kind` are rejected.
    """
    if kind not in _KIND_TO_CODE:
        raise ValidationError(f"unsupported sample kind {kind!r}, expected one of {SAMPLE_KINDS}")
    code, char, bits = _KIND_TO_CODE[kind]

    arr = np.asarray(samples)
    if arr.size != geometry.voxel_count:
        raise ValidationError(
            f"sample count {arr.size} does not match geometry {geometry.dims}"
        )
    out = arr.astype(np.dtype("<" + char))
    if not np.array_equal(out, arr):
        raise ValidationError(f"samples cannot be stored losslessly as {kind}")

    nx, ny, nz = geometry.dims
    sx, sy, sz = geometry.spacing
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", header, 70, code, bits)
    struct.pack_into("<8f", header, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(VOX_OFFSET))
    struct.pack_into("<ff", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    header[123] = 2  # xyzt_units: millimeters
    header[344:348] = MAGIC

    blob = bytes(header) + b"\x00\x00\x00\x00" + out.reshape(geometry.shape).tobytes(order="C")
    path = Path(path)
    if path.suffix == ".gz":
        # empty filename + mtime=0 keep outputs byte-identical across runs
        with open(path, "wb") as raw, gzip.GzipFile(
            filename="", fileobj=raw, mode="wb", mtime=0
        ) as f:
            f.write(blob)
    else:
        path.write_bytes(blob)
