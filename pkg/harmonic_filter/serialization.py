"""Binary dumps of grids and spectra, plus atomic file writes.

HEF1 layout, all integers little-endian u32:

    b"HEF1" | flags | ndim | dim_0 … dim_{ndim-1} | payload

flags bit 0 marks a complex payload.  The payload is row-major f64
little-endian; complex values are interleaved (re, im).  Spectra and
distributions get a JSON sidecar next to the dump (same stem, ``.json``)
describing grid, bands, role and, for distributions, log_z.
"""

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .distribution import HarmonicExpDist
from .group import DensityGrid, GridError, GridSpec
from .transform import Bands, Se2Spectrum, SpectrumError, SpectrumRole

MAGIC = b"HEF1"
_FLAG_COMPLEX = 1
_U32 = struct.Struct("<I")


class SerializationError(ValueError):
    """Raised for malformed dumps or sidecars."""


def atomic_write_bytes(path, data):
    """Write `data` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_array(array):
    array = np.asarray(array)
    is_complex = np.iscomplexobj(array)
    header = [MAGIC, _U32.pack(_FLAG_COMPLEX if is_complex else 0), _U32.pack(array.ndim)]
    header.extend(_U32.pack(dim) for dim in array.shape)
    if is_complex:
        payload = np.ascontiguousarray(array, dtype="<c16").tobytes()
    else:
        payload = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return b"".join(header) + payload


def decode_array(data):
    """Parse a HEF1 byte string.

    Raises:
        SerializationError: On a bad magic, truncated header or size mismatch.
    """
    if data[:4] != MAGIC:
        raise SerializationError(f"Bad magic {data[:4]!r}, expected {MAGIC!r}")
    try:
        (flags,) = _U32.unpack_from(data, 4)
        (ndim,) = _U32.unpack_from(data, 8)
        shape = tuple(_U32.unpack_from(data, 12 + 4 * i)[0] for i in range(ndim))
    except struct.error as exc:
        raise SerializationError(f"Truncated header: {exc}") from exc
    if flags & ~_FLAG_COMPLEX:
        raise SerializationError(f"Unknown flags {flags:#x}")
    dtype = "<c16" if flags & _FLAG_COMPLEX else "<f8"
    offset = 12 + 4 * ndim
    expected = math.prod(shape) * np.dtype(dtype).itemsize
    if len(data) - offset != expected:
        raise SerializationError(
            f"Payload holds {len(data) - offset} bytes, shape {shape} needs {expected}"
        )
    return np.frombuffer(data, dtype=dtype, offset=offset).reshape(shape).copy()


def write_array(path, array):
    atomic_write_bytes(path, encode_array(array))


def read_array(path):
    return decode_array(Path(path).read_bytes())


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _write_sidecar(path, meta):
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _read_sidecar(path, kind):
    try:
        meta = json.loads(sidecar_path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SerializationError(f"Could not read sidecar for {path}: {exc}") from exc
    if meta.get("kind") != kind:
        raise SerializationError(f"Sidecar describes {meta.get('kind')!r}, expected {kind!r}")
    return meta


def _grid_from_meta(meta):
    try:
        return GridSpec.from_dict(meta["grid"])
    except (KeyError, GridError) as exc:
        raise SerializationError(f"Bad grid in sidecar: {exc}") from exc


def write_grid(path, density):
    write_array(path, density.values)
    _write_sidecar(path, {"kind": "grid", "grid": density.spec.to_dict()})


def read_grid(path):
    meta = _read_sidecar(path, "grid")
    spec = _grid_from_meta(meta)
    try:
        return DensityGrid(spec, read_array(path))
    except GridError as exc:
        raise SerializationError(f"Dump does not match its grid: {exc}") from exc


def _spectrum_meta(spectrum):
    return {
        "grid": spectrum.grid.to_dict(),
        "bands": spectrum.bands.to_dict(),
        "role": spectrum.role.name,
        "interpolation_order": spectrum.interpolation_order,
    }


def _spectrum_from(path, meta):
    spec = _grid_from_meta(meta)
    try:
        bands = Bands(**meta["bands"])
        bands.check(spec)
        role = SpectrumRole[meta["role"]]
        return Se2Spectrum(read_array(path), role, spec, bands, meta["interpolation_order"])
    except (KeyError, TypeError, SpectrumError) as exc:
        raise SerializationError(f"Bad spectrum sidecar for {path}: {exc}") from exc


def write_spectrum(path, spectrum):
    write_array(path, spectrum.coeffs)
    _write_sidecar(path, {"kind": "spectrum", **_spectrum_meta(spectrum)})


def read_spectrum(path):
    return _spectrum_from(path, _read_sidecar(path, "spectrum"))


def write_distribution(path, dist):
    write_array(path, dist.eta.coeffs)
    _write_sidecar(path, {"kind": "distribution", "log_z": dist.log_z, **_spectrum_meta(dist.eta)})


def read_distribution(path):
    meta = _read_sidecar(path, "distribution")
    eta = _spectrum_from(path, meta)
    if eta.role is not SpectrumRole.LOG_SPACE:
        raise SerializationError("A distribution dump must hold a LOG_SPACE spectrum")
    return HarmonicExpDist.from_eta(eta)
