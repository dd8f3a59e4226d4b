"""Checkpoint container: a zip archive of NPY v1.0 entries plus ``manifest.json``.

Entries are named ``layer{idx}.{param}.npy`` and stored uncompressed with a
fixed timestamp, in sorted order, so identical parameters always produce
identical archive bytes.  The manifest carries ``schema``, ``topology``
(a serialized :class:`~scef.network.NetworkConfig`), ``epoch``, ``metrics``
and ``seed``.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .network import Network, NetworkConfig

SCHEMA = 1
MANIFEST = "manifest.json"
_EPOCH_DATE = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">" or (arr.dtype.byteorder == "=" and not np.little_endian):
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    np.lib.format.write_array(buf, arr, version=(1, 0), allow_pickle=False)
    return buf.getvalue()


def _add(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, net: Network, epoch: int = 0, metrics: dict | None = None, seed=None) -> Path:
    path = Path(path)
    manifest = {
        "schema": SCHEMA,
        "topology": net.config.to_dict(),
        "epoch": int(epoch),
        "metrics": metrics or {},
        "seed": seed,
    }
    with zipfile.ZipFile(path, "w") as zf:
        for name in sorted(net.params):
            _add(zf, f"{name}.npy", _npy_bytes(net.params[name]))
        _add(zf, MANIFEST, json.dumps(manifest, sort_keys=True, indent=1).encode())
    return path


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Raw ``(manifest, {param name: array})`` without topology validation."""
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise FormatError(f"{path}: not a readable zip container ({exc})") from exc
    with zf:
        names = zf.namelist()
        if not names:
            raise FormatError(f"{path}: container has no entries")
        if MANIFEST not in names:
            raise FormatError(f"{path}: missing entry {MANIFEST}")
        try:
            manifest = json.loads(zf.read(MANIFEST))
        except ValueError as exc:
            raise FormatError(f"{path}: entry {MANIFEST} is not valid JSON ({exc})") from exc
        if manifest.get("schema") != SCHEMA:
            raise FormatError(f"{path}: entry {MANIFEST} has schema {manifest.get('schema')!r}, expected {SCHEMA}")
        arrays = {}
        for name in names:
            if name == MANIFEST:
                continue
            if not name.endswith(".npy"):
                raise FormatError(f"{path}: unexpected entry {name}")
            try:
                with zf.open(name) as fh:
                    arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
            except ValueError as exc:
                raise FormatError(f"{path}: entry {name} is not a valid NPY array ({exc})") from exc
    return manifest, arrays


def load_checkpoint(path) -> tuple[Network, dict]:
    """Rebuild the network stored in a checkpoint; returns ``(network, manifest)``."""
    manifest, arrays = read_container(path)
    if "topology" not in manifest:
        raise FormatError(f"{path}: entry {MANIFEST} lacks 'topology'")
    try:
        config = NetworkConfig.from_dict(manifest["topology"])
        net = Network(config, arrays)
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return net, manifest
