"""Versioned binary checkpoints that round-trip model weights bit-exactly.

Layout: an 8-byte magic string, a little-endian uint32 header length, a
UTF-8 JSON header, then the raw little-endian bytes of every array in
header order. The header records the format version, the variant config
the weights belong to, an array manifest (name, shape, dtype), and an
optional ``extra`` metadata dict.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from glahrr.errors import CheckpointError, ConfigurationError
from glahrr.model import GlaHrrNet, VariantConfig

MAGIC = b"GLAHRRCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


def save_checkpoint(model: GlaHrrNet, path: str | Path, extra: dict | None = None) -> None:
    """Serialize a model's weights and variant config to ``path``."""
    state = model.state_dict()
    arrays = []
    blobs = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        if str(arr.dtype) not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        arrays.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
        blobs.append(arr.astype(_DTYPES[str(arr.dtype)], copy=False).tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "variant": asdict(model.config),
        "arrays": arrays,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def _read_header(path: Path) -> tuple[dict, int]:
    """Parse a checkpoint's JSON header; also return the array-section offset."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise CheckpointError(f"{path}: truncated header length")
        (header_len,) = struct.unpack("<I", raw_len)
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: undecodable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    for key in ("variant", "arrays"):
        if key not in header:
            raise CheckpointError(f"{path}: header missing {key!r}")
    return header, len(MAGIC) + 4 + header_len


def read_header(path: str | Path) -> dict:
    """Parse and validate a checkpoint's JSON header without loading arrays."""
    return _read_header(Path(path))[0]


def load_checkpoint(path: str | Path) -> tuple[GlaHrrNet, dict]:
    """Rebuild the stored variant and its exact weights from ``path``."""
    path = Path(path)
    header, offset = _read_header(path)
    try:
        config = VariantConfig(**header["variant"])
        model = GlaHrrNet(config)
    except (TypeError, ConfigurationError) as exc:
        raise CheckpointError(f"{path}: invalid variant config") from exc

    data = path.read_bytes()
    state = {}
    pos = offset
    for meta in header["arrays"]:
        dtype = _DTYPES.get(meta["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unsupported dtype {meta['dtype']!r}")
        count = int(np.prod(meta["shape"], dtype=np.int64)) if meta["shape"] else 1
        nbytes = count * dtype.itemsize
        blob = data[pos : pos + nbytes]
        if len(blob) != nbytes:
            raise CheckpointError(f"{path}: truncated array {meta['name']!r}")
        arr = np.frombuffer(blob, dtype=dtype).reshape(meta["shape"])
        state[meta["name"]] = torch.from_numpy(arr.copy())
        pos += nbytes
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")

    if state:
        model = model.to(next(iter(state.values())).dtype)
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: weights do not match the stored variant") from exc
    return model, header
