"""
Model snapshots: every named parameter as a little-endian float64 block, in
the order listed by a key=value manifest that also records the dimensions and
the full training config needed to rebuild the model.

Unlike DGDF feature files (float32 on disk), parameters keep float64 so a
loaded model evaluates bit-identically to the one that was saved.
"""
import hashlib
import logging
from pathlib import Path

import numpy as np

from .config import parse_key_values, train_from_mapping
from .exceptions import BadMagicError, ManifestMismatchError, TruncatedFileError
from .model import DgdaModel
from .synth import manifest_path

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DGDS"
PARAM_PREFIX = "param."
CONFIG_PREFIX = "config."


def save_snapshot(model: DgdaModel, config, path) -> Path:
    path = Path(path)
    params = model.parameters()
    payload = SNAPSHOT_MAGIC + b"".join(p.data.astype("<f8").tobytes() for p in params)
    lines = [
        "format=DGDS",
        f"num_classes={model.num_classes}",
        "dims=" + ",".join(str(d) for d in model.dims),
        f"sha256={hashlib.sha256(payload).hexdigest()}",
    ]
    lines += [f"{PARAM_PREFIX}{p.name}=" + "x".join(str(s) for s in p.shape) for p in params]
    lines += [CONFIG_PREFIX + line for line in config.to_text().splitlines()]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    manifest_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("saved %d parameters to %s", len(params), path)
    return path


def _shape(text: str) -> tuple:
    return tuple(int(s) for s in text.split("x")) if text else ()


def load_snapshot(path):
    """(model, config) rebuilt from a snapshot and its manifest."""
    path = Path(path)
    payload = path.read_bytes()
    if payload[:4] != SNAPSHOT_MAGIC:
        raise BadMagicError(payload[:4], 0, SNAPSHOT_MAGIC)
    sidecar = manifest_path(path)
    manifest = parse_key_values(sidecar.read_text(encoding="utf-8"), str(sidecar))
    if manifest.get("sha256") not in (None, hashlib.sha256(payload).hexdigest()):
        raise ManifestMismatchError(f"{sidecar}: checksum mismatch")

    config = train_from_mapping({k[len(CONFIG_PREFIX):]: v for k, v in manifest.items()
                                 if k.startswith(CONFIG_PREFIX)})
    dims = tuple(int(d) for d in manifest["dims"].split(","))
    model = DgdaModel(config, dims, int(manifest["num_classes"]))

    shapes = {k[len(PARAM_PREFIX):]: _shape(v) for k, v in manifest.items() if k.startswith(PARAM_PREFIX)}
    params = model.named_parameters()
    if set(shapes) != set(params):
        missing = sorted(set(params) ^ set(shapes))
        raise ManifestMismatchError(f"{sidecar}: parameter names differ from the model: {missing[:5]}")

    offset = len(SNAPSHOT_MAGIC)
    for name, shape in shapes.items():
        if shape != params[name].shape:
            raise ManifestMismatchError(f"{sidecar}: {name} has shape {shape}, model expects {params[name].shape}")
        size = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + size > len(payload):
            raise TruncatedFileError(name, offset, size, len(payload) - offset)
        values = np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset)
        params[name].assign(values.reshape(shape))
        offset += size
    logger.info("loaded %d parameters from %s", len(shapes), path)
    return model, config
