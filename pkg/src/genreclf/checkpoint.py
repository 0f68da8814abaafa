"""Model checkpoints: a JSON metadata document next to a raw parameter blob.

``<stem>.json`` holds the model config, the genre vocabulary, the format
version and a parameter manifest (name / shape / byte offset); ``<stem>.bin``
is the concatenation of all parameters as little-endian float32 in manifest
order. Loading validates names, shapes and blob length.
"""

import json
import os

import numpy as np

from .errors import DataError
from .models import ModelConfig, build_model
from .vocab import GENRES

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(model, stem: str):
    manifest = []
    blobs = []
    offset = 0
    for name, t in model.params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(t.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "genres": list(GENRES),
        "parameters": manifest,
    }
    os.makedirs(os.path.dirname(os.path.abspath(stem)), exist_ok=True)
    with open(stem + ".json", "w") as fh:
        json.dump(doc, fh, indent=1)
    with open(stem + ".bin", "wb") as fh:
        fh.write(b"".join(blobs))


def read_blob(bin_path: str, manifest: list[dict]) -> dict[str, np.ndarray]:
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    arrays = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(blob):
            raise DataError(f"{bin_path}: blob too short for {entry['name']} (need byte {end}, have {len(blob)})")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(shape).copy()
    return arrays


def load_checkpoint(stem: str):
    """Rebuild the model described by ``<stem>.json`` with the parameters
    stored in ``<stem>.bin``."""
    with open(stem + ".json") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"{stem}.json: unsupported checkpoint format version {doc.get('format_version')}")
    if tuple(doc.get("genres", ())) != GENRES:
        raise DataError(f"{stem}.json: checkpoint genre vocabulary does not match this build")
    config = ModelConfig.from_dict(doc["config"])
    model = build_model(config, seed=0)
    arrays = read_blob(stem + ".bin", doc["parameters"])
    model.params.load_arrays(arrays)
    return model
