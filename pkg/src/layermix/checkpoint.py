"""Checkpoint directory format: manifest.json + weights.bin.

The manifest carries the format version, the full model configuration, the
label scheme, the evaluation batch size, and a tensor directory mapping each
state tensor to shape/dtype/offset. The payload is every tensor's raw bytes,
little-endian float32, packed back to back in lexicographic name order. The
layout is canonical, so save -> load -> save reproduces both files byte for
byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch

from .config import from_dict
from .data import LabelScheme
from .model import ModelConfig, SequenceClassifier, set_trainable

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"


class CheckpointError(ValueError):
    """Checkpoint directory is missing, truncated, or inconsistent."""


def save_checkpoint(
    directory: str | Path,
    model: SequenceClassifier,
    scheme: LabelScheme,
    eval_batch_size: int,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {name: t.detach().cpu().contiguous() for name, t in model.state_dict().items()}
    catalog: Dict[str, dict] = {}
    payload = bytearray()
    offset = 0
    for name in sorted(tensors):
        t = tensors[name]
        if t.dtype != torch.float32:
            raise CheckpointError(f"tensor {name!r} is {t.dtype}, format stores float32 only")
        data = t.numpy().astype("<f4", copy=False).tobytes()
        catalog[name] = {"shape": list(t.shape), "dtype": "float32", "offset": offset}
        payload += data
        offset += len(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model": dataclasses.asdict(model.config),
        "label_scheme": {"task": scheme.task, "classes": list(scheme.classes)},
        "eval_batch_size": int(eval_batch_size),
        "tensors": catalog,
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (directory / WEIGHTS_NAME).write_bytes(bytes(payload))
    return directory


def load_checkpoint(directory: str | Path) -> Tuple[SequenceClassifier, LabelScheme, dict]:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CheckpointError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {manifest.get('format_version')!r}")
    model_config = from_dict(ModelConfig, manifest["model"])
    model = SequenceClassifier(model_config)
    scheme = LabelScheme(
        task=manifest["label_scheme"]["task"], classes=list(manifest["label_scheme"]["classes"])
    )
    blob = (directory / WEIGHTS_NAME).read_bytes()
    state: Dict[str, torch.Tensor] = {}
    expected_offset = 0
    for name in sorted(manifest["tensors"]):
        entry = manifest["tensors"][name]
        if entry["dtype"] != "float32":
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {entry['dtype']!r}")
        if entry["offset"] != expected_offset:
            raise CheckpointError(f"tensor {name!r} offset {entry['offset']} breaks contiguity")
        numel = math.prod(entry["shape"]) if entry["shape"] else 1
        nbytes = numel * 4
        if entry["offset"] + nbytes > len(blob):
            raise CheckpointError(f"payload truncated at tensor {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=numel, offset=entry["offset"])
        state[name] = torch.from_numpy(arr.copy().reshape(entry["shape"]))
        expected_offset += nbytes
    if expected_offset != len(blob):
        raise CheckpointError(f"payload has {len(blob) - expected_offset} trailing bytes")
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"tensor directory does not match the model: {exc}") from exc
    set_trainable(model)
    return model, scheme, manifest
