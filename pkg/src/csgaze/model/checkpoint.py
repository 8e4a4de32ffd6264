"""Versioned checkpoint container.

A checkpoint is an uncompressed ``.npz`` archive: one float32 array per
parameter plus ``__header__``, a UTF-8 JSON blob holding the format
version, model config, phase tag, step counter, tensor names and shapes, and
any extra metadata (e.g. the training log).
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch

from .network import ENCODER_PREFIXES, CSGaze, ModelConfig

FORMAT_VERSION = 1
PHASES = ("init", "pretrain-complete", "classify-complete")


class CheckpointError(RuntimeError):
    def __init__(self, message: str, tensor: Optional[str] = None):
        self.tensor = tensor
        super().__init__(message)


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    phase: str = "init"
    step: int = 0
    meta: dict = field(default_factory=dict)


def save_checkpoint(model: CSGaze, path, phase: str = "init", step: int = 0,
                    meta: dict = None) -> None:
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    tensors = {k: v.detach().to(torch.float32).cpu().numpy()
               for k, v in model.state_dict().items()}
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "phase": phase,
        "step": int(step),
        "tensors": {k: list(v.shape) for k, v in tensors.items()},
        "meta": meta or {},
    }
    blob = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __header__=blob, **tensors)
    tmp.replace(path)


def read_checkpoint(path) -> Checkpoint:
    """Parse and validate a checkpoint file without building a model."""
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            header = json.loads(bytes(z["__header__"]).decode("utf-8"))
            names = list(header["tensors"])
            tensors = {k: z[k] for k in names}
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, EOFError, UnicodeDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {type(e).__name__}: {e}") from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    for name, shape in header["tensors"].items():
        if list(tensors[name].shape) != shape or tensors[name].dtype != np.float32:
            raise CheckpointError(f"tensor {name} does not match its declared shape", name)
    return Checkpoint(ModelConfig.from_dict(header["config"]), tensors, header["phase"],
                      header["step"], header.get("meta", {}))


def _assign(model: CSGaze, tensors: Dict[str, np.ndarray], keys) -> None:
    state = model.state_dict()
    new = {}
    for k in keys:
        if k not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {k}", k)
        if tuple(state[k].shape) != tuple(tensors[k].shape):
            raise CheckpointError(
                f"shape mismatch for {k}: model {tuple(state[k].shape)} vs "
                f"checkpoint {tuple(tensors[k].shape)}", k)
        new[k] = torch.from_numpy(np.array(tensors[k])).to(state[k].dtype)
    model.load_state_dict(new, strict=False)


def load_checkpoint(path, seed: int = 0) -> tuple:
    """Rebuild the saved model; returns ``(model, checkpoint)``."""
    ckpt = read_checkpoint(path)
    model = CSGaze(ckpt.config, seed)
    unknown = set(ckpt.tensors) - set(model.state_dict())
    if unknown:
        name = sorted(unknown)[0]
        raise CheckpointError(f"checkpoint tensor {name} has no counterpart in the model", name)
    _assign(model, ckpt.tensors, model.state_dict().keys())
    return model, ckpt


def transfer_encoders(ckpt: Checkpoint, config: ModelConfig, seed: int) -> CSGaze:
    """Phase-2 model: encoder and heatmap-head weights from ``ckpt``, text
    encoder and fusion stack freshly initialized from ``seed``."""
    if ckpt.phase != "pretrain-complete":
        raise CheckpointError(f"expected a pretrain-complete checkpoint, got phase {ckpt.phase!r}")
    model = CSGaze(config, seed)
    keys = [k for k in model.state_dict() if k.startswith(ENCODER_PREFIXES)]
    _assign(model, ckpt.tensors, keys)
    return model
