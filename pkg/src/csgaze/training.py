"""Two-phase training: heatmap pretraining, then gaze-class fine-tuning."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import torch
import torch.nn.functional as F

from .datasets import DyadTensors, GazeFollowTensors
from .evaluation.metrics import f1_per_class
from .model.network import CSGaze

log = logging.getLogger(__name__)

EPS = 1e-12
LOSSES = ("heatmap_mse", "categorical_ce", "binary_ce")


class TrainingAborted(RuntimeError):
    """Raised on a non-finite loss; the model holds the last good weights."""

    def __init__(self, message: str, epoch: int, last_good_state: Dict[str, torch.Tensor]):
        self.epoch = epoch
        self.last_good_state = last_good_state
        super().__init__(message)


@dataclass
class TrainConfig:
    phase: str = "classify"
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: Optional[int] = None
    early_stop_patience: int = 5
    validation_fraction: float = 0.10
    loss: Optional[str] = None
    seed: int = 0
    monitor: str = "val_loss"
    freeze_face: bool = False
    freeze_scene: bool = False
    fixed_equal: bool = False
    modalities: str = "FSC"
    from_scratch: bool = False
    aux_gaze_weight: float = 0.0

    def __post_init__(self):
        if self.phase not in ("pretrain", "classify"):
            raise ValueError(f"phase must be 'pretrain' or 'classify', got {self.phase!r}")
        if self.max_epochs is None:
            self.max_epochs = 10 if self.phase == "pretrain" else 200
        if self.loss is None:
            self.loss = "heatmap_mse" if self.phase == "pretrain" else "categorical_ce"
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.monitor not in ("val_loss", "val_f1"):
            raise ValueError("monitor must be 'val_loss' or 'val_f1'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    wall_time: float = 0.0


@dataclass
class TrainLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None
    best_epoch: Optional[int] = None

    def to_jsonl(self, include_time: bool = True) -> str:
        lines = []
        for e in self.epochs:
            d = asdict(e)
            if not include_time:
                d.pop("wall_time")
            lines.append(json.dumps(d, sort_keys=True))
        lines.append(json.dumps({"stop_reason": self.stop_reason, "best_epoch": self.best_epoch}))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"epochs": [asdict(e) for e in self.epochs], "stop_reason": self.stop_reason,
                "best_epoch": self.best_epoch}


class EarlyStopping:
    """Tracks the best monitored value; ``update`` returns True once
    ``patience`` consecutive epochs fail to improve on it."""

    def __init__(self, patience: int, mode: str = "min"):
        self.patience = patience
        self.sign = 1.0 if mode == "min" else -1.0
        self.best = math.inf
        self.best_epoch = None
        self.bad = 0

    def update(self, epoch: int, value: float) -> bool:
        v = self.sign * value
        if v < self.best:
            self.best, self.best_epoch, self.bad = v, epoch, 0
            return False
        self.bad += 1
        return self.bad >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad == 0


# ----------------------------------------------------------------------- losses

def loss_categorical_ce(probabilities, label: int) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    return float(-math.log(max(p[int(label)], EPS)))


def loss_binary_ce(p: float, label: int) -> float:
    q = float(p) if label else 1.0 - float(p)
    return float(-math.log(max(q, EPS)))


def classification_loss(logits: torch.Tensor, labels: torch.Tensor, kind: str) -> torch.Tensor:
    """Mean cross-entropy from logits with probabilities clamped at 1e-12."""
    if kind == "binary_ce":
        if logits.shape[1] != 2:
            raise ValueError("binary cross-entropy needs two logits")
        p = logits.softmax(dim=1)[:, 1].clamp(EPS, 1 - EPS)
        y = labels.to(p.dtype)
        return -(y * p.log() + (1 - y) * (1 - p).log()).mean()
    logp = logits.log_softmax(dim=1).clamp_min(math.log(EPS))
    return F.nll_loss(logp, labels)


def heatmap_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return ((pred - target) ** 2).mean()


def heatmap_argmax_error(pred: torch.Tensor, cells: torch.Tensor) -> torch.Tensor:
    """Per-sample L2 distance, in grid cells, between the predicted peak and ``cells`` (col, row)."""
    b, h, w = pred.shape
    idx = pred.reshape(b, -1).argmax(dim=1)
    rows, cols = idx // w, idx % w
    return torch.sqrt(((cols - cells[:, 0]) ** 2 + (rows - cells[:, 1]) ** 2).to(torch.float64))


# ------------------------------------------------------------------------ utils

def split_indices(n: int, fraction: float, seed: int):
    """``(train, val)`` index arrays; validation is the first ``fraction`` of
    a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def batches(indices: np.ndarray, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, epoch]).permutation(indices)
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def _snapshot(model) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def _set_trainable(model: CSGaze, prefixes) -> List[torch.nn.Parameter]:
    params = []
    for name, p in model.named_parameters():
        p.requires_grad_(name.startswith(tuple(prefixes)))
        if p.requires_grad:
            params.append(p)
    return params


def make_optimizer(params, lr: float):
    return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8)


# ---------------------------------------------------------------------- phase 1

@torch.no_grad()
def evaluate_heatmaps(model: CSGaze, data: GazeFollowTensors, idx=None, batch_size: int = 256):
    """Mean heatmap MSE and mean peak error (cells) over ``idx``."""
    model.eval()
    idx = np.arange(len(data)) if idx is None else np.asarray(idx)
    loss_sum, err_sum = 0.0, 0.0
    for start in range(0, len(idx), batch_size):
        b = idx[start:start + batch_size]
        pred = model.heatmap(data.scene[b], data.face[b], data.head_mask[b])
        loss_sum += float(((pred - data.target[b]) ** 2).mean(dim=(1, 2)).sum())
        err_sum += float(heatmap_argmax_error(pred, data.cells[b]).sum())
    return loss_sum / len(idx), err_sum / len(idx)


def pretrain_phase1(data: GazeFollowTensors, model: CSGaze, config: TrainConfig):
    """Fit the face/scene encoders and heatmap head with per-pixel MSE.

    Runs for ``config.max_epochs`` epochs and returns the final weights.
    """
    if config.phase != "pretrain":
        raise ValueError("pretrain_phase1 needs a pretrain config")
    torch.use_deterministic_algorithms(True, warn_only=True)
    train_idx, val_idx = split_indices(len(data), config.validation_fraction, config.seed)
    params = _set_trainable(model, ("face_encoder.", "scene_encoder.", "heatmap_head."))
    opt = make_optimizer(params, config.learning_rate)
    tlog = TrainLog()
    good = _snapshot(model)
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        total, count = 0.0, 0
        for b in batches(train_idx, config.batch_size, config.seed, epoch):
            if config.aux_gaze_weight:
                pred, gv = model.heatmap(data.scene[b], data.face[b], data.head_mask[b],
                                         return_gaze=True)
                loss = heatmap_loss(pred, data.target[b]) + config.aux_gaze_weight * (
                    1.0 - (gv * data.gaze_dir[b]).sum(dim=1)).mean()
            else:
                pred = model.heatmap(data.scene[b], data.face[b], data.head_mask[b])
                loss = heatmap_loss(pred, data.target[b])
            if not torch.isfinite(loss):
                model.load_state_dict(good)
                raise TrainingAborted(f"non-finite loss at epoch {epoch}", epoch, good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(b)
            count += len(b)
        val_loss, val_err = evaluate_heatmaps(model, data, val_idx)
        good = _snapshot(model)
        tlog.epochs.append(EpochRecord(epoch, total / count, val_loss, val_err,
                                       time.perf_counter() - t0))
        log.info("pretrain epoch %d: train %.5f val %.5f err %.2f", epoch, total / count,
                 val_loss, val_err)
    tlog.stop_reason = "max_epochs"
    tlog.best_epoch = config.max_epochs
    for p in model.parameters():
        p.requires_grad_(True)
    return model, tlog


# ---------------------------------------------------------------------- phase 2

@torch.no_grad()
def predict(model: CSGaze, data: DyadTensors, fixed_equal: bool = False, modalities: str = "FSC",
            batch_size: int = 256) -> dict:
    """Evaluation-mode forward over ``data``; returns stacked numpy outputs."""
    model.eval()
    out = {"logits": [], "merge_attention": [], "f_merged": [], "s_fused": []}
    for start in range(0, len(data), batch_size):
        b = np.arange(start, min(start + batch_size, len(data)))
        fo = model(**data.inputs(b), fixed_equal=fixed_equal, modalities=modalities)
        out["logits"].append(fo.logits)
        out["merge_attention"].append(fo.merge_attention)
        out["f_merged"].append(fo.f_merged)
        out["s_fused"].append(fo.s_fused)
    res = {k: torch.cat(v).double().numpy() for k, v in out.items()}
    z = res["logits"]
    p = np.exp(z - z.max(axis=1, keepdims=True))
    res["probabilities"] = p / p.sum(axis=1, keepdims=True)
    return res


@torch.no_grad()
def _eval_classify(model, data, idx, config: TrainConfig, n_classes: int):
    model.eval()
    loss_sum, preds = 0.0, []
    for start in range(0, len(idx), 256):
        b = idx[start:start + 256]
        fo = model(**data.inputs(b), fixed_equal=config.fixed_equal, modalities=config.modalities)
        loss_sum += float(classification_loss(fo.logits, data.labels[b], config.loss)) * len(b)
        preds.append(fo.logits.argmax(dim=1))
    preds = torch.cat(preds).numpy()
    f1 = f1_per_class(preds, data.labels[idx].numpy(), n_classes).mean()
    return loss_sum / len(idx), float(f1)


def train_phase2(data: DyadTensors, model: CSGaze, config: TrainConfig, pretrained: bool = True):
    """Fine-tune the whole model for gaze classes with early stopping.

    ``pretrained`` states that ``model`` carries phase-1 encoder weights;
    without it ``config.from_scratch`` must be set. Returns the weights of
    the epoch with the best monitored validation value.
    """
    if config.phase != "classify":
        raise ValueError("train_phase2 needs a classify config")
    if not pretrained and not config.from_scratch:
        raise ValueError("phase 2 needs a phase-1 model or from_scratch=True")
    n_classes = model.config.n_classes
    if config.loss == "binary_ce" and n_classes != 2:
        raise ValueError("binary cross-entropy needs a two-class model")
    torch.use_deterministic_algorithms(True, warn_only=True)
    train_idx, val_idx = split_indices(len(data), config.validation_fraction, config.seed)
    present = set(data.labels[train_idx].tolist())
    missing = [c for c in range(n_classes) if c not in present]
    if missing:
        warnings.warn(f"classes {missing} absent from the training split", RuntimeWarning)

    frozen = []
    if config.freeze_face:
        frozen.append("face_encoder.")
    if config.freeze_scene:
        frozen.append("scene_encoder.")
    if config.fixed_equal:
        frozen.append("fusion.alpha_logits")
    params = []
    for name, p in model.named_parameters():
        trainable = not name.startswith(tuple(frozen)) and not name.startswith("heatmap_head.")
        p.requires_grad_(trainable)
        if trainable:
            params.append(p)
    opt = make_optimizer(params, config.learning_rate)

    stopper = EarlyStopping(config.early_stop_patience,
                            "min" if config.monitor == "val_loss" else "max")
    tlog = TrainLog()
    best = good = _snapshot(model)
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        total, count = 0.0, 0
        for b in batches(train_idx, config.batch_size, config.seed, epoch):
            fo = model(**data.inputs(b), fixed_equal=config.fixed_equal,
                       modalities=config.modalities)
            loss = classification_loss(fo.logits, data.labels[b], config.loss)
            if not torch.isfinite(loss):
                model.load_state_dict(good)
                raise TrainingAborted(f"non-finite loss at epoch {epoch}", epoch, good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(b)
            count += len(b)
        good = _snapshot(model)
        val_loss, val_f1 = _eval_classify(model, data, val_idx, config, n_classes)
        tlog.epochs.append(EpochRecord(epoch, total / count, val_loss, val_f1,
                                       time.perf_counter() - t0))
        log.info("train epoch %d: train %.4f val %.4f f1 %.3f", epoch, total / count,
                 val_loss, val_f1)
        stop = stopper.update(epoch, val_loss if config.monitor == "val_loss" else val_f1)
        if stopper.improved:
            best = good
        if stop:
            tlog.stop_reason = "early_stop"
            break
    else:
        tlog.stop_reason = "max_epochs"
    tlog.best_epoch = stopper.best_epoch
    model.load_state_dict(best)
    for p in model.parameters():
        p.requires_grad_(True)
    return model, tlog
