"""Turn samples into model-ready tensors."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .imaging import box_mask, build_heatmap_target, crop_face, heatmap_peak_cell, load_image, resize_region
from .model.encoders import text_ids
from .model.network import ModelConfig
from .types import DyadSample, GazeClass, GazeFollowSample


def _chw(raster: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(np.asarray(raster, dtype=np.float32).transpose(2, 0, 1)))


def resize_full(raster: np.ndarray, size: int) -> np.ndarray:
    h, w = raster.shape[:2]
    if (h, w) == (size, size):
        return np.asarray(raster)
    return resize_region(raster, 0.0, 0.0, float(w), float(h), size)


class _ImageCache:
    def __init__(self, root=None, images: Optional[Dict[str, np.ndarray]] = None):
        self.root = Path(root) if root is not None else None
        self.images = dict(images or {})

    def __call__(self, ref) -> np.ndarray:
        if isinstance(ref, np.ndarray):
            return ref
        key = str(ref)
        if key not in self.images:
            path = Path(key)
            if self.root is not None and not path.is_absolute():
                path = self.root / path
            self.images[key] = load_image(path)
        return self.images[key]


def label_index(label) -> int:
    if isinstance(label, bool):
        return int(label)
    return int(GazeClass(label))


@dataclass
class DyadTensors:
    scene: torch.Tensor
    face_p: torch.Tensor
    face_a: torch.Tensor
    text_uni: torch.Tensor
    text_bi: torch.Tensor
    text_mask: torch.Tensor
    labels: torch.Tensor
    sample_ids: List[str]
    texts: List[str]

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, idx) -> "DyadTensors":
        idx = torch.as_tensor(np.asarray(idx, dtype=np.int64))
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v[idx] if isinstance(v, torch.Tensor) else [v[i] for i in idx.tolist()]
        return DyadTensors(**out)

    def inputs(self, idx=None) -> dict:
        t = self if idx is None else self.subset(idx)
        return dict(scene=t.scene, face_p=t.face_p, face_a=t.face_a, text_uni=t.text_uni,
                    text_bi=t.text_bi, text_mask=t.text_mask)

    def to(self, dtype) -> "DyadTensors":
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to(dtype) if isinstance(v, torch.Tensor) and v.is_floating_point() else v
        return DyadTensors(**out)


def dyad_tensors(samples: Sequence[DyadSample], config: ModelConfig, root=None,
                 images: Dict[str, np.ndarray] = None, contexts: Dict[str, str] = None) -> DyadTensors:
    """Stack scene images, both face crops, hashed context ids and labels.

    Context comes from ``contexts[sample_id]`` when given, else from the
    sample itself.
    """
    load = _ImageCache(root, images)
    scenes, fps, fas, texts, labels = [], [], [], [], []
    for s in samples:
        img = load(s.image_ref)
        scenes.append(_chw(resize_full(img, config.scene_size)))
        fps.append(_chw(crop_face(img, s.principal, config.face_size)))
        fas.append(_chw(crop_face(img, s.associate, config.face_size)))
        text = (contexts or {}).get(s.sample_id, s.context_text)
        if not text:
            raise ValueError(f"sample {s.sample_id!r} has no context text")
        texts.append(text)
        labels.append(-1 if s.label is None else label_index(s.label))
    uni, bi, mask = text_ids(texts, config.text_token_cap, config.text_buckets)
    return DyadTensors(torch.stack(scenes), torch.stack(fps), torch.stack(fas), uni, bi, mask,
                       torch.tensor(labels, dtype=torch.long), [s.sample_id for s in samples], texts)


@dataclass
class GazeFollowTensors:
    scene: torch.Tensor
    face: torch.Tensor
    head_mask: torch.Tensor
    target: torch.Tensor
    cells: torch.Tensor
    gaze_dir: torch.Tensor
    sample_ids: List[str]

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, idx) -> "GazeFollowTensors":
        idx = torch.as_tensor(np.asarray(idx, dtype=np.int64))
        return GazeFollowTensors(self.scene[idx], self.face[idx], self.head_mask[idx],
                                 self.target[idx], self.cells[idx], self.gaze_dir[idx],
                                 [self.sample_ids[i] for i in idx.tolist()])


def gazefollow_tensors(samples: Sequence[GazeFollowSample], config: ModelConfig, root=None,
                       images: Dict[str, np.ndarray] = None) -> GazeFollowTensors:
    load = _ImageCache(root, images)
    scene_cache = {}
    scenes, faces, masks, targets, cells, dirs = [], [], [], [], [], []
    for s in samples:
        img = load(s.image_ref)
        key = id(img)
        if key not in scene_cache:
            scene_cache[key] = _chw(resize_full(img, config.scene_size))
        scenes.append(scene_cache[key])
        faces.append(_chw(crop_face(img, s.head, config.face_size)))
        masks.append(torch.from_numpy(box_mask(s.head, config.scene_size)))
        targets.append(torch.from_numpy(build_heatmap_target(s.gaze_point).grid.astype(np.float32)))
        cells.append(heatmap_peak_cell(s.gaze_point))
        cx, cy = s.head.center
        v = np.array([s.gaze_point[0] - cx, s.gaze_point[1] - cy])
        dirs.append(v / max(np.linalg.norm(v), 1e-9))
    return GazeFollowTensors(torch.stack(scenes), torch.stack(faces), torch.stack(masks),
                             torch.stack(targets), torch.tensor(cells, dtype=torch.long),
                             torch.tensor(np.array(dirs), dtype=torch.float32),
                             [s.sample_id for s in samples])
