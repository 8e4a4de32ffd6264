"""The full model: encoders, phase-1 heatmap head and the fusion stack."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..types import HEATMAP_SIZE
from .attention import CrossAttention, SelfAttentionMerge
from .encoders import FaceEncoder, HashedTextEncoder, SceneEncoder

MODALITIES = frozenset("FSC")


@dataclass(frozen=True)
class ModelConfig:
    face_dim: int = 256
    scene_dim: int = 256
    text_dim: int = 256
    attention_dim: int = 256
    attention_heads: int = 4
    text_token_cap: int = 48
    text_buckets: int = 4096
    classifier_hidden: int = 128
    n_classes: int = 5
    face_size: int = 224
    scene_size: int = 224
    face_widths: tuple = (32, 64, 128, 256)
    scene_widths: tuple = (32, 64, 128, 256)
    cross_query: str = "scene"

    def __post_init__(self):
        dims = (self.face_dim, self.scene_dim, self.text_dim, self.attention_dim,
                self.attention_heads, self.text_token_cap, self.classifier_hidden)
        if min(dims) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.attention_dim % self.attention_heads:
            raise ValueError("attention_dim must be divisible by attention_heads")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        object.__setattr__(self, "face_widths", tuple(self.face_widths))
        object.__setattr__(self, "scene_widths", tuple(self.scene_widths))

    @property
    def scene_grid(self) -> int:
        return self.scene_size // 2 ** len(self.scene_widths)

    @property
    def scene_token_count(self) -> int:
        return self.scene_grid ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["face_widths"] = list(self.face_widths)
        d["scene_widths"] = list(self.scene_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# small enough to train the toy experiments on one CPU core
DESK_CONFIG = ModelConfig(
    face_dim=64, scene_dim=64, text_dim=64, attention_dim=64, attention_heads=4,
    classifier_hidden=64, face_size=32, scene_size=64,
    face_widths=(16, 32, 64), scene_widths=(16, 32, 64),
)


class Classifier(nn.Module):
    def __init__(self, dim: int, hidden: int, n_classes: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, n_classes)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


def fuse_faces(f_p, f_a, alpha_logits, fixed_equal: bool = False):
    """Convex combination of principal and associate face embeddings."""
    if f_p.shape != f_a.shape:
        raise ValueError(f"face embedding shapes differ: {tuple(f_p.shape)} vs {tuple(f_a.shape)}")
    if fixed_equal:
        alpha = torch.full((2,), 0.5, dtype=f_p.dtype, device=f_p.device)
    else:
        alpha = alpha_logits.softmax(dim=0)
    return alpha[0] * f_p + alpha[1] * f_a, alpha


class FusionStack(nn.Module):
    """Face weighting, scene-context cross-attention, modality merge, classifier."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config
        self.alpha_logits = nn.Parameter(torch.zeros(2))
        self.cross = CrossAttention(c.scene_dim, c.text_dim, c.attention_dim, c.attention_heads,
                                    query=c.cross_query)
        self.merge = SelfAttentionMerge(c.face_dim, c.attention_dim, c.attention_heads)
        self.classifier = Classifier(c.attention_dim, c.classifier_hidden, c.n_classes)

    def alpha(self, fixed_equal: bool = False):
        if fixed_equal:
            return torch.full((2,), 0.5, dtype=self.alpha_logits.dtype)
        return self.alpha_logits.softmax(dim=0)


def direction_field(head_mask, gaze_vec, size: int, powers=(1, 4, 16)):
    """Cone-shaped maps ``relu(cos)^k`` between the gaze vector and the
    offset from the head centre to each cell centre; ``(B, len(powers), size, size)``."""
    b, h, w = head_mask.shape
    m = head_mask.to(gaze_vec.dtype)
    coords = (torch.arange(h, dtype=m.dtype) + 0.5) / h
    mass = m.sum(dim=(1, 2)).clamp_min(1e-6)
    cy = (m.sum(dim=2) * coords).sum(dim=1) / mass
    cx = (m.sum(dim=1) * coords).sum(dim=1) / mass
    grid = (torch.arange(size, dtype=m.dtype) + 0.5) / size
    dx = grid[None, None, :] - cx[:, None, None]
    dy = grid[None, :, None] - cy[:, None, None]
    norm = torch.sqrt(dx * dx + dy * dy + 1e-6)
    cos = (dx * gaze_vec[:, 0, None, None] + dy * gaze_vec[:, 1, None, None]) / norm
    cos = cos.clamp_min(0.0)
    return torch.stack([cos ** k for k in powers], dim=1)


class HeatmapHead(nn.Module):
    """Decodes scene tokens, a head-location mask and the face embedding
    into a 64x64 gaze heatmap in ``[0, 1]``.

    A gaze vector regressed from the face embedding is turned into
    direction-field channels at every decoder resolution. Convolutions run
    up to half the output resolution; the last doubling is bilinear.
    """

    n_field = 3

    def __init__(self, scene_dim: int, face_dim: int, grid: int, channels: int = 32):
        super().__init__()
        self.grid = grid
        self.gaze = nn.Linear(face_dim, 2)
        self.face = nn.Linear(face_dim, channels)
        self.fuse = nn.Conv2d(scene_dim + 1 + channels + self.n_field, channels, 3, 1, 1)
        ups = []
        size, c = grid, channels
        while size < HEATMAP_SIZE // 2:
            ups.append(nn.Conv2d(c + self.n_field, max(c // 2, 8), 3, 1, 1))
            c = max(c // 2, 8)
            size *= 2
        self.ups = nn.ModuleList(ups)
        self.final = nn.Conv2d(c, 1, 3, 1, 1)
        # start near the mean target level; a sigmoid starting at 0.5 saturates
        # towards 0 under MSE before the peak can be localized
        with torch.no_grad():
            self.final.weight.mul_(0.1)
            self.final.bias.fill_(-4.0)

    def gaze_vector(self, face_embedding):
        v = self.gaze(face_embedding)
        return v / torch.sqrt((v * v).sum(dim=1, keepdim=True) + 1e-8)

    def forward(self, scene_tokens, face_embedding, head_mask, return_gaze: bool = False):
        b, t, d = scene_tokens.shape
        g = self.grid
        fmap = scene_tokens.transpose(1, 2).reshape(b, d, g, g)
        mask = F.adaptive_avg_pool2d(head_mask.unsqueeze(1).to(fmap.dtype), g)
        face = self.face(face_embedding)[:, :, None, None].expand(-1, -1, g, g)
        gv = self.gaze_vector(face_embedding)
        x = torch.cat([fmap, mask, face, direction_field(head_mask, gv, g)], dim=1)
        x = F.relu(self.fuse(x))
        for conv in self.ups:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = torch.cat([x, direction_field(head_mask, gv, x.shape[-1])], dim=1)
            x = F.relu(conv(x))
        x = F.interpolate(self.final(x), size=(HEATMAP_SIZE, HEATMAP_SIZE), mode="bilinear",
                          align_corners=False)
        heat = torch.sigmoid(x).squeeze(1)
        return (heat, gv) if return_gaze else heat


@dataclass
class ForwardOutput:
    logits: torch.Tensor
    f_merged: torch.Tensor
    s_fused: torch.Tensor
    merge_attention: torch.Tensor
    cross_weights: Optional[torch.Tensor]
    alpha: torch.Tensor


@dataclass(frozen=True)
class ForwardTrace:
    """Per-sample record of the fused representations and attention."""

    f_merged: np.ndarray
    s_fused: np.ndarray
    merge_attention: np.ndarray
    logits: np.ndarray
    label: Optional[int] = None
    sample_id: Optional[str] = None


ENCODER_PREFIXES = ("face_encoder.", "scene_encoder.", "heatmap_head.")


def _seed_for(seed: int, part: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(part.encode())) % 2**63


class CSGaze(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        c = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(_seed_for(seed, "face"))
            self.face_encoder = FaceEncoder(c.face_widths, c.face_dim)
            torch.manual_seed(_seed_for(seed, "scene"))
            self.scene_encoder = SceneEncoder(c.scene_widths, c.scene_dim)
            torch.manual_seed(_seed_for(seed, "heatmap"))
            self.heatmap_head = HeatmapHead(c.scene_dim, c.face_dim, c.scene_grid)
            torch.manual_seed(_seed_for(seed, "text"))
            self.text_encoder = HashedTextEncoder(c.text_dim, c.text_token_cap, c.text_buckets)
            torch.manual_seed(_seed_for(seed, "fusion"))
            self.fusion = FusionStack(c)

    # -- phase 1
    def heatmap(self, scene, face, head_mask, return_gaze: bool = False):
        _, tokens = self.scene_encoder(scene)
        return self.heatmap_head(tokens, self.face_encoder(face), head_mask, return_gaze)

    # -- phase 2
    def forward(self, scene, face_p, face_a, text_uni=None, text_bi=None, text_mask=None,
                text_embeddings=None, fixed_equal: bool = False,
                modalities: Sequence[str] = MODALITIES) -> ForwardOutput:
        """Classify a batch of dyads.

        ``modalities`` is a subset of ``{"F", "S", "C"}`` (face, scene,
        context); missing branches are replaced by zeros of the same shape.
        Precomputed text embeddings may replace the hashed encoder.
        """
        mods = frozenset(modalities)
        if not mods or not mods <= MODALITIES:
            raise ValueError(f"modalities must be a non-empty subset of F, S, C: {modalities}")
        fu = self.fusion
        f_p = self.face_encoder(face_p)
        f_a = self.face_encoder(face_a)
        f_merged, alpha = fuse_faces(f_p, f_a, fu.alpha_logits, fixed_equal)
        if "F" not in mods:
            f_merged = torch.zeros_like(f_merged)

        b = f_merged.shape[0]
        cross_weights = None
        if mods & {"S", "C"}:
            g, tokens = self.scene_encoder(scene)
            if text_embeddings is None:
                text = self.text_encoder(text_uni, text_bi, text_mask)
            else:
                text = text_embeddings
            if "S" not in mods:
                g, tokens = torch.zeros_like(g), torch.zeros_like(tokens)
            if "C" not in mods:
                text = torch.zeros_like(text)
            s_fused, cross_weights = fu.cross(g, tokens, text, text_mask)
        else:
            s_fused = f_merged.new_zeros(b, self.config.attention_dim)

        joint, merge_att = fu.merge(f_merged, s_fused)
        logits = fu.classifier(joint)
        return ForwardOutput(logits, f_merged, s_fused, merge_att, cross_weights, alpha)

    def encoder_state(self) -> Dict[str, torch.Tensor]:
        return {k: v for k, v in self.state_dict().items() if k.startswith(ENCODER_PREFIXES)}


def build_model(config: ModelConfig = DESK_CONFIG, seed: int = 0) -> CSGaze:
    return CSGaze(config, seed)


def with_classes(config: ModelConfig, n_classes: int) -> ModelConfig:
    return replace(config, n_classes=n_classes)


def import_backbone_weights(model: CSGaze, part: str, module: nn.Module) -> None:
    """Replace the backbone of ``part`` ("face" or "scene") with ``module``.

    ``module`` must map images to a feature map whose channel count matches
    the existing projection input; the fusion stack is untouched.
    """
    enc = {"face": model.face_encoder, "scene": model.scene_encoder}[part]
    enc.backbone = module
