"""Face, scene and text encoders.

The convolutional encoders are small residual stacks standing in for the
large ImageNet backbones; any module with the same output contract can be
swapped in through :func:`csgaze.model.network.import_backbone_weights`.
"""

from __future__ import annotations

import re
import zlib
from typing import List, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


def _norm(c: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, c), c)


class ResidualBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.norm1 = _norm(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.norm2 = _norm(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), _norm(cout))

    def forward(self, x):
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        skip = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + skip)


class ConvBackbone(nn.Module):
    """Stride-2 stem followed by one residual block per stage; stages after
    the first halve the resolution."""

    def __init__(self, widths: Sequence[int], in_channels: int = 3):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, widths[0], 3, 2, 1, bias=False), _norm(widths[0]), nn.ReLU())
        blocks = []
        cin = widths[0]
        for i, w in enumerate(widths):
            blocks.append(ResidualBlock(cin, w, stride=1 if i == 0 else 2))
            cin = w
        self.stages = nn.Sequential(*blocks)
        self.out_channels = cin
        self.reduction = 2 ** len(widths)

    def forward(self, x):
        return self.stages(self.stem(x))


def _check_finite(t: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite activations in {what}")
    return t


class FaceEncoder(nn.Module):
    def __init__(self, widths: Sequence[int], face_dim: int):
        super().__init__()
        self.backbone = ConvBackbone(widths)
        self.proj = nn.Linear(self.backbone.out_channels, face_dim)

    def forward(self, faces):
        fmap = self.backbone(faces)
        return _check_finite(self.proj(fmap.mean(dim=(2, 3))), "face encoder")


class SceneEncoder(nn.Module):
    """Returns ``(global, tokens)``; tokens are the last feature map
    flattened row-major, ``global`` is their mean."""

    def __init__(self, widths: Sequence[int], scene_dim: int):
        super().__init__()
        self.backbone = ConvBackbone(widths)
        self.proj = nn.Conv2d(self.backbone.out_channels, scene_dim, 1)

    def feature_map(self, images):
        return self.proj(self.backbone(images))

    def forward(self, images):
        fmap = self.feature_map(images)
        tokens = fmap.flatten(2).transpose(1, 2)
        _check_finite(tokens, "scene encoder")
        return tokens.mean(dim=1), tokens


_PUNCT = re.compile(r"^[^\w]+|[^\w]+$")


def tokenize(text: str) -> List[str]:
    """Lower-cased whitespace tokens with edge punctuation stripped."""
    toks = [_PUNCT.sub("", t) for t in text.lower().split()]
    return [t for t in toks if t]


def _bucket(s: str, buckets: int) -> int:
    return zlib.crc32(s.encode("utf-8")) % buckets


def text_ids(texts: Sequence[str], cap: int, buckets: int):
    """Hash token unigrams and bigrams into ids, truncated/padded to ``cap``.

    Returns ``(unigram_ids, bigram_ids, mask)``, each ``(B, cap)``; id 0 is
    reserved for padding.
    """
    uni = torch.zeros(len(texts), cap, dtype=torch.long)
    bi = torch.zeros(len(texts), cap, dtype=torch.long)
    mask = torch.zeros(len(texts), cap, dtype=torch.bool)
    for b, text in enumerate(texts):
        toks = tokenize(text)
        if not toks:
            raise ValueError("text must contain at least one token")
        prev = "<s>"
        for i, tok in enumerate(toks[:cap]):
            uni[b, i] = 1 + _bucket(tok, buckets - 1)
            bi[b, i] = 1 + _bucket(prev + " " + tok, buckets - 1)
            mask[b, i] = True
            prev = tok
    return uni, bi, mask


class HashedTextEncoder(nn.Module):
    """Hashed unigram + bigram embeddings plus learned positions."""

    def __init__(self, text_dim: int, cap: int, buckets: int):
        super().__init__()
        self.cap, self.buckets = cap, buckets
        self.unigram = nn.Embedding(buckets, text_dim, padding_idx=0)
        self.bigram = nn.Embedding(buckets, text_dim, padding_idx=0)
        self.position = nn.Parameter(torch.randn(cap, text_dim) * 0.02)

    def ids(self, texts: Sequence[str]):
        return text_ids(texts, self.cap, self.buckets)

    def forward(self, uni, bi, mask):
        emb = self.unigram(uni) + self.bigram(bi) + self.position[: uni.shape[1]]
        return emb * mask.unsqueeze(-1).to(emb.dtype)

    def encode(self, texts: Sequence[str]):
        uni, bi, mask = self.ids(texts)
        return self(uni, bi, mask), mask
