"""Multi-head attention used for scene-context fusion and modality merging."""

from __future__ import annotations

import torch
import torch.nn as nn


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with separate query and key/value inputs.

    ``forward`` returns the output-projected per-query vectors together with
    the attention weights, shaped ``(B, heads, Tq, Tk)``.
    """

    def __init__(self, query_dim: int, kv_dim: int, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"attention dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = nn.Linear(query_dim, dim)
        self.k = nn.Linear(kv_dim, dim)
        self.v = nn.Linear(kv_dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, queries, keys, mask=None):
        b, tq, _ = queries.shape
        tk = keys.shape[1]
        h = self.heads
        q = self.q(queries).view(b, tq, h, -1).transpose(1, 2)
        k = self.k(keys).view(b, tk, h, -1).transpose(1, 2)
        v = self.v(keys).view(b, tk, h, -1).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / q.shape[-1] ** 0.5
        if mask is not None:
            if not mask.any(dim=1).all():
                raise ValueError("attention mask has a row with no valid key")
            scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        weights = scores.softmax(dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(b, tq, -1)
        return self.out(ctx), weights


class CrossAttention(nn.Module):
    """Fuses scene and text tokens into one vector.

    With ``query="scene"`` scene tokens query the text; the per-query outputs
    are mean-pooled and a projection of the scene global vector is added.
    ``query="text"`` reverses the roles and pools over valid text positions.
    """

    def __init__(self, scene_dim: int, text_dim: int, dim: int, heads: int, query: str = "scene"):
        super().__init__()
        if query not in ("scene", "text"):
            raise ValueError(f"query must be 'scene' or 'text', got {query!r}")
        self.query = query
        if query == "scene":
            self.attn = MultiHeadAttention(scene_dim, text_dim, dim, heads)
        else:
            self.attn = MultiHeadAttention(text_dim, scene_dim, dim, heads)
        self.residual = nn.Linear(scene_dim, dim)

    def forward(self, scene_global, scene_tokens, text_tokens, text_mask):
        if not text_mask.any(dim=1).all():
            raise ValueError("text mask must have at least one valid token per sample")
        if self.query == "scene":
            out, weights = self.attn(scene_tokens, text_tokens, text_mask)
            pooled = out.mean(dim=1)
        else:
            out, weights = self.attn(text_tokens, scene_tokens)
            m = text_mask.unsqueeze(-1).to(out.dtype)
            pooled = (out * m).sum(dim=1) / m.sum(dim=1)
        return pooled + self.residual(scene_global), weights


class SelfAttentionMerge(nn.Module):
    """Self-attention over the two-token sequence ``[S_fused, F_merged]``.

    Returns the mean of the two output tokens and the attention mass each
    input token receives, averaged over heads and query positions.
    """

    def __init__(self, face_dim: int, dim: int, heads: int):
        super().__init__()
        self.face_proj = nn.Linear(face_dim, dim)
        self.attn = MultiHeadAttention(dim, dim, dim, heads)

    def forward(self, f_merged, s_fused):
        x = torch.stack([s_fused, self.face_proj(f_merged)], dim=1)
        out, weights = self.attn(x, x)
        joint = (x + out).mean(dim=1)
        return joint, weights.mean(dim=(1, 2))
