"""Multi-view feature fusion.

Three fusion levels feed the multi-view reconstructor: image-level
(channel concat + per-pixel MLP), joint-level (max/avg/std pooling over
views + shared MLP), and vertex-level (attention over the view axis with a
per-vertex weight simplex). Concat and pooling stand-ins for the vertex and
joint levels cover the ablation variants.

View-axis conventions: image features (..., N, C, H, W), joint features
(..., N, J, C), vertex features (..., N, V, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .diffcore import Linear, MLP, ParamBlock, scaled_dot_attention

IMAGE_VARIANTS = ("off", "concat")
JOINT_VARIANTS = ("off", "concat", "stats")
VERTEX_VARIANTS = ("concat", "pool", "attention")


@dataclass
class FusionConfig:
    image: str = "concat"
    joint: str = "stats"
    vertex: str = "attention"

    def validate(self) -> None:
        if self.image not in IMAGE_VARIANTS:
            raise ValueError(f"fusion.image must be one of {IMAGE_VARIANTS}")
        if self.joint not in JOINT_VARIANTS:
            raise ValueError(f"fusion.joint must be one of {JOINT_VARIANTS}")
        if self.vertex not in VERTEX_VARIANTS:
            raise ValueError(f"fusion.vertex must be one of {VERTEX_VARIANTS}")


class ImageFusion(ParamBlock):
    """Concatenate per-view image features channel-wise, mix with a
    per-location MLP back to a single view's width. The view count is fixed
    at construction."""

    def __init__(self, views: int, channels: int, seed: int,
                 identity_init: bool = False):
        super().__init__(seed)
        self.views = views
        self.channels = channels
        self.mlp = MLP(views * channels, (), channels, seed=seed + 1,
                       identity_init=identity_init)

    def forward(self, f_i_all: torch.Tensor) -> torch.Tensor:
        if f_i_all.shape[-4] != self.views:
            raise ValueError(
                f"image fusion built for {self.views} views, got {f_i_all.shape[-4]}")
        x = torch.cat(torch.unbind(f_i_all, dim=-4), dim=-3)  # (..., N*C, H, W)
        x = x.movedim(-3, -1)
        x = self.mlp(x)
        return x.movedim(-1, -3)


class JointStatsFusion(ParamBlock):
    """Per-joint max/avg/std pooling across views, concatenated and mixed by
    a shared MLP. Std uses the population convention, so a single view gives
    exactly zero spread (up to the stabilizer epsilon)."""

    EPS = 1e-12

    def __init__(self, channels: int, seed: int, identity_init: bool = False):
        super().__init__(seed)
        self.mlp = MLP(3 * channels, (), channels, seed=seed + 1,
                       identity_init=identity_init)

    def forward(self, f_j_all: torch.Tensor) -> torch.Tensor:
        mx = f_j_all.max(dim=-3).values
        avg = f_j_all.mean(dim=-3)
        var = ((f_j_all - avg.unsqueeze(-3)) ** 2).mean(dim=-3)
        std = torch.sqrt(var + self.EPS)
        return self.mlp(torch.cat([mx, avg, std], dim=-1))


class JointConcatFusion(ParamBlock):
    """Ablation variant: concatenate views along channels, linear back to C."""

    def __init__(self, views: int, channels: int, seed: int):
        super().__init__(seed)
        self.views = views
        self.linear = Linear(views * channels, channels, seed=seed + 1)

    def forward(self, f_j_all: torch.Tensor) -> torch.Tensor:
        if f_j_all.shape[-3] != self.views:
            raise ValueError(
                f"joint concat fusion built for {self.views} views, got {f_j_all.shape[-3]}")
        x = torch.cat(torch.unbind(f_j_all, dim=-3), dim=-1)
        return self.linear(x)


class VertexAttentionFusion(ParamBlock):
    """Attention over the view axis, independently per coarse vertex.

    Self-attention (optionally with learned projections) transforms the N
    per-view feature rows of each vertex; a learned scalar head turns each
    transformed row into a logit and softmax over views yields nonnegative
    weights summing to one per vertex. The fused feature is the weighted sum
    of the *input* per-view features.
    """

    def __init__(self, channels: int, seed: int, learned_qkv: bool = False):
        super().__init__(seed)
        self.channels = channels
        self.learned_qkv = learned_qkv
        if learned_qkv:
            self.q_proj = Linear(channels, channels, seed=seed + 1, bias=False)
            self.k_proj = Linear(channels, channels, seed=seed + 2, bias=False)
            self.v_proj = Linear(channels, channels, seed=seed + 3, bias=False)
        self.logit_head = Linear(channels, 1, seed=seed + 4)

    def forward(self, f_v_all: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # (..., N, V, C) -> per-vertex view rows (..., V, N, C)
        rows = f_v_all.transpose(-3, -2)
        if self.learned_qkv:
            q, k, v = self.q_proj(rows), self.k_proj(rows), self.v_proj(rows)
        else:
            q = k = v = rows
        transformed = scaled_dot_attention(q, k, v)          # (..., V, N, C)
        logits = self.logit_head(transformed).squeeze(-1)    # (..., V, N)
        weights = torch.softmax(logits, dim=-1)
        fused = (weights.unsqueeze(-1) * rows).sum(dim=-2)   # (..., V, C)
        return fused, weights.transpose(-2, -1)              # weights (..., N, V)


class VertexConcatFusion(ParamBlock):
    def __init__(self, views: int, channels: int, seed: int):
        super().__init__(seed)
        self.views = views
        self.linear = Linear(views * channels, channels, seed=seed + 1)

    def forward(self, f_v_all: torch.Tensor) -> torch.Tensor:
        if f_v_all.shape[-3] != self.views:
            raise ValueError(
                f"vertex concat fusion built for {self.views} views, got {f_v_all.shape[-3]}")
        x = torch.cat(torch.unbind(f_v_all, dim=-3), dim=-1)
        return self.linear(x)


def vertex_pool_fusion(f_v_all: torch.Tensor) -> torch.Tensor:
    """Parameter-free elementwise max over the view axis."""
    return f_v_all.max(dim=-3).values
