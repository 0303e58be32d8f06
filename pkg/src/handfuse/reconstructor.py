"""Dual-branch hand reconstructor.

A shared hourglass encoder feeds two branches: the shape branch (joint
heatmaps -> 2D-to-3D lifting -> spiral-convolution decoder -> canonical
vertices) and the orientation branch (conv downsampling -> enhancement ->
6D rotation head). One parameter set supports both a single-view forward
pass and a multi-view pass that fuses per-view features at the image, joint,
and vertex levels; with one view and identity-initialized fusion maps the two
passes coincide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .adaptation import ConcatEnhance, OrientationEnhance
from .diffcore import (Conv2d, Linear, MLP, ParamBlock, heatmap_pool,
                       soft_argmax_2d, upsample2x)
from .fusion import (FusionConfig, ImageFusion, JointConcatFusion,
                     JointStatsFusion, VertexAttentionFusion,
                     VertexConcatFusion, vertex_pool_fusion)
from .hand_model import HandTemplate

OFE_VARIANTS = ("off", "cat", "attention")


class DegenerateRotationError(ValueError):
    pass


@dataclass
class ModelConfig:
    image_size: int = 64
    in_channels: int = 2
    c_i: int = 64
    c_j: int = 64
    c_v: int = 128
    c_o: int = 128
    stem_channels: tuple = (16, 32)
    hg_channels: tuple = (96, 128)
    decoder_channels: tuple = (128, 64, 32)
    attn_width: int = 64
    rot_hidden: int = 256
    output_scale_mm: float = 100.0
    ofe: str = "attention"
    rotation_jitter: float = 1e-6

    @property
    def heatmap_size(self) -> int:
        return self.image_size // 4

    @property
    def orient_grid(self) -> int:
        return max(self.heatmap_size // 4, 1)

    def orient_width(self) -> int:
        return self.c_o * self.orient_grid * self.orient_grid

    def validate(self) -> None:
        if self.image_size % 16 != 0:
            raise ValueError("image_size must be divisible by 16")
        if self.ofe not in OFE_VARIANTS:
            raise ValueError(f"ofe must be one of {OFE_VARIANTS}")


@dataclass
class FeatureBundle:
    """Intermediate features of one reconstructor pass (batched)."""

    f_i: torch.Tensor                  # (B, C_i, H', W')
    heatmap_logits: torch.Tensor       # (B, J, H', W')
    heatmaps: torch.Tensor             # (B, J, H', W'), sums to 1 spatially
    f_j: torch.Tensor                  # (B, J, C_j)
    joints2d: torch.Tensor             # (B, J, 2) in [0, 1]
    f_v: torch.Tensor                  # (B, V_c, C_v)
    f_o: torch.Tensor                  # (B, C_o, G, G)
    f_o_flat: torch.Tensor             # (B, C_o * G * G)
    f_o_hat: torch.Tensor              # (B, orient_width): rotation-head input
    f_v_decoder_last: torch.Tensor     # (B, V, C_last)
    joints2d_all: torch.Tensor | None = None  # (B, N, J, 2), multi-view only
    view_order: torch.Tensor | None = None    # (B, N), multi-view only
    fusion_weights: torch.Tensor | None = None  # (B, N, V_c), attention VFF only

    def features(self) -> dict[str, torch.Tensor]:
        return {
            "f_v": self.f_v,
            "f_j": self.f_j,
            "f_o_flat": self.f_o_flat,
            "f_o_hat": self.f_o_hat,
            "f_v_decoder_last": self.f_v_decoder_last,
        }


@dataclass
class ReconOutput:
    vertices_canonical: torch.Tensor   # (B, V, 3) mm
    vertices_coarse: torch.Tensor      # (B, V_c, 3) mm
    joints2d: torch.Tensor             # (B, J, 2)
    rotation: torch.Tensor             # (B, 3, 3)


def rotation_from_6d(six: torch.Tensor, strict: bool = False,
                     jitter: float = 1e-6) -> torch.Tensor:
    """Two-vector representation -> proper rotation via Gram-Schmidt.

    strict mode raises on (near-)degenerate inputs instead of jittering.
    """
    a1, a2 = six[..., :3], six[..., 3:]
    if strict:
        n1 = torch.linalg.vector_norm(a1, dim=-1)
        if (n1 < 1e-8).any():
            raise DegenerateRotationError("first basis vector has zero norm")
    else:
        bias = six.new_zeros(6)
        bias[0] = jitter
        bias[4] = jitter
        a1 = a1 + bias[:3]
        a2 = a2 + bias[3:]
    b1 = a1 / torch.linalg.vector_norm(a1, dim=-1, keepdim=True).clamp_min(1e-12)
    resid = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    if strict:
        n2 = torch.linalg.vector_norm(resid, dim=-1)
        if (n2 < 1e-8).any():
            raise DegenerateRotationError("basis vectors are collinear")
    b2 = resid / torch.linalg.vector_norm(resid, dim=-1, keepdim=True).clamp_min(1e-12)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


class Hourglass(ParamBlock):
    """Small down-up conv encoder with skip connections; output stride 4."""

    def __init__(self, cfg: ModelConfig, seed: int):
        super().__init__(seed)
        s0, s1 = cfg.stem_channels
        h0, h1 = cfg.hg_channels
        self.stem0 = Conv2d(cfg.in_channels, s0, 3, seed=seed + 1, padding=1)
        self.stem1 = Conv2d(s0, s1, 3, seed=seed + 2, stride=2, padding=1)
        self.stem2 = Conv2d(s1, cfg.c_i, 3, seed=seed + 3, stride=2, padding=1)
        self.down1 = Conv2d(cfg.c_i, h0, 3, seed=seed + 4, stride=2, padding=1)
        self.down2 = Conv2d(h0, h1, 3, seed=seed + 5, stride=2, padding=1)
        self.up1 = Conv2d(h1, h0, 3, seed=seed + 6, padding=1)
        self.up2 = Conv2d(h0, cfg.c_i, 3, seed=seed + 7, padding=1)
        self.mix = Conv2d(cfg.c_i, cfg.c_i, 3, seed=seed + 8, padding=1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.stem0(image))
        x = torch.relu(self.stem1(x))
        x0 = torch.relu(self.stem2(x))          # H/4
        d1 = torch.relu(self.down1(x0))         # H/8
        d2 = torch.relu(self.down2(d1))         # H/16
        u1 = torch.relu(self.up1(upsample2x(d2))) + d1
        u2 = torch.relu(self.up2(upsample2x(u1))) + x0
        return torch.relu(self.mix(u2))


class ShapeEncoder(ParamBlock):
    """Joint heatmaps over the feature grid; per-joint pooled features and
    soft-argmax 2D joints."""

    def __init__(self, cfg: ModelConfig, num_joints: int, seed: int):
        super().__init__(seed)
        self.heat = Conv2d(cfg.c_i, num_joints, 1, seed=seed + 1)
        self.proj = Conv2d(cfg.c_i, cfg.c_j, 1, seed=seed + 2)

    def forward(self, f_i: torch.Tensor):
        logits = self.heat(f_i)
        joints2d, probs = soft_argmax_2d(logits)
        f_j = heatmap_pool(probs, self.proj(f_i))
        return f_j, joints2d, logits, probs


class Lift(ParamBlock):
    """2D-to-3D lifting: joint features + 2D positions mixed into per-vertex
    features by a learned row-stochastic joints->vertices map."""

    def __init__(self, cfg: ModelConfig, num_joints: int, coarse_count: int,
                 seed: int):
        super().__init__(seed)
        self.mixing_logits = self._fan_in_uniform(coarse_count, num_joints,
                                                  fan_in=num_joints)
        self.proj = Linear(cfg.c_j + 2, cfg.c_v, seed=seed + 1)

    def mixing(self) -> torch.Tensor:
        return torch.softmax(self.mixing_logits, dim=-1)

    def forward(self, f_j: torch.Tensor, joints2d: torch.Tensor) -> torch.Tensor:
        x = torch.cat([f_j, joints2d], dim=-1)
        mixed = torch.einsum("vj,...jc->...vc", self.mixing(), x)
        return self.proj(mixed)


class SpiralDecoder(ParamBlock):
    """Spiral convolutions on the coarse mesh, coarse vertex head, feature
    upsampling to the fine mesh, one refining spiral stage, fine vertex head."""

    def __init__(self, cfg: ModelConfig, template: HandTemplate, seed: int):
        super().__init__(seed)
        from .diffcore import SpiralConv
        d0, d1, d2 = cfg.decoder_channels
        self.scale = cfg.output_scale_mm
        self.s1 = SpiralConv(cfg.c_v, d0, template.spiral_indices, seed=seed + 1)
        self.s2 = SpiralConv(d0, d1, template.spiral_indices, seed=seed + 2)
        self.coarse_head = Linear(d1, 3, seed=seed + 3)
        self.s3 = SpiralConv(d1, d2, template.spiral_indices_fine, seed=seed + 4)
        self.fine_head = Linear(d2, 3, seed=seed + 5)
        self.register_buffer(
            "upsample",
            torch.as_tensor(template.upsample_matrix, dtype=torch.get_default_dtype()))

    def forward(self, f_v: torch.Tensor):
        h = torch.relu(self.s1(f_v))
        h = torch.relu(self.s2(h))
        vertices_coarse = self.coarse_head(h) * self.scale
        lifted = torch.einsum("uv,...vc->...uc", self.upsample, h)
        last = torch.relu(self.s3(lifted))
        vertices = self.fine_head(last) * self.scale
        return vertices_coarse, vertices, last


class OrientEncoder(ParamBlock):
    def __init__(self, cfg: ModelConfig, seed: int):
        super().__init__(seed)
        self.c1 = Conv2d(cfg.c_i, cfg.c_o, 3, seed=seed + 1, stride=2, padding=1)
        self.c2 = Conv2d(cfg.c_o, cfg.c_o, 3, seed=seed + 2, stride=2, padding=1)

    def forward(self, f_i: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.c2(torch.relu(self.c1(f_i))))


class RotationHead(ParamBlock):
    def __init__(self, in_width: int, hidden: int, seed: int, jitter: float):
        super().__init__(seed)
        self.mlp = MLP(in_width, (hidden,), 6, seed=seed + 1)
        self.jitter = jitter

    def forward(self, flat: torch.Tensor, strict: bool = False) -> torch.Tensor:
        return rotation_from_6d(self.mlp(flat), strict=strict, jitter=self.jitter)


class HandReconstructor(ParamBlock):
    """One parameter set, two forward paths (single view and fused multi-view)."""

    def __init__(self, template: HandTemplate, cfg: ModelConfig, seed: int,
                 views: int | None = None,
                 fusion: FusionConfig | None = None,
                 identity_fusion_init: bool = False,
                 vertex_learned_qkv: bool = False):
        super().__init__(seed)
        cfg.validate()
        self.cfg = cfg
        self.num_joints = template.num_joints
        self.coarse_count = template.coarse_vertex_count
        self.fine_count = template.num_vertices
        self.views = views
        self.fusion_cfg = fusion

        self.encoder = Hourglass(cfg, seed=seed + 10)
        self.shape_enc = ShapeEncoder(cfg, self.num_joints, seed=seed + 20)
        self.lift = Lift(cfg, self.num_joints, self.coarse_count, seed=seed + 30)
        self.decoder = SpiralDecoder(cfg, template, seed=seed + 40)
        self.orient_enc = OrientEncoder(cfg, seed=seed + 50)
        width = cfg.orient_width()
        if cfg.ofe == "attention":
            self.ofe = OrientationEnhance(cfg.c_j, cfg.c_o, self.num_joints,
                                          cfg.attn_width, width, seed=seed + 60)
        elif cfg.ofe == "cat":
            self.ofe = ConcatEnhance(self.num_joints * cfg.c_j, width, width,
                                     seed=seed + 60)
        else:
            self.ofe = None
        self.rot_head = RotationHead(width, cfg.rot_hidden, seed=seed + 70,
                                     jitter=cfg.rotation_jitter)

        if views is not None:
            fusion = fusion or FusionConfig()
            fusion.validate()
            self.fusion_cfg = fusion
            if fusion.image == "concat":
                self.image_fusion = ImageFusion(views, cfg.c_i, seed=seed + 80,
                                                identity_init=identity_fusion_init)
            if fusion.joint == "stats":
                self.joint_fusion = JointStatsFusion(cfg.c_j, seed=seed + 90,
                                                     identity_init=identity_fusion_init)
            elif fusion.joint == "concat":
                self.joint_fusion = JointConcatFusion(views, cfg.c_j, seed=seed + 90)
            if fusion.vertex == "attention":
                self.vertex_fusion = VertexAttentionFusion(
                    cfg.c_v, seed=seed + 100, learned_qkv=vertex_learned_qkv)
            elif fusion.vertex == "concat":
                self.vertex_fusion = VertexConcatFusion(views, cfg.c_v, seed=seed + 100)

    @property
    def is_multiview(self) -> bool:
        return self.views is not None

    # -- branch pieces ------------------------------------------------------

    def _enhance(self, f_j: torch.Tensor, f_o: torch.Tensor,
                 f_o_flat: torch.Tensor) -> torch.Tensor:
        if self.cfg.ofe == "attention":
            tokens = f_o.flatten(-2).transpose(-1, -2)  # (B, G*G, C_o)
            return self.ofe(f_j, tokens)
        if self.cfg.ofe == "cat":
            return self.ofe(f_j.flatten(-2), f_o_flat)
        return f_o_flat

    def _shape_orient(self, f_i, f_j, joints2d, f_v, strict_rotation=False):
        vertices_coarse, vertices, last = self.decoder(f_v)
        f_o = self.orient_enc(f_i)
        f_o_flat = f_o.flatten(-3)
        f_o_hat = self._enhance(f_j, f_o, f_o_flat)
        rotation = self.rot_head(f_o_hat, strict=strict_rotation)
        return vertices_coarse, vertices, last, f_o, f_o_flat, f_o_hat, rotation

    # -- forward paths ------------------------------------------------------

    def forward_single(self, image: torch.Tensor, strict_rotation: bool = False
                       ) -> tuple[FeatureBundle, ReconOutput]:
        """image: (B, C_in, H, W)."""
        f_i = self.encoder(image)
        f_j, joints2d, logits, probs = self.shape_enc(f_i)
        f_v = self.lift(f_j, joints2d)
        (vertices_coarse, vertices, last, f_o, f_o_flat, f_o_hat,
         rotation) = self._shape_orient(f_i, f_j, joints2d, f_v, strict_rotation)
        bundle = FeatureBundle(
            f_i=f_i, heatmap_logits=logits, heatmaps=probs, f_j=f_j,
            joints2d=joints2d, f_v=f_v, f_o=f_o, f_o_flat=f_o_flat,
            f_o_hat=f_o_hat, f_v_decoder_last=last)
        output = ReconOutput(vertices_canonical=vertices,
                             vertices_coarse=vertices_coarse,
                             joints2d=joints2d, rotation=rotation)
        return bundle, output

    def forward_multi(self, images: torch.Tensor, target_view,
                      strict_rotation: bool = False
                      ) -> tuple[FeatureBundle, FeatureBundle, ReconOutput]:
        """images: (B, N, C_in, H, W); target_view: int or (B,) tensor.

        Views are presented to order-sensitive fusion with the target view
        first. Returns (per-view bundle in rolled order, fused bundle, output).
        """
        if not self.is_multiview:
            raise RuntimeError("model was built without fusion modules")
        b, n = images.shape[:2]
        tv = torch.as_tensor(target_view, dtype=torch.long)
        if tv.dim() == 0:
            tv = tv.expand(b)
        order = (tv.unsqueeze(1) + torch.arange(n)) % n  # (B, N), target first
        rolled = images[torch.arange(b).unsqueeze(1), order]

        flat = rolled.reshape(b * n, *images.shape[2:])
        f_i_flat = self.encoder(flat)
        f_j_flat, j2d_flat, logits_flat, probs_flat = self.shape_enc(f_i_flat)
        f_v_flat = self.lift(f_j_flat, j2d_flat)

        f_i_all = f_i_flat.reshape(b, n, *f_i_flat.shape[1:])
        f_j_all = f_j_flat.reshape(b, n, *f_j_flat.shape[1:])
        j2d_all = j2d_flat.reshape(b, n, *j2d_flat.shape[1:])
        f_v_all = f_v_flat.reshape(b, n, *f_v_flat.shape[1:])

        fusion = self.fusion_cfg
        f_i_fused = (self.image_fusion(f_i_all) if fusion.image == "concat"
                     else f_i_all[:, 0])
        if fusion.joint == "stats" or fusion.joint == "concat":
            f_j_fused = self.joint_fusion(f_j_all)
        else:
            f_j_fused = f_j_all[:, 0]
        if fusion.vertex == "attention":
            f_v_fused, fusion_weights = self.vertex_fusion(f_v_all)
        elif fusion.vertex == "concat":
            f_v_fused = self.vertex_fusion(f_v_all)
            fusion_weights = None
        else:
            f_v_fused = vertex_pool_fusion(f_v_all)
            fusion_weights = None

        (vertices_coarse, vertices, last, f_o, f_o_flat, f_o_hat,
         rotation) = self._shape_orient(f_i_fused, f_j_fused, j2d_all[:, 0],
                                        f_v_fused, strict_rotation)

        per_view = FeatureBundle(
            f_i=f_i_all,
            heatmap_logits=logits_flat.reshape(b, n, *logits_flat.shape[1:]),
            heatmaps=probs_flat.reshape(b, n, *probs_flat.shape[1:]),
            f_j=f_j_all, joints2d=j2d_all, f_v=f_v_all,
            f_o=f_o, f_o_flat=f_o_flat, f_o_hat=f_o_hat,
            f_v_decoder_last=last, joints2d_all=j2d_all, view_order=order)
        fused = FeatureBundle(
            f_i=f_i_fused, heatmap_logits=logits_flat.reshape(b, n, *logits_flat.shape[1:])[:, 0],
            heatmaps=probs_flat.reshape(b, n, *probs_flat.shape[1:])[:, 0],
            f_j=f_j_fused, joints2d=j2d_all[:, 0], f_v=f_v_fused,
            f_o=f_o, f_o_flat=f_o_flat, f_o_hat=f_o_hat,
            f_v_decoder_last=last, joints2d_all=j2d_all, view_order=order,
            fusion_weights=fusion_weights)
        output = ReconOutput(vertices_canonical=vertices,
                             vertices_coarse=vertices_coarse,
                             joints2d=j2d_all[:, 0], rotation=rotation)
        return per_view, fused, output
