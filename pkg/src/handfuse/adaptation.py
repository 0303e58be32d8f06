"""Training-time transfer of multi-view knowledge into the single-view model.

The multi-view reconstructor acts as a frozen teacher: its fused shape and
orientation features become regression targets for the single-view student.
The orientation-enhancement block mixes joint-level evidence into the
orientation feature through self- and cross-attention so the student has a
pathway capable of mimicking the teacher's fused orientation feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .diffcore import Linear, MLP, ParamBlock, scaled_dot_attention

# distillation placement variants: which (student, teacher) feature pairs are
# constrained, and which balance weight (shape beta / orientation gamma)
# applies to each
DISTILL_VARIANTS = {
    "i": (("f_v_decoder_last", "shape"),),
    "ii": (("f_v", "shape"),),
    "iii": (("f_v", "shape"), ("f_j", "orient")),
    "iv": (("f_v", "shape"), ("f_o_flat", "orient")),
    "v": (("f_v", "shape"), ("f_o_hat", "orient")),
}


@dataclass
class DistillTargets:
    """Teacher features, detached; gradients can never reach the teacher."""

    f_v: torch.Tensor
    f_o_hat: torch.Tensor
    f_j: torch.Tensor | None = None
    f_o_flat: torch.Tensor | None = None
    f_v_decoder_last: torch.Tensor | None = None

    def get(self, name: str) -> torch.Tensor:
        value = getattr(self, name)
        if value is None:
            raise KeyError(f"teacher target {name!r} was not captured")
        return value


def select_distill_targets(variant: str) -> tuple[tuple[str, str], ...]:
    """Feature wiring for a named distillation placement variant."""
    if variant not in DISTILL_VARIANTS:
        raise ValueError(
            f"unknown distillation variant {variant!r}; expected one of "
            f"{sorted(DISTILL_VARIANTS)}")
    return DISTILL_VARIANTS[variant]


class OrientationEnhance(ParamBlock):
    """Self-attention on joint and orientation tokens, then cross-attention
    with the joint tokens as queries; the result is projected to the rotation
    regressor's input width."""

    def __init__(self, joint_channels: int, orient_channels: int,
                 num_joints: int, attn_width: int, out_width: int, seed: int):
        super().__init__(seed)
        self.proj_j = Linear(joint_channels, attn_width, seed=seed + 1)
        self.proj_o = Linear(orient_channels, attn_width, seed=seed + 2)
        self.out = Linear(num_joints * attn_width, out_width, seed=seed + 3)

    def forward(self, f_j: torch.Tensor, f_o_tokens: torch.Tensor) -> torch.Tensor:
        """f_j: (..., J, C_j); f_o_tokens: (..., T, C_o) -> (..., out_width)."""
        if f_j.shape[-2] == 0 or f_o_tokens.shape[-2] == 0:
            raise ValueError("token count must be nonzero")
        tj = self.proj_j(f_j)
        to = self.proj_o(f_o_tokens)
        h_j = scaled_dot_attention(tj, tj, tj)
        h_o = scaled_dot_attention(to, to, to)
        enhanced = scaled_dot_attention(h_j, h_o, h_o)  # (..., J, attn_width)
        return self.out(enhanced.reshape(*enhanced.shape[:-2], -1))


class ConcatEnhance(ParamBlock):
    """Ablation variant: concatenate flattened joint and orientation features
    and project to the regressor width."""

    def __init__(self, joint_width: int, orient_width: int, out_width: int, seed: int):
        super().__init__(seed)
        self.out = MLP(joint_width + orient_width, (), out_width, seed=seed + 1)

    def forward(self, f_j_flat: torch.Tensor, f_o_flat: torch.Tensor) -> torch.Tensor:
        return self.out(torch.cat([f_j_flat, f_o_flat], dim=-1))


def _feature_norm(student: torch.Tensor, teacher: torch.Tensor,
                  mode: str = "l2") -> torch.Tensor:
    if student.shape != teacher.shape:
        raise ValueError(
            f"feature shapes differ: {tuple(student.shape)} vs {tuple(teacher.shape)}")
    diff = student - teacher
    if mode == "l2":
        return torch.linalg.vector_norm(diff)
    if mode == "mse":
        return (diff ** 2).mean()
    raise ValueError(f"unknown distill loss mode {mode!r}")


def shape_enhance_loss(f_v_student: torch.Tensor, f_v_teacher: torch.Tensor,
                       mode: str = "l2") -> torch.Tensor:
    """Euclidean norm of the elementwise difference over the whole tensor."""
    return _feature_norm(f_v_student, f_v_teacher, mode)


def orientation_enhance_loss(f_o_student: torch.Tensor, f_o_teacher: torch.Tensor,
                             mode: str = "l2") -> torch.Tensor:
    """Same contract as shape_enhance_loss, applied to orientation features."""
    return _feature_norm(f_o_student, f_o_teacher, mode)


def batch_feature_loss(student: torch.Tensor, teacher: torch.Tensor,
                       mode: str = "l2") -> torch.Tensor:
    """Per-sample whole-tensor norms, averaged over the leading batch dim."""
    if student.shape != teacher.shape:
        raise ValueError(
            f"feature shapes differ: {tuple(student.shape)} vs {tuple(teacher.shape)}")
    diff = (student - teacher).reshape(student.shape[0], -1)
    if mode == "l2":
        return torch.linalg.vector_norm(diff, dim=-1).mean()
    if mode == "mse":
        return (diff ** 2).mean()
    raise ValueError(f"unknown distill loss mode {mode!r}")
