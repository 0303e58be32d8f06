"""Supervision terms for reconstructor training.

All sums are plain sums over elements (no mean reduction inside a term);
batched inputs produce one value per leading batch element and the training
loop averages over the batch. The reconstruction loss is the unweighted sum
of its eight terms; the total adds the two feature-distillation terms scaled
by beta and gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LossWeights:
    beta: float = 1.0
    gamma: float = 1.0

    def validate(self) -> None:
        if not (self.beta >= 0 and self.gamma >= 0):
            raise ValueError("loss weights must be nonnegative and finite")


@dataclass
class LossReport:
    mesh_canonical: torch.Tensor
    joint3d_canonical: torch.Tensor
    mesh_rotated: torch.Tensor
    joint3d_rotated: torch.Tensor
    joint2d: torch.Tensor
    normal: torch.Tensor
    edge_length: torch.Tensor
    rotation: torch.Tensor
    recon: torch.Tensor
    shape_enhance: torch.Tensor | None = None
    orient_enhance: torch.Tensor | None = None
    total: torch.Tensor | None = None
    degenerate_gt_faces: int = 0

    COMPONENTS = ("mesh_canonical", "joint3d_canonical", "mesh_rotated",
                  "joint3d_rotated", "joint2d", "normal", "edge_length",
                  "rotation")

    def scalars(self) -> dict[str, float]:
        out = {}
        for name in (*self.COMPONENTS, "recon", "shape_enhance",
                     "orient_enhance", "total"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value)
        out["degenerate_gt_faces"] = self.degenerate_gt_faces
        return out


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def mesh_l1(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Sum of absolute coordinate differences over (V, 3)."""
    _check_same_shape(pred, gt)
    return (pred - gt).abs().sum(dim=(-1, -2))


def joint3d_l1(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, gt)
    return (pred - gt).abs().sum(dim=(-1, -2))


def joint2d_l1(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, gt)
    return (pred - gt).abs().sum(dim=(-1, -2))


def rotated_losses(pred_vertices: torch.Tensor, pred_joints: torch.Tensor,
                   pred_rot: torch.Tensor, gt_vertices: torch.Tensor,
                   gt_joints: torch.Tensor, gt_rot: torch.Tensor
                   ) -> tuple[torch.Tensor, torch.Tensor]:
    """L1 mesh/joint losses after rotating predictions by the predicted
    orientation and ground truth by the target view's true orientation."""
    pred_v = pred_vertices @ pred_rot.transpose(-1, -2)
    gt_v = gt_vertices @ gt_rot.transpose(-1, -2)
    pred_j = pred_joints @ pred_rot.transpose(-1, -2)
    gt_j = gt_joints @ gt_rot.transpose(-1, -2)
    return mesh_l1(pred_v, gt_v), joint3d_l1(pred_j, gt_j)


def _face_edges(vertices: torch.Tensor, faces: torch.Tensor) -> torch.Tensor:
    """Per-face edge vectors: (..., F, 3 edges, 3)."""
    tri = vertices[..., faces, :]  # (..., F, 3, 3)
    return tri.roll(-1, dims=-2) - tri


def normal_loss(pred_vertices: torch.Tensor, faces: torch.Tensor,
                gt_vertices: torch.Tensor, return_diagnostics: bool = False):
    """Per face, |<unit predicted edge, unit ground-truth face normal>| summed.

    Faces whose ground-truth area vanishes are skipped; their count is the
    diagnostics value.
    """
    faces = torch.as_tensor(faces, dtype=torch.long)
    pe = _face_edges(pred_vertices, faces)
    ge = _face_edges(gt_vertices, faces)
    gn = torch.cross(ge[..., 0, :], ge[..., 1, :], dim=-1)
    gn_norm = torch.linalg.vector_norm(gn, dim=-1, keepdim=True)
    degenerate = gn_norm[..., 0] < 1e-12
    n_hat = gn / gn_norm.clamp_min(1e-12)
    e_hat = pe / torch.linalg.vector_norm(pe, dim=-1, keepdim=True).clamp_min(1e-12)
    dots = (e_hat * n_hat.unsqueeze(-2)).sum(dim=-1).abs()  # (..., F, 3)
    dots = dots * (~degenerate).unsqueeze(-1)
    loss = dots.sum(dim=(-1, -2))
    if return_diagnostics:
        return loss, int(degenerate.sum())
    return loss


def edge_length_loss(pred_vertices: torch.Tensor, faces: torch.Tensor,
                     gt_vertices: torch.Tensor) -> torch.Tensor:
    """Per face, per edge: | |pred edge| - |gt edge| | summed. Edges shared by
    two faces are counted once per face."""
    faces = torch.as_tensor(faces, dtype=torch.long)
    pe = torch.linalg.vector_norm(_face_edges(pred_vertices, faces), dim=-1)
    ge = torch.linalg.vector_norm(_face_edges(gt_vertices, faces), dim=-1)
    return (pe - ge).abs().sum(dim=(-1, -2))


def rotation_loss(pred_rot: torch.Tensor, gt_rot: torch.Tensor) -> torch.Tensor:
    """Frobenius norm of (gt R · pred Rᵀ − I); zero iff the rotations match."""
    rel = gt_rot @ pred_rot.transpose(-1, -2)
    eye = torch.eye(3, dtype=rel.dtype)
    return torch.linalg.matrix_norm(rel - eye, ord="fro")


def recon_loss(pred_vertices: torch.Tensor, pred_joints: torch.Tensor,
               pred_joints2d: torch.Tensor, pred_rot: torch.Tensor,
               gt_vertices: torch.Tensor, gt_joints: torch.Tensor,
               gt_joints2d: torch.Tensor, gt_rot: torch.Tensor,
               faces: torch.Tensor) -> LossReport:
    """The eight-term reconstruction loss.

    2D joints may carry an extra view axis (multi-view training supervises
    every view); the 2D term is then averaged over views to stay comparable
    with single-view training. Batched inputs are averaged over the batch.
    """
    l_m_c = mesh_l1(pred_vertices, gt_vertices)
    l_j_c = joint3d_l1(pred_joints, gt_joints)
    l_m_r, l_j_r = rotated_losses(pred_vertices, pred_joints, pred_rot,
                                  gt_vertices, gt_joints, gt_rot)
    l_2d = joint2d_l1(pred_joints2d, gt_joints2d)
    if l_2d.dim() > l_m_c.dim():
        l_2d = l_2d.mean(dim=-1)
    l_n, degenerate = normal_loss(pred_vertices, faces, gt_vertices,
                                  return_diagnostics=True)
    l_e = edge_length_loss(pred_vertices, faces, gt_vertices)
    l_r = rotation_loss(pred_rot, gt_rot)
    terms = [l_m_c, l_j_c, l_m_r, l_j_r, l_2d, l_n, l_e, l_r]
    terms = [t.mean() for t in terms]
    recon = sum(terms)
    return LossReport(*terms, recon=recon, degenerate_gt_faces=degenerate)


def total_loss(report: LossReport, shape_enhance: torch.Tensor,
               orient_enhance: torch.Tensor, weights: LossWeights) -> LossReport:
    """Total = recon + beta * shape distillation + gamma * orientation distillation."""
    weights.validate()
    report.shape_enhance = torch.as_tensor(shape_enhance)
    report.orient_enhance = torch.as_tensor(orient_enhance)
    report.total = (report.recon + weights.beta * report.shape_enhance
                    + weights.gamma * report.orient_enhance)
    return report
