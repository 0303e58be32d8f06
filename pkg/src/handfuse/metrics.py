"""Evaluation stack: Procrustes alignment, position errors, PCK-AUC,
F-scores, and occlusion-split reporting."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class EvalConfig:
    occlusion_threshold: float = 0.3   # target-view fraction >= this -> "occluded"
    auc_max_mm: float = 50.0
    auc_steps: int = 100
    f_thresholds: tuple = (5.0, 15.0)
    pa_scale: bool = True              # similarity (True) vs rigid-only PA


@dataclass
class BucketMetrics:
    jpe: float = float("nan")
    vpe: float = float("nan")
    pa_jpe: float = float("nan")
    pa_vpe: float = float("nan")
    jauc: float = float("nan")
    vauc: float = float("nan")
    pa_jauc: float = float("nan")
    pa_vauc: float = float("nan")
    f5: float = float("nan")
    f15: float = float("nan")
    pa_f5: float = float("nan")
    pa_f15: float = float("nan")
    sample_count: int = 0


@dataclass
class MetricReport:
    overall: BucketMetrics
    occluded: BucketMetrics
    non_occluded: BucketMetrics
    occlusion_threshold: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def procrustes_transform(pred: np.ndarray, gt: np.ndarray,
                         allow_scale: bool = True
                         ) -> tuple[float, np.ndarray, np.ndarray, bool]:
    """Least-squares similarity transform (s, R, t) minimizing
    sum ||s R p + t - g||^2, with the reflection corrected to a proper
    rotation. Returns (s, R, t, degenerate_flag)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[0] < 3:
        raise ValueError("need matching point sets with at least 3 points")
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    x = pred - mu_p
    y = gt - mu_g
    var_p = (x ** 2).sum()
    if var_p < 1e-12:
        raise ValueError("prediction points are all coincident")
    cov = x.T @ y  # 3x3
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    corr = np.diag([1.0, 1.0, sign])
    rot = vt.T @ corr @ u.T
    degenerate = np.linalg.matrix_rank(cov, tol=1e-9 * max(d[0], 1.0)) < 2
    if allow_scale:
        scale = float((d * np.diag(corr)).sum() / var_p)
    else:
        scale = 1.0
    t = mu_g - scale * rot @ mu_p
    return scale, rot, t, bool(degenerate)


def procrustes_align(pred: np.ndarray, gt: np.ndarray,
                     allow_scale: bool = True) -> np.ndarray:
    """Prediction after the optimal similarity (or rigid) alignment onto gt."""
    s, rot, t, _ = procrustes_transform(pred, gt, allow_scale)
    return s * (np.asarray(pred, dtype=np.float64) @ rot.T) + t


def position_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-point Euclidean distance, mm."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def pck_auc(errors, max_threshold: float = 50.0, steps: int = 100) -> float:
    """Area under the fraction-below-threshold curve, normalized to [0, 1]."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("empty error list")
    thresholds = np.linspace(0.0, max_threshold, steps)
    pck = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    return float(np.trapezoid(pck, thresholds) / max_threshold)


def f_score(pred_vertices: np.ndarray, gt_vertices: np.ndarray,
            threshold: float) -> float:
    """Harmonic mean of vertex precision/recall at a distance threshold, mm."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    pred = np.asarray(pred_vertices, dtype=np.float64)
    gt = np.asarray(gt_vertices, dtype=np.float64)
    if pred.size == 0 or gt.size == 0:
        raise ValueError("empty vertex set")
    dists = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=-1)
    precision = float((dists.min(axis=1) <= threshold).mean())
    recall = float((dists.min(axis=0) <= threshold).mean())
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# dataset-level evaluation
# ---------------------------------------------------------------------------

def _predict_world(model, sample, joint_regressor: np.ndarray):
    """Run the model on one sample; world-frame = predicted rotation applied
    to predicted canonical geometry."""
    images = torch.as_tensor(sample.images, dtype=torch.float32)
    with torch.no_grad():
        if getattr(model, "is_multiview", False):
            _, _, out = model.forward_multi(images.unsqueeze(0), sample.target_view)
        else:
            _, out = model.forward_single(
                images[sample.target_view].unsqueeze(0))
    verts_c = out.vertices_canonical[0].double().numpy()
    rot = out.rotation[0].double().numpy()
    joints_c = joint_regressor @ verts_c
    return verts_c @ rot.T, joints_c @ rot.T


def evaluate(model, samples, joint_regressor: np.ndarray,
             cfg: EvalConfig | None = None
             ) -> tuple[MetricReport, list[dict]]:
    """Evaluate a reconstructor over samples, split by target-view occlusion.

    Returns the aggregate report plus one row per sample for CSV export.
    """
    cfg = cfg or EvalConfig()
    rows = []
    for idx, sample in enumerate(samples):
        pred_v, pred_j = _predict_world(model, sample, joint_regressor)
        gt_rot = sample.gt_rotation_per_view[sample.target_view]
        gt_v = sample.gt_vertices_canonical @ gt_rot.T
        gt_j = sample.gt_joints3d_canonical @ gt_rot.T
        pa_v = procrustes_align(pred_v, gt_v, cfg.pa_scale)
        pa_j = procrustes_align(pred_j, gt_j, cfg.pa_scale)
        row = {
            "index": idx,
            "occlusion": float(sample.occlusion_fraction_per_view[sample.target_view]),
            "jpe": position_error(pred_j, gt_j),
            "vpe": position_error(pred_v, gt_v),
            "pa_jpe": position_error(pa_j, gt_j),
            "pa_vpe": position_error(pa_v, gt_v),
            "f5": f_score(pred_v, gt_v, cfg.f_thresholds[0]),
            "f15": f_score(pred_v, gt_v, cfg.f_thresholds[1]),
            "pa_f5": f_score(pa_v, gt_v, cfg.f_thresholds[0]),
            "pa_f15": f_score(pa_v, gt_v, cfg.f_thresholds[1]),
        }
        # alignment can only reduce error: identity is a feasible transform
        assert row["pa_jpe"] <= row["jpe"] + 1e-9, (idx, row["pa_jpe"], row["jpe"])
        assert row["pa_vpe"] <= row["vpe"] + 1e-9, (idx, row["pa_vpe"], row["vpe"])
        row["_joint_errors"] = np.linalg.norm(pred_j - gt_j, axis=-1)
        row["_vertex_errors"] = np.linalg.norm(pred_v - gt_v, axis=-1)
        row["_pa_joint_errors"] = np.linalg.norm(pa_j - gt_j, axis=-1)
        row["_pa_vertex_errors"] = np.linalg.norm(pa_v - gt_v, axis=-1)
        rows.append(row)

    def bucket(selected: list[dict]) -> BucketMetrics:
        if not selected:
            return BucketMetrics(sample_count=0)
        mean = lambda key: float(np.mean([r[key] for r in selected]))
        pooled = lambda key: np.concatenate([r[key] for r in selected])
        return BucketMetrics(
            jpe=mean("jpe"), vpe=mean("vpe"),
            pa_jpe=mean("pa_jpe"), pa_vpe=mean("pa_vpe"),
            jauc=pck_auc(pooled("_joint_errors"), cfg.auc_max_mm, cfg.auc_steps),
            vauc=pck_auc(pooled("_vertex_errors"), cfg.auc_max_mm, cfg.auc_steps),
            pa_jauc=pck_auc(pooled("_pa_joint_errors"), cfg.auc_max_mm, cfg.auc_steps),
            pa_vauc=pck_auc(pooled("_pa_vertex_errors"), cfg.auc_max_mm, cfg.auc_steps),
            f5=mean("f5"), f15=mean("f15"),
            pa_f5=mean("pa_f5"), pa_f15=mean("pa_f15"),
            sample_count=len(selected),
        )

    occluded = [r for r in rows if r["occlusion"] >= cfg.occlusion_threshold]
    clear = [r for r in rows if r["occlusion"] < cfg.occlusion_threshold]
    report = MetricReport(
        overall=bucket(rows),
        occluded=bucket(occluded),
        non_occluded=bucket(clear),
        occlusion_threshold=cfg.occlusion_threshold,
    )
    for r in rows:
        for key in list(r):
            if key.startswith("_"):
                del r[key]
    return report, rows


def pck_curve(errors, max_threshold: float = 50.0, steps: int = 100
              ) -> np.ndarray:
    """(threshold, PCK) pairs for external plotting, shape (steps, 2)."""
    errors = np.asarray(errors, dtype=np.float64)
    thresholds = np.linspace(0.0, max_threshold, steps)
    pck = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    return np.stack([thresholds, pck], axis=1)
