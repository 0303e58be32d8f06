"""Synthetic multi-view occluded-hand samples.

Each sample renders one posed hand from N cameras into 2-channel images
(soft silhouette + depth proxy), with convex-polygon occluders covering a
controlled fraction of the hand in the designated target view and at least
one other view kept clear. Datasets persist through the binary tensor
container as ``<split>/manifest.json`` + ``<split>/data.bin``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import hand_model
from .container import read_container, write_container
from .hand_model import HandTemplate, forward_kinematics, sample_pose

DATASET_VERSION = "1"


class RenderError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass
class CameraRig:
    """Per-view world-to-camera rotations plus shared pinhole intrinsics.

    Cameras sit on a sphere: a point p projects as
    ``focal * (R p)_{xy} / ((R p)_z + distance) + principal``.
    """

    rotations: np.ndarray      # (N, 3, 3)
    focal: float               # pixels
    principal: np.ndarray      # (2,) pixels
    image_size: int
    distance: float            # mm, camera offset along +z
    depth_range: float         # mm, half-extent used by the depth channel

    @property
    def num_views(self) -> int:
        return self.rotations.shape[0]


@dataclass
class MultiViewSample:
    images: np.ndarray                    # (N, 2, H, W) float32 in [0, 1]
    cam: CameraRig
    gt_vertices_canonical: np.ndarray     # (V, 3) mm
    gt_joints3d_canonical: np.ndarray     # (J, 3) mm
    gt_rotation_per_view: np.ndarray      # (N, 3, 3)
    gt_joints2d_per_view: np.ndarray      # (N, J, 2) in [0, 1]
    occlusion_fraction_per_view: np.ndarray  # (N,)
    target_view: int


@dataclass
class GenConfig:
    views: int = 4
    image_size: int = 64
    occ_target_min: float = 0.5
    occ_target_max: float = 0.8
    occ_other_max: float = 0.3
    clear_view_max: float = 0.1
    noise_sigma: float = 0.02
    scale_range: tuple = (0.8, 1.2)
    supersample: int = 4
    max_retries: int = 40
    joint_margin: float = 0.02

    def validate(self) -> None:
        if self.views < 1:
            raise ValueError("views must be >= 1")
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if not (0.0 <= self.occ_target_min <= self.occ_target_max <= 1.0):
            raise ValueError("bad target occlusion range")


# ---------------------------------------------------------------------------
# camera
# ---------------------------------------------------------------------------

def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def make_rig(rng: np.random.Generator, views: int, image_size: int,
             subject_radius: float) -> CameraRig:
    """Cameras on a sphere sized so the subject spans ~0.8 of the frame."""
    rotations = np.empty((views, 3, 3))
    for k in range(views):
        roll = rng.uniform(-np.pi, np.pi)
        cr, sr = np.cos(roll), np.sin(roll)
        in_plane = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
        rotations[k] = in_plane @ random_rotation(rng)
    distance = 3.5 * subject_radius
    return CameraRig(
        rotations=rotations,
        focal=1.05 * image_size,
        principal=np.array([image_size / 2.0, image_size / 2.0]),
        image_size=image_size,
        distance=distance,
        depth_range=1.25 * subject_radius,
    )


def project_points(points: np.ndarray, rotation: np.ndarray, rig: CameraRig) -> np.ndarray:
    """Pinhole projection of canonical-frame points into pixel coordinates."""
    cam = points @ rotation.T
    z = cam[:, 2] + rig.distance
    uv = rig.focal * cam[:, :2] / z[:, None] + rig.principal
    return uv


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def _rasterize(verts: np.ndarray, faces: np.ndarray, rotation: np.ndarray,
               rig: CameraRig, supersample: int) -> tuple[np.ndarray, np.ndarray]:
    """Coverage in [0,1] per pixel and the per-pixel depth-proxy channel."""
    s, ss = rig.image_size, supersample
    n = s * ss
    cam = verts @ rotation.T
    z = cam[:, 2] + rig.distance
    uv = (rig.focal * cam[:, :2] / z[:, None] + rig.principal) * ss  # subpixel units

    if uv[:, 0].max() < 0 or uv[:, 0].min() > n or uv[:, 1].max() < 0 or uv[:, 1].min() > n:
        raise RenderError("projected hand lies fully outside the image")

    zbuf = np.full((n, n), np.inf)
    for f in faces:
        tri = uv[f]  # (3, 2), subpixel coords
        tz = z[f]
        x0, y0 = np.floor(tri.min(axis=0) - 0.5).astype(int)
        x1, y1 = np.ceil(tri.max(axis=0) + 0.5).astype(int)
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, n), min(y1, n)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1) + 0.5
        px, py = np.meshgrid(xs, ys)
        a, b, c = tri
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-12:
            continue
        w1 = ((px - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (py - a[1])) / det
        w2 = ((b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])) / det
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        depth = w0 * tz[0] + w1 * tz[1] + w2 * tz[2]
        block = zbuf[y0:y1, x0:x1]
        np.minimum(block, np.where(inside, depth, np.inf), out=block)

    covered = np.isfinite(zbuf)
    coverage = covered.reshape(s, ss, s, ss).mean(axis=(1, 3))
    near = rig.distance - rig.depth_range
    far = rig.distance + rig.depth_range
    dprox = np.where(covered, np.clip((far - zbuf) / (far - near), 0.0, 1.0), 0.0)
    depth_chan = dprox.reshape(s, ss, s, ss).mean(axis=(1, 3))
    return coverage, depth_chan


def polygon_mask(polygon: np.ndarray, image_size: int) -> np.ndarray:
    """Boolean mask of pixel centers inside a convex polygon (pixel coords)."""
    hull = _convex_order(polygon)
    k = hull.shape[0]
    if k < 3:
        return np.zeros((image_size, image_size), dtype=bool)
    xs = np.arange(image_size) + 0.5
    px, py = np.meshgrid(xs, xs)
    mask = np.ones((image_size, image_size), dtype=bool)
    for i in range(k):
        a = hull[i]
        b = hull[(i + 1) % k]
        mask &= (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]) >= 0
    return mask


def _convex_order(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull of a small point set (monotone chain)."""
    pts = sorted(map(tuple, np.asarray(points, dtype=np.float64)))
    if len(pts) <= 2:
        return np.asarray(pts)

    def half(seq):
        out: list[tuple] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.asarray(lower[:-1] + upper[:-1])


def render_view(template: HandTemplate, pose: hand_model.HandPose,
                rotation: np.ndarray, rig: CameraRig,
                occluders: list[np.ndarray],
                supersample: int = 4) -> tuple[np.ndarray, np.ndarray, float]:
    """Render one view: (2, H, W) image, normalized 2D joints, occlusion fraction."""
    verts, joints = forward_kinematics(template, pose)
    return render_mesh_view(verts, template.faces, joints, rotation, rig,
                            occluders, supersample)


def render_mesh_view(verts: np.ndarray, faces: np.ndarray, joints: np.ndarray,
                     rotation: np.ndarray, rig: CameraRig,
                     occluders: list[np.ndarray],
                     supersample: int = 4) -> tuple[np.ndarray, np.ndarray, float]:
    s = rig.image_size
    for poly in occluders:
        if poly.min() < -1e-9 or poly.max() > s + 1e-9:
            raise RenderError("occluder polygon outside image bounds")
    coverage, depth = _rasterize(verts, faces, rotation, rig, supersample)
    hand_mask = coverage >= 0.5
    occ_mask = np.zeros((s, s), dtype=bool)
    for poly in occluders:
        occ_mask |= polygon_mask(poly, s)
    total = int(hand_mask.sum())
    if total == 0:
        fraction = 0.0
    else:
        fraction = float((hand_mask & occ_mask).sum()) / total
    keep = ~occ_mask
    image = np.stack([coverage * keep, depth * keep]).astype(np.float32)
    joints2d = project_points(joints, rotation, rig) / s
    return image, joints2d, fraction


def occlusion_fraction_of(hand_mask: np.ndarray, occluders: list[np.ndarray],
                          image_size: int) -> float:
    total = int(hand_mask.sum())
    if total == 0:
        return 0.0
    occ = np.zeros_like(hand_mask)
    for poly in occluders:
        occ |= polygon_mask(poly, image_size)
    return float((hand_mask & occ).sum()) / total


# ---------------------------------------------------------------------------
# sample generation
# ---------------------------------------------------------------------------

def _random_convex_polygon(rng: np.random.Generator, center: np.ndarray,
                           radius: float, image_size: int) -> np.ndarray:
    k = int(rng.integers(3, 7))
    ang = np.sort(rng.uniform(0.0, 2 * np.pi, size=k))
    rad = rng.uniform(0.6, 1.0, size=k) * radius
    pts = center + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    return np.clip(pts, 0.0, image_size)


def _fit_target_occluder(rng: np.random.Generator, hand_mask: np.ndarray,
                         cfg: GenConfig) -> tuple[list[np.ndarray], float] | None:
    """Grow/shrink one convex occluder until the hand-cover fraction lands in
    the configured target range."""
    s = cfg.image_size
    lo, hi = cfg.occ_target_min, cfg.occ_target_max
    span = hi - lo
    aim = rng.uniform(lo + 0.1 * span, hi - 0.1 * span) if span > 0 else lo
    ys, xs = np.nonzero(hand_mask)
    if len(xs) == 0:
        return None
    pick = int(rng.integers(0, len(xs)))
    center = np.array([xs[pick] + 0.5, ys[pick] + 0.5])
    area = float(hand_mask.sum())
    radius = np.sqrt(max(aim, 0.05) * area / np.pi)
    shape_seed = rng.integers(0, 2**31)
    best = None
    for it in range(30):
        poly = _random_convex_polygon(
            np.random.default_rng(int(shape_seed)), center, radius, s)
        frac = occlusion_fraction_of(hand_mask, [poly], s)
        if lo <= frac <= hi:
            best = ([poly], frac)
            if abs(frac - aim) <= 0.03 or it >= 15:
                return best
        if frac < 1e-4:
            radius *= 1.8
        else:
            radius *= float(np.clip((aim / frac) ** 0.6, 0.6, 1.7))
        radius = min(radius, 2.0 * s)
        if it == 10 and best is None:
            # recenter on the silhouette centroid when an edge anchor stalls
            center = np.array([xs.mean() + 0.5, ys.mean() + 0.5])
    return best


def generate_sample(template: HandTemplate, rng_seed: int, cfg: GenConfig) -> MultiViewSample:
    """Deterministically generate one multi-view sample from a seed."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    last_error = "retries exhausted"
    for _ in range(cfg.max_retries):
        pose = sample_pose(template, rng, cfg.scale_range)
        verts, joints = forward_kinematics(template, pose)
        radius = float(np.linalg.norm(verts, axis=1).max())
        rig = make_rig(rng, cfg.views, cfg.image_size, radius)
        target_view = int(rng.integers(0, cfg.views))
        clear_choices = [k for k in range(cfg.views) if k != target_view]
        clear_view = (int(rng.choice(clear_choices)) if clear_choices else -1)

        joints2d = np.stack([
            project_points(joints, rig.rotations[k], rig) / cfg.image_size
            for k in range(cfg.views)])
        m = cfg.joint_margin
        if joints2d.min() < m or joints2d.max() > 1.0 - m:
            last_error = "projected joints too close to the image border"
            continue

        try:
            occluders: list[list[np.ndarray]] = []
            fractions = np.zeros(cfg.views)
            images = np.zeros((cfg.views, 2, cfg.image_size, cfg.image_size),
                              dtype=np.float32)
            ok = True
            for k in range(cfg.views):
                coverage, depth = _rasterize(verts, template.faces,
                                             rig.rotations[k], rig, cfg.supersample)
                hand_mask = coverage >= 0.5
                if k == target_view:
                    fit = _fit_target_occluder(rng, hand_mask, cfg)
                    if fit is None:
                        ok = False
                        last_error = "could not reach the target occlusion range"
                        break
                    polys, frac = fit
                elif k == clear_view:
                    polys, frac = [], 0.0
                else:
                    polys = []
                    n_occ = int(rng.integers(0, 3))
                    ext = np.sqrt(hand_mask.sum() / np.pi)
                    for _ in range(n_occ):
                        ys, xs = np.nonzero(hand_mask)
                        if len(xs) == 0:
                            break
                        pick = int(rng.integers(0, len(xs)))
                        center = np.array([xs[pick] + 0.5, ys[pick] + 0.5])
                        polys.append(_random_convex_polygon(
                            rng, center, rng.uniform(0.25, 0.55) * ext,
                            cfg.image_size))
                    frac = occlusion_fraction_of(hand_mask, polys, cfg.image_size)
                    while polys and frac > cfg.occ_other_max:
                        polys.pop()
                        frac = occlusion_fraction_of(hand_mask, polys, cfg.image_size)
                occ = np.zeros((cfg.image_size, cfg.image_size), dtype=bool)
                for poly in polys:
                    occ |= polygon_mask(poly, cfg.image_size)
                keep = ~occ
                images[k, 0] = coverage * keep
                images[k, 1] = depth * keep
                fractions[k] = frac
                occluders.append(polys)
            if not ok:
                continue
        except RenderError as e:
            last_error = str(e)
            continue

        noise = rng.normal(0.0, cfg.noise_sigma,
                           size=(cfg.views, cfg.image_size, cfg.image_size))
        images[:, 0] = np.clip(images[:, 0] + noise.astype(np.float32), 0.0, 1.0)

        return MultiViewSample(
            images=images,
            cam=rig,
            gt_vertices_canonical=verts,
            gt_joints3d_canonical=joints,
            gt_rotation_per_view=rig.rotations,
            gt_joints2d_per_view=joints2d,
            occlusion_fraction_per_view=fractions,
            target_view=target_view,
        )
    raise GenerationError(f"sample generation failed after {cfg.max_retries} retries: {last_error}")


def recompute_occlusion_fraction(template: HandTemplate, sample: MultiViewSample,
                                 view: int, supersample: int = 4) -> float:
    """Re-derive a view's occlusion fraction from its stored image and the
    clean re-render (used to audit stored fractions)."""
    coverage, _ = _rasterize(sample.gt_vertices_canonical, template.faces,
                             sample.gt_rotation_per_view[view], sample.cam, supersample)
    hand_mask = coverage >= 0.5
    total = int(hand_mask.sum())
    if total == 0:
        return 0.0
    occluded = hand_mask & (sample.images[view, 0] < 0.3)
    return float(occluded.sum()) / total


# ---------------------------------------------------------------------------
# dataset persistence
# ---------------------------------------------------------------------------

def write_dataset(samples: list[MultiViewSample], path: str, split: str = "train",
                  extra_meta: dict | None = None) -> None:
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    tensors = {
        "images": np.stack([s.images for s in samples]).astype(np.float32),
        "rotations": np.stack([s.gt_rotation_per_view for s in samples]),
        "gt_vertices_canonical": np.stack([s.gt_vertices_canonical for s in samples]),
        "gt_joints3d_canonical": np.stack([s.gt_joints3d_canonical for s in samples]),
        "gt_joints2d_per_view": np.stack([s.gt_joints2d_per_view for s in samples]),
        "occlusion_fraction_per_view": np.stack(
            [s.occlusion_fraction_per_view for s in samples]),
        "target_view": np.array([s.target_view for s in samples], dtype=np.int64),
        "cam_focal": np.array([s.cam.focal for s in samples]),
        "cam_distance": np.array([s.cam.distance for s in samples]),
        "cam_depth_range": np.array([s.cam.depth_range for s in samples]),
    }
    meta = {
        "version": DATASET_VERSION,
        "kind": "multiview_hand_dataset",
        "split": split,
        "sample_count": len(samples),
        "image_size": samples[0].cam.image_size,
    }
    if extra_meta:
        meta.update(extra_meta)
    write_container(path, tensors, meta)


def read_dataset(path: str) -> tuple[list[MultiViewSample], dict]:
    tensors, meta = read_container(path)
    if meta.get("kind") != "multiview_hand_dataset":
        raise ValueError(f"{path} is not a dataset container")
    n = int(meta["sample_count"])
    image_size = int(meta["image_size"])
    samples = []
    for i in range(n):
        rig = CameraRig(
            rotations=tensors["rotations"][i],
            focal=float(tensors["cam_focal"][i]),
            principal=np.array([image_size / 2.0, image_size / 2.0]),
            image_size=image_size,
            distance=float(tensors["cam_distance"][i]),
            depth_range=float(tensors["cam_depth_range"][i]),
        )
        samples.append(MultiViewSample(
            images=tensors["images"][i],
            cam=rig,
            gt_vertices_canonical=tensors["gt_vertices_canonical"][i],
            gt_joints3d_canonical=tensors["gt_joints3d_canonical"][i],
            gt_rotation_per_view=tensors["rotations"][i],
            gt_joints2d_per_view=tensors["gt_joints2d_per_view"][i],
            occlusion_fraction_per_view=tensors["occlusion_fraction_per_view"][i],
            target_view=int(tensors["target_view"][i]),
        ))
    return samples, meta


def generation_meta(cfg: GenConfig, template_args: tuple[int, int, int],
                    seed: int) -> dict:
    return {
        "gen_config": dataclasses.asdict(cfg),
        "template": {
            "coarse_count": template_args[0],
            "fine_count": template_args[1],
            "spiral_length": template_args[2],
        },
        "seed": seed,
    }
