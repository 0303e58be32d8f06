"""Procedural low-poly articulated right hand.

A 21-joint skeleton (wrist + 4 joints per finger, MediaPipe ordering) drives a
coarse triangle mesh built from a palm grid plus one quad strip per finger.
The fine mesh is produced by repeated longest-edge midpoint subdivision of the
coarse mesh, which also yields the row-stochastic coarse-to-fine upsampling
matrix. Vertices are linear-blend skinned; joints are regressed from the mesh
by a row-stochastic linear regressor. Units are millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container

NUM_JOINTS = 21

# parent index per joint; fingers are chains [MCP, PIP, DIP, TIP] off the wrist
SKELETON_PARENTS = np.array(
    [-1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19],
    dtype=np.int64)

# maximum local rotation angle per joint, radians (0 at the root: the global
# orientation is handled outside the pose)
JOINT_ANGLE_LIMITS = np.array(
    [0.0]
    + [1.0, 1.2, 1.0, 0.5]          # thumb
    + [1.4, 1.6, 1.2, 0.5] * 4,     # index .. pinky
    dtype=np.float64)

# 2D layout of the skeleton, mm; palm spans x in [-40, 40], y in [-15, 90]
_FINGER_BASES_X = {"index": -30.0, "middle": -10.0, "ring": 10.0, "pinky": 30.0}
_FINGER_SEGMENTS = {
    "thumb": (30.0, 22.0, 18.0),
    "index": (32.0, 22.0, 18.0),
    "middle": (36.0, 25.0, 20.0),
    "ring": (33.0, 23.0, 18.0),
    "pinky": (26.0, 18.0, 14.0),
}
_FINGER_ORDER = ("thumb", "index", "middle", "ring", "pinky")
_PALM_X = (-40.0, 40.0)
_PALM_Y = (-15.0, 90.0)
_THUMB_DIR = np.array([-0.66, 0.75]) / np.hypot(0.66, 0.75)


class TemplateBuildError(ValueError):
    """Requested vertex counts cannot produce a manifold hand mesh."""


@dataclass(frozen=True)
class HandTemplate:
    """Canonical hand mesh, skeleton, and the operators tying them together."""

    vertices_canonical: np.ndarray   # (V, 3) mm
    faces: np.ndarray                # (F, 3) int
    coarse_vertex_count: int
    vertices_coarse: np.ndarray      # (V_c, 3) mm
    faces_coarse: np.ndarray         # (F_c, 3) int
    upsample_matrix: np.ndarray      # (V, V_c), rows sum to 1
    joint_regressor: np.ndarray      # (J, V), rows sum to 1
    skeleton_parents: np.ndarray     # (J,)
    rest_joints: np.ndarray          # (J, 3) mm
    skinning_weights: np.ndarray     # (V, J), rows sum to 1
    spiral_indices: np.ndarray       # (V_c, S)
    spiral_indices_fine: np.ndarray  # (V, S)
    joint_angle_limits: np.ndarray   # (J,) radians

    @property
    def num_vertices(self) -> int:
        return self.vertices_canonical.shape[0]

    @property
    def num_joints(self) -> int:
        return self.rest_joints.shape[0]

    @property
    def spiral_length(self) -> int:
        return self.spiral_indices.shape[1]

    def radius(self) -> float:
        """Max distance of any canonical vertex from the origin, mm."""
        return float(np.linalg.norm(self.vertices_canonical, axis=1).max())


@dataclass
class HandPose:
    """Local joint rotations (root entry must stay identity) plus a uniform scale."""

    joint_rotations: np.ndarray  # (J, 3, 3)
    shape_scale: float = 1.0

    @staticmethod
    def rest(num_joints: int = NUM_JOINTS) -> "HandPose":
        return HandPose(np.tile(np.eye(3), (num_joints, 1, 1)), 1.0)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle(rot: np.ndarray) -> float:
    """Rotation angle of a proper rotation matrix, radians."""
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def validate_pose(template: HandTemplate, pose: HandPose, tol: float = 1e-6) -> None:
    rots = np.asarray(pose.joint_rotations, dtype=np.float64)
    if rots.shape != (template.num_joints, 3, 3):
        raise ValueError(f"joint_rotations must be ({template.num_joints}, 3, 3)")
    if not (0.8 - tol <= pose.shape_scale <= 1.2 + tol):
        raise ValueError(f"shape_scale {pose.shape_scale} outside [0.8, 1.2]")
    for j in range(template.num_joints):
        r = rots[j]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-5 or np.linalg.det(r) < 0:
            raise ValueError(f"joint {j} rotation is not a proper rotation")
        if rotation_angle(r) > template.joint_angle_limits[j] + 1e-6:
            raise ValueError(
                f"joint {j} rotation angle {rotation_angle(r):.4f} exceeds "
                f"limit {template.joint_angle_limits[j]:.4f}")


# ---------------------------------------------------------------------------
# template construction
# ---------------------------------------------------------------------------

def _skeleton_layout() -> np.ndarray:
    """2D rest positions of all 21 joints (wrist at the origin)."""
    pts = np.zeros((NUM_JOINTS, 2))
    idx = 1
    for name in _FINGER_ORDER:
        if name == "thumb":
            base = np.array([-42.0, 25.0])
            direction = _THUMB_DIR
        else:
            base = np.array([_FINGER_BASES_X[name], _PALM_Y[1]])
            direction = np.array([0.0, 1.0])
        p = base.copy()
        for seg in _FINGER_SEGMENTS[name]:
            pts[idx] = p
            p = p + direction * seg
            idx += 1
        pts[idx] = p  # TIP
        idx += 1
    # joint order written above is MCP, PIP, DIP then TIP: fix by shifting
    # (loop stored MCP at first slot already; nothing to fix)
    return pts


def _choose_partition(coarse_count: int) -> tuple[int, int, list[int]]:
    """Pick a palm grid (rows, cols) and per-finger strip row counts.

    The palm keeps 5 columns so the four non-thumb fingers attach to four
    distinct top-row edges (sharing a base edge would break edge-manifoldness).
    """
    cols = 5
    for rows in (4, 3, 2):
        palm = rows * cols
        rem = coarse_count - palm - 5  # 5 fingertip apex vertices
        if rem >= 10 and rem % 2 == 0:
            per = rem // 2  # strip rows across 5 fingers
            strip_rows = [1, 1, 1, 1, 1]
            extra_order = [2, 3, 1, 4, 0]  # middle, ring, index, pinky, thumb
            i = 0
            while sum(strip_rows) < per:
                strip_rows[extra_order[i % 5]] += 1
                i += 1
            return rows, cols, strip_rows
    raise TemplateBuildError(
        f"no manifold hand decomposition exists for coarse_count={coarse_count}")


def _palm_height(x: float, y: float) -> float:
    h = 1.0 - (x / 60.0) ** 2 - ((y - 35.0) / 70.0) ** 2
    return 16.0 * max(0.0, h)


def _build_coarse(coarse_count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (layout (V_c,2), verts3d (V_c,3), faces (F_c,3))."""
    palm_rows, palm_cols, strip_rows = _choose_partition(coarse_count)
    layout: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []

    xs = np.linspace(_PALM_X[0], _PALM_X[1], palm_cols)
    ys = np.linspace(_PALM_Y[0], _PALM_Y[1], palm_rows)
    grid = np.empty((palm_rows, palm_cols), dtype=np.int64)
    for r in range(palm_rows):
        for c in range(palm_cols):
            grid[r, c] = len(layout)
            layout.append(np.array([xs[c], ys[r]]))
    for r in range(palm_rows - 1):
        for c in range(palm_cols - 1):
            a, b = grid[r, c], grid[r, c + 1]
            d, e = grid[r + 1, c], grid[r + 1, c + 1]
            faces.append((a, b, e))
            faces.append((a, e, d))

    joints2d = _skeleton_layout()
    finger_height = 5.0
    heights = {}

    # base attachment: one pair of adjacent palm-boundary vertices per finger
    top = palm_rows - 1
    base_pairs = {}
    for i, name in enumerate(("index", "middle", "ring", "pinky")):
        base_pairs[name] = (grid[top, i], grid[top, i + 1])
    rmid = palm_rows // 2
    base_pairs["thumb"] = (grid[rmid - 1, 0], grid[rmid, 0])

    for fi, name in enumerate(_FINGER_ORDER):
        rows = strip_rows[fi]
        mcp = joints2d[1 + fi * 4]
        tip = joints2d[4 + fi * 4]
        direction = tip - mcp
        length = np.linalg.norm(direction)
        direction = direction / length
        normal = np.array([-direction[1], direction[0]])
        half_w = 9.0
        # orient the strip so its "plus" rail continues the nearer base vertex
        b0, b1 = base_pairs[name]
        probe = mcp + normal * half_w
        if np.linalg.norm(layout[b0] - probe) <= np.linalg.norm(layout[b1] - probe):
            plus_prev, minus_prev = b0, b1
        else:
            plus_prev, minus_prev = b1, b0
        for k in range(1, rows + 1):
            t = 0.92 * k / rows
            center = mcp + direction * (t * length)
            w = half_w * (1.0 - 0.4 * t)
            pi, mi = len(layout), len(layout) + 1
            layout.append(center + normal * w)
            layout.append(center - normal * w)
            heights[pi] = finger_height
            heights[mi] = finger_height
            # quad (plus_prev, minus_prev, mi, pi) split along the
            # plus_prev <-> mi diagonal
            faces.append((plus_prev, minus_prev, mi))
            faces.append((plus_prev, mi, pi))
            plus_prev, minus_prev = pi, mi
        apex = len(layout)
        layout.append(mcp + direction * (length * 1.04))
        heights[apex] = finger_height
        faces.append((plus_prev, minus_prev, apex))

    layout_arr = np.array(layout)
    assert layout_arr.shape[0] == coarse_count

    verts3d = np.zeros((coarse_count, 3))
    verts3d[:, :2] = layout_arr
    for v in range(coarse_count):
        verts3d[v, 2] = heights.get(v, _palm_height(*layout_arr[v]))

    # consistent winding: positive signed area in the layout plane
    faces_arr = np.array(faces, dtype=np.int64)
    for f in faces_arr:
        a, b, c = layout_arr[f[0]], layout_arr[f[1]], layout_arr[f[2]]
        if np.cross(b - a, c - a) < 0:
            f[1], f[2] = f[2], f[1]
    return layout_arr, verts3d, faces_arr


def _subdivide_to(verts: np.ndarray, layout: np.ndarray, faces: np.ndarray,
                  fine_count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Longest-edge midpoint splits until the vertex count reaches fine_count.

    Returns (verts, layout, faces, upsample) with upsample rows expressed in
    the original coarse basis.
    """
    n_coarse = verts.shape[0]
    verts = [v for v in verts]
    layout = [p for p in layout]
    faces = [tuple(f) for f in faces]
    rows = [None] * n_coarse  # None marks "one-hot on itself"
    while len(verts) < fine_count:
        # longest edge across current faces, ties broken by vertex ids
        best = None
        for f in faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                e = (min(a, b), max(a, b))
                d = float(np.linalg.norm(verts[a] - verts[b]))
                key = (d, -e[0], -e[1])
                if best is None or key > best[0]:
                    best = (key, e)
        (a, b) = best[1]
        m = len(verts)
        verts.append(0.5 * (verts[a] + verts[b]))
        layout.append(0.5 * (layout[a] + layout[b]))

        def basis_row(i):
            if rows[i] is None:
                r = np.zeros(n_coarse)
                r[i] = 1.0
                return r
            return rows[i]

        rows.append(0.5 * basis_row(a) + 0.5 * basis_row(b))
        new_faces = []
        for f in faces:
            if a in f and b in f:
                c = [v for v in f if v not in (a, b)][0]
                # keep the original orientation of (a, b, c)
                fa, fb = (a, b) if _follows(f, a, b) else (b, a)
                new_faces.append((fa, m, c))
                new_faces.append((m, fb, c))
            else:
                new_faces.append(f)
        faces = new_faces

    upsample = np.zeros((len(verts), n_coarse))
    for i in range(len(verts)):
        if rows[i] is None:
            upsample[i, i] = 1.0
        else:
            upsample[i] = rows[i]
    return (np.array(verts), np.array(layout),
            np.array(faces, dtype=np.int64), upsample)


def _follows(face: tuple, a: int, b: int) -> bool:
    """True when b directly follows a in the face's cyclic vertex order."""
    i = face.index(a)
    return face[(i + 1) % 3] == b


def _ordered_one_ring(vertex: int, faces: np.ndarray) -> list[int]:
    """One-ring neighbors of a vertex in consistent winding order."""
    succ = {}
    for f in faces:
        if vertex in f:
            i = list(f).index(vertex)
            succ[f[(i + 1) % 3]] = f[(i + 2) % 3]
    incoming = set(succ.values())
    starts = sorted(set(succ) - incoming)
    start = starts[0] if starts else min(succ)
    ring = [start]
    while ring[-1] in succ and len(ring) < len(succ) + 1:
        nxt = succ[ring[-1]]
        if nxt == ring[0]:
            break
        ring.append(nxt)
    return ring


def _spiral_table(num_vertices: int, faces: np.ndarray, length: int) -> np.ndarray:
    neighbors: list[set] = [set() for _ in range(num_vertices)]
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            neighbors[a].add(b)
            neighbors[b].add(a)
    table = np.zeros((num_vertices, length), dtype=np.int64)
    for v in range(num_vertices):
        spiral = [v]
        seen = {v}
        ring = _ordered_one_ring(v, faces)
        while len(spiral) < length and ring:
            for u in ring:
                if u not in seen:
                    spiral.append(u)
                    seen.add(u)
                    if len(spiral) == length:
                        break
            nxt = []
            for u in ring:
                for w in sorted(neighbors[u]):
                    if w not in seen and w not in nxt:
                        nxt.append(w)
            ring = nxt
        while len(spiral) < length:
            spiral.append(spiral[-1])  # pad, exhausted neighborhood
        table[v] = spiral
    return table


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _skinning_weights(layout_fine: np.ndarray, joints2d: np.ndarray) -> np.ndarray:
    """Per-vertex weights over joints from 2D distance to the driving bones."""
    v = layout_fine.shape[0]
    bones = []  # (joint controlling the segment, start, end)
    bones.append((0, np.array([0.0, -15.0]), np.array([0.0, 70.0])))  # palm spine
    bones.append((0, np.array([-40.0, 55.0]), np.array([40.0, 55.0])))  # palm bar
    for j in range(1, NUM_JOINTS):
        parent = SKELETON_PARENTS[j]
        if parent == 0:
            # MCP attachment: let the wrist own the base wedge
            bones.append((0, joints2d[0], joints2d[j]))
        else:
            bones.append((int(parent), joints2d[parent], joints2d[j]))
    sigma = 10.0
    scores = np.zeros((v, NUM_JOINTS))
    for joint, a, b in bones:
        d = _point_segment_distance(layout_fine, a, b)
        scores[:, joint] = np.maximum(scores[:, joint], np.exp(-((d / sigma) ** 2)))
    # keep the 3 strongest influences per vertex
    order = np.argsort(-scores, axis=1)
    weights = np.zeros_like(scores)
    rows = np.arange(v)[:, None]
    top = order[:, :3]
    weights[rows, top] = scores[rows, top]
    weights += 1e-9  # every row strictly positive before normalization
    weights[:, 0] += 1e-6
    return weights / weights.sum(axis=1, keepdims=True)


def _joint_regressor(layout_fine: np.ndarray, joints2d: np.ndarray) -> np.ndarray:
    reg = np.zeros((NUM_JOINTS, layout_fine.shape[0]))
    sigma = 8.0
    for j in range(NUM_JOINTS):
        d = np.linalg.norm(layout_fine - joints2d[j], axis=1)
        w = np.exp(-((d / sigma) ** 2))
        keep = np.argsort(-w)[:8]
        reg[j, keep] = w[keep]
        reg[j] /= reg[j].sum()
    return reg


def build_template(coarse_count: int = 49, fine_count: int = 194,
                   spiral_length: int = 9) -> HandTemplate:
    """Deterministically build the synthetic hand template.

    Same arguments always produce bit-identical output.
    """
    if coarse_count < 21:
        raise TemplateBuildError(f"coarse_count must be >= 21, got {coarse_count}")
    if fine_count < 2 * coarse_count:
        raise TemplateBuildError(
            f"fine_count must be >= 2 * coarse_count, got {fine_count}")
    if spiral_length < 5:
        raise TemplateBuildError(f"spiral_length must be >= 5, got {spiral_length}")

    layout_c, verts_c, faces_c = _build_coarse(coarse_count)
    verts_f, layout_f, faces_f, upsample = _subdivide_to(
        verts_c, layout_c, faces_c, fine_count)

    # center the canonical frame on the fine-mesh centroid
    centroid = verts_f.mean(axis=0)
    verts_f = verts_f - centroid
    verts_c = verts_c - centroid

    joints2d = _skeleton_layout()
    regressor = _joint_regressor(layout_f, joints2d)
    rest_joints = regressor @ verts_f
    skinning = _skinning_weights(layout_f, joints2d)

    template = HandTemplate(
        vertices_canonical=verts_f,
        faces=faces_f,
        coarse_vertex_count=coarse_count,
        vertices_coarse=verts_c,
        faces_coarse=faces_c,
        upsample_matrix=upsample,
        joint_regressor=regressor,
        skeleton_parents=SKELETON_PARENTS.copy(),
        rest_joints=rest_joints,
        skinning_weights=skinning,
        spiral_indices=_spiral_table(coarse_count, faces_c, spiral_length),
        spiral_indices_fine=_spiral_table(fine_count, faces_f, spiral_length),
        joint_angle_limits=JOINT_ANGLE_LIMITS.copy(),
    )
    _check_template(template)
    return template


def _check_template(t: HandTemplate) -> None:
    v = t.num_vertices
    if t.faces.min() < 0 or t.faces.max() >= v:
        raise TemplateBuildError("face indices out of range")
    # edge-manifold: every edge in at most two faces
    edge_count: dict[tuple[int, int], int] = {}
    for f in t.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            e = (min(a, b), max(a, b))
            edge_count[e] = edge_count.get(e, 0) + 1
    if max(edge_count.values()) > 2:
        raise TemplateBuildError("mesh is not edge-manifold")
    # connected, and every vertex used by a face
    adj: list[list[int]] = [[] for _ in range(v)]
    for (a, b), _ in edge_count.items():
        adj[a].append(b)
        adj[b].append(a)
    if any(len(a) == 0 for a in adj):
        raise TemplateBuildError("isolated vertex")
    seen = {0}
    stack = [0]
    while stack:
        for u in adj[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    if len(seen) != v:
        raise TemplateBuildError("mesh is disconnected")


# ---------------------------------------------------------------------------
# kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(template: HandTemplate, pose: HandPose) -> tuple[np.ndarray, np.ndarray]:
    """Linear-blend-skinned vertices and FK joints in the canonical frame, mm."""
    validate_pose(template, pose)
    s = float(pose.shape_scale)
    rest_v = s * template.vertices_canonical
    rest_j = s * template.rest_joints
    j = template.num_joints
    parents = template.skeleton_parents

    gl = np.zeros((j, 4, 4))
    for i in range(j):
        local = np.eye(4)
        local[:3, :3] = pose.joint_rotations[i]
        if parents[i] < 0:
            local[:3, 3] = rest_j[i]
            gl[i] = local
        else:
            local[:3, 3] = rest_j[i] - rest_j[parents[i]]
            gl[i] = gl[parents[i]] @ local
    joints = gl[:, :3, 3].copy()

    # remove each joint's rest position so transforms act on rest vertices
    skin = np.zeros((j, 4, 4))
    for i in range(j):
        offset = np.eye(4)
        offset[:3, 3] = -rest_j[i]
        skin[i] = gl[i] @ offset

    hom = np.concatenate([rest_v, np.ones((rest_v.shape[0], 1))], axis=1)
    per_joint = np.einsum("jab,vb->jva", skin, hom)[:, :, :3]  # (J, V, 3)
    verts = np.einsum("vj,jva->va", template.skinning_weights, per_joint)
    return verts, joints


def regress_joints(template: HandTemplate, vertices: np.ndarray) -> np.ndarray:
    """Joint positions as the row-stochastic linear map of mesh vertices."""
    vertices = np.asarray(vertices)
    if not np.isfinite(vertices).all():
        raise ValueError("vertices must be finite")
    return template.joint_regressor @ vertices


def sample_pose(template: HandTemplate, rng: np.random.Generator,
                scale_range: tuple[float, float] = (0.8, 1.2)) -> HandPose:
    """Random valid pose: curl-biased finger rotations within the joint limits."""
    rots = np.tile(np.eye(3), (template.num_joints, 1, 1))
    for j in range(1, template.num_joints):
        limit = template.joint_angle_limits[j]
        angle = rng.uniform(0.0, 0.85 * limit)
        axis = np.array([1.0, rng.normal(0.0, 0.25), rng.normal(0.0, 0.25)])
        rots[j] = rotation_about_axis(axis, angle)
    scale = rng.uniform(*scale_range)
    return HandPose(rots, float(scale))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_template(template: HandTemplate, path: str) -> None:
    tensors = {
        "vertices_canonical": template.vertices_canonical,
        "faces": template.faces,
        "vertices_coarse": template.vertices_coarse,
        "faces_coarse": template.faces_coarse,
        "upsample_matrix": template.upsample_matrix,
        "joint_regressor": template.joint_regressor,
        "skeleton_parents": template.skeleton_parents,
        "rest_joints": template.rest_joints,
        "skinning_weights": template.skinning_weights,
        "spiral_indices": template.spiral_indices,
        "spiral_indices_fine": template.spiral_indices_fine,
        "joint_angle_limits": template.joint_angle_limits,
    }
    write_container(path, tensors, meta={"kind": "hand_template",
                                         "coarse_vertex_count": template.coarse_vertex_count})


def load_template(path: str) -> HandTemplate:
    tensors, meta = read_container(path)
    return HandTemplate(
        vertices_canonical=tensors["vertices_canonical"],
        faces=tensors["faces"],
        coarse_vertex_count=int(meta["coarse_vertex_count"]),
        vertices_coarse=tensors["vertices_coarse"],
        faces_coarse=tensors["faces_coarse"],
        upsample_matrix=tensors["upsample_matrix"],
        joint_regressor=tensors["joint_regressor"],
        skeleton_parents=tensors["skeleton_parents"],
        rest_joints=tensors["rest_joints"],
        skinning_weights=tensors["skinning_weights"],
        spiral_indices=tensors["spiral_indices"],
        spiral_indices_fine=tensors["spiral_indices_fine"],
        joint_angle_limits=tensors["joint_angle_limits"],
    )


def write_obj(vertices: np.ndarray, faces: np.ndarray, path: str) -> None:
    """Plain ASCII OBJ export, 1-based face indices."""
    with open(path, "w", encoding="utf-8") as f:
        for v in vertices:
            f.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for face in faces:
            f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")


def read_obj(path: str) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts), np.array(faces, dtype=np.int64)
