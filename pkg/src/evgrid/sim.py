"""Synthetic 2-D world generation and sensor simulation.

Stands in for the vehicle dataset: scenes built from axis-aligned walls and
L-shaped parked cars plus optional moving rectangles, a LiDAR raycaster that
produces ground-truth occupancy patches and visibility masks, and a sparse,
noisy radar detection simulator feeding both the radar images and the
Ray-ISM pipeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from evgrid.errors import DomainError, EvgridError
from evgrid.grid import Grid2D, GridSpec, Pose2D, grid_to_bytes, wrap_angle, write_grid
from evgrid.rayism import Detection, RadarNoiseModel

TARGET_FREE = (1.0, 0.0, 0.0)
TARGET_OCCUPIED = (0.0, 1.0, 0.0)
TARGET_CONFLICT = (0.5, 0.5, 0.0)
TARGET_UNKNOWN = (0.0, 0.0, 1.0)

_FREE, _OCC = 1, 2  # status codes; 0 = unknown


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def rect(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def l_shape(x0: float, y0: float, w: float, h: float, notch_w: float, notch_h: float) -> np.ndarray:
    """Axis-aligned L: a w x h rectangle with its top-right corner notched."""
    return np.array(
        [
            [x0, y0],
            [x0 + w, y0],
            [x0 + w, y0 + h - notch_h],
            [x0 + w - notch_w, y0 + h - notch_h],
            [x0 + w - notch_w, y0 + h],
            [x0, y0 + h],
        ],
        dtype=np.float64,
    )


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_edges(polys: list[np.ndarray]) -> np.ndarray:
    """Stack all polygon edges into an (E, 2, 2) array of segments."""
    segs = []
    for poly in polys:
        nxt = np.roll(poly, -1, axis=0)
        segs.append(np.stack([poly, nxt], axis=1))
    if not segs:
        return np.zeros((0, 2, 2))
    return np.concatenate(segs, axis=0)


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd crossing test, vectorized over points."""
    x, y = pts[..., 0], pts[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < np.where(crosses, xi, np.inf))
    return inside


def ray_hits(origins: np.ndarray, dirs: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """First-hit distance of each ray against a set of segments.

    origins/dirs are (R, 2); edges (E, 2, 2). Returns (R,) distances, inf
    where a ray hits nothing.
    """
    if len(edges) == 0:
        return np.full(len(origins), np.inf)
    a = edges[:, 0]  # (E,2)
    e = edges[:, 1] - edges[:, 0]
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]  # (R,1)
    ex, ey = e[:, 0][None], e[:, 1][None]  # (1,E)
    denom = dx * ey - dy * ex
    aox = a[:, 0][None] - origins[:, 0:1]
    aoy = a[:, 1][None] - origins[:, 1:2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (aox * ey - aoy * ex) / denom
        s = (aox * dy - aoy * dx) / denom
    valid = (np.abs(denom) > 1e-12) & (s >= 0.0) & (s <= 1.0) & (t > 1e-9)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

@dataclass
class Scene:
    """Static polygons, moving (polygon, velocity) pairs, and the ego pose."""

    static_shapes: list[np.ndarray]
    dynamic_objects: list[tuple[np.ndarray, np.ndarray]]
    ego: Pose2D
    rng_seed: int

    def __post_init__(self) -> None:
        for poly in self.static_shapes:
            if polygon_area(poly) <= 0.0:
                raise DomainError("degenerate static shape (zero area)")
        for poly, _vel in self.dynamic_objects:
            if polygon_area(poly) <= 0.0:
                raise DomainError("degenerate dynamic shape (zero area)")

    def at_time(self, dt: float) -> "Scene":
        """Scene with dynamic objects advanced by their velocity for dt seconds."""
        moved = [(poly + dt * np.asarray(vel)[None, :], vel) for poly, vel in self.dynamic_objects]
        return Scene(self.static_shapes, moved, self.ego, self.rng_seed)


@dataclass(frozen=True)
class SceneParams:
    extent: float = 16.0
    wall_thickness: float = 0.6
    corridor_width: tuple[float, float] = (5.0, 9.0)
    max_parked_per_side: int = 3
    p_dynamic: float = 0.5
    n_shapes: int | None = None  # None = recipe default; 0 = empty scene


@dataclass(frozen=True)
class SimConfig:
    lidar_rays: int = 720
    max_detections: int = 64  # per sensor per frame
    detection_prob: float = 0.35
    clutter_rate: float = 2.0
    noise: RadarNoiseModel = field(default_factory=RadarNoiseModel)
    vr_sigma: float = 0.05
    dynamic_velocity_threshold: float = 0.5
    sensor_fov: float = 2.0 * math.pi / 3.0
    boundary_spacing: float = 0.3
    frames: int = 1
    ego_step: float = 2.0  # ego advance per accumulated frame, meters
    occlude_by_dynamic: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.detection_prob <= 1.0):
            raise DomainError("detection_prob must be in [0,1]")
        if self.clutter_rate < 0 or self.max_detections < 0 or self.lidar_rays < 1:
            raise DomainError("rates and counts must be nonnegative")


def generate_scene(seed: int, params: SceneParams | None = None) -> Scene:
    """Deterministic scene from a seed: road corridor, parked-car rows, or
    T-intersection, optionally with one moving object."""
    params = params or SceneParams()
    rng = np.random.default_rng(seed)
    ego = Pose2D(
        x=float(rng.uniform(-0.5, 0.5)),
        y=float(rng.uniform(-0.5, 0.5)),
        heading=float(rng.uniform(-0.3, 0.3)),
    )
    if params.n_shapes == 0:
        return Scene([], [], ego, seed)

    half_len = params.extent * 0.75
    w = float(rng.uniform(*params.corridor_width))
    th = params.wall_thickness
    kind = rng.integers(0, 3)
    statics: list[np.ndarray] = []
    if kind == 0:  # straight corridor
        statics.append(rect(-half_len, -w / 2 - th, half_len, -w / 2))
        statics.append(rect(-half_len, w / 2, half_len, w / 2 + th))
    elif kind == 1:  # corridor with parked-car rows
        statics.append(rect(-half_len, -w / 2 - th, half_len, -w / 2))
        statics.append(rect(-half_len, w / 2, half_len, w / 2 + th))
        for side in (-1.0, 1.0):
            n_cars = int(rng.integers(1, params.max_parked_per_side + 1))
            xs = rng.uniform(-half_len * 0.8, half_len * 0.8 - 2.5, size=n_cars)
            for x0 in np.sort(xs):
                y_in = side * (w / 2) - (1.1 if side > 0 else 0.0)
                statics.append(
                    l_shape(float(x0), y_in, 2.2, 1.1, float(rng.uniform(0.6, 1.2)), 0.5)
                )
    else:  # T-intersection: corridor plus a branch opening upward
        gap = float(rng.uniform(1.5, 2.5))
        statics.append(rect(-half_len, -w / 2 - th, half_len, -w / 2))
        statics.append(rect(-half_len, w / 2, -gap, w / 2 + th))
        statics.append(rect(gap, w / 2, half_len, w / 2 + th))
        statics.append(rect(-gap - th, w / 2, -gap, half_len))
        statics.append(rect(gap, w / 2, gap + th, half_len))

    dynamics: list[tuple[np.ndarray, np.ndarray]] = []
    if rng.uniform() < params.p_dynamic:
        cx = float(rng.uniform(-half_len * 0.4, half_len * 0.4))
        cy = float(rng.uniform(-w / 2 + 1.0, w / 2 - 1.0))
        speed = float(rng.uniform(1.0, 4.0))
        direction = 1.0 if rng.uniform() < 0.5 else -1.0
        dynamics.append((rect(cx - 1.0, cy - 0.5, cx + 1.0, cy + 0.5),
                         np.array([direction * speed, 0.0])))
    return Scene(statics, dynamics, ego, seed)


def occupied_fraction(scene: Scene, spec: GridSpec) -> float:
    """Fraction of grid cells whose center lies inside a static shape."""
    from evgrid.grid import cell_centers

    wx, wy = cell_centers(spec, scene.ego)
    pts = np.stack([wx, wy], axis=-1)
    inside = np.zeros(wx.shape, dtype=bool)
    for poly in scene.static_shapes:
        inside |= points_in_polygon(pts, poly)
    return float(inside.mean())


# ---------------------------------------------------------------------------
# LiDAR ground truth
# ---------------------------------------------------------------------------

def _status_scan(scene: Scene, spec: GridSpec, cfg: SimConfig,
                 include_dynamic: bool, scan_pose: Pose2D | None = None) -> np.ndarray:
    """Per-cell status grid (0 unknown, 1 free, 2 occupied) from one scan.

    Rays originate at ``scan_pose`` (the ego by default); cells are always
    expressed in the scene's reference ego frame, so scans taken from later
    positions of a recording land on the same grid.
    """
    n = spec.side_cells
    status = np.zeros((n, n), dtype=np.int8)
    ego = scene.ego
    scan = scan_pose if scan_pose is not None else ego
    static_edges = polygon_edges(list(scene.static_shapes))
    dynamic_edges = polygon_edges([poly for poly, _ in scene.dynamic_objects])
    if include_dynamic or cfg.occlude_by_dynamic:
        edges = np.concatenate([static_edges, dynamic_edges], axis=0)
    else:
        edges = static_edges
    hit_is_target = np.ones(len(edges), dtype=bool)
    if not include_dynamic and cfg.occlude_by_dynamic:
        hit_is_target[len(static_edges):] = False

    angles = scan.heading + 2.0 * np.pi * np.arange(cfg.lidar_rays) / cfg.lidar_rays
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origins = np.broadcast_to(np.array([scan.x, scan.y]), dirs.shape)
    max_range = spec.extent  # covers the grid diagonal from the center
    t_hit = ray_hits(origins, dirs, edges) if len(edges) else np.full(cfg.lidar_rays, np.inf)
    t_end = np.minimum(t_hit, max_range)

    # free space: dense samples along each ray up to (just before) the hit
    step = spec.cell_size / 4.0
    t_samples = (np.arange(int(max_range / step)) + 0.5) * step
    pts_x = origins[:, 0:1] + dirs[:, 0:1] * t_samples[None]
    pts_y = origins[:, 1:2] + dirs[:, 1:2] * t_samples[None]
    valid = t_samples[None] < t_end[:, None] - 1e-9
    rows, cols = _world_to_cells(spec, ego, pts_x[valid], pts_y[valid])
    inb = (rows >= 0) & (rows < n) & (cols >= 0) & (cols < n)
    status[rows[inb], cols[inb]] = _FREE

    # occupied: the cell containing each hit point, nudged inside the shape
    hit = np.isfinite(t_hit) & (t_hit <= max_range)
    if len(edges):
        # when dynamic objects occlude but are not targets, their hit cells
        # stay unmarked (the shadow behind them is still hidden)
        edge_idx = _first_edge_index(origins[hit], dirs[hit], edges, t_hit[hit])
        target_hit = hit_is_target[edge_idx]
    else:
        target_hit = np.zeros(0, dtype=bool)
    hx = origins[hit, 0] + dirs[hit, 0] * (t_hit[hit] + 1e-6)
    hy = origins[hit, 1] + dirs[hit, 1] * (t_hit[hit] + 1e-6)
    rows, cols = _world_to_cells(spec, ego, hx[target_hit], hy[target_hit])
    inb = (rows >= 0) & (rows < n) & (cols >= 0) & (cols < n)
    status[rows[inb], cols[inb]] = _OCC
    return status


def _first_edge_index(origins: np.ndarray, dirs: np.ndarray, edges: np.ndarray,
                      t_hit: np.ndarray) -> np.ndarray:
    """Index of the edge realizing each ray's first hit."""
    a = edges[:, 0]
    e = edges[:, 1] - edges[:, 0]
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    ex, ey = e[:, 0][None], e[:, 1][None]
    denom = dx * ey - dy * ex
    aox = a[:, 0][None] - origins[:, 0:1]
    aoy = a[:, 1][None] - origins[:, 1:2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (aox * ey - aoy * ex) / denom
        s = (aox * dy - aoy * dx) / denom
    valid = (np.abs(denom) > 1e-12) & (s >= 0.0) & (s <= 1.0) & (t > 1e-9)
    t = np.where(valid, t, np.inf)
    return np.abs(t - t_hit[:, None]).argmin(axis=1)


def _world_to_cells(spec: GridSpec, ego: Pose2D, px: np.ndarray, py: np.ndarray):
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    dx, dy = px - ego.x, py - ego.y
    xr = c * dx - s * dy
    yr = s * dx + c * dy
    half = spec.side_cells // 2
    col = np.floor(xr / spec.cell_size).astype(np.int64) + half
    row = np.floor(yr / spec.cell_size).astype(np.int64) + half
    return row, col


def _status_to_target(status: np.ndarray) -> np.ndarray:
    target = np.zeros((3,) + status.shape, dtype=np.float64)
    target[0][status == _FREE] = 1.0
    target[1][status == _OCC] = 1.0
    target[2][status == 0] = 1.0
    return target


def lidar_ground_truth(scene: Scene, spec: GridSpec, cfg: SimConfig | None = None):
    """Single-frame LiDAR truth: (target Grid2D with 3 channels, visibility Grid2D).

    Rays over 360 degrees with exact ray-polygon intersection; cells before
    the first hit are free, the hit cell occupied, everything beyond or never
    crossed unknown and hidden. Dynamic objects never appear as occupied
    truth (optionally they still occlude, see SimConfig.occlude_by_dynamic).
    """
    cfg = cfg or SimConfig()
    status = _status_scan(scene, spec, cfg, include_dynamic=False)
    target = Grid2D(spec, _status_to_target(status), channels=("b_f", "b_o", "u"), origin=scene.ego)
    visible = Grid2D(spec, (status != 0).astype(np.float64), channels=("visible",), origin=scene.ego)
    return target, visible


def accumulated_ground_truth(scene: Scene, spec: GridSpec, cfg: SimConfig):
    """Multi-frame truth (cfg.frames >= 2) on the frame-0 grid.

    Each frame advances the dynamic objects by their velocity and the scan
    position by cfg.ego_step along the ego heading, like consecutive poses of
    a recording. Targets fuse all frames (mixed free/occupied history becomes
    conflict); the visibility mask is the frame-0 scan only, so cells that are
    occluded now but were mapped from another pose count as hidden with a
    known target.
    """
    ego = scene.ego
    statuses = []
    for k in range(cfg.frames):
        frame = scene.at_time(k * 1.0)
        scan = Pose2D(
            x=ego.x + k * cfg.ego_step * math.cos(ego.heading),
            y=ego.y + k * cfg.ego_step * math.sin(ego.heading),
            heading=ego.heading,
        )
        statuses.append(_status_scan(frame, spec, cfg, include_dynamic=True, scan_pose=scan))
    return fuse_target_frames(statuses, spec, ego, visible_status=statuses[0])


def fuse_target_frames(statuses: list[np.ndarray], spec: GridSpec, ego: Pose2D,
                       visible_status: np.ndarray | None = None):
    """Fuse per-frame status grids: mixed free/occupied history -> conflict.

    ``visible_status`` selects the frame whose scan defines visibility; by
    default every cell with a known fused target counts as visible.
    """
    stack = np.stack(statuses)
    any_free = (stack == _FREE).any(axis=0)
    any_occ = (stack == _OCC).any(axis=0)
    target = np.zeros((3, spec.side_cells, spec.side_cells), dtype=np.float64)
    conflict = any_free & any_occ
    target[0][any_free & ~any_occ] = 1.0
    target[1][any_occ & ~any_free] = 1.0
    target[0][conflict] = 0.5
    target[1][conflict] = 0.5
    unknown = ~(any_free | any_occ)
    target[2][unknown] = 1.0
    if visible_status is None:
        visible = (~unknown).astype(np.float64)
    else:
        visible = (visible_status != 0).astype(np.float64)
    return (
        Grid2D(spec, target, channels=("b_f", "b_o", "u"), origin=ego),
        Grid2D(spec, visible, channels=("visible",), origin=ego),
    )


# ---------------------------------------------------------------------------
# radar simulation
# ---------------------------------------------------------------------------

def corner_sensor_poses(ego: Pose2D) -> dict[int, Pose2D]:
    """Four corner radars looking diagonally outward."""
    offsets = [(1.8, 0.8, math.pi / 4), (1.8, -0.8, -math.pi / 4),
               (-1.8, 0.8, 3 * math.pi / 4), (-1.8, -0.8, -3 * math.pi / 4)]
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    poses = {}
    for i, (ox, oy, oh) in enumerate(offsets):
        poses[i] = Pose2D(
            x=ego.x + c * ox - s * oy,
            y=ego.y + s * ox + c * oy,
            heading=ego.heading + oh,
        )
    return poses


def _boundary_points(polys: list[np.ndarray], spacing: float):
    """Sample points along polygon boundaries at roughly the given spacing."""
    pts = []
    for poly in polys:
        nxt = np.roll(poly, -1, axis=0)
        for a, b in zip(poly, nxt):
            length = float(np.hypot(*(b - a)))
            k = max(1, int(length / spacing))
            frac = (np.arange(k) + 0.5) / k
            pts.append(a[None] + frac[:, None] * (b - a)[None])
    if not pts:
        return np.zeros((0, 2))
    return np.concatenate(pts, axis=0)


def simulate_radar(scene: Scene, spec: GridSpec, cfg: SimConfig | None = None,
                   rng: np.random.Generator | None = None):
    """Simulate the four corner radars for one frame.

    Returns (radar image Grid2D with static/dynamic hit-count channels,
    list[Detection], list[bool] dynamic flags aligned with the detections).
    """
    cfg = cfg or SimConfig()
    rng = rng if rng is not None else np.random.default_rng(scene.rng_seed)
    sensors = corner_sensor_poses(scene.ego)
    all_polys = list(scene.static_shapes) + [p for p, _ in scene.dynamic_objects]
    edges = polygon_edges(all_polys)
    r_max = spec.extent

    # candidate boundary points with their source velocities
    cand_pts = []
    cand_vel = []
    stat_pts = _boundary_points(scene.static_shapes, cfg.boundary_spacing)
    cand_pts.append(stat_pts)
    cand_vel.append(np.zeros_like(stat_pts))
    for poly, vel in scene.dynamic_objects:
        pts = _boundary_points([poly], cfg.boundary_spacing)
        cand_pts.append(pts)
        cand_vel.append(np.broadcast_to(np.asarray(vel, dtype=np.float64), pts.shape).copy())
    pts = np.concatenate(cand_pts, axis=0)
    vels = np.concatenate(cand_vel, axis=0)

    detections: list[Detection] = []
    dyn_flags: list[bool] = []
    counts = np.zeros((2, spec.side_cells, spec.side_cells), dtype=np.float64)
    for sid in sorted(sensors):
        pose = sensors[sid]
        origin = np.array([pose.x, pose.y])
        recs: list[tuple[float, float, float, bool]] = []
        if len(pts):
            rel = pts - origin[None]
            r_true = np.hypot(rel[:, 0], rel[:, 1])
            phi_world = np.arctan2(rel[:, 1], rel[:, 0])
            phi_true = wrap_angle(phi_world - pose.heading)
            in_fov = (np.abs(phi_true) <= cfg.sensor_fov / 2.0) & (r_true > 0.3) & (r_true <= r_max)
            if in_fov.any():
                sel = np.flatnonzero(in_fov)
                dirs = rel[sel] / r_true[sel, None]
                t_near = ray_hits(np.broadcast_to(origin, (len(sel), 2)), dirs, edges)
                visible = t_near >= r_true[sel] - 1e-6
                sel = sel[visible]
                keep = rng.uniform(size=len(sel)) < cfg.detection_prob
                sel = sel[keep]
                for idx in sel:
                    r_meas = max(0.0, r_true[idx] + rng.normal(0.0, cfg.noise.sigma_r))
                    phi_meas = wrap_angle(phi_true[idx] + rng.normal(0.0, cfg.noise.sigma_phi))
                    los = rel[idx] / r_true[idx]
                    v_r = float(vels[idx] @ los + rng.normal(0.0, cfg.vr_sigma))
                    speed = float(np.hypot(*vels[idx]))
                    recs.append((r_meas, phi_meas, v_r, speed > cfg.dynamic_velocity_threshold))
        n_clutter = rng.poisson(cfg.clutter_rate)
        for _ in range(n_clutter):
            recs.append((
                float(rng.uniform(0.5, r_max)),
                float(rng.uniform(-cfg.sensor_fov / 2.0, cfg.sensor_fov / 2.0)),
                float(rng.normal(0.0, cfg.vr_sigma)),
                False,
            ))
        if len(recs) > cfg.max_detections:
            pick = rng.choice(len(recs), size=cfg.max_detections, replace=False)
            recs = [recs[i] for i in np.sort(pick)]
        for r_meas, phi_meas, v_r, dyn in recs:
            det = Detection(r=r_meas, phi=phi_meas, v_r=v_r, sensor_id=sid)
            detections.append(det)
            dyn_flags.append(dyn)
            wx = pose.x + r_meas * math.cos(pose.heading + phi_meas)
            wy = pose.y + r_meas * math.sin(pose.heading + phi_meas)
            rows, cols = _world_to_cells(spec, scene.ego, np.array([wx]), np.array([wy]))
            if 0 <= rows[0] < spec.side_cells and 0 <= cols[0] < spec.side_cells:
                counts[1 if dyn else 0, rows[0], cols[0]] += 1.0

    image = Grid2D(spec, counts, channels=("static", "dynamic"), origin=scene.ego)
    return image, detections, dyn_flags


# ---------------------------------------------------------------------------
# dataset writing
# ---------------------------------------------------------------------------

def detection_json(det: Detection) -> str:
    return json.dumps(
        {"t": det.t, "sensor_id": det.sensor_id, "r": det.r, "phi": det.phi, "v_r": det.v_r},
        sort_keys=True, separators=(",", ":"),
    )


def detections_from_jsonl(text: str) -> list[Detection]:
    dets = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        dets.append(Detection(r=obj["r"], phi=obj["phi"], v_r=obj["v_r"],
                              sensor_id=obj["sensor_id"], t=obj.get("t", 0.0)))
    return dets


def _scene_seed(master_seed: int, index: int) -> int:
    return (master_seed * 0x9E3779B97F4A7C15 + 0xBF58476D1CE4E5B9 * (index + 1)) % (1 << 63)


def write_dataset(n_scenes: int, spec: GridSpec, out_dir, master_seed: int = 0,
                  cfg: SimConfig | None = None,
                  scene_params: SceneParams | None = None,
                  split_fractions: tuple[float, float] = (0.7, 0.15)) -> dict:
    """Generate and write a dataset; returns the manifest.

    Layout: manifest.json at the root plus one directory per sample with
    radar.grid, target.grid, mask.grid and detections.jsonl. Deterministic
    and byte-identical given (n_scenes, config, master_seed).
    """
    cfg = cfg or SimConfig()
    scene_params = scene_params or SceneParams()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EvgridError(f"cannot create dataset directory {out}: {exc}") from exc

    sample_ids = []
    for i in range(n_scenes):
        seed = _scene_seed(master_seed, i)
        scene = generate_scene(seed, scene_params)
        if cfg.frames >= 2:
            target, mask = accumulated_ground_truth(scene, spec, cfg)
        else:
            target, mask = lidar_ground_truth(scene, spec, cfg)
        radar_rng = np.random.default_rng([seed, 1])
        image, dets, _dyn = simulate_radar(scene, spec, cfg, radar_rng)

        sid = f"{i:05d}"
        sdir = out / "samples" / sid
        sdir.mkdir(parents=True, exist_ok=True)
        write_grid(sdir / "radar.grid", image)
        write_grid(sdir / "target.grid", target)
        write_grid(sdir / "mask.grid", mask)
        try:
            (sdir / "detections.jsonl").write_text(
                "".join(detection_json(d) + "\n" for d in dets))
        except OSError as exc:
            raise EvgridError(f"cannot write detections for sample {sid}: {exc}") from exc
        sample_ids.append(sid)

    n_train = int(round(split_fractions[0] * n_scenes))
    n_val = int(round(split_fractions[1] * n_scenes))
    manifest = {
        "master_seed": master_seed,
        "n_scenes": n_scenes,
        "grid": {"side_cells": spec.side_cells, "cell_size": spec.cell_size},
        "config": {
            "lidar_rays": cfg.lidar_rays,
            "max_detections": cfg.max_detections,
            "detection_prob": cfg.detection_prob,
            "clutter_rate": cfg.clutter_rate,
            "sigma_r": cfg.noise.sigma_r,
            "sigma_phi": cfg.noise.sigma_phi,
            "vr_sigma": cfg.vr_sigma,
            "dynamic_velocity_threshold": cfg.dynamic_velocity_threshold,
            "sensor_fov": cfg.sensor_fov,
            "boundary_spacing": cfg.boundary_spacing,
            "frames": cfg.frames,
            "ego_step": cfg.ego_step,
            "occlude_by_dynamic": cfg.occlude_by_dynamic,
        },
        "splits": {
            "train": sample_ids[:n_train],
            "val": sample_ids[n_train:n_train + n_val],
            "test": sample_ids[n_train + n_val:],
        },
    }
    try:
        (out / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise EvgridError(f"cannot write manifest in {out}: {exc}") from exc
    return manifest


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise EvgridError(f"cannot read dataset manifest {path}: {exc}") from exc


def augment_arrays(arrays: list[np.ndarray], k_rot: int, flip_h: bool, flip_v: bool) -> list[np.ndarray]:
    """Apply the same flip/rot90 transform to each (C, H, W) array."""
    out = []
    for arr in arrays:
        a = arr
        if flip_h:
            a = a[:, :, ::-1]
        if flip_v:
            a = a[:, ::-1, :]
        a = np.rot90(a, k=k_rot % 4, axes=(1, 2))
        out.append(np.ascontiguousarray(a))
    return out
