"""2-D occupancy grid data model.

Ego-centered square grids with coordinate transforms, supercover ray
traversal, per-cell accumulation in log-odds and Dempster-Shafer form,
pose-aligned patch extraction, and the binary grid file format plus
PGM/PPM rendering.

Grids are stored row-major with shape (channels, side, side); row index
follows the ego-frame y axis and column index the x axis, so the cell at
(side//2, side//2) contains the ego position.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from evgrid.errors import DomainError, EvgridError
from evgrid.evidential import EvidentialState, ProbabilisticState

DEFAULT_LOGODDS_CLAMP = 10.0


def wrap_angle(theta: float | np.ndarray):
    """Normalize an angle to (-pi, pi]."""
    wrapped = -((-np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi)
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """World-frame planar pose; heading normalized to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class GridSpec:
    side_cells: int = 32
    cell_size: float = 0.5

    def __post_init__(self) -> None:
        if self.side_cells < 8:
            raise DomainError(f"side_cells must be >= 8, got {self.side_cells}")
        if self.cell_size <= 0:
            raise DomainError(f"cell_size must be > 0, got {self.cell_size}")

    @property
    def extent(self) -> float:
        """Metric side length of the covered square."""
        return self.side_cells * self.cell_size


@dataclass
class Grid2D:
    """A multi-channel field over an ego-centered square.

    ``data`` has shape (len(channels), side, side). ``origin`` is the pose
    the grid is centered on and aligned with.
    """

    spec: GridSpec
    data: np.ndarray
    channels: tuple[str, ...] = ("value",)
    origin: Pose2D = field(default_factory=Pose2D)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None]
        expected = (len(self.channels), self.spec.side_cells, self.spec.side_cells)
        if self.data.shape != expected:
            raise DomainError(f"grid data shape {self.data.shape} != expected {expected}")

    @classmethod
    def zeros(cls, spec: GridSpec, channels: tuple[str, ...] = ("value",),
              origin: Pose2D = Pose2D(), dtype=np.float64) -> "Grid2D":
        n = spec.side_cells
        return cls(spec, np.zeros((len(channels), n, n), dtype=dtype), channels, origin)


def unknown_grid(spec: GridSpec, origin: Pose2D = Pose2D()) -> Grid2D:
    """Evidential grid with every cell fully unknown (0, 0, 1)."""
    g = Grid2D.zeros(spec, channels=("b_f", "b_o", "u"), origin=origin)
    g.data[2] = 1.0
    return g


def world_to_cell(spec: GridSpec, point: tuple[float, float], ego: Pose2D) -> tuple[int, int] | None:
    """Map a world point into (row, col), or None when outside the grid.

    Ego-relative rotation, then translation to grid frame, then floor
    division by the cell size; points exactly on a cell boundary go to the
    cell whose lower edge they sit on.
    """
    px, py = point
    if not (math.isfinite(px) and math.isfinite(py)):
        raise DomainError("point must be finite")
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    dx, dy = px - ego.x, py - ego.y
    xr = c * dx - s * dy
    yr = s * dx + c * dy
    half = spec.side_cells // 2
    col = math.floor(xr / spec.cell_size) + half
    row = math.floor(yr / spec.cell_size) + half
    if 0 <= row < spec.side_cells and 0 <= col < spec.side_cells:
        return row, col
    return None


def cell_centers(spec: GridSpec, ego: Pose2D) -> tuple[np.ndarray, np.ndarray]:
    """World coordinates of every cell center; two (side, side) arrays."""
    half = spec.side_cells // 2
    idx = (np.arange(spec.side_cells) - half + 0.5) * spec.cell_size
    xr, yr = np.meshgrid(idx, idx)  # xr varies along columns, yr along rows
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    wx = ego.x + c * xr + s * yr
    wy = ego.y - s * xr + c * yr
    return wx, wy


def trace_ray(spec: GridSpec, from_cell: tuple[int, int], to_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """Supercover traversal between two cell centers.

    Visits every cell the center-to-center segment intersects, ordered from
    start to end, endpoints included; a segment passing exactly through a
    cell corner includes both edge-touched neighbours.
    """
    for cell in (from_cell, to_cell):
        r, c = cell
        if not (0 <= r < spec.side_cells and 0 <= c < spec.side_cells):
            raise DomainError(f"cell {cell} out of bounds")
    (y0, x0), (y1, x1) = from_cell, to_cell
    dx, dy = x1 - x0, y1 - y0
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    x, y = x0, y0
    cells = [(y, x)]
    ix = iy = 0
    while ix < nx or iy < ny:
        decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if decision == 0:
            # exact corner crossing: include both side cells
            cells.append((y, x + sx))
            cells.append((y + sy, x))
            x += sx
            y += sy
            ix += 1
            iy += 1
        elif decision < 0:
            x += sx
            ix += 1
        else:
            y += sy
            iy += 1
        cells.append((y, x))
    return cells


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def logodds_update(cell_logodds: float, p_o: float, clamp: float = DEFAULT_LOGODDS_CLAMP) -> float:
    """Accumulate one occupancy probability into a cell's log-odds."""
    if not (0.0 < p_o < 1.0):
        raise DomainError(f"p_o must be strictly inside (0,1), got {p_o}")
    return float(np.clip(cell_logodds + logit(p_o), -clamp, clamp))


def prob_to_evidential(p: ProbabilisticState) -> EvidentialState:
    """Linear pignistic-style map from occupancy probability to belief masses.

    Maps the uninformative p_o = 0.5 to full unknown and the extremes to
    full belief; at most one of b_f, b_o is nonzero.
    """
    b_o = max(0.0, 2.0 * p.p_o - 1.0)
    b_f = max(0.0, 1.0 - 2.0 * p.p_o)
    return EvidentialState(b_f=b_f, b_o=b_o, u=1.0 - b_o - b_f)


def prob_to_evidential_array(p_o: np.ndarray) -> np.ndarray:
    """Array version of prob_to_evidential: (..., ) -> (3, ...)."""
    p_o = np.asarray(p_o, dtype=np.float64)
    b_o = np.maximum(0.0, 2.0 * p_o - 1.0)
    b_f = np.maximum(0.0, 1.0 - 2.0 * p_o)
    return np.stack([b_f, b_o, 1.0 - b_o - b_f])


def dempster_combine(m1: EvidentialState, m2: EvidentialState) -> EvidentialState:
    """Dempster's rule of combination on the frame {free, occupied}."""
    conflict = m1.b_f * m2.b_o + m1.b_o * m2.b_f
    if conflict >= 1.0 - 1e-12:
        raise DomainError("total conflict: Dempster's rule undefined")
    norm = 1.0 - conflict
    b_f = (m1.b_f * m2.b_f + m1.b_f * m2.u + m1.u * m2.b_f) / norm
    b_o = (m1.b_o * m2.b_o + m1.b_o * m2.u + m1.u * m2.b_o) / norm
    u = m1.u * m2.u / norm
    # guard against float drift past the simplex boundary
    total = b_f + b_o + u
    b_f, b_o, u = b_f / total, b_o / total, u / total
    return EvidentialState(b_f=min(b_f, 1.0), b_o=min(b_o, 1.0), u=min(u, 1.0))


def extract_patch(src: Grid2D, ego: Pose2D, spec: GridSpec) -> Grid2D:
    """Cut an ego-centered, ego-aligned evidential patch out of a larger map.

    Nearest-neighbor resampling; cells falling outside the source map are
    full-unknown.
    """
    if src.channels != ("b_f", "b_o", "u"):
        raise DomainError("extract_patch expects an evidential grid")
    wx, wy = cell_centers(spec, ego)
    o = src.origin
    c, s = math.cos(o.heading), math.sin(o.heading)
    dx, dy = wx - o.x, wy - o.y
    xr = c * dx - s * dy
    yr = s * dx + c * dy
    half = src.spec.side_cells // 2
    col = np.floor(xr / src.spec.cell_size).astype(np.int64) + half
    row = np.floor(yr / src.spec.cell_size).astype(np.int64) + half
    inside = (row >= 0) & (row < src.spec.side_cells) & (col >= 0) & (col < src.spec.side_cells)
    out = np.zeros((3, spec.side_cells, spec.side_cells), dtype=src.data.dtype)
    out[2] = 1.0
    rr, cc = row[inside], col[inside]
    out[:, inside] = src.data[:, rr, cc]
    return Grid2D(spec, out, channels=("b_f", "b_o", "u"), origin=ego)


# ---------------------------------------------------------------------------
# serialization: JSON header line + little-endian float32 payload
# ---------------------------------------------------------------------------

def grid_to_bytes(grid: Grid2D) -> bytes:
    header = {
        "side_cells": grid.spec.side_cells,
        "cell_size": grid.spec.cell_size,
        "channels": list(grid.channels),
        "element_type": "f32",
        "origin": {"x": grid.origin.x, "y": grid.origin.y, "heading": grid.origin.heading},
    }
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + payload


def grid_from_bytes(blob: bytes) -> Grid2D:
    nl = blob.find(b"\n")
    if nl < 0:
        raise EvgridError("grid blob has no header line")
    header = json.loads(blob[:nl].decode())
    if header.get("element_type") != "f32":
        raise EvgridError(f"unsupported element type {header.get('element_type')!r}")
    spec = GridSpec(side_cells=header["side_cells"], cell_size=header["cell_size"])
    channels = tuple(header["channels"])
    n = spec.side_cells
    data = np.frombuffer(blob[nl + 1:], dtype="<f4").reshape(len(channels), n, n).astype(np.float64)
    o = header.get("origin", {})
    origin = Pose2D(o.get("x", 0.0), o.get("y", 0.0), o.get("heading", 0.0))
    return Grid2D(spec, data, channels, origin)


def write_grid(path, grid: Grid2D) -> None:
    try:
        with open(path, "wb") as f:
            f.write(grid_to_bytes(grid))
    except OSError as exc:
        raise EvgridError(f"cannot write grid file {path}: {exc}") from exc


def read_grid(path) -> Grid2D:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise EvgridError(f"cannot read grid file {path}: {exc}") from exc
    return grid_from_bytes(blob)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render_pgm(channel: np.ndarray) -> bytes:
    """8-bit binary PGM of one channel, scaled from [0, max(1, peak)]."""
    arr = np.asarray(channel, dtype=np.float64)
    peak = max(1.0, float(arr.max(initial=0.0)))
    img = np.clip(arr / peak * 255.0, 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def render_ppm(grid: Grid2D) -> bytes:
    """8-bit binary PPM of an evidential grid: b_f green, b_o red, u blue."""
    if grid.data.shape[0] != 3:
        raise DomainError("PPM rendering needs a 3-channel evidential grid")
    b_f, b_o, u = grid.data
    rgb = np.stack([b_o, b_f, u], axis=-1)
    img = np.clip(rgb * 255.0, 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + img.tobytes()
