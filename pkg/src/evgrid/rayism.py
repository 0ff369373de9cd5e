"""Detection-based reference inverse sensor model (Ray-ISM).

One radar detection induces an inverse detection model (IDM): a closed-form
occupancy probability field obtained by integrating an ideal radial sensor
model against Gaussian range noise, modulated by a unit-peak Gaussian
angular kernel. IDMs are accumulated per cell in log-odds and finally
converted to belief masses for scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from evgrid.errors import DomainError
from evgrid.grid import (
    DEFAULT_LOGODDS_CLAMP,
    Grid2D,
    GridSpec,
    Pose2D,
    cell_centers,
    prob_to_evidential_array,
    wrap_angle,
)


@dataclass(frozen=True)
class Detection:
    """One radar return in the sensor frame."""

    r: float
    phi: float
    v_r: float = 0.0
    sensor_id: int = 0
    t: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.r, self.phi, self.v_r)):
            raise DomainError("detection fields must be finite")
        if self.r < 0.0:
            raise DomainError(f"range must be >= 0, got {self.r}")


@dataclass(frozen=True)
class RadarNoiseModel:
    sigma_r: float = 0.25
    sigma_phi: float = 0.02

    def __post_init__(self) -> None:
        if self.sigma_r <= 0.0 or self.sigma_phi <= 0.0:
            raise DomainError("noise sigmas must be strictly positive")


@dataclass(frozen=True)
class RayIsmConfig:
    """Plateaus of the ideal radial model plus the sensor noise.

    eps_free is the free-space plateau before the target, p_max the occupied
    plateau within the target band of thickness delta; behind the target the
    ideal model is 0.5 (unknown, no occlusion reasoning).
    """

    eps_free: float = 0.05
    p_max: float = 0.95
    delta: float = 0.5
    noise: RadarNoiseModel = field(default_factory=RadarNoiseModel)
    prob_clamp: float = 0.01
    logodds_clamp: float = DEFAULT_LOGODDS_CLAMP

    def __post_init__(self) -> None:
        if not (0.0 < self.eps_free < 0.5 < self.p_max < 1.0):
            raise DomainError("need 0 < eps_free < 0.5 < p_max < 1")
        if self.delta <= 0.0:
            raise DomainError("occupied band thickness must be > 0")
        if not (0.0 < self.prob_clamp < 0.5):
            raise DomainError("prob_clamp must be in (0, 0.5)")


def range_model(r, r_meas: float, cfg: RayIsmConfig):
    """Occupancy probability along the beam axis given a range measurement.

    Closed form of the ideal piecewise model integrated against Gaussian
    range noise N(r_meas, sigma_r); vectorized over r.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("evaluation range must be >= 0")
    s = cfg.noise.sigma_r
    hi = ndtr((r + cfg.delta / 2.0 - r_meas) / s)
    lo = ndtr((r - cfg.delta / 2.0 - r_meas) / s)
    p = cfg.eps_free * (1.0 - hi) + cfg.p_max * (hi - lo) + 0.5 * lo
    return float(p) if p.ndim == 0 else p


def angular_kernel(phi, phi_meas: float, sigma_phi: float):
    """Unit-peak Gaussian weight of the angular offset, wrapped to (-pi, pi]."""
    dphi = wrap_angle(np.asarray(phi, dtype=np.float64) - phi_meas)
    g = np.exp(-np.square(dphi) / (2.0 * sigma_phi**2))
    return float(g) if np.ndim(g) == 0 else g


def idm(r, phi, det: Detection, cfg: RayIsmConfig):
    """Inverse detection model: 0.5 + (range_model - 0.5) * angular kernel."""
    return 0.5 + (range_model(r, det.r, cfg) - 0.5) * angular_kernel(phi, det.phi, cfg.noise.sigma_phi)


def rasterize_idm(det: Detection, sensor_pose: Pose2D, grid: Grid2D, cfg: RayIsmConfig) -> None:
    """Accumulate one detection's IDM into a log-odds grid, in place.

    Only cells inside the beam footprint (range <= r_meas + 4 sigma_r,
    |angular offset| <= 4 sigma_phi) are touched; outside it the IDM is
    indistinguishable from 0.5 and contributes zero logit.
    """
    wx, wy = cell_centers(grid.spec, grid.origin)
    dx, dy = wx - sensor_pose.x, wy - sensor_pose.y
    rng = np.hypot(dx, dy)
    phi = wrap_angle(np.arctan2(dy, dx) - sensor_pose.heading)
    dphi = wrap_angle(phi - det.phi)
    mask = (rng <= det.r + 4.0 * cfg.noise.sigma_r) & (np.abs(dphi) <= 4.0 * cfg.noise.sigma_phi)
    if not mask.any():
        return
    p = idm(rng[mask], phi[mask], det, cfg)
    p = np.clip(p, cfg.prob_clamp, 1.0 - cfg.prob_clamp)
    lo = grid.data[0]
    lo[mask] = np.clip(lo[mask] + np.log(p / (1.0 - p)), -cfg.logodds_clamp, cfg.logodds_clamp)


def ray_ism_scene(
    detections: list[Detection],
    sensor_poses: dict[int, Pose2D],
    spec: GridSpec,
    cfg: RayIsmConfig | None = None,
    ego: Pose2D = Pose2D(),
    dynamic_velocity_threshold: float = 0.5,
) -> Grid2D:
    """Accumulate all static detections of one scene into an evidential grid.

    Detections whose |radial velocity| exceeds the threshold are treated as
    dynamic and skipped; the remaining IDMs are summed in log-odds and the
    per-cell probability is mapped linearly onto (b_f, b_o, u).
    """
    cfg = cfg or RayIsmConfig()
    logodds = Grid2D.zeros(spec, channels=("logodds",), origin=ego)
    for det in detections:
        if abs(det.v_r) > dynamic_velocity_threshold:
            continue
        if det.sensor_id not in sensor_poses:
            raise DomainError(f"no pose for sensor {det.sensor_id}")
        rasterize_idm(det, sensor_poses[det.sensor_id], logodds, cfg)
    p_o = 1.0 / (1.0 + np.exp(-logodds.data[0]))
    return Grid2D(spec, prob_to_evidential_array(p_o), channels=("b_f", "b_o", "u"), origin=ego)
