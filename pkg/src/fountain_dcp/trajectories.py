"""Ballistic fountain kinematics in the cavity frame.

Atoms are launched vertically in the lab frame and fly on exact parabolas.
The cavity (with its apertures and detection zone) may be tilted by a small
angle; we express every trajectory in the cavity frame, where the structure
is upright and the launch velocity and gravity pick up small transverse
components. The frame is built from exact orthonormal vectors, so to first
order in the tilt the launch velocity gains -v*theta transverse and gravity
gains +g*theta transverse, matching the usual small-angle bookkeeping.

Cavity-frame coordinates: z = 0 at the lower endcap plane, z = height at the
upper one, the axis through the endcap hole centers. The tilt pivot sits at
the cavity center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cavity import CavityGeometry
from .constants import CS133_MASS, G_EARTH, KB
from .errors import ConfigError

MAX_TILT = 0.010  # rad; beyond this the first-order tilt bookkeeping degrades

NORMALS_PER_TRAJECTORY = 6  # 3 position + 3 velocity draws, always consumed


@dataclass(frozen=True)
class CloudModel:
    """Gaussian launch cloud: positions and thermal velocities.

    ``position_mean``/``position_sigma`` are lab-frame meters at launch time;
    the z components let a cloud start above the nominal launch point.
    Velocity spread per axis is the thermal sigma sqrt(kB T / m) on top of
    the vertical launch speed.
    """

    position_mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    position_sigma: tuple[float, float, float] = (0.003, 0.003, 0.003)
    temperature: float = 1.0e-6
    launch_speed: float = 4.327
    atom_mass: float = CS133_MASS

    def __post_init__(self) -> None:
        if min(self.position_sigma) < 0.0:
            raise ConfigError("position sigma must be non-negative")
        if self.temperature < 0.0:
            raise ConfigError("temperature must be non-negative")
        if self.launch_speed <= 0.0:
            raise ConfigError("launch speed must be positive")
        if self.atom_mass <= 0.0:
            raise ConfigError("atom mass must be positive")

    def thermal_sigma_v(self) -> float:
        return math.sqrt(KB * self.temperature / self.atom_mass)


@dataclass(frozen=True)
class TiltVector:
    """Cavity tilt, radians: parallel tips toward phi = 0, perpendicular
    toward phi = pi/2. The offsets model an unknown mechanical bias added on
    top of the commanded tilt (what zero-tilt searches go hunting for)."""

    parallel: float = 0.0
    perpendicular: float = 0.0
    parallel_offset: float = 0.0
    perpendicular_offset: float = 0.0

    def totals(self) -> tuple[float, float]:
        tp = self.parallel + self.parallel_offset
        tq = self.perpendicular + self.perpendicular_offset
        if abs(tp) > MAX_TILT or abs(tq) > MAX_TILT:
            raise ConfigError(f"tilt exceeds the {MAX_TILT * 1e3:.0f} mrad small-angle bound")
        return tp, tq


@dataclass(frozen=True)
class Aperture:
    z: float  # cavity-frame height of the plane, m
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ConfigError("aperture radius must be positive")


@dataclass(frozen=True)
class DetectionProfile:
    """Detection weighting at the downward crossing of the detection plane.

    ``gaussian_beam`` weights atoms by exp(-2 x_b^2 / w^2) where x_b is the
    transverse coordinate across the detection beam; the beam extends along
    ``beam_axis_azimuth`` so the efficiency varies perpendicular to it. The
    same weight applies to both hyperfine states (normalized detection).
    """

    kind: str = "uniform"
    waist: float = 0.0099
    beam_axis_azimuth: float = 0.5 * math.pi

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "gaussian_beam"):
            raise ConfigError(f"unknown detection kind {self.kind!r}")
        if self.kind == "gaussian_beam" and self.waist <= 0.0:
            raise ConfigError("detection waist must be positive")


@dataclass(frozen=True)
class FountainLayout:
    """Vertical arrangement, meters above the launch point."""

    cavity_midplane_height: float = 0.50
    detection_height: float = 0.10

    def __post_init__(self) -> None:
        if self.cavity_midplane_height <= 0.0:
            raise ConfigError("cavity must sit above the launch point")


def default_apertures(geometry: CavityGeometry) -> tuple[Aperture, ...]:
    """Endcap holes plus the outer ends of the cutoff tube bores.

    Transverse motion is nearly linear over a traversal, so rho^2 is convex
    in time and its maximum on any segment sits at the segment ends; checking
    the four planes therefore confines atoms to the tube bore throughout.
    """
    r = geometry.endcap_hole_radius
    lt = geometry.cutoff_tube_length
    return (
        Aperture(-lt, r),
        Aperture(0.0, r),
        Aperture(geometry.height, r),
        Aperture(geometry.height + lt, r),
    )


# ---------------------------------------------------------------------------
# frame handling


def cavity_frame_matrix(tilt: TiltVector) -> np.ndarray:
    """Columns are the cavity-frame basis vectors in lab coordinates."""
    tp, tq = tilt.totals()
    z_axis = np.array([tp, tq, 1.0])
    z_axis /= np.linalg.norm(z_axis)
    x_axis = np.array([1.0, 0.0, 0.0]) - z_axis[0] * z_axis
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return np.column_stack([x_axis, y_axis, z_axis])


@dataclass(frozen=True)
class TrajectoryBatch:
    """Parabolic trajectories in the cavity frame: r(t) = p + v t + a t^2 / 2.

    Positions at t = 0 refer to launch time. The acceleration is shared by
    the whole batch (rigid frame).
    """

    p: np.ndarray  # (n, 3)
    v: np.ndarray  # (n, 3)
    a: np.ndarray  # (3,)

    def __len__(self) -> int:
        return self.p.shape[0]

    def position_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, float)[:, None]
        return self.p + self.v * t + 0.5 * self.a * t * t

    def transverse_at(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, float)
        x = self.p[:, 0] + self.v[:, 0] * t + 0.5 * self.a[0] * t * t
        y = self.p[:, 1] + self.v[:, 1] * t + 0.5 * self.a[1] * t * t
        return x, y

    def apogee_z(self) -> np.ndarray:
        vz = self.v[:, 2]
        az = self.a[2]
        return self.p[:, 2] - vz * vz / (2.0 * az)


def sample_cloud(
    cloud: CloudModel, seed: int, start_index: int, count: int
) -> tuple[np.ndarray, np.ndarray]:
    """Lab-frame initial positions and velocities for trajectories
    [start_index, start_index + count).

    Each trajectory consumes exactly NORMALS_PER_TRAJECTORY standard normals
    from its own counter-based stream keyed by (seed, index), so the draw for
    trajectory i never depends on chunking or worker count.
    """
    normals = np.empty((count, NORMALS_PER_TRAJECTORY))
    for i in range(count):
        key = np.array([seed, start_index + i], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        normals[i] = gen.standard_normal(NORMALS_PER_TRAJECTORY)

    mean = np.asarray(cloud.position_mean, float)
    sigma = np.asarray(cloud.position_sigma, float)
    positions = mean + sigma * normals[:, 0:3]
    sv = cloud.thermal_sigma_v()
    velocities = sv * normals[:, 3:6]
    velocities[:, 2] += cloud.launch_speed
    return positions, velocities


def to_cavity_frame(
    positions: np.ndarray,
    velocities: np.ndarray,
    tilt: TiltVector,
    layout: FountainLayout,
    geometry: CavityGeometry,
) -> TrajectoryBatch:
    rot = cavity_frame_matrix(tilt)
    center = np.array([0.0, 0.0, layout.cavity_midplane_height])
    offset = np.array([0.0, 0.0, 0.5 * geometry.height])
    p = (positions - center) @ rot + offset
    v = velocities @ rot
    a = np.array([0.0, 0.0, -G_EARTH]) @ rot
    return TrajectoryBatch(p=p, v=v, a=a)


def nominal_batch(
    cloud: CloudModel,
    tilt: TiltVector,
    layout: FountainLayout,
    geometry: CavityGeometry,
    transverse_offset: tuple[float, float] = (0.0, 0.0),
) -> TrajectoryBatch:
    """Single deterministic trajectory at the cloud mean (no thermal draw)."""
    p = np.array(
        [
            [
                cloud.position_mean[0] + transverse_offset[0],
                cloud.position_mean[1] + transverse_offset[1],
                cloud.position_mean[2],
            ]
        ]
    )
    v = np.array([[0.0, 0.0, cloud.launch_speed]])
    return to_cavity_frame(p, v, tilt, layout, geometry)


# ---------------------------------------------------------------------------
# plane crossings, apertures, detection


def z_crossing_times(batch: TrajectoryBatch, z_plane: float):
    """Ascending and descending crossing times of a cavity-frame z plane.

    Returns (t_up, t_down, exists); times are meaningful only where exists.
    """
    az = batch.a[2]
    vz = batch.v[:, 2]
    pz = batch.p[:, 2]
    disc = vz * vz + 2.0 * az * (z_plane - pz)
    exists = disc > 0.0
    root = np.sqrt(np.maximum(disc, 0.0))
    t1 = (-vz + root) / az
    t2 = (-vz - root) / az
    return np.minimum(t1, t2), np.maximum(t1, t2), exists


def field_region_bounds(geometry: CavityGeometry) -> tuple[float, float]:
    lt = geometry.cutoff_tube_length
    return -lt, geometry.height + lt


def traversal_windows(batch: TrajectoryBatch, geometry: CavityGeometry):
    """Time windows of the upward and downward passes through the field
    region (cavity plus cutoff tubes).

    Returns (t_up_enter, t_up_exit, t_dn_enter, t_dn_exit, complete) where
    complete marks atoms whose apogee clears the field region so both passes
    are whole.
    """
    z_lo, z_hi = field_region_bounds(geometry)
    t_lo_up, t_lo_dn, lo_ok = z_crossing_times(batch, z_lo)
    t_hi_up, t_hi_dn, hi_ok = z_crossing_times(batch, z_hi)
    complete = lo_ok & hi_ok & (t_lo_up > 0.0)
    return t_lo_up, t_hi_up, t_hi_dn, t_lo_dn, complete


def survive_apertures(
    batch: TrajectoryBatch,
    apertures: tuple[Aperture, ...],
    geometry: CavityGeometry,
) -> np.ndarray:
    """Boolean survival mask: inside every aperture on every crossing it has,
    and the apogee fully clears the field region."""
    *_, mask = traversal_windows(batch, geometry)
    mask = mask.copy()
    for ap in apertures:
        t_up, t_dn, exists = z_crossing_times(batch, ap.z)
        for t in (t_up, t_dn):
            x, y = batch.transverse_at(np.where(exists, t, 0.0))
            rho2 = x * x + y * y
            mask &= ~exists | (rho2 <= ap.radius * ap.radius)
    return mask


def detection_weights(
    batch: TrajectoryBatch,
    detection: DetectionProfile,
    layout: FountainLayout,
    geometry: CavityGeometry,
) -> np.ndarray:
    """Per-atom detection weight at the downward detection-plane crossing."""
    n = len(batch)
    z_det = (
        layout.detection_height
        - layout.cavity_midplane_height
        + 0.5 * geometry.height
    )
    _, t_dn, exists = z_crossing_times(batch, z_det)
    if detection.kind == "uniform":
        return np.where(exists, 1.0, 0.0)
    x, y = batch.transverse_at(np.where(exists, t_dn, 0.0))
    beta = detection.beam_axis_azimuth
    ux = math.cos(beta - 0.5 * math.pi)
    uy = math.sin(beta - 0.5 * math.pi)
    x_b = x * ux + y * uy
    w = np.exp(-2.0 * x_b * x_b / (detection.waist**2))
    return np.where(exists, w, 0.0)


# ---------------------------------------------------------------------------
# nominal timing


def ramsey_time(
    cloud: CloudModel, layout: FountainLayout, geometry: CavityGeometry
) -> float:
    """Free-precession time of the nominal atom: between its midplane
    crossings, up and down."""
    batch = nominal_batch(cloud, TiltVector(), layout, geometry)
    t_up, t_dn, exists = z_crossing_times(batch, 0.5 * geometry.height)
    if not exists[0]:
        raise ConfigError("nominal trajectory does not reach the cavity midplane")
    return float(t_dn[0] - t_up[0])


def default_delta_nu(
    cloud: CloudModel, layout: FountainLayout, geometry: CavityGeometry
) -> float:
    """Nominal Ramsey fringe full width 1/(2T), Hz."""
    return 1.0 / (2.0 * ramsey_time(cloud, layout, geometry))


def check_clears_field_region(
    cloud: CloudModel, layout: FountainLayout, geometry: CavityGeometry
) -> None:
    batch = nominal_batch(cloud, TiltVector(), layout, geometry)
    *_, complete = traversal_windows(batch, geometry)
    if not complete[0]:
        raise ConfigError(
            "launch speed does not carry the nominal atom past the cavity"
        )
