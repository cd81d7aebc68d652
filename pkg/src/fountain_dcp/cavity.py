"""Microwave cavity geometry and field synthesis.

The model is a TE011 cylindrical cavity. The large standing wave H0z is
analytic: J0(chi01' rho/R) sin(pi z/d) inside the cavity, extended by an
evanescent exponential tail inside the endcap hole columns. Small traveling
("distributed phase") components g_m(rho, z) with azimuthal orders m = 0, 1, 2
ride on top of it,

    H_z = H0z + (2 dw + i) * sum_k w_k * sum_m g_m(rho, z) cos(m (phi - phi_k))

where dw is the cavity detuning in half-linewidths (Delta omega / Gamma) and
w_k is the complex weight of feed k. The field phase seen by the atoms is
Phi = Im[H_z] / Re[H_z], first order in |g|/|H0z|.

Feed weights are normalized by the coherent sum of the drives, so the standing
wave always enters with unit weight and only the *relative* feed bookkeeping
reaches the traveling components. This is what makes a two-feed phase
imbalance Delta-psi excite the m = 1 component with the exact i*tan(psi/2)
coefficient relative to H0z. Fields carry an exp(-i omega t) convention.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import j0

from .constants import CHI01P, CHI11P, CS_CLOCK_FREQUENCY, SPEED_OF_LIGHT
from .errors import ConfigError, FieldNullError

# Feeds must sit on the symmetry axes of the feed-pair geometry.
ALLOWED_FEED_AZIMUTHS = (0.0, math.pi, 0.5 * math.pi, -0.5 * math.pi)

# |g| / |H0z| above this is outside the perturbative regime the phase formula
# assumes; synthesis still proceeds but the user is warned.
PERTURBATIVE_RATIO_WARN = 1e-2

DEFAULT_NULL_FLOOR = 1e-6  # fraction of the H0z peak


@dataclass(frozen=True)
class CavityGeometry:
    """Cylindrical TE011 cavity with centered endcap holes.

    Lengths in meters. ``tm_mode_frequencies`` records the TM-filter mode
    pair of the endcap design; it is bookkeeping metadata and never enters
    the synthesis.
    """

    radius: float = 0.025
    height: float = 0.02687
    endcap_hole_radius: float = 0.006
    cutoff_tube_length: float = 0.020
    loaded_q: float = 7000.0
    cutoff_decay_length: float | None = None
    operating_frequency: float = CS_CLOCK_FREQUENCY
    tm_mode_frequencies: tuple[float, float] = (9.1926e9, 9.6436e9)

    def __post_init__(self) -> None:
        if min(self.radius, self.height, self.endcap_hole_radius) <= 0.0:
            raise ConfigError("cavity dimensions must be positive")
        if self.endcap_hole_radius >= self.radius:
            raise ConfigError("endcap hole radius must be smaller than the cavity radius")
        if self.loaded_q <= 0.0:
            raise ConfigError("loaded Q must be positive")
        if self.cutoff_tube_length < 0.0:
            raise ConfigError("cutoff tube length must be non-negative")
        if self.cutoff_decay_length is not None and self.cutoff_decay_length <= 0.0:
            raise ConfigError("cutoff decay length must be positive")

    def decay_length(self) -> float:
        """Evanescent 1/e length in the endcap hole columns.

        Defaults to the below-cutoff decay constant of the lowest (TE11) mode
        of a circular guide with the hole radius at the operating frequency.
        """
        if self.cutoff_decay_length is not None:
            return self.cutoff_decay_length
        kc = CHI11P / self.endcap_hole_radius
        k = 2.0 * math.pi * self.operating_frequency / SPEED_OF_LIGHT
        gamma_sq = kc * kc - k * k
        if gamma_sq <= 0.0:
            raise ConfigError("endcap hole is not below cutoff; give cutoff_decay_length")
        return 1.0 / math.sqrt(gamma_sq)

    def cutoff_match_z(self) -> float:
        """Height above the endcap plane where the exponential tail takes over.

        Chosen so sin(pi z/d) and the decaying exponential match with equal
        value and slope, keeping the hole-column profile C1.
        """
        lam = self.decay_length()
        zc = (self.height / math.pi) * math.atan(math.pi * lam / self.height)
        if zc >= 0.5 * self.height:
            raise ConfigError("cutoff decay length too long for this cavity height")
        return zc


def h0z_te011(rho, z, geometry: CavityGeometry):
    """Axial magnetic field of the TE011 standing wave, peak normalized to 1.

    Inside the cavity this is J0(chi01' rho/R) sin(pi z/d). Within the endcap
    hole columns (rho <= hole radius) the longitudinal profile hands over to a
    C1-matched exponential below ``cutoff_match_z`` and keeps decaying into
    the cutoff tubes; under the endcap metal the field ends at z = 0 and
    z = height. Accepts scalars or arrays, broadcasting rho against z.
    """
    rho_arr, z_arr = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
    radial = j0(CHI01P * rho_arr / geometry.radius)

    d = geometry.height
    zc = geometry.cutoff_match_z()
    lam = geometry.decay_length()
    sin_zc = math.sin(math.pi * zc / d)

    in_hole = rho_arr <= geometry.endcap_hole_radius
    # distance below the lower match plane / above the upper one
    below = zc - z_arr
    above = z_arr - (d - zc)
    outside_lower = below > 0.0
    outside_upper = above > 0.0

    profile = np.sin(np.pi * np.clip(z_arr, 0.0, d) / d)
    tail_lower = sin_zc * np.exp(np.minimum(-below, 0.0) / lam)
    tail_upper = sin_zc * np.exp(np.minimum(-above, 0.0) / lam)
    profile = np.where(in_hole & outside_lower, tail_lower, profile)
    profile = np.where(in_hole & outside_upper, tail_upper, profile)
    # under the metal there is no field outside the cavity proper
    dead = (~in_hole) & ((z_arr < 0.0) | (z_arr > d))
    profile = np.where(dead, 0.0, profile)

    out = radial * profile
    if np.ndim(rho) == 0 and np.ndim(z) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# field maps


@dataclass(frozen=True)
class FieldComponent:
    m: int
    parity: str  # "cos" or "sin"
    values: np.ndarray  # complex, shape (n_rho, n_z)


@dataclass(frozen=True)
class FieldMap:
    """Gridded traveling-wave components over a (rho, z) rectangle.

    ``h0z_values`` optionally overrides the analytic standing wave with a
    gridded one (same grid). Components are interpolated bilinearly and are
    zero outside their grid.
    """

    rho_nodes: np.ndarray
    z_nodes: np.ndarray
    components: tuple[FieldComponent, ...]
    h0z_values: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def validate_field_map(fmap: FieldMap, geometry: CavityGeometry) -> None:
    """Check grid and component invariants; raises ConfigError on violation."""
    rho_nodes = np.asarray(fmap.rho_nodes, float)
    z_nodes = np.asarray(fmap.z_nodes, float)
    for name, nodes in (("rho", rho_nodes), ("z", z_nodes)):
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigError(f"{name} grid needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ConfigError(f"{name} grid has non-finite nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ConfigError(f"{name} grid must be strictly increasing")
    if rho_nodes[0] > 1e-12 or rho_nodes[-1] < geometry.radius - 1e-12:
        raise ConfigError("rho grid must span [0, cavity radius]")
    if z_nodes[0] > 1e-12 or z_nodes[-1] < geometry.height - 1e-12:
        raise ConfigError("z grid must cover [0, cavity height]")

    shape = (rho_nodes.size, z_nodes.size)
    peak = 1.0
    if fmap.h0z_values is not None:
        if fmap.h0z_values.shape != shape:
            raise ConfigError("h0z override shape does not match the grid")
        peak = float(np.max(np.abs(fmap.h0z_values)))
        if peak == 0.0:
            raise ConfigError("h0z override is identically zero")

    gmax = 0.0
    for comp in fmap.components:
        if comp.m not in (0, 1, 2):
            raise ConfigError(f"azimuthal order m={comp.m} not supported (only 0..2)")
        if comp.parity not in ("cos", "sin"):
            raise ConfigError(f"unknown parity {comp.parity!r}")
        if comp.parity == "sin" and comp.m == 0:
            raise ConfigError("a sine-parity m=0 component is identically zero")
        if comp.values.shape != shape:
            raise ConfigError(f"component m={comp.m} shape does not match the grid")
        if not np.all(np.isfinite(comp.values)):
            raise ConfigError(f"component m={comp.m} has non-finite values")
        cmax = float(np.max(np.abs(comp.values)))
        gmax = max(gmax, cmax)
        if comp.m >= 1 and cmax > 0.0:
            axis = np.max(np.abs(comp.values[0, :]))
            if axis > 1e-9 * cmax:
                raise ConfigError(
                    f"m={comp.m} component must vanish on the axis (got {axis:.3e})"
                )
    if gmax > PERTURBATIVE_RATIO_WARN * peak:
        warnings.warn(
            "field map leaves the perturbative regime: max|g|/|H0z| = "
            f"{gmax / peak:.2e}",
            stacklevel=2,
        )


# ---------------------------------------------------------------------------
# parametric model


@dataclass(frozen=True)
class ParametricGParams:
    """Amplitudes and grid resolution of the built-in traveling-wave model.

    Amplitudes are relative to the unit H0z peak. The m = 1 components scale
    with reference_q / loaded_q, mirroring how the power flow between feed
    and far wall drops in a higher-Q cavity. ``g1_sin_amplitude`` populates
    the sine-parity map that models azimuthally inhomogeneous wall loss; it
    stays empty at the default 0.
    """

    g0_amplitude: float = 1e-4
    g1_amplitude: float = 1e-4
    g2_amplitude: float = 1e-5
    g1_sin_amplitude: float = 0.0
    reference_q: float = 7000.0
    n_rho: int = 121
    n_z: int = 161


def parametric_g_model(
    geometry: CavityGeometry, params: ParametricGParams | None = None
) -> FieldMap:
    """Build a FieldMap from smooth parametric profiles.

    Finite-element maps of real cavities are not published, so this model
    keeps only the structure that the physics pins down:

    * m = 0: phase profile Phi0(z) = a0 * ((2 z/d - 1)^2 - 1/3), a zero-mean
      parabola symmetric about the midplane (power flows from the midplane
      feeds to both endcaps alike). The map stores g0 = Phi0(z) * H0z so the
      transverse phase gradient vanishes identically.
    * m = 1, cosine parity: uniform transverse phase gradient along the feed
      axis, g1 = a1 * (rho/R) * sin(pi z/d), amplitude inversely
      proportional to the loaded Q.
    * m = 1, sine parity (wall loss): same radial form with an
      endcap-weighted longitudinal profile (1 + cos(2 pi z/d)).
    * m = 2: exactly quadrupolar, g2 = a2 * (rho/R)^2 * sin(pi z/d).

    The longitudinal shapes are documented approximations, not measured
    values.
    """
    params = params or ParametricGParams()
    for name in ("g0_amplitude", "g1_amplitude", "g2_amplitude", "g1_sin_amplitude"):
        if getattr(params, name) < 0.0:
            raise ConfigError(f"{name} must be non-negative")
    if params.reference_q <= 0.0:
        raise ConfigError("reference_q must be positive")
    if params.n_rho < 2 or params.n_z < 2:
        raise ConfigError("parametric grid needs at least 2 nodes per axis")

    d = geometry.height
    rho_nodes = np.linspace(0.0, geometry.radius, params.n_rho)
    z_nodes = np.linspace(0.0, d, params.n_z)
    rho_g, z_g = np.meshgrid(rho_nodes, z_nodes, indexing="ij")

    q_scale = params.reference_q / geometry.loaded_q
    sin_z = np.sin(np.pi * z_g / d)
    rho_rel = rho_g / geometry.radius

    comps: list[FieldComponent] = []
    if params.g0_amplitude > 0.0:
        phi0 = (2.0 * z_g / d - 1.0) ** 2 - 1.0 / 3.0
        g0 = params.g0_amplitude * phi0 * h0z_te011(rho_g, z_g, geometry)
        comps.append(FieldComponent(0, "cos", g0.astype(complex)))
    if params.g1_amplitude > 0.0:
        g1 = params.g1_amplitude * q_scale * rho_rel * sin_z
        comps.append(FieldComponent(1, "cos", g1.astype(complex)))
    if params.g1_sin_amplitude > 0.0:
        loss_profile = 1.0 + np.cos(2.0 * np.pi * z_g / d)
        g1s = params.g1_sin_amplitude * q_scale * rho_rel * sin_z * loss_profile
        comps.append(FieldComponent(1, "sin", g1s.astype(complex)))
    if params.g2_amplitude > 0.0:
        g2 = params.g2_amplitude * rho_rel**2 * sin_z
        comps.append(FieldComponent(2, "cos", g2.astype(complex)))

    fmap = FieldMap(
        rho_nodes=rho_nodes,
        z_nodes=z_nodes,
        components=tuple(comps),
        meta={
            "model": "parametric",
            "g0_amplitude": params.g0_amplitude,
            "g1_amplitude": params.g1_amplitude,
            "g2_amplitude": params.g2_amplitude,
            "g1_sin_amplitude": params.g1_sin_amplitude,
            "reference_q": params.reference_q,
        },
    )
    validate_field_map(fmap, geometry)
    return fmap


# ---------------------------------------------------------------------------
# feeds


@dataclass(frozen=True)
class Feed:
    azimuth: float
    amplitude: float = 1.0
    phase: float = 0.0
    # Relative efficiency with which this feed excites the traveling
    # components; models unequal feed coupling at equal standing-wave drive.
    g_coupling: float = 1.0


@dataclass(frozen=True)
class FeedConfig:
    """Drive bookkeeping: who feeds the cavity, and how far off resonance.

    ``normalized_detuning`` is the cavity detuning in half linewidths,
    Delta-omega / Gamma. ``wall_loss_sin_amplitude`` multiplies any
    sine-parity components of the map (inhomogeneous wall loss); it is a
    plain gain with neutral value 1.
    """

    feeds: tuple[Feed, ...] = (Feed(0.0), Feed(math.pi))
    normalized_detuning: float = 0.0
    wall_loss_sin_amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not self.feeds:
            raise ConfigError("at least one feed is required")
        for f in self.feeds:
            if not any(abs(f.azimuth - a) < 1e-9 for a in ALLOWED_FEED_AZIMUTHS):
                raise ConfigError(
                    "feed azimuth must be one of 0, pi, +pi/2, -pi/2 "
                    f"(got {f.azimuth})"
                )
            if f.amplitude < 0.0:
                raise ConfigError("feed amplitude must be non-negative")
            if f.g_coupling < 0.0:
                raise ConfigError("feed g_coupling must be non-negative")
        drive = sum(f.amplitude * cmath.exp(1j * f.phase) for f in self.feeds)
        scale = sum(f.amplitude for f in self.feeds)
        if scale == 0.0 or abs(drive) < 1e-9 * scale:
            raise ConfigError("feeds cancel: no standing wave is driven")


def single_feed(azimuth: float = 0.0) -> FeedConfig:
    return FeedConfig(feeds=(Feed(azimuth),))


def balanced_feeds(
    delta_psi: float = 0.0,
    amplitude_ratio: float = 1.0,
    normalized_detuning: float = 0.0,
    g_couplings: tuple[float, float] = (1.0, 1.0),
    wall_loss_sin_amplitude: float = 1.0,
) -> FeedConfig:
    """Two opposed feeds at phi = 0 and pi with phase imbalance delta_psi.

    delta_psi = psi_0 - psi_pi is split symmetrically between the feeds;
    amplitude_ratio = a_pi / a_0.
    """
    return FeedConfig(
        feeds=(
            Feed(0.0, 1.0, +0.5 * delta_psi, g_couplings[0]),
            Feed(math.pi, amplitude_ratio, -0.5 * delta_psi, g_couplings[1]),
        ),
        normalized_detuning=normalized_detuning,
        wall_loss_sin_amplitude=wall_loss_sin_amplitude,
    )


def feed_g_weights(feeds: FeedConfig) -> np.ndarray:
    """Complex per-feed weights of the traveling components.

    Each feed contributes a_k e^{i psi_k} (times its g_coupling), normalized
    by the coherent sum of the drives so the standing wave keeps unit weight.
    """
    drives = np.array(
        [f.amplitude * cmath.exp(1j * f.phase) for f in feeds.feeds], complex
    )
    couplings = np.array([f.g_coupling for f in feeds.feeds], float)
    return couplings * drives / drives.sum()


# ---------------------------------------------------------------------------
# interpolation and synthesis


class _GridLocator:
    """Cell lookup on a fixed 1-D grid; O(1) when the spacing is uniform."""

    def __init__(self, nodes: np.ndarray):
        self.nodes = np.asarray(nodes, float)
        self.lo = float(self.nodes[0])
        self.hi = float(self.nodes[-1])
        steps = np.diff(self.nodes)
        self.step = float(steps[0])
        self.uniform = bool(np.allclose(steps, self.step, rtol=1.0e-9, atol=0.0))

    def locate(self, x: np.ndarray):
        """(cell index, fractional position, inside mask) per query."""
        n = self.nodes.size
        if self.uniform:
            ix = ((x - self.lo) / self.step).astype(np.int64)
            ix = np.clip(ix, 0, n - 2)
        else:
            ix = np.clip(np.searchsorted(self.nodes, x) - 1, 0, n - 2)
        x0 = self.nodes[ix]
        frac = (x - x0) / (self.nodes[ix + 1] - x0)
        inside = (x >= self.lo) & (x <= self.hi)
        return ix, frac, inside


def _bilinear(nodes_x: np.ndarray, nodes_y: np.ndarray, values: np.ndarray, x, y):
    """Bilinear interpolation with zero outside the grid rectangle."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ix = np.clip(np.searchsorted(nodes_x, x) - 1, 0, nodes_x.size - 2)
    iy = np.clip(np.searchsorted(nodes_y, y) - 1, 0, nodes_y.size - 2)
    x0 = nodes_x[ix]
    y0 = nodes_y[iy]
    tx = (x - x0) / (nodes_x[ix + 1] - x0)
    ty = (y - y0) / (nodes_y[iy + 1] - y0)
    inside = (
        (x >= nodes_x[0]) & (x <= nodes_x[-1]) & (y >= nodes_y[0]) & (y <= nodes_y[-1])
    )
    v00 = values[ix, iy]
    v10 = values[ix + 1, iy]
    v01 = values[ix, iy + 1]
    v11 = values[ix + 1, iy + 1]
    out = (
        v00 * (1.0 - tx) * (1.0 - ty)
        + v10 * tx * (1.0 - ty)
        + v01 * (1.0 - tx) * ty
        + v11 * tx * ty
    )
    return np.where(inside, out, 0.0)


def g_component_sum(
    fmap: FieldMap,
    azimuths: np.ndarray,
    weights: np.ndarray,
    rho,
    phi,
    z,
    wall_loss_sin_amplitude: float = 1.0,
):
    """Weighted traveling-wave sum sum_k w_k sum_m g_m cos(m(phi - phi_k)).

    Linear in ``weights`` by construction. Sine-parity components enter once
    with the wall-loss gain, not per feed. This is the quantity the
    (2 dw + i) prefactor multiplies in the full synthesis.
    """
    rho = np.asarray(rho, float)
    phi = np.asarray(phi, float)
    z = np.asarray(z, float)
    cos_phi = np.cos(phi)
    sin_phi = np.sin(phi)
    return _g_sum_from_trig(
        fmap, azimuths, weights, rho, cos_phi, sin_phi, z, wall_loss_sin_amplitude
    )


def _g_sum_from_trig(
    fmap: FieldMap,
    azimuths: np.ndarray,
    weights: np.ndarray,
    rho,
    cos_phi,
    sin_phi,
    z,
    wall_loss_sin_amplitude: float,
):
    trig_c = {0: 1.0, 1: cos_phi, 2: cos_phi * cos_phi - sin_phi * sin_phi}
    trig_s = {0: 0.0, 1: sin_phi, 2: 2.0 * sin_phi * cos_phi}

    total = np.zeros(np.broadcast(rho, cos_phi, z).shape, complex)
    for comp in fmap.components:
        # collapse the feed sum into one complex (cos, sin) coefficient pair
        if comp.parity == "cos":
            wc = np.sum(weights * np.cos(comp.m * azimuths))
            ws = np.sum(weights * np.sin(comp.m * azimuths))
        else:
            wc = 0.0
            ws = complex(wall_loss_sin_amplitude)
        gval = _bilinear(fmap.rho_nodes, fmap.z_nodes, comp.values, rho, z)
        total = total + gval * (wc * trig_c[comp.m] + ws * trig_s[comp.m])
    return total


def synthesize_hz(
    fmap: FieldMap,
    geometry: CavityGeometry,
    feeds: FeedConfig,
    rho,
    phi,
    z,
):
    """Complex H_z at (rho, phi, z) in the cavity frame.

    The standing wave takes unit weight; the traveling components are scaled
    by (2 dw + i) and the normalized feed weights. Valid inside the cavity
    volume including the cutoff hole columns.
    """
    weights = feed_g_weights(feeds)
    azimuths = np.array([f.azimuth for f in feeds.feeds], float)
    h0 = _h0z_of(fmap, geometry, rho, z)
    pert = g_component_sum(
        fmap, azimuths, weights, rho, phi, z, feeds.wall_loss_sin_amplitude
    )
    k = 2.0 * feeds.normalized_detuning + 1j
    out = h0 + k * pert
    if np.ndim(rho) == 0 and np.ndim(phi) == 0 and np.ndim(z) == 0:
        return complex(out)
    return out


def _h0z_of(fmap: FieldMap, geometry: CavityGeometry, rho, z):
    if fmap.h0z_values is None:
        return h0z_te011(rho, z, geometry)
    return _bilinear(
        fmap.rho_nodes, fmap.z_nodes, np.asarray(fmap.h0z_values, float), rho, z
    ).real


def h0z_peak(fmap: FieldMap) -> float:
    if fmap.h0z_values is None:
        return 1.0
    return float(np.max(np.abs(fmap.h0z_values)))


def phase_field(
    fmap: FieldMap,
    geometry: CavityGeometry,
    feeds: FeedConfig,
    rho,
    phi,
    z,
    null_floor: float = DEFAULT_NULL_FLOOR,
):
    """Field phase Phi = Im[H_z] / Re[H_z] at the query point(s).

    Raises FieldNullError if the standing wave at any query point is below
    ``null_floor`` times its peak; the phase is not trustworthy in a
    near-null.
    """
    h0 = _h0z_of(fmap, geometry, rho, z)
    floor = null_floor * h0z_peak(fmap)
    if np.any(np.abs(h0) < floor):
        raise FieldNullError(
            "standing wave below the null floor at a phase query point"
        )
    hz = synthesize_hz(fmap, geometry, feeds, rho, phi, z)
    out = np.imag(hz) / np.real(hz)
    if np.ndim(rho) == 0 and np.ndim(phi) == 0 and np.ndim(z) == 0:
        return float(out)
    return out


class SynthesizedField:
    """H_z evaluator bound to one (map, geometry, feeds) triple.

    Precomputes the per-m angular coefficients once so batched queries from
    the Monte Carlo integrator reduce to interpolation plus a handful of
    fused multiply-adds. ``g_scale`` uniformly rescales all traveling
    components (used by linear-response checks); the standing wave is never
    scaled here.
    """

    def __init__(
        self,
        fmap: FieldMap,
        geometry: CavityGeometry,
        feeds: FeedConfig,
        g_scale: float = 1.0,
    ):
        self.fmap = fmap
        self.geometry = geometry
        self.feeds = feeds
        self.g_scale = g_scale
        self.k_factor = 2.0 * feeds.normalized_detuning + 1j

        weights = feed_g_weights(feeds)
        azimuths = np.array([f.azimuth for f in feeds.feeds], float)
        self._terms = []  # (m, coeff_cos, coeff_sin, values)
        for comp in fmap.components:
            if comp.parity == "cos":
                wc = complex(np.sum(weights * np.cos(comp.m * azimuths)))
                ws = complex(np.sum(weights * np.sin(comp.m * azimuths)))
            else:
                wc = 0.0 + 0.0j
                ws = complex(feeds.wall_loss_sin_amplitude)
            vals = comp.values * g_scale
            self._terms.append((comp.m, wc, ws, vals))

        # stacked layout for the batched evaluator: one gather serves all
        # components at once
        if self._terms:
            self._m_idx = np.array([t[0] for t in self._terms])
            self._wc = np.array([t[1] for t in self._terms])
            self._ws = np.array([t[2] for t in self._terms])
            self._stack = np.ascontiguousarray(np.stack([t[3] for t in self._terms]))
        self._loc_rho = _GridLocator(fmap.rho_nodes)
        self._loc_z = _GridLocator(fmap.z_nodes)
        self._kernel_tables = None

    @property
    def has_perturbation(self) -> bool:
        return bool(self._terms) and self.g_scale != 0.0

    def h0z(self, rho, z):
        return _h0z_of(self.fmap, self.geometry, rho, z)

    def peak(self) -> float:
        return h0z_peak(self.fmap)

    def re_im_parts(self, rho, cos_phi, sin_phi, z):
        """(Re H_z, Im H_z) for batched cavity-frame points.

        Takes cos(phi), sin(phi) directly so callers tracking Cartesian
        coordinates never need an arctangent.
        """
        h0 = np.asarray(_h0z_of(self.fmap, self.geometry, rho, z), float)
        if not self.has_perturbation:
            return h0, np.zeros_like(h0)

        rho_b, cos_b, sin_b, z_b = np.broadcast_arrays(rho, cos_phi, sin_phi, z)
        shape = rho_b.shape
        ix, tx, in_x = self._loc_rho.locate(np.ravel(rho_b))
        iy, ty, in_y = self._loc_z.locate(np.ravel(z_b))
        ux = 1.0 - tx
        uy = 1.0 - ty
        g = (
            self._stack[:, ix, iy] * (ux * uy)
            + self._stack[:, ix + 1, iy] * (tx * uy)
            + self._stack[:, ix, iy + 1] * (ux * ty)
            + self._stack[:, ix + 1, iy + 1] * (tx * ty)
        )
        ok = in_x & in_y

        trig_c = {0: 1.0, 1: np.ravel(cos_b), 2: None}
        trig_s = {0: 0.0, 1: np.ravel(sin_b), 2: None}
        if np.any(self._m_idx == 2):
            c, s = trig_c[1], trig_s[1]
            trig_c[2] = c * c - s * s
            trig_s[2] = 2.0 * s * c

        pert = np.zeros(g.shape[1], complex)
        for k, m in enumerate(self._m_idx):
            pert += g[k] * (self._wc[k] * trig_c[m] + self._ws[k] * trig_s[m])
        pert = np.where(ok, pert, 0.0)
        hz = h0 + self.k_factor * pert.reshape(shape)
        return hz.real, hz.imag

    def kernel_tables(self):
        """Flat argument pack for the fused integrator, or None when this
        field needs the general path (non-uniform grid or a gridded standing
        wave, which the kernel does not model)."""
        if self.fmap.h0z_values is not None:
            return None
        if not (self._loc_rho.uniform and self._loc_z.uniform):
            return None
        if self._kernel_tables is None:
            geom = self.geometry
            if self.has_perturbation:
                stack_re = np.ascontiguousarray(self._stack.real)
                stack_im = np.ascontiguousarray(self._stack.imag)
                # the detuning feed factor folds into the per-component
                # weights so the kernel never touches it separately
                wc = self.k_factor * self._wc
                ws = self.k_factor * self._ws
                m_idx = self._m_idx.astype(np.int64)
            else:
                n_r = self.fmap.rho_nodes.size
                n_z = self.fmap.z_nodes.size
                stack_re = np.zeros((0, n_r, n_z))
                stack_im = np.zeros((0, n_r, n_z))
                wc = np.zeros(0, complex)
                ws = np.zeros(0, complex)
                m_idx = np.zeros(0, np.int64)
            self._kernel_tables = (
                CHI01P / geom.radius,
                geom.endcap_hole_radius,
                geom.height,
                geom.cutoff_match_z(),
                geom.decay_length(),
                math.sin(math.pi * geom.cutoff_match_z() / geom.height),
                self._loc_rho.lo,
                self._loc_rho.step,
                self._loc_rho.hi,
                self._loc_rho.nodes.size,
                self._loc_z.lo,
                self._loc_z.step,
                self._loc_z.hi,
                self._loc_z.nodes.size,
                stack_re,
                stack_im,
                bool(np.all(stack_im == 0.0)),
                np.ascontiguousarray(wc.real),
                np.ascontiguousarray(wc.imag),
                np.ascontiguousarray(ws.real),
                np.ascontiguousarray(ws.imag),
                m_idx,
            )
        return self._kernel_tables

    def rescaled(self, g_scale: float) -> "SynthesizedField":
        return SynthesizedField(self.fmap, self.geometry, self.feeds, g_scale)

    def without_perturbation(self) -> "SynthesizedField":
        return SynthesizedField(self.fmap, self.geometry, self.feeds, 0.0)


def map_with_scaled_component(fmap: FieldMap, m: int, parity: str, factor: float) -> FieldMap:
    """Copy of the map with one component rescaled (amplitude sweeps)."""
    comps = []
    for comp in fmap.components:
        if comp.m == m and comp.parity == parity:
            comps.append(replace(comp, values=comp.values * factor))
        else:
            comps.append(comp)
    return replace(fmap, components=tuple(comps))
