"""Two-level dynamics through the cavity field.

State convention: amplitudes (c_g, c_e) in the frame rotating at the drive
frequency, detuning delta = omega_drive - omega_atom expressed so that a free
excited amplitude evolves as c_e(t) = c_e(0) * exp(+i delta t). During a
traversal the coupled equations are

    i dc_g/dt = conj(w) c_e,      i dc_e/dt = -delta c_e + w c_g,

with w(t) = coupling_scale * H_z(r(t)) / 2 taken from the complex synthesized
field, so the distributed phase of the field enters as the argument of w.

Traversals are integrated with fixed-step RK4 on a per-atom time grid. The
field is sampled once per stage node and shared by every detuning propagated
together, which keeps paired +/-delta runs on identical samples. The
propagator advances only the first column (alpha, beta) of the traversal
operator; the determinant of the evolution is exp(i delta tau) exactly (the
Hamiltonian trace is -delta), so the second column follows analytically and
the reconstructed operator stays exactly unitary up to that phase.

For a real w (no imaginary field component) conjugating the state while
flipping delta maps solutions onto solutions, stage by stage, in IEEE
arithmetic; transition probabilities are then bitwise even in delta.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import simpson

from .cavity import CavityGeometry, SynthesizedField
from .constants import G_EARTH
from .errors import ConfigError, UndefinedPhaseError
from .trajectories import CloudModel, FountainLayout, TrajectoryBatch, field_region_bounds

try:  # compiled fast path; the numpy path below is the reference
    from . import _kernel
except ImportError:  # pragma: no cover - exercised only without numba
    _kernel = None

DEFAULT_STEP_AREA = 1.0e-3  # rad of pulse area per RK4 step
DEFAULT_MIN_STEPS = 160  # resolves the axial mode profile even at tiny drive
AREA_MARGIN = 1.35  # peak area along real traversals exceeds the calibrated mean


def step_count(
    pulse_area_factor: float,
    step_area: float = DEFAULT_STEP_AREA,
    min_steps: int = DEFAULT_MIN_STEPS,
) -> int:
    """Fixed RK4 step count per traversal at relative drive amplitude b."""
    if step_area <= 0.0:
        raise ConfigError("step_area must be positive")
    n = math.ceil(AREA_MARGIN * abs(pulse_area_factor) * 0.5 * math.pi / step_area)
    return max(n, int(min_steps))


# ---------------------------------------------------------------------------
# constant-drive building blocks


def pulse_unitary(omega, phase, detuning, duration):
    """Exact rotation for a constant drive; returns (u_gg, u_ge, u_eg, u_ee).

    The generalized Rabi structure is explicit: excitation from the ground
    state has probability (omega^2 / omega_eff^2) sin^2(omega_eff t / 2).
    """
    omega = np.asarray(omega, float)
    detuning = np.asarray(detuning, float)
    eff = np.sqrt(omega * omega + detuning * detuning)
    half = 0.5 * eff * duration
    cos_half = np.cos(half)
    # sin(half)/eff, with the duration/2 limit as eff -> 0
    fac = 0.5 * duration * np.sinc(half / np.pi)
    pre = np.exp(0.5j * detuning * np.asarray(duration, float))
    drive = np.exp(1j * np.asarray(phase, float))
    u_gg = pre * (cos_half - 1j * detuning * fac)
    u_ee = pre * (cos_half + 1j * detuning * fac)
    u_eg = pre * (-1j * omega * fac) * drive
    u_ge = pre * (-1j * omega * fac) * np.conj(drive)
    return u_gg, u_ge, u_eg, u_ee


def propagate_pulse(state, omega, phase, detuning, duration):
    """Apply a constant pulse to (c_g, c_e)."""
    u_gg, u_ge, u_eg, u_ee = pulse_unitary(omega, phase, detuning, duration)
    cg, ce = state
    return u_gg * cg + u_ge * ce, u_eg * cg + u_ee * ce


def free_evolution(state, detuning, duration):
    cg, ce = state
    return cg, ce * np.exp(1j * np.asarray(detuning, float) * duration)


def ideal_ramsey_probability(detuning, t_gap):
    """Excitation after two instantaneous pi/2 pulses separated by t_gap."""
    return 0.5 * (1.0 + np.cos(np.asarray(detuning, float) * t_gap))


def ramsey_sequence_probability(omega, tau, t_gap, detuning):
    """Excitation through pulse / free gap / pulse with finite pulses."""
    state = (np.asarray(1.0 + 0.0j), np.asarray(0.0 + 0.0j))
    state = propagate_pulse(state, omega, 0.0, detuning, tau)
    state = free_evolution(state, detuning, t_gap)
    state = propagate_pulse(state, omega, 0.0, detuning, tau)
    return np.abs(state[1]) ** 2


# ---------------------------------------------------------------------------
# traversal propagation


def transverse_trig(x, y):
    """(rho, cos phi, sin phi) with the on-axis direction pinned to phi = 0."""
    rho = np.hypot(x, y)
    safe = np.where(rho > 0.0, rho, 1.0)
    cos_phi = np.where(rho > 0.0, x / safe, 1.0)
    sin_phi = np.where(rho > 0.0, y / safe, 0.0)
    return rho, cos_phi, sin_phi


def _coupling_at(
    field: SynthesizedField, batch: TrajectoryBatch, t: np.ndarray, scale: float
) -> np.ndarray:
    x, y = batch.transverse_at(t)
    z = batch.p[:, 2] + batch.v[:, 2] * t + 0.5 * batch.a[2] * t * t
    rho, cos_phi, sin_phi = transverse_trig(x, y)
    re, im = field.re_im_parts(rho, cos_phi, sin_phi, z)
    return 0.5 * scale * (re + 1j * im)


def _rk4_step(cg, ce, w0, wm, we, jdelta, h):
    w0c = np.conj(w0)
    wmc = np.conj(wm)
    wec = np.conj(we)
    k1g = -1j * (w0c * ce)
    k1e = jdelta * ce - 1j * (w0 * cg)
    g = cg + 0.5 * h * k1g
    e = ce + 0.5 * h * k1e
    k2g = -1j * (wmc * e)
    k2e = jdelta * e - 1j * (wm * g)
    g = cg + 0.5 * h * k2g
    e = ce + 0.5 * h * k2e
    k3g = -1j * (wmc * e)
    k3e = jdelta * e - 1j * (wm * g)
    g = cg + h * k3g
    e = ce + h * k3e
    k4g = -1j * (wec * e)
    k4e = jdelta * e - 1j * (we * g)
    s = h / 6.0
    cg = cg + s * (k1g + 2.0 * (k2g + k3g) + k4g)
    ce = ce + s * (k1e + 2.0 * (k2e + k3e) + k4e)
    return cg, ce


def propagate_traversal(
    field: SynthesizedField,
    batch: TrajectoryBatch,
    t_start: np.ndarray,
    t_end: np.ndarray,
    n_steps: int,
    coupling_scale: float,
    detunings,
    engine: str = "auto",
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate (1, 0) through one traversal for several detunings at once.

    Returns (alpha, beta) of shape (n_detunings, n_atoms): the first column
    of the traversal operator. All detunings advance on the same field
    samples; only the diagonal detuning term differs between rows.

    ``engine`` picks the integrator: "auto" takes the compiled kernel when
    numba is importable and the field exports kernel tables, "numpy" and
    "kernel" force one side (tests compare them).
    """
    if engine not in ("auto", "numpy", "kernel"):
        raise ConfigError(f"unknown integration engine {engine!r}")
    t_start = np.asarray(t_start, float)
    t_end = np.asarray(t_end, float)
    n_atoms = t_start.shape[0]
    deltas = np.asarray(detunings, float)
    n_rows = deltas.shape[0]

    tables = field.kernel_tables() if _kernel is not None else None
    if engine == "kernel" and tables is None:
        raise ConfigError("the compiled kernel cannot serve this field")
    if engine != "numpy" and tables is not None:
        alpha = np.empty((n_rows, n_atoms), complex)
        beta = np.empty((n_rows, n_atoms), complex)
        _kernel.propagate_kernel(
            batch.p,
            batch.v,
            batch.a,
            t_start,
            t_end,
            n_steps,
            deltas,
            0.5 * coupling_scale,
            *tables,
            alpha,
            beta,
        )
        return alpha, beta

    h = (t_end - t_start) / n_steps
    jdelta = 1j * deltas[:, None]
    cg = np.ones((n_rows, n_atoms), complex)
    ce = np.zeros((n_rows, n_atoms), complex)
    # evaluate the half-step and end nodes of each step in one field call
    doubled = TrajectoryBatch(
        p=np.concatenate([batch.p, batch.p]),
        v=np.concatenate([batch.v, batch.v]),
        a=batch.a,
    )
    w0 = _coupling_at(field, batch, t_start, coupling_scale)
    for k in range(n_steps):
        t2 = np.concatenate([t_start + (k + 0.5) * h, t_start + (k + 1.0) * h])
        w2 = _coupling_at(field, doubled, t2, coupling_scale)
        wm = w2[:n_atoms]
        we = w2[n_atoms:]
        cg, ce = _rk4_step(cg, ce, w0, wm, we, jdelta, h)
        w0 = we
    return cg, ce


def traversal_matrix(alpha, beta, detuning, duration):
    """Full 2x2 traversal operator from its first column.

    det U = exp(i delta tau) exactly, so u_ge = -conj(beta) det and
    u_ee = conj(alpha) det.
    """
    det = np.exp(1j * np.asarray(detuning, float) * duration)
    return alpha, -np.conj(beta) * det, beta, np.conj(alpha) * det


def sequence_excitation(alpha_u, beta_u, alpha_d, beta_d, detuning, tau_down, t_gap):
    """Excited amplitude after up pass, free gap, down pass, from ground.

    The gap phase is exp(i delta t_gap); pass conjugated phases for the
    opposite detuning sign when bitwise evenness matters.
    """
    det_d = np.exp(1j * np.asarray(detuning, float) * tau_down)
    gap = np.exp(1j * np.asarray(detuning, float) * t_gap)
    return beta_d * alpha_u + np.conj(alpha_d) * det_d * gap * beta_u


def excitation_from_phases(alpha_u, beta_u, alpha_d, beta_d, det_phase, gap_phase):
    """Same as sequence_excitation with the unit phases supplied directly."""
    return beta_d * alpha_u + np.conj(alpha_d) * det_phase * gap_phase * beta_u


def fringe_terms(alpha_u, beta_u, alpha_d, beta_d):
    """Per-trajectory fringe decomposition P(x) = A + B cos(x - phi_c).

    x is the detuning phase delta * (t_gap + tau_down) accumulated outside
    the up traversal; A is the offset, B the peak-to-mean amplitude (fringe
    contrast is 2B for a lone trajectory), and phi_c the fringe phase pulled
    by the distributed cavity phase.
    """
    p = beta_d * alpha_u
    q = np.conj(alpha_d) * beta_u
    a = np.abs(p) ** 2 + np.abs(q) ** 2
    b = 2.0 * np.abs(p) * np.abs(q)
    phi = np.angle(p) - np.angle(q)
    return a, b, phi


# ---------------------------------------------------------------------------
# drive calibration


def calibrate_rabi_scale(
    field: SynthesizedField,
    geometry: CavityGeometry,
    cloud: CloudModel,
    layout: FountainLayout,
    averaging: str = "aperture",
    n_radial: int = 24,
    n_axial: int = 801,
) -> float:
    """Coupling scale giving a mean pulse area of pi/2 per traversal at b = 1.

    The area of an upward pass at radius rho is scale * integral |H0z| dt
    along the nominal vertical trajectory at the launch speed. "aperture"
    averages that area uniformly over the open endcap hole; "on_axis" uses
    the rho = 0 trajectory alone, which puts the contrast zeros of a
    monokinetic axial beam exactly at even multiples of the pi/2 drive.
    """
    z_lo, z_hi = field_region_bounds(geometry)
    base_height = layout.cavity_midplane_height - 0.5 * geometry.height
    launch_z = cloud.position_mean[2]
    speed_sq_top = cloud.launch_speed**2 - 2.0 * G_EARTH * (z_hi + base_height - launch_z)
    if speed_sq_top <= 0.0:
        raise ConfigError("nominal atom does not clear the field region")

    z_nodes = np.linspace(z_lo, z_hi, n_axial)
    speed = np.sqrt(
        cloud.launch_speed**2 - 2.0 * G_EARTH * (z_nodes + base_height - launch_z)
    )
    if averaging == "on_axis":
        rho_nodes = np.array([0.0])
        weights = np.array([1.0])
    elif averaging == "aperture":
        # uniform in area: Gauss-Legendre in u = rho^2
        r = geometry.endcap_hole_radius
        u_nodes, u_weights = np.polynomial.legendre.leggauss(n_radial)
        rho_nodes = np.sqrt(0.5 * (u_nodes + 1.0) * r * r)
        weights = 0.5 * u_weights
    else:
        raise ConfigError(f"unknown averaging {averaging!r}")

    profile = np.abs(field.h0z(rho_nodes[:, None], z_nodes[None, :]))
    areas = simpson(profile / speed, x=z_nodes, axis=1)
    mean_area = float(weights @ areas)
    if mean_area <= 0.0:
        raise ConfigError("field profile integrates to zero along the traversal")
    return 0.5 * math.pi / mean_area


# ---------------------------------------------------------------------------
# effective traversal phase


def effective_traversal_phase(
    field: SynthesizedField,
    batch: TrajectoryBatch,
    t_start: np.ndarray,
    t_end: np.ndarray,
    n_steps: int,
    coupling_scale: float,
    detuning: float = 0.0,
    min_amplitude: float = 1.0e-6,
) -> np.ndarray:
    """Phase the field perturbation imprints on the excitation amplitude.

    arg(beta / beta_ref) per atom, where beta_ref comes from the same
    traversal with the perturbation removed. Near pulse areas that are
    multiples of pi the excitation amplitude vanishes and carries no usable
    phase; that raises UndefinedPhaseError rather than returning noise.
    """
    alpha, beta = propagate_traversal(
        field, batch, t_start, t_end, n_steps, coupling_scale, [detuning]
    )
    ref = field.without_perturbation()
    alpha0, beta0 = propagate_traversal(
        ref, batch, t_start, t_end, n_steps, coupling_scale, [detuning]
    )
    scale = np.hypot(np.abs(alpha0), np.abs(beta0))
    degenerate = (
        np.any(np.abs(beta0) < min_amplitude * scale)
        or np.any(np.abs(alpha0) < min_amplitude * scale)
        or np.any(np.abs(beta) < min_amplitude * scale)
    )
    if degenerate:
        raise UndefinedPhaseError(
            "pulse area at a multiple of pi leaves no stable amplitude ratio"
        )
    return np.angle(beta[0] / beta0[0])
