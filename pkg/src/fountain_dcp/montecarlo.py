"""Monte Carlo estimation of the distributed-phase frequency shift.

The estimator draws a thermal cloud, keeps the trajectories that clear every
aperture, propagates each survivor through both cavity traversals, and forms
the detection-weighted excitation probabilities at the two modulation
detunings +/- delta_m (the half-width probe points of the central Ramsey
fringe). The shift observable is the weighted mean of

    d_i = (P_i(+delta_m) - P_i(-delta_m)) / 2,

whose conversion to a frequency goes through the measured fringe contrast.

Both probe detunings ride on the same field samples and the same trajectories
(common random numbers), so the difference is free of sampling noise from the
field geometry itself. When the synthesized field has no perturbation at all
its values are real and the transition probabilities are exactly even in
detuning, bit for bit; the estimator then skips the second propagation and
reports an exact zero rather than burning time to compute one.

Chunking is deterministic: trajectory i always draws from its own counter
stream, chunk boundaries are fixed by chunk_size alone, and chunk results are
reduced in index order, so estimates are identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, fields, is_dataclass, replace
from typing import Optional

import numpy as np

from .cavity import CavityGeometry, FeedConfig, FieldMap, SynthesizedField
from .constants import CS_CLOCK_FREQUENCY
from .dynamics import (
    DEFAULT_MIN_STEPS,
    DEFAULT_STEP_AREA,
    calibrate_rabi_scale,
    excitation_from_phases,
    fringe_terms,
    propagate_traversal,
    step_count,
)
from .errors import ConfigError, ConversionError, EstimationError, UndefinedPhaseError
from .trajectories import (
    Aperture,
    CloudModel,
    DetectionProfile,
    FountainLayout,
    TiltVector,
    TrajectoryBatch,
    default_apertures,
    default_delta_nu,
    detection_weights,
    ramsey_time,
    sample_cloud,
    survive_apertures,
    to_cavity_frame,
    traversal_windows,
)

log = logging.getLogger(__name__)

CONTRAST_FLOOR = 0.05  # below this a fringe carries no usable frequency
FLAG_WARN_FRACTION = 0.01
PHASE_FLAG_DEFAULT = 0.1  # |Im/Re| beyond which the perturbative picture is suspect


@dataclass(frozen=True)
class RunConfig:
    """Everything a single shift estimate needs."""

    geometry: CavityGeometry = dc_field(default_factory=CavityGeometry)
    field_map: Optional[FieldMap] = None
    feeds: FeedConfig = dc_field(default_factory=FeedConfig)
    cloud: CloudModel = dc_field(default_factory=CloudModel)
    tilt: TiltVector = dc_field(default_factory=TiltVector)
    layout: FountainLayout = dc_field(default_factory=FountainLayout)
    apertures: Optional[tuple[Aperture, ...]] = None
    detection: DetectionProfile = dc_field(default_factory=DetectionProfile)
    amplitude_factor: float = 1.0  # drive amplitude b relative to the pi/2 point
    rabi_averaging: str = "aperture"
    delta_nu: Optional[float] = None  # Hz; None derives 1/(2T) from the nominal flight
    n_samples: int = 20000
    seed: int = 0
    chunk_size: int = 4096
    workers: int = 1
    step_area: float = DEFAULT_STEP_AREA
    min_steps: int = DEFAULT_MIN_STEPS
    phase_flag_threshold: float = PHASE_FLAG_DEFAULT

    def __post_init__(self) -> None:
        if self.n_samples <= 0:
            raise ConfigError("n_samples must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.chunk_size <= 0:
            raise ConfigError("chunk_size must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.amplitude_factor < 0.0:
            raise ConfigError("amplitude_factor must be non-negative")
        if self.delta_nu is not None and self.delta_nu <= 0.0:
            raise ConfigError("delta_nu must be positive")

    def aperture_stack(self) -> tuple[Aperture, ...]:
        if self.apertures is not None:
            return self.apertures
        return default_apertures(self.geometry)


@dataclass(frozen=True)
class ShiftEstimate:
    delta_p: float
    delta_p_err: float
    contrast: float
    delta_nu: float
    ramsey_time: float
    rabi_scale: float
    n_samples: int
    n_survivors: int
    n_aperture_cut: int
    n_flagged: int
    seed: int
    method: str
    config_digest: str

    def shift_hz(self) -> float:
        return shift_from_delta_p(self.delta_p, self.contrast, self.delta_nu)

    def fractional_shift(self) -> float:
        return self.shift_hz() / CS_CLOCK_FREQUENCY

    def fractional_shift_err(self) -> float:
        return abs(
            shift_from_delta_p(self.delta_p_err, self.contrast, self.delta_nu)
        ) / CS_CLOCK_FREQUENCY


# ---------------------------------------------------------------------------
# probability <-> frequency conversion


def shift_from_delta_p(delta_p: float, contrast: float, delta_nu: float) -> float:
    """Frequency shift (Hz) of the fringe center for a probability offset
    measured at the half-width probe points: delta_nu_shift = 2 dnu dP / (pi C).
    """
    if contrast < CONTRAST_FLOOR:
        raise ConversionError(
            f"contrast {contrast:.3g} is below the conversion floor {CONTRAST_FLOOR}"
        )
    return 2.0 * delta_nu * delta_p / (math.pi * contrast)


def fractional_shift_from_delta_p(
    delta_p: float, contrast: float, delta_nu: float
) -> float:
    return shift_from_delta_p(delta_p, contrast, delta_nu) / CS_CLOCK_FREQUENCY


def delta_p_for_shift(shift_hz: float, contrast: float, delta_nu: float) -> float:
    """Probability offset a given fringe-center shift would produce."""
    if contrast < CONTRAST_FLOOR:
        raise ConversionError(
            f"contrast {contrast:.3g} is below the conversion floor {CONTRAST_FLOOR}"
        )
    return math.pi * contrast * shift_hz / (2.0 * delta_nu)


def delta_p_for_fractional_shift(
    fractional: float, contrast: float, delta_nu: float
) -> float:
    return delta_p_for_shift(fractional * CS_CLOCK_FREQUENCY, contrast, delta_nu)


# ---------------------------------------------------------------------------
# config digest


def _canonical(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        out = {"_type": type(obj).__name__}
        for f in fields(obj):
            out[f.name] = _canonical(getattr(obj, f.name))
        return out
    if isinstance(obj, np.ndarray):
        return {
            "_array": hashlib.sha256(np.ascontiguousarray(obj).tobytes()).hexdigest(),
            "shape": list(obj.shape),
        }
    if isinstance(obj, (tuple, list)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_digest(run: RunConfig) -> str:
    payload = json.dumps(_canonical(run), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# the engine


@dataclass(frozen=True)
class _EngineContext:
    run: RunConfig
    field: SynthesizedField
    coupling_scale: float
    delta_m: float  # rad/s modulation detuning
    n_steps: int
    mode: str  # "full" | "effective_phase" | "fringe"
    field_peak: float
    null_floor: float


class _ChunkResult:
    __slots__ = (
        "count",
        "n_survivors",
        "n_flagged",
        "sw",
        "swd",
        "sw2",
        "sw2d",
        "sw2d2",
        "weights",
        "fringe_a",
        "fringe_b",
        "fringe_phi",
        "fringe_t",
        "exc_up",
        "exc_dn",
    )

    def __init__(self, count):
        self.count = count
        self.n_survivors = 0
        self.n_flagged = 0
        self.sw = 0.0
        self.swd = 0.0
        self.sw2 = 0.0
        self.sw2d = 0.0
        self.sw2d2 = 0.0
        self.weights = np.empty(0)
        self.fringe_a = np.empty(0)
        self.fringe_b = np.empty(0)
        self.fringe_phi = np.empty(0)
        self.fringe_t = np.empty(0)
        self.exc_up = np.empty(0)
        self.exc_dn = np.empty(0)


def _survivor_batch(ctx: _EngineContext, start: int, count: int):
    run = ctx.run
    positions, velocities = sample_cloud(run.cloud, run.seed, start, count)
    batch = to_cavity_frame(positions, velocities, run.tilt, run.layout, run.geometry)
    alive = survive_apertures(batch, run.aperture_stack(), run.geometry)
    idx = np.nonzero(alive)[0]
    sub = TrajectoryBatch(p=batch.p[idx], v=batch.v[idx], a=batch.a)
    weights = detection_weights(sub, run.detection, run.layout, run.geometry)
    return sub, weights


def _flag_count(ctx: _EngineContext, batch: TrajectoryBatch, windows) -> int:
    """Count survivors whose sampled |Im/Re| exceeds the perturbative flag
    threshold (or whose carrier nearly vanishes) anywhere along either pass."""
    if not ctx.field.has_perturbation or len(batch) == 0:
        return 0
    t_up0, t_up1, t_dn0, t_dn1 = windows
    frac = np.linspace(0.0, 1.0, 48)
    flagged = np.zeros(len(batch), bool)
    for t0, t1 in ((t_up0, t_up1), (t_dn0, t_dn1)):
        t = t0[:, None] + (t1 - t0)[:, None] * frac
        x = batch.p[:, 0, None] + batch.v[:, 0, None] * t + 0.5 * batch.a[0] * t * t
        y = batch.p[:, 1, None] + batch.v[:, 1, None] * t + 0.5 * batch.a[1] * t * t
        z = batch.p[:, 2, None] + batch.v[:, 2, None] * t + 0.5 * batch.a[2] * t * t
        rho = np.hypot(x, y)
        safe = np.where(rho > 0.0, rho, 1.0)
        cph = np.where(rho > 0.0, x / safe, 1.0)
        sph = np.where(rho > 0.0, y / safe, 0.0)
        re, im = ctx.field.re_im_parts(rho, cph, sph, z)
        weak = np.abs(re) < ctx.null_floor
        ratio = np.abs(im) / np.maximum(np.abs(re), ctx.null_floor)
        flagged |= np.any(weak | (ratio > ctx.run.phase_flag_threshold), axis=1)
    return int(np.count_nonzero(flagged))


def _process_chunk(ctx: _EngineContext, start: int, count: int) -> _ChunkResult:
    res = _ChunkResult(count)
    batch, weights = _survivor_batch(ctx, start, count)
    res.n_survivors = len(batch)
    if len(batch) == 0:
        return res

    t_up0, t_up1, t_dn0, t_dn1, _ = traversal_windows(batch, ctx.run.geometry)
    res.n_flagged = _flag_count(ctx, batch, (t_up0, t_up1, t_dn0, t_dn1))

    t_gap = t_dn0 - t_up1
    tau_d = t_dn1 - t_dn0
    dm = ctx.delta_m

    if ctx.mode == "effective_phase":
        d = _effective_phase_offsets(ctx, batch, (t_up0, t_up1, t_dn0, t_dn1), res)
    else:
        pert = ctx.field.has_perturbation
        detunings = [dm, -dm] if (pert and ctx.mode == "full") else [dm]
        au, bu = propagate_traversal(
            ctx.field, batch, t_up0, t_up1, ctx.n_steps, ctx.coupling_scale, detunings
        )
        ad, bd = propagate_traversal(
            ctx.field, batch, t_dn0, t_dn1, ctx.n_steps, ctx.coupling_scale, detunings
        )
        a, b, phi = fringe_terms(au[0], bu[0], ad[0], bd[0])
        res.fringe_a, res.fringe_b, res.fringe_phi = a, b, phi
        res.fringe_t = t_gap + tau_d
        res.exc_up = np.abs(bu[0]) ** 2
        res.exc_dn = np.abs(bd[0]) ** 2
        if ctx.mode == "full":
            det_phase = np.exp(1j * dm * tau_d)
            gap_phase = np.exp(1j * dm * t_gap)
            ce_plus = excitation_from_phases(
                au[0], bu[0], ad[0], bd[0], det_phase, gap_phase
            )
            p_plus = np.abs(ce_plus) ** 2
            if pert:
                ce_minus = excitation_from_phases(
                    au[1], bu[1], ad[1], bd[1], np.conj(det_phase), np.conj(gap_phase)
                )
                p_minus = np.abs(ce_minus) ** 2
            else:
                # real field: probabilities are even in detuning, bit for bit
                p_minus = p_plus
            d = 0.5 * (p_plus - p_minus)
        else:
            d = None

    res.weights = weights
    if d is not None:
        w2 = weights * weights
        res.sw = float(np.sum(weights))
        res.swd = float(np.sum(weights * d))
        res.sw2 = float(np.sum(w2))
        res.sw2d = float(np.sum(w2 * d))
        res.sw2d2 = float(np.sum(w2 * d * d))
    else:
        res.sw = float(np.sum(weights))
    return res


def _effective_phase_offsets(ctx, batch, windows, res) -> np.ndarray:
    """Probability offsets via the effective-phase route: ideal fringe from
    the unperturbed field, fringe phase pulled by the per-pass phase shifts
    of both operator entries."""
    t_up0, t_up1, t_dn0, t_dn1 = windows
    run = ctx.run
    au, bu = propagate_traversal(
        ctx.field, batch, t_up0, t_up1, ctx.n_steps, ctx.coupling_scale, [0.0]
    )
    ad, bd = propagate_traversal(
        ctx.field, batch, t_dn0, t_dn1, ctx.n_steps, ctx.coupling_scale, [0.0]
    )
    base = ctx.field.without_perturbation()
    au0, bu0 = propagate_traversal(
        base, batch, t_up0, t_up1, ctx.n_steps, ctx.coupling_scale, [0.0]
    )
    ad0, bd0 = propagate_traversal(
        base, batch, t_dn0, t_dn1, ctx.n_steps, ctx.coupling_scale, [0.0]
    )
    tiny = 1.0e-6
    for arr in (au0, bu0, ad0, bd0):
        if np.any(np.abs(arr) < tiny):
            raise UndefinedPhaseError(
                "a traversal operator entry vanishes at this pulse area; "
                "the effective-phase route is undefined here"
            )
    d_alpha_u = np.angle(au[0] / au0[0])
    d_beta_u = np.angle(bu[0] / bu0[0])
    d_alpha_d = np.angle(ad[0] / ad0[0])
    d_beta_d = np.angle(bd[0] / bd0[0])
    dphi = d_alpha_u + d_alpha_d + d_beta_d - d_beta_u

    a0, b0, phi0 = fringe_terms(au0[0], bu0[0], ad0[0], bd0[0])
    res.fringe_a, res.fringe_b = a0, b0
    res.fringe_phi = phi0 + dphi
    res.fringe_t = (t_dn0 - t_up1) + (t_dn1 - t_dn0)
    x = ctx.delta_m * res.fringe_t
    return b0 * np.sin(x) * np.sin(phi0 + dphi)


def _build_context(run: RunConfig, mode: str):
    if run.field_map is None:
        raise ConfigError("RunConfig.field_map is required; build or load one first")
    field = SynthesizedField(run.field_map, run.geometry, run.feeds)
    rabi = calibrate_rabi_scale(
        field, run.geometry, run.cloud, run.layout, averaging=run.rabi_averaging
    )
    t_ramsey = ramsey_time(run.cloud, run.layout, run.geometry)
    dnu = run.delta_nu
    if dnu is None:
        dnu = default_delta_nu(run.cloud, run.layout, run.geometry)
    delta_m = math.pi * dnu  # rad/s; probe offset of dnu/2 in frequency
    n_steps = step_count(run.amplitude_factor, run.step_area, run.min_steps)
    ctx = _EngineContext(
        run=run,
        field=field,
        coupling_scale=run.amplitude_factor * rabi,
        delta_m=delta_m,
        n_steps=n_steps,
        mode=mode,
        field_peak=field.peak(),
        null_floor=1.0e-6 * field.peak(),
    )
    return ctx, rabi, t_ramsey, dnu


def _run_chunks(ctx: _EngineContext) -> list[_ChunkResult]:
    run = ctx.run
    spans = [
        (s, min(run.chunk_size, run.n_samples - s))
        for s in range(0, run.n_samples, run.chunk_size)
    ]
    if run.workers == 1:
        return [_process_chunk(ctx, s, c) for s, c in spans]
    with ThreadPoolExecutor(max_workers=run.workers) as pool:
        futures = [pool.submit(_process_chunk, ctx, s, c) for s, c in spans]
        return [f.result() for f in futures]


def _ensemble_contrast(results: list[_ChunkResult], n_grid: int = 241) -> float:
    """max - min of the detection-weighted fringe over the central fringe."""
    w = np.concatenate([r.weights for r in results])
    sw = float(np.sum(w))
    if sw <= 0.0:
        return 0.0
    a = np.concatenate([r.fringe_a for r in results])
    b = np.concatenate([r.fringe_b for r in results])
    phi = np.concatenate([r.fringe_phi for r in results])
    t = np.concatenate([r.fringe_t for r in results])
    t0 = float(np.sum(w * t) / sw)
    x = np.linspace(-1.2 * math.pi, 1.2 * math.pi, n_grid)
    deltas = x / t0
    p = np.array(
        [np.sum(w * (a + b * np.cos(d * t - phi))) / sw for d in deltas]
    )
    return float(np.max(p) - np.min(p))


def estimate_delta_p(run: RunConfig, method: str = "full") -> ShiftEstimate:
    """Estimate the modulation probability offset and fringe contrast.

    method "full" propagates the exact dynamics at both probe detunings;
    "effective_phase" reconstructs the offset from per-pass phase shifts on
    an ideal fringe. Both use identical trajectories and step grids.
    """
    if method not in ("full", "effective_phase"):
        raise ConfigError(f"unknown estimation method {method!r}")
    ctx, rabi, t_ramsey, dnu = _build_context(run, method)
    results = _run_chunks(ctx)

    n_survivors = sum(r.n_survivors for r in results)
    n_flagged = sum(r.n_flagged for r in results)
    if n_survivors == 0:
        raise EstimationError("every trajectory was cut by the apertures")
    sw = sum(r.sw for r in results)
    if sw <= 0.0:
        raise EstimationError("all surviving trajectories have zero detection weight")
    frac_flagged = n_flagged / n_survivors
    if frac_flagged > FLAG_WARN_FRACTION:
        log.warning(
            "%.1f%% of surviving trajectories crossed the perturbative phase "
            "flag threshold; treat the first-order shift picture with care",
            100.0 * frac_flagged,
        )

    swd = sum(r.swd for r in results)
    sw2 = sum(r.sw2 for r in results)
    sw2d = sum(r.sw2d for r in results)
    sw2d2 = sum(r.sw2d2 for r in results)
    mean = swd / sw
    var_sum = max(sw2d2 - 2.0 * mean * sw2d + mean * mean * sw2, 0.0)
    err = math.sqrt(var_sum) / sw

    return ShiftEstimate(
        delta_p=mean,
        delta_p_err=err,
        contrast=_ensemble_contrast(results),
        delta_nu=dnu,
        ramsey_time=t_ramsey,
        rabi_scale=rabi,
        n_samples=run.n_samples,
        n_survivors=n_survivors,
        n_aperture_cut=run.n_samples - n_survivors,
        n_flagged=n_flagged,
        seed=run.seed,
        method=method,
        config_digest=config_digest(run),
    )


@dataclass(frozen=True)
class FringeEstimate:
    contrast: float
    peak_probability: float
    detuning_offsets_hz: np.ndarray
    probabilities: np.ndarray
    n_survivors: int


def estimate_fringe(run: RunConfig, n_grid: int = 241) -> FringeEstimate:
    """Detection-weighted Ramsey fringe over the central fringe region."""
    ctx, _, _, dnu = _build_context(run, "fringe")
    results = _run_chunks(ctx)
    n_survivors = sum(r.n_survivors for r in results)
    if n_survivors == 0:
        raise EstimationError("every trajectory was cut by the apertures")
    w = np.concatenate([r.weights for r in results])
    sw = float(np.sum(w))
    if sw <= 0.0:
        raise EstimationError("all surviving trajectories have zero detection weight")
    a = np.concatenate([r.fringe_a for r in results])
    b = np.concatenate([r.fringe_b for r in results])
    phi = np.concatenate([r.fringe_phi for r in results])
    t = np.concatenate([r.fringe_t for r in results])
    t0 = float(np.sum(w * t) / sw)
    x = np.linspace(-1.2 * math.pi, 1.2 * math.pi, n_grid)
    deltas = x / t0
    p = np.array([np.sum(w * (a + b * np.cos(d * t - phi))) / sw for d in deltas])
    return FringeEstimate(
        contrast=float(np.max(p) - np.min(p)),
        peak_probability=float(np.max(p)),
        detuning_offsets_hz=deltas / (2.0 * math.pi),
        probabilities=p,
        n_survivors=n_survivors,
    )


@dataclass(frozen=True)
class ContrastRabiRow:
    amplitude_factor: float
    contrast: float
    excitation_up: float
    excitation_down: float
    n_survivors: int


def estimate_contrast_and_rabi(
    run: RunConfig, b_list
) -> tuple[ContrastRabiRow, ...]:
    """Fringe contrast and per-passage excitation against drive amplitude.

    The excitation columns are the detection-weighted mean probabilities of
    leaving the ground state in a single cavity passage, each passage taken
    on its own from a fresh ground-state atom. Their difference against b
    tracks how the expanding cloud samples the drive profile differently on
    the way up and on the way down.
    """
    rows = []
    for b in b_list:
        ctx, _, _, _ = _build_context(replace(run, amplitude_factor=float(b)), "fringe")
        results = _run_chunks(ctx)
        n_survivors = sum(r.n_survivors for r in results)
        if n_survivors == 0:
            raise EstimationError("every trajectory was cut by the apertures")
        w = np.concatenate([r.weights for r in results])
        sw = float(np.sum(w))
        if sw <= 0.0:
            raise EstimationError(
                "all surviving trajectories have zero detection weight"
            )
        up = np.concatenate([r.exc_up for r in results])
        dn = np.concatenate([r.exc_dn for r in results])
        rows.append(
            ContrastRabiRow(
                amplitude_factor=float(b),
                contrast=_ensemble_contrast(results),
                excitation_up=float(np.sum(w * up) / sw),
                excitation_down=float(np.sum(w * dn) / sw),
                n_survivors=n_survivors,
            )
        )
    return tuple(rows)
