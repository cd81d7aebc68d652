"""Parameter sweeps over the shift estimator and their result files.

A Scenario bundles a base run configuration with one swept parameter; the
five built-in presets reproduce the standard study geometries (tilt scans,
amplitude scans, feed phase scans, quadrupole detection scans). Sweep points
run as independent jobs off the same seed, so every point shares its
trajectory draws with every other point and with any companion scenario at
the same seed; differences between points are then free of common sampling
noise.

Results carry the full effective configuration document, the seed, and the
config digest, so a sweep can be replayed bit for bit from its sidecar.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .cavity import (
    FeedConfig,
    ParametricGParams,
    balanced_feeds,
    parametric_g_model,
    single_feed,
)
from .config import SweepSpec, parse_document, render_document
from .constants import TOOL_VERSION
from .errors import ConfigError, ConversionError, EstimationError, OutputError
from .fitting import (
    LineFit,
    ProportionalFit,
    bracketed_root,
    proportional_fit,
    weighted_line_fit,
)
from .montecarlo import RunConfig, config_digest, estimate_delta_p
from .trajectories import DetectionProfile, TiltVector

log = logging.getLogger(__name__)

Progress = Optional[Callable[[str], None]]


def _tick(progress: Progress, msg: str) -> None:
    if progress is not None:
        progress(msg)


# ---------------------------------------------------------------------------
# scenarios and sweep plumbing


@dataclass(frozen=True)
class Scenario:
    """A base run configuration plus one swept parameter."""

    name: str
    description: str
    base: RunConfig
    sweep: SweepSpec


@dataclass(frozen=True)
class SweepResult:
    """One completed sweep: rows in sweep order plus replay metadata."""

    scenario: str
    parameter: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    seed: int
    base_digest: str
    tool_version: str
    started_utc: str
    elapsed_seconds: float
    method: str
    document: Optional[dict] = None
    fits: dict = dc_field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])


SWEEP_COLUMNS = (
    "delta_p",
    "delta_p_err",
    "contrast",
    "fractional_shift",
    "fractional_shift_err",
    "n_survivors",
)


def with_delta_psi(feeds: FeedConfig, delta_psi: float) -> FeedConfig:
    """The same balanced feed pair at a different feed phase imbalance."""
    if len(feeds.feeds) != 2 or feeds.feeds[0].azimuth != 0.0 or (
        feeds.feeds[1].azimuth != math.pi
    ):
        raise ConfigError(
            "feed phase sweeps need a balanced pair at azimuths 0 and pi"
        )
    return balanced_feeds(
        delta_psi=float(delta_psi),
        amplitude_ratio=feeds.feeds[1].amplitude / feeds.feeds[0].amplitude,
        normalized_detuning=feeds.normalized_detuning,
        g_couplings=(feeds.feeds[0].g_coupling, feeds.feeds[1].g_coupling),
        wall_loss_sin_amplitude=feeds.wall_loss_sin_amplitude,
    )


def apply_sweep_value(run: RunConfig, parameter: str, value: float) -> RunConfig:
    """The run configuration with one swept parameter replaced."""
    if parameter == "amplitude_factor":
        return dataclasses.replace(run, amplitude_factor=float(value))
    if parameter == "tilt.parallel":
        return dataclasses.replace(
            run, tilt=dataclasses.replace(run.tilt, parallel=float(value))
        )
    if parameter == "tilt.perpendicular":
        return dataclasses.replace(
            run, tilt=dataclasses.replace(run.tilt, perpendicular=float(value))
        )
    if parameter == "feeds.delta_psi":
        return dataclasses.replace(run, feeds=with_delta_psi(run.feeds, value))
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def _sweep_row(run: RunConfig, method: str) -> tuple[tuple[float, ...], int]:
    est = estimate_delta_p(run, method=method)
    try:
        frac = est.fractional_shift()
        frac_err = est.fractional_shift_err()
    except ConversionError:
        # near a contrast zero the fringe carries no frequency; the
        # probability offset stays valid, the conversion does not
        frac = math.nan
        frac_err = math.nan
    row = (
        est.delta_p,
        est.delta_p_err,
        est.contrast,
        frac,
        frac_err,
        float(est.n_survivors),
    )
    return row, est.n_flagged


def run_sweep(
    run: RunConfig,
    sweep: SweepSpec,
    scenario_name: str = "custom",
    method: str = "full",
    progress: Progress = None,
) -> SweepResult:
    """Run the estimator once per sweep value, assembling rows in order."""
    t0 = time.monotonic()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    rows = []
    for i, value in enumerate(sweep.values):
        point = apply_sweep_value(run, sweep.parameter, value)
        row, _ = _sweep_row(point, method)
        rows.append((float(value),) + row)
        _tick(
            progress,
            f"{scenario_name}: {sweep.parameter}={value:g} "
            f"({i + 1}/{len(sweep.values)}) delta_p={row[0]:+.3e}",
        )
    try:
        document = render_document(run, sweep)
    except ConfigError:
        document = None
    return SweepResult(
        scenario=scenario_name,
        parameter=sweep.parameter,
        columns=(sweep.parameter,) + SWEEP_COLUMNS,
        rows=tuple(rows),
        seed=run.seed,
        base_digest=config_digest(run),
        tool_version=TOOL_VERSION,
        started_utc=started,
        elapsed_seconds=time.monotonic() - t0,
        method=method,
        document=document,
    )


def run_scenario(
    scenario: Scenario,
    seed: Optional[int] = None,
    n_samples: Optional[int] = None,
    workers: Optional[int] = None,
    method: str = "full",
    progress: Progress = None,
) -> SweepResult:
    """Run a scenario, optionally overriding sampling knobs."""
    run = scenario.base
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if n_samples is not None:
        updates["n_samples"] = n_samples
    if workers is not None:
        updates["workers"] = workers
    if updates:
        run = dataclasses.replace(run, **updates)
    return run_sweep(
        run, scenario.sweep, scenario_name=scenario.name, method=method,
        progress=progress,
    )


def run_amplitude_sweep(
    run: RunConfig,
    b_values: Sequence[float],
    method: str = "full",
    progress: Progress = None,
) -> SweepResult:
    """Shift and contrast against the drive amplitude factor b.

    Rows near contrast zeros report the probability offset but refuse the
    frequency conversion (NaN in the fractional columns).
    """
    spec = SweepSpec("amplitude_factor", tuple(float(b) for b in b_values))
    return run_sweep(run, spec, scenario_name="amplitude_sweep", method=method,
                     progress=progress)


# ---------------------------------------------------------------------------
# tilt sweeps


FEED_MODES = ("feed0", "feed_pi", "balanced")


def _feeds_for_mode(base: FeedConfig, mode: str) -> FeedConfig:
    detuning = base.normalized_detuning
    wall = base.wall_loss_sin_amplitude
    if mode == "feed0":
        fc = single_feed(0.0)
    elif mode == "feed_pi":
        fc = single_feed(math.pi)
    elif mode == "balanced":
        fc = balanced_feeds()
    else:
        raise ConfigError(f"unknown feed mode {mode!r}")
    return dataclasses.replace(
        fc, normalized_detuning=detuning, wall_loss_sin_amplitude=wall
    )


@dataclass(frozen=True)
class TiltFitSummary:
    """Line-fit summary of one response against tilt."""

    label: str
    slope: float
    slope_err: float
    intercept: float
    intercept_err: float
    zero_crossing: float
    zero_crossing_err: float
    linearity_residual: float  # max |residual| / (|slope| * max |tilt|)


def _tilt_fit(label: str, tilts, values, errors) -> TiltFitSummary:
    fit = weighted_line_fit(tilts, values, errors)
    resid = np.asarray(values) - fit.value(np.asarray(tilts))
    span = abs(fit.slope) * float(np.max(np.abs(tilts)))
    if span > 0.0:
        lin = float(np.max(np.abs(resid))) / span
        x0, x0_err = fit.zero_crossing()
    else:
        # a flat response (a fully cancelled feed arrangement, say) has no
        # crossing to report, but the fit itself is still well defined
        lin = 0.0 if float(np.max(np.abs(resid))) == 0.0 else math.inf
        x0, x0_err = math.nan, math.nan
    return TiltFitSummary(
        label=label,
        slope=fit.slope,
        slope_err=fit.slope_err,
        intercept=fit.intercept,
        intercept_err=fit.intercept_err,
        zero_crossing=x0,
        zero_crossing_err=x0_err,
        linearity_residual=lin,
    )


@dataclass(frozen=True)
class TiltSweepResult:
    """Shift against tilt for each feed mode, plus the feed difference.

    Per-mode fits are in probability-offset units; the differential rows
    and fit are the fractional frequency difference between the feeds,
    nu(feed0) - nu(feed_pi) over the carrier.
    """

    axis: str
    tilts: tuple[float, ...]
    sweeps: dict
    differential: tuple[tuple[float, float, float], ...]  # tilt, diff, err
    fits: tuple[TiltFitSummary, ...]

    def fit(self, label: str) -> TiltFitSummary:
        for f in self.fits:
            if f.label == label:
                return f
        raise KeyError(label)


def run_tilt_sweep(
    run: RunConfig,
    tilts: Optional[Sequence[float]] = None,
    axis: str = "parallel",
    feed_modes: Sequence[str] = FEED_MODES,
    method: str = "full",
    progress: Progress = None,
) -> TiltSweepResult:
    """Sweep the commanded tilt for several feed arrangements.

    All sweeps share the seed, so the per-feed responses ride on the same
    trajectories and their difference cancels the feed-independent pieces.
    The fringe-contrast floor applies: feeding a drive amplitude near a
    contrast zero leaves the frequency columns undefined and the feed
    difference cannot be formed there.
    """
    if axis not in ("parallel", "perpendicular"):
        raise ConfigError("tilt axis must be 'parallel' or 'perpendicular'")
    if tilts is None:
        tilts = np.linspace(-1.6e-3, 1.6e-3, 5)
    tilt_values = tuple(float(t) for t in tilts)
    parameter = f"tilt.{axis}"
    sweeps: dict = {}
    for mode in feed_modes:
        base = dataclasses.replace(run, feeds=_feeds_for_mode(run.feeds, mode))
        sweeps[mode] = run_sweep(
            base, SweepSpec(parameter, tilt_values),
            scenario_name=f"tilt_{mode}", method=method, progress=progress,
        )
    fits = []
    for mode in feed_modes:
        r = sweeps[mode]
        fits.append(
            _tilt_fit(mode, tilt_values, r.column("delta_p"), r.column("delta_p_err"))
        )
    differential: tuple = ()
    if "feed0" in sweeps and "feed_pi" in sweeps:
        f0 = sweeps["feed0"].column("fractional_shift")
        fp = sweeps["feed_pi"].column("fractional_shift")
        e0 = sweeps["feed0"].column("fractional_shift_err")
        ep = sweeps["feed_pi"].column("fractional_shift_err")
        diff = f0 - fp
        err = np.hypot(e0, ep)
        if not np.all(np.isfinite(diff)):
            raise EstimationError(
                "fringe contrast collapsed at some tilt points; the feed "
                "frequency difference is undefined there (use an odd drive "
                "amplitude factor)"
            )
        differential = tuple(
            (t, float(d), float(e)) for t, d, e in zip(tilt_values, diff, err)
        )
        fits.append(_tilt_fit("differential", tilt_values, diff, err))
    return TiltSweepResult(
        axis=axis,
        tilts=tilt_values,
        sweeps=sweeps,
        differential=differential,
        fits=tuple(fits),
    )


# ---------------------------------------------------------------------------
# feed phase scans


@dataclass(frozen=True)
class PhaseScanFit:
    normalized_detuning: float
    coefficient: float
    coefficient_err: float
    chi2: float
    ndof: int
    endpoint_delta: float  # delta_p(feed0) - delta_p(feed_pi)
    endpoint_mean: float  # (delta_p(feed0) + delta_p(feed_pi)) / 2


@dataclass(frozen=True)
class PhaseScanResult:
    """Normalized fringe response against feed phase imbalance."""

    delta_psi: tuple[float, ...]
    rows: tuple[tuple[float, ...], ...]  # detuning, dpsi, delta_p, err, normalized
    fits: tuple[PhaseScanFit, ...]

    def fit(self, normalized_detuning: float) -> PhaseScanFit:
        for f in self.fits:
            if f.normalized_detuning == normalized_detuning:
                return f
        raise KeyError(normalized_detuning)


def run_phase_imbalance_scan(
    run: RunConfig,
    delta_psi_values: Optional[Sequence[float]] = None,
    detunings: Sequence[float] = (-0.25, 0.0, 0.25),
    method: str = "full",
    progress: Progress = None,
) -> PhaseScanResult:
    """Scan the feed phase imbalance at several cavity detunings.

    The response at each imbalance is normalized by the single-feed
    endpoints measured at the same detuning and seed,

        r = (delta_p(dpsi) - (dP_0 + dP_pi) / 2) / (dP_0 - dP_pi),

    which cancels the feed-symmetric background, and is fitted against
    tan(dpsi / 2) through the origin. A vanishing endpoint difference makes
    the normalization meaningless and raises, carrying the raw points.
    """
    if delta_psi_values is None:
        delta_psi_values = np.linspace(-2.5, 2.5, 15)
    dpsi = tuple(float(v) for v in delta_psi_values)
    if any(abs(v) >= math.pi for v in dpsi):
        raise ConfigError("feed phase imbalance must stay inside (-pi, pi)")
    rows = []
    fits = []
    for nd in detunings:
        feeds_nd = dataclasses.replace(run.feeds, normalized_detuning=float(nd))
        base = dataclasses.replace(run, feeds=with_delta_psi(feeds_nd, 0.0))
        e0 = estimate_delta_p(
            dataclasses.replace(base, feeds=_feeds_for_mode(base.feeds, "feed0")),
            method=method,
        )
        epi = estimate_delta_p(
            dataclasses.replace(base, feeds=_feeds_for_mode(base.feeds, "feed_pi")),
            method=method,
        )
        denom = e0.delta_p - epi.delta_p
        denom_err = math.hypot(e0.delta_p_err, epi.delta_p_err)
        center = 0.5 * (e0.delta_p + epi.delta_p)
        raw = []
        for v in dpsi:
            point = dataclasses.replace(base, feeds=with_delta_psi(base.feeds, v))
            est = estimate_delta_p(point, method=method)
            raw.append((est.delta_p, est.delta_p_err))
            _tick(
                progress,
                f"phase scan nd={nd:+.3g}: dpsi={v:+.3f} delta_p={est.delta_p:+.3e}",
            )
        if abs(denom) <= 3.0 * denom_err:
            exc = EstimationError(
                "single-feed responses do not separate "
                f"(difference {denom:.3e} within noise {denom_err:.3e}); "
                "cannot normalize the phase response. raw points: "
                + ", ".join(f"({v:+.3f}, {r[0]:+.3e})" for v, r in zip(dpsi, raw))
            )
            exc.points = tuple((v,) + r for v, r in zip(dpsi, raw))
            raise exc
        x = np.tan(0.5 * np.array(dpsi))
        resp = (np.array([r[0] for r in raw]) - center) / denom
        resp_err = np.array([r[1] for r in raw]) / abs(denom)
        fit = proportional_fit(x, resp, resp_err)
        fits.append(
            PhaseScanFit(
                normalized_detuning=float(nd),
                coefficient=fit.coefficient,
                coefficient_err=fit.coefficient_err,
                chi2=fit.chi2,
                ndof=fit.ndof,
                endpoint_delta=denom,
                endpoint_mean=center,
            )
        )
        for v, (dp, dperr), r in zip(dpsi, raw, resp):
            rows.append((float(nd), v, dp, dperr, float(r)))
    return PhaseScanResult(delta_psi=dpsi, rows=tuple(rows), fits=tuple(fits))


# ---------------------------------------------------------------------------
# feed balancing and zero-tilt search


@dataclass(frozen=True)
class BalanceResult:
    """Feed balancing outcome.

    ``residual_sensitivity`` is the remaining fractional-frequency tilt
    slope at the balanced ratio, in units of 1e-16 per milliradian.
    """

    amplitude_ratio: float
    ratio_err: float
    residual_sensitivity: float
    residual_sensitivity_err: float
    evaluations: tuple[tuple[float, float, float], ...]  # ratio, slope, err


# fractional shift per radian -> 1e-16 per milliradian
_SENSITIVITY_UNIT = 1.0e16 * 1.0e-3


def _tilt_slope(
    run: RunConfig, probe: float, method: str
) -> tuple[float, float, float, float]:
    """Antisymmetrized tilt slope from a +-probe pair.

    Returns the slope of delta_p and of the fractional frequency shift,
    each with its error, all per radian of parallel tilt.
    """
    plus = estimate_delta_p(
        apply_sweep_value(run, "tilt.parallel", probe), method=method
    )
    minus = estimate_delta_p(
        apply_sweep_value(run, "tilt.parallel", -probe), method=method
    )
    slope = (plus.delta_p - minus.delta_p) / (2.0 * probe)
    err = math.hypot(plus.delta_p_err, minus.delta_p_err) / (2.0 * probe)
    frac = (plus.fractional_shift() - minus.fractional_shift()) / (2.0 * probe)
    frac_err = math.hypot(
        plus.fractional_shift_err(), minus.fractional_shift_err()
    ) / (2.0 * probe)
    return slope, err, frac, frac_err


def balance_feeds(
    run: RunConfig,
    ratio_lo: float = 0.5,
    ratio_hi: float = 2.0,
    tilt_probe: float = 1.6e-3,
    tol: float = 1.0e-3,
    method: str = "full",
    progress: Progress = None,
) -> BalanceResult:
    """Feed amplitude ratio a_pi / a_0 that nulls the tilt sensitivity.

    Works at b = 1 on the balanced pair of the given configuration, scanning
    the amplitude ratio until the antisymmetrized tilt slope of the clock
    frequency changes sign, then polishing the root by guarded secant steps.
    The returned result reports the residual sensitivity at the root in
    1e-16 per milliradian. If the slope never changes sign across the ratio
    bracket the search raises, attaching every evaluated (ratio, slope,
    error) triple.
    """
    base = dataclasses.replace(
        run, amplitude_factor=1.0, feeds=with_delta_psi(run.feeds, 0.0)
    )
    evaluations: list[tuple[float, float, float]] = []

    def config_at(ratio: float) -> RunConfig:
        feeds = balanced_feeds(
            delta_psi=0.0,
            amplitude_ratio=ratio,
            normalized_detuning=base.feeds.normalized_detuning,
            g_couplings=(
                base.feeds.feeds[0].g_coupling,
                base.feeds.feeds[1].g_coupling,
            ),
            wall_loss_sin_amplitude=base.feeds.wall_loss_sin_amplitude,
        )
        return dataclasses.replace(base, feeds=feeds)

    def slope_at(ratio: float) -> float:
        _, _, frac, frac_err = _tilt_slope(config_at(ratio), tilt_probe, method)
        evaluations.append((ratio, frac, frac_err))
        _tick(progress, f"balance: ratio={ratio:.5f} slope={frac:+.3e}/rad")
        return frac

    try:
        root = bracketed_root(
            slope_at, ratio_lo, ratio_hi, tol=tol * (ratio_hi - ratio_lo)
        )
    except EstimationError as exc:
        detail = ", ".join(
            f"(ratio {r:.4f}: slope {s:+.3e}/rad)" for r, s, _ in evaluations
        )
        wrapped = EstimationError(
            f"tilt slope does not change sign over ratios "
            f"[{ratio_lo:g}, {ratio_hi:g}]; scanned {detail}"
        )
        wrapped.evaluations = tuple(evaluations)
        raise wrapped from exc

    # residual sensitivity measured directly at the root
    _, _, res_frac, res_frac_err = _tilt_slope(config_at(root), tilt_probe, method)
    residual = res_frac * _SENSITIVITY_UNIT
    residual_err = res_frac_err * _SENSITIVITY_UNIT

    # ratio error: slope noise at the root over the local dslope/dratio
    ratios = np.array([e[0] for e in evaluations])
    slopes = np.array([e[1] for e in evaluations])
    errs = np.array([e[2] for e in evaluations])
    fit = weighted_line_fit(ratios, slopes, errs)
    ratio_err = (
        res_frac_err / abs(fit.slope) if fit.slope != 0.0 else math.inf
    )
    return BalanceResult(
        amplitude_ratio=root,
        ratio_err=ratio_err,
        residual_sensitivity=residual,
        residual_sensitivity_err=residual_err,
        evaluations=tuple(evaluations),
    )


@dataclass(frozen=True)
class ZeroTiltResult:
    axis: str
    zero_tilt: float
    zero_tilt_err: float
    fit: TiltFitSummary


def find_zero_tilt(
    run: RunConfig,
    axis: str = "parallel",
    span: float = 1.6e-3,
    n_points: int = 5,
    method: str = "full",
    progress: Progress = None,
) -> ZeroTiltResult:
    """Commanded tilt where the single-feed frequencies cross.

    Sweeps the commanded tilt, fits the fractional frequency difference
    between the two single-feed configurations against it, and returns the
    fitted root with its covariance error. With an unknown mechanical tilt
    offset injected, the crossing sits at minus the offset, recovering it.
    """
    tilts = np.linspace(-span, span, n_points)
    result = run_tilt_sweep(
        run, tilts, axis=axis, feed_modes=("feed0", "feed_pi"),
        method=method, progress=progress,
    )
    fit = result.fit("differential")
    return ZeroTiltResult(
        axis=axis,
        zero_tilt=fit.zero_crossing,
        zero_tilt_err=fit.zero_crossing_err,
        fit=fit,
    )


# ---------------------------------------------------------------------------
# presets


PRESET_ALIASES = {"fig2b": "fig2b_fig3", "fig3": "fig2b_fig3"}


def preset_scenarios() -> dict:
    """The five built-in scenarios, keyed by name.

    Each returns fresh objects, so callers may replace fields freely.
    """
    full_map_params = ParametricGParams()
    g0_only = ParametricGParams(g1_amplitude=0.0, g2_amplitude=0.0)
    g2_only = ParametricGParams(
        g0_amplitude=0.0, g1_amplitude=0.0, g2_amplitude=1.0e-4
    )
    sin_added = ParametricGParams(g1_sin_amplitude=1.0e-4)

    def base(
        params,
        feeds,
        tilt=TiltVector(),
        detection=DetectionProfile(),
        amplitude=1.0,
        n_samples=100000,
    ):
        run = RunConfig(
            field_map=None,
            feeds=feeds,
            tilt=tilt,
            detection=detection,
            amplitude_factor=amplitude,
            n_samples=n_samples,
        )
        return dataclasses.replace(
            run, field_map=parametric_g_model(run.geometry, params)
        )

    beam = DetectionProfile(kind="gaussian_beam", waist=0.0099)
    beam_x = DetectionProfile(
        kind="gaussian_beam", waist=0.0099, beam_axis_azimuth=0.0
    )
    tilt_steps = tuple(np.linspace(-1.6e-3, 1.6e-3, 5))
    b_steps = tuple(np.arange(0.5, 10.0 + 0.25, 0.5))
    psi_steps = tuple(np.linspace(-2.5, 2.5, 15))

    scenarios = {
        "fig1b": Scenario(
            name="fig1b",
            description=(
                "frequency shift against tilt along the feed axis, dipole "
                "phase gradient, gaussian detection beam"
            ),
            base=base(full_map_params, single_feed(0.0), detection=beam),
            sweep=SweepSpec("tilt.parallel", tilt_steps),
        ),
        "fig1c": Scenario(
            name="fig1c",
            description=(
                "frequency shift against tilt perpendicular to the feeds; "
                "responds only through the wall-loss sine component"
            ),
            base=base(sin_added, single_feed(0.0), detection=beam_x),
            sweep=SweepSpec("tilt.perpendicular", tilt_steps),
        ),
        "fig2a": Scenario(
            name="fig2a",
            description=(
                "longitudinal (m = 0) shift against drive amplitude for an "
                "expanding thermal cloud"
            ),
            base=base(g0_only, single_feed(0.0), n_samples=20000),
            sweep=SweepSpec("amplitude_factor", b_steps),
        ),
        "fig2b_fig3": Scenario(
            name="fig2b_fig3",
            description=(
                "detuned-cavity dipole response: feed phase imbalance scan "
                "at 1.6 mrad tilt along the feeds"
            ),
            base=base(
                full_map_params,
                balanced_feeds(normalized_detuning=0.25),
                tilt=TiltVector(parallel=1.6e-3),
            ),
            sweep=SweepSpec("feeds.delta_psi", psi_steps),
        ),
        "fig2c": Scenario(
            name="fig2c",
            description=(
                "quadrupole (m = 2) shift against drive amplitude seen by a "
                "gaussian detection beam; amplitude exaggerated tenfold so "
                "Monte Carlo errors stay small"
            ),
            base=base(g2_only, single_feed(0.0), detection=beam, n_samples=50000),
            sweep=SweepSpec("amplitude_factor", b_steps),
        ),
    }
    return scenarios


def preset_names() -> tuple[str, ...]:
    return tuple(preset_scenarios().keys())


def get_preset(name: str) -> Scenario:
    canonical = PRESET_ALIASES.get(name, name)
    scenarios = preset_scenarios()
    if canonical not in scenarios:
        known = ", ".join(list(scenarios) + sorted(PRESET_ALIASES))
        raise ConfigError(f"unknown scenario {name!r} (known: {known})")
    return scenarios[canonical]


# ---------------------------------------------------------------------------
# result files


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep_csv(result: SweepResult, path, overwrite: bool = False) -> None:
    """One header row, then one row per sweep point; floats keep full
    precision through shortest round-trip repr."""
    path = Path(path)
    if path.exists() and not overwrite:
        raise OutputError(f"{path} exists; pass overwrite to replace it")
    lines = [",".join(result.columns)]
    for row in result.rows:
        lines.append(",".join(_format_cell(v) for v in row))
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def sidecar_document(result: SweepResult) -> dict:
    return {
        "scenario": result.scenario,
        "parameter": result.parameter,
        "columns": list(result.columns),
        "seed": result.seed,
        "config_digest": result.base_digest,
        "tool_version": result.tool_version,
        "started_utc": result.started_utc,
        "elapsed_seconds": result.elapsed_seconds,
        "method": result.method,
        "sweep_values": [row[0] for row in result.rows],
        "fits": result.fits,
        "config": result.document,
    }


def write_sweep_sidecar(result: SweepResult, path, overwrite: bool = False) -> None:
    path = Path(path)
    if path.exists() and not overwrite:
        raise OutputError(f"{path} exists; pass overwrite to replace it")
    try:
        path.write_text(
            json.dumps(sidecar_document(result), indent=1), encoding="utf-8"
        )
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def save_sweep(
    result: SweepResult, out_dir, basename: Optional[str] = None,
    overwrite: bool = False,
) -> tuple[Path, Path]:
    """Write CSV plus JSON sidecar; returns both paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc}") from exc
    stem = basename or result.scenario
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    write_sweep_csv(result, csv_path, overwrite=overwrite)
    write_sweep_sidecar(result, json_path, overwrite=overwrite)
    return csv_path, json_path


def read_sweep_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    columns = tuple(lines[0].split(","))
    data = np.array(
        [[float(cell) for cell in line.split(",")] for line in lines[1:]]
    )
    return columns, data


def replay_sweep(sidecar_path, progress: Progress = None) -> SweepResult:
    """Rebuild a sweep from its sidecar and rerun it.

    The stored configuration, seed, and sweep values reproduce the original
    rows bit for bit (same trajectories, same step grids, same reduction
    order).
    """
    path = Path(sidecar_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sidecar {path} is not valid JSON: {exc}") from exc
    if doc.get("config") is None:
        raise ConfigError(
            "sidecar has no stored configuration; this sweep cannot be replayed"
        )
    parsed = parse_document(doc["config"], base_dir=path.parent)
    sweep = SweepSpec(doc["parameter"], tuple(doc["sweep_values"]))
    return run_sweep(
        parsed.run, sweep, scenario_name=doc["scenario"],
        method=doc.get("method", "full"), progress=progress,
    )
