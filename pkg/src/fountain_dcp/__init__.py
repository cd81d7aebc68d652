"""Monte Carlo modeling of distributed cavity phase shifts in fountain clocks.

The package synthesizes the microwave field of a TE011 Ramsey cavity from a
small set of azimuthal phase components, flies thermal atom trajectories
through it, integrates the two-level dynamics across both traversals, and
turns the resulting fringe asymmetries into fractional frequency shifts.
"""

from .cavity import (
    CavityGeometry,
    Feed,
    FeedConfig,
    FieldComponent,
    FieldMap,
    ParametricGParams,
    SynthesizedField,
    balanced_feeds,
    feed_g_weights,
    map_with_scaled_component,
    parametric_g_model,
    phase_field,
    single_feed,
    synthesize_hz,
    validate_field_map,
)
from .dynamics import (
    calibrate_rabi_scale,
    effective_traversal_phase,
    free_evolution,
    fringe_terms,
    ideal_ramsey_probability,
    propagate_pulse,
    propagate_traversal,
    pulse_unitary,
    ramsey_sequence_probability,
    step_count,
)
from .config import ParsedConfig, SweepSpec, parse_config, render_config
from .errors import (
    ConfigError,
    ConversionError,
    EstimationError,
    FieldNullError,
    OutputError,
    UndefinedPhaseError,
)
from .experiments import (
    BalanceResult,
    PhaseScanResult,
    Scenario,
    SweepResult,
    TiltSweepResult,
    ZeroTiltResult,
    balance_feeds,
    find_zero_tilt,
    get_preset,
    preset_scenarios,
    read_sweep_csv,
    replay_sweep,
    run_amplitude_sweep,
    run_phase_imbalance_scan,
    run_scenario,
    run_sweep,
    run_tilt_sweep,
    save_sweep,
)
from .field_io import load_field_map, save_field_map
from .fitting import (
    LineFit,
    ProportionalFit,
    bracketed_root,
    proportional_fit,
    weighted_line_fit,
)
from .montecarlo import (
    ContrastRabiRow,
    FringeEstimate,
    RunConfig,
    ShiftEstimate,
    config_digest,
    delta_p_for_fractional_shift,
    delta_p_for_shift,
    estimate_contrast_and_rabi,
    estimate_delta_p,
    estimate_fringe,
    fractional_shift_from_delta_p,
    shift_from_delta_p,
)
from .trajectories import (
    Aperture,
    CloudModel,
    DetectionProfile,
    FountainLayout,
    TiltVector,
    TrajectoryBatch,
    default_apertures,
    default_delta_nu,
    nominal_batch,
    ramsey_time,
    sample_cloud,
    survive_apertures,
    to_cavity_frame,
)

__version__ = "0.1.0"
