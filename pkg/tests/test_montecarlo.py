from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from fountain_dcp.cavity import ParametricGParams, parametric_g_model
from fountain_dcp.errors import ConfigError, ConversionError, EstimationError
from fountain_dcp.montecarlo import (
    CONTRAST_FLOOR,
    RunConfig,
    config_digest,
    delta_p_for_shift,
    estimate_delta_p,
    estimate_fringe,
    fractional_shift_from_delta_p,
    shift_from_delta_p,
)
from fountain_dcp.trajectories import CloudModel


@pytest.fixture(scope="module")
def small_run(geometry, default_map):
    return RunConfig(
        geometry=geometry, field_map=default_map, n_samples=1200, seed=42
    )


@pytest.fixture(scope="module")
def small_estimate(small_run):
    return estimate_delta_p(small_run)


class TestDeterminism:
    def test_chunking_and_workers_do_not_change_results(self, geometry, default_map, small_estimate):
        import dataclasses

        alt = RunConfig(
            geometry=geometry,
            field_map=default_map,
            n_samples=1200,
            seed=42,
            chunk_size=377,
            workers=3,
        )
        other = estimate_delta_p(alt)
        assert other.delta_p == small_estimate.delta_p
        assert other.delta_p_err == small_estimate.delta_p_err
        assert other.contrast == small_estimate.contrast
        assert other.n_survivors == small_estimate.n_survivors

    def test_seed_changes_estimate(self, geometry, default_map, small_estimate):
        other = estimate_delta_p(
            RunConfig(geometry=geometry, field_map=default_map, n_samples=1200, seed=43)
        )
        assert other.delta_p != small_estimate.delta_p

    def test_digest_tracks_config(self, small_run, geometry, default_map):
        same = RunConfig(
            geometry=geometry, field_map=default_map, n_samples=1200, seed=42
        )
        assert config_digest(same) == config_digest(small_run)
        reseeded = RunConfig(
            geometry=geometry, field_map=default_map, n_samples=1200, seed=7
        )
        assert config_digest(reseeded) != config_digest(small_run)


class TestEstimate:
    def test_bookkeeping(self, small_estimate):
        est = small_estimate
        assert est.n_samples == 1200
        assert est.n_survivors + est.n_aperture_cut == 1200
        assert 0 < est.n_survivors < 1200
        assert est.n_flagged == 0
        assert est.delta_p_err > 0.0

    def test_contrast_near_unity(self, small_estimate):
        assert 0.9 < small_estimate.contrast <= 1.0

    def test_real_field_gives_exact_zero(self, geometry):
        bare = parametric_g_model(
            geometry,
            ParametricGParams(g0_amplitude=0.0, g1_amplitude=0.0, g2_amplitude=0.0),
        )
        est = estimate_delta_p(
            RunConfig(geometry=geometry, field_map=bare, n_samples=400, seed=2)
        )
        assert est.delta_p == 0.0
        assert est.delta_p_err == 0.0
        assert est.contrast > 0.9

    def test_all_atoms_cut_raises(self, geometry, default_map):
        far = CloudModel(position_mean=(0.05, 0.0, 0.0), position_sigma=(1e-4,) * 3)
        with pytest.raises(EstimationError, match="cut"):
            estimate_delta_p(
                RunConfig(
                    geometry=geometry,
                    field_map=default_map,
                    cloud=far,
                    n_samples=50,
                    seed=1,
                )
            )

    def test_flag_accounting(self, geometry, default_map, caplog):
        run = RunConfig(
            geometry=geometry,
            field_map=default_map,
            n_samples=300,
            seed=5,
            phase_flag_threshold=1e-9,
        )
        with caplog.at_level(logging.WARNING, logger="fountain_dcp.montecarlo"):
            est = estimate_delta_p(run)
        assert est.n_flagged == est.n_survivors
        assert any("perturbative" in r.message for r in caplog.records)

    def test_unknown_method(self, small_run):
        with pytest.raises(ConfigError):
            estimate_delta_p(small_run, method="perturbation")

    def test_missing_field_map(self, geometry):
        with pytest.raises(ConfigError, match="field_map"):
            estimate_delta_p(RunConfig(geometry=geometry, n_samples=10))

    def test_effective_phase_method_runs(self, geometry, default_map, small_estimate):
        est = estimate_delta_p(
            RunConfig(geometry=geometry, field_map=default_map, n_samples=1200, seed=42),
            method="effective_phase",
        )
        assert est.method == "effective_phase"
        # same trajectories, same physics: the approximate route should land close
        assert est.delta_p == pytest.approx(small_estimate.delta_p, rel=0.2)


class TestFringe:
    def test_fringe_matches_estimate_contrast(self, geometry, default_map, small_estimate):
        fringe = estimate_fringe(
            RunConfig(geometry=geometry, field_map=default_map, n_samples=1200, seed=42)
        )
        assert fringe.contrast == pytest.approx(small_estimate.contrast, abs=1e-6)
        assert fringe.peak_probability <= 1.0 + 1e-9
        assert fringe.probabilities.shape == fringe.detuning_offsets_hz.shape

    def test_fringe_peak_near_center(self, geometry, default_map):
        fringe = estimate_fringe(
            RunConfig(geometry=geometry, field_map=default_map, n_samples=800, seed=3)
        )
        i_max = int(np.argmax(fringe.probabilities))
        assert abs(fringe.detuning_offsets_hz[i_max]) < 0.2


class TestConversion:
    def test_round_trip(self):
        shift = shift_from_delta_p(5e-8, 0.95, 0.82)
        back = delta_p_for_shift(shift, 0.95, 0.82)
        assert back == pytest.approx(5e-8, rel=1e-12)

    def test_scaling(self):
        assert shift_from_delta_p(1e-7, 0.9, 0.82) == pytest.approx(
            2.0 * 0.82 * 1e-7 / (math.pi * 0.9), rel=1e-12
        )

    def test_contrast_floor(self):
        with pytest.raises(ConversionError):
            shift_from_delta_p(1e-7, 0.04, 0.82)
        with pytest.raises(ConversionError):
            delta_p_for_shift(1e-16, CONTRAST_FLOOR / 2, 0.82)

    def test_fractional(self):
        frac = fractional_shift_from_delta_p(7e-8, 0.95, 0.822)
        assert frac == pytest.approx(
            2.0 * 0.822 * 7e-8 / (math.pi * 0.95) / 9192631770.0, rel=1e-12
        )

    def test_estimate_conversion_methods(self, small_estimate):
        frac = small_estimate.fractional_shift()
        assert frac == pytest.approx(
            small_estimate.shift_hz() / 9192631770.0, rel=1e-12
        )
        assert small_estimate.fractional_shift_err() > 0.0


class TestValidation:
    def test_bad_samples(self, geometry, default_map):
        with pytest.raises(ConfigError):
            RunConfig(geometry=geometry, field_map=default_map, n_samples=0)

    def test_bad_workers(self, geometry, default_map):
        with pytest.raises(ConfigError):
            RunConfig(geometry=geometry, field_map=default_map, workers=0)

    def test_bad_delta_nu(self, geometry, default_map):
        with pytest.raises(ConfigError):
            RunConfig(geometry=geometry, field_map=default_map, delta_nu=-1.0)
