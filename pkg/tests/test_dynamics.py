from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.special import j1

from fountain_dcp.cavity import (
    CHI01P,
    FeedConfig,
    FieldComponent,
    FieldMap,
    ParametricGParams,
    SynthesizedField,
    balanced_feeds,
    parametric_g_model,
    single_feed,
)
from fountain_dcp.dynamics import (
    _coupling_at,
    calibrate_rabi_scale,
    effective_traversal_phase,
    excitation_from_phases,
    free_evolution,
    fringe_terms,
    ideal_ramsey_probability,
    propagate_pulse,
    propagate_traversal,
    pulse_unitary,
    ramsey_sequence_probability,
    sequence_excitation,
    step_count,
    traversal_matrix,
)
from fountain_dcp.errors import ConfigError, UndefinedPhaseError
from fountain_dcp.trajectories import (
    CloudModel,
    FountainLayout,
    TiltVector,
    TrajectoryBatch,
    default_apertures,
    nominal_batch,
    sample_cloud,
    survive_apertures,
    to_cavity_frame,
    traversal_windows,
)

CLOUD = CloudModel()
LAYOUT = FountainLayout()


class TestPulse:
    def test_unitarity(self):
        u_gg, u_ge, u_eg, u_ee = pulse_unitary(1.3, 0.4, -0.8, 2.1)
        u = np.array([[u_gg, u_ge], [u_eg, u_ee]])
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-14)

    def test_determinant_phase(self):
        delta, tau = 0.7, 1.9
        u_gg, u_ge, u_eg, u_ee = pulse_unitary(2.0, 0.1, delta, tau)
        det = u_gg * u_ee - u_ge * u_eg
        assert det == pytest.approx(np.exp(1j * delta * tau), abs=1e-14)

    def test_generalized_rabi_frozen_value(self):
        """delta = omega with pulse area pi: P = sin^2(pi/sqrt(2)) / 2."""
        omega = 3.0
        tau = math.pi / omega
        _, _, u_eg, _ = pulse_unitary(omega, 0.0, omega, tau)
        assert abs(u_eg) ** 2 == pytest.approx(0.3165638355103539, rel=1e-12)

    def test_resonant_areas(self):
        state = (np.asarray(1.0 + 0.0j), np.asarray(0.0j))
        half = propagate_pulse(state, 1.0, 0.0, 0.0, math.pi / 2)
        assert abs(half[1]) ** 2 == pytest.approx(0.5, rel=1e-12)
        full = propagate_pulse(state, 1.0, 0.0, 0.0, math.pi)
        assert abs(full[1]) ** 2 == pytest.approx(1.0, rel=1e-12)

    def test_drive_phase_lands_on_excitation(self):
        _, _, u_eg, _ = pulse_unitary(1.0, 0.77, 0.0, math.pi / 2)
        assert np.angle(u_eg) == pytest.approx(0.77 - math.pi / 2, rel=1e-9)

    def test_zero_drive_is_free_evolution(self):
        state = (np.asarray(0.6 + 0.0j), np.asarray(0.8 + 0.0j))
        pulsed = propagate_pulse(state, 0.0, 0.0, 0.9, 1.5)
        free = free_evolution(state, 0.9, 1.5)
        assert pulsed[0] == pytest.approx(free[0], abs=1e-12)
        assert pulsed[1] == pytest.approx(free[1], abs=1e-12)


class TestRamsey:
    def test_ideal_fringe(self):
        delta = np.linspace(-4.0, 4.0, 9)
        p = ideal_ramsey_probability(delta, 1.0)
        assert np.allclose(p, 0.5 * (1.0 + np.cos(delta)))

    def test_sequence_approaches_ideal_for_short_pulses(self):
        tau = 1e-6
        omega = 0.5 * math.pi / tau
        for delta in (0.0, 1.0, 2.5):
            got = ramsey_sequence_probability(omega, tau, 0.5, delta)
            want = ideal_ramsey_probability(delta, 0.5)
            assert got == pytest.approx(want, abs=1e-5)

    def test_fringe_terms_reproduce_probability(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            o1, o2 = rng.uniform(0.5, 2.0, 2)
            ph1, ph2 = rng.uniform(-1.0, 1.0, 2)
            uu = pulse_unitary(o1, ph1, 0.0, 1.0)
            ud = pulse_unitary(o2, ph2, 0.0, 1.0)
            alpha_u, beta_u = uu[0], uu[2]
            alpha_d, beta_d = ud[0], ud[2]
            a, b, phi = fringe_terms(alpha_u, beta_u, alpha_d, beta_d)
            x = rng.uniform(0.0, 2.0 * math.pi)
            ce = excitation_from_phases(
                alpha_u, beta_u, alpha_d, beta_d, np.exp(0.25j * x), np.exp(0.75j * x)
            )
            assert abs(ce) ** 2 == pytest.approx(
                a + b * math.cos(x - phi), abs=1e-12
            )

    def test_sequence_excitation_matches_matrix_product(self):
        delta, tau, t_gap = 0.8, 0.3, 2.0
        uu = pulse_unitary(2.2, 0.1, delta, tau)
        ud = pulse_unitary(1.7, -0.3, delta, tau)
        m_u = np.array([[uu[0], uu[1]], [uu[2], uu[3]]])
        m_d = np.array([[ud[0], ud[1]], [ud[2], ud[3]]])
        free = np.diag([1.0, np.exp(1j * delta * t_gap)])
        want = (m_d @ free @ m_u)[1, 0]
        got = sequence_excitation(uu[0], uu[2], ud[0], ud[2], delta, tau, t_gap)
        assert got == pytest.approx(want, abs=1e-14)


@pytest.fixture(scope="module")
def perturbed_field(geometry):
    fmap = parametric_g_model(geometry, ParametricGParams())
    return SynthesizedField(fmap, geometry, single_feed(0.0))


@pytest.fixture(scope="module")
def axial_setup(geometry, perturbed_field):
    batch = nominal_batch(CLOUD, TiltVector(), LAYOUT, geometry)
    t0, t1, _, _, ok = traversal_windows(batch, geometry)
    assert ok[0]
    scale = calibrate_rabi_scale(
        perturbed_field, geometry, CLOUD, LAYOUT, averaging="on_axis"
    )
    return batch, t0, t1, scale


class TestTraversalIntegration:
    def test_rk4_matches_dense_ode_oracle(self, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        delta = 3.0

        def rhs(t, y):
            w = complex(
                _coupling_at(perturbed_field, batch, np.array([t]), scale)[0]
            )
            cg = y[0] + 1j * y[1]
            ce = y[2] + 1j * y[3]
            dcg = -1j * np.conj(w) * ce
            dce = 1j * delta * ce - 1j * w * cg
            return [dcg.real, dcg.imag, dce.real, dce.imag]

        sol = solve_ivp(
            rhs,
            (t0[0], t1[0]),
            [1.0, 0.0, 0.0, 0.0],
            rtol=1e-11,
            atol=1e-13,
            dense_output=False,
        )
        want_alpha = sol.y[0, -1] + 1j * sol.y[1, -1]
        want_beta = sol.y[2, -1] + 1j * sol.y[3, -1]
        alpha, beta = propagate_traversal(
            perturbed_field, batch, t0, t1, step_count(1.0), scale, [delta]
        )
        # the interpolated field is only piecewise smooth; cell-boundary
        # kinks cap the attainable order for both integrators
        assert alpha[0, 0] == pytest.approx(want_alpha, abs=5e-8)
        assert beta[0, 0] == pytest.approx(want_beta, abs=5e-8)

    def test_norm_preserved(self, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        alpha, beta = propagate_traversal(
            perturbed_field, batch, t0, t1, step_count(1.0), scale, [0.5]
        )
        norm = abs(alpha[0, 0]) ** 2 + abs(beta[0, 0]) ** 2
        assert norm == pytest.approx(1.0, abs=1e-10)

    def test_reconstructed_matrix_unitary(self, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        delta = 1.1
        alpha, beta = propagate_traversal(
            perturbed_field, batch, t0, t1, step_count(1.0), scale, [delta]
        )
        u_gg, u_ge, u_eg, u_ee = traversal_matrix(
            alpha[0, 0], beta[0, 0], delta, t1[0] - t0[0]
        )
        u = np.array([[u_gg, u_ge], [u_eg, u_ee]])
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-10)

    def test_probabilities_bitwise_even_in_detuning_for_real_field(
        self, geometry, axial_setup
    ):
        fmap = parametric_g_model(geometry, ParametricGParams())
        real_field = SynthesizedField(fmap, geometry, single_feed(0.0), g_scale=0.0)
        batch, t0, t1, scale = axial_setup
        delta = 2.4
        alpha, beta = propagate_traversal(
            real_field, batch, t0, t1, step_count(1.0), scale, [delta, -delta]
        )
        assert np.array_equal(np.abs(beta[0]) ** 2, np.abs(beta[1]) ** 2)
        assert np.array_equal(np.abs(alpha[0]) ** 2, np.abs(alpha[1]) ** 2)

    def test_on_axis_half_pulse(self, geometry, axial_setup):
        """With on-axis calibration the nominal atom sees exactly a pi/2 area
        per pass, and a resonant commuting drive rotates by exactly that."""
        fmap = parametric_g_model(geometry, ParametricGParams())
        bare = SynthesizedField(fmap, geometry, single_feed(0.0), g_scale=0.0)
        batch, t0, t1, scale = axial_setup
        alpha, beta = propagate_traversal(
            bare, batch, t0, t1, step_count(1.0), scale, [0.0]
        )
        assert abs(beta[0, 0]) == pytest.approx(math.sin(math.pi / 4), rel=1e-7)
        assert np.angle(beta[0, 0]) == pytest.approx(-math.pi / 2, abs=1e-9)


class TestCalibration:
    def test_averaging_ratio_closed_form(self, geometry, perturbed_field):
        """Aperture-averaged drive must exceed the on-axis one by the disc
        average of J0: scale_ap / scale_ax = x0 / (2 J1(x0))."""
        ap = calibrate_rabi_scale(perturbed_field, geometry, CLOUD, LAYOUT)
        ax = calibrate_rabi_scale(
            perturbed_field, geometry, CLOUD, LAYOUT, averaging="on_axis"
        )
        x0 = CHI01P * geometry.endcap_hole_radius / geometry.radius
        assert ap / ax == pytest.approx(x0 / (2.0 * j1(x0)), rel=1e-9)

    def test_unknown_averaging(self, geometry, perturbed_field):
        with pytest.raises(ConfigError):
            calibrate_rabi_scale(
                perturbed_field, geometry, CLOUD, LAYOUT, averaging="median"
            )

    def test_step_count(self):
        assert step_count(0.01) == 160
        assert step_count(1.0) > step_count(0.5)
        with pytest.raises(ConfigError):
            step_count(1.0, step_area=0.0)


class TestEffectivePhase:
    def test_small_phase_from_perturbation(self, geometry, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        phase = effective_traversal_phase(
            perturbed_field, batch, t0, t1, step_count(1.0), scale
        )
        assert phase.shape == (1,)
        assert 0.0 < abs(phase[0]) < 1e-2

    def test_raises_at_pi_area(self, geometry, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        with pytest.raises(UndefinedPhaseError):
            effective_traversal_phase(
                perturbed_field, batch, t0, t1, step_count(2.0), 2.0 * scale
            )

    def test_raises_at_two_pi_area(self, geometry, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        with pytest.raises(UndefinedPhaseError):
            effective_traversal_phase(
                perturbed_field, batch, t0, t1, step_count(4.0), 4.0 * scale
            )


class TestCompiledEngine:
    """The numba kernel must reproduce the numpy integrator."""

    @pytest.fixture(autouse=True)
    def _kernel_module(self):
        self.kern = pytest.importorskip("fountain_dcp._kernel")

    def _thermal_batch(self, geometry, n=64, seed=11):
        pos, vel = sample_cloud(CLOUD, seed, 0, n)
        batch = to_cavity_frame(
            pos, vel, TiltVector(parallel=1.6e-3), LAYOUT, geometry
        )
        keep = np.nonzero(survive_apertures(batch, default_apertures(geometry), geometry))[0]
        return TrajectoryBatch(batch.p[keep], batch.v[keep], batch.a)

    def test_polynomials_match_reference(self):
        from scipy.special import j0

        t = np.linspace(0.0, CHI01P, 4001)
        mine = np.array([self.kern._j0_poly.py_func(v) for v in t])
        assert np.max(np.abs(mine - j0(t))) < 2e-15
        u = np.linspace(0.0, math.pi, 4001)
        mine = np.array([self.kern._sin_0pi.py_func(v) for v in u])
        assert np.max(np.abs(mine - np.sin(u))) < 5e-16

    def test_engines_agree_up_and_down(self, geometry):
        fmap = parametric_g_model(geometry, ParametricGParams())
        feeds = balanced_feeds(delta_psi=0.3, normalized_detuning=0.25)
        field = SynthesizedField(fmap, geometry, feeds)
        batch = self._thermal_batch(geometry)
        up0, up1, dn0, dn1, ok = traversal_windows(batch, geometry)
        assert ok.all()
        scale = calibrate_rabi_scale(field, geometry, CLOUD, LAYOUT)
        deltas = [1.3, -1.3, 0.0]
        for t0, t1 in ((up0, up1), (dn0, dn1)):
            a_np, b_np = propagate_traversal(
                field, batch, t0, t1, step_count(1.0), scale, deltas,
                engine="numpy",
            )
            a_k, b_k = propagate_traversal(
                field, batch, t0, t1, step_count(1.0), scale, deltas,
                engine="kernel",
            )
            assert np.max(np.abs(a_k - a_np)) < 1e-12
            assert np.max(np.abs(b_k - b_np)) < 1e-12

    def test_engines_agree_on_complex_map(self, geometry):
        rho_nodes = np.linspace(0.0, geometry.radius, 41)
        z_nodes = np.linspace(0.0, geometry.height, 61)
        rho_g, z_g = np.meshgrid(rho_nodes, z_nodes, indexing="ij")
        vals = (
            1e-4
            * (rho_g / geometry.radius)
            * np.sin(np.pi * z_g / geometry.height)
            * (1.0 + 0.5j)
        )
        fmap = FieldMap(
            rho_nodes=rho_nodes,
            z_nodes=z_nodes,
            components=(FieldComponent(1, "cos", vals),),
        )
        field = SynthesizedField(fmap, geometry, single_feed(0.0))
        batch = self._thermal_batch(geometry, n=32, seed=3)
        t0, t1, _, _, _ = traversal_windows(batch, geometry)
        scale = calibrate_rabi_scale(field, geometry, CLOUD, LAYOUT)
        a_np, b_np = propagate_traversal(
            field, batch, t0, t1, step_count(1.0), scale, [0.4], engine="numpy"
        )
        a_k, b_k = propagate_traversal(
            field, batch, t0, t1, step_count(1.0), scale, [0.4], engine="kernel"
        )
        assert np.max(np.abs(a_k - a_np)) < 1e-12
        assert np.max(np.abs(b_k - b_np)) < 1e-12

    def test_engines_agree_across_apogee(self, geometry, perturbed_field):
        """A window straddling the apogee has non-monotone altitude and takes
        the kernel's point-by-point fallback."""
        slow = CloudModel(launch_speed=3.13)
        batch = nominal_batch(slow, TiltVector(), LAYOUT, geometry)
        apogee = batch.apogee_z()[0]
        assert 0.0 < apogee < geometry.height
        t_apogee = batch.v[0, 2] / -batch.a[2]
        t0 = np.array([0.7 * t_apogee])
        t1 = np.array([1.3 * t_apogee])
        scale = calibrate_rabi_scale(
            perturbed_field, geometry, CLOUD, LAYOUT, averaging="on_axis"
        )
        a_np, b_np = propagate_traversal(
            perturbed_field, batch, t0, t1, 400, scale, [0.9], engine="numpy"
        )
        a_k, b_k = propagate_traversal(
            perturbed_field, batch, t0, t1, 400, scale, [0.9], engine="kernel"
        )
        assert np.max(np.abs(a_k - a_np)) < 1e-12
        assert np.max(np.abs(b_k - b_np)) < 1e-12

    def test_kernel_parity_bitwise_for_real_field(self, geometry):
        fmap = parametric_g_model(geometry, ParametricGParams())
        real_field = SynthesizedField(fmap, geometry, single_feed(0.0), g_scale=0.0)
        batch = self._thermal_batch(geometry, n=32, seed=7)
        t0, t1, _, _, _ = traversal_windows(batch, geometry)
        scale = calibrate_rabi_scale(real_field, geometry, CLOUD, LAYOUT)
        delta = 1.7
        alpha, beta = propagate_traversal(
            real_field, batch, t0, t1, step_count(1.0), scale,
            [delta, -delta], engine="kernel",
        )
        assert np.array_equal(np.abs(beta[0]) ** 2, np.abs(beta[1]) ** 2)
        assert np.array_equal(np.abs(alpha[0]) ** 2, np.abs(alpha[1]) ** 2)

    def test_unknown_engine_rejected(self, geometry, perturbed_field, axial_setup):
        batch, t0, t1, scale = axial_setup
        with pytest.raises(ConfigError):
            propagate_traversal(
                perturbed_field, batch, t0, t1, 200, scale, [0.0], engine="gpu"
            )
