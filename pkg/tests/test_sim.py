import numpy as np
import pytest

from phasestab.actuator import build_actuator
from phasestab.linearization import PhysicalParams, assemble_plant, g_field
from phasestab.lqr import solve_care
from phasestab.sim import (
    BlowUpError,
    StateYZ,
    fit_exponential_rate,
    from_physical,
    remainder_G_direct,
    remainder_G_expanded,
    seeded_initial_state,
    simulate,
    step_imex,
    physical_deviation_norm,
    to_physical,
    xi_norm,
)
from phasestab.spectral import ScalarField, SpectralBasis
from phasestab.stationary import stationary_constant


@pytest.fixture(scope="module")
def world():
    basis = SpectralBasis(L=1.0, M=64)
    params = PhysicalParams(nu=0.1, l0=1.0, gamma0=1.0)
    state = stationary_constant(0, basis=basis)
    plant = assemble_plant(params, state, basis)
    act = build_actuator(plant)
    sol = solve_care(plant, act)
    return basis, params, state, plant, act, sol


def smooth_random_field(basis, seed, amplitude=1.0):
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(basis.M) * np.exp(-0.25 * np.arange(basis.M))
    f = ScalarField(basis, coeffs)
    scale = amplitude / max(amplitude, np.abs(f.values).max())
    return scale * f


class TestRemainderTerm:
    def test_zero_input(self, world):
        basis, _, state, plant, _, _ = world
        out = remainder_G_direct(ScalarField.zero(basis), state.phi_inf, plant.g)
        assert np.abs(out.coeffs).max() == 0.0

    def test_constant_input_constant_background(self, world):
        basis, *_ = world
        phi = ScalarField.constant(basis, 1.0)
        g = g_field(phi)
        y = ScalarField.constant(basis, 0.25)
        out = remainder_G_direct(y, phi, g)
        assert np.abs(out.coeffs).max() < 1e-12

    def test_direct_vs_expanded_constant_background(self, world):
        basis, *_ = world
        phi = ScalarField.constant(basis, 1.0)
        g = g_field(phi)
        for seed in range(50):
            y = smooth_random_field(basis, seed)
            d = remainder_G_direct(y, phi, g)
            e = remainder_G_expanded(y, phi, g)
            assert np.abs(d.coeffs - e.coeffs).max() <= 1e-8 * (
                1.0 + np.abs(d.coeffs).max()
            )

    def test_direct_vs_expanded_varying_background(self, world):
        basis, *_ = world
        phi = ScalarField.from_values(
            basis, 0.4 * np.cos(np.pi * basis.nodes) + 0.2
        )
        g = g_field(phi)
        for seed in range(50):
            y = smooth_random_field(basis, seed + 100)
            d = remainder_G_direct(y, phi, g)
            e = remainder_G_expanded(y, phi, g)
            assert np.abs(d.coeffs - e.coeffs).max() <= 1e-8 * (
                1.0 + np.abs(d.coeffs).max()
            )

    def test_background_terms_vanish_for_constant_phi(self, world):
        # with constant phi_inf the g-dependent pieces drop out exactly
        basis, *_ = world
        phi = ScalarField.constant(basis, 0.8)
        g = g_field(phi)
        assert np.abs(g.coeffs).max() < 1e-14
        y = smooth_random_field(basis, 3)
        zero_g = remainder_G_direct(y, phi, ScalarField.zero(basis))
        with_g = remainder_G_direct(y, phi, g)
        assert np.abs(zero_g.coeffs - with_g.coeffs).max() < 1e-12

    def test_quadratic_scaling(self, world):
        # around phi_inf = 1 the 3 phi_inf y^2 term dominates: quadratic order
        basis, *_ = world
        phi = ScalarField.constant(basis, 1.0)
        g = g_field(phi)
        e1 = ScalarField.from_values(basis, basis.basis_function(1, basis.nodes))
        norms = []
        for eps in (1e-2, 1e-3):
            out = remainder_G_expanded(eps * e1, phi, g)
            norms.append(out.norm_L2())
        ratio = norms[0] / norms[1]
        assert abs(ratio - 100.0) <= 5.0

    def test_cubic_scaling_around_zero(self, world):
        # around phi_inf = 0 the remainder is purely cubic
        basis, _, state, plant, _, _ = world
        e1 = ScalarField.from_values(basis, basis.basis_function(1, basis.nodes))
        norms = []
        for eps in (1e-2, 1e-3):
            out = remainder_G_expanded(eps * e1, state.phi_inf, plant.g)
            norms.append(out.norm_L2())
        ratio = norms[0] / norms[1]
        assert abs(ratio - 1000.0) <= 50.0

    def test_mean_annihilated(self, world):
        basis, _, state, plant, _, _ = world
        y = smooth_random_field(basis, 4)
        out = remainder_G_direct(y, state.phi_inf, plant.g)
        assert out.coeffs[0] == 0.0


class TestStepImex:
    def test_zero_state_is_fixed_point(self, world):
        basis, _, state, plant, _, _ = world
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        s1 = step_imex(s0, 1e-3, plant)
        assert np.abs(s1.y.coeffs).max() == 0.0
        assert np.abs(s1.z.coeffs).max() == 0.0

    def test_linear_eigenmode_recursion(self, world):
        basis, _, state, plant, _, _ = world
        lam = plant.eigenvalues[plant.N_unstable]
        v = plant.eigenvectors[:, plant.N_unstable]
        s0 = StateYZ(ScalarField(basis, v[:64]), ScalarField(basis, v[64:]))
        dt, n = 1e-3, 50
        s = s0
        for _ in range(n):
            s = step_imex(s, dt, plant, nonlinear=False)
        amp = np.hypot(np.linalg.norm(s.y.coeffs), np.linalg.norm(s.z.coeffs))
        assert amp == pytest.approx((1.0 + dt * lam) ** (-n), rel=1e-10)

    def test_mean_conservation_over_1000_steps(self, world):
        basis, _, state, plant, _, _ = world
        y0, z0 = seeded_initial_state(basis, 0.05, seed=5)
        rec = simulate(plant, y0, z0, dt=1e-3, t_end=1.0, nonlinear=True, stat=state)
        assert np.abs(rec.mean_y - rec.mean_y[0]).max() <= 1e-10
        assert np.abs(rec.mean_z - rec.mean_z[0]).max() <= 1e-10

    def test_dt_validation(self, world):
        basis, _, state, plant, _, _ = world
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        with pytest.raises(ValueError):
            step_imex(s0, -1e-3, plant)

    def test_dt_beyond_invertibility_bound_rejected(self, world):
        # the k=1 block has negative determinant, so huge steps lose
        # invertibility of I + dt * block
        basis, _, state, plant, _, _ = world
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        with pytest.raises(ValueError, match="invertibility"):
            step_imex(s0, 20.0, plant)

    def test_gain_without_actuator_rejected(self, world):
        basis, _, state, plant, _, sol = world
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        with pytest.raises(ValueError):
            step_imex(s0, 1e-3, plant, sol=sol, act=None)


class TestSimulate:
    def test_closed_loop_decay(self, world):
        basis, _, state, plant, act, sol = world
        y0, z0 = seeded_initial_state(basis, 1e-2, seed=1234)
        rec = simulate(
            plant, y0, z0, dt=1e-3, t_end=20.0, sol=sol, act=act,
            nonlinear=True, stat=state, record_every=10,
        )
        assert rec.fitted_rate is not None and rec.fitted_rate > 0
        # decay consistent with the synthesized margin (the conserved means
        # are the slowest closed-loop directions)
        assert rec.fitted_rate >= 0.9 * sol.margin
        assert rec.xi_norms[-1] <= rec.xi_norms[0] * 1.5 * np.exp(-sol.margin * 20.0)
        assert rec.fit_r2 > 0.99

    def test_open_loop_unstable_growth(self, world):
        basis, _, state, plant, _, _ = world
        lam1 = plant.eigenvalues[0]
        v1 = plant.eigenvectors[:, 0]
        y0 = ScalarField(basis, 1e-3 * v1[:64])
        z0 = ScalarField(basis, 1e-3 * v1[64:])
        rec = simulate(plant, y0, z0, dt=1e-4, t_end=1.0, nonlinear=False, stat=state)
        growth = rec.xi_norms[-1] / rec.xi_norms[0]
        assert growth == pytest.approx(np.exp(-lam1), rel=0.02)

    def test_rate_insensitive_to_amplitude(self, world):
        basis, _, state, plant, act, sol = world
        rates = []
        for rho in (1e-2, 5e-3):
            y0, z0 = seeded_initial_state(basis, rho, seed=1234)
            rec = simulate(
                plant, y0, z0, dt=1e-3, t_end=20.0, sol=sol, act=act,
                nonlinear=True, stat=state, record_every=20,
            )
            rates.append(rec.fitted_rate)
        assert abs(rates[0] - rates[1]) <= 0.1 * rates[0]

    def test_first_order_convergence(self, world):
        basis, _, state, plant, _, _ = world
        y0, z0 = seeded_initial_state(basis, 0.1, seed=7)

        def final(dt):
            rec = simulate(plant, y0, z0, dt=dt, t_end=1.0, nonlinear=True, stat=state)
            return np.concatenate(
                [rec.final_state.y.coeffs, rec.final_state.z.coeffs]
            )

        ref = final(4e-3 / 8.0)
        e_coarse = np.linalg.norm(final(4e-3) - ref)
        e_fine = np.linalg.norm(final(2e-3) - ref)
        assert e_coarse / e_fine == pytest.approx(2.0, rel=0.2)

    def test_imex2_second_order_and_linear_exactness(self, world):
        basis, _, state, plant, _, _ = world
        # CN amplitude on a single eigenmode matches the scalar recursion
        lam = plant.eigenvalues[plant.N_unstable]
        v = plant.eigenvectors[:, plant.N_unstable]
        s = StateYZ(ScalarField(basis, v[:64]), ScalarField(basis, v[64:]))
        dt, n = 1e-3, 20
        for _ in range(n):
            s = step_imex(s, dt, plant, nonlinear=False, scheme="imex2")
        amp = np.hypot(np.linalg.norm(s.y.coeffs), np.linalg.norm(s.z.coeffs))
        expected = ((1.0 - 0.5 * dt * lam) / (1.0 + 0.5 * dt * lam)) ** n
        assert amp == pytest.approx(expected, rel=1e-10)

        # ratio of trajectory errors approaches second order
        y0, z0 = seeded_initial_state(basis, 0.1, seed=8)

        def final(dt):
            rec = simulate(
                plant, y0, z0, dt=dt, t_end=1.0, nonlinear=True, stat=state,
                scheme="imex2",
            )
            return np.concatenate(
                [rec.final_state.y.coeffs, rec.final_state.z.coeffs]
            )

        ref = final(1e-4)
        e_coarse = np.linalg.norm(final(2e-3) - ref)
        e_fine = np.linalg.norm(final(1e-3) - ref)
        assert e_coarse / e_fine > 2.5

    def test_blowup_guard_triggers(self, world):
        basis, _, state, plant, _, _ = world
        v1 = plant.eigenvectors[:, 0]
        y0 = ScalarField(basis, 1e-3 * v1[:64])
        z0 = ScalarField(basis, 1e-3 * v1[64:])
        with pytest.raises(BlowUpError) as info:
            simulate(
                plant, y0, z0, dt=1e-3, t_end=5.0, nonlinear=False, stat=state,
                blowup_factor=1.0 + 1e-4,
            )
        assert info.value.norm > 0
        assert 0 < info.value.t <= 5.0

    def test_control_forcing_localized_along_run(self, world):
        # replay the recorded amplitudes through the actuator: node values
        # outside omega stay at exact zero
        basis, _, state, plant, act, sol = world
        from phasestab.actuator import apply_B

        y0, z0 = seeded_initial_state(basis, 1e-2, seed=9)
        rec = simulate(
            plant, y0, z0, dt=1e-3, t_end=0.2, sol=sol, act=act,
            nonlinear=True, stat=state,
        )
        outside = (basis.nodes <= act.omega[0]) | (basis.nodes >= act.omega[1])
        for i in range(0, len(rec.times), 20):
            fy, fz = apply_B(act, rec.control_amplitudes[i])
            assert np.all(np.abs(fy.values[outside]) <= 1e-300)
            assert np.all(np.abs(fz.values[outside]) <= 1e-300)


class TestPhysicalMap:
    @pytest.fixture
    def nontrivial(self):
        basis = SpectralBasis(L=1.0, M=32)
        params = PhysicalParams(nu=0.2, l0=2.0, gamma0=0.5)
        state = stationary_constant(+1, theta=0.3, basis=basis)
        return basis, params, state

    def test_zero_state_maps_to_target(self, nontrivial):
        basis, params, state = nontrivial
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        phi, theta = to_physical(s0, state, params)
        assert np.abs(phi.values - 1.0).max() < 1e-12
        assert np.abs(theta.values - 0.3).max() < 1e-12

    def test_round_trip(self, nontrivial):
        basis, params, state = nontrivial
        rng = np.random.default_rng(10)
        s0 = StateYZ(
            ScalarField(basis, rng.standard_normal(basis.M)),
            ScalarField(basis, rng.standard_normal(basis.M)),
        )
        phi, theta = to_physical(s0, state, params)
        back = from_physical(phi, theta, state, params)
        assert np.abs(back.y.coeffs - s0.y.coeffs).max() < 1e-12
        assert np.abs(back.z.coeffs - s0.z.coeffs).max() < 1e-12

    def test_unit_parameters_give_sigma_theta_plus_phi(self):
        basis = SpectralBasis(L=1.0, M=32)
        params = PhysicalParams(nu=0.1, l0=1.0, gamma0=1.0)
        assert params.alpha0 == 1.0
        state = stationary_constant(0, basis=basis)
        rng = np.random.default_rng(11)
        phi = ScalarField(basis, rng.standard_normal(basis.M))
        theta = ScalarField(basis, rng.standard_normal(basis.M))
        st = from_physical(phi, theta, state, params)
        assert np.abs(st.z.coeffs - (theta.coeffs + phi.coeffs)).max() < 1e-12

    def test_theorem_norm_identity(self, nontrivial):
        basis, params, state = nontrivial
        rng = np.random.default_rng(12)
        s0 = StateYZ(
            ScalarField(basis, 0.01 * rng.standard_normal(basis.M)),
            ScalarField(basis, 0.01 * rng.standard_normal(basis.M)),
        )
        assert physical_deviation_norm(s0, state, params) == pytest.approx(
            xi_norm(s0), abs=1e-12
        )

    def test_zero_deviation_norm(self, nontrivial):
        basis, params, state = nontrivial
        s0 = StateYZ(ScalarField.zero(basis), ScalarField.zero(basis))
        assert physical_deviation_norm(s0, state, params) == pytest.approx(0.0, abs=1e-14)


class TestFitting:
    def test_pure_exponential_recovered(self):
        t = np.linspace(0, 10, 200)
        v = 3.0 * np.exp(-0.7 * t)
        rate, r2 = fit_exponential_rate(t, v, (2.0, 10.0))
        assert rate == pytest.approx(0.7, rel=1e-10)
        assert r2 > 0.999999

    def test_floor_rejects_fit(self):
        t = np.linspace(0, 10, 100)
        v = np.full_like(t, 1e-15)
        rate, r2 = fit_exponential_rate(t, v, (0.0, 10.0))
        assert rate is None

    def test_too_few_samples_rejected(self):
        t = np.linspace(0, 10, 10)
        v = np.exp(-t)
        rate, _ = fit_exponential_rate(t, v, (0.0, 10.0))
        assert rate is None

    def test_poor_fit_rejected(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0, 10, 100)
        v = np.exp(rng.standard_normal(100))
        rate, r2 = fit_exponential_rate(t, v, (0.0, 10.0))
        assert rate is None
        assert r2 is not None and r2 < 0.99
