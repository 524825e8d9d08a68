import numpy as np
import pytest

from biflux.errors import HyperbolicityError, ShockTimeError
from biflux.thermo import flux_jacobian
from biflux.waves import (
    WaveProblem,
    cell_centers,
    characteristics_oracle,
    corrected_profiles,
    correction_functions,
    eigen_structure,
    geo_coefficients,
    initial_waves,
    normalize_coordinates,
    reconstruct_profiles,
    shock_time_estimate,
    solve_scalar_conservation,
    solve_wave_pair,
)


class TestEigenStructure:
    def test_diagonal_matrix(self):
        e = eigen_structure(np.diag([0.4, -0.4]))
        assert (e.lam, e.mu) == (0.4, -0.4)
        np.testing.assert_allclose(e.r, [1, 0], atol=0)
        np.testing.assert_allclose(e.s, [0, 1], atol=0)
        np.testing.assert_allclose(e.l, [1, 0], atol=0)
        np.testing.assert_allclose(e.m, [0, 1], atol=0)

    def test_diagonal_matrix_reversed_order(self):
        # the first eigenpair is the one leaning along the first axis
        e = eigen_structure(np.diag([-0.2, 0.9]))
        assert (e.lam, e.mu) == (-0.2, 0.9)
        np.testing.assert_allclose(e.r, [1, 0], atol=0)

    def test_complex_spectrum_rejected(self):
        with pytest.raises(HyperbolicityError, match="complex"):
            eigen_structure(np.array([[0.0, -1.0], [1.0, 0.0]]))

    def test_degenerate_spectrum_rejected(self):
        with pytest.raises(HyperbolicityError, match="strict"):
            eigen_structure(np.array([[0.3, 0.0], [0.0, 0.3 + 1e-9]]))

    def test_biorthogonality_and_reconstruction(self):
        rng = np.random.default_rng(12)
        found = 0
        while found < 50:
            d = rng.normal(size=(2, 2))
            vals = np.linalg.eigvals(d)
            if np.abs(vals.imag).max() > 0 or abs(vals[0] - vals[1]) < 1e-3:
                continue
            found += 1
            e = eigen_structure(d)
            assert abs(np.linalg.norm(e.r) - 1) <= 1e-12
            assert abs(np.linalg.norm(e.s) - 1) <= 1e-12
            assert e.l @ e.r == pytest.approx(1.0, abs=1e-10)
            assert e.m @ e.s == pytest.approx(1.0, abs=1e-10)
            assert e.l @ e.s == pytest.approx(0.0, abs=1e-10)
            assert e.m @ e.r == pytest.approx(0.0, abs=1e-10)
            np.testing.assert_allclose(e.reconstruct(), d, atol=1e-9)

    def test_sign_convention_deterministic(self):
        d = np.array([[0.2, 0.3], [0.4, -0.5]])
        e1, e2 = eigen_structure(d), eigen_structure(d)
        assert e1.r[0] > 0 and e1.s[np.nonzero(np.abs(e1.s) > 1e-14)[0][0]] > 0
        np.testing.assert_array_equal(e1.r, e2.r)


class TestNormalizedFrame:
    def test_tasep_frame_is_axis_aligned(self, tasep):
        frame = normalize_coordinates(tasep, 0.3, 0.7)
        jac = frame.jacobian(0.0, 0.0)
        assert abs(jac[0, 1]) <= 1e-9 and abs(jac[1, 0]) <= 1e-9
        np.testing.assert_allclose(np.diag(jac), [0.4, -0.4], atol=1e-10)

    def test_transformed_flux_vanishes_at_origin(self, coupled):
        frame = normalize_coordinates(coupled, 0.2, 0.25)
        f1, f2 = frame.flux(0.0, 0.0)
        assert abs(f1) <= 1e-14 and abs(f2) <= 1e-14

    def test_transformed_jacobian_diagonal_at_origin(self, coupled):
        frame = normalize_coordinates(coupled, 0.2, 0.25)
        jac = frame.jacobian(0.0, 0.0)
        assert abs(jac[0, 1]) <= 1e-9 and abs(jac[1, 0]) <= 1e-9
        np.testing.assert_allclose(
            np.diag(jac), [frame.eigen.lam, frame.eigen.mu], atol=1e-9
        )

    def test_round_trip(self, coupled):
        frame = normalize_coordinates(coupled, 0.2, 0.25)
        p, q = frame.to_normalized(0.27, 0.18)
        u, v = frame.from_normalized(p, q)
        assert (float(u), float(v)) == pytest.approx((0.27, 0.18), abs=1e-13)


class TestGeoCoefficients:
    def test_tasep_values(self, tasep):
        co = geo_coefficients(tasep, 0.3, 0.7)
        assert co.a1 == pytest.approx(-2.0, abs=1e-7)
        assert co.b1 == pytest.approx(-2.0, abs=1e-7)
        assert co.a2 == 0.0 and co.b2 == 0.0
        assert co.a2n == 0.0 and co.a3 == 0.0 and co.b2n == 0.0 and co.b3 == 0.0
        assert co.genuinely_nonlinear

    def test_coupled_cross_terms_nonzero(self, coupled):
        co = geo_coefficients(coupled, 0.2, 0.2)
        assert abs(co.a2) > 0.01 and abs(co.b2) > 0.01
        assert abs(co.a2n) > 0.01 and abs(co.b2n) > 0.01
        assert co.genuinely_nonlinear

    def test_contraction_oracle(self, coupled):
        # independent route: contract the closed-form Hessians by hand
        u0 = v0 = 0.2
        e = eigen_structure(flux_jacobian(coupled, u0, v0))
        h_phi = 0.5 * np.array([[-2.0, 1.0], [1.0, 0.0]])
        h_psi = 0.5 * np.array([[0.0, -1.0], [-1.0, 2.0]])
        co = geo_coefficients(coupled, u0, v0)
        a1 = e.l @ np.array([e.r @ h_phi @ e.r, e.r @ h_psi @ e.r])
        a2 = e.l @ np.array([e.r @ h_phi @ e.s, e.r @ h_psi @ e.s])
        b1 = e.m @ np.array([e.s @ h_phi @ e.s, e.s @ h_psi @ e.s])
        b2 = e.m @ np.array([e.r @ h_phi @ e.s, e.r @ h_psi @ e.s])
        assert co.a1 == pytest.approx(a1, abs=1e-6)
        assert co.a2 == pytest.approx(a2, abs=1e-6)
        assert co.b1 == pytest.approx(b1, abs=1e-6)
        assert co.b2 == pytest.approx(b2, abs=1e-6)

    def test_general_and_normalized_frames_agree(self, coupled):
        co = geo_coefficients(coupled, 0.22, 0.18)
        assert co.a1 == pytest.approx(co.a1n, abs=1e-6)
        assert co.a2 == pytest.approx(co.a2n, abs=1e-6)
        assert co.b1 == pytest.approx(co.b1n, abs=1e-6)
        assert co.b2 == pytest.approx(co.b2n, abs=1e-6)


class TestInitialWaves:
    def test_cosine_with_diagonal_frame(self, tasep):
        e = eigen_structure(flux_jacobian(tasep, 0.3, 0.7))
        init = initial_waves(lambda x: np.cos(2 * np.pi * x), lambda x: 0.0 * x, e, 128)
        np.testing.assert_allclose(init.sigma0, np.cos(2 * np.pi * init.x), atol=1e-14)
        np.testing.assert_allclose(init.delta0, 0.0, atol=1e-14)
        assert abs(init.c_sigma) <= 1e-10 and abs(init.c_delta) <= 1e-10

    def test_constant_profiles(self, tasep):
        e = eigen_structure(flux_jacobian(tasep, 0.3, 0.7))
        init = initial_waves(lambda x: 0.2 + 0.0 * x, lambda x: -0.1 + 0.0 * x, e, 64)
        expected = e.l @ np.array([0.2, -0.1])
        assert init.c_sigma == pytest.approx(expected, abs=1e-14)

    def test_biorthogonal_reconstruction(self, coupled):
        e = eigen_structure(flux_jacobian(coupled, 0.2, 0.25))
        u_star = lambda x: 0.1 * np.cos(2 * np.pi * x) + 0.05 * np.sin(4 * np.pi * x)
        v_star = lambda x: 0.07 * np.sin(2 * np.pi * x)
        init = initial_waves(u_star, v_star, e, 256)
        u_back = init.sigma0 * e.r[0] + init.delta0 * e.s[0]
        v_back = init.sigma0 * e.r[1] + init.delta0 * e.s[1]
        np.testing.assert_allclose(u_back, u_star(init.x), atol=1e-10)
        np.testing.assert_allclose(v_back, v_star(init.x), atol=1e-10)

    def test_minimum_grid(self, tasep):
        e = eigen_structure(flux_jacobian(tasep, 0.3, 0.7))
        with pytest.raises(ValueError):
            initial_waves(lambda x: x, lambda x: x, e, 32)


class TestScalarSolver:
    def test_constant_stays_constant(self):
        w0 = np.full(128, 0.37)
        snaps, drift = solve_scalar_conservation(w0, -2.0, 0.3, [0.5, 1.0])
        np.testing.assert_allclose(snaps[-1], 0.37, atol=1e-14)
        assert drift <= 1e-15

    def test_pure_transport_is_shifted_profile(self):
        m = 512
        x = cell_centers(m)
        w0 = 0.3 * np.sin(2 * np.pi * x)
        speed, t = 0.7, 0.41
        snaps, _ = solve_scalar_conservation(w0, 0.0, speed, [t])
        exact = 0.3 * np.sin(2 * np.pi * (x - speed * t))
        l1 = np.abs(snaps[0] - exact).mean()
        assert l1 <= 4.0 / m  # first-order scheme, O(dx)

    def test_burgers_matches_characteristics(self):
        m = 512
        x = cell_centers(m)
        w0_func = lambda y: 0.1 * np.sin(2 * np.pi * np.asarray(y))
        snaps, drift = solve_scalar_conservation(w0_func(x), 1.0, 0.0, [0.5])
        oracle = characteristics_oracle(w0_func, 1.0, 0.0, 0.5, x)
        assert np.abs(snaps[0] - oracle).mean() <= 2.0 / m
        assert drift <= 1e-12

    def test_convergence_order(self):
        errs = {}
        for m in (256, 512):
            x = cell_centers(m)
            w0_func = lambda y: 0.1 * np.sin(2 * np.pi * np.asarray(y))
            snaps, _ = solve_scalar_conservation(w0_func(x), 1.0, 0.0, [0.5])
            oracle = characteristics_oracle(w0_func, 1.0, 0.0, 0.5, x)
            errs[m] = np.abs(snaps[0] - oracle).mean()
        assert np.log2(errs[256] / errs[512]) >= 0.9

    def test_shock_time_estimate_closed_form(self):
        m = 1024
        w0 = 0.1 * np.sin(2 * np.pi * cell_centers(m))
        estimate = shock_time_estimate(w0, 1.0)
        assert estimate == pytest.approx(1.0 / (0.2 * np.pi), rel=1e-3)
        assert shock_time_estimate(w0, 0.0) == np.inf

    def test_integration_past_shock_refused(self):
        w0 = 0.1 * np.sin(2 * np.pi * cell_centers(256))
        with pytest.raises(ShockTimeError):
            solve_scalar_conservation(w0, 1.0, 0.0, [5.0])

    def test_concave_flux_godunov(self):
        # two-lane waves have a1 < 0; cross-check against characteristics
        m = 512
        x = cell_centers(m)
        w0_func = lambda y: 0.25 * np.cos(2 * np.pi * np.asarray(y))
        snaps, _ = solve_scalar_conservation(w0_func(x), -2.0, 0.1, [0.2])
        oracle = characteristics_oracle(w0_func, -2.0, 0.1, 0.2, x)
        assert np.abs(snaps[0] - oracle).mean() <= 2.0 / m


class TestCharacteristicsOracle:
    def test_time_zero_identity(self):
        w0 = lambda y: 0.3 * np.cos(2 * np.pi * np.asarray(y))
        x = np.array([0.1, 0.47, 0.92])
        np.testing.assert_allclose(
            characteristics_oracle(w0, 1.3, 0.2, 0.0, x), w0(x), atol=1e-12
        )

    def test_pure_transport(self):
        w0 = lambda y: 0.3 * np.cos(2 * np.pi * np.asarray(y))
        val = characteristics_oracle(w0, 0.0, 0.6, 0.25, 0.4)
        assert val == pytest.approx(float(w0(0.4 - 0.6 * 0.25)), abs=1e-12)

    def test_implicit_residual_small(self):
        w0 = lambda y: 0.1 * np.sin(2 * np.pi * np.asarray(y))
        quad, lin, t = 1.0, 0.0, 0.8
        for x in (0.13, 0.5, 0.77):
            w = characteristics_oracle(w0, quad, lin, t, x)
            resid = w - float(w0(np.mod(x - (quad * w + lin) * t, 1.0)))
            assert abs(resid) <= 1e-12


class TestReconstruction:
    @pytest.fixture()
    def problem(self, tasep, cos_profile, sin_profile):
        return WaveProblem.build(tasep, 0.3, 0.7, cos_profile, sin_profile, m=512)

    def test_time_zero_reproduces_profiles(self, problem, cos_profile, sin_profile):
        field = problem.fields_at([0.0])[0]
        n = 512
        du, dv = reconstruct_profiles(field, problem.eigen, n, 0.1)
        x = np.arange(n) / n
        np.testing.assert_allclose(du, cos_profile(x), atol=1e-8)
        np.testing.assert_allclose(dv, sin_profile(x), atol=1e-8)

    def test_pure_lambda_wave_translates(self, tasep, cos_profile):
        problem = WaveProblem.build(
            tasep, 0.3, 0.7, cos_profile, lambda x: 0.0 * np.asarray(x), m=512
        )
        t, n, beta = 0.05, 256, 0.1
        field = problem.fields_at([t])[0]
        du, dv = reconstruct_profiles(field, problem.eigen, n, beta)
        np.testing.assert_allclose(dv, 0.0, atol=1e-12)
        # the delta wave is absent; u rides at speed lambda n^beta plus the
        # slow self-steepening of sigma itself
        x = np.arange(n) / n
        shift = problem.eigen.lam * n**beta * t
        ref = field.sigma_at(x - shift)
        np.testing.assert_allclose(du, ref, atol=1e-12)

    def test_mass_conserved_in_time(self, problem):
        n, beta = 512, 0.1
        masses = []
        for t in (0.0, 0.1, 0.2):
            field = problem.fields_at([t])[0]
            du, dv = reconstruct_profiles(field, problem.eigen, n, beta)
            masses.append((du.mean(), dv.mean()))
        expected_u = problem.coeffs.c_sigma * problem.eigen.r[0] + problem.coeffs.c_delta * problem.eigen.s[0]
        for mu, mv in masses:
            assert mu == pytest.approx(expected_u, abs=1e-10)
            assert mv == pytest.approx(masses[0][1], abs=1e-10)


class TestCorrections:
    def test_decoupled_corrections_vanish_bitwise(self, tasep, cos_profile, sin_profile):
        problem = WaveProblem.build(tasep, 0.3, 0.7, cos_profile, sin_profile, m=256)
        field = problem.fields_at([0.1])[0]
        prof = corrected_profiles(field, problem.coeffs, problem.eigen, 64, 0.1)
        assert np.all(prof.sigma_bar == 0.0)
        assert np.all(prof.delta_bar == 0.0)
        assert np.array_equal(prof.u_tilde, prof.u_plain)
        assert np.array_equal(prof.v_tilde, prof.v_plain)

    def test_coupled_corrections_nonzero(self, coupled):
        problem = WaveProblem.build(
            coupled,
            0.2,
            0.2,
            lambda x: 0.1 * np.cos(2 * np.pi * np.asarray(x)),
            lambda x: 0.1 * np.sin(2 * np.pi * np.asarray(x)),
            m=256,
        )
        field = problem.fields_at([0.05])[0]
        prof = corrected_profiles(field, problem.coeffs, problem.eigen, 128, 0.1)
        assert np.abs(prof.sigma_bar).max() > 1e-4
        assert np.abs(prof.delta_bar).max() > 1e-4

    def test_periodicity_in_each_argument(self, coupled):
        problem = WaveProblem.build(
            coupled,
            0.2,
            0.2,
            lambda x: 0.1 * np.cos(2 * np.pi * np.asarray(x)),
            lambda x: 0.1 * np.sin(2 * np.pi * np.asarray(x)),
            m=512,
        )
        field = problem.fields_at([0.05])[0]
        sigma_bar, delta_bar = correction_functions(field, problem.coeffs, problem.eigen)
        x1 = np.linspace(0, 1, 37, endpoint=False)
        x2 = np.linspace(0, 1, 41, endpoint=False) + 0.013
        np.testing.assert_allclose(sigma_bar(x1 + 1.0, x2[:37]), sigma_bar(x1, x2[:37]), atol=1e-10)
        np.testing.assert_allclose(sigma_bar(x1, x2[:37] + 1.0), sigma_bar(x1, x2[:37]), atol=1e-10)
        np.testing.assert_allclose(delta_bar(x1 + 1.0, x2[:37]), delta_bar(x1, x2[:37]), atol=1e-10)

    def test_correction_size_bound(self, coupled):
        problem = WaveProblem.build(
            coupled,
            0.2,
            0.2,
            lambda x: 0.1 * np.cos(2 * np.pi * np.asarray(x)),
            lambda x: 0.1 * np.sin(2 * np.pi * np.asarray(x)),
            m=256,
        )
        n, beta = 128, 0.1
        field = problem.fields_at([0.05])[0]
        prof = corrected_profiles(field, problem.coeffs, problem.eigen, n, beta)
        bound = float(n) ** (-beta) * np.abs(prof.sigma_bar).max()
        assert np.abs(prof.u_tilde - prof.u_plain).max() <= bound + 1e-15


class TestWavePair:
    def test_mass_drift_per_step(self, tasep, cos_profile, sin_profile):
        problem = WaveProblem.build(tasep, 0.3, 0.7, cos_profile, sin_profile, m=1024)
        fields, drift = solve_wave_pair(problem.init, problem.coeffs, [0.1, 0.2])
        assert drift <= 1e-12
        assert fields[0].time == 0.1 and fields[1].time == 0.2

    def test_guard_times(self, tasep, cos_profile, sin_profile):
        problem = WaveProblem.build(tasep, 0.3, 0.7, cos_profile, sin_profile, m=256)
        problem.guard_times([0.2])  # fine: 0.2 < 0.9 * ~0.318
        with pytest.raises(ShockTimeError):
            problem.guard_times([0.32])
