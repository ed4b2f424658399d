import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoreg import profiles
from anisoreg.field import Grid, ScalarField
from anisoreg.geometry import ContainmentError
from anisoreg.params import StructureParams, intrinsic_theta
from anisoreg.solver import (FluxModel, SolverConfig, SolverError, bump, check_structure,
                             check_truncation_subsolution, energy, inner, normalize_transform,
                             prototype_flux, residual, solve, solve_forced, transformed_residual,
                             weak_form)

from conftest import unit_grid

PAR = StructureParams(2, 1, 1.5)
FLUX = prototype_flux(1.5)


class TestFlux:
    @pytest.mark.parametrize("eps", [0.0, 1e-8, 1e-2])
    def test_flux_is_derivative_of_potential(self, eps):
        f = prototype_flux(1.5, eps)
        xi = np.linspace(-3, 3, 61)
        xi = xi[np.abs(xi) > 0.05]
        h = 1e-6
        num = (f.potential(xi + h) - f.potential(xi - h)) / (2 * h)
        np.testing.assert_allclose(f.flux(xi), num, rtol=1e-6)

    def test_dflux_is_derivative_of_flux(self):
        f = prototype_flux(1.3, 1e-3)
        xi = np.linspace(-2, 2, 41)
        h = 1e-7
        np.testing.assert_allclose(f.dflux(xi), (f.flux(xi + h) - f.flux(xi - h)) / (2 * h),
                                   rtol=1e-5)

    @given(st.floats(1.05, 1.95), st.floats(0, 1e-2))
    def test_monotone(self, p, eps):
        f = prototype_flux(p, eps)
        xi = np.sort(np.random.default_rng(0).uniform(-5, 5, 200))
        assert np.all(np.diff(f.flux(xi)) >= 0)

    @pytest.mark.parametrize("p", [1.2, 1.5, 1.8])
    @pytest.mark.parametrize("n", [1, 3])
    def test_structure_constants(self, p, n):
        out = check_structure(prototype_flux(p, 1e-3), n)
        assert out["ok"], out

    def test_structure_constants_formulas(self):
        f = FluxModel(p=1.5, epsilon=1e-2, a_min=0.5, a_max=3.0)
        assert f.C1 == pytest.approx(0.5 * 2 ** -0.25)
        assert f.C2 == 3.0
        assert f.C(2) == pytest.approx(2 * 3.0 * 1e-2 ** 1.5)
        assert check_structure(f, 2)["ok"]

    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_rejects_p(self, p):
        with pytest.raises(SolverError):
            FluxModel(p=p)


class TestDiscreteOperators:
    def test_energy_of_coordinate_fields(self):
        g = unit_grid(9)
        assert energy(g.evaluate(lambda x, y: x + 0 * y), PAR) == pytest.approx(0.5)
        assert energy(g.evaluate(lambda x, y: y + 0 * x), PAR) == pytest.approx(1 / 1.5)

    @settings(max_examples=20)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([9, 17, 33]))
    def test_summation_by_parts(self, seed, n):
        rng = np.random.default_rng(seed)
        g = unit_grid(n)
        u = ScalarField(g, rng.uniform(-1, 1, g.dims))
        psi = np.zeros(g.dims)
        psi[1:-1, 1:-1] = rng.uniform(-1, 1, (n - 2, n - 2))
        psi = ScalarField(g, psi)
        defect = inner(residual(u, FLUX, PAR), psi) + weak_form(u, psi, FLUX, PAR)
        assert abs(defect) <= 1e-12 * np.sqrt(inner(psi, psi))

    def test_weak_form_is_energy_derivative(self):
        rng = np.random.default_rng(3)
        g = unit_grid(17)
        f = prototype_flux(1.5, 1e-2)
        u = ScalarField(g, rng.uniform(0, 1, g.dims))
        psi = bump(g, (0.5, 0.5), 0.3)
        t = 1e-5
        num = (energy(u.with_values(u.values + t * psi.values), PAR, flux=f)
               - energy(u.with_values(u.values - t * psi.values), PAR, flux=f)) / (2 * t)
        assert weak_form(u, psi, f, PAR) == pytest.approx(num, rel=1e-7)

    def test_residual_zero_on_boundary_and_affine(self):
        g = unit_grid(9)
        r = residual(g.evaluate(lambda x, y: 1 + 2 * x - 3 * y), FLUX, PAR)
        assert np.max(np.abs(r.values)) < 1e-12

    def test_bump_vanishes_on_boundary(self):
        g = unit_grid(17)
        b = bump(g, (0.1, 0.5), 0.3)
        assert np.all(b.values >= 0)
        assert np.all(b.values[g.boundary_mask()] == 0)


class TestSolve:
    @pytest.mark.parametrize("slope", [(0.5, 0.5), (-1.0, 2.0), (0.0, 1.0)])
    def test_affine_exact(self, slope):
        g = unit_grid(33)
        prof = lambda x, y: 1 + slope[0] * x + slope[1] * y  # noqa: E731
        u, rep = solve(g, profiles.boundary(g, prof), FLUX)
        assert rep.converged
        assert np.max(np.abs(u.values - g.evaluate(prof).values)) <= 1e-8

    def test_constant_exact(self):
        g = unit_grid(17)
        u, rep = solve(g, profiles.boundary(g, profiles.constant), FLUX)
        assert np.all(u.values == 1.0) and rep.residual == 0.0

    def test_three_dimensional(self):
        g = Grid.box((9, 9, 9), (0, 0, 0), (1, 1, 1), 1)
        u, rep = solve(g, profiles.boundary(g, profiles.random_positive(2, 3)), FLUX)
        assert rep.converged
        par = StructureParams(3, 1, 1.5)
        assert np.max(np.abs(residual(u, FLUX, par).values)) <= SolverConfig().tol_residual

    def test_energy_history_decreases(self, sine33):
        g = sine33.grid
        _, rep = solve(g, profiles.boundary(g, profiles.sine), FLUX)
        hist = np.array(rep.energy_history)
        assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]) + 1e-15)

    def test_gauss_seidel_agrees_with_newton(self):
        g = unit_grid(9)
        bc = profiles.boundary(g, profiles.random_positive(4))
        u1, r1 = solve(g, bc, FLUX)
        u2, r2 = solve(g, bc, FLUX, SolverConfig(method="gauss-seidel", max_sweeps=20000,
                                                 tol_residual=1e-6))
        assert r1.converged and r2.converged
        assert np.max(np.abs(u1.values - u2.values)) < 1e-5

    def test_nonconvergence_reported(self):
        g = unit_grid(17)
        _, rep = solve(g, profiles.boundary(g, profiles.sine), FLUX,
                       SolverConfig(max_sweeps=1, tol_residual=1e-14))
        assert not rep.converged

    def test_initial_guess_does_not_change_answer(self, sine33):
        g = sine33.grid
        rng = np.random.default_rng(0)
        u, rep = solve(g, profiles.boundary(g, profiles.sine), FLUX,
                       initial=rng.uniform(0, 2, g.dims))
        assert rep.converged
        assert np.max(np.abs(u.values - sine33.values)) < 1e-6

    def test_sine_pinned_value(self, sine33):
        # frozen from a 1e-9 tolerance run on 33^2
        assert sine33.value_at((0.5, 0.25)) == pytest.approx(1.0107047326984617, abs=1e-8)
        assert sine33.value_at((0.5, 0.5)) == pytest.approx(1.0, abs=1e-12)

    def test_epsilon_sweep_converges(self):
        g = unit_grid(17)
        bc = profiles.boundary(g, profiles.sine)
        sols = [solve(g, bc, prototype_flux(1.5, e))[0] for e in (1e-2, 1e-4, 1e-6, 1e-8)]
        diffs = [np.max(np.abs(a.values - sols[-1].values)) for a in sols[:-1]]
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] < 1e-4

    @pytest.mark.parametrize("seed", range(20))
    def test_maximum_and_comparison_principle(self, seed):
        g = unit_grid(17)
        rng = np.random.default_rng(seed)
        lo_prof = profiles.random_positive(1000 + seed)
        shift = profiles.random_positive(2000 + seed)
        w = rng.uniform(0.05, 0.5)
        bc1 = profiles.boundary(g, lo_prof)
        bc2 = profiles.boundary(g, lambda *x: lo_prof(*x) + w * shift(*x))
        u1, r1 = solve(g, bc1, FLUX)
        u2, r2 = solve(g, bc2, FLUX)
        assert r1.converged and r2.converged
        b1 = bc1.boundary_values()
        assert b1.min() - 1e-9 <= u1.values.min() and u1.values.max() <= b1.max() + 1e-9
        assert np.all(u1.values <= u2.values + 1e-9)

    def test_bad_boundary_grid(self):
        g, g2 = unit_grid(9), unit_grid(11)
        with pytest.raises(SolverError):
            solve(g, profiles.boundary(g2, profiles.sine), FLUX)


class TestManufactured:
    @pytest.mark.parametrize("eps", [1e-8, 1e-2])
    def test_forcing_matches_sympy(self, eps):
        sympy = pytest.importorskip("sympy")
        x, y = sympy.symbols("x y")
        p = sympy.Rational(3, 2)
        u = y + sympy.Rational(1, 10) * sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y)
        uy = sympy.diff(u, y)
        A = (eps ** 2 + uy ** 2) ** ((p - 2) / 2) * uy
        expr = sympy.diff(u, x, 2) + sympy.diff(A, y)
        f_exact = sympy.lambdify((x, y), expr, "numpy")
        pts = np.random.default_rng(0).uniform(0, 1, size=(50, 2))
        ours = profiles.manufactured_forcing(1.5, eps)(pts[:, 0], pts[:, 1])
        np.testing.assert_allclose(ours, f_exact(pts[:, 0], pts[:, 1]), rtol=1e-10, atol=1e-12)

    def test_second_order(self):
        errs = []
        for n in (9, 17, 33):
            g = unit_grid(n)
            bc = profiles.boundary(g, profiles.manufactured_solution)
            f = profiles.sample(g, profiles.manufactured_forcing(1.5, 1e-8))
            u, rep = solve_forced(g, bc, FLUX, f)
            assert rep.converged
            errs.append(np.max(np.abs(u.values - profiles.sample(g, profiles.manufactured_solution).values)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.5), orders


class TestNormalize:
    @pytest.mark.parametrize("center", [(0.5, 0.5), (0.4, 0.6), (0.55, 0.45)])
    @pytest.mark.parametrize("delta_bar", [0.5, 1.0])
    def test_transformed_residual(self, sine65, center, delta_bar):
        u = sine65
        uo = u.value_at(center)
        th = intrinsic_theta(uo, 0.2, 1.5, delta_bar)
        norm = normalize_transform(u, center, th, 0.2)
        assert norm.v.value_at((0.0, 0.0)) == pytest.approx(1.0, abs=1e-12)
        assert norm.laplace_coeff == pytest.approx(delta_bar ** -2)
        r = transformed_residual(norm, FLUX, PAR, center)
        assert np.max(np.abs(r.values)) <= 10 * SolverConfig().tol_residual

    def test_transformed_constant(self, sine65):
        norm = normalize_transform(sine65, (0.5, 0.5), 0.2, 0.2, C=2.0)
        assert norm.C_tilde == pytest.approx(2.0 * 0.2 / norm.u_center)
        assert norm.v.grid.dims == (33, 33)

    def test_containment(self, sine65):
        with pytest.raises(ContainmentError):
            normalize_transform(sine65, (0.1, 0.5), 0.2, 0.2)


class TestTruncation:
    def bumps(self, g, count=20, seed=0):
        rng = np.random.default_rng(seed)
        return [bump(g, rng.uniform(0.2, 0.8, 2), rng.uniform(0.1, 0.25, 2)) for _ in range(count)]

    @pytest.mark.parametrize("q", [0.1, 0.3, 0.5, 0.7, 0.9])
    @pytest.mark.parametrize("sign", [1, -1])
    def test_sub_and_super(self, sine33, q, sign):
        k = float(np.quantile(sine33.values, q))
        rep = check_truncation_subsolution(sine33, k, sign, self.bumps(sine33.grid), FLUX, PAR)
        assert rep.passed, rep

    def test_detects_non_solution(self):
        # -sin sin is a strict subsolution, so its lower truncation is no supersolution
        g = unit_grid(33)
        u = g.evaluate(lambda x, y: -np.sin(np.pi * x) * np.sin(np.pi * y))
        rep = check_truncation_subsolution(u, 0.0, -1, [bump(g, (0.5, 0.5), 0.3)], FLUX, PAR)
        assert not rep.passed

    def test_rejects_bad_test_functions(self, sine33):
        g = sine33.grid
        neg = bump(g, (0.5, 0.5), 0.2) * -1.0
        with pytest.raises(ValueError):
            check_truncation_subsolution(sine33, 1.0, 1, [neg], FLUX, PAR)
        edge = g.evaluate(lambda x, y: 1 + 0 * x)
        with pytest.raises(ValueError):
            check_truncation_subsolution(sine33, 1.0, 1, [edge], FLUX, PAR)
