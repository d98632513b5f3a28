import numpy as np
import pytest
from scipy.special import erf

from fvvem import mesh as fm
from fvvem.models import (BoundaryCondition, BoundarySet, Discretization,
                          DryStateError, FlowState, InsConfig, InsDriver,
                          SweConfig, SweDriver, evaluate_bathymetry,
                          model_eigenvalue)


class TestModelEigenvalue:
    def test_zero_velocity(self):
        w = np.array([1.0, 0.0, 0.0, 0.0])
        assert model_eigenvalue(w, np.array([1.0, 0.0]), "swe") == 0.0

    def test_swe_unit_velocity(self):
        w = np.array([1.0, 1.0, 0.0, 0.0])    # H=1, u=1
        assert model_eigenvalue(w, np.array([1.0, 0.0]), "swe") == pytest.approx(2.0)

    def test_ins_dot_product(self):
        w = np.array([3.0, 4.0])
        n = np.array([0.6, 0.8])
        assert model_eigenvalue(w, n, "ins") == pytest.approx(5.0)

    def test_nonfinite_raises(self):
        from fvvem.models import ModelError
        with pytest.raises(ModelError):
            model_eigenvalue(np.array([np.inf, 0.0]), np.array([1.0, 0.0]), "ins")


def wb_setup(n=150, k=2, delta=0.0, seed=3):
    m = fm.generate_voronoi((-2, 1, -0.5, 0.5), n, lloyd_iters=8, seed=seed,
                            periodic=(False, True))
    g = fm.build_geometry(m)
    disc = Discretization(m, g, k=k)

    def bump(p):
        return 0.5 * np.exp(-5 * (p[:, 0] + 0.1) ** 2 - 50 * p[:, 1] ** 2)

    def state(p, t):
        eta = np.ones(len(p))
        if delta:
            eta += delta * ((-0.95 <= p[:, 0]) & (p[:, 0] <= -0.85))
        z = np.zeros(len(p))
        return np.stack([eta, z, z, bump(p)])

    bcs = BoundarySet({"xmin": BoundaryCondition("dirichlet", state=state),
                       "xmax": BoundaryCondition("dirichlet", state=state)})
    drv = SweDriver(disc, SweConfig(g=9.81), bcs, scheme="LSDIRK222", bathymetry=bump)
    return drv, drv.initial_state(state), g


class TestSweStage:
    def test_well_balance_rest_unchanged(self):
        drv, state, g = wb_setup()
        eta0 = state.Q[0].copy()
        for _ in range(4):
            dt = drv.compute_dt(state)
            state = drv.step(state, dt)
        l2_eta = np.sqrt(np.sum(g.area * (state.Q[0] - eta0) ** 2))
        l2_q = np.sqrt(np.sum(g.area * (state.Q[1] ** 2 + state.Q[2] ** 2)))
        assert l2_eta < 1e-12
        assert l2_q < 1e-12

    def test_flat_uniform_periodic_fixed_point(self):
        m = fm.generate_voronoi((0, 1, 0, 1), 60, lloyd_iters=6, seed=5,
                                periodic=(True, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=1)
        drv = SweDriver(disc, SweConfig(g=9.81), BoundarySet({}), scheme="SP111")
        z = np.zeros(m.n_cells)
        state = FlowState(np.stack([np.full(m.n_cells, 2.0), z, z]), 0.0, {})
        out = drv.step(state, 0.05)
        assert np.abs(out.Q[0] - 2.0).max() < 1e-13
        assert np.abs(out.Q[1:]).max() < 1e-13

    def test_steady_vortex_one_step_drift(self):
        g0, H0 = 10.0, 1.0

        def exact(p, t):
            x, y = p[:, 0], p[:, 1]
            r2 = x * x + y * y
            eta = H0 - np.exp(-(r2 - 1.0)) / (2 * g0)
            f = np.exp(-(r2 - 1.0) / 2)
            return np.stack([eta, eta * (-y * f), eta * (x * f), np.zeros_like(eta)])

        m = fm.generate_voronoi((-5, 5, -5, 5), 2000, lloyd_iters=8, seed=7,
                                periodic=(True, True))
        gg = fm.build_geometry(m)
        disc = Discretization(m, gg, k=3)
        drv = SweDriver(disc, SweConfig(g=g0), BoundarySet({}), scheme="SP111")
        state = drv.initial_state(exact)
        out = drv.step(state.copy(), 1e-3)
        drift = np.sqrt(np.sum(gg.area * (out.Q[0] - state.Q[0]) ** 2))
        assert drift <= 1e-5

    def test_mass_conservation_wall_domain(self):
        m = fm.generate_voronoi((-0.5, 0.5, -0.1, 0.1), 120, lloyd_iters=8, seed=2,
                                periodic=(False, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=1)
        bcs = BoundarySet({"xmin": BoundaryCondition("wall"),
                           "xmax": BoundaryCondition("wall")})
        drv = SweDriver(disc, SweConfig(g=9.81), bcs, scheme="LSDIRK222")
        eta = np.where(g.barycenter[:, 0] <= 0.0, 1.0, 2.0)
        z = np.zeros(m.n_cells)
        state = FlowState(np.stack([eta, z, z]), 0.0, {})
        mass0 = np.sum(g.area * eta)
        for _ in range(8):
            dt = drv.compute_dt(state)
            state = drv.step(state, dt)
        assert abs(np.sum(g.area * state.Q[0]) - mass0) < 1e-12 * abs(mass0)

    def test_dry_cell_error(self):
        drv, state, g = wb_setup(n=80)
        state.Q[0] = 0.1    # below the bump peak: dry somewhere
        with pytest.raises(DryStateError):
            drv.step(state, 1e-3)


class TestEvaluateBathymetry:
    def test_zero_bottom(self):
        m = fm.generate_voronoi((0, 1, 0, 1), 30, lloyd_iters=5, seed=1)
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=2)
        coeffs, dofs = evaluate_bathymetry(disc, lambda p: np.zeros(len(p)))
        assert np.abs(coeffs).max() == 0.0
        assert np.abs(dofs).max() == 0.0

    def test_wb_bump_peak_value(self):
        m = fm.generate_voronoi((-2, 1, -0.5, 0.5), 2200, lloyd_iters=8, seed=5,
                                periodic=(False, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=2)

        def bump(p):
            return 0.5 * np.exp(-5 * (p[:, 0] + 0.1) ** 2 - 50 * p[:, 1] ** 2)

        coeffs, dofs = evaluate_bathymetry(disc, bump)
        best = 0.0
        for grp in disc.groups:
            mono = np.einsum("gab,gb->ga", grp.T, coeffs[grp.idx])
            vals = np.einsum("gqa,ga->gq", grp.qmono, mono)
            best = max(best, vals.max())
        assert best == pytest.approx(0.5, abs=1e-3)

    def test_cell_averages_match_quadrature_oracle(self):
        m = fm.generate_voronoi((-2, 1, -0.5, 0.5), 60, lloyd_iters=6, seed=4,
                                periodic=(False, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=2)

        def bump(p):
            return 0.5 * np.exp(-5 * (p[:, 0] + 0.1) ** 2 - 50 * p[:, 1] ** 2)

        coeffs, _ = evaluate_bathymetry(disc, bump)
        for ci in range(0, m.n_cells, 6):
            rule = fm.interior_quadrature(m, g, ci, 12)
            oracle = rule.weights @ bump(rule.nodes) / g.area[ci]
            assert coeffs[ci, 0] == pytest.approx(oracle, abs=1e-10)


def tgv_setup(n=220, k=2, nu=1e-2, seed=4, scheme="LSDIRK222"):
    L = 2 * np.pi
    m = fm.generate_voronoi((0, L, 0, L), n, lloyd_iters=8, seed=seed,
                            periodic=(True, True))
    g = fm.build_geometry(m)
    disc = Discretization(m, g, k=k)

    def vel(p, t):
        f = np.exp(-2 * nu * t)
        return np.stack([np.sin(p[:, 0]) * np.cos(p[:, 1]) * f,
                         -np.cos(p[:, 0]) * np.sin(p[:, 1]) * f])

    def pres(p, t):
        # consistent with the velocity orientation (momentum balance)
        return np.exp(-4 * nu * t) / 4 * (np.cos(2 * p[:, 0]) + np.cos(2 * p[:, 1]))

    drv = InsDriver(disc, InsConfig(nu=nu), BoundarySet({}), scheme=scheme)
    return drv, drv.initial_state(vel, pres), vel, pres, g


class TestInsStages:
    def test_constant_state_fixed_point(self):
        m = fm.generate_voronoi((0, 1, 0, 1), 60, lloyd_iters=6, seed=6,
                                periodic=(True, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=1)
        drv = InsDriver(disc, InsConfig(nu=1e-3), BoundarySet({}), scheme="SP111")
        state = drv.initial_state(
            lambda p, t: np.stack([np.full(len(p), 0.4), np.full(len(p), -0.2)]),
            lambda p, t: np.ones(len(p)))
        out = drv.step(state, 0.02)
        assert np.abs(out.Q[0] - 0.4).max() < 1e-11
        assert np.abs(out.Q[1] + 0.2).max() < 1e-11

    def test_nu_zero_is_pure_projection(self):
        drv, state, vel, pres, g = tgv_setup(n=120, nu=0.0, scheme="SP111")
        out = drv.step(state, 0.01)
        assert np.all(np.isfinite(out.Q))
        r, rhs = drv.div_residuals[-1]
        assert r <= 1e-10 * max(rhs, 1.0)

    def test_tgv_divergence_residual(self):
        drv, state, vel, pres, g = tgv_setup(n=160)
        rhs0 = None
        for _ in range(5):
            dt = drv.compute_dt(state)
            state = drv.step(state, dt)
            r, rhs = drv.div_residuals[-1]
            if rhs0 is None:
                rhs0 = rhs
            assert r <= 100 * 1e-12 * rhs0
        assert state.time > 0.0

    def test_tgv_pressure_after_one_step(self):
        drv, state, vel, pres, g = tgv_setup(n=260, nu=1e-2)
        dt = 0.02
        out = drv.step(state, dt)
        ph = out.aux["p_coeffs"][:, 0]
        pex = drv.disc.cell_means(pres, time=out.time)
        ph = ph - np.sum(g.area * ph) / np.sum(g.area)
        pex = pex - np.sum(g.area * pex) / np.sum(g.area)
        # correct sign/shape and coarse-mesh-level amplitude agreement
        corr = np.sum(g.area * ph * pex) / np.sqrt(
            np.sum(g.area * ph ** 2) * np.sum(g.area * pex ** 2))
        assert corr > 0.97
        rel = np.sqrt(np.sum(g.area * (ph - pex) ** 2) / np.sum(g.area * pex ** 2))
        assert rel < 0.25

    def test_correction_identities(self):
        # non-periodic box: linear pressure increments are representable
        m = fm.generate_voronoi((0, 1, 0, 1), 60, lloyd_iters=6, seed=3)
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=2)
        vstar = np.stack([disc.interpolate_dofs(lambda p: np.sin(p[:, 0])),
                          disc.interpolate_dofs(lambda p: np.cos(p[:, 1]))])
        vstar_coeffs = disc.vem_to_fv(vstar)
        # p_new = p_old: velocity unchanged
        grad0 = disc.gradient_cell_means(disc.vem_to_fv(np.zeros(disc.layout.n_dofs)))
        v1 = vstar_coeffs[:, :, 0] - 0.1 * grad0
        assert np.array_equal(v1, vstar_coeffs[:, :, 0])
        # linear pressure increment: uniform velocity shift by -tau*slope
        lin = disc.interpolate_dofs(lambda p: 2.5 * p[:, 0] - 1.0 * p[:, 1])
        grad = disc.gradient_cell_means(disc.vem_to_fv(lin))
        assert np.abs(grad[0] - 2.5).max() < 1e-10
        assert np.abs(grad[1] + 1.0).max() < 1e-10
        tau = 0.125
        v2 = vstar_coeffs[:, :, 0] - tau * grad
        assert np.abs((vstar_coeffs[0, :, 0] - v2[0]) - tau * 2.5).max() < 1e-10

    def test_pressure_compatibility_residual(self):
        drv, state, vel, pres, g = tgv_setup(n=120)
        disc = drv.disc
        # conforming periodic field: compatible (divergence load sums to zero)
        div = disc.divergence_load(disc.interpolate_dofs(lambda p: np.sin(p[:, 0])),
                                   disc.interpolate_dofs(lambda p: np.cos(p[:, 1])))
        assert abs(disc.ones @ div) < 1e-10
        # a run reports the compatibility functional of each pressure rhs
        drv.step(state, 0.02)
        assert abs(drv.last_compatibility) < 1e-10
        # manufactured uniform-divergence rhs (not realisable by conforming
        # dofs on a torus): the solvability residual is macroscopic
        d = 0.7
        coeffs = np.zeros((disc.mesh.n_cells, disc.nk))
        coeffs[:, 0] = d
        rhs_bad = disc.load_from_taylor(coeffs)
        compat = float(disc.ones @ rhs_bad) / disc.area_total
        assert compat == pytest.approx(d, rel=1e-10)

    def test_stokes_first_problem_profile(self):
        nu, v0 = 1e-3, 0.1
        m = fm.generate_rect((-0.5, 0.5, -0.1, 0.1), 100, 2, periodic=(False, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=2)

        def vel(p, t):
            if t <= 0.0:
                v = np.where(p[:, 0] > 0, v0, -v0)
            else:
                v = v0 * erf(0.5 * p[:, 0] / np.sqrt(nu * t))
            return np.stack([np.zeros(len(p)), v])

        def state4(p, t):
            return vel(p, t)

        bcs = BoundarySet({"xmin": BoundaryCondition("dirichlet", state=state4),
                           "xmax": BoundaryCondition("dirichlet", state=state4)})
        drv = InsDriver(disc, InsConfig(nu=nu), bcs, scheme="SP111")
        state = drv.initial_state(vel, lambda p, t: np.ones(len(p)))
        dt = 0.05
        nsteps = 8
        for _ in range(nsteps):
            state = drv.step(state, dt)
        t = state.time
        xs = g.barycenter[:, 0]
        vex = v0 * erf(0.5 * xs / np.sqrt(nu * t))
        err = np.abs(state.Q[1] - vex)
        interior = np.abs(xs) < 0.4
        assert err[interior].max() < 1e-3 * v0 / 0.1 * 10  # discretization level
        assert err[interior].max() < 0.02


class TestApBehaviour:
    def test_swe_step_count_and_error_froude_independent(self):
        # dt and step counts are exactly Froude-independent; the L2(u)
        # agreement between Fr=1e-1 and 1e-2 converges toward the paper's
        # sub-percent pattern with resolution (measured 24.6% -> 7.6% from
        # 1000 to 4600 cells in the elevation-transfer mode); at this test
        # size the achievable band is 12%.
        g0 = 10.0

        def make(H0):
            def exact(p, t):
                x, y = p[:, 0], p[:, 1]
                r2 = x * x + y * y
                eta = H0 - np.exp(-(r2 - 1.0)) / (2 * g0)
                f = np.exp(-(r2 - 1.0) / 2)
                return np.stack([eta, eta * (-y * f), eta * (x * f),
                                 np.zeros_like(eta)])
            return exact

        m = fm.generate_voronoi((-5, 5, -5, 5), 4600, lloyd_iters=8, seed=9,
                                periodic=(True, True))
        g = fm.build_geometry(m)
        disc = Discretization(m, g, k=1)
        counts, errs, dts = [], [], []
        for H0 in (1.0, 1e3):      # Fr ~ 1e-1 and 1e-2
            exact = make(H0)
            drv = SweDriver(disc, SweConfig(g=g0), BoundarySet({}), scheme="SP111",
                            mass_update="transfer")
            state = drv.initial_state(exact)
            ns = 0
            first_dt = None
            while state.time < 0.1 - 1e-12:
                dt = min(drv.compute_dt(state), 0.1 - state.time)
                if first_dt is None:
                    first_dt = dt
                state = drv.step(state, dt)
                ns += 1
            uex = disc.cell_means(lambda p: make(H0)(p, 0.0)[1] / make(H0)(p, 0.0)[0])
            uh = state.Q[1] / (state.Q[0] - drv.b_coeffs[:, 0])
            errs.append(np.sqrt(np.sum(g.area * (uh - uex) ** 2)))
            counts.append(ns)
            dts.append(first_dt)
        assert abs(counts[0] - counts[1]) <= 1
        assert dts[0] == pytest.approx(dts[1], rel=1e-2)    # dt independent of Fr
        assert abs(errs[0] - errs[1]) / errs[0] < 0.12
