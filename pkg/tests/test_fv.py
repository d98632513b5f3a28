import numpy as np
import pytest

from fvvem import fv as fvmod
from fvvem import mesh as fm
from fvvem.models import InsModel, SweModel


def voronoi_ops(k, n=80, seed=3, periodic=(True, True), box=(0, 1, 0, 1)):
    m = fm.generate_voronoi(box, n, lloyd_iters=8, seed=seed, periodic=periodic)
    g = fm.build_geometry(m)
    return fvmod.FvOperators(m, g, fvmod.CwenoConfig(k=k)), m, g


class TestTaylorBasis:
    def test_beta1_integrates_to_area(self):
        ops, m, g = voronoi_ops(2, n=30, periodic=(False, False))
        tb = ops.taylor
        for ci in range(m.n_cells):
            rule = fm.interior_quadrature(m, g, ci, 4)
            vals = tb.values(ci, rule.nodes)
            assert rule.weights @ vals[:, 0] == pytest.approx(g.area[ci], rel=1e-13)

    def test_odd_correction_zero_on_symmetric_cell(self):
        pts = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        m = fm.PolyMesh(pts, [np.arange(4)],
                        boundary_tags={e: "o" for e in range(4)})
        g = fm.build_geometry(m)
        tb = fvmod.TaylorBasis(m, g, 2)
        # centered square: first-order monomials have zero mean
        assert abs(tb.corrections[0, 1]) < 1e-15
        assert abs(tb.corrections[0, 2]) < 1e-15

    def test_corrections_match_quadrature_oracle(self):
        ops, m, g = voronoi_ops(3, n=20, periodic=(False, False))
        tb = ops.taylor
        for ci in range(m.n_cells):
            rule = fm.interior_quadrature(m, g, ci, 8)
            basis = tb.cell_basis(ci)
            means = rule.weights @ basis.values(rule.nodes) / g.area[ci]
            assert np.abs(tb.corrections[ci, 1:] - means[1:]).max() < 1e-13

    def test_zero_mean_property(self):
        ops, m, g = voronoi_ops(2, n=25, periodic=(False, False))
        tb = ops.taylor
        for ci in range(0, m.n_cells, 5):
            rule = fm.interior_quadrature(m, g, ci, 6)
            vals = tb.values(ci, rule.nodes)
            ints = rule.weights @ vals
            assert np.abs(ints[1:]).max() < 1e-13 * g.area[ci]


class TestCweno:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_linear_reproduction(self, k):
        ops, m, g = voronoi_ops(k, n=60, periodic=(False, False))
        lin = lambda p: 2.0 + 3.0 * p[:, 0] - 1.5 * p[:, 1]
        Q = ops.cell_means_of_field(lin, 2)
        coeffs = ops.reconstruct(Q)
        for ci in range(0, m.n_cells, 7):
            pts = m.cell_coords[ci]
            vals = ops.evaluate(coeffs, ci, pts)[0]
            assert np.abs(vals - lin(pts)).max() < 1e-12

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_polynomial_reproduction_invariant(self, k):
        # globally degree-k data reconstructed exactly (1e-11)
        ops, m, g = voronoi_ops(k, n=70, seed=11, periodic=(False, False))
        rng = np.random.default_rng(k)
        cs = rng.standard_normal((k + 1) * (k + 2) // 2)

        def poly(p):
            out = np.zeros(len(p))
            i = 0
            for d in range(k + 1):
                for a in range(d, -1, -1):
                    out += cs[i] * p[:, 0] ** a * p[:, 1] ** (d - a)
                    i += 1
            return out

        Q = ops.cell_means_of_field(poly, 2 * k + 2)
        coeffs = ops.reconstruct(Q)
        worst = 0.0
        for ci in range(m.n_cells):
            pts = np.vstack([m.cell_coords[ci], g.barycenter[ci][None]])
            vals = ops.evaluate(coeffs, ci, pts)[0]
            worst = max(worst, np.abs(vals - poly(pts)).max())
        assert worst < 1e-11 * max(1.0, np.abs(cs).max())

    def test_cell_average_preserved(self):
        ops, m, g = voronoi_ops(2, n=60, seed=5)
        rng = np.random.default_rng(0)
        Q = rng.standard_normal(m.n_cells)
        coeffs = ops.reconstruct(Q)
        assert np.abs(coeffs[0, :, 0] - Q).max() < 1e-13
        # first Taylor coefficient IS the cell average by basis construction
        for ci in range(0, m.n_cells, 9):
            rule = fm.interior_quadrature(m, g, ci, 6)
            vals = ops.evaluate(coeffs, ci, rule.nodes)[0]
            assert rule.weights @ vals / g.area[ci] == pytest.approx(Q[ci], abs=1e-13)

    def test_step_data_stays_in_stencil_bounds(self):
        # dam-break style initial data: edge-extrapolated values bounded by
        # the stencil averages (no spurious overshoot)
        ops, m, g = voronoi_ops(2, n=120, seed=8, periodic=(False, True),
                                box=(-0.5, 0.5, -0.05, 0.05))
        Q = np.where(g.barycenter[:, 0] <= 0.0, 1.0, 2.0)
        coeffs = ops.reconstruct(Q)
        wL, wR = ops.edge_states(coeffs)
        lo, hi = Q.min() - 1e-10, Q.max() + 1e-10
        assert wL.min() >= lo and wL.max() <= hi
        assert wR.min() >= lo and wR.max() <= hi

    def test_too_small_mesh_raises(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        m = fm.PolyMesh(pts, [np.arange(4)], boundary_tags={e: "o" for e in range(4)})
        g = fm.build_geometry(m)
        with pytest.raises(fvmod.FvError):
            fvmod.FvOperators(m, g, fvmod.CwenoConfig(k=2))


class TestRusanov:
    def test_consistency(self):
        model = SweModel(g=9.81)
        rng = np.random.default_rng(1)
        for _ in range(200):
            eta = rng.uniform(0.5, 2.0)
            w = np.array([eta, rng.normal(), rng.normal(), 0.0])
            ang = rng.uniform(0, 2 * np.pi)
            n = np.array([np.cos(ang), np.sin(ang)])
            F = fvmod.rusanov_flux(w, w, n, model)
            assert np.allclose(F, model.explicit_flux_normal(w, n), atol=1e-14)

    def test_swe_rest_state_zero_flux(self):
        model = SweModel(g=9.81)
        wL = np.array([1.0, 0.0, 0.0, 0.2])
        wR = np.array([1.0, 0.0, 0.0, 0.1])
        F = fvmod.rusanov_flux(wL, wR, np.array([1.0, 0.0]), model)
        assert np.array_equal(F, np.zeros(2))

    def test_ins_hand_computed(self):
        model = InsModel(nu=0.0)
        wL = np.array([1.0, 0.0])
        wR = np.array([0.0, 0.0])
        F = fvmod.rusanov_flux(wL, wR, np.array([1.0, 0.0]), model)
        assert F[0] == pytest.approx(1.0, abs=1e-15)

    def test_nonfinite_state_raises(self):
        model = InsModel(nu=0.0)
        with pytest.raises(fvmod.FvError):
            fvmod.rusanov_flux(np.array([np.nan, 0.0]), np.array([0.0, 0.0]),
                               np.array([1.0, 0.0]), model)


class TestExplicitOperator:
    def test_uniform_state_fixed_point(self):
        ops, m, g = voronoi_ops(2, n=50, seed=2)
        model = InsModel(nu=0.0)
        Q = np.tile(np.array([[0.3], [-0.7]]), (1, m.n_cells))
        coeffs = ops.reconstruct(Q)
        F = fvmod.explicit_operator(ops, model, coeffs, Q, 0.1, 0.0, None)
        assert np.abs(F - Q).max() < 1e-13

    def test_swe_rest_over_bump_zero_update(self):
        ops, m, g = voronoi_ops(2, n=50, seed=4)
        model = SweModel(g=9.81)
        b = ops.cell_means_of_field(
            lambda p: 0.3 * np.exp(-10 * ((p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2)), 6)
        eta = np.ones(m.n_cells)
        Q = np.stack([eta, np.zeros_like(eta), np.zeros_like(eta)])
        bco = np.zeros((m.n_cells, ops.nk))
        bco[:, 0] = b
        full = np.concatenate([ops.reconstruct(Q), bco[None]], axis=0)
        F = fvmod.explicit_operator(ops, model, full, Q, 0.05, 0.0, None)
        assert np.abs(F).max() < 1e-14

    @pytest.mark.parametrize("k", [1, 2])
    def test_conservation_periodic(self, k):
        ops, m, g = voronoi_ops(k, n=60, seed=6)
        model = InsModel(nu=0.0)
        rng = np.random.default_rng(3)
        Q = 0.5 + 0.1 * rng.standard_normal((2, m.n_cells))
        coeffs = ops.reconstruct(Q)
        F = fvmod.explicit_operator(ops, model, coeffs, Q, 0.01, 0.0, None)
        before = (g.area * Q).sum(axis=1)
        after = (g.area * F).sum(axis=1)
        assert np.abs(after - before).max() < 1e-12 * np.abs(before).max()

    def test_flux_antisymmetry_by_construction(self):
        # interior fluxes are evaluated once; the two cells see exactly
        # opposite contributions, so a zero-dt update sums signs to zero
        ops, m, g = voronoi_ops(1, n=40, seed=9)
        model = InsModel(nu=0.0)
        rng = np.random.default_rng(5)
        Q = rng.standard_normal((2, m.n_cells))
        coeffs = ops.reconstruct(Q)
        F1 = fvmod.explicit_operator(ops, model, coeffs, Q, 0.5, 0.0, None)
        total = (g.area * (F1 - Q)).sum(axis=1)
        assert np.abs(total).max() < 1e-12
