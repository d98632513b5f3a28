"""Explicit finite-volume machinery on polygonal meshes.

Cell-average storage, conservative Taylor modal basis, CWENO reconstruction,
Rusanov fluxes and the explicit convective operator.  Everything that depends
only on the mesh is precomputed once in FvOperators and reused across stages;
per-stage work is batched numpy over cells and edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .mesh import GeometryCache, PolyMesh, polygon_quadrature
from .vem import MonomialBasis, multi_indices, n_poly


class FvError(Exception):
    """Reconstruction failure or inadmissible state."""


@dataclass
class FvField:
    """Per-cell conserved averages: component rows, cell columns."""

    Q: np.ndarray           # (ncomp, ncell)
    time: float = 0.0
    names: tuple = ()

    def copy(self) -> "FvField":
        return FvField(self.Q.copy(), self.time, self.names)


@dataclass
class CwenoConfig:
    """CWENO parameters; the defaults are the shipped scheme constants."""

    k: int = 2
    growth: float = 1.5          # central stencil target = max(growth*nk, nk+2)
    lambda_central: float = 1e5
    lambda_sector: float = 1.0
    eps: float = 1e-14
    power: int = 4


class TaylorBasis:
    """Conservative Taylor basis: scaled monomials minus their cell means.

    beta_1 = 1; for l >= 2, beta_l = m_l - mean(m_l), so the cell average of
    any expansion equals its first coefficient.
    """

    def __init__(self, mesh: PolyMesh, geom: GeometryCache, k: int):
        self.k = k
        self.nk = n_poly(k)
        self.mesh = mesh
        self.geom = geom
        nc = mesh.n_cells
        self.corrections = np.zeros((nc, self.nk))
        self._bases = []
        for ci in range(nc):
            basis = MonomialBasis(k, geom.barycenter[ci], geom.h[ci])
            self._bases.append(basis)
            rule = polygon_quadrature(mesh.cell_coords[ci], geom.barycenter[ci],
                                      max(2 * k, 2))
            means = (rule.weights @ basis.values(rule.nodes)) / geom.area[ci]
            self.corrections[ci, 1:] = means[1:]

    def cell_basis(self, ci: int) -> MonomialBasis:
        return self._bases[ci]

    def values(self, ci: int, pts: np.ndarray, shift=None) -> np.ndarray:
        """(npts, nk) Taylor basis values; `shift` maps pts into ci's frame."""
        pts = np.atleast_2d(pts)
        if shift is not None:
            pts = pts + shift
        return self._bases[ci].values(pts) - self.corrections[ci]


def taylor_basis(mesh: PolyMesh, geom: GeometryCache, k: int) -> TaylorBasis:
    return TaylorBasis(mesh, geom, k)


def rusanov_flux(wL, wR, n, model):
    """Rusanov flux for the model's explicit subsystem.

    F = (F_E(wL) + F_E(wR)) . n / 2 - |s_max| (wR - wL) / 2, with s_max the
    largest convective eigenvalue over the two states and the dissipation
    applied to the explicitly convected components only.
    """
    wL = np.asarray(wL, dtype=float)
    wR = np.asarray(wR, dtype=float)
    if not (np.all(np.isfinite(wL)) and np.all(np.isfinite(wR))):
        raise FvError("non-finite state in flux evaluation")
    FL = model.explicit_flux_normal(wL, n)
    FR = model.explicit_flux_normal(wR, n)
    smax = np.maximum(model.max_eig(wL, n), model.max_eig(wR, n))
    jump = model.explicit_components(wR) - model.explicit_components(wL)
    return 0.5 * (FL + FR) - 0.5 * smax * jump


# ---------------------------------------------------------------------------
# precomputed mesh operators
# ---------------------------------------------------------------------------

@dataclass
class _StencilGroup:
    cells: np.ndarray        # (ng,) cell ids
    members: np.ndarray      # (ng, nst) stencil member cell ids
    pinv: np.ndarray         # (ng, nk-1, nst)
    res_q: np.ndarray        # (ng, nst, nst) residual factor (A P - I)
    pinv1: np.ndarray = None  # unused for central


@dataclass
class _SectorGroup:
    cells: np.ndarray        # (np,) owner cell of each sector
    members: np.ndarray      # (np, ns)
    pinv: np.ndarray         # (np, 2, ns)
    res_q: np.ndarray        # (np, ns, ns)


def _pad_group(entries, nrow, cls):
    """Stack (cell, members, pinv, res_q) tuples zero-padded to a common
    stencil width; padded members repeat the first member (zero weights)."""
    width = max(len(e[1]) for e in entries)
    n = len(entries)
    cells = np.array([e[0] for e in entries])
    members = np.empty((n, width), dtype=np.int64)
    pinv = np.zeros((n, nrow, width))
    res_q = np.zeros((n, width, width))
    for i, (_, mem, P, RQ) in enumerate(entries):
        m = len(mem)
        members[i, :m] = mem
        members[i, m:] = mem[0]
        pinv[i, :, :m] = P
        res_q[i, :m, :m] = RQ
    return cls(cells, members, pinv, res_q)


class FvOperators:
    """Per-mesh tables: stencil fits, edge basis values and flux scatter maps."""

    def __init__(self, mesh: PolyMesh, geom: GeometryCache, cfg: CwenoConfig):
        self.mesh = mesh
        self.geom = geom
        self.cfg = cfg
        self.k = cfg.k
        self.nk = n_poly(cfg.k)
        self.taylor = TaylorBasis(mesh, geom, cfg.k)
        self._adjacency()
        self._edge_tables()
        if self.k >= 1:
            self._central_stencils()
            self._sector_stencils()

    # -- connectivity -------------------------------------------------------

    def _adjacency(self):
        mesh = self.mesh
        self.neighbors = [[] for _ in range(mesh.n_cells)]   # (cell, shift) pairs
        for e in range(mesh.n_edges):
            L, R = mesh.edge_cells[e]
            if R < 0:
                continue
            s = mesh.edge_shift[e]
            self.neighbors[L].append((int(R), s.copy()))
            self.neighbors[R].append((int(L), -s))
        vert_cells = {}
        for ci, loop in enumerate(self.mesh.cells):
            for a, v in enumerate(loop):
                vert_cells.setdefault(int(v), []).append(
                    (ci, self.mesh.cell_coords[ci][a]))
        self._vert_cells = vert_cells

    # -- edge quadrature and basis tables ------------------------------------

    def _edge_tables(self):
        mesh, geom, k = self.mesh, self.geom, self.k
        ng = k + 1
        t, w = roots_legendre(ng)
        va = mesh.edge_coords[:, 0, :]
        vb = mesh.edge_coords[:, 1, :]
        pts = va[:, None, :] + 0.5 * (t[None, :, None] + 1.0) * (vb - va)[:, None, :]
        self.edge_points = pts                                    # (NE, ng, 2)
        self.edge_weights = 0.5 * geom.edge_length[:, None] * w[None, :]
        self.interior = np.where(mesh.edge_cells[:, 1] >= 0)[0]
        self.boundary = np.where(mesh.edge_cells[:, 1] < 0)[0]
        ne = mesh.n_edges
        self.basis_L = np.zeros((ne, ng, self.nk))
        self.basis_R = np.zeros((ne, ng, self.nk))
        for e in range(ne):
            L, R = mesh.edge_cells[e]
            self.basis_L[e] = self.taylor.values(L, pts[e])
            if R >= 0:
                self.basis_R[e] = self.taylor.values(R, pts[e], shift=mesh.edge_shift[e])
        self.by_tag = {}
        for e in self.boundary:
            self.by_tag.setdefault(mesh.boundary_tags[int(e)], []).append(int(e))
        self.by_tag = {tag: np.array(es, dtype=np.int64)
                       for tag, es in sorted(self.by_tag.items())}
        import scipy.sparse as sp
        L = mesh.edge_cells[:, 0]
        R = mesh.edge_cells[:, 1]
        rows = np.concatenate([L, R[self.interior]])
        cols = np.concatenate([np.arange(ne), self.interior])
        sgn = np.concatenate([np.ones(ne), -np.ones(len(self.interior))])
        self._edge_incidence = sp.coo_matrix((sgn, (rows, cols)),
                                             shape=(mesh.n_cells, ne)).tocsr()

    # -- central stencils -----------------------------------------------------

    def _grow_stencil(self, ci: int, target: int):
        """Breadth-first (cell, shift) stencil around ci, whole layers."""
        seen = {(ci, (0.0, 0.0))}
        out = []
        frontier = [(ci, np.zeros(2))]
        while len(out) + 1 < target and frontier:
            nxt = []
            for c, s in frontier:
                for nb, ds in self.neighbors[c]:
                    key = (nb, (round(float(s[0] + ds[0]), 9), round(float(s[1] + ds[1]), 9)))
                    if key in seen:
                        continue
                    seen.add(key)
                    nxt.append((nb, s + ds))
            nxt.sort(key=lambda p: (p[0], p[1][0], p[1][1]))
            out.extend(nxt)
            frontier = nxt
        return out

    def _fit_rows(self, ci: int, members) -> np.ndarray:
        """LSQ rows: mean of cell ci's Taylor basis (l >= 2) over each member."""
        rows = np.empty((len(members), self.nk - 1))
        for r, (cj, s) in enumerate(members):
            rule = self._member_rule(cj)
            vals = self.taylor.values(ci, rule.nodes, shift=-s)
            rows[r] = (rule.weights @ vals[:, 1:]) / self.geom.area[cj]
        return rows

    def _member_rule(self, cj: int):
        if not hasattr(self, "_rules"):
            self._rules = {}
        if cj not in self._rules:
            self._rules[cj] = polygon_quadrature(self.mesh.cell_coords[cj],
                                                 self.geom.barycenter[cj],
                                                 max(self.k, 1))
        return self._rules[cj]

    def _central_stencils(self):
        target = max(int(np.ceil(self.cfg.growth * self.nk)), self.nk + 2)
        entries = []
        self.central_members = []
        for ci in range(self.mesh.n_cells):
            members = self._grow_stencil(ci, target)
            if len(members) < self.nk - 1:
                raise FvError(f"cell {ci}: stencil of {len(members)} cells cannot "
                              f"determine a degree-{self.k} polynomial")
            A = self._fit_rows(ci, members)
            P = np.linalg.pinv(A, rcond=1e-10)
            Mres = A @ P - np.eye(len(members))
            entries.append((ci, np.array([m[0] for m in members]), P, Mres))
            self.central_members.append(members)
        # zero-pad all stencils to a common width: one batched group keeps the
        # per-call numpy dispatch overhead flat
        self.central_groups = [_pad_group(entries, self.nk - 1, _StencilGroup)]

    def _finalize_scatter(self):
        """Sparse owner-cell scatter for all sector pairs (fast reductions)."""
        import scipy.sparse as sp
        cells = np.concatenate([grp.cells for grp in self.sector_groups]) \
            if self.sector_groups else np.zeros(0, dtype=np.int64)
        self._pair_cells = cells
        npairs = len(cells)
        self._pair_slices = []
        start = 0
        for grp in self.sector_groups:
            self._pair_slices.append(slice(start, start + len(grp.cells)))
            start += len(grp.cells)
        self._scatter = sp.coo_matrix(
            (np.ones(npairs), (cells, np.arange(npairs))),
            shape=(self.mesh.n_cells, max(npairs, 1))).tocsr()

    def _sector_stencils(self):
        per_size = {}
        n_sectors = np.zeros(self.mesh.n_cells, dtype=np.int64)
        # entries are grouped by stencil size first, then padded into one batch
        for ci in range(self.mesh.n_cells):
            loop = set(int(v) for v in self.mesh.cells[ci])
            for nb, s in sorted(self.neighbors[ci], key=lambda p: (p[0], p[1][0], p[1][1])):
                members = [(nb, s)]
                wedge = set(int(v) for v in self.mesh.cells[nb])
                for v in sorted(loop):
                    for cj, _pt in self._vert_cells.get(v, ()):
                        if cj == ci or cj == nb:
                            continue
                        if v in wedge:
                            cand = self._shift_of(ci, cj, v)
                            if cand is not None and not any(
                                    m[0] == cj and np.allclose(m[1], cand) for m in members):
                                members.append((cj, cand))
                if len(members) < 2:
                    for nb2, s2 in sorted(self.neighbors[nb], key=lambda p: p[0]):
                        if nb2 != ci and not any(m[0] == nb2 for m in members):
                            members.append((nb2, s + s2))
                        if len(members) >= 2:
                            break
                A = self._fit_rows_linear(ci, members)
                P = np.linalg.pinv(A, rcond=1e-10)
                Mres = A @ P - np.eye(len(members))
                per_size.setdefault(len(members), []).append(
                    (ci, np.array([m[0] for m in members]), P, Mres))
                n_sectors[ci] += 1
        self.n_sectors = n_sectors
        entries = [e for _, group in sorted(per_size.items()) for e in group]
        self.sector_groups = [_pad_group(entries, 2, _SectorGroup)] if entries else []
        self._finalize_scatter()

    def _fit_rows_linear(self, ci: int, members) -> np.ndarray:
        rows = np.empty((len(members), 2))
        for r, (cj, s) in enumerate(members):
            rule = self._member_rule(cj)
            vals = self.taylor.values(ci, rule.nodes, shift=-s)
            rows[r] = (rule.weights @ vals[:, 1:3]) / self.geom.area[cj]
        return rows

    def _shift_of(self, ci: int, cj: int, shared_vertex: int):
        """Frame shift s of cj relative to ci (x_in_cj = x_in_ci + s)."""
        pi = pj = None
        for c, pt in self._vert_cells.get(shared_vertex, ()):
            if c == ci and pi is None:
                pi = pt
            if c == cj and pj is None:
                pj = pt
        if pi is None or pj is None:
            return None
        return pj - pi

    # -- reconstruction -------------------------------------------------------

    def reconstruct(self, Qbar: np.ndarray) -> np.ndarray:
        """CWENO modal coefficients (ncomp, ncell, nk) from cell averages.

        Exact on globally polynomial data of degree <= k; conservative by
        construction (first coefficient equals the cell average).
        """
        Qbar = np.atleast_2d(Qbar)
        ncomp, nc = Qbar.shape
        cfg = self.cfg
        if self.k == 0:
            coeffs = np.zeros((ncomp, nc, 1))
            coeffs[:, :, 0] = Qbar
            return coeffs
        nk = self.nk
        p_opt = np.zeros((ncomp, nc, nk))
        p_opt[:, :, 0] = Qbar
        rho0 = np.zeros((ncomp, nc))
        for grp in self.central_groups:
            d = Qbar[:, grp.members] - Qbar[:, grp.cells][:, :, None]   # (ncomp, ng, nst)
            dT = d.transpose(1, 2, 0)                                   # (ng, nst, ncomp)
            p_opt[:, grp.cells, 1:] = (grp.pinv @ dT).transpose(2, 0, 1)
            r = grp.res_q @ dT
            rho0[:, grp.cells] = (r * r).sum(axis=1).T
        lam0 = cfg.lambda_central
        alpha0 = lam0 / (cfg.eps + rho0) ** cfg.power                    # (ncomp, nc)
        npairs = len(self._pair_cells)
        alpha_flat = np.empty((ncomp, npairs))
        slope_flat = np.empty((ncomp, npairs, 2))
        for grp, sl in zip(self.sector_groups, self._pair_slices):
            d = Qbar[:, grp.members] - Qbar[:, grp.cells][:, :, None]
            dT = d.transpose(1, 2, 0)
            slopes = (grp.pinv @ dT).transpose(2, 0, 1)                  # (ncomp, np, 2)
            r = grp.res_q @ dT
            rho = (r * r).sum(axis=1).T
            sigma = slopes[..., 0] ** 2 + slopes[..., 1] ** 2 + rho
            alpha_flat[:, sl] = cfg.lambda_sector / (cfg.eps + sigma) ** cfg.power
            slope_flat[:, sl] = slopes
        denom = alpha0 + (self._scatter @ alpha_flat.T).T
        coeffs = p_opt * (alpha0 / denom)[:, :, None]
        if npairs:
            w = alpha_flat / denom[:, self._pair_cells]
            contrib = np.zeros((ncomp, npairs, 3))
            contrib[:, :, 0] = Qbar[:, self._pair_cells]
            contrib[:, :, 1:] = slope_flat
            contrib *= w[:, :, None]
            summed = self._scatter @ contrib.transpose(1, 0, 2).reshape(npairs, -1)
            coeffs[:, :, :3] += summed.reshape(nc, ncomp, 3).transpose(1, 0, 2)
        return coeffs

    def evaluate(self, coeffs: np.ndarray, ci: int, pts: np.ndarray) -> np.ndarray:
        """Evaluate reconstruction polynomials of one cell at points."""
        vals = self.taylor.values(ci, pts)
        return np.einsum("cl,pl->cp", coeffs[:, ci, :], vals)

    def edge_states(self, coeffs: np.ndarray):
        """wL, wR (ncomp, NE, ng) at the edge Gauss points; wR on boundary
        edges is filled with wL (callers overwrite it from boundary data)."""
        mesh = self.mesh
        L = mesh.edge_cells[:, 0]
        R = mesh.edge_cells[:, 1]
        wL = (self.basis_L @ coeffs[:, L, :].transpose(1, 2, 0)).transpose(2, 0, 1)
        wR = wL.copy()
        inte = self.interior
        wR[:, inte] = (self.basis_R[inte] @ coeffs[:, R[inte], :]
                       .transpose(1, 2, 0)).transpose(2, 0, 1)
        return wL, wR

    def cell_means_of_field(self, func, degree: int) -> np.ndarray:
        """Cell averages of an analytic function (quadrature of given degree)."""
        out = np.empty(self.mesh.n_cells)
        for ci in range(self.mesh.n_cells):
            rule = polygon_quadrature(self.mesh.cell_coords[ci],
                                      self.geom.barycenter[ci], degree)
            out[ci] = rule.weights @ func(rule.nodes) / self.geom.area[ci]
        return out


def explicit_operator(ops: FvOperators, model, coeffs_E: np.ndarray,
                      Qbar_I: np.ndarray, dt: float, t: float,
                      boundary_state) -> np.ndarray:
    """F_Q = Q_I - (dt/|P|) * sum of Rusanov edge fluxes of the explicit system.

    coeffs_E: reconstruction of the explicitly differenced state.
    boundary_state(tag, pts, normals, wL, t) -> exterior trace at edge points.
    Conservative: interior fluxes are evaluated once and scattered with signs.
    """
    if dt <= 0.0:
        raise FvError("explicit operator requires dt > 0")
    mesh, geom = ops.mesh, ops.geom
    wL, wR = ops.edge_states(coeffs_E)
    for tag, edges in ops.by_tag.items():
        pts = ops.edge_points[edges].reshape(-1, 2)
        nrm = np.repeat(ops.geom.edge_normal[edges], ops.edge_points.shape[1], axis=0)
        ext = boundary_state(tag, pts,
                             nrm, wL[:, edges].reshape(wL.shape[0], -1), t)
        wR[:, edges] = ext.reshape(wL.shape[0], len(edges), -1)
    # normals broadcast against the (NE, ng) point layout
    flux = rusanov_flux(wL, wR, geom.edge_normal[:, None, :], model)   # (nexp, NE, ng)
    edge_int = np.einsum("feg,eg->fe", flux, ops.edge_weights)
    acc = (ops._edge_incidence @ edge_int.T).T
    expl = model.explicit_components(Qbar_I)
    return expl - dt / geom.area[None, :] * acc


def cweno_reconstruct(ops: FvOperators, fieldQ: np.ndarray) -> np.ndarray:
    """Spec-facing alias of FvOperators.reconstruct."""
    return ops.reconstruct(fieldQ)
