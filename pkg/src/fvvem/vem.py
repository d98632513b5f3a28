"""Conforming virtual element space of order k on polygons.

Per-element projector matrices, stabilized mass/stiffness operators, load
projection and global assembly.  Orders k = 1..4 are supported.  All element
quantities are computed in the cell's own coordinate frame with the scaled
monomial basis centred at the barycenter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix, apply_dirichlet
from .mesh import GeometryCache, PolyMesh, gauss_lobatto_reference, polygon_quadrature

MAX_ORDER = 4


class VemError(Exception):
    """Degenerate element or unsupported configuration."""


def n_poly(k: int) -> int:
    """Dimension of the 2D polynomial space of degree <= k."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def multi_indices(k: int) -> list[tuple[int, int]]:
    """Graded ordering 1, x, y, x^2, xy, y^2, ..."""
    out = []
    for d in range(k + 1):
        for a in range(d, -1, -1):
            out.append((a, d - a))
    return out


class MonomialBasis:
    """Scaled monomials ((x - xc)/h)^kappa up to total degree k on one cell."""

    def __init__(self, k: int, center: np.ndarray, h: float):
        self.k = k
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.indices = multi_indices(k)
        self.n = len(self.indices)

    def values(self, pts: np.ndarray, upto: int | None = None) -> np.ndarray:
        """(npts, n) monomial values; `upto` truncates the degree."""
        pts = np.atleast_2d(pts)
        xi = (pts[:, 0] - self.center[0]) / self.h
        et = (pts[:, 1] - self.center[1]) / self.h
        deg = self.k if upto is None else upto
        cols = []
        pow_x = [np.ones_like(xi)]
        pow_y = [np.ones_like(et)]
        for d in range(1, deg + 1):
            pow_x.append(pow_x[-1] * xi)
            pow_y.append(pow_y[-1] * et)
        for a, b in multi_indices(deg):
            cols.append(pow_x[a] * pow_y[b])
        return np.column_stack(cols)

    def gradients(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(npts, n) arrays of d m_alpha / dx and / dy."""
        pts = np.atleast_2d(pts)
        vals = self.values(pts)
        gx = np.zeros_like(vals)
        gy = np.zeros_like(vals)
        pos = {idx: i for i, idx in enumerate(self.indices)}
        for i, (a, b) in enumerate(self.indices):
            if a > 0:
                gx[:, i] = a / self.h * vals[:, pos[(a - 1, b)]]
            if b > 0:
                gy[:, i] = b / self.h * vals[:, pos[(a, b - 1)]]
        return gx, gy

    def laplacian_coeffs(self) -> np.ndarray:
        """(n, n) map L with Delta m_alpha = sum_beta L[alpha, beta] m_beta."""
        L = np.zeros((self.n, self.n))
        pos = {idx: i for i, idx in enumerate(self.indices)}
        for i, (a, b) in enumerate(self.indices):
            if a >= 2:
                L[i, pos[(a - 2, b)]] += a * (a - 1) / self.h ** 2
            if b >= 2:
                L[i, pos[(a, b - 2)]] += b * (b - 1) / self.h ** 2
        return L

    def derivative_coeffs(self, axis: int) -> np.ndarray:
        """(n, n) map Dx with d m_alpha/dx = sum_beta Dx[alpha, beta] m_beta."""
        D = np.zeros((self.n, self.n))
        pos = {idx: i for i, idx in enumerate(self.indices)}
        for i, (a, b) in enumerate(self.indices):
            if axis == 0 and a > 0:
                D[i, pos[(a - 1, b)]] = a / self.h
            if axis == 1 and b > 0:
                D[i, pos[(a, b - 1)]] = b / self.h
        return D


# ---------------------------------------------------------------------------
# dof layout
# ---------------------------------------------------------------------------

@dataclass
class VemDofLayout:
    """Global numbering: vertex dofs, (k-1) per edge, n_{k-2} moments per cell.

    Edge interior dofs are ordered along the edge's canonical direction; cells
    traversing an edge backwards see them reversed.  Moments are scaled by
    1/|P| so the first moment dof of a function is its cell mean.
    """

    k: int
    n_dofs: int
    cell_dofs: list          # per cell: (N_dof,) global indices
    dof_coords: np.ndarray   # (n_dofs, 2); moment dofs carry the barycenter
    is_moment: np.ndarray    # (n_dofs,) bool
    edge_dofs: np.ndarray    # (NE, k-1) global ids of edge interior dofs
    vertex_dof: np.ndarray   # (NV,) global ids
    moment_base: int

    def cell_dof_count(self, mesh: PolyMesh, ci: int) -> int:
        nv = len(mesh.cells[ci])
        return nv * self.k + (self.k - 1) * self.k // 2


def build_dof_layout(mesh: PolyMesh, geom: GeometryCache, k: int) -> VemDofLayout:
    """Number the degrees of freedom of the order-k space over the mesh."""
    if not 1 <= k <= MAX_ORDER:
        raise VemError(f"order k={k} outside the supported range 1..{MAX_ORDER}")
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    nkm2 = n_poly(k - 2)
    vertex_dof = np.arange(nv, dtype=np.int64)
    edge_dofs = (nv + np.arange(ne * (k - 1), dtype=np.int64).reshape(ne, k - 1)
                 if k > 1 else np.zeros((ne, 0), dtype=np.int64))
    moment_base = nv + ne * (k - 1)
    n_dofs = moment_base + nc * nkm2
    coords = np.zeros((n_dofs, 2))
    coords[:nv] = mesh.vertices
    if k > 1:
        t, _ = gauss_lobatto_reference(k)
        t_int = t[1:-1]
        va = mesh.edge_coords[:, 0, :]
        vb = mesh.edge_coords[:, 1, :]
        for j, tj in enumerate(t_int):
            coords[edge_dofs[:, j]] = va + 0.5 * (tj + 1.0) * (vb - va)
    is_moment = np.zeros(n_dofs, dtype=bool)
    is_moment[moment_base:] = True
    cell_dofs = []
    for ci in range(nc):
        loop = mesh.cells[ci]
        n = len(loop)
        ids = np.empty(n * k + nkm2, dtype=np.int64)
        ids[:n] = vertex_dof[loop]
        if k > 1:
            for a in range(n):
                e = mesh.cell_edges[ci][a]
                fwd = mesh.cell_edge_sign[ci][a] > 0
                d = edge_dofs[e] if fwd else edge_dofs[e][::-1]
                ids[n + a * (k - 1): n + (a + 1) * (k - 1)] = d
        ids[n * k:] = moment_base + ci * nkm2 + np.arange(nkm2)
        cell_dofs.append(ids)
        coords[moment_base + ci * nkm2: moment_base + (ci + 1) * nkm2] = geom.barycenter[ci]
    return VemDofLayout(k, n_dofs, cell_dofs, coords, is_moment, edge_dofs,
                        vertex_dof, moment_base)


# ---------------------------------------------------------------------------
# element matrices
# ---------------------------------------------------------------------------

@dataclass
class ElementVem:
    """All per-element VEM operators for one cell at order k."""

    k: int
    n_dof: int
    basis: MonomialBasis
    area: float
    D: np.ndarray            # (N_dof, n_k) dofs of monomials
    G: np.ndarray            # (n_k, n_k)
    B: np.ndarray            # (n_k, N_dof)
    H: np.ndarray            # (n_k, n_k) monomial Gram matrix
    C: np.ndarray            # (n_k, N_dof)
    Ex: np.ndarray           # (n_{k-1}, N_dof) moments of d phi/dx
    Ey: np.ndarray           # (n_{k-1}, N_dof)
    pis_nabla: np.ndarray    # (n_k, N_dof)   Pi*nabla
    pi_nabla: np.ndarray     # (N_dof, N_dof) Pi nabla
    pis_0: np.ndarray        # (n_k, N_dof)   Pi*0_k
    pi_0: np.ndarray         # (N_dof, N_dof)
    pis_0_km1: np.ndarray    # (n_{k-1}, N_dof)
    pis_0x: np.ndarray       # (n_{k-1}, N_dof) projected x-derivative
    pis_0y: np.ndarray       # (n_{k-1}, N_dof)
    mass: np.ndarray         # (N_dof, N_dof) stabilized M^h
    stiffness: np.ndarray    # (N_dof, N_dof) stabilized K^h
    stab_nabla: np.ndarray   # (N_dof, N_dof) (I - Pi_nabla)^T (I - Pi_nabla)
    quad_nodes: np.ndarray   # interior rule of degree 2k (used for loads)
    quad_weights: np.ndarray
    quad_monomials: np.ndarray   # (nq, n_k) monomial values at quad nodes
    edge_gl_nodes: np.ndarray    # (n_edges, k+1, 2) Gauss-Lobatto points per side


def build_element(mesh: PolyMesh, geom: GeometryCache, ci: int, k: int) -> ElementVem:
    """Construct every projector and stabilized matrix for one cell."""
    if not 1 <= k <= MAX_ORDER:
        raise VemError(f"order k={k} outside the supported range 1..{MAX_ORDER}")
    pts = mesh.cell_coords[ci]
    nv = len(pts)
    area = geom.area[ci]
    xc, h = geom.barycenter[ci], geom.h[ci]
    basis = MonomialBasis(k, xc, h)
    nk = basis.n
    nkm1, nkm2 = n_poly(k - 1), n_poly(k - 2)
    ndof = nv * k + nkm2

    rule = polygon_quadrature(pts, xc, max(2 * k, 2))
    qm = basis.values(rule.nodes)
    w = rule.weights

    H = qm.T @ (qm * w[:, None])

    # Gauss-Lobatto nodes per side; node 0 / node k are the side's endpoints
    tgl, wgl = gauss_lobatto_reference(k)
    sides = np.stack([pts, np.roll(pts, -1, axis=0)], axis=1)   # (nv, 2, 2)
    gl = sides[:, 0:1, :] + 0.5 * (tgl[None, :, None] + 1.0) * (sides[:, 1:2, :] - sides[:, 0:1, :])
    side_len = np.hypot(*(sides[:, 1, :] - sides[:, 0, :]).T)
    # outward normal of side a (CCW polygon: tangent rotated by -90 degrees)
    tangents = (sides[:, 1, :] - sides[:, 0, :]) / side_len[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    # local dof ids of the k+1 Gauss-Lobatto nodes along side a
    def side_dofs(a):
        ids = np.empty(k + 1, dtype=np.int64)
        ids[0] = a
        ids[k] = (a + 1) % nv
        if k > 1:
            ids[1:k] = nv + a * (k - 1) + np.arange(k - 1)
        return ids

    # D: dofs of the monomials
    D = np.zeros((ndof, nk))
    D[:nv] = basis.values(pts)
    if k > 1:
        for a in range(nv):
            D[nv + a * (k - 1): nv + (a + 1) * (k - 1)] = basis.values(gl[a, 1:k])
    if nkm2:
        D[nv * k:] = (qm[:, :nkm2].T @ (qm * w[:, None])) / area

    # G: P0 row plus gradient Gram rows
    gx, gy = basis.gradients(rule.nodes)
    G = gx.T @ (gx * w[:, None]) + gy.T @ (gy * w[:, None])
    if k == 1:
        G[0] = basis.values(pts).mean(axis=0)
    else:
        G[0] = H[0] / area

    # B rows alpha >= 1 via integration by parts
    B = np.zeros((nk, ndof))
    if k == 1:
        B[0, :nv] = 1.0 / nv
    else:
        B[0, nv * k] = 1.0
    lap = basis.laplacian_coeffs()
    if nkm2:
        B[:, nv * k:] -= lap[:, :nkm2] * area          # -(Delta m_alpha, phi_i)
    for a in range(nv):
        gxa, gya = basis.gradients(gl[a])
        dn = gxa * normals[a, 0] + gya * normals[a, 1]  # (k+1, nk)
        wside = 0.5 * side_len[a] * wgl
        cols = side_dofs(a)
        np.add.at(B.T, cols, dn * wside[:, None])
    B[0] = 0.0
    if k == 1:
        B[0, :nv] = 1.0 / nv
    else:
        B[0, nv * k] = 1.0

    try:
        pis_nabla = np.linalg.solve(G, B)
    except np.linalg.LinAlgError as exc:
        raise VemError(f"cell {ci}: singular G matrix") from exc
    pi_nabla = D @ pis_nabla

    # C: known moments where available, elliptic projection above
    C = np.zeros((nk, ndof))
    if nkm2:
        C[:nkm2, nv * k:] = area * np.eye(nkm2)
    C[nkm2:] = H[nkm2:] @ pis_nabla
    try:
        pis_0 = np.linalg.solve(H, C)
    except np.linalg.LinAlgError as exc:
        raise VemError(f"cell {ci}: singular H matrix") from exc
    pi_0 = D @ pis_0
    pis_0_km1 = np.linalg.solve(H[:nkm1, :nkm1], C[:nkm1])

    # E matrices: moments of the first derivatives of the basis functions
    Ex = np.zeros((nkm1, ndof))
    Ey = np.zeros((nkm1, ndof))
    dx_map = basis.derivative_coeffs(0)[:nkm1, :nkm2] if nkm2 else None
    dy_map = basis.derivative_coeffs(1)[:nkm1, :nkm2] if nkm2 else None
    if nkm2:
        Ex[:, nv * k:] -= dx_map * area
        Ey[:, nv * k:] -= dy_map * area
    for a in range(nv):
        mvals = basis.values(gl[a], upto=k - 1)         # (k+1, nkm1)
        wside = 0.5 * side_len[a] * wgl
        cols = side_dofs(a)
        np.add.at(Ex.T, cols, mvals * (wside * normals[a, 0])[:, None])
        np.add.at(Ey.T, cols, mvals * (wside * normals[a, 1])[:, None])
    pis_0x = np.linalg.solve(H[:nkm1, :nkm1], Ex)
    pis_0y = np.linalg.solve(H[:nkm1, :nkm1], Ey)

    eye = np.eye(ndof)
    d0 = eye - pi_0
    mass = C.T @ pis_0 + area * d0.T @ d0
    mass = 0.5 * (mass + mass.T)
    Gt = G.copy()
    Gt[0] = 0.0
    dn_ = eye - pi_nabla
    stab_nabla = dn_.T @ dn_
    # dimensionless dof-dof stabilization: the gradient consistency term is
    # itself O(1) in the cell size, so no |P| factor here (unlike the mass)
    stiffness = pis_nabla.T @ Gt @ pis_nabla + stab_nabla
    stiffness = 0.5 * (stiffness + stiffness.T)

    return ElementVem(k, ndof, basis, float(area), D, G, B, H, C, Ex, Ey,
                      pis_nabla, pi_nabla, pis_0, pi_0, pis_0_km1,
                      pis_0x, pis_0y, mass, stiffness, stab_nabla,
                      rule.nodes, w, qm, gl)


# spec-facing wrappers ------------------------------------------------------

def build_elliptic_projector(elem: ElementVem):
    """(G, B, D, Pi*nabla, Pi_nabla) of a built element."""
    return elem.G, elem.B, elem.D, elem.pis_nabla, elem.pi_nabla


def build_l2_projectors(elem: ElementVem):
    """(H, C, Pi*0, Pi0, Pi*0_{k-1}, Ex, Ey) of a built element."""
    return elem.H, elem.C, elem.pis_0, elem.pi_0, elem.pis_0_km1, elem.Ex, elem.Ey


def build_mass_matrix(elem: ElementVem) -> np.ndarray:
    return elem.mass


def build_stiffness_matrix(elem: ElementVem) -> np.ndarray:
    return elem.stiffness


def build_variable_stiffness(elem: ElementVem, coeff_values: np.ndarray,
                             quad_weights: np.ndarray,
                             quad_monomials_km1: np.ndarray) -> np.ndarray:
    """Stiffness with a spatially varying positive coefficient.

    coeff_values are the coefficient samples (its projected polynomial
    evaluated) at a quadrature rule of degree 2k+2, with matching weights and
    degree-(k-1) monomial values.  Raises VemError when the coefficient is
    not strictly positive at the quadrature nodes (dry cell).
    """
    coeff = np.asarray(coeff_values)
    if np.any(coeff <= 0.0):
        raise VemError("non-positive diffusion coefficient (dry cell)")
    wH = quad_weights * coeff
    HH = quad_monomials_km1.T @ (quad_monomials_km1 * wH[:, None])
    cbar = float(wH.sum() / elem.area)
    Kc = elem.pis_0x.T @ HH @ elem.pis_0x + elem.pis_0y.T @ HH @ elem.pis_0y
    K = Kc + cbar * elem.stab_nabla
    return 0.5 * (K + K.T)


def project_load(elem: ElementVem, f) -> np.ndarray:
    """Load vector (F)_i = integral of f * Pi0 phi_i over the cell.

    `f` is a callable of an (n, 2) point array or an array of values at the
    element's degree-2k quadrature nodes.
    """
    vals = f(elem.quad_nodes) if callable(f) else np.asarray(f)
    moments = elem.quad_monomials.T @ (elem.quad_weights * vals)
    return elem.pis_0.T @ moments


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------

@dataclass
class SparseSystem:
    matrix: SparseMatrix
    rhs: np.ndarray
    constrained: np.ndarray   # dof indices that were eliminated


def scatter_matrix(layout: VemDofLayout, element_matrices) -> SparseMatrix:
    """Scatter-add per-cell dense matrices into a global sparse matrix."""
    rows, cols, vals = [], [], []
    for ci, Ke in enumerate(element_matrices):
        dofs = layout.cell_dofs[ci]
        if Ke.shape != (len(dofs), len(dofs)):
            raise VemError(f"cell {ci}: element matrix shape {Ke.shape} does not "
                           f"match dof count {len(dofs)}")
        r = np.repeat(dofs, len(dofs))
        c = np.tile(dofs, len(dofs))
        rows.append(r)
        cols.append(c)
        vals.append(Ke.ravel())
    return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                                 np.concatenate(vals), (layout.n_dofs, layout.n_dofs))


def scatter_vector(layout: VemDofLayout, element_vectors) -> np.ndarray:
    out = np.zeros(layout.n_dofs)
    for ci, fe in enumerate(element_vectors):
        np.add.at(out, layout.cell_dofs[ci], fe)
    return out


def dirichlet_dofs(mesh: PolyMesh, layout: VemDofLayout, tags) -> np.ndarray:
    """Vertex and edge dofs on boundary edges whose tag is in `tags`."""
    out = []
    for e, tag in sorted(mesh.boundary_tags.items()):
        if tag not in tags:
            continue
        a, b = mesh.edges[e]
        out.append(layout.vertex_dof[a])
        out.append(layout.vertex_dof[b])
        out.extend(layout.edge_dofs[e])
    return np.unique(np.asarray(out, dtype=np.int64)) if out else np.empty(0, dtype=np.int64)


def assemble_global(mesh: PolyMesh, layout: VemDofLayout, element_matrices,
                    element_vectors=None, boundary_values=None,
                    boundary_tags=None) -> SparseSystem:
    """Assemble the global system and eliminate Dirichlet dofs.

    boundary_values: callable (n,2) points -> values, sampled at vertex/edge
    dof locations on edges whose tag is in boundary_tags; moment dofs are
    never constrained.
    """
    A = scatter_matrix(layout, element_matrices)
    b = (scatter_vector(layout, element_vectors) if element_vectors is not None
         else np.zeros(layout.n_dofs))
    fixed = np.empty(0, dtype=np.int64)
    if boundary_values is not None and boundary_tags:
        fixed = dirichlet_dofs(mesh, layout, set(boundary_tags))
        if len(fixed):
            vals = boundary_values(layout.dof_coords[fixed])
            A, b = apply_dirichlet(A, b, fixed, vals)
    return SparseSystem(A, b, fixed)
