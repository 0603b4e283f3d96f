"""Taylor-Hood finite elements on triangle meshes.

Velocity uses quadratic (P2) shape functions on vertices plus edge
midpoints, pressure uses linear (P1) vertex functions.  All element
integrals use a 6-point rule that is exact through degree 4, which covers
every product assembled here.  Periodic and no-slip constraints are
eliminated symbolically through a prolongation matrix so that reduced
operators keep the spectrum of the constrained problem.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# 6-point, degree-4 triangle rule (barycentric orbits).  Weights sum to
# the reference-triangle area 1/2.
_QA1, _QW1 = 0.445948490915965, 0.223381589678011
_QA2, _QW2 = 0.091576213509771, 0.109951743655322
QUAD_POINTS = np.array([
    [_QA1, _QA1], [1.0 - 2.0 * _QA1, _QA1], [_QA1, 1.0 - 2.0 * _QA1],
    [_QA2, _QA2], [1.0 - 2.0 * _QA2, _QA2], [_QA2, 1.0 - 2.0 * _QA2],
])
QUAD_WEIGHTS = 0.5 * np.array([_QW1, _QW1, _QW1, _QW2, _QW2, _QW2])


class SolverError(RuntimeError):
    """Raised when a sparse solve fails or misses the residual contract."""


def p1_shape(points):
    """P1 basis values at reference points (n, 2) -> (n, 3)."""
    xi = points[:, 0]
    eta = points[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta], axis=1)


P1_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p2_shape(points):
    """P2 basis values at reference points (n, 2) -> (n, 6).

    Local order: vertices 0,1,2 then midpoints of edges (0,1), (1,2),
    (2,0).
    """
    lam = np.stack([1.0 - points[:, 0] - points[:, 1],
                    points[:, 0], points[:, 1]], axis=1)
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    return np.stack([
        l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0), l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1, 4.0 * l1 * l2, 4.0 * l2 * l0,
    ], axis=1)


def p2_grads(points):
    """P2 basis gradients at reference points (n, 2) -> (n, 6, 2)."""
    lam = np.stack([1.0 - points[:, 0] - points[:, 1],
                    points[:, 0], points[:, 1]], axis=1)
    g = np.empty((points.shape[0], 6, 2))
    for v in range(3):
        g[:, v, :] = (4.0 * lam[:, v, None] - 1.0) * P1_GRADS[v]
    for e, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        g[:, 3 + e, :] = 4.0 * (lam[:, i, None] * P1_GRADS[j]
                                + lam[:, j, None] * P1_GRADS[i])
    return g


class DofMapP2:
    """Global numbering for P2 scalars: vertex dofs then edge dofs."""

    def __init__(self, mesh):
        tris = mesh.triangles
        nv = mesh.num_vertices
        pairs = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        nt = tris.shape[0]
        edge_ids = inverse.reshape(3, nt).T
        self.num_vertices = nv
        self.num_edges = self.edges.shape[0]
        self.num_dofs = nv + self.num_edges
        self.cell_dofs = np.hstack([tris, nv + edge_ids])
        self._edge_lookup = {tuple(e): k for k, e in enumerate(self.edges)}

    def edge_dof(self, a, b):
        """Global dof of the midpoint of edge (a, b)."""
        key = (a, b) if a < b else (b, a)
        return self.num_vertices + self._edge_lookup[key]

    def dof_coordinates(self, mesh):
        """Coordinates of every scalar dof (vertices, then edge midpoints)."""
        mid = 0.5 * (mesh.vertices[self.edges[:, 0]]
                     + mesh.vertices[self.edges[:, 1]])
        return np.vstack([mesh.vertices, mid])


def _geometry(mesh):
    p = mesh.vertices
    t = mesh.triangles
    jac = np.stack([p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)  # inverse transpose of the Jacobian
    inv_t[:, 0, 0] = jac[:, 1, 1]
    inv_t[:, 0, 1] = -jac[:, 1, 0]
    inv_t[:, 1, 0] = -jac[:, 0, 1]
    inv_t[:, 1, 1] = jac[:, 0, 0]
    inv_t /= det[:, None, None]
    return jac, det, inv_t


def _accumulate(rows, cols, vals, shape):
    mat = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return mat.tocsr()


def _element_matrix_to_coo(cell_dofs, elem):
    ld = cell_dofs.shape[1]
    rows = np.repeat(cell_dofs, ld, axis=1)
    cols = np.tile(cell_dofs, (1, ld))
    return rows, cols, elem.reshape(cell_dofs.shape[0], ld * ld)


def assemble_p2_stiffness_mass(mesh, dofmap=None):
    """Scalar P2 stiffness and mass matrices (full space)."""
    if dofmap is None:
        dofmap = DofMapP2(mesh)
    _, det, inv_t = _geometry(mesh)
    gref = p2_grads(QUAD_POINTS)          # (q, 6, 2)
    nref = p2_shape(QUAD_POINTS)          # (q, 6)
    nt = mesh.num_triangles
    stiff = np.zeros((nt, 6, 6))
    mass = np.zeros((nt, 6, 6))
    for q, w in enumerate(QUAD_WEIGHTS):
        gphys = np.einsum("eab,ib->eia", inv_t, gref[q])   # (e, 6, 2)
        stiff += w * det[:, None, None] * np.einsum("eia,eja->eij", gphys, gphys)
        mass += w * det[:, None, None] * np.outer(nref[q], nref[q])[None, :, :]
    rows, cols, vals = _element_matrix_to_coo(dofmap.cell_dofs, stiff)
    k = _accumulate(rows, cols, vals, (dofmap.num_dofs, dofmap.num_dofs))
    rows, cols, vals = _element_matrix_to_coo(dofmap.cell_dofs, mass)
    m = _accumulate(rows, cols, vals, (dofmap.num_dofs, dofmap.num_dofs))
    return k, m, dofmap


def assemble_divergence(mesh, dofmap):
    """Blocks Bx, By with (Bc)[q, u] = integral of psi_q * d(phi_u)/dx_c."""
    _, det, inv_t = _geometry(mesh)
    gref = p2_grads(QUAD_POINTS)
    p1 = p1_shape(QUAD_POINTS)
    nt = mesh.num_triangles
    bx = np.zeros((nt, 3, 6))
    by = np.zeros((nt, 3, 6))
    for q, w in enumerate(QUAD_WEIGHTS):
        gphys = np.einsum("eab,ib->eia", inv_t, gref[q])
        bx += w * det[:, None, None] * p1[q][None, :, None] * gphys[:, None, :, 0]
        by += w * det[:, None, None] * p1[q][None, :, None] * gphys[:, None, :, 1]
    tris = mesh.triangles
    nv = mesh.num_vertices
    rows = np.repeat(tris, 6, axis=1)
    cols = np.tile(dofmap.cell_dofs, (1, 3))
    shape = (nv, dofmap.num_dofs)
    bx = _accumulate(rows, cols, bx.reshape(nt, 18), shape)
    by = _accumulate(rows, cols, by.reshape(nt, 18), shape)
    return bx, by


def assemble_p1_stiffness(mesh, tensor):
    """P1 stiffness with a constant 2x2 coefficient tensor."""
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (2, 2):
        raise ValueError(f"tensor must be 2x2, got {tensor.shape}")
    _, det, inv_t = _geometry(mesh)
    gphys = np.einsum("eab,ib->eia", inv_t, P1_GRADS)      # (e, 3, 2)
    flux = np.einsum("ab,ejb->eja", tensor, gphys)
    elem = 0.5 * det[:, None, None] * np.einsum("eia,eja->eij", gphys, flux)
    rows, cols, vals = _element_matrix_to_coo(mesh.triangles, elem)
    nv = mesh.num_vertices
    return _accumulate(rows, cols, vals, (nv, nv))


def assemble_p1_mass(mesh):
    """Consistent P1 mass matrix."""
    areas = mesh.triangle_areas()
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    elem = areas[:, None, None] * local[None, :, :]
    rows, cols, vals = _element_matrix_to_coo(mesh.triangles, elem)
    nv = mesh.num_vertices
    return _accumulate(rows, cols, vals, (nv, nv))


def p1_integral_vector(mesh):
    """Vector of integrals of each P1 basis function."""
    areas = mesh.triangle_areas()
    vec = np.zeros(mesh.num_vertices)
    np.add.at(vec, mesh.triangles.ravel(),
              np.repeat(areas / 3.0, 3))
    return vec


def p1_gradient_load(mesh, g):
    """Load vector with entries integral of g . grad(psi_i), g constant."""
    g = np.asarray(g, dtype=float)
    _, det, inv_t = _geometry(mesh)
    gphys = np.einsum("eab,ib->eia", inv_t, P1_GRADS)
    elem = 0.5 * det[:, None] * np.einsum("a,eia->ei", g, gphys)
    vec = np.zeros(mesh.num_vertices)
    np.add.at(vec, mesh.triangles.ravel(), elem.ravel())
    return vec


def boundary_edge_load(mesh, tag, value):
    """Load from a constant normal-flux datum on one tagged side.

    Adds value * integral of psi_i over the tagged edges (P1 trace).
    """
    vec = np.zeros(mesh.num_vertices)
    for edge, etag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if etag != tag:
            continue
        length = np.linalg.norm(mesh.vertices[edge[1]] - mesh.vertices[edge[0]])
        vec[edge] += 0.5 * value * length
    return vec


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_prolongation(num_dofs, identify_pairs, fixed):
    """Prolongation from reduced dofs to the full space.

    identify_pairs : iterable of (a, b) dof index pairs to merge.
    fixed : boolean mask of dofs clamped to zero (wins over merging).

    Returns (P, reduced_of_full) where P is (num_dofs, num_reduced) and
    reduced_of_full[i] is the reduced index of full dof i, or -1 if the
    dof is fixed.  Applying the map twice changes nothing: merged classes
    are resolved to a single representative.
    """
    uf = _UnionFind(num_dofs)
    for a, b in identify_pairs:
        uf.union(int(a), int(b))
    root = np.array([uf.find(i) for i in range(num_dofs)])
    fixed = np.asarray(fixed, dtype=bool)
    class_fixed = np.zeros(num_dofs, dtype=bool)
    np.logical_or.at(class_fixed, root, fixed)
    keep = np.flatnonzero((root == np.arange(num_dofs)) & ~class_fixed)
    reduced_index = np.full(num_dofs, -1, dtype=np.int64)
    reduced_index[keep] = np.arange(keep.size)
    reduced_of_full = np.where(class_fixed[root], -1, reduced_index[root])
    live = np.flatnonzero(reduced_of_full >= 0)
    prol = sp.coo_matrix(
        (np.ones(live.size), (live, reduced_of_full[live])),
        shape=(num_dofs, keep.size),
    ).tocsr()
    return prol, reduced_of_full


def cell_constraints(mesh, dofmap):
    """Periodic merges and no-slip mask for the perforated cell.

    Returns (pairs_p2, fixed_p2, pairs_p1) where the P2 data cover one
    scalar velocity component and the P1 pairs cover pressure.
    """
    pairs_p1 = [(int(m), int(s)) for m, s, _ in mesh.periodic_pairs]

    partner = {0: {}, 1: {}}
    for m, s, axis in mesh.periodic_pairs:
        partner[axis][int(m)] = int(s)

    pairs_p2 = list(pairs_p1)
    for edge, tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        axis = {"OuterLeft": 0, "OuterBottom": 1}.get(tag)
        if axis is None:
            continue
        a, b = int(edge[0]), int(edge[1])
        try:
            pa, pb = partner[axis][a], partner[axis][b]
        except KeyError:
            raise ValueError(
                f"boundary edge ({a}, {b}) on {tag} has no periodic partner"
            )
        pairs_p2.append((dofmap.edge_dof(a, b), dofmap.edge_dof(pa, pb)))

    fixed_p2 = np.zeros(dofmap.num_dofs, dtype=bool)
    for edge, tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag != "Inclusion":
            continue
        a, b = int(edge[0]), int(edge[1])
        fixed_p2[[a, b, dofmap.edge_dof(a, b)]] = True
    return pairs_p2, fixed_p2, pairs_p1


class StokesSystem:
    """Constrained Taylor-Hood saddle operator on the perforated cell.

    The reduced unknown is (ux, uy, p, mu) where mu is the multiplier
    enforcing zero mean pressure.  The operator matrix is symmetric; the
    companion mass matrix carries the velocity mass in its leading
    blocks.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        k2, m2, dofmap = assemble_p2_stiffness_mass(mesh)
        self.dofmap = dofmap
        bx, by = assemble_divergence(mesh, dofmap)
        pairs2, fixed2, pairs1 = cell_constraints(mesh, dofmap)
        self.prol_v, self.reduced_v = build_prolongation(
            dofmap.num_dofs, pairs2, fixed2)
        self.prol_p, self.reduced_p = build_prolongation(
            mesh.num_vertices, pairs1, np.zeros(mesh.num_vertices, dtype=bool))

        rv, rp = self.prol_v, self.prol_p
        self.stiff_r = (rv.T @ k2 @ rv).tocsr()
        self.mass_r = (rv.T @ m2 @ rv).tocsr()
        self.bx_r = (rp.T @ bx @ rv).tocsr()
        self.by_r = (rp.T @ by @ rv).tocsr()
        self.mean_r = rp.T @ p1_integral_vector(mesh)
        self.mass_full = m2

        nvr = self.stiff_r.shape[0]
        npr = self.bx_r.shape[0]
        self.n_velocity = nvr
        self.n_pressure = npr
        cvec = sp.csr_matrix(self.mean_r[:, None])
        self.operator = sp.bmat([
            [self.stiff_r, None, self.bx_r.T, None],
            [None, self.stiff_r, self.by_r.T, None],
            [self.bx_r, self.by_r, None, cvec],
            [None, None, cvec.T, None],
        ], format="csc")
        self.mass_saddle = sp.block_diag(
            [self.mass_r, self.mass_r,
             sp.csr_matrix((npr, npr)), sp.csr_matrix((1, 1))],
            format="csr")
        self._factor = None

    @property
    def factor(self):
        if self._factor is None:
            self._factor = SparseFactor(self.operator)
        return self._factor

    def unit_load(self, axis):
        """Reduced load for a constant unit body force along an axis."""
        ones = np.ones(self.dofmap.num_dofs)
        comp = self.prol_v.T @ (self.mass_full @ ones)
        rhs = np.zeros(self.operator.shape[0])
        if axis == 0:
            rhs[:self.n_velocity] = comp
        else:
            rhs[self.n_velocity:2 * self.n_velocity] = comp
        return rhs

    def velocity_average(self, x):
        """Cell integral of the velocity in a saddle vector, per component."""
        ones = np.ones(self.dofmap.num_dofs)
        weights = self.prol_v.T @ (self.mass_full @ ones)
        return np.array([
            weights @ x[:self.n_velocity],
            weights @ x[self.n_velocity:2 * self.n_velocity],
        ])

    def velocity_field(self, x):
        """Full-space velocity dof values (n_dofs, 2) from a saddle vector."""
        ux = self.prol_v @ x[:self.n_velocity]
        uy = self.prol_v @ x[self.n_velocity:2 * self.n_velocity]
        return np.stack([ux, uy], axis=1)

    def velocity_l2(self, x):
        """L2 norm of the velocity block of a saddle vector."""
        ux = x[:self.n_velocity]
        uy = x[self.n_velocity:2 * self.n_velocity]
        return float(np.sqrt(ux @ (self.mass_r @ ux) + uy @ (self.mass_r @ uy)))

    def divergence_norm(self, x):
        bu = (self.bx_r @ x[:self.n_velocity]
              + self.by_r @ x[self.n_velocity:2 * self.n_velocity])
        return float(np.linalg.norm(bu))


class SparseFactor:
    """LU factorization of a sparse matrix with a residual guarantee."""

    def __init__(self, matrix):
        self.matrix = matrix.tocsc()
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        self._norm = spla.norm(self.matrix, np.inf)

    def solve(self, rhs, check=True, rtol=1e-10):
        x = self.lu.solve(rhs)
        if check:
            residual = np.linalg.norm(self.matrix @ x - rhs, np.inf)
            scale = self._norm * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf)
            if scale > 0.0 and residual > rtol * scale:
                raise SolverError(
                    f"direct solve residual {residual:.2e} exceeds "
                    f"{rtol:.0e} * scale ({scale:.2e})"
                )
        return x


def solve_sparse(matrix, rhs, rtol=1e-10):
    """Direct sparse solve with a backward-error check."""
    return SparseFactor(matrix).solve(rhs, rtol=rtol)
