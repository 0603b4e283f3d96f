"""Triangular meshes for the periodic unit cell and rectangular domains.

The unit cell is the square (0,1)^2 with an elliptical inclusion removed.
Meshes carry boundary tags and explicit periodic vertex pairs so that
downstream assembly can identify opposite faces node by node.  The text
format (``MESH2D 1``) is plain ASCII and round-trips exactly.
"""

import math

import numpy as np
from scipy.spatial import Delaunay, cKDTree

BOUNDARY_TAGS = ("OuterLeft", "OuterRight", "OuterBottom", "OuterTop", "Inclusion")

_CENTER = np.array([0.5, 0.5])

# Signed permutation matrices for the symmetries of the tilted cell:
# identity, half-turn about the center, and the two diagonal reflections.
# A circular inclusion additionally admits the axis reflections and
# quarter turns.  Each entry is (matrix, ring map (sign, quarter-shift)).
_SYM_CORE = (
    (np.array([[1.0, 0.0], [0.0, 1.0]]), (1, 0)),
    (np.array([[-1.0, 0.0], [0.0, -1.0]]), (1, 2)),
    (np.array([[0.0, 1.0], [1.0, 0.0]]), (-1, 0)),
    (np.array([[0.0, -1.0], [-1.0, 0.0]]), (-1, 2)),
)
_SYM_EXTRA = (
    (np.array([[-1.0, 0.0], [0.0, 1.0]]), (-1, 1)),
    (np.array([[1.0, 0.0], [0.0, -1.0]]), (-1, 3)),
    (np.array([[0.0, -1.0], [1.0, 0.0]]), (1, 1)),
    (np.array([[0.0, 1.0], [-1.0, 0.0]]), (1, 3)),
)


class MeshFormatError(ValueError):
    """Raised when a MESH2D file cannot be parsed; carries the line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshQualityError(RuntimeError):
    """Raised when generation cannot reach the required element quality."""


class EllipseSpec:
    """Elliptical inclusion of fixed area pi/12 centered in the unit cell.

    Parameters
    ----------
    gamma : float
        Aspect ratio of the semi-axes, a/b = gamma.  The semi-axes follow
        from a*b = 1/12.  The major axis is tilted 45 degrees.
    """

    AREA = math.pi / 12.0
    TILT = math.pi / 4.0

    def __init__(self, gamma):
        gamma = float(gamma)
        if not gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        a = math.sqrt(gamma / 12.0)
        b = math.sqrt(1.0 / (12.0 * gamma))
        # Half width of the tilted ellipse's bounding box; the inclusion
        # must stay strictly inside the cell.
        extent = math.sqrt((a * a + b * b) / 2.0)
        if extent >= 0.5 - 1e-9:
            raise ValueError(
                f"gamma={gamma} puts the inclusion in contact with the cell "
                f"boundary (half extent {extent:.4f})"
            )
        self.gamma = gamma
        self.a = a
        self.b = b
        self.center = _CENTER.copy()

    @property
    def semi_axes(self):
        return (self.a, self.b)

    @property
    def circular(self):
        return abs(self.gamma - 1.0) < 1e-12

    def boundary_point(self, theta):
        """Point(s) on the inclusion boundary at local parameter theta."""
        theta = np.asarray(theta, dtype=float)
        u = np.stack([self.a * np.cos(theta), self.b * np.sin(theta)], axis=-1)
        c, s = math.cos(self.TILT), math.sin(self.TILT)
        rot = np.array([[c, -s], [s, c]])
        return self.center + u @ rot.T

    def perimeter(self, npoints=64):
        """Arc length of the ellipse by Gauss-Legendre quadrature."""
        x, w = np.polynomial.legendre.leggauss(npoints)
        theta = math.pi * (x + 1.0)  # map [-1,1] to [0, 2*pi]
        speed = np.hypot(self.a * np.sin(theta), self.b * np.cos(theta))
        return math.pi * float(w @ speed)


class TriMesh:
    """Conforming triangle mesh with tagged boundary and periodic pairs.

    Fields
    ------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, positively oriented
    boundary_edges : (nb, 2) int array
    boundary_tags : list of str, one tag per boundary edge
    periodic_pairs : (np, 3) int array of (master, slave, axis)
    h_target : float or None
        Requested mesh size; not stored in the text format.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags,
                 periodic_pairs=None, h_target=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = list(boundary_tags)
        if periodic_pairs is None or len(periodic_pairs) == 0:
            periodic_pairs = np.zeros((0, 3), dtype=np.int64)
        self.periodic_pairs = np.ascontiguousarray(periodic_pairs, dtype=np.int64)
        self.h_target = h_target

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self):
        return float(np.sum(self.triangle_areas()))

    def min_angle(self):
        p = self.vertices
        t = self.triangles
        angles = []
        for i in range(3):
            a = p[t[:, i]]
            b = p[t[:, (i + 1) % 3]] - a
            c = p[t[:, (i + 2) % 3]] - a
            num = b[:, 0] * c[:, 0] + b[:, 1] * c[:, 1]
            den = np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1)
            angles.append(np.degrees(np.arccos(np.clip(num / den, -1.0, 1.0))))
        return float(np.min(angles))


def _edge_counts(triangles):
    """All undirected edges of a triangle array and their multiplicity."""
    e = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def validate_mesh(mesh, min_angle_deg=20.0, check_angles=True):
    """Check structural invariants; raise MeshQualityError on violation.

    Returns a dict with quality statistics.
    """
    areas = mesh.triangle_areas()
    if areas.size == 0:
        raise MeshQualityError("mesh has no triangles")
    if np.any(areas <= 0.0):
        raise MeshQualityError(f"{np.sum(areas <= 0)} nonpositive triangle areas")

    used = np.zeros(mesh.num_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        raise MeshQualityError(f"{np.sum(~used)} vertices not used by any triangle")

    edges, counts = _edge_counts(mesh.triangles)
    if np.any(counts > 2):
        raise MeshQualityError("non-manifold edge (shared by more than 2 triangles)")
    boundary = edges[counts == 1]
    tagged = np.sort(mesh.boundary_edges, axis=1)
    bset = set(map(tuple, boundary))
    tset = set(map(tuple, tagged))
    if bset != tset:
        raise MeshQualityError(
            f"tagged boundary edges do not match mesh boundary "
            f"({len(tset - bset)} extra, {len(bset - tset)} missing)"
        )
    for tag in mesh.boundary_tags:
        if tag not in BOUNDARY_TAGS:
            raise MeshQualityError(f"unknown boundary tag {tag!r}")

    v = mesh.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    for edge, tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag == "Inclusion":
            continue
        axis, value = {
            "OuterLeft": (0, lo[0]), "OuterRight": (0, hi[0]),
            "OuterBottom": (1, lo[1]), "OuterTop": (1, hi[1]),
        }[tag]
        if np.max(np.abs(v[edge, axis] - value)) > 1e-12:
            raise MeshQualityError(f"{tag} edge {edge} not on its boundary line")

    for master, slave, axis in mesh.periodic_pairs:
        if axis not in (0, 1):
            raise MeshQualityError(f"periodic pair axis {axis} not in (0, 1)")
        delta = v[slave] - v[master]
        span = hi[axis] - lo[axis]
        if abs(delta[axis] - span) > 1e-12 or abs(delta[1 - axis]) > 1e-12:
            raise MeshQualityError(
                f"periodic pair ({master}, {slave}) offset {delta} is not a "
                f"full translation along axis {axis}"
            )

    min_angle = mesh.min_angle()
    if check_angles and min_angle < min_angle_deg:
        raise MeshQualityError(
            f"minimum angle {min_angle:.2f} deg below {min_angle_deg} deg"
        )
    return {
        "min_angle": min_angle,
        "area": float(np.sum(areas)),
        "num_vertices": mesh.num_vertices,
        "num_triangles": mesh.num_triangles,
    }


def _symmetric_linspace(n):
    """Grid 0..1 with n intervals, exactly symmetric under x -> 1 - x."""
    x = np.arange(n + 1) / n
    for j in range((n + 1) // 2):
        x[n - j] = 1.0 - x[j]
    return x


def _point_in_polygon(points, poly):
    """Crossing-number test, vectorized over points (chunked)."""
    inside = np.zeros(len(points), dtype=bool)
    x2 = np.roll(poly, -1, axis=0)
    for lo in range(0, len(points), 4096):
        p = points[lo:lo + 4096]
        px = p[:, 0][:, None]
        py = p[:, 1][:, None]
        y1 = poly[:, 1][None, :]
        y2 = x2[:, 1][None, :]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = poly[:, 0][None, :] + (py - y1) / (y2 - y1) * (
                x2[:, 0][None, :] - poly[:, 0][None, :]
            )
        hits = cond & (px < xcross)
        inside[lo:lo + 4096] = np.sum(hits, axis=1) % 2 == 1
    return inside


def _nearest_on_polyline(points, poly):
    """Distance to closed polyline and index of the nearest segment."""
    q2 = np.roll(poly, -1, axis=0)
    seg = q2 - poly
    seglen2 = np.sum(seg * seg, axis=1)
    dist = np.full(len(points), np.inf)
    segidx = np.zeros(len(points), dtype=np.int64)
    nearest = np.zeros_like(points)
    for lo in range(0, len(points), 2048):
        p = points[lo:lo + 2048]
        w = p[:, None, :] - poly[None, :, :]
        t = np.clip(np.sum(w * seg[None, :, :], axis=2) / seglen2[None, :], 0.0, 1.0)
        proj = poly[None, :, :] + t[:, :, None] * seg[None, :, :]
        d2 = np.sum((p[:, None, :] - proj) ** 2, axis=2)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(p))
        dist[lo:lo + 2048] = np.sqrt(d2[rows, k])
        segidx[lo:lo + 2048] = k
        nearest[lo:lo + 2048] = proj[rows, k]
    return dist, segidx, nearest


class _CellBuilder:
    """One attempt at meshing the perforated cell; see gen_cell_mesh."""

    def __init__(self, spec, h, drop_factor, smooth_iters):
        self.spec = spec
        self.h = h
        self.drop_factor = drop_factor
        self.smooth_iters = smooth_iters
        self.n_side = max(4, int(round(1.0 / h)))
        per = spec.perimeter()
        n_ring = int(math.ceil(per / h))
        n_ring += (-n_ring) % 4  # multiple of 4 keeps the ring symmetric
        self.n_ring = n_ring
        self.sym = _SYM_CORE + (_SYM_EXTRA if spec.circular else ())

    def build(self):
        self._make_boundary()
        self._make_interior()
        self._smooth()
        return self._finalize()

    # -- construction ---------------------------------------------------

    def _make_boundary(self):
        n = self.n_side
        x = _symmetric_linspace(n)
        self.grid_x = x
        # Vertex order: corners, then side interiors, then the ring.
        pts = [(x[0], x[0]), (x[n], x[0]), (x[n], x[n]), (x[0], x[n])]
        self.corner = {(0, 0): 0, (n, 0): 1, (n, n): 2, (0, n): 3}
        self.side_nodes = {}
        idx = 4
        for tag, fixed_axis, fixed_val in (
            ("OuterBottom", 1, 0), ("OuterTop", 1, n),
            ("OuterLeft", 0, 0), ("OuterRight", 0, n),
        ):
            ids = np.empty(n + 1, dtype=np.int64)
            for j in range(n + 1):
                ij = (j, fixed_val) if fixed_axis == 1 else (fixed_val, j)
                if ij in self.corner:
                    ids[j] = self.corner[ij]
                else:
                    pts.append((x[ij[0]], x[ij[1]]))
                    ids[j] = idx
                    idx += 1
            self.side_nodes[tag] = ids
        self.n_square = idx

        theta = 2.0 * math.pi * np.arange(self.n_ring) / self.n_ring
        ring = self.spec.boundary_point(theta)
        ring = self._symmetrize_ring(ring)
        self.ring_base = idx
        self.points = np.vstack([np.array(pts, dtype=float), ring])
        self.n_fixed = self.points.shape[0]
        seg = np.roll(ring, -1, axis=0) - ring
        self.ring_seglen = np.hypot(seg[:, 0], seg[:, 1])
        self.ring_poly = ring

    def _symmetrize_ring(self, ring):
        """Force the ring to be an exact orbit of its symmetry group."""
        n = self.n_ring
        done = np.zeros(n, dtype=bool)
        out = ring.copy()
        for k in range(n):
            if done[k]:
                continue
            rep = out[k]
            for mat, (sign, quarter) in self.sym:
                j = (sign * k + quarter * (n // 4)) % n
                if not done[j]:
                    out[j] = _CENTER + (rep - _CENTER) @ mat.T
                    done[j] = True
        return out

    def _grid_map(self, mat, i, j):
        n = self.n_side
        a, b = (j, i) if mat[0, 0] == 0.0 else (i, j)
        if mat[0, 0] < 0.0 or mat[0, 1] < 0.0:
            a = n - a
        if mat[1, 0] < 0.0 or mat[1, 1] < 0.0:
            b = n - b
        return a, b

    def _make_interior(self):
        n = self.n_side
        x = self.grid_x
        ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
        ii = ii.ravel()
        jj = jj.ravel()
        cand = np.column_stack([x[ii], x[jj]])

        dist, segidx, _ = _nearest_on_polyline(cand, self.ring_poly)
        inside = _point_in_polygon(cand, self.ring_poly)
        local = self.ring_seglen[segidx]
        drop = inside | (dist < self.drop_factor * np.maximum(local, 0.5 * self.h))

        # Decide keep/drop per symmetry orbit so the kept set is symmetric.
        index_of = {(a, b): k for k, (a, b) in enumerate(zip(ii, jj))}
        keep = np.zeros(len(cand), dtype=bool)
        seen = np.zeros(len(cand), dtype=bool)
        orbits = []
        for k in range(len(cand)):
            if seen[k]:
                continue
            orbit = []
            for mat, _ in self.sym:
                m = index_of[self._grid_map(mat, ii[k], jj[k])]
                if not seen[m]:
                    seen[m] = True
                    orbit.append(m)
            orbits.append(orbit)
            if not drop[k]:
                keep[orbit] = True

        kept = np.flatnonzero(keep)
        remap = {k: t for t, k in enumerate(kept)}
        self.interior = cand[kept]
        # Permutations of the kept interior set, one per group element.
        self.perms = []
        for mat, _ in self.sym:
            perm = np.array(
                [remap[index_of[self._grid_map(mat, ii[k], jj[k])]] for k in kept],
                dtype=np.int64,
            )
            self.perms.append(perm)

    def _orbit_average(self, pts):
        acc = np.zeros_like(pts)
        for (mat, _), perm in zip(self.sym, self.perms):
            acc += (pts[perm] - _CENTER) @ mat  # inverse of orthogonal mat is mat.T
        return _CENTER + acc / len(self.sym)

    def _clamp(self, pts):
        m = 0.3 / self.n_side
        np.clip(pts, m, 1.0 - m, out=pts)
        dist, segidx, nearest = _nearest_on_polyline(pts, self.ring_poly)
        inside = _point_in_polygon(pts, self.ring_poly)
        margin = 0.45 * np.minimum(self.ring_seglen[segidx], self.h)
        bad = inside | (dist < margin)
        if np.any(bad):
            d = pts[bad] - nearest[bad]
            norm = np.linalg.norm(d, axis=1, keepdims=True)
            norm[norm == 0.0] = 1.0
            d /= norm
            d[inside[bad]] *= -1.0
            pts[bad] = nearest[bad] + margin[bad][:, None] * d
        return pts

    def _smooth(self):
        pts = np.vstack([self.points, self.interior])
        nf = self.n_fixed
        nbr = None
        for it in range(self.smooth_iters):
            if it % 5 == 0:
                nbr = self._adjacency(pts)
            mean = nbr @ pts
            deg = nbr @ np.ones(len(pts))
            deg[deg == 0.0] = 1.0
            moved = mean[nf:] / deg[nf:, None]
            moved = self._clamp(moved)
            pts[nf:] = self._orbit_average(moved)
        pts[nf:] = self._orbit_average(self._clamp(pts[nf:]))
        self.all_points = pts

    def _adjacency(self, pts):
        from scipy.sparse import coo_matrix

        tri = Delaunay(pts)
        simp = tri.simplices
        cent = pts[simp].mean(axis=1)
        keep = ~_point_in_polygon(cent, self.ring_poly)
        simp = simp[keep]
        e = np.vstack([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        n = len(pts)
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    # -- assembly of the TriMesh ---------------------------------------

    def _finalize(self):
        pts = self.all_points
        tri = Delaunay(pts)
        simp = tri.simplices.astype(np.int64)
        cent = pts[simp].mean(axis=1)
        simp = simp[~_point_in_polygon(cent, self.ring_poly)]

        d1 = pts[simp[:, 1]] - pts[simp[:, 0]]
        d2 = pts[simp[:, 2]] - pts[simp[:, 0]]
        flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0.0
        simp[flip] = simp[flip][:, [0, 2, 1]]

        edges, counts = _edge_counts(simp)
        boundary = edges[counts == 1]
        bedges, btags = self._classify_boundary(boundary)

        n = self.n_side
        pairs = []
        left, right = self.side_nodes["OuterLeft"], self.side_nodes["OuterRight"]
        bottom, top = self.side_nodes["OuterBottom"], self.side_nodes["OuterTop"]
        for j in range(n + 1):
            pairs.append((left[j], right[j], 0))
        for i in range(n + 1):
            pairs.append((bottom[i], top[i], 1))

        mesh = TriMesh(pts, simp, bedges, btags, np.array(pairs), h_target=self.h)
        validate_mesh(mesh)
        return mesh

    def _classify_boundary(self, boundary):
        n = self.n_side
        ring0 = self.ring_base
        nring = self.n_ring
        expected = set()
        for tag in ("OuterBottom", "OuterTop", "OuterLeft", "OuterRight"):
            ids = self.side_nodes[tag]
            for j in range(n):
                expected.add(tuple(sorted((ids[j], ids[j + 1]))))
        for k in range(nring):
            expected.add(tuple(sorted((ring0 + k, ring0 + (k + 1) % nring))))

        got = set(map(tuple, boundary))
        if got != expected:
            raise MeshQualityError(
                f"triangulation does not conform to the boundary "
                f"({len(got - expected)} stray, {len(expected - got)} missing edges)"
            )

        pts = self.all_points
        bedges = []
        btags = []
        for a, b in boundary:
            if a >= ring0 and b >= ring0:
                tag = "Inclusion"
            elif pts[a, 1] == 0.0 and pts[b, 1] == 0.0:
                tag = "OuterBottom"
            elif pts[a, 1] == 1.0 and pts[b, 1] == 1.0:
                tag = "OuterTop"
            elif pts[a, 0] == 0.0 and pts[b, 0] == 0.0:
                tag = "OuterLeft"
            elif pts[a, 0] == 1.0 and pts[b, 0] == 1.0:
                tag = "OuterRight"
            else:
                raise MeshQualityError(f"cannot classify boundary edge ({a}, {b})")
            bedges.append((a, b))
            btags.append(tag)
        return np.array(bedges, dtype=np.int64), btags


def gen_cell_mesh(spec, h):
    """Mesh the unit cell minus the elliptical inclusion.

    Opposite outer faces get mirror-image discretizations so every
    boundary vertex has an exact periodic partner.  The point set is
    symmetric under the half-turn about the cell center and the diagonal
    reflections (and the axis reflections for a circular inclusion).

    Parameters
    ----------
    spec : EllipseSpec
    h : float
        Target edge length, 0.002 <= h <= 0.1.
    """
    if not 0.002 <= h <= 0.1:
        raise ValueError(f"h={h} outside the supported range [0.002, 0.1]")
    errors = []
    for drop_factor, smooth_iters in ((0.7, 30), (0.55, 40), (0.85, 40), (0.62, 60)):
        try:
            return _CellBuilder(spec, h, drop_factor, smooth_iters).build()
        except MeshQualityError as exc:
            errors.append(str(exc))
    raise MeshQualityError(
        "cell meshing failed after retries: " + "; ".join(errors)
    )


def gen_rect_mesh(lx, ly, h):
    """Structured triangulation of the rectangle (0,lx) x (0,ly).

    Squares are split along alternating diagonals to avoid a directional
    bias.  Boundary edges carry the four Outer* tags; there are no
    periodic pairs.
    """
    if lx <= 0 or ly <= 0:
        raise ValueError("rectangle sides must be positive")
    if h <= 0:
        raise ValueError("h must be positive")
    nx = max(1, int(round(lx / h)))
    ny = max(1, int(round(ly / h)))
    xs = np.arange(nx + 1) * (lx / nx)
    ys = np.arange(ny + 1) * (ly / ny)
    xs[-1] = lx
    ys[-1] = ly
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))

    bedges = []
    btags = []
    for j in range(ny):
        bedges.append((vid(0, j), vid(0, j + 1)))
        btags.append("OuterLeft")
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        btags.append("OuterRight")
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append("OuterBottom")
        bedges.append((vid(i, ny), vid(i + 1, ny)))
        btags.append("OuterTop")

    mesh = TriMesh(verts, np.array(tris), np.array(bedges), btags, h_target=h)
    validate_mesh(mesh)
    return mesh


def write_mesh(mesh, path):
    """Write a mesh in the MESH2D 1 text format."""
    lines = ["MESH2D 1"]
    lines.append(f"NV {mesh.num_vertices}")
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"NT {mesh.num_triangles}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    lines.append(f"NB {len(mesh.boundary_edges)}")
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{i} {j} {tag}")
    lines.append(f"NP {len(mesh.periodic_pairs)}")
    for master, slave, axis in mesh.periodic_pairs:
        lines.append(f"{master} {slave} {axis}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _expect_count(parts, lineno, keyword):
    if len(parts) != 2 or parts[0] != keyword:
        raise MeshFormatError(f"expected '{keyword} <count>', got {' '.join(parts)!r}",
                              lineno)
    try:
        count = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"count {parts[1]!r} is not an integer", lineno)
    if count < 0:
        raise MeshFormatError(f"negative count {count}", lineno)
    return count


def read_mesh(path):
    """Read a MESH2D 1 file; errors carry 1-based line numbers."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(raw):
            raise MeshFormatError("unexpected end of file", len(raw))
        pos += 1
        return raw[pos - 1].split(), pos

    parts, lineno = next_line()
    if parts != ["MESH2D", "1"]:
        raise MeshFormatError(f"bad header {' '.join(parts)!r}, expected 'MESH2D 1'",
                              lineno)

    parts, lineno = next_line()
    nv = _expect_count(parts, lineno, "NV")
    verts = np.empty((nv, 2))
    for i in range(nv):
        parts, lineno = next_line()
        if len(parts) != 2:
            raise MeshFormatError(f"expected 'x y', got {len(parts)} fields", lineno)
        try:
            verts[i] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {parts!r}", lineno)

    def read_index(tok, lineno, limit=nv):
        try:
            val = int(tok)
        except ValueError:
            raise MeshFormatError(f"index {tok!r} is not an integer", lineno)
        if not 0 <= val < limit:
            raise MeshFormatError(f"index {val} out of range [0, {limit})", lineno)
        return val

    parts, lineno = next_line()
    nt = _expect_count(parts, lineno, "NT")
    tris = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        parts, lineno = next_line()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 'i j k', got {len(parts)} fields", lineno)
        tris[i] = [read_index(t, lineno) for t in parts]

    parts, lineno = next_line()
    nb = _expect_count(parts, lineno, "NB")
    bedges = np.empty((nb, 2), dtype=np.int64)
    btags = []
    for i in range(nb):
        parts, lineno = next_line()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 'i j tag', got {len(parts)} fields",
                                  lineno)
        bedges[i] = [read_index(parts[0], lineno), read_index(parts[1], lineno)]
        if parts[2] not in BOUNDARY_TAGS:
            raise MeshFormatError(f"unknown boundary tag {parts[2]!r}", lineno)
        btags.append(parts[2])

    parts, lineno = next_line()
    npairs = _expect_count(parts, lineno, "NP")
    pairs = np.empty((npairs, 3), dtype=np.int64)
    for i in range(npairs):
        parts, lineno = next_line()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 'master slave axis', got "
                                  f"{len(parts)} fields", lineno)
        master = read_index(parts[0], lineno)
        slave = read_index(parts[1], lineno)
        if parts[2] not in ("0", "1"):
            raise MeshFormatError(f"axis must be 0 or 1, got {parts[2]!r}", lineno)
        pairs[i] = (master, slave, int(parts[2]))

    while pos < len(raw):
        if raw[pos].strip():
            raise MeshFormatError(f"unexpected trailing content {raw[pos]!r}", pos + 1)
        pos += 1

    return TriMesh(verts, tris, bedges, btags, pairs, h_target=None)
