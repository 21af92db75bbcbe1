"""Structured triangle meshes for the three computational domains.

All meshes are tensor-product column grids: every vertex column shares one
x-coordinate, each quad cell is split along the (low-left, high-right)
diagonal.  The oscillating wall / strip floor is followed exactly by the
bottom vertex row, with vertical grading of the rows above.

Domains:
  * limit rectangle (-1/2, 1/2) x (0, 1),
  * perturbed rectangle, lower wall at x2 = eps*F(x1/eps),
  * periodicity strip (-1/2, 1/2) x (F(xi1), T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .profile import Profile, eval_profile


class Tag(IntEnum):
    """Boundary edge tags."""

    GAMMA_EPS = 1    # oscillating lower wall of the perturbed domain
    GAMMA0 = 2       # straight lower wall of the limit rectangle
    GAMMA1 = 3       # top wall x2 = 1
    GAMMA2_EPS = 4   # left wall x1 = -1/2
    GAMMA3_EPS = 5   # right wall x1 = +1/2
    STRIP_BOTTOM = 6
    STRIP_TOP = 7
    STRIP_SIDE_L = 8
    STRIP_SIDE_R = 9


@dataclass(frozen=True)
class EpsilonParam:
    """Oscillation parameter eps = 1/(2N+1) for integer N >= 1."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")

    @property
    def eps(self) -> float:
        return 1.0 / (2 * self.N + 1)


@dataclass
class Mesh:
    """Conforming P1 triangle mesh with tagged boundary edges.

    `grid` (when present) is the (ncols, nrows) array of vertex indices of
    the structured generator, column-major in x, rows ascending in y.
    """

    vertices: np.ndarray       # (nv, 2) float
    triangles: np.ndarray      # (nt, 3) int32, positively oriented
    edges: np.ndarray          # (ne, 2) int32 boundary edges
    edge_tags: np.ndarray      # (ne,)  int32 Tag values
    grid: np.ndarray | None = None

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_nodes(self, *tags: Tag) -> np.ndarray:
        """Sorted unique vertex indices on edges carrying any of `tags`."""
        keep = np.isin(self.edge_tags, [int(t) for t in tags])
        return np.unique(self.edges[keep])

    def validate(self) -> None:
        """Check orientation, conformity and boundary tagging; raise on error."""
        areas = self.areas()
        if not (areas > 0.0).all():
            raise ValueError("mesh contains non-positively oriented triangles")
        tri_edges = np.vstack([
            self.triangles[:, [0, 1]],
            self.triangles[:, [1, 2]],
            self.triangles[:, [2, 0]],
        ])
        tri_edges = np.sort(tri_edges, axis=1)
        uniq, counts = np.unique(tri_edges, axis=0, return_counts=True)
        if counts.max() > 2:
            raise ValueError("non-conforming mesh: edge shared by >2 triangles")
        boundary = uniq[counts == 1]
        tagged = np.sort(np.asarray(self.edges), axis=1)
        bset = {tuple(e) for e in boundary}
        tset = {tuple(e) for e in tagged}
        if bset != tset:
            raise ValueError("tagged boundary edges do not match mesh boundary")


def _mesh_from_columns(x_cols: np.ndarray, y_cols: np.ndarray,
                       tag_bottom: Tag, tag_top: Tag,
                       tag_left: Tag, tag_right: Tag) -> Mesh:
    """Assemble a Mesh from per-column vertex heights.

    x_cols: (ncols,) ascending; y_cols: (ncols, nrows) ascending per column.
    """
    ncols, nrows = y_cols.shape
    grid = np.arange(ncols * nrows, dtype=np.int32).reshape(ncols, nrows)
    xs = np.repeat(x_cols, nrows)
    vertices = np.column_stack([xs, y_cols.ravel()])

    a = grid[:-1, :-1].ravel()
    b = grid[1:, :-1].ravel()
    c = grid[1:, 1:].ravel()
    d = grid[:-1, 1:].ravel()
    tri1 = np.column_stack([a, b, c])
    tri2 = np.column_stack([a, c, d])
    triangles = np.vstack([tri1, tri2]).astype(np.int32)

    eb = np.column_stack([grid[:-1, 0], grid[1:, 0]])
    et = np.column_stack([grid[:-1, -1], grid[1:, -1]])
    el = np.column_stack([grid[0, :-1], grid[0, 1:]])
    er = np.column_stack([grid[-1, :-1], grid[-1, 1:]])
    edges = np.vstack([eb, et, el, er]).astype(np.int32)
    edge_tags = np.concatenate([
        np.full(len(eb), int(tag_bottom), dtype=np.int32),
        np.full(len(et), int(tag_top), dtype=np.int32),
        np.full(len(el), int(tag_left), dtype=np.int32),
        np.full(len(er), int(tag_right), dtype=np.int32),
    ])
    return Mesh(vertices, triangles, edges, edge_tags, grid=grid)


def mesh_limit_domain(h: float) -> Mesh:
    """Uniform mesh of the limit rectangle (-1/2, 1/2) x (0, 1).

    h is the target cell size; 0 < h <= 1/2.
    """
    if not (0.0 < h <= 0.5):
        raise ValueError("h must lie in (0, 1/2]")
    n = max(2, round(1.0 / h))
    x = np.linspace(-0.5, 0.5, n + 1)
    y = np.linspace(0.0, 1.0, n + 1)
    y_cols = np.tile(y, (n + 1, 1))
    return _mesh_from_columns(x, y_cols, Tag.GAMMA0, Tag.GAMMA1,
                              Tag.GAMMA2_EPS, Tag.GAMMA3_EPS)


def mesh_perturbed_domain(p: Profile, eps: EpsilonParam,
                          cells_per_half_period: int = 8,
                          h_bulk: float = 1.0 / 32.0,
                          layer_heights=None) -> Mesh:
    """Mesh of the perturbed rectangle with wall x2 = eps*F(x1/eps).

    The wall is sampled with `cells_per_half_period` cells per half period of
    the oscillation (>= 4); wall vertices lie on the curve exactly.  The bulk
    x2 > 0 uses uniform rows of height ~h_bulk; the oscillating layer is
    filled with rows graded proportionally to the local wall depth.

    `layer_heights` optionally gives fast-variable row heights (as produced
    by strip_row_heights) to reproduce above the wall, scaled by eps; with
    matching cells_per_half_period every mesh node below eps*max(height)
    then coincides exactly with a scaled strip-mesh node, so sampling a
    strip P1 field there is interpolation-free.  Uniform rows of size
    ~h_bulk continue from the last scaled row (capped at x2 = 0.7) up to 1.
    """
    if cells_per_half_period < 4:
        raise ValueError("cells_per_half_period must be >= 4")
    if not (0.0 < h_bulk <= 0.5):
        raise ValueError("h_bulk must lie in (0, 1/2]")
    e = eps.eps
    nper = 2 * eps.N + 1
    ncx = nper * 2 * cells_per_half_period
    x = np.linspace(-0.5, 0.5, ncx + 1)
    wall = e * eval_profile(p, x / e)[0]

    hx = e / (2 * cells_per_half_period)
    n_layer = max(1, math.ceil((-wall).max() / hx))

    frac = 1.0 - np.arange(n_layer) / n_layer          # 1 -> just above 0
    layer = wall[:, None] * frac[None, :]              # rises from wall to 0-
    if layer_heights is None:
        n_bulk = max(1, math.ceil(1.0 / h_bulk))
        rows = np.linspace(0.0, 1.0, n_bulk + 1)
    else:
        hs = np.asarray(layer_heights, dtype=float)
        scaled = e * hs[(hs > 0.0) & (e * hs <= 0.7)]
        top = scaled[-1] if scaled.size else 0.0
        n_bulk = max(1, math.ceil((1.0 - top) / h_bulk))
        rows = np.concatenate([[0.0], scaled,
                               np.linspace(top, 1.0, n_bulk + 1)[1:]])
    bulk = np.tile(rows, (ncx + 1, 1))
    y_cols = np.concatenate([layer, bulk], axis=1)
    return _mesh_from_columns(x, y_cols, Tag.GAMMA_EPS, Tag.GAMMA1,
                              Tag.GAMMA2_EPS, Tag.GAMMA3_EPS)


def strip_row_heights(T: float, cells_per_half_period: int,
                      grading: float) -> np.ndarray:
    """Vertical row positions 0 = y_0 < ... < y_m = T of the strip mesh.

    First spacing matches the horizontal cell size, subsequent spacings grow
    by `grading`.  For T' > T the sequence is a prefix-stable extension:
    all rows strictly below the snap region are identical, which makes
    truncation comparisons between two heights free of re-meshing noise.
    """
    delta = 1.0 / (2 * cells_per_half_period)
    ys = [0.0]
    while True:
        nxt = ys[-1] + delta
        if nxt >= T - 0.5 * delta:
            break
        ys.append(nxt)
        delta *= grading
    ys.append(T)
    return np.asarray(ys)


def mesh_strip(p: Profile, T: float = 8.0, cells_per_half_period: int = 8,
               grading: float = 1.15) -> Mesh:
    """Mesh of the truncated periodicity strip (-1/2, 1/2) x (F(xi1), T).

    T >= 3, grading >= 1.  The floor is followed exactly by the bottom row;
    rows above xi2 = 0 are flat and geometrically graded.
    """
    if T < 3.0:
        raise ValueError("strip height T must be >= 3")
    if grading < 1.0:
        raise ValueError("grading must be >= 1")
    if cells_per_half_period < 4:
        raise ValueError("cells_per_half_period must be >= 4")
    ncx = 2 * cells_per_half_period
    x = np.linspace(-0.5, 0.5, ncx + 1)
    floor = eval_profile(p, x)[0]

    hx = 1.0 / (2 * cells_per_half_period)
    n_bot = max(1, math.ceil((-floor).max() / hx))
    frac = 1.0 - np.arange(n_bot) / n_bot
    below = floor[:, None] * frac[None, :]
    above = np.tile(strip_row_heights(T, cells_per_half_period, grading),
                    (ncx + 1, 1))
    y_cols = np.concatenate([below, above], axis=1)
    return _mesh_from_columns(x, y_cols, Tag.STRIP_BOTTOM, Tag.STRIP_TOP,
                              Tag.STRIP_SIDE_L, Tag.STRIP_SIDE_R)


def export_mesh(mesh: Mesh, path) -> None:
    """Write a mesh as plain text (vertices / triangles / tagged edges)."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.num_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.num_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"bedges {len(mesh.edges)}\n")
        for (i, j), t in zip(mesh.edges, mesh.edge_tags):
            fh.write(f"{i} {j} {t}\n")


class GridInterpolator:
    """P1 interpolation on a structured column mesh.

    Exploits the tensor structure (vertical cell sides, per-column ascending
    rows) to locate query points without a general point-in-triangle search.
    Points are clamped to the nearest cell when they fall marginally outside.
    """

    def __init__(self, mesh: Mesh):
        if mesh.grid is None:
            raise ValueError("GridInterpolator requires a structured mesh")
        self.mesh = mesh
        self.grid = mesh.grid
        self.xcols = mesh.vertices[self.grid[:, 0], 0]
        self.ycols = mesh.vertices[self.grid, 1]      # (ncols, nrows)
        self._yref = self.ycols.mean(axis=0)          # monotone row reference

    def locate(self, qx, qy):
        """Return (icol, jrow, s) cell indices and horizontal cell fraction."""
        qx = np.asarray(qx, dtype=float)
        qy = np.asarray(qy, dtype=float)
        ncols, nrows = self.grid.shape
        i = np.clip(np.searchsorted(self.xcols, qx, side="right") - 1,
                    0, ncols - 2)
        x0 = self.xcols[i]
        x1 = self.xcols[i + 1]
        s = np.clip((qx - x0) / (x1 - x0), 0.0, 1.0)
        # start from the column-averaged row, then walk to the true cell
        # (rows below xi2 = 0 follow the curved floor and vary per column)
        j = np.clip(np.searchsorted(self._yref, qy, side="right") - 1,
                    0, nrows - 2)
        for _ in range(nrows):
            yb = self.ycols[i, j] * (1 - s) + self.ycols[i + 1, j] * s
            yt = self.ycols[i, j + 1] * (1 - s) + self.ycols[i + 1, j + 1] * s
            down = (qy < yb) & (j > 0)
            up = (qy > yt) & (j < nrows - 2)
            if not (down.any() or up.any()):
                break
            j = j - down.astype(int) + up.astype(int)
        return i, j, s

    def __call__(self, values, qx, qy):
        """Interpolate nodal `values` at points (qx, qy)."""
        values = np.asarray(values, dtype=float)
        qx = np.atleast_1d(np.asarray(qx, dtype=float))
        qy = np.atleast_1d(np.asarray(qy, dtype=float))
        i, j, _ = self.locate(qx, qy)
        va = self.grid[i, j]
        vb = self.grid[i + 1, j]
        vc = self.grid[i + 1, j + 1]
        vd = self.grid[i, j + 1]
        pa = self.mesh.vertices[va]
        pb = self.mesh.vertices[vb]
        pc = self.mesh.vertices[vc]
        pd = self.mesh.vertices[vd]
        q = np.column_stack([qx, qy])

        def cross(u, v):
            return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

        # diagonal a-c splits the quad; below-diagonal -> triangle (a,b,c)
        in_lower = cross(pc - pa, q - pa) <= 0.0
        p2 = np.where(in_lower[:, None], pb, pc)
        p3 = np.where(in_lower[:, None], pc, pd)
        n2 = np.where(in_lower, vb, vc)
        n3 = np.where(in_lower, vc, vd)
        det = cross(p2 - pa, p3 - pa)
        w2 = cross(q - pa, p3 - pa) / det
        w3 = cross(p2 - pa, q - pa) / det
        w2 = np.clip(w2, 0.0, 1.0)
        w3 = np.clip(w3, 0.0, 1.0)
        w1 = np.clip(1.0 - w2 - w3, 0.0, 1.0)
        return w1 * values[va] + w2 * values[n2] + w3 * values[n3]
