"""P1 finite element kernels: assembly, sparse solves, eigenpairs near a
shift, and variational recovery of the normal derivative on the lower wall.

Stiffness and consistent mass are assembled vectorized over triangles into
CSR.  Sparse solves go through scipy's sparse LU; the eigensolver is a
deterministic shift-invert subspace iteration on that factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh, cholesky, solve_triangular

from .meshgen import Mesh, Tag


class FactorizationError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


def assemble(mesh: Mesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Assemble (stiffness K, consistent mass M) on P1 elements."""
    tri = mesh.triangles
    p = mesh.vertices[tri]                      # (nt, 3, 2)
    x = p[:, :, 0]
    y = p[:, :, 1]
    # edge vectors opposite each local vertex (cyclic differences)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
    if not (area2 > 0.0).all():
        raise ValueError("mesh contains non-positively oriented triangles")
    area = 0.5 * area2

    kloc = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
        / (4.0 * area)[:, None, None]
    mpat = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mloc = area[:, None, None] * mpat[None, :, :]

    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.num_vertices
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def dirichlet_split(mesh: Mesh, *tags: Tag) -> tuple[np.ndarray, np.ndarray]:
    """Vertex indices (free, fixed) for homogeneous Dirichlet on `tags`."""
    fixed = mesh.boundary_nodes(*tags)
    mask = np.ones(mesh.num_vertices, dtype=bool)
    mask[fixed] = False
    return np.flatnonzero(mask), fixed


def restrict(A: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return A[idx][:, idx].tocsr()


def solve_sparse(A, b, factor=None):
    """Direct sparse solve with a residual guard (1e-10 relative)."""
    b = np.asarray(b, dtype=float)
    try:
        lu = factor if factor is not None else spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc
    x = lu.solve(b)
    resid = np.linalg.norm(A @ x - b)
    scale = max(np.linalg.norm(b), 1e-30)
    if resid > 1e-10 * scale:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        resid = np.linalg.norm(A @ x - b)
        if resid > 1e-10 * scale:
            raise FactorizationError(
                f"sparse solve residual {resid:.3e} exceeds tolerance")
    return x


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float


def eigs_smallest_near(K, M, target: float, count: int,
                       tol: float = 1e-10, seed: int = 0,
                       max_iter: int = 400) -> list[EigenPair]:
    """`count` eigenpairs of K u = lambda M u nearest `target`.

    Deterministic shift-invert subspace iteration: fixed-seed start basis,
    exact sparse LU of (K - target*M), M-orthonormal Ritz vectors.  If the
    shift happens to hit a discrete eigenvalue the factorization is retried
    with a perturbed shift.
    """
    n = K.shape[0]
    m = min(n, count + max(4, count))
    shift = float(target)
    lu = None
    for attempt in range(4):
        try:
            lu = spla.splu(sp.csc_matrix(K - shift * M))
            break
        except RuntimeError:
            shift += (1e-8 + attempt * 1e-6) * (1.0 + abs(shift))
    if lu is None:
        raise FactorizationError("could not factor shifted operator")

    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, m))
    pairs = None
    for _ in range(max_iter):
        V = lu.solve(M @ V if sp.issparse(M) else M.dot(V))
        S = V.T @ (M @ V)
        try:
            L = cholesky(S, lower=True)
            V = solve_triangular(L, V.T, lower=True).T
        except np.linalg.LinAlgError:
            # basis collapsed; re-seed the offending directions
            V += rng.standard_normal(V.shape) * 1e-8
            continue
        H = V.T @ (K @ V)
        H = 0.5 * (H + H.T)
        theta, Q = eigh(H)
        V = V @ Q
        order = np.argsort(np.abs(theta - target))
        sel = order[:count]
        resid = []
        for idx in sel:
            r = K @ V[:, idx] - theta[idx] * (M @ V[:, idx])
            resid.append(np.linalg.norm(r))
        resid = np.asarray(resid)
        if (resid <= tol * (1.0 + np.abs(theta[sel]))).all():
            pairs = [(theta[i], V[:, i].copy(), rv)
                     for i, rv in zip(sel, resid)]
            break
    if pairs is None:
        raise ConvergenceError(
            f"eigensolver did not reach tol={tol:g} in {max_iter} iterations")
    pairs.sort(key=lambda t: t[0])
    return [EigenPair(float(v), vec, float(r)) for v, vec, r in pairs]


def gamma0_nodes_sorted(mesh: Mesh, tag: Tag = Tag.GAMMA0) -> np.ndarray:
    """Nodes on the tagged wall ordered by increasing x1."""
    nodes = mesh.boundary_nodes(tag)
    if nodes.size == 0:
        raise ValueError("mesh carries no edges with the requested tag")
    return nodes[np.argsort(mesh.vertices[nodes, 0])]


def boundary_mass_1d(x: np.ndarray) -> sp.csr_matrix:
    """Consistent 1D mass matrix for P1 functions on the sorted nodes x."""
    h = np.diff(x)
    n = x.size
    main = np.zeros(n)
    main[:-1] += h / 3.0
    main[1:] += h / 3.0
    off = h / 6.0
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@dataclass
class BoundaryTrace:
    """Sampled function of x1 on the lower wall (sorted nodes)."""

    x: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        h = np.diff(self.x)
        v = self.values
        return float(np.sum(0.5 * h * (v[:-1] + v[1:])))


def boundary_flux_gamma0(mesh: Mesh, K, M, u, lam: float, f=None,
                         tag: Tag = Tag.GAMMA0,
                         require_vanishing: bool = True) -> BoundaryTrace:
    """Recover g = du/dx2 on the lower wall from the discrete weak residual.

    The functional r = K u - lam M u - M f, restricted to wall rows, equals
    the weighted conormal flux; with outward normal -e2 on the wall,
    du/dx2 = -du/dnu, so the recovery solves M_b g = -r|wall.  With
    `require_vanishing` the input field must vanish on the wall (eigenfunction
    convention); corrector fields carry inhomogeneous wall data and disable it.
    """
    nodes = gamma0_nodes_sorted(mesh, tag)
    u = np.asarray(u, dtype=float)
    if require_vanishing and np.abs(u[nodes]).max() > 1e-10:
        raise ValueError("field does not vanish on the lower wall")
    r = K @ u - lam * (M @ u)
    if f is not None:
        r = r - M @ np.asarray(f, dtype=float)
    x = mesh.vertices[nodes, 0]
    Mb = boundary_mass_1d(x)
    g = solve_sparse(Mb, -r[nodes])
    return BoundaryTrace(x=x, values=g)


def trace_inner(Mb: sp.csr_matrix, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product of two nodal traces sharing a boundary mass."""
    return float(a @ (Mb @ b))


def energy_norms_on_triangles(mesh: Mesh, values: np.ndarray,
                              tri_mask=None) -> tuple[float, float]:
    """(seminorm |v|_H1, norm ||v||_L2) over a subset of triangles."""
    tri = mesh.triangles if tri_mask is None else mesh.triangles[tri_mask]
    p = mesh.vertices[tri]
    x = p[:, :, 0]
    y = p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2])
    v = values[tri]
    gx = np.sum(v * b, axis=1) / (2.0 * area)
    gy = np.sum(v * c, axis=1) / (2.0 * area)
    semi2 = np.sum(area * (gx ** 2 + gy ** 2))
    # exact P1 mass: |T|/12 * ((sum v)^2 + sum v^2)
    l22 = np.sum(area / 12.0 * (np.sum(v, axis=1) ** 2 + np.sum(v ** 2, axis=1)))
    return float(np.sqrt(semi2)), float(np.sqrt(l22))
