"""Spectrum of the limit rectangle and the double-eigenvalue cluster.

The limit problem on (-1/2, 1/2) x (0, 1) has Dirichlet data on the lower
wall and natural (Neumann) data on the other three sides; its eigenvalues
are k^2 pi^2 + (j+1/2)^2 pi^2 with separated eigenfunctions.  The value
6.25 pi^2 is double: modes (k,j) = (0,2) and (2,1).  This module provides
the closed-form spectrum, the finite-element route to the same cluster, and
the diagonalization of the cluster's wall-flux Gram form that selects the
branch basis used by the perturbation recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import femcore
from .femcore import BoundaryTrace, EigenPair
from .meshgen import Mesh, Tag
from .series import DEFAULT_MODES, CosineSeries

PI = math.pi
LAMBDA0 = 6.25 * PI ** 2
#: wall cosine mode carried by each branch trace (constant / second mode)
BRANCH_WALL_MODE = (0, 2)
#: exact diagonal of the wall-flux Gram form after branch alignment
G_EXACT = (12.5 * PI ** 2, 4.5 * PI ** 2)


class DegenerateClusterError(RuntimeError):
    """Raised when the wall-flux form has (numerically) equal diagonal."""


@dataclass(frozen=True)
class RectMode:
    """Separated eigenmode of the limit rectangle."""

    k: int
    j: int

    @property
    def value(self) -> float:
        return (self.k ** 2 + (self.j + 0.5) ** 2) * PI ** 2

    @property
    def amp(self) -> float:
        return 1.0 if self.k == 0 else math.sqrt(2.0)

    def eval(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return (self.amp * np.cos(self.k * PI * (x1 + 0.5))
                * math.sqrt(2.0) * np.sin((self.j + 0.5) * PI * x2))

    def wall_flux_series(self, nmodes: int = DEFAULT_MODES) -> CosineSeries:
        """du/dx2 on the lower wall as a cosine series (single mode k)."""
        value = self.amp * math.sqrt(2.0) * (self.j + 0.5) * PI
        return CosineSeries.single(self.k, value, nmodes)


def analytic_rectangle_spectrum(kmax: int, jmax: int) -> list[RectMode]:
    """All separated modes with k <= kmax, j <= jmax, sorted by eigenvalue."""
    modes = [RectMode(k, j) for k in range(kmax + 1) for j in range(jmax + 1)]
    modes.sort(key=lambda m: m.value)
    return modes


#: the two members of the double cluster at 6.25 pi^2, branch order
CLUSTER_MODES = (RectMode(0, 2), RectMode(2, 1))


@dataclass
class EigenCluster:
    """Double eigenvalue cluster with its diagonalized wall-flux basis."""

    lambda0: float
    values: tuple[float, float]
    basis: np.ndarray              # (num_vertices, 2), M-orthonormal
    mesh: Mesh
    K: object
    M: object
    backend: str
    G: np.ndarray | None = None
    rotation: np.ndarray | None = None
    gap: float | None = None
    traces: list[BoundaryTrace] = field(default_factory=list)
    series: list[CosineSeries] = field(default_factory=list)

    def mass_gram(self) -> np.ndarray:
        return self.basis.T @ (self.M @ self.basis)


def solve_limit_eigen(mesh: Mesh, target: float = LAMBDA0, count: int = 6,
                      seed: int = 0):
    """Eigenpairs of the limit problem nearest `target`.

    Returns (pairs, K, M) with full-length M-orthonormal eigenvectors
    (zero on the lower wall).
    """
    K, M = femcore.assemble(mesh)
    free, fixed = femcore.dirichlet_split(mesh, Tag.GAMMA0)
    Kr = femcore.restrict(K, free)
    Mr = femcore.restrict(M, free)
    reduced = femcore.eigs_smallest_near(Kr, Mr, target, count, seed=seed)
    pairs = []
    for rp in reduced:
        vec = np.zeros(mesh.num_vertices)
        vec[free] = rp.vector
        pairs.append(EigenPair(rp.value, vec, rp.residual))
    return pairs, K, M


def find_double_cluster(pairs: list[EigenPair], cluster_tol: float = 1e-2,
                        target: float | None = None) -> list[EigenPair]:
    """Select the two members of a double eigenvalue from `pairs`.

    The tolerance window is relative: values within
    cluster_tol*(1+|center|) of each other count as one cluster.  Exactly
    two values must fall in the window, otherwise a "no double cluster"
    error is raised.
    """
    if target is None:
        target = float(np.median([p.value for p in pairs]))
    window = cluster_tol * (1.0 + abs(target))
    inside = [p for p in pairs if abs(p.value - target) <= window]
    if len(inside) != 2:
        raise ValueError(
            f"no double cluster: {len(inside)} eigenvalues within "
            f"{window:.3e} of {target:.6f}")
    inside.sort(key=lambda p: p.value)
    return inside


def rotation_from_gram(G: np.ndarray, gap_tol: float = 1e-3) -> np.ndarray:
    """Rotation (+column swap) diagonalizing the symmetric 2x2 form G.

    The rotation angle is folded into [-pi/4, pi/4] (ties resolve to the
    identity); columns are ordered so the first diagonal entry dominates.
    Raises DegenerateClusterError when the diagonalized entries coincide
    relative to gap_tol.
    """
    G = np.asarray(G, dtype=float)
    g12 = 0.5 * (G[0, 1] + G[1, 0])
    num = 2.0 * g12
    den = G[0, 0] - G[1, 1]
    scale = np.abs(G).max()
    if abs(num) <= 1e-14 * max(scale, 1.0):
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(num, den)
        if theta > PI / 4:
            theta -= PI / 2
        elif theta < -PI / 4:
            theta += PI / 2
    cs, sn = math.cos(theta), math.sin(theta)
    R = np.array([[cs, -sn], [sn, cs]])
    D = R.T @ G @ R
    tracesum = D[0, 0] + D[1, 1]
    gap = abs(D[0, 0] - D[1, 1]) / abs(tracesum)
    if gap < gap_tol:
        raise DegenerateClusterError(
            f"boundary-form gap {gap:.3e} below threshold {gap_tol:.1e}: "
            "cluster is degenerate")
    if D[0, 0] < D[1, 1]:
        R = R @ np.array([[0.0, 1.0], [1.0, 0.0]])
    return R


def diagonalize_boundary_form(cluster: EigenCluster, gap_tol: float = 1e-3,
                              nmodes: int = DEFAULT_MODES) -> EigenCluster:
    """Diagonalize the wall-flux Gram form of the cluster in place.

    Computes the two wall fluxes, their Gram matrix under the wall mass,
    rotates the basis so the form is diagonal with descending entries, and
    fixes signs so each branch's dominant wall cosine mode has a positive
    coefficient.  Fills G, rotation, gap, traces and series.
    """
    mesh = cluster.mesh
    if cluster.backend == "analytic":
        raw_series = [m.wall_flux_series(nmodes) for m in CLUSTER_MODES]
        nodes = femcore.gamma0_nodes_sorted(mesh, Tag.GAMMA0)
        xw = mesh.vertices[nodes, 0]
        raw_traces = [BoundaryTrace(xw, s(xw)) for s in raw_series]
        tvals = np.column_stack([t.values for t in raw_traces])
        Mb = femcore.boundary_mass_1d(xw)
    else:
        raw_traces = []
        for lam, vec in zip(cluster.values, cluster.basis.T):
            tr = femcore.boundary_flux_gamma0(mesh, cluster.K, cluster.M,
                                              vec, lam)
            raw_traces.append(tr)
        xw = raw_traces[0].x
        Mb = femcore.boundary_mass_1d(xw)
        tvals = np.column_stack([t.values for t in raw_traces])
        raw_series = [CosineSeries.from_trace(t, nmodes) for t in raw_traces]

    G = tvals.T @ (Mb @ tvals)
    R = rotation_from_gram(G, gap_tol)

    # sign alignment: positive dominant wall mode per branch
    tvals = tvals @ R
    coeff = np.column_stack([s.coeffs for s in raw_series]) @ R
    for col, mode in enumerate(BRANCH_WALL_MODE):
        if coeff[mode, col] < 0.0:
            R[:, col] *= -1.0
            tvals[:, col] *= -1.0
            coeff[:, col] *= -1.0

    cluster.basis = cluster.basis @ R
    cluster.rotation = R
    cluster.G = R.T @ G @ R
    cluster.gap = abs(cluster.G[0, 0] - cluster.G[1, 1]) / \
        abs(cluster.G[0, 0] + cluster.G[1, 1])
    cluster.traces = [BoundaryTrace(xw, tvals[:, 0]),
                      BoundaryTrace(xw, tvals[:, 1])]
    cluster.series = [CosineSeries(coeff[:, 0].copy()),
                      CosineSeries(coeff[:, 1].copy())]
    return cluster


def analytic_double_cluster(mesh: Mesh,
                            nmodes: int = DEFAULT_MODES) -> EigenCluster:
    """Cluster built from the closed-form modes interpolated on `mesh`.

    The interpolated basis is symmetrically M-orthonormalized; eigenvalue
    and wall fluxes stay exact.
    """
    K, M = femcore.assemble(mesh)
    B = np.column_stack([m.eval(mesh.vertices[:, 0], mesh.vertices[:, 1])
                         for m in CLUSTER_MODES])
    S = B.T @ (M @ B)
    w, Q = np.linalg.eigh(S)
    B = B @ (Q @ np.diag(w ** -0.5) @ Q.T)
    cluster = EigenCluster(lambda0=LAMBDA0, values=(LAMBDA0, LAMBDA0),
                           basis=B, mesh=mesh, K=K, M=M, backend="analytic")
    return diagonalize_boundary_form(cluster, nmodes=nmodes)


def fem_double_cluster(mesh: Mesh, cluster_tol: float = 1e-2,
                       seed: int = 0,
                       nmodes: int = DEFAULT_MODES) -> EigenCluster:
    """Cluster found by an actual eigensolve of the limit problem."""
    pairs, K, M = solve_limit_eigen(mesh, LAMBDA0, count=6, seed=seed)
    two = find_double_cluster(pairs, cluster_tol, target=LAMBDA0)
    basis = np.column_stack([p.vector for p in two])
    cluster = EigenCluster(lambda0=float(np.mean([p.value for p in two])),
                           values=(two[0].value, two[1].value),
                           basis=basis, mesh=mesh, K=K, M=M, backend="fem")
    return diagonalize_boundary_form(cluster, nmodes=nmodes)


def limit_cluster(mesh: Mesh, backend: str = "analytic",
                  **kwargs) -> EigenCluster:
    if backend == "analytic":
        return analytic_double_cluster(mesh, **kwargs)
    if backend == "fem":
        return fem_double_cluster(mesh, **kwargs)
    raise ValueError(f"unknown cluster backend {backend!r}")
