"""One-dimensional transverse-mode reduction of the corrector hierarchy.

On the limit rectangle every corrector field separates into wall cosine
modes u(x1,x2) = sum_m w_m(x2) cos(m pi (x1 + 1/2)); each coefficient
solves a two-point problem on (0, 1):

    -w'' + (m^2 pi^2 - lambda0) w = f,    w(0) = a,    w'(1) = 0.

Modes whose shifted operator is singular (the cluster's wall modes 0 and
2, where sqrt(lambda0 - m^2 pi^2) is an odd multiple of pi/2) are solved
through a bordered system that enforces orthogonality to the kernel
sin(omega x2) and returns the Lagrange multiplier, mirroring the
constrained two-dimensional solve.  The module is an independent check
of the two-dimensional corrector path: it shares no assembly or solver
code with it, only the problem statement.  It also provides smooth
spline evaluators for the outer part of the composite approximation,
where nodal interpolation of a coarse 2D field would be too rough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .limitspec import BRANCH_WALL_MODE, LAMBDA0

RESONANCE_TOL = 1e-9


def _weight(m: int) -> float:
    """Wall inner-product weight of cosine mode m."""
    return 1.0 if m == 0 else 0.5


@dataclass
class Grid1D:
    """Uniform P1 grid on (0, 1) with stiffness and mass matrices."""

    n: int
    x: np.ndarray
    K: sp.csr_matrix
    M: sp.csr_matrix


def make_grid(n: int = 3072) -> Grid1D:
    x = np.linspace(0.0, 1.0, n + 1)
    h = 1.0 / n
    main_k = np.full(n + 1, 2.0 / h)
    main_k[0] = main_k[-1] = 1.0 / h
    off_k = np.full(n, -1.0 / h)
    K = sp.diags([off_k, main_k, off_k], [-1, 0, 1], format="csr")
    main_m = np.full(n + 1, 4.0 * h / 6.0)
    main_m[0] = main_m[-1] = 2.0 * h / 6.0
    off_m = np.full(n, h / 6.0)
    M = sp.diags([off_m, main_m, off_m], [-1, 0, 1], format="csr")
    return Grid1D(n, x, K, M)


@dataclass
class ModeSolution:
    m: int
    values: np.ndarray
    slope0: float          # w'(0), variationally recovered
    mu: float              # resonance multiplier (0 for regular modes)


def solve_mode(grid: Grid1D, m: int, f_nodal: np.ndarray, a: float,
               lambda0: float = LAMBDA0) -> ModeSolution:
    """Solve -w'' + (m^2 pi^2 - lambda0) w = f, w(0)=a, w'(1)=0.

    Resonant modes get the sin(omega x) orthogonality constraint; the
    returned slope uses the variational boundary residual, so it carries
    the same superconvergence as the two-dimensional flux recovery.
    """
    c = (m * math.pi) ** 2 - lambda0
    A = (grid.K + c * grid.M).tocsr()
    rhs = grid.M @ np.asarray(f_nodal, dtype=float)
    resonant = False
    s = None
    if c < 0.0:
        omega = math.sqrt(-c)
        k = omega / math.pi - 0.5
        resonant = abs(k - round(k)) < RESONANCE_TOL
    if resonant:
        s = np.sin(math.sqrt(-c) * grid.x)
    n = grid.n
    free = np.arange(1, n + 1)
    A_red = A[free][:, free]
    b_red = rhs[free] - a * np.asarray(A[free, 0].todense()).ravel()
    if resonant:
        col = (grid.M @ s)[free]
        bordered = sp.bmat(
            [[A_red, col[:, None]], [col[None, :], None]], format="csc")
        c_red = -a * float((grid.M @ s)[0])
        sol = spla.splu(bordered).solve(np.concatenate([b_red, [c_red]]))
        w_free, mu = sol[:-1], float(sol[-1])
    else:
        w_free = spla.splu(sp.csc_matrix(A_red)).solve(b_red)
        mu = 0.0
    w = np.empty(n + 1)
    w[0] = a
    w[free] = w_free
    resid0 = float((A @ w - rhs)[0])
    if resonant:
        resid0 += mu * float((grid.M @ s)[0])
    return ModeSolution(m, w, -resid0, mu)


class ModeStack:
    """Field u(x1,x2) = sum_m spline_m(x2) cos(m pi (x1+1/2))."""

    def __init__(self, grid_x: np.ndarray, modes: dict[int, np.ndarray]):
        self._splines = {m: CubicSpline(grid_x, v) for m, v in modes.items()
                         if np.abs(v).max() > 0.0}

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(sorted(self._splines))

    def eval(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(x1, x2).shape)
        for m, spl in self._splines.items():
            out += spl(x2) * np.cos(m * math.pi * (x1 + 0.5))
        return out

    def mode_values(self, m: int, x2) -> np.ndarray:
        spl = self._splines.get(m)
        if spl is None:
            return np.zeros(np.asarray(x2, dtype=float).shape)
        return spl(np.asarray(x2, dtype=float))


@dataclass
class OracleBranch:
    """Corrector data for one branch from the 1D reduction."""

    branch: int
    wall_mode: int
    lambda1: float
    lambda2: float
    lambda3: float
    kappa1: float
    kappa2: float
    a11_tilde: dict[int, float]    # mode -> recovered wall slope of u1~
    a21_tilde: dict[int, float]
    u0: ModeStack
    u1: ModeStack
    u2: ModeStack

    @property
    def lambdas(self) -> tuple[float, float, float, float]:
        return (LAMBDA0, self.lambda1, self.lambda2, self.lambda3)


def _series_inner(a: dict[int, float], b: dict[int, float]) -> float:
    return sum(_weight(m) * a[m] * b.get(m, 0.0) for m in a)


def oracle_corrections(C: float, C_I: float, C_II: float, n: int = 3072
                       ) -> tuple[OracleBranch, OracleBranch]:
    """Run the corrector recurrence in transverse-mode space.

    Completely independent of the 2D finite element path; used as the
    oracle for eigenvalue coefficients and as the smooth outer-field
    backend for the composite approximation.
    """
    grid = make_grid(n)
    x = grid.x

    # Exact limit data per branch: wall mode, frequency, mode profile.
    freq = [2.5 * math.pi, 1.5 * math.pi]
    amp = [math.sqrt(2.0), 2.0]
    v0 = [amp[i] * np.sin(freq[i] * x) for i in range(2)]
    a01 = [{BRANCH_WALL_MODE[i]: amp[i] * freq[i]} for i in range(2)]
    G = [_series_inner(a01[i], a01[i]) for i in range(2)]
    lam1 = [-C * G[i] for i in range(2)]

    # First corrector, both branches (needed jointly for kappa1).
    w1 = []
    a11t = []
    for i in range(2):
        m = BRANCH_WALL_MODE[i]
        sol = solve_mode(grid, m, lam1[i] * v0[i], C * a01[i][m])
        w1.append(sol)
        a11t.append({m: sol.slope0})

    out = []
    for i in range(2):
        j = 1 - i
        m_i, m_j = BRANCH_WALL_MODE[i], BRANCH_WALL_MODE[j]
        kappa1 = _series_inner(a11t[i], a01[j]) / (G[i] - G[j])
        lam2 = -C * _series_inner(a11t[i], a01[i])

        u1_modes = {m_i: w1[i].values.copy()}
        if kappa1 != 0.0:
            u1_modes[m_j] = u1_modes.get(m_j, np.zeros(n + 1)) + kappa1 * v0[j]
        alpha11 = dict(a11t[i])
        if kappa1 != 0.0:
            alpha11[m_j] = alpha11.get(m_j, 0.0) + kappa1 * a01[j][m_j]

        # Second corrector: rhs lambda1*u1 + lambda2*u0, wall C*alpha11.
        u2_modes = {}
        a21t = {}
        for m, u1m in u1_modes.items():
            f = lam1[i] * u1m + (lam2 * v0[i] if m == m_i else 0.0)
            sol = solve_mode(grid, m, f, C * alpha11.get(m, 0.0))
            u2_modes[m] = sol.values
            a21t[m] = sol.slope0

        dd = {m: -(m * math.pi) ** 2 * a for m, a in a01[i].items()}
        lam3 = (-C * _series_inner(a21t, a01[i])
                + (C_II - 4.0 * C_I) * _series_inner(dd, a01[i])
                + LAMBDA0 * C_II * G[i])
        kappa2 = (-lam2 * kappa1
                  - C * _series_inner(a21t, a01[j])
                  + (C_II - 4.0 * C_I) * _series_inner(dd, a01[j])
                  ) / (lam1[i] - lam1[j])
        if kappa2 != 0.0:
            u2_modes[m_j] = u2_modes.get(m_j, np.zeros(n + 1)) + kappa2 * v0[j]

        out.append(OracleBranch(
            branch=i + 1, wall_mode=m_i,
            lambda1=lam1[i], lambda2=lam2, lambda3=lam3,
            kappa1=kappa1, kappa2=kappa2,
            a11_tilde=a11t[i], a21_tilde=a21t,
            u0=ModeStack(x, {m_i: v0[i]}),
            u1=ModeStack(x, u1_modes),
            u2=ModeStack(x, u2_modes)))
    return tuple(out)
