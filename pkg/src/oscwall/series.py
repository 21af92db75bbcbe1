"""Finite cosine series on the lower wall.

Wall functions are represented as sum_m c_m cos(m pi (x1 + 1/2)) on
[-1/2, 1/2] (Neumann-side eigenbasis).  Traces of P1 fields are projected by
exact per-interval integration of the piecewise-linear interpolant against
each basis function, so series algebra (inner products, differentiation)
carries no quadrature error beyond the projection itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .femcore import BoundaryTrace

DEFAULT_MODES = 32


@dataclass(frozen=True)
class CosineSeries:
    """Coefficients c[m], m = 0..len-1, of sum c_m cos(m pi (x1+1/2))."""

    coeffs: np.ndarray

    @staticmethod
    def zeros(nmodes: int = DEFAULT_MODES) -> "CosineSeries":
        return CosineSeries(np.zeros(nmodes + 1))

    @staticmethod
    def single(mode: int, value: float,
               nmodes: int = DEFAULT_MODES) -> "CosineSeries":
        c = np.zeros(max(nmodes, mode) + 1)
        c[mode] = value
        return CosineSeries(c)

    @staticmethod
    def from_trace(trace: BoundaryTrace,
                   nmodes: int = DEFAULT_MODES) -> "CosineSeries":
        """L2-project a piecewise-linear wall trace onto the first modes."""
        x = np.asarray(trace.x, dtype=float)
        g = np.asarray(trace.values, dtype=float)
        if x.size < 2:
            raise ValueError("trace needs at least two nodes")
        u0 = x[:-1] + 0.5
        u1 = x[1:] + 0.5
        h = u1 - u0
        g0 = g[:-1]
        slope = (g[1:] - g0) / h
        coeffs = np.zeros(nmodes + 1)
        coeffs[0] = np.sum(g0 * h + slope * h * h / 2.0)
        for m in range(1, nmodes + 1):
            phi = m * math.pi
            s1 = np.sin(phi * u1)
            s0 = np.sin(phi * u0)
            c1 = np.cos(phi * u1)
            c0 = np.cos(phi * u0)
            i0 = (s1 - s0) / phi
            i1 = h * s1 / phi + (c1 - c0) / phi ** 2
            coeffs[m] = 2.0 * np.sum(g0 * i0 + slope * i1)
        return CosineSeries(coeffs)

    @property
    def nmodes(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = np.arange(len(self.coeffs))
        return np.cos(np.multiply.outer(x + 0.5, m * math.pi)) @ self.coeffs

    def second_derivative(self) -> "CosineSeries":
        m = np.arange(len(self.coeffs))
        return CosineSeries(self.coeffs * (-(m * math.pi) ** 2))

    def derivative_values(self, x) -> np.ndarray:
        """Pointwise first derivative (a sine series, evaluated directly)."""
        x = np.asarray(x, dtype=float)
        m = np.arange(len(self.coeffs))
        return -np.sin(np.multiply.outer(x + 0.5, m * math.pi)) @ (
            self.coeffs * m * math.pi)

    def inner(self, other: "CosineSeries") -> float:
        """Integral over the wall of self*other (orthogonality weights)."""
        n = min(len(self.coeffs), len(other.coeffs))
        a = self.coeffs[:n]
        b = other.coeffs[:n]
        return float(a[0] * b[0] + 0.5 * np.dot(a[1:], b[1:]))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def __add__(self, other: "CosineSeries") -> "CosineSeries":
        n = max(len(self.coeffs), len(other.coeffs))
        c = np.zeros(n)
        c[:len(self.coeffs)] += self.coeffs
        c[:len(other.coeffs)] += other.coeffs
        return CosineSeries(c)

    def __sub__(self, other: "CosineSeries") -> "CosineSeries":
        return self + (other * -1.0)

    def __mul__(self, scalar: float) -> "CosineSeries":
        return CosineSeries(self.coeffs * float(scalar))

    __rmul__ = __mul__
