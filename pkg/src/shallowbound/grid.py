"""Composite-Simpson grids on the perturbation interval and quadrature helpers.

Every sampled function in the package lives on a :class:`Grid`: a uniform
composite Simpson rule on ``[a, b]`` with ``2*panels + 1`` nodes.  Besides
plain integration, this module supplies the two less standard rules the
Nystrom discretization needs:

* cumulative integrals ``int_a^{x_i} f`` at every node (Volterra terms), and
* kernel quadrature ``int_Q K(x - t) g(t) dt`` for kernels that are smooth
  on either side of ``t = x`` but kinked or discontinuous across it.  Panels
  that contain ``x`` in their interior are integrated with a product rule
  (quadratic interpolant of ``g`` times the exact kernel on each side of
  the kink), which keeps the overall error at O(h^4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Interval",
    "Grid",
    "GridFunction",
    "Probe",
    "build_grid",
    "integrate",
    "inner",
    "cumulative_integral",
    "cumulative_weights",
    "kernel_matrix",
]

DEFAULT_PANELS = 128

# Gauss-Legendre rule used on each side of a kink inside a panel.
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class Interval:
    """The closed interval ``[a, b]`` carrying the perturbation."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"interval endpoints must be finite, got ({a}, {b})")
        if a >= b:
            raise ValueError(f"interval needs a < b, got ({a}, {b})")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def length(self) -> float:
        return self.b - self.a

    def contains(self, x, closed=True):
        x = np.asarray(x, dtype=float)
        if closed:
            return (x >= self.a) & (x <= self.b)
        return (x > self.a) & (x < self.b)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform composite Simpson grid.  Immutable; arrays are read-only."""

    interval: Interval
    nodes: np.ndarray
    weights: np.ndarray
    panel_count: int

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def step(self) -> float:
        """Node spacing (half a panel)."""
        return self.interval.length / (2 * self.panel_count)

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def sample(self, fn) -> "GridFunction":
        """Sample a callable (or constant) at the nodes."""
        if callable(fn):
            vals = fn(self.nodes)
        else:
            vals = fn
        vals = np.broadcast_to(np.asarray(vals, dtype=complex), self.nodes.shape)
        return GridFunction(self, vals)


def build_grid(interval: Interval, panels: int = DEFAULT_PANELS) -> Grid:
    """Composite Simpson grid with ``panels`` panels on ``interval``."""
    panels = int(panels)
    if panels < 1:
        raise ValueError("panels must be >= 1")
    n = 2 * panels + 1
    nodes = np.linspace(interval.a, interval.b, n)
    h = interval.length / (2 * panels)
    weights = np.full(n, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return Grid(interval, nodes, weights, panels)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples of a function supported on the grid interval.

    Holds a reference to its grid.  Calling it evaluates the piecewise
    quadratic (per Simpson panel) interpolant, extended by zero outside
    the interval.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != self.grid.nodes.shape:
            raise ValueError(
                f"expected {self.grid.n} samples, got shape {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        grid = self.grid
        out = np.zeros(x.shape, dtype=complex)
        inside = grid.interval.contains(x)
        if not inside.any():
            return out
        xi = x[inside]
        span = 2 * grid.step
        p = np.clip(((xi - grid.interval.a) // span).astype(int), 0, grid.panel_count - 1)
        t0 = grid.nodes[2 * p]
        s = (xi - t0) / grid.step  # local coordinate in [0, 2]
        f0, f1, f2 = (self.values[2 * p + j] for j in range(3))
        out[inside] = (f0 * (s - 1) * (s - 2) / 2 - f1 * s * (s - 2)
                       + f2 * s * (s - 1) / 2)
        return out

    def __add__(self, other):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _same_grid(f, g):
    if f.grid is not g.grid:
        raise ValueError("grid functions live on different grids")


@dataclass(frozen=True)
class Probe:
    """A function known together with its first two derivatives.

    Each evaluator maps an array of abscissae to complex values.  This is
    what a perturbation operator consumes.
    """

    value_at: Callable[[np.ndarray], np.ndarray]
    d1_at: Callable[[np.ndarray], np.ndarray]
    d2_at: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def constant(cls, c=1.0):
        def value(x):
            return np.full(np.shape(x), c, dtype=complex)

        def zero(x):
            return np.zeros(np.shape(x), dtype=complex)

        return cls(value, zero, zero)

    @classmethod
    def from_callables(cls, f, df, d2f):
        def wrap(fn):
            return lambda x: np.asarray(fn(np.asarray(x, dtype=float)), dtype=complex) * np.ones(np.shape(x))
        return cls(wrap(f), wrap(df), wrap(d2f))

    def sample(self, x):
        """Return ``(u, u', u'')`` at ``x``."""
        return self.value_at(x), self.d1_at(x), self.d2_at(x)


def integrate(f: GridFunction) -> complex:
    """Simpson integral of ``f`` over the grid interval."""
    return complex(np.dot(f.grid.weights, f.values))


def inner(f: GridFunction, g: GridFunction) -> complex:
    """Weighted L2 pairing ``sum_i w_i conj(f_i) g_i``."""
    _same_grid(f, g)
    return complex(np.dot(f.grid.weights, np.conj(f.values) * g.values))


# -- cumulative integration (Volterra terms) --------------------------------

def cumulative_weights(grid: Grid) -> np.ndarray:
    """Lower-triangular ``C`` with ``(C @ f)[i] ~ int_a^{x_i} f``.

    Even nodes close a whole number of Simpson panels.  At a midpanel node
    the composite rule up to the panel start is completed by the 3-point
    rule for the first half of the panel (weights 5/12, 8/12, -1/12 in
    units of the node step), so row ``2p+1`` reaches one column past the
    diagonal.
    """
    n, h = grid.n, grid.step
    C = np.zeros((n, n))
    simpson = np.array([1.0, 4.0, 1.0]) * h / 3.0
    half = np.array([5.0, 8.0, -1.0]) * h / 12.0
    for p in range(grid.panel_count):
        i0 = 2 * p
        C[i0 + 1] = C[i0]
        C[i0 + 1, i0:i0 + 3] += half
        C[i0 + 2] = C[i0]
        C[i0 + 2, i0:i0 + 3] += simpson
    return C


def cumulative_integral(f: GridFunction) -> GridFunction:
    """``int_a^{x_i} f`` at every node, same rule as :func:`cumulative_weights`."""
    grid, v, h = f.grid, f.values, f.grid.step
    panels = (v[0:-2:2] + 4 * v[1:-1:2] + v[2::2]) * h / 3.0
    out = np.zeros(grid.n, dtype=complex)
    out[2::2] = np.cumsum(panels)
    out[1::2] = out[0:-2:2] + (5 * v[0:-2:2] + 8 * v[1:-1:2] - v[2::2]) * h / 12.0
    return GridFunction(grid, out)


# -- kernel quadrature -------------------------------------------------------

def _panel_position(grid: Grid, x: np.ndarray):
    """For each ``x``: panels fully left, first panel fully right."""
    a, span = grid.interval.a, 2 * grid.step
    s = (x - a) / span
    tol = 1e-12
    n_left = np.clip(np.floor(s + tol), 0, grid.panel_count).astype(int)
    first_right = np.clip(np.ceil(s - tol), 0, grid.panel_count).astype(int)
    return n_left, first_right


def kernel_matrix(grid: Grid, x, kernel) -> np.ndarray:
    """Matrix ``K`` with ``K @ g ~ int_Q kernel(|x - t|, sign(x - t)) g(t) dt``.

    Parameters
    ----------
    grid : Grid
        Quadrature grid for the ``t`` variable.
    x : array_like
        Evaluation points (anywhere on the real line).
    kernel : callable
        ``kernel(r, side)`` with ``r >= 0`` and ``side = +1`` for source
        points left of ``x`` (``t < x``), ``-1`` for the right.  Must be
        smooth in ``r`` for each fixed side.

    Returns
    -------
    ndarray, shape (len(x), grid.n), complex
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t, w, P = grid.nodes, grid.weights, grid.panel_count
    h = grid.step

    panel_w = np.zeros((P, grid.n))
    idx = np.arange(P)
    panel_w[idx, 2 * idx] = h / 3
    panel_w[idx, 2 * idx + 1] = 4 * h / 3
    panel_w[idx, 2 * idx + 2] = h / 3
    cum = np.vstack([np.zeros(grid.n), np.cumsum(panel_w, axis=0)])

    n_left, first_right = _panel_position(grid, x)
    WL = cum[n_left]
    WR = w[None, :] - cum[first_right]

    r = np.abs(x[:, None] - t[None, :])
    K = kernel(r, 1.0) * WL + kernel(r, -1.0) * WR
    K = np.asarray(K, dtype=complex)

    rows = np.nonzero(first_right > n_left)[0]
    if rows.size:
        p = n_left[rows]
        xr = x[rows]
        t0 = t[2 * p]
        t2 = t[2 * p + 2]
        corr = np.zeros((rows.size, 3), dtype=complex)
        for lo, hi, side in ((t0, xr, 1.0), (xr, t2, -1.0)):
            half = (hi - lo) / 2
            tau = (lo + hi)[:, None] / 2 + half[:, None] * _GAUSS_X[None, :]
            gw = half[:, None] * _GAUSS_W[None, :]
            kv = kernel(np.abs(xr[:, None] - tau), side) * gw
            s = (tau - t0[:, None]) / h
            basis = ((s - 1) * (s - 2) / 2, -s * (s - 2), s * (s - 1) / 2)
            for j in range(3):
                corr[:, j] += np.sum(kv * basis[j], axis=1)
        for j in range(3):
            K[rows, 2 * p + j] += corr[:, j]
    return K
