"""Logarithmic grids, weighted norms and mass functionals.

Densities are plain 1-d numpy arrays sampled at the nodes of a
:class:`LogGrid`.  Integrals over ``(0, inf)`` are approximated by the
trapezoid rule in ``xi = ln x`` on the truncated interval
``[x_min, x_max]``, so that ``int f(x) dx ~ sum_i w_i f(x_i)`` with
``w_i = x_i * dxi`` and half weights at both ends.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridMismatchError

__all__ = [
    "LogGrid",
    "WeightPair",
    "make_grid",
    "default_x_max",
    "mass_moment",
    "norm_X",
    "norm_H",
    "inner_H",
    "embedding_constant",
    "project_zero_mass",
    "parse_initial",
    "sample_initial",
    "write_density_csv",
    "read_density_csv",
]


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid in ``ln x`` on ``[x_min, x_max]`` with ``n`` nodes."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise DomainError("grid bounds must be finite")
        if not 0.0 < self.x_min < self.x_max:
            raise DomainError(f"grid needs 0 < x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"grid needs an integer n >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @cached_property
    def xi(self) -> np.ndarray:
        xi = np.linspace(np.log(self.x_min), np.log(self.x_max), self.n)
        xi.setflags(write=False)
        return xi

    @cached_property
    def dxi(self) -> float:
        return (np.log(self.x_max) - np.log(self.x_min)) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.exp(self.xi)
        # pin the end points exactly
        x[0], x[-1] = self.x_min, self.x_max
        x.setflags(write=False)
        return x

    @cached_property
    def w(self) -> np.ndarray:
        w = self.x * self.dxi
        w[0] *= 0.5
        w[-1] *= 0.5
        w.setflags(write=False)
        return w

    def check_same(self, other: "LogGrid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")

    def describe(self) -> str:
        return f"x_min={self.x_min:.6g} x_max={self.x_max:.6g} n={self.n}"


def make_grid(x_min: float, x_max: float, n: int) -> LogGrid:
    return LogGrid(float(x_min), float(x_max), n)


def default_x_max(spec, level: float = 50.0) -> float:
    """Upper truncation where ``Lambda(x_max) = level``.

    For the kernel ``b = 2/x^(1-gamma)`` and ``gamma = 1`` this is ``x_max = 50``;
    other kernels get the same depth into the exponential tail of the profile.
    """
    return float((level * spec.gamma / spec.c_h) ** (1.0 / spec.gamma))


@dataclass(frozen=True)
class WeightPair:
    """Exponents of the weight ``x^m + x^M`` with ``1/2 < m < 1 < M < 2``."""

    m: float
    M: float

    def __post_init__(self):
        if not 0.5 < self.m < 1.0:
            raise DomainError(f"weight exponent m must lie in (1/2, 1), got {self.m!r}")
        if not 1.0 < self.M < 2.0:
            raise DomainError(f"weight exponent M must lie in (1, 2), got {self.M!r}")

    def weight(self, x):
        x = np.asarray(x, dtype=float)
        return x**self.m + x**self.M


def _values(G):
    return np.asarray(getattr(G, "values", G), dtype=float)


def mass_moment(grid: LogGrid, g) -> float:
    """``int x g(x) dx``; the same formula serves on both weighted spaces."""
    return float(np.dot(grid.w * grid.x, g))


def norm_X(grid: LogGrid, g, weights: WeightPair) -> float:
    """``int (x^m + x^M) |g| dx``."""
    return float(np.dot(grid.w * weights.weight(grid.x), np.abs(g)))


def _h_weight(grid, G):
    Gv = _values(G)
    if Gv.shape != (grid.n,):
        raise GridMismatchError("profile length does not match grid")
    if np.any(Gv <= 0):
        raise DomainError("H-norm needs a strictly positive profile")
    return grid.w * grid.x / Gv


def inner_H(grid: LogGrid, u, v, G) -> float:
    """``int x u v / G dx``."""
    return float(np.dot(_h_weight(grid, G) * u, v))


def norm_H(grid: LogGrid, g, G) -> float:
    """``(int x g^2 / G dx)^(1/2)``."""
    g = np.asarray(g, dtype=float)
    return float(np.sqrt(np.dot(_h_weight(grid, G), g * g)))


def embedding_constant(grid: LogGrid, G, weights: WeightPair) -> float:
    """Cauchy-Schwarz constant with ``norm_X(g) <= C * norm_H(g)`` on the grid."""
    x = grid.x
    f = x ** (weights.m - 0.5) + x ** (weights.M - 0.5)
    return float(np.sqrt(np.dot(grid.w * f * f, _values(G))))


def project_zero_mass(grid: LogGrid, g, G) -> np.ndarray:
    """Return ``g - mass(g) * G``, the component of ``g`` with zero mass."""
    Gv = _values(G)
    g = np.asarray(g, dtype=float)
    return g - mass_moment(grid, g) * Gv


def parse_initial(text: str):
    """Parse ``"bump:1:0.2"`` into ``("bump", (1.0, 0.2))``."""
    parts = [p.strip() for p in str(text).split(":")]
    kind = parts[0]
    try:
        params = tuple(float(p) for p in parts[1:])
    except ValueError as exc:
        raise DomainError(f"cannot parse initial condition {text!r}") from exc
    return kind, params


def _cell_overlap(grid: LogGrid, lo: float, hi: float) -> np.ndarray:
    # fraction of each dual cell [xi_i - dxi/2, xi_i + dxi/2] inside [lo, hi]
    half = 0.5 * grid.dxi
    left = np.maximum(grid.xi - half, grid.xi[0])
    right = np.minimum(grid.xi + half, grid.xi[-1])
    inter = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
    return inter / (right - left)


def sample_initial(kind, grid: LogGrid, normalize_mass: bool = True, profile=None) -> np.ndarray:
    """Sample an initial density.

    ``kind`` is ``("bump", (center, width))``, ``("scaled_profile", (lam,))``,
    ``("indicator", (a, b))`` or the equivalent ``"name:p1:p2"`` string.  A bump
    is a Gaussian in ``ln x`` with standard deviation ``width``; an indicator is
    sampled by cell fractions so its moments are second-order accurate.
    """
    if isinstance(kind, str):
        kind = parse_initial(kind)
    name, params = kind
    x = grid.x
    if name == "bump":
        if len(params) != 2:
            raise DomainError("bump needs center and width")
        center, width = params
        if not (grid.x_min <= center <= grid.x_max) or width <= 0:
            raise DomainError(f"bump({center}, {width}) outside grid support")
        g = np.exp(-0.5 * ((np.log(x) - np.log(center)) / width) ** 2)
    elif name == "scaled_profile":
        if len(params) != 1 or params[0] <= 0:
            raise DomainError("scaled_profile needs one positive scale")
        if profile is None:
            raise DomainError("scaled_profile needs a profile")
        lam = params[0]
        g = lam**2 * profile(lam * x)
    elif name == "indicator":
        if len(params) != 2:
            raise DomainError("indicator needs two end points")
        a, b = params
        if not (grid.x_min <= a < b <= grid.x_max):
            raise DomainError(f"indicator({a}, {b}) outside grid support")
        g = _cell_overlap(grid, np.log(a), np.log(b))
    else:
        raise DomainError(f"unknown initial condition {name!r}")
    g = np.asarray(g, dtype=float)
    if not np.any(g > 0):
        raise DomainError(f"initial condition {name}{params} has empty support on the grid")
    if normalize_mass:
        g = g / mass_moment(grid, g)
    return g


def write_density_csv(path, grid: LogGrid, g, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "value"])
        for xi, v in zip(grid.x, g):
            writer.writerow([repr(float(xi)), repr(float(v))])


def read_density_csv(path):
    xs, vs = [], []
    with open(path) as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        next(rows)
        for x, v in rows:
            xs.append(float(x))
            vs.append(float(v))
    return np.array(xs), np.array(vs)
