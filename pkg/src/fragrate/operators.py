"""Dense matrices for the fragmentation operators on a :class:`LogGrid`.

In ``xi = ln x`` the drift ``-x d/dx`` is constant-coefficient advection with
unit speed towards larger ``xi``.  It is discretised in flux form with
Fromm's upwind-biased face reconstruction (second order), a constant ghost
value ``u_{-1} = u_0`` at the left end and one-sided extrapolation at the
outflow end.  Rows where the profile tail is not resolved (``B(x) dxi`` above
``resolution_limit``) fall back to first-order upwind faces, which keeps the
discrete stationary state positive; those rows carry no measurable mass.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError
from .grid import LogGrid, WeightPair
from .kernel import KernelSpec, require_valid

__all__ = [
    "OperatorMatrix",
    "trapezoid_tail_weights",
    "assemble_fragment_plus",
    "assemble_transport",
    "assemble_T",
    "assemble_A",
    "assemble_B_op",
    "operator_norm_X_to_H",
    "operator_norm_X_to_H_exact",
    "write_operator_csv",
]

RESOLUTION_LIMIT = 0.5


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    grid: LogGrid
    entries: np.ndarray
    label: str

    def __post_init__(self):
        if self.entries.shape != (self.grid.n, self.grid.n):
            raise GridMismatchError("operator shape does not match grid")

    def __matmul__(self, g):
        return self.entries @ g

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self.grid.check_same(other.grid)
        return OperatorMatrix(self.grid, self.entries + other.entries, f"{self.label}+{other.label}")


def trapezoid_tail_weights(grid: LogGrid) -> np.ndarray:
    """Matrix ``W`` with ``int_{x_i}^{x_max} f(y) dy ~ sum_j W_ij f(x_j)``."""
    n = grid.n
    W = np.triu(np.broadcast_to(grid.x * grid.dxi, (n, n))).copy()
    W[np.arange(n), np.arange(n)] *= 0.5
    W[:, -1] *= 0.5
    W[-1, -1] = 0.0
    return W


def _fragment_plus_entries(spec: KernelSpec, grid: LogGrid) -> np.ndarray:
    x = grid.x
    W = trapezoid_tail_weights(grid)
    y = x[None, :]
    xx = x[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(y >= xx, spec.b(y, np.minimum(xx, y)), 0.0)
    return K * W


def assemble_fragment_plus(spec: KernelSpec, grid: LogGrid) -> OperatorMatrix:
    """Gain term ``(L_+ g)(x_i) = int_{x_i}^{x_max} b(y, x_i) g(y) dy``."""
    return OperatorMatrix(grid, _fragment_plus_entries(spec, grid), "L_plus")


def assemble_transport(grid: LogGrid, first_order=None) -> OperatorMatrix:
    """Matrix of ``-x d/dx`` (``-d/dxi``); rows of constants map to zero.

    ``first_order`` is an optional boolean mask over nodes selecting a
    first-order upwind face on the downstream side of those nodes.
    """
    n = grid.n
    if n < 16:
        raise DomainError("transport discretisation needs n >= 16")
    fo = np.zeros(n, dtype=bool) if first_order is None else np.asarray(first_order, dtype=bool)
    F = np.zeros((n + 1, n))
    F[0, 0] = 1.0  # ghost face carries u_0
    for i in range(n):
        F[i + 1, i] = 1.0
        if fo[i]:
            continue
        if i == n - 1:
            F[i + 1, i] += 0.5
            F[i + 1, i - 1] -= 0.5
        else:
            F[i + 1, i + 1] += 0.25
            F[i + 1, max(i - 1, 0)] -= 0.25
    D = (F[1:] - F[:-1]) / grid.dxi
    return OperatorMatrix(grid, -D, "transport")


def unresolved_rows(spec: KernelSpec, grid: LogGrid, limit: float = RESOLUTION_LIMIT) -> np.ndarray:
    return spec.rate(grid.x) * grid.dxi > limit


def assemble_T(spec: KernelSpec, grid: LogGrid, resolution_limit: float = RESOLUTION_LIMIT) -> OperatorMatrix:
    """``T = -x d/dx - 2 - B(x) + L_+`` on the grid."""
    require_valid(spec)
    transport = assemble_transport(grid, unresolved_rows(spec, grid, resolution_limit)).entries
    loss = 2.0 + spec.rate(grid.x)
    T = transport + _fragment_plus_entries(spec, grid)
    T[np.diag_indices(grid.n)] -= loss
    return OperatorMatrix(grid, T, "T")


def assemble_A(spec: KernelSpec, grid: LogGrid, delta: float, R: float, L_plus: OperatorMatrix | None = None) -> OperatorMatrix:
    """Regularising part: gains into ``x <= R`` from sizes ``y >= delta``."""
    if not 0.0 < delta < R:
        raise DomainError(f"splitting needs 0 < delta < R, got delta={delta}, R={R}")
    if L_plus is None:
        L_plus = assemble_fragment_plus(spec, grid)
    else:
        grid.check_same(L_plus.grid)
    x = grid.x
    mask = (x[:, None] <= R) & (x[None, :] >= delta)
    return OperatorMatrix(grid, np.where(mask, L_plus.entries, 0.0), "A")


def assemble_B_op(T: OperatorMatrix, A: OperatorMatrix) -> OperatorMatrix:
    """``B = T - A`` so that ``T = A + B`` holds exactly."""
    T.grid.check_same(A.grid)
    return OperatorMatrix(T.grid, T.entries - A.entries, "B_op")


def _weighted_matrix(A: OperatorMatrix, G, weights: WeightPair) -> np.ndarray:
    # M with ||A g||_H / ||g||_X = ||M u||_2 / ||u||_1 for u = w (x^m + x^M) g
    grid = A.grid
    Gv = np.asarray(getattr(G, "values", G), dtype=float)
    if np.any(Gv <= 0):
        raise DomainError("H-norm needs a strictly positive profile")
    row = np.sqrt(grid.w * grid.x / Gv)
    col = grid.w * weights.weight(grid.x)
    return row[:, None] * A.entries / col[None, :]


def operator_norm_X_to_H(A: OperatorMatrix, G, weights: WeightPair, n_samples: int = 200, seed: int = 0) -> float:
    """Lower estimate of ``sup ||A g||_H / ||g||_X``.

    The candidates are ``n_samples`` seeded random nonnegative densities and
    the dominant right singular vector of the weighted matrix.
    """
    if not np.any(A.entries):
        return 0.0
    M = _weighted_matrix(A, G, weights)
    best = 0.0
    if n_samples > 0:
        U = np.random.default_rng(seed).random((A.grid.n, n_samples))
        U /= U.sum(axis=0)
        best = float(np.max(np.linalg.norm(M @ U, axis=0)))
    _, s, vt = np.linalg.svd(M, full_matrices=False)
    return max(best, float(s[0] / np.sum(np.abs(vt[0]))))


def operator_norm_X_to_H_exact(A: OperatorMatrix, G, weights: WeightPair) -> float:
    """Exact discrete norm: the unit ball of a weighted l1 norm is spanned by
    scaled coordinate vectors, so the norm is the largest weighted column."""
    if not np.any(A.entries):
        return 0.0
    return float(np.max(np.linalg.norm(_weighted_matrix(A, G, weights), axis=0)))


def write_operator_csv(path, op: OperatorMatrix, header_lines=()) -> None:
    rows, cols = np.nonzero(op.entries)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for i, j in zip(rows, cols):
            writer.writerow([int(i), int(j), repr(float(op.entries[i, j]))])
