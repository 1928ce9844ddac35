"""Explicit time integration of ``dg/dt = Op g`` for assembled operators.

All runs use the classical four-stage Runge-Kutta method.  Because the
operator is a fixed matrix, one RK4 step is the matrix polynomial
``S = I + A + A^2/2 + A^3/6 + A^4/24`` with ``A = dt Op``; ``evolve`` forms
``S`` once, raises it to the number of steps per sample, and then advances
sample to sample with one matrix-vector (or matrix-matrix) product.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericOverflowError
from .grid import WeightPair, mass_moment, norm_H, norm_X
from .operators import OperatorMatrix

__all__ = [
    "Trajectory",
    "step_rk4",
    "rk4_step_matrix",
    "choose_time_step",
    "evolve",
    "flow_norm_X",
    "semigroup_decay_B",
]

CFL_MAX = 0.7
RATE_STEP_MAX = 1.5


@dataclass(frozen=True)
class Trajectory:
    """Sampled run of a linear flow.

    ``dist_X`` and ``dist_H`` are distances of ``g_t`` to the line spanned by
    the profile, ``g_t - mass(g_t) G``; they are ``None`` for flows recorded
    without a profile.  For batched runs ``norm_X`` has one column per initial
    datum and ``final`` is a matrix.
    """

    times: np.ndarray
    mass: Optional[np.ndarray]
    dist_X: Optional[np.ndarray]
    dist_H: Optional[np.ndarray]
    norm_X: np.ndarray
    final: np.ndarray
    dt: float
    steps_per_sample: int


def step_rk4(Op: OperatorMatrix, g, dt: float) -> np.ndarray:
    """One classical RK4 step for ``dg/dt = Op g``."""
    if not dt > 0:
        raise DomainError(f"time step must be positive, got {dt!r}")
    M = Op.entries
    g = np.asarray(g, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = M @ g
        k2 = M @ (g + 0.5 * dt * k1)
        k3 = M @ (g + 0.5 * dt * k2)
        k4 = M @ (g + dt * k3)
        out = g + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("RK4 step produced non-finite values; dt too large", time=dt)
    return out


def rk4_step_matrix(Op: OperatorMatrix, dt: float) -> np.ndarray:
    """Matrix ``S`` with ``step_rk4(Op, g, dt) == S @ g`` up to rounding."""
    A = dt * Op.entries
    A2 = A @ A
    S = A2 @ (A / 6.0 + A2 / 24.0)
    S += A2 / 2.0
    S += A
    S[np.diag_indices_from(S)] += 1.0
    return S


def _rate_bound(Op: OperatorMatrix, rate_max):
    if rate_max is not None:
        return float(rate_max)
    # without the kernel at hand, the largest diagonal loss is a safe stand-in
    return float(np.max(np.abs(np.diag(Op.entries))))


def choose_time_step(dxi: float, rate_max: float, cfl: float, sample_dt: float):
    """Return ``(dt, steps_per_sample)``.

    ``dt`` starts from ``min(cfl, 0.7) * dxi`` and ``1.5 / rate_max`` and is
    then reduced so that ``sample_dt`` is an integer number of steps.  A
    warning is emitted when the requested ``cfl`` exceeds 0.7.
    """
    if not cfl > 0 or not sample_dt > 0:
        raise DomainError("cfl and sample_dt must be positive")
    if cfl > CFL_MAX:
        warnings.warn(f"cfl={cfl} exceeds {CFL_MAX}; time step shrunk", RuntimeWarning, stacklevel=3)
    dt = min(cfl, CFL_MAX) * dxi
    if rate_max > 0 and dt * rate_max > RATE_STEP_MAX:
        dt = RATE_STEP_MAX / rate_max
    k = max(1, int(np.ceil(sample_dt / dt - 1e-12)))
    return sample_dt / k, k


def _sample_count(t_end, sample_dt):
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end!r}")
    n = int(round(t_end / sample_dt))
    if abs(n * sample_dt - t_end) > 1e-9 * max(1.0, t_end):
        raise DomainError("t_end must be a multiple of sample_dt")
    return n


def _propagator(Op, cfl, sample_dt, rate_max):
    dt, k = choose_time_step(Op.grid.dxi, _rate_bound(Op, rate_max), cfl, sample_dt)
    P = np.linalg.matrix_power(rk4_step_matrix(Op, dt), k)
    return P, dt, k


def evolve(
    Op: OperatorMatrix,
    g0,
    t_end: float,
    cfl: float,
    G,
    w: WeightPair,
    sample_dt: float = 0.1,
    rate_max: float | None = None,
) -> Trajectory:
    """Integrate ``dg/dt = Op g`` from ``g0`` and record mass and distances.

    Parameters
    ----------
    G
        Profile (``ProfileTable`` or array) the distances are measured to.
    rate_max
        Largest total fragmentation rate on the grid; enters the step bound
        ``dt * rate_max <= 1.5``.
    """
    grid = Op.grid
    Gv = np.asarray(getattr(G, "values", G), dtype=float)
    g = np.array(g0, dtype=float)
    if g.shape != (grid.n,):
        raise DomainError("initial datum length does not match grid")
    n_samples = _sample_count(t_end, sample_dt)
    P, dt, k = _propagator(Op, cfl, sample_dt, rate_max)

    times = sample_dt * np.arange(n_samples + 1)
    mass = np.empty(n_samples + 1)
    dX = np.empty(n_samples + 1)
    dH = np.empty(n_samples + 1)
    nX = np.empty(n_samples + 1)
    for s in range(n_samples + 1):
        if s:
            g = P @ g
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError(f"solution overflowed at t={times[s]:.6g}", time=float(times[s]))
        mass[s] = mass_moment(grid, g)
        e = g - mass[s] * Gv
        dX[s] = norm_X(grid, e, w)
        dH[s] = norm_H(grid, e, Gv)
        nX[s] = norm_X(grid, g, w)
    return Trajectory(times, mass, dX, dH, nX, g, dt, k)


def flow_norm_X(
    Op: OperatorMatrix,
    g0,
    t_end: float,
    cfl: float,
    w: WeightPair,
    sample_dt: float = 0.1,
    rate_max: float | None = None,
) -> Trajectory:
    """Record ``norm_X(exp(t Op) g0)``; ``g0`` may hold one datum per column."""
    grid = Op.grid
    g = np.array(g0, dtype=float)
    if g.shape[0] != grid.n or g.ndim > 2:
        raise DomainError("initial data do not match grid")
    n_samples = _sample_count(t_end, sample_dt)
    P, dt, k = _propagator(Op, cfl, sample_dt, rate_max)
    weight = grid.w * w.weight(grid.x)
    times = sample_dt * np.arange(n_samples + 1)
    nX = np.empty((n_samples + 1,) + g.shape[1:])
    for s in range(n_samples + 1):
        if s:
            g = P @ g
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError(f"solution overflowed at t={times[s]:.6g}", time=float(times[s]))
        nX[s] = weight @ np.abs(g)
    return Trajectory(times, None, None, None, nX, g, dt, k)


def semigroup_decay_B(
    B_h: OperatorMatrix,
    g0,
    t_end: float,
    cfl: float,
    w: WeightPair,
    sample_dt: float = 0.1,
    rate_max: float | None = None,
) -> Trajectory:
    """Record ``norm_X(exp(t B) g0)`` for the loss part of a splitting."""
    return flow_norm_X(B_h, g0, t_end, cfl, w, sample_dt, rate_max)
