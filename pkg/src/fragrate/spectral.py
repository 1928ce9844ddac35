"""Spectrum of the discrete operator, decay-rate fits and the consolidated audit.

The seven audit points mirror the ingredients of the abstract gap-extension
argument: a stationary state, invariance of the zero-mass subspace, a
dissipativity bound on it in ``H``, a well-posed flow, a bounded mass form on
``X``, boundedness of ``A`` from ``X`` to ``H``, and exponential decay of the
flow generated by ``B`` in ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrumError, DomainError, NumericError, WindowError
from .evolution import Trajectory, flow_norm_X, semigroup_decay_B
from .grid import LogGrid, WeightPair, inner_H, mass_moment, norm_X, project_zero_mass
from .kernel import KernelSpec
from .operators import (
    OperatorMatrix,
    assemble_A,
    assemble_B_op,
    operator_norm_X_to_H,
    operator_norm_X_to_H_exact,
)
from .profile import ProfileTable, stationarity_residual
from .splitting import SplitParams, audit_dissipativity, random_bump_sum

__all__ = [
    "eigenvalues",
    "stationary_index",
    "spectral_gap",
    "stationary_eigenvector",
    "DecayFit",
    "fit_decay_rate",
    "rayleigh_quotient",
    "RayleighReport",
    "rayleigh_samples",
    "rayleigh_dissipativity_H",
    "AuditPoint",
    "HypothesisAuditReport",
    "hypothesis_audit",
    "SpectralReport",
    "spectral_report",
]


def eigenvalues(T_h: OperatorMatrix) -> np.ndarray:
    """Full spectrum, sorted by real part then imaginary part, both descending."""
    try:
        ev = scipy.linalg.eigvals(T_h.entries, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"eigensolve failed: {exc}") from exc
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((-ev.imag, -ev.real))
    return ev[order]


def stationary_index(spectrum) -> int:
    """Index of the eigenvalue of smallest modulus."""
    spectrum = np.asarray(spectrum, dtype=complex)
    if spectrum.size == 0:
        raise DomainError("empty spectrum")
    return int(np.argmin(np.abs(spectrum)))


def spectral_gap(spectrum) -> float:
    """``-max Re(lambda)`` over all eigenvalues but the stationary one."""
    spectrum = np.asarray(spectrum, dtype=complex)
    i0 = stationary_index(spectrum)
    rest = np.delete(spectrum, i0)
    if rest.size == 0:
        raise DegenerateSpectrumError("spectrum has no mode besides the stationary one")
    top = float(np.max(rest.real))
    if top >= 0:
        raise DegenerateSpectrumError(f"non-stationary eigenvalue with real part {top:.6g} >= 0")
    return -top


def stationary_eigenvector(T_h: OperatorMatrix, lam0: complex) -> np.ndarray:
    """Mass-normalised eigenvector for the real eigenvalue ``lam0`` by inverse iteration."""
    grid = T_h.grid
    shift = float(np.real(lam0)) - 1e-6
    lu = scipy.linalg.lu_factor(T_h.entries - shift * np.eye(grid.n))
    v = np.ones(grid.n)
    for _ in range(4):
        v = scipy.linalg.lu_solve(lu, v)
        v /= np.max(np.abs(v))
    return v / mass_moment(grid, v)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    n_points: int


def fit_decay_rate(traj: Trajectory, t_lo: float, t_hi: float, which: str = "X", rel_floor: float = 1e-9) -> DecayFit:
    """Least-squares slope of ``log(distance)`` against ``t`` on ``[t_lo, t_hi]``.

    Distances must exceed ``max(1e-13, rel_floor * norm_X(g_t))``; below that
    they are dominated by the residual of the profile, not by decay.
    """
    dist = {"X": traj.dist_X, "H": traj.dist_H}.get(which)
    if which not in ("X", "H"):
        raise DomainError(f"which must be 'X' or 'H', got {which!r}")
    if dist is None:
        raise DomainError("trajectory carries no distance records")
    t = traj.times
    eps = 1e-9 * max(1.0, abs(t_hi))
    sel = (t >= t_lo - eps) & (t <= t_hi + eps)
    if np.count_nonzero(sel) < 10:
        raise WindowError(f"window [{t_lo}, {t_hi}] holds fewer than 10 samples")
    d = dist[sel]
    floor = np.maximum(1e-13, rel_floor * np.asarray(traj.norm_X)[sel])
    if np.any(d <= floor):
        raise WindowError("distance reaches the residual floor inside the fitting window")
    y = np.log(d)
    slope, intercept = np.polyfit(t[sel], y, 1)
    fit = slope * t[sel] + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, int(np.count_nonzero(sel)))


def rayleigh_quotient(T_h: OperatorMatrix, g, G) -> float:
    """``<T g, g>_H / <g, g>_H`` after projecting ``g`` onto zero mass."""
    grid = T_h.grid
    u = project_zero_mass(grid, g, G)
    return inner_H(grid, T_h @ u, u, G) / inner_H(grid, u, u, G)


@dataclass(frozen=True)
class RayleighReport:
    beta_est: float
    q_max: float
    quotients: np.ndarray
    n_used: int
    n_skipped: int

    @property
    def passed(self) -> bool:
        return bool(self.beta_est > 0)


def rayleigh_samples(grid: LogGrid, G, n_samples: int, seed: int) -> np.ndarray:
    """Seeded test densities, one per column.

    Even samples are ``G`` times a random polynomial of degree 1 to 4 in
    ``x``; odd samples are random signed log-bump sums with centres in
    ``[10 x_min, x_max / 10]``.
    """
    Gv = np.asarray(getattr(G, "values", G), dtype=float)
    x = grid.x
    out = np.empty((grid.n, n_samples))
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        if i % 2 == 0:
            coeffs = rng.normal(size=int(rng.integers(1, 5)) + 1)
            out[:, i] = Gv * np.polyval(coeffs, x)
        else:
            out[:, i] = random_bump_sum(rng, 10 * grid.x_min, grid.x_max / 10)(x)
    return out


def rayleigh_dissipativity_H(T_h: OperatorMatrix, G, n_samples: int = 500, seed: int = 0, samples=None) -> RayleighReport:
    """``beta_est = -max q(g)`` over seeded zero-mass samples.

    ``samples`` (one density per column) replaces the seeded draw.  Samples
    whose zero-mass projection vanishes are skipped.
    """
    grid = T_h.grid
    Gv = np.asarray(getattr(G, "values", G), dtype=float)
    if samples is not None:
        U = np.asarray(samples, dtype=float).reshape(grid.n, -1)
    elif n_samples <= 0:
        raise DomainError("n_samples must be positive")
    else:
        U = rayleigh_samples(grid, Gv, n_samples, seed)
    hw = grid.w * grid.x / Gv
    mass = (grid.w * grid.x) @ U
    Z = U - np.outer(Gv, mass)
    den = np.einsum("i,ij,ij->j", hw, Z, Z)
    ref = np.einsum("i,ij,ij->j", hw, U, U)
    keep = den > 1e-24 * ref
    TZ = T_h.entries @ Z[:, keep]
    q = np.einsum("i,ij,ij->j", hw, TZ, Z[:, keep]) / den[keep]
    q_max = float(np.max(q)) if q.size else np.nan
    return RayleighReport(-q_max, q_max, q, int(keep.sum()), int((~keep).sum()))


# ---------------------------------------------------------------- audit


@dataclass(frozen=True)
class AuditPoint:
    number: int
    name: str
    passed: bool
    value: float
    detail: str


@dataclass(frozen=True)
class HypothesisAuditReport:
    points: tuple

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)

    def __getitem__(self, number: int) -> AuditPoint:
        return self.points[number - 1]

    def lines(self) -> list:
        return [f"{'PASS' if p.passed else 'FAIL'}  point {p.number} ({p.name}): {p.detail}" for p in self.points]


def _bump_columns(grid, n, seed, positive=False):
    cols = []
    for i in range(n):
        b = random_bump_sum(np.random.default_rng([seed, i]), 10 * grid.x_min, grid.x_max / 10)
        v = b(grid.x)
        cols.append(np.abs(v) if positive else v)
    return np.stack(cols, axis=1)


def hypothesis_audit(
    spec: KernelSpec,
    G: ProfileTable,
    T_h: OperatorMatrix,
    params: SplitParams,
    weights: WeightPair,
    *,
    seed: int = 0,
    residual_tol: float = 1e-3,
    mass_tol: float = 5e-3,
    rayleigh_samples_n: int = 500,
    flow_samples: int = 100,
    audit_samples: int = 1000,
    growth_max: float = 10.0,
    envelope_factor: float = 1.05,
    cfl: float = 0.5,
) -> HypothesisAuditReport:
    """Check each ingredient of the gap-extension argument on one grid.

    Point 7 requires both the discrete envelope
    ``norm_X(exp(tB) g) <= 1.05 exp(a t) norm_X(g)`` on ``[0, 10]`` and the
    continuous dissipativity audit of ``B``.
    """
    grid = T_h.grid
    G.grid.check_same(grid)
    w = weights
    Gv = G.values
    rate_max = float(spec.rate(grid.x[-1]))
    points = []

    res = stationarity_residual(G, T_h, w)
    points.append(AuditPoint(1, "stationary state", bool(res < residual_tol), res, f"norm_X(T G)/norm_X(G) = {res:.3e} (< {residual_tol:g})"))

    U = rayleigh_samples(grid, Gv, 20, seed + 1)[:, ::2]
    Z = U - np.outer(Gv, (grid.w * grid.x) @ U)
    defects = np.abs((grid.w * grid.x) @ (T_h.entries @ Z)) / np.array([norm_X(grid, z, w) for z in Z.T])
    d2 = float(defects.max())
    points.append(AuditPoint(2, "zero-mass invariance", bool(d2 < mass_tol), d2, f"max |mass(T g)|/norm_X(g) = {d2:.3e} over {Z.shape[1]} zero-mass samples (< {mass_tol:g})"))

    ray = rayleigh_dissipativity_H(T_h, Gv, rayleigh_samples_n, seed)
    points.append(AuditPoint(3, "H dissipativity", ray.passed, ray.beta_est, f"beta_est = {ray.beta_est:.6g} over {ray.n_used} samples"))

    G0 = np.column_stack([_bump_columns(grid, 10, seed + 2), Gv])
    tr = flow_norm_X(T_h, G0, 10.0, cfl, w, rate_max=rate_max)
    growth = float(np.max(tr.norm_X / tr.norm_X[0]))
    points.append(AuditPoint(4, "well-posed flow", bool(np.isfinite(growth) and growth <= growth_max), growth, f"max norm_X(g_t)/norm_X(g_0) on [0, 10] = {growth:.4g} (<= {growth_max:g})"))

    c5 = float(np.max(grid.x / w.weight(grid.x)))
    Uc = _bump_columns(grid, 50, seed + 3)
    ratio = np.abs((grid.w * grid.x) @ Uc) / (grid.w * w.weight(grid.x) @ np.abs(Uc))
    ok5 = bool(c5 <= 1.0 and np.all(ratio <= c5 * (1 + 1e-12)))
    points.append(AuditPoint(5, "bounded mass form", ok5, c5, f"|mass(g)| <= {c5:.6g} norm_X(g); max sampled ratio {ratio.max():.4g}"))

    A = assemble_A(spec, grid, params.delta, params.R)
    est = operator_norm_X_to_H(A, Gv, w, seed=seed)
    est2 = operator_norm_X_to_H(A, Gv, w, seed=seed + 1)
    exact = operator_norm_X_to_H_exact(A, Gv, w)
    ok6 = bool(np.isfinite(est) and est > 0 and abs(est - est2) <= 0.1 * est and est <= exact * (1 + 1e-12))
    points.append(AuditPoint(6, "A bounded X to H", ok6, est, f"estimate {est:.4g} (seed+1: {est2:.4g}), exact discrete norm {exact:.4g}"))

    B_h = assemble_B_op(T_h, A)
    G0 = _bump_columns(grid, flow_samples, seed + 4)
    trB = semigroup_decay_B(B_h, G0, 10.0, cfl, w, rate_max=rate_max)
    env = float(np.max(trB.norm_X / (np.exp(params.a * trB.times)[:, None] * trB.norm_X[0])))
    diss = audit_dissipativity(spec, params, audit_samples, seed)
    ok7 = bool(env <= envelope_factor and diss.passed)
    points.append(AuditPoint(7, "B decay in X", ok7, env, f"envelope ratio {env:.6g} (<= {envelope_factor:g}); continuous audit {diss.summary()}"))
    return HypothesisAuditReport(tuple(points))


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    stationary_eig: complex
    stationary_distance: float
    gap: float
    fitted_rate: float
    fit_r_squared: float
    beta_est: float
    alpha_constructive: float

    @property
    def stationary_modulus(self) -> float:
        return float(abs(self.stationary_eig))


def spectral_report(
    T_h: OperatorMatrix,
    G: ProfileTable,
    weights: WeightPair,
    trajectory: Optional[Trajectory],
    C_diss: float,
    *,
    window: tuple = (2.0, 8.0),
    n_samples: int = 500,
    seed: int = 0,
) -> SpectralReport:
    """Spectrum, gap, fitted decay and the constructive rate ``min(beta, C)``."""
    grid = T_h.grid
    ev = eigenvalues(T_h)
    i0 = stationary_index(ev)
    gap = spectral_gap(ev)
    v = stationary_eigenvector(T_h, ev[i0])
    dist = norm_X(grid, v - G.values, weights) / norm_X(grid, G.values, weights)
    if trajectory is not None:
        fit = fit_decay_rate(trajectory, window[0], window[1], "X")
        rate, r2 = fit.rate, fit.r_squared
    else:
        rate, r2 = np.nan, np.nan
    beta = rayleigh_dissipativity_H(T_h, G, n_samples, seed).beta_est
    return SpectralReport(ev, complex(ev[i0]), float(dist), gap, rate, r2, beta, float(min(beta, C_diss)))
