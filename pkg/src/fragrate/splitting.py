"""Constructive choice of the splitting constants and the X-dissipativity audit.

``T = A + B`` where ``A`` keeps the gains into sizes ``x <= R`` coming from
sizes ``y >= delta``.  The loss part ``B`` is then dissipative in
``X = L^1(x^m + x^M)``: for smooth real ``g``

    int sign(g) (B g) (x^m + x^M) dx <= -C_diss * norm_X(g).

The audit evaluates the left side in closed form for the local terms (test
functions carry analytic derivatives) and by direct quadrature of the two
remainder integrals, on a dedicated fine log grid whose segments break at
``delta`` and ``R``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, SelectionError
from .kernel import Check, KernelSpec, p_moment, require_valid
from .profile import explicit_normalizer

__all__ = [
    "SplitParams",
    "select_parameters",
    "closing_margin",
    "closing_margin_loose",
    "check_split_invariants",
    "BumpSum",
    "ExplicitProfileFunction",
    "random_bump_sum",
    "AuditGrid",
    "make_audit_grid",
    "dissipativity_functional",
    "DissipativityAudit",
    "audit_dissipativity",
    "BoundChain",
    "bound_chain_report",
]

DELTA_MARGIN = 0.99
R0_MARGIN = 1.005
M_BUDGET = 0.98
R_MARGIN = 1.2
M_BISECTIONS = 30
R_SEARCH_MAX = 1e12


@dataclass(frozen=True)
class SplitParams:
    m: float
    M: float
    delta: float
    R0: float
    R: float
    a: float
    C_diss: float
    provenance: dict = field(default_factory=dict, compare=False)

    def with_R(self, R: float, note: str = "user") -> "SplitParams":
        prov = dict(self.provenance, R=note)
        return SplitParams(self.m, self.M, self.delta, self.R0, R, self.a, self.C_diss, prov)


def _budget(m):
    return (1.0 - m) / 4.0


def closing_margin(spec: KernelSpec, m: float, M: float, x):
    """Pointwise margin of the large-size inequality, divided by ``x^M``.

    Nonnegative at ``x`` iff

        ((1 - p_M) B(x) - (M - 1)) x^M - ((m - 1) + (p_m - 1) B(x)) x^m >= x^M,

    which is what a mass element at size ``x > R`` needs for the remainder
    gains into ``(R, inf)`` to be absorbed.
    """
    x = np.asarray(x, dtype=float)
    B = spec.rate(x)
    pm, pM = p_moment(spec, m), p_moment(spec, M)
    return (1.0 - pM) * B - (M - 1.0) - ((m - 1.0) + (pm - 1.0) * B) * x ** (m - M) - 1.0


def closing_margin_loose(spec: KernelSpec, m: float, M: float, x):
    """Margin of ``(B(x)(1 - p_M) - M + 1) x^M - p_m x^m >= x^M`` over ``x^M``.

    This variant omits the factor ``B(x)`` on the ``p_m x^m`` gain; it is kept
    because parameter tables are commonly quoted against it.
    """
    x = np.asarray(x, dtype=float)
    B = spec.rate(x)
    pm, pM = p_moment(spec, m), p_moment(spec, M)
    return B * (1.0 - pM) - M + 1.0 - pm * x ** (m - M) - 1.0


def _first_root(f, lo, hi):
    # smallest point past which f stays >= 0, assuming a single sign change
    if f(hi) < 0:
        raise SelectionError(f"closing inequality has no solution below {hi:g}")
    if f(lo) >= 0:
        return lo
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < 1e-13:
            break
    return hi


def _max_M(m, R0, budget):
    # largest M in (1, 2) with (M - 1) R0^(M - m) <= budget
    def ok(M):
        return (M - 1.0) * R0 ** (M - m) <= budget

    lo, hi = 1.0, 2.0
    if ok(hi):
        return np.nextafter(2.0, 1.0)
    for _ in range(M_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def select_parameters(spec: KernelSpec, m: float, M: float | None = None) -> SplitParams:
    """Choose ``delta, R0, M, R`` and the dissipation constant for weight exponent ``m``.

    ``M`` defaults to the largest value allowed by ``(M - 1) R0^(M - m) <= 0.98 (1 - m)/4``
    (found by bisection); a user value is checked against the same bound.
    ``R`` is 1.2 times the larger root of the two closing inequalities, so
    both hold on ``(R, inf)``.
    """
    if not 0.5 < m < 1.0:
        raise DomainError(f"m must lie in (1/2, 1), got {m!r}")
    require_valid(spec)
    g = spec.gamma
    q = _budget(m)
    pm = p_moment(spec, m)
    bM = spec.b_max
    delta = DELTA_MARGIN * min((q / (pm * bM)) ** (1.0 / g), (q / bM) ** (1.0 / g), 1.0)
    R0 = R0_MARGIN * (2.0 / spec.c_h) ** (1.0 / g)
    if M is None:
        M = _max_M(m, R0, M_BUDGET * q)
        M_source = "selected"
    else:
        M = float(M)
        if not 1.0 < M < 2.0:
            raise DomainError(f"M must lie in (1, 2), got {M!r}")
        if (M - 1.0) * R0 ** (M - m) > q:
            raise DomainError(f"M={M} violates (M - 1) R0^(M - m) <= (1 - m)/4 at R0={R0:.6g}")
        M_source = "user"
    lo = max(R0, 1.0)
    root = _first_root(lambda x: closing_margin(spec, m, M, x), lo, R_SEARCH_MAX)
    root_loose = _first_root(lambda x: closing_margin_loose(spec, m, M, x), lo, R_SEARCH_MAX)
    R = float(R_MARGIN * max(root, root_loose))
    C = min(q / (1.0 + R0 ** (M - m)), 1.0 / (1.0 + R0 ** (m - M)))
    prov = {
        "M": M_source,
        "R": "selected",
        "delta_margin": DELTA_MARGIN,
        "R0_margin": R0_MARGIN,
        "M_budget": M_BUDGET,
        "R_margin": R_MARGIN,
        "R_root": float(root),
        "R_root_loose": float(root_loose),
        "delta_bound": "b_max",
    }
    return SplitParams(m, M, delta, R0, R, -C, C, prov)


def check_split_invariants(spec: KernelSpec, params: SplitParams, n_points: int = 1000) -> list:
    """Re-evaluate every defining inequality of ``params`` directly.

    Conditions on half-lines are sampled at ``n_points`` log-spaced sizes
    spanning six decades past their left end; the sampled functions are
    monotone or eventually dominated by ``B(x)`` beyond that range.
    """
    m, M, d, R0, R = params.m, params.M, params.delta, params.R0, params.R
    q = _budget(m)
    pm = p_moment(spec, m)
    checks = []
    ok = 0.5 < m < 1.0 < M < 2.0
    checks.append(Check("weight exponents", ok, f"m={m:.6g}, M={M:.6g}"))
    ok = bool(0.0 < d < 1.0 < R and d < R0 < R)
    checks.append(Check("ordering", ok, f"delta={d:.6g}, R0={R0:.6g}, R={R:.6g}"))
    s1 = pm * spec.b_max * d**spec.gamma
    s2 = spec.b_max * d**spec.gamma
    checks.append(Check("small sizes", bool(s1 < q and s2 < q), f"p_m b_max delta^g={s1:.6g}, b_max delta^g={s2:.6g}, (1-m)/4={q:.6g}"))
    xs = np.geomspace(R0, R0 * 1e6, n_points)
    minB = float(np.min(spec.rate(xs)))
    checks.append(Check("rate above 2", bool(minB > 2.0 > M), f"min B on [R0, 1e6 R0] = {minB:.6g}"))
    lhs = (M - 1.0) * R0 ** (M - m)
    checks.append(Check("exponent budget", bool(lhs <= q), f"(M-1) R0^(M-m) = {lhs:.6g} <= {q:.6g}"))
    xs = np.geomspace(R, R * 1e6, n_points)
    loose = float(np.min(closing_margin_loose(spec, m, M, xs)))
    checks.append(Check("closing inequality", bool(loose >= 0), f"min margin on [R, 1e6 R] = {loose:.6g}"))
    tight = float(np.min(closing_margin(spec, m, M, xs)))
    checks.append(Check("closing inequality with rate factor", bool(tight >= 0), f"min margin on [R, 1e6 R] = {tight:.6g}"))
    C = params.C_diss
    ok = C > 0 and np.isclose(params.a, -C) and C * (1.0 + R0 ** (M - m)) <= q * (1 + 1e-12) and C * (1.0 + R0 ** (m - M)) <= 1.0
    checks.append(Check("dissipation constant", bool(ok), f"C_diss={C:.6g}"))
    return checks


# ---------------------------------------------------------------- test functions


@dataclass(frozen=True)
class BumpSum:
    """``g(x) = sum_j amp_j exp(-(ln x - ln c_j)^2 / (2 s_j^2))`` with exact ``x g'``."""

    centers: tuple
    widths: tuple
    amps: tuple

    def _parts(self, x):
        lx = np.log(np.asarray(x, dtype=float))[..., None]
        c = np.log(np.asarray(self.centers))
        s = np.asarray(self.widths)
        u = (lx - c) / s
        e = np.asarray(self.amps) * np.exp(-0.5 * u * u)
        return e, u, s

    def __call__(self, x):
        e, _, _ = self._parts(x)
        return e.sum(axis=-1)

    def x_deriv(self, x):
        """``x * g'(x)``."""
        e, u, s = self._parts(x)
        return (-u / s * e).sum(axis=-1)

    def describe(self) -> str:
        parts = [f"{a:+.3g}*bump({c:.4g},{s:.3g})" for c, s, a in zip(self.centers, self.widths, self.amps)]
        return " ".join(parts)


@dataclass(frozen=True)
class ExplicitProfileFunction:
    """``G(x) = exp(-x^gamma/gamma) / Z`` with ``x G' = -x^gamma G``."""

    gamma: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(x**self.gamma) / self.gamma) / explicit_normalizer(self.gamma)

    def x_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return -(x**self.gamma) * self(x)

    def describe(self) -> str:
        return f"profile(gamma={self.gamma:g})"


def random_bump_sum(rng: np.random.Generator, lo: float, hi: float) -> BumpSum:
    """One to five bumps, log-uniform centres in ``[lo, hi]``, widths in ``[0.1, 1]``, random signs."""
    k = int(rng.integers(1, 6))
    centers = np.exp(rng.uniform(np.log(lo), np.log(hi), k))
    widths = rng.uniform(0.1, 1.0, k)
    amps = rng.choice([-1.0, 1.0], k) * rng.uniform(0.5, 1.0, k)
    return BumpSum(tuple(centers), tuple(widths), tuple(amps))


# ---------------------------------------------------------------- audit grid


@dataclass(frozen=True)
class _Segment:
    x: np.ndarray
    dxi: float
    kernel: Optional[np.ndarray]  # remainder quadrature matrix, None if no remainder


@dataclass(frozen=True)
class AuditGrid:
    """Three log-uniform segments ``[lo, delta], [delta, R], [R, hi]``.

    ``sample_lo`` and ``sample_hi`` bound the centres of random test
    functions; the quadrature range extends ``pad`` log units beyond them so
    that truncation is negligible for widths up to one log unit.
    """

    delta: float
    R: float
    sample_lo: float
    sample_hi: float
    segments: tuple


def _tail_matrix(spec, x, dxi):
    # int_{x_k}^{x_end} b(y, x_k) f(y) dy ~ sum_l K[k, l] f(x_l)
    n = x.size
    W = np.triu(np.broadcast_to(x * dxi, (n, n))).copy()
    W[np.arange(n), np.arange(n)] *= 0.5
    W[:, -1] *= 0.5
    W[-1, -1] = 0.0
    y = x[None, :]
    xx = np.minimum(x[:, None], y)
    return spec.b(y, xx) * W


def make_audit_grid(
    spec: KernelSpec,
    params: SplitParams,
    x_range: tuple | None = None,
    dxi: float = 0.01,
    pad: float = 8.0,
) -> AuditGrid:
    """Build the piecewise-uniform audit grid.

    ``x_range`` defaults to ``(1e-6, 1e3 R)``; random centres are drawn from
    ``[10 x_range[0], x_range[1] / 10]``.
    """
    lo, hi = x_range if x_range is not None else (1e-6, 1e3 * params.R)
    d, R = params.delta, params.R
    q_lo, q_hi = lo * np.exp(-pad), hi * np.exp(pad)
    if not q_lo < d < R < q_hi:
        raise DomainError("audit range must contain delta and R")
    segs = []
    for a, b, with_kernel in ((q_lo, d, True), (d, R, False), (R, q_hi, True)):
        n = max(3, int(np.ceil(np.log(b / a) / dxi)) + 1)
        xi = np.linspace(np.log(a), np.log(b), n)
        x = np.exp(xi)
        x[0], x[-1] = a, b
        h = (np.log(b) - np.log(a)) / (n - 1)
        segs.append(_Segment(x, h, _tail_matrix(spec, x, h) if with_kernel else None))
    return AuditGrid(d, R, 10.0 * lo, hi / 10.0, tuple(segs))


def _signed_sum(g, f, dxi):
    """Trapezoid sum of ``sign(g) * f`` over one segment, columns are samples.

    In cells where ``g`` changes sign the zero is located by linear
    interpolation and each side gets its own sign, so the jump of
    ``sign(g)`` costs second-order accuracy only.
    """
    s = np.sign(g)
    s0, s1 = s[:-1], s[1:]
    f0, f1 = f[:-1], f[1:]
    cell = 0.5 * (s0 * f0 + s1 * f1)
    flip = s0 * s1 < 0
    if np.any(flip):
        g0, g1 = g[:-1][flip], g[1:][flip]
        th = g0 / (g0 - g1)
        a, b = f0[flip], f1[flip]
        left = a * th + 0.5 * (b - a) * th * th
        right = 0.5 * (a + b) - left
        cell[flip] = s0[flip] * left + s1[flip] * right
    return dxi * cell.sum(axis=0)


def _integrands(spec, params, agrid, funcs):
    """Per segment: values of g, the local part of B g, and the remainder gains."""
    out = []
    for seg in agrid.segments:
        x = seg.x
        G = np.stack([f(x) for f in funcs], axis=1)
        xd = np.stack([f.x_deriv(x) for f in funcs], axis=1)
        local = -xd - (2.0 + spec.rate(x))[:, None] * G
        # below delta: gains from sizes in (x, delta); above R: all gains
        rem = np.zeros_like(G) if seg.kernel is None else seg.kernel @ G
        out.append((seg, G, local, rem))
    return out


def _functionals(spec, params, agrid, funcs):
    w_m, w_M = params.m, params.M
    F = np.zeros(len(funcs))
    nX = np.zeros(len(funcs))
    for seg, G, local, rem in _integrands(spec, params, agrid, funcs):
        x = seg.x
        jac = (x**w_m + x**w_M) * x
        F += _signed_sum(G, (local + rem) * jac[:, None], seg.dxi)
        nX += _signed_sum(G, G * jac[:, None], seg.dxi)
    return F, nX


def dissipativity_functional(spec: KernelSpec, params: SplitParams, g, agrid: AuditGrid | None = None) -> float:
    """``int sign(g) (B g)(x) (x^m + x^M) dx`` for a closed-form ``g``.

    ``B g = -x g' - 2 g - B(x) g + (gains into x < delta from y < delta)
    + (gains into x > R)``.  ``g`` needs ``__call__`` and ``x_deriv``.
    """
    if agrid is None:
        agrid = make_audit_grid(spec, params)
    F, _ = _functionals(spec, params, agrid, [g])
    return float(F[0])


def audit_norm_X(params: SplitParams, g, agrid: AuditGrid) -> float:
    total = 0.0
    for seg in agrid.segments:
        x = seg.x
        v = g(x)[:, None]
        total += float(_signed_sum(v, v * ((x**params.m + x**params.M) * x)[:, None], seg.dxi)[0])
    return total


@dataclass(frozen=True)
class DissipativityAudit:
    samples: np.ndarray
    functional: np.ndarray
    norm_X: np.ndarray
    slack: np.ndarray
    a: float
    tolerance: float
    worst_index: int
    worst_description: str

    @property
    def max_slack(self) -> float:
        return float(np.max(self.slack)) if self.slack.size else -np.inf

    @property
    def passed(self) -> bool:
        return bool(self.max_slack <= self.tolerance)

    @property
    def violations(self) -> np.ndarray:
        return self.samples[self.slack > self.tolerance]

    def summary(self) -> str:
        if not self.slack.size:
            return "no samples drawn; audit passes vacuously"
        state = "PASS" if self.passed else f"FAIL ({self.violations.size} violations)"
        return f"{state}: max (functional - a normX)/normX = {self.max_slack:.6g} at sample {self.worst_index}: {self.worst_description}"


def audit_dissipativity(
    spec: KernelSpec,
    params: SplitParams,
    n_samples: int = 1000,
    seed: int = 42,
    *,
    agrid: AuditGrid | None = None,
    batch: int = 250,
    tolerance: float = 1e-8,
) -> DissipativityAudit:
    """Evaluate the dissipativity slack on seeded random bump sums.

    Sample ``i`` is drawn from ``numpy.random.default_rng([seed, i])``, so any
    subset of samples can be recomputed alone and the result does not depend
    on batching.
    """
    if n_samples < 0:
        raise DomainError("n_samples must be nonnegative")
    if n_samples == 0:
        warnings.warn("dissipativity audit with no samples passes vacuously", RuntimeWarning, stacklevel=2)
        empty = np.zeros(0)
        return DissipativityAudit(np.zeros(0, dtype=int), empty, empty, empty, params.a, tolerance, -1, "")
    if agrid is None:
        agrid = make_audit_grid(spec, params)
    funcs = [random_bump_sum(np.random.default_rng([seed, i]), agrid.sample_lo, agrid.sample_hi) for i in range(n_samples)]
    F = np.empty(n_samples)
    nX = np.empty(n_samples)
    for s in range(0, n_samples, batch):
        F[s : s + batch], nX[s : s + batch] = _functionals(spec, params, agrid, funcs[s : s + batch])
    slack = (F - params.a * nX) / nX
    worst = int(np.argmax(slack))
    return DissipativityAudit(np.arange(n_samples), F, nX, slack, params.a, tolerance, worst, funcs[worst].describe())


# ---------------------------------------------------------------- bound chain


@dataclass(frozen=True)
class BoundChain:
    terms: dict
    functional: float
    bound_sum: float
    target: float
    norm_X: float

    @property
    def first_step(self) -> bool:
        return self.functional <= self.bound_sum + 1e-10 * self.norm_X

    @property
    def second_step(self) -> bool:
        return self.bound_sum <= self.target + 1e-10 * self.norm_X

    @property
    def holds(self) -> bool:
        return self.first_step and self.second_step

    @property
    def strict(self) -> bool:
        """Strict final step; the first step is an equality for one-signed
        ``g`` whose remainder terms vanish."""
        return self.bound_sum < self.target


TERM_NAMES = (
    "(m-1) int x^m|g|",
    "(M-1) int x^M|g|",
    "-int B (x^m+x^M)|g|",
    "delta term m",
    "delta term M",
    "R tail term m",
    "R tail term M",
)


def bound_chain_report(spec: KernelSpec, params: SplitParams, g, agrid: AuditGrid | None = None) -> BoundChain:
    """Evaluate the term-by-term upper bound of the dissipativity functional.

    After integrating the drift by parts the functional is bounded by

        (m-1) int x^m|g| + (M-1) int x^M|g| - int B w |g|
        + p_m b_max delta^gamma int_{x<delta} x^m|g| + p_M b_max delta^gamma int_{x<delta} x^M|g|
        + p_m int_{x>R} B x^m|g| + p_M int_{x>R} B x^M|g|,

    and the constants make this sum at most ``-C_diss norm_X(g)``.
    """
    if agrid is None:
        agrid = make_audit_grid(spec, params)
    m, M = params.m, params.M
    pm, pM = p_moment(spec, m), p_moment(spec, M)
    dg = spec.b_max * params.delta**spec.gamma
    t = dict.fromkeys(TERM_NAMES, 0.0)
    nX = 0.0
    for k, seg in enumerate(agrid.segments):
        x = seg.x
        v = g(x)[:, None]

        def integral(weight):
            return float(_signed_sum(v, v * (weight * x)[:, None], seg.dxi)[0])

        B = spec.rate(x)
        im, iM = integral(x**m), integral(x**M)
        t[TERM_NAMES[0]] += (m - 1.0) * im
        t[TERM_NAMES[1]] += (M - 1.0) * iM
        t[TERM_NAMES[2]] -= integral(B * (x**m + x**M))
        nX += im + iM
        if k == 0:
            t[TERM_NAMES[3]] += pm * dg * im
            t[TERM_NAMES[4]] += pM * dg * iM
        elif k == 2:
            t[TERM_NAMES[5]] += pm * integral(B * x**m)
            t[TERM_NAMES[6]] += pM * integral(B * x**M)
    F, _ = _functionals(spec, params, agrid, [g])
    total = float(sum(t.values()))
    return BoundChain(t, float(F[0]), total, -params.C_diss * nX, nX)
