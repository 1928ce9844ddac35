"""Homogeneous fragmentation coefficients.

A kernel is ``b(x, y) = x**(gamma - 1) * h(y / x)`` for ``0 < y < x`` where the
shape ``h`` on ``[0, 1]`` is either a constant or a piecewise-linear table.
Everything obtained from ``b`` by integration (the total rate ``B``, the
cumulative rate ``Lambda``, the mean number of fragments ``kappa`` and the
moment constants ``p_k``) reduces to moments of ``h`` and is computed exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import DomainError, UnsupportedKernelError

__all__ = [
    "Uniform",
    "Tabulated",
    "KernelSpec",
    "Check",
    "HypothesisReport",
    "b_value",
    "total_rate",
    "kappa",
    "lambda_cum",
    "p_moment",
    "validate_hypotheses",
    "require_valid",
    "kernel_from_mapping",
]


@dataclass(frozen=True)
class Uniform:
    """Constant shape ``h(z) = c``."""

    c: float

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise DomainError(f"uniform shape needs c > 0, got {self.c!r}")

    def __call__(self, z):
        return np.full_like(np.asarray(z, dtype=float), self.c)

    def moment(self, k: float) -> float:
        return self.c / (k + 1.0)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.c])


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear shape through the nodes ``(z_j, h_j)``.

    Nodes must start at 0, end at 1 and be strictly increasing.  The values are
    only required to be finite here; sign and positivity are a matter for
    :func:`validate_hypotheses`.
    """

    z: tuple
    h: tuple

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if z.ndim != 1 or z.shape != h.shape or z.size < 2:
            raise DomainError("tabulated shape needs matching 1-d z and h with >= 2 nodes")
        if z[0] != 0.0 or z[-1] != 1.0:
            raise DomainError("tabulated shape must start at z=0 and end at z=1")
        if np.any(np.diff(z) <= 0):
            raise DomainError("tabulated z must be strictly increasing")
        if not np.all(np.isfinite(h)):
            raise DomainError("tabulated h must be finite")
        object.__setattr__(self, "z", tuple(float(v) for v in z))
        object.__setattr__(self, "h", tuple(float(v) for v in h))

    def __call__(self, z):
        return np.interp(z, self.z, self.h)

    def moment(self, k: float) -> float:
        # exact integral of z**k * h(z) over each linear segment
        z = np.asarray(self.z)
        h = np.asarray(self.h)
        z0, z1 = z[:-1], z[1:]
        s = (h[1:] - h[:-1]) / (z1 - z0)
        a = h[:-1] - s * z0
        total = a * (z1 ** (k + 1) - z0 ** (k + 1)) / (k + 1) + s * (
            z1 ** (k + 2) - z0 ** (k + 2)
        ) / (k + 2)
        return float(total.sum())

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.h)


Shape = Union[Uniform, Tabulated]


@dataclass(frozen=True)
class KernelSpec:
    """Homogeneity degree and shape of a fragmentation coefficient.

    Construction accepts any positive finite ``gamma`` so that out-of-range
    kernels can still be reported on; computations that rely on the
    hypotheses call :func:`require_valid` first.
    """

    gamma: float
    shape: Shape = field(default_factory=lambda: Uniform(2.0))

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise DomainError(f"gamma must be finite, got {self.gamma!r}")

    @cached_property
    def c_h(self) -> float:
        """First moment of the shape, so that ``B(x) = c_h * x**gamma``."""
        return self.shape.moment(1.0)

    @property
    def b_min(self) -> float:
        return float(np.min(self.shape.values)) / 2.0

    @property
    def b_max(self) -> float:
        return float(np.max(self.shape.values)) / 2.0

    @property
    def is_explicit(self) -> bool:
        """True for the kernel ``b = 2 x**(gamma-1)`` whose profile is known."""
        return isinstance(self.shape, Uniform) and self.shape.c == 2.0

    def b(self, x, y):
        """Vectorised ``b(x, y)`` without domain checks (callers guarantee 0 < y <= x)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x ** (self.gamma - 1.0) * self.shape(y / x)

    def rate(self, x):
        """Vectorised ``B(x)`` without domain checks."""
        return self.c_h * np.asarray(x, dtype=float) ** self.gamma


def b_value(spec: KernelSpec, x: float, y: float) -> float:
    """Fragmentation coefficient ``b(x, y)`` for ``0 < y < x``."""
    if not (0.0 < y < x):
        raise DomainError(f"b(x, y) needs 0 < y < x, got x={x!r}, y={y!r}")
    return float(spec.b(x, y))


def total_rate(spec: KernelSpec, x):
    """Total fragmentation rate ``B(x) = c_h x**gamma``; accepts arrays."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("total rate is defined for x > 0 only")
    out = spec.rate(x)
    return float(out) if out.ndim == 0 else out


def kappa(spec: KernelSpec) -> float:
    """Mean number of fragments, ``int_0^x b dy / B(x)``."""
    return spec.shape.moment(0.0) / spec.c_h


def lambda_cum(spec: KernelSpec, x):
    """Cumulative rate ``Lambda(x) = int_0^x B(s)/s ds = c_h x**gamma / gamma``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("Lambda is defined for x >= 0 only")
    out = spec.c_h * x**spec.gamma / spec.gamma
    return float(out) if out.ndim == 0 else out


def p_moment(spec: KernelSpec, k: float) -> float:
    """Tight moment constant ``p_k`` with ``int_0^x y^k b dy = p_k x^k B(x)``."""
    if k < 0:
        raise DomainError(f"p_k needs k >= 0, got {k!r}")
    return spec.shape.moment(float(k)) / spec.c_h


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list:
        return [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in self.checks
        ]


LEMMA_K_GRID = np.arange(0.0, 8.0 + 1e-12, 0.25)


def validate_hypotheses(spec: KernelSpec) -> HypothesisReport:
    """Check the kernel assumptions; failures are reported, never raised."""
    h = spec.shape.values
    checks = []

    ok1 = bool(np.all(np.isfinite(h)) and np.all(h >= 0))
    checks.append(Check("Hypothesis 1", ok1, "h nonnegative and finite" if ok1 else "h has negative or non-finite values"))

    c_h = spec.c_h
    if c_h > 0:
        kap = kappa(spec)
        ok2 = bool(kap > 1.0)
        checks.append(Check("Hypothesis 2", ok2, f"kappa = {kap:.6g}"))
    else:
        checks.append(Check("Hypothesis 2", False, "first moment of h is not positive"))

    gamma_ok = 0.0 < spec.gamma < 2.0
    bounds_ok = 0.0 < spec.b_min <= spec.b_max
    detail = f"gamma = {spec.gamma:g} ({'in' if gamma_ok else 'outside'} (0, 2)), b_min = {spec.b_min:g}, b_max = {spec.b_max:g}"
    checks.append(Check("Hypothesis 3", bool(gamma_ok and bounds_ok), detail))

    if c_h > 0:
        p = np.array([p_moment(spec, k) for k in LEMMA_K_GRID])
        decreasing = bool(np.all(np.diff(p) < 0))
        above = bool(np.all(p[LEMMA_K_GRID < 1] > 1.0))
        below = bool(np.all(p[LEMMA_K_GRID > 1] < 1.0))
        p1 = p_moment(spec, 1.0)
        ok = decreasing and above and below and abs(p1 - 1.0) < 1e-12
        checks.append(
            Check(
                "Lemma 1",
                ok,
                f"p_k decreasing={decreasing}, p_k>1 on [0,1)={above}, p_k<1 on (1,8]={below}, p_1={p1:.15g}",
            )
        )
    else:
        checks.append(Check("Lemma 1", False, "p_k undefined"))
    return HypothesisReport(tuple(checks))


def require_valid(spec: KernelSpec) -> None:
    """Raise :class:`DomainError` naming the first failing hypothesis."""
    report = validate_hypotheses(spec)
    if not report.passed:
        first = report[report.failed[0]]
        raise DomainError(f"{first.name} fails: {first.detail}")


def kernel_from_mapping(block: dict) -> KernelSpec:
    """Build a :class:`KernelSpec` from a config ``[kernel]`` block."""
    try:
        gamma = float(block["gamma"])
    except KeyError as exc:
        raise DomainError("kernel block needs 'gamma'") from exc
    kind = block.get("shape", "uniform")
    if kind == "uniform":
        return KernelSpec(gamma, Uniform(float(block.get("c", 2.0))))
    if kind == "tabulated":
        if "z" not in block or "h" not in block:
            raise DomainError("tabulated kernel needs 'z' and 'h' arrays")
        return KernelSpec(gamma, Tabulated(tuple(block["z"]), tuple(block["h"])))
    raise UnsupportedKernelError(f"unknown kernel shape {kind!r}")
