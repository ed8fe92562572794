"""Domains of double and triple revolution, reduced coordinates and exponent bounds.

A domain of double revolution in R^N = R^m x R^n is described by the radii
s = |x_1..x_m| and t = |x_{m+1}..x_N|, or in polar form s = r cos(theta),
t = r sin(theta).  Triple revolution adds a third block of dimension l and
uses spherical coordinates s = r sin(theta) cos(phi), t = r sin(theta)
sin(phi), tau = r cos(theta).

Dimensional constants c(m, n) are fixed to 1 everywhere.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

INF = math.inf

DOMAIN_KINDS = ("annular-profile", "ball", "truncated-full-space")
SYMMETRY_CLASSES = ("pi2-annular", "pi4-annular", "triple-K-", "triple-K+", "triple-K-pi2")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class RevolutionSplit:
    """Ordered block dimensions (m, n) or (m, n, l) with N = sum of parts."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if len(parts) not in (2, 3):
            raise GeometryError(f"split must have 2 or 3 parts, got {parts}")
        if any(p < 1 for p in parts):
            raise GeometryError(f"every part must be >= 1, got {parts}")
        if sum(parts) < 3:
            raise GeometryError(f"total dimension N = {sum(parts)} < 3")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def parse(cls, text: str) -> "RevolutionSplit":
        try:
            parts = tuple(int(tok) for tok in str(text).replace(" ", "").split(","))
        except ValueError as exc:
            raise GeometryError(f"malformed split {text!r}") from exc
        return cls(parts)

    @property
    def N(self) -> int:
        return sum(self.parts)

    @property
    def is_triple(self) -> bool:
        return len(self.parts) == 3

    @property
    def m(self) -> int:
        return self.parts[0]

    @property
    def n(self) -> int:
        return self.parts[1]

    @property
    def l(self) -> int:
        return self.parts[2] if self.is_triple else 0

    def __str__(self):
        return ",".join(str(p) for p in self.parts)


# --------------------------------------------------------------------------
# boundary profiles


@dataclass(frozen=True)
class Profile:
    """Radial boundary r = g(angles); `func` takes theta (double) or (phi, theta) (triple)."""

    func: Callable
    name: str = "custom"

    def __call__(self, *angles):
        return self.func(*angles)

    @classmethod
    def constant(cls, radius: float) -> "Profile":
        radius = float(radius)
        return cls(lambda *a: np.full(np.broadcast(*a).shape, radius) if a else radius,
                   name=f"const({radius:g})")

    @classmethod
    def tabulated(cls, angles: Sequence[float], radii: Sequence[float]) -> "Profile":
        # monotone cubic (C^1) interpolation, no overshoot between samples
        interp = PchipInterpolator(np.asarray(angles, float), np.asarray(radii, float),
                                   extrapolate=True)
        return cls(lambda theta: interp(theta), name="tabulated")


def _bump(radius: float, amp: float, sign: float) -> Profile:
    # even across pi/4, flat at 0 and pi/2, monotone on (0, pi/4)
    def g(*angles):
        ang = angles[-1] if len(angles) == 1 else angles[0]
        return radius * (1.0 + sign * amp * 0.5 * (1.0 - np.cos(4.0 * ang)))
    return Profile(g, name=f"bump({radius:g},{sign * amp:+g})")


@dataclass(frozen=True)
class Domain:
    split: RevolutionSplit
    kind: str
    g1: Optional[Profile] = None
    g2: Optional[Profile] = None
    radius: float = 1.0
    symmetry_class: str = "pi4-annular"
    preset: str = "custom"

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if self.symmetry_class not in SYMMETRY_CLASSES:
            raise GeometryError(f"unknown symmetry class {self.symmetry_class!r}")
        if self.kind == "annular-profile" and (self.g1 is None or self.g2 is None):
            raise GeometryError("annular domains need both profiles g1 and g2")
        if self.split.is_triple != self.symmetry_class.startswith("triple"):
            raise GeometryError(
                f"symmetry class {self.symmetry_class} does not fit split {self.split}")

    @property
    def N(self) -> int:
        return self.split.N

    @property
    def bounded_at_origin(self) -> bool:
        """True when r = 0 belongs to the closure (ball-type domains)."""
        return self.kind in ("ball", "truncated-full-space")

    @property
    def is_radial(self) -> bool:
        if self.bounded_at_origin:
            return True
        return self.g1.name.startswith("const") and self.g2.name.startswith("const")

    def inner(self, *angles):
        if self.bounded_at_origin:
            return np.zeros(np.broadcast(*angles).shape)
        return np.asarray(self.g1(*angles), float)

    def outer(self, *angles):
        if self.bounded_at_origin:
            return np.full(np.broadcast(*angles).shape, float(self.radius))
        return np.asarray(self.g2(*angles), float)

    def radial_range(self, samples: int = 257) -> tuple:
        """(min g1, max g2) over the angular box, used to size tensor grids."""
        if self.bounded_at_origin:
            return 0.0, float(self.radius)
        th = np.linspace(0.0, np.pi / 2, samples)
        if self.split.is_triple:
            ph, th = np.meshgrid(th, th, indexing="ij")
            return float(np.min(self.g1(ph, th))), float(np.max(self.g2(ph, th)))
        return float(np.min(self.g1(th))), float(np.max(self.g2(th)))

    def validate(self, samples: int = 257) -> None:
        """Check positivity, ordering and the monotonicity demanded by the symmetry class."""
        if self.bounded_at_origin:
            if self.radius <= 0:
                raise GeometryError("ball radius must be positive")
            return
        th = np.linspace(0.0, np.pi / 2, samples)
        if self.split.is_triple:
            ph, tt = np.meshgrid(th, th, indexing="ij")
            a, b = np.asarray(self.g1(ph, tt)), np.asarray(self.g2(ph, tt))
        else:
            a, b = np.asarray(self.g1(th)), np.asarray(self.g2(th))
        if np.any(a <= 0):
            raise GeometryError("inner profile g1 must be positive")
        if np.any(b <= a):
            raise GeometryError("outer profile g2 must exceed g1 everywhere")
        tol = 1e-12 * float(np.max(b))
        if self.symmetry_class == "pi4-annular":
            half = th <= np.pi / 4
            if np.any(np.diff(a[half]) < -tol) or np.any(np.diff(b[half]) > tol):
                raise GeometryError("pi4-annular needs g1 increasing, g2 decreasing on (0, pi/4)")
            mirror = np.pi / 2 - th
            if (not np.allclose(self.g1(mirror), a, atol=1e-10 * np.max(b))
                    or not np.allclose(self.g2(mirror), b, atol=1e-10 * np.max(b))):
                raise GeometryError("pi4-annular profiles must be even across pi/4")
        elif self.symmetry_class == "pi2-annular":
            # monotonicity on (0, pi/2) is optional here; only used by K_{-,pi/2}
            pass
        elif self.symmetry_class == "triple-K-":
            half = th <= np.pi / 4
            if (np.any(np.diff(a[half, :], axis=0) < -tol)
                    or np.any(np.diff(b[half, :], axis=0) > tol)):
                raise GeometryError("triple-K- needs g1 increasing, g2 decreasing in phi")
        elif self.symmetry_class == "triple-K+":
            if np.ptp(a, axis=0).max() > tol or np.ptp(b, axis=0).max() > tol:
                raise GeometryError("triple-K+ needs profiles constant in phi")
        elif self.symmetry_class == "triple-K-pi2":
            if (np.any(np.diff(a, axis=0) < -tol) or np.any(np.diff(b, axis=0) > tol)):
                raise GeometryError("triple-K-pi2 needs g1 increasing, g2 decreasing in phi")

    @property
    def label(self) -> str:
        return self.preset


_PRESET = re.compile(r"^\s*([a-z0-9\-]+)\s*(?:\((.*)\))?\s*$")


def parse_domain(spec: str, split, symmetry_class: Optional[str] = None) -> Domain:
    """Build a Domain from a preset id.

    Recognised ids: ``annulus(R1,R2)``, ``ball``, ``pi4-bump(R1,R2,amp)`` and
    ``truncated-rn(R)``.
    """
    if not isinstance(split, RevolutionSplit):
        split = RevolutionSplit.parse(split) if isinstance(split, str) else RevolutionSplit(split)
    match = _PRESET.match(str(spec))
    if not match:
        raise GeometryError(f"malformed domain id {spec!r}")
    name, args = match.group(1), match.group(2)
    try:
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError as exc:
        raise GeometryError(f"malformed arguments in domain id {spec!r}") from exc
    default_cls = "triple-K+" if split.is_triple else "pi4-annular"
    sym = symmetry_class or default_cls

    if name == "annulus":
        if len(vals) != 2 or not 0 < vals[0] < vals[1]:
            raise GeometryError(f"annulus needs 0 < R1 < R2, got {spec!r}")
        dom = Domain(split, "annular-profile", Profile.constant(vals[0]),
                     Profile.constant(vals[1]), radius=vals[1], symmetry_class=sym,
                     preset=f"annulus({vals[0]:g},{vals[1]:g})")
    elif name == "ball":
        if vals and (len(vals) != 1 or vals[0] <= 0):
            raise GeometryError(f"ball takes at most one positive radius, got {spec!r}")
        rad = vals[0] if vals else 1.0
        dom = Domain(split, "ball", radius=rad, symmetry_class=sym,
                     preset="ball" if not vals else f"ball({rad:g})")
    elif name == "pi4-bump":
        if len(vals) != 3:
            raise GeometryError(f"pi4-bump needs (R1,R2,amp), got {spec!r}")
        r1, r2, amp = vals
        if split.is_triple:
            raise GeometryError("pi4-bump is a double-revolution preset")
        if not (0 < r1 and amp >= 0 and r2 * (1 - amp) > r1 * (1 + amp)):
            raise GeometryError(f"pi4-bump({r1:g},{r2:g},{amp:g}) has crossing profiles")
        dom = Domain(split, "annular-profile", _bump(r1, amp, +1.0), _bump(r2, amp, -1.0),
                     radius=r2, symmetry_class="pi4-annular",
                     preset=f"pi4-bump({r1:g},{r2:g},{amp:g})")
    elif name == "truncated-rn":
        if len(vals) != 1 or vals[0] <= 0:
            raise GeometryError(f"truncated-rn needs one positive radius, got {spec!r}")
        dom = Domain(split, "truncated-full-space", radius=vals[0], symmetry_class=sym,
                     preset=f"truncated-rn({vals[0]:g})")
    else:
        raise GeometryError(f"unknown domain preset {name!r}")
    dom.validate()
    return dom


# --------------------------------------------------------------------------
# coordinates and measures


def polar_to_st(r, theta):
    r = np.asarray(r, float)
    theta = np.asarray(theta, float)
    return r * np.cos(theta), r * np.sin(theta)


def st_to_polar(s, t):
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    return np.hypot(s, t), np.arctan2(t, s)


def spherical_to_stt(r, theta, phi):
    r, theta, phi = (np.asarray(v, float) for v in (r, theta, phi))
    return r * np.sin(theta) * np.cos(phi), r * np.sin(theta) * np.sin(phi), r * np.cos(theta)


def angular_density_double(theta, m: int, n: int):
    """cos^{m-1}(theta) sin^{n-1}(theta)."""
    theta = np.asarray(theta, float)
    return np.cos(theta) ** (m - 1) * np.sin(theta) ** (n - 1)


def angular_density_triple(theta, phi, m: int, n: int, l: int):
    """sin^{m+n-1}(theta) cos^{l-1}(theta) cos^{m-1}(phi) sin^{n-1}(phi)."""
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    return (np.sin(theta) ** (m + n - 1) * np.cos(theta) ** (l - 1)
            * np.cos(phi) ** (m - 1) * np.sin(phi) ** (n - 1))


def measure_weight(point, split) -> float:
    """Density of dx in reduced coordinates at (r, theta) or (r, theta, phi)."""
    if not isinstance(split, RevolutionSplit):
        split = RevolutionSplit(split)
    N = split.N
    if split.is_triple:
        r, theta, phi = point
        return float(r ** (N - 1) * angular_density_triple(theta, phi, *split.parts))
    r, theta = point
    return float(r ** (N - 1) * angular_density_double(theta, split.m, split.n))


# --------------------------------------------------------------------------
# exponent bounds


def _dim_bound(k: int) -> float:
    """2(k+1)/(k-1): critical exponent of dimension k+1, infinite for k = 1."""
    return INF if k <= 1 else 2.0 * (k + 1) / (k - 1)


@dataclass
class ExponentReport:
    N: int
    split: tuple
    alpha: float
    beta: float
    two_star: float
    theoremA_no_mono: float
    theoremA_mono: float
    pi4_kminus_upper: float
    kplus_annulus_upper: float
    p1: Optional[float]
    p2: Optional[float]
    p3: Optional[float]
    henon_upper: float
    fullspace_window: tuple
    singular_upper: float
    breaking_threshold: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            if isinstance(v, tuple):
                return [enc(x) for x in v]
            return v
        return {k: enc(v) for k, v in self.__dict__.items()}


def exponent_report(split, alpha: float = 0.0, beta: float = 1.0) -> ExponentReport:
    if not isinstance(split, RevolutionSplit):
        split = RevolutionSplit.parse(split) if isinstance(split, str) else RevolutionSplit(split)
    if alpha < 0:
        raise GeometryError("alpha must be nonnegative")
    if beta <= 0:
        raise GeometryError("beta must be positive")
    N = split.N
    m, n = split.m, split.n
    two_star = 2.0 * N / (N - 2)
    no_mono = min(_dim_bound(n), _dim_bound(m))
    mono = _dim_bound(min(m, n))
    # pi/4-annular K_- existence window; needs N = 2n
    pi4 = (2.0 * N + 4) / (N - 2)
    p1 = p2 = p3 = None
    if split.is_triple:
        l = split.l
        p1 = min(_dim_bound(n + m), _dim_bound(m + l), _dim_bound(n + l))
        p2 = min(_dim_bound(n + m), _dim_bound(n + l))
        p3 = min(2.0 * (l + 2) / l, _dim_bound(n + m))
    return ExponentReport(
        N=N, split=split.parts, alpha=float(alpha), beta=float(beta),
        two_star=two_star,
        theoremA_no_mono=no_mono,
        theoremA_mono=mono,
        pi4_kminus_upper=pi4,
        kplus_annulus_upper=INF,
        p1=p1, p2=p2, p3=p3,
        henon_upper=(2.0 * N + 2 * alpha) / (N - 2),
        fullspace_window=((2.0 * N + 2 * alpha - 4) / (N - 2), (2.0 * N + 2 * alpha) / (N - 2)),
        singular_upper=(2.0 * N + 2 * alpha - 4) / (N - 2),
        breaking_threshold=4.0 * (N + 2) / beta + 2.0,
    )
