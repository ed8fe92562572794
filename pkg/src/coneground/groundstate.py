"""Energy, Nehari rescaling and the projected fixed-point ground-state iteration.

The iteration is

    u_{k+1} = t* P(v),   A v = a |u_k|^{p-2} u_k,

where P projects onto the cone and t* puts the result on the Nehari set
||u||^2 = int a |u|^p.  A fixed point solves A u = a u^{p-1} exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate as sci_integrate

from .cones import ConeSpec, MembershipReport, cone_for, is_member, project
from .discretize import (Field, Grid, _radial_moment, angular_density_double,
                         angular_density_triple, assemble, build_grid)
from .elliptic import LinearSolveConfig, solve_vector
from .geometry import Domain, exponent_report


class ProblemError(ValueError):
    pass


class DegenerateRay(ArithmeticError):
    pass


class InsufficientWindow(ValueError):
    pass


# --------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class Weight:
    """Coefficient a of the nonlinearity: constant, c |x|^alpha or a tabulated callable."""

    kind: str = "constant"
    value: float = 1.0
    alpha: float = 0.0
    func: Optional[Callable] = None

    @classmethod
    def constant(cls, value: float = 1.0) -> "Weight":
        return cls("constant", float(value))

    @classmethod
    def power(cls, alpha: float, value: float = 1.0) -> "Weight":
        return cls("power", float(value), float(alpha))

    @classmethod
    def tabulated(cls, func: Callable) -> "Weight":
        return cls("tabulated", 1.0, 0.0, func)

    @property
    def is_radial(self) -> bool:
        return self.kind != "tabulated"

    def __call__(self, r, *angles):
        r = np.asarray(r, float)
        if self.kind == "constant":
            return self.value * np.ones_like(r)
        if self.kind == "power":
            return self.value * r ** self.alpha
        return np.asarray(self.func(r, *angles), float) * np.ones_like(r)

    def describe(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": "tabulated"}
        return {"kind": self.kind, "value": self.value, "alpha": self.alpha}


@dataclass(frozen=True)
class Potential:
    """Zero-order potential V: none or |x|^{-alpha}."""

    kind: str = "none"
    alpha: float = 0.0

    @classmethod
    def inverse_power(cls, alpha: float) -> "Potential":
        return cls("inverse-power", float(alpha))

    @property
    def ident(self) -> str:
        return "none" if self.kind == "none" else f"r^-{self.alpha:g}"

    def __call__(self, r, *angles):
        r = np.asarray(r, float)
        if self.kind == "none":
            return np.zeros_like(r)
        return r ** (-self.alpha)


@dataclass(eq=False)
class Problem:
    domain: Domain
    p: float
    weight: Weight = field(default_factory=Weight.constant)
    potential: Potential = field(default_factory=Potential)
    lam: float = 0.0
    cone: Union[ConeSpec, str] = "K+"

    def __post_init__(self):
        if isinstance(self.cone, str):
            self.cone = cone_for(self.cone, self.domain.split.is_triple)
        if self.cone.triple != self.domain.split.is_triple:
            raise ProblemError(f"cone {self.cone.variant} does not fit split {self.domain.split}")
        if not self.p > 2:
            raise ProblemError("p must exceed 2")
        if self.lam < 0:
            raise ProblemError("lambda must be nonnegative")
        if self.domain.kind == "truncated-full-space" and self.lam <= 0:
            raise ProblemError("lambda must be strictly positive on the (truncated) full space")
        if self.cone.even and self.domain.split.m != self.domain.split.n:
            raise ProblemError(f"cone {self.cone.variant} needs m = n")
        if self.weight.kind == "power" and self.weight.alpha < 0:
            raise ProblemError("weight exponent must be nonnegative")
        if self.potential.kind != "none" and not self.domain.bounded_at_origin:
            warnings.warn("singular potential on a domain away from the origin", stacklevel=2)
        upper = self.exponent_window()
        if not 2 < self.p < upper:
            warnings.warn(f"p = {self.p:g} lies outside the existence window (2, {upper:g})",
                          stacklevel=2)
        self._ops = {}
        self._avec = {}

    def exponent_window(self) -> float:
        """Upper end of the p-window that matches this domain, weight and cone."""
        split = self.domain.split
        alpha = self.weight.alpha if self.weight.kind == "power" else 0.0
        if self.potential.kind != "none":
            return exponent_report(split, self.potential.alpha).singular_upper
        rep = exponent_report(split, alpha)
        if split.is_triple:
            return rep.p3 if self.cone.direction == "increasing" else rep.p2
        if self.domain.kind == "ball":
            return rep.henon_upper
        if self.domain.kind == "truncated-full-space":
            return rep.fullspace_window[1]
        if self.cone.variant == "K+":
            return rep.kplus_annulus_upper
        if self.cone.variant == "K-":
            return rep.pi4_kminus_upper
        return rep.theoremA_mono

    def validate_on(self, grid: Grid, tol: float = 1e-12) -> None:
        """Numerical checks of a >= 0 and the sign of a along the cone axis."""
        a = grid.evaluate(lambda *x: self.weight(*x))
        active = grid.mask
        if np.any(a[active] < 0):
            raise ProblemError("weight a must be nonnegative")
        if not np.any(a[active] > 0):
            raise ProblemError("weight a vanishes identically")
        ax = 2 if grid.is_triple else 1
        both = active[tuple(slice(1, None) if i == ax else slice(None) for i in range(a.ndim))] & \
            active[tuple(slice(0, -1) if i == ax else slice(None) for i in range(a.ndim))]
        da = np.diff(a, axis=ax)[both]
        scale = tol * max(1.0, float(np.abs(a).max()))
        if self.cone.direction == "decreasing" and np.any(da > scale):
            raise ProblemError(f"cone {self.cone.variant} needs a nonincreasing along the cone axis")
        if self.cone.direction == "increasing" and np.any(da < -scale):
            raise ProblemError(f"cone {self.cone.variant} needs a nondecreasing along the cone axis")

    def operator(self, grid: Grid):
        key = id(grid)
        if key not in self._ops:
            pot = None if self.potential.kind == "none" else self.potential
            self._ops[key] = (grid, assemble(grid, self.lam, pot, self.potential.ident, self.cone))
        return self._ops[key][1]

    def weight_vector(self, grid: Grid) -> np.ndarray:
        key = id(grid)
        if key not in self._avec:
            self._avec[key] = (grid, grid.pack(grid.evaluate(lambda *x: self.weight(*x))))
        return self._avec[key][1]

    def describe(self) -> dict:
        return {
            "domain": self.domain.label, "split": list(self.domain.split.parts),
            "p": self.p, "lambda": self.lam, "cone": self.cone.variant,
            "weight": self.weight.describe(),
            "potential": {"kind": self.potential.kind, "alpha": self.potential.alpha},
        }


# --------------------------------------------------------------------------
# configuration and results


@dataclass
class GroundStateConfig:
    nr: int = 64
    ntheta: int = 32
    nphi: Optional[int] = None
    tol: float = 1e-6
    max_outer: int = 500
    seed: int = 0
    tilt: float = 0.1
    jitter: float = 0.01
    theta_box: Optional[float] = None
    phi_box: Optional[float] = None
    r_min: Optional[float] = None
    linear: LinearSolveConfig = field(default_factory=lambda: LinearSolveConfig(backend="direct"))

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")


@dataclass
class RadialProfile:
    """A radial grid function on cell centres, with its own radial measure."""

    r_edges: np.ndarray
    values: np.ndarray
    N: int

    @property
    def r(self) -> np.ndarray:
        return 0.5 * (self.r_edges[1:] + self.r_edges[:-1])

    @property
    def weights(self) -> np.ndarray:
        return _radial_moment(self.r_edges, self.N - 1)

    def __call__(self, r):
        return np.interp(r, self.r, self.values)

    def embed(self, grid: Grid) -> Field:
        return Field.from_function(grid, lambda r, *_: self(r))


@dataclass
class GroundStateResult:
    u: Union[Field, RadialProfile]
    energy: float
    residual: float
    membership: MembershipReport
    iterations: int
    nehari_gap: float
    converged: bool
    norm_sq: float = 0.0
    potential_integral: float = 0.0
    history: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def scalars(self) -> dict:
        return {
            "energy": self.energy, "residual": self.residual, "iterations": self.iterations,
            "nehari_gap": self.nehari_gap, "converged": self.converged,
            "norm_sq": self.norm_sq, "potential_integral": self.potential_integral,
            "membership": self.membership.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.scalars(), sort_keys=True)

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,energy,residual,nonneg_violation,monotonicity_violation,evenness_violation\n")
            for row in self.history:
                fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


# --------------------------------------------------------------------------
# functionals on fields


def _parts(u: Field, problem: Problem):
    op = problem.operator(u.grid)
    a = problem.weight_vector(u.grid)
    v = u.vector
    quad = op.energy_form(v)
    pot = float(np.sum(a * np.abs(v) ** problem.p * op.weights))
    return quad, pot


def energy(u: Field, problem: Problem) -> float:
    """1/2 (||u||^2 + int V u^2) - 1/p int a |u|^p."""
    quad, pot = _parts(u, problem)
    return 0.5 * quad - pot / problem.p


def nehari_rescale(u: Field, problem: Problem):
    """Return (t*, t* u) where t* maximises t -> energy(t u)."""
    quad, pot = _parts(u, problem)
    if not pot > 0 or not quad > 0:
        raise DegenerateRay(f"ray is degenerate: ||u||^2 = {quad:.3e}, int a|u|^p = {pot:.3e}")
    t = (quad / pot) ** (1.0 / (problem.p - 2))
    return t, u * t


def relative_residual(u: Field, problem: Problem) -> float:
    op = problem.operator(u.grid)
    a = problem.weight_vector(u.grid)
    v = u.vector
    f = a * np.abs(v) ** (problem.p - 2) * v
    r = op.apply(v) - f
    den = math.sqrt(op.inner(f, f))
    return float(math.sqrt(op.inner(r, r)) / den) if den > 0 else math.inf


# --------------------------------------------------------------------------
# initial guesses


def _radial_bump(domain: Domain, r, *angles):
    if domain.bounded_at_origin:
        return np.cos(0.5 * np.pi * r / domain.radius)
    g1 = domain.inner(*angles)
    g2 = domain.outer(*angles)
    s = np.clip((r - g1) / (g2 - g1), 0.0, 1.0)
    return np.sin(np.pi * s)


def _angular_tilt(cone: ConeSpec, ang, tilt: float):
    if cone.variant in ("K+", "K3+"):
        return 1.0 + tilt * 0.5 * (1.0 - np.cos(4 * ang))
    if cone.variant in ("K-", "K3-"):
        return 1.0 + tilt * 0.5 * (1.0 + np.cos(4 * ang))
    return 1.0 + tilt * 0.5 * (1.0 + np.cos(2 * ang))


def initial_guess(grid: Grid, problem: Problem, tilt: float = 0.1, jitter: float = 0.01,
                  seed: int = 0) -> Field:
    """Boundary-compatible bump with a cone-compatible angular tilt and seeded noise.

    A purely radial start is a fixed point of the iteration on radial problems,
    so the tilt and jitter let nonradial states emerge.
    """
    dom = problem.domain

    def f(r, theta, phi=None):
        if grid.is_triple:
            return _radial_bump(dom, r, phi, theta) * _angular_tilt(problem.cone, phi, tilt)
        return _radial_bump(dom, r, theta) * _angular_tilt(problem.cone, theta, tilt)

    u = grid.evaluate(f)
    rng = np.random.default_rng(seed)
    u = u * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=u.shape))
    return project(Field(grid, u), problem.cone)


# --------------------------------------------------------------------------
# the iteration


def _grid_for(problem: Problem, cfg: GroundStateConfig) -> Grid:
    nphi = cfg.nphi
    if problem.domain.split.is_triple and nphi is None:
        nphi = cfg.ntheta
    return build_grid(problem.domain, cfg.nr, cfg.ntheta, nphi, theta_box=cfg.theta_box,
                      phi_box=cfg.phi_box, r_min=cfg.r_min)


def find_ground_state(problem: Problem, cfg: Optional[GroundStateConfig] = None,
                      grid: Optional[Grid] = None, u0: Optional[Field] = None) -> GroundStateResult:
    """Projected fixed-point iteration with Nehari rescaling; returns the best iterate."""
    cfg = cfg or GroundStateConfig()
    grid = grid or _grid_for(problem, cfg)
    problem.validate_on(grid)
    op = problem.operator(grid)
    a = problem.weight_vector(grid)
    notes = []

    if u0 is None or not np.any(u0.values):
        if u0 is not None:
            notes.append("zero initial guess replaced by the bump guess")
        u0 = initial_guess(grid, problem, cfg.tilt, cfg.jitter, cfg.seed)
    _, u = nehari_rescale(project(u0, problem.cone), problem)

    history = []
    best = None
    c_prev = energy(u, problem)
    restarts = 0
    converged = False
    k = 0
    for k in range(1, cfg.max_outer + 1):
        uv = u.vector
        v, _ = solve_vector(op, a * np.abs(uv) ** (problem.p - 2) * uv, cfg.linear)
        w = project(Field.from_vector(grid, v), problem.cone)
        try:
            _, u = nehari_rescale(w, problem)
        except DegenerateRay:
            if restarts >= 3:
                raise
            restarts += 1
            notes.append(f"degenerate ray at iteration {k}; restarted with seed {cfg.seed + restarts}")
            u = initial_guess(grid, problem, cfg.tilt, cfg.jitter, cfg.seed + restarts)
            _, u = nehari_rescale(u, problem)
            continue
        c = energy(u, problem)
        res = relative_residual(u, problem)
        mem = is_member(u, problem.cone)
        history.append((k, c, res, mem.nonneg_violation, mem.monotonicity_violation,
                        mem.evenness_violation))
        if best is None or res < best[1]:
            best = (u, res, c, k)
        if abs(c - c_prev) <= cfg.tol * abs(c) and res <= cfg.tol:
            converged = True
            best = (u, res, c, k)
            break
        c_prev = c

    u, res, c, kbest = best
    quad, pot = _parts(u, problem)
    if not converged:
        notes.append(f"MaxOuterIterations: stopped after {k} iterations, best residual {res:.3e}")
    return GroundStateResult(
        u=u, energy=c, residual=res, membership=is_member(u, problem.cone),
        iterations=k, nehari_gap=abs(quad - pot), converged=converged,
        norm_sq=quad, potential_integral=pot, history=history, notes=notes)


# --------------------------------------------------------------------------
# radial comparator


def angular_measure(grid_or_problem, theta_box: Optional[float] = None,
                    phi_box: Optional[float] = None) -> float:
    """Exact integral of the angular density over the reduced box."""
    if isinstance(grid_or_problem, Grid):
        g = grid_or_problem
        split, theta_box, phi_box = g.split, g.theta_box, g.phi_box
    else:
        split = grid_or_problem.domain.split
    if split.is_triple:
        m, n, l = split.parts
        val, _ = sci_integrate.dblquad(
            lambda ph, th: angular_density_triple(th, ph, m, n, l),
            0.0, theta_box, 0.0, phi_box, epsabs=1e-13, epsrel=1e-13)
        return float(val)
    val, _ = sci_integrate.quad(lambda th: angular_density_double(th, split.m, split.n),
                                0.0, theta_box, epsabs=1e-14, epsrel=1e-14)
    return float(val)


def _radial_operator(r_edges, N: int, bounded: bool, lam: float, V):
    rc = 0.5 * (r_edges[1:] + r_edges[:-1])
    w = _radial_moment(r_edges, N - 1)
    cond = r_edges[1:-1] ** (N - 1) / np.diff(rc)
    n = rc.size
    main = np.zeros(n)
    main[:-1] += cond
    main[1:] += cond
    main[-1] += r_edges[-1] ** (N - 1) / (r_edges[-1] - rc[-1])
    if not bounded:
        main[0] += r_edges[0] ** (N - 1) / (rc[0] - r_edges[0])
    main += (lam + V) * w
    S = sp.diags([main, -cond, -cond], [0, 1, -1], format="csc")
    return S, w, rc


def solve_radial(problem: Problem, cfg: Optional[GroundStateConfig] = None,
                 nr: Optional[int] = None) -> GroundStateResult:
    """Ground state among radial functions on a 1-D cell-centred grid.

    Energies are multiplied by the exact angular measure of the reduced box used
    by the 2-D solver, so the two are directly comparable.
    """
    cfg = cfg or GroundStateConfig()
    dom = problem.domain
    if not (dom.is_radial and problem.weight.is_radial):
        raise ProblemError("solve_radial needs a radial domain and weight")
    nr = nr or cfg.nr
    N = dom.N
    lo, hi = dom.radial_range()
    if cfg.r_min is not None and dom.bounded_at_origin:
        r_edges = np.concatenate([[0.0], np.geomspace(cfg.r_min, hi, nr)])
    else:
        r_edges = np.linspace(lo, hi, nr + 1)
    rc = 0.5 * (r_edges[1:] + r_edges[:-1])
    V = problem.potential(rc)
    S, w, rc = _radial_operator(r_edges, N, dom.bounded_at_origin, problem.lam, V)
    a = problem.weight(rc)
    lu = spla.splu(S)
    p = problem.p

    # angular box of the matching 2-D grid
    probe = _grid_for(problem, GroundStateConfig(nr=8, ntheta=8, nphi=8 if dom.split.is_triple else None,
                                                 theta_box=cfg.theta_box, phi_box=cfg.phi_box))
    omega = angular_measure(probe)

    def parts(u):
        return float(u @ (S @ u)), float(np.sum(a * np.abs(u) ** p * w))

    def rescale(u):
        q, b = parts(u)
        if not b > 0:
            raise DegenerateRay("radial ray is degenerate")
        return u * (q / b) ** (1.0 / (p - 2))

    u = rescale(_radial_bump(dom, rc, 0.0) if not dom.bounded_at_origin
                else np.cos(0.5 * np.pi * rc / dom.radius))
    history = []
    converged = False
    c_prev = None
    k = 0
    for k in range(1, cfg.max_outer + 1):
        v = lu.solve(a * u ** (p - 1) * w)
        u = rescale(np.maximum(v, 0.0))
        q, b = parts(u)
        c = omega * (0.5 * q - b / p)
        f = a * u ** (p - 1)
        r = (S @ u) / w - f
        res = float(np.sqrt(np.sum(r * r * w) / np.sum(f * f * w)))
        history.append((k, c, res, 0.0, 0.0, 0.0))
        if c_prev is not None and abs(c - c_prev) <= cfg.tol * abs(c) and res <= cfg.tol:
            converged = True
            break
        c_prev = c
    q, b = parts(u)
    zero = MembershipReport(float(max(0.0, -u.min())), 0.0, 0.0, 1e-10, bool(u.min() >= 0))
    return GroundStateResult(
        u=RadialProfile(r_edges, u, N), energy=c, residual=res, membership=zero,
        iterations=k, nehari_gap=omega * abs(q - b), converged=converged,
        norm_sq=omega * q, potential_integral=omega * b, history=history,
        notes=[] if converged else [f"MaxOuterIterations after {k} iterations"])


# --------------------------------------------------------------------------
# Moser recurrence and decay


@dataclass
class MoserSequence:
    p: float
    q: float
    t0: float
    values: list
    diverged: bool

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "t0": self.t0, "values": self.values,
                "diverged": self.diverged}


def moser_sequence(p: float, q: float, t0: float = 1.0, kmax: int = 4,
                   cap: float = 1e6) -> MoserSequence:
    """t_{k+1} = q t_k / 2 - (p - 2) / 2, iterated kmax times (or until it exceeds cap)."""
    if not 2 < p < q:
        raise ValueError("need 2 < p < q")
    if t0 < 1:
        raise ValueError("t0 must be at least 1")
    vals = [float(t0)]
    for _ in range(kmax):
        if vals[-1] > cap:
            break
        vals.append(q * vals[-1] / 2 - (p - 2) / 2)
    return MoserSequence(float(p), float(q), float(t0), vals, bool(vals[-1] > cap))


@dataclass
class DecayReport:
    slope: float
    stderr: float
    window: tuple
    points: int
    target: float
    passes: bool

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "window": list(self.window),
                "points": self.points, "target": self.target, "passes": self.passes}


def _radial_envelope(u):
    if isinstance(u, RadialProfile):
        return u.r, np.asarray(u.values, float)
    vals = np.where(u.grid.mask, u.values, -np.inf)
    env = vals.reshape(u.grid.nr, -1).max(axis=1)
    return u.grid.r, env


def decay_check(u, t_target: float, fit_window=None, floor: float = 1e-200) -> DecayReport:
    """Least-squares slope of log(max over angles of u) against log r near the origin.

    fit_window is (r_lo, r_hi); the default is [h, 10 h] with h the first radial
    cell width.  Radii where u is below floor * max(u) are dropped.
    """
    r, env = _radial_envelope(u)
    if fit_window is None:
        h = r[0] * 2 if isinstance(u, RadialProfile) else float(u.grid.r_edges[1] - u.grid.r_edges[0])
        fit_window = (h, 10 * h)
    lo, hi = fit_window
    top = np.max(env)
    sel = (r >= lo) & (r <= hi) & (env > floor * top) & np.isfinite(env)
    if sel.sum() < 6:
        raise InsufficientWindow(f"only {int(sel.sum())} usable radii in [{lo:g}, {hi:g}]")
    x, y = np.log(r[sel]), np.log(env[sel])
    A = np.column_stack([x, np.ones_like(x)])
    coef, resid, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    dof = max(1, x.size - 2)
    s2 = float(np.sum((A @ coef - y) ** 2)) / dof
    stderr = float(math.sqrt(s2 / np.sum((x - x.mean()) ** 2)))
    return DecayReport(slope, stderr, (float(lo), float(hi)), int(sel.sum()), float(t_target),
                       bool(slope >= t_target))
