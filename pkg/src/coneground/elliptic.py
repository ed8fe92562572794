"""Weighted linear solves A v = f with A = W^{-1} S.

The system is symmetrised as (D^{-1} S D^{-1}) y = D f with D = W^{1/2}, so the
Euclidean residual of the scaled system is exactly the weighted L2 residual
||A v - f||_W.  Conjugate gradients run on the scaled system; a sparse LU
backend is available for repeated solves with one operator.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import is_member
from .discretize import DiscreteOperator, Field


class NotConverged(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


@dataclass
class LinearSolveConfig:
    max_iters: int = 5000
    rel_tol: float = 1e-10
    preconditioner: str = "diagonal"
    backend: str = "cg"
    trace: bool = False

    def __post_init__(self):
        if self.max_iters < 100:
            raise ValueError("max_iters must be at least 100")
        if not 0 < self.rel_tol <= 1e-2:
            raise ValueError("rel_tol must lie in (0, 1e-2]")
        if self.preconditioner not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.backend not in ("cg", "direct"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass
class SolveStats:
    iterations: int
    final_relative_residual: float
    converged: bool
    backend: str = "cg"
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "relative_residual"])
            for k, res in enumerate(self.trace, start=1):
                w.writerow([k, f"{res:.17g}"])


def _scaled(op: DiscreteOperator):
    cache = op.__dict__.setdefault("_cache", {})
    if "scaled" not in cache:
        d = 1.0 / np.sqrt(op.weights)
        Dm = sp.diags(d)
        cache["scaled"] = ((Dm @ op.stiffness @ Dm).tocsr(), d)
    return cache["scaled"]


def _lu(op: DiscreteOperator):
    cache = op.__dict__.setdefault("_cache", {})
    if "lu" not in cache:
        cache["lu"] = spla.splu(op.stiffness.tocsc())
    return cache["lu"]


def weighted_residual(op: DiscreteOperator, v, f) -> float:
    """||A v - f||_W / ||f||_W (absolute when f = 0)."""
    r = op.apply(v) - f
    num = np.sqrt(op.inner(r, r))
    den = np.sqrt(op.inner(f, f))
    return float(num / den) if den > 0 else float(num)


def solve_vector(op: DiscreteOperator, f, cfg: Optional[LinearSolveConfig] = None):
    """Solve A v = f for a packed vector f; returns (v, SolveStats)."""
    cfg = cfg or LinearSolveConfig()
    f = np.asarray(f, float)
    if not np.any(f):
        return np.zeros_like(f), SolveStats(0, 0.0, True, cfg.backend)

    if cfg.backend == "direct":
        v = _lu(op).solve(f * op.weights)
        res = weighted_residual(op, v, f)
        stats = SolveStats(1, res, res <= cfg.rel_tol, "direct")
        if not stats.converged:
            raise NotConverged(f"direct solve residual {res:.3e} above {cfg.rel_tol:.1e}", stats)
        return v, stats

    K, d = _scaled(op)
    b = f / d  # D f with D = W^{1/2}
    bnorm = np.linalg.norm(b)
    M = None
    if cfg.preconditioner == "diagonal":
        M = sp.diags(1.0 / K.diagonal())
    trace = []
    count = [0]

    def callback(yk):
        count[0] += 1
        if cfg.trace:
            trace.append(float(np.linalg.norm(K @ yk - b) / bnorm))

    y, info = spla.cg(K, b, rtol=cfg.rel_tol, atol=0.0, maxiter=cfg.max_iters, M=M,
                      callback=callback)
    v = y * d
    res = weighted_residual(op, v, f)
    stats = SolveStats(count[0], res, res <= cfg.rel_tol, "cg", trace)
    if info != 0 or not stats.converged:
        # cg's stopping test uses its recursive residual; polish once if it drifted
        if info == 0 and res <= 10 * cfg.rel_tol:
            y, info = spla.cg(K, b, x0=y, rtol=cfg.rel_tol / 10, atol=0.0,
                              maxiter=cfg.max_iters, M=M, callback=callback)
            v = y * d
            res = weighted_residual(op, v, f)
            stats = SolveStats(count[0], res, res <= cfg.rel_tol, "cg", trace)
        if not stats.converged:
            raise NotConverged(f"cg stopped after {count[0]} iterations at residual {res:.3e}", stats)
    return v, stats


def solve_linear(op: DiscreteOperator, rhs: Field, cfg: Optional[LinearSolveConfig] = None):
    """Solve A v = rhs on the active cells; returns (Field, SolveStats)."""
    if rhs.grid is not op.grid:
        raise ValueError("rhs lives on a different grid than the operator")
    v, stats = solve_vector(op, rhs.vector, cfg)
    return Field.from_vector(op.grid, v), stats


def pointwise_invariance(u: Field, problem, cfg: Optional[LinearSolveConfig] = None):
    """Solve (-Lap + lam + V) v = a u^{p-1} and report whether v stays in the cone.

    Returns (v, MembershipReport, SolveStats).
    """
    grid = u.grid
    pre = is_member(u, problem.cone, tol=1e-8)
    if not pre.is_member:
        warnings.warn("pointwise_invariance called with a field outside the cone", stacklevel=2)
    op = problem.operator(grid)
    a = problem.weight_vector(grid)
    uv = u.vector
    f = a * np.abs(uv) ** (problem.p - 2) * uv
    v, stats = solve_vector(op, f, cfg)
    vf = Field.from_vector(grid, v)
    return vf, is_member(vf, problem.cone), stats


def residual_norm(u: Field, problem) -> float:
    """Weighted L2 norm of A u - a |u|^{p-2} u over the active cells."""
    op = problem.operator(u.grid)
    a = problem.weight_vector(u.grid)
    uv = u.vector
    r = op.apply(uv) - a * np.abs(uv) ** (problem.p - 2) * uv
    return float(np.sqrt(op.inner(r, r)))


def maximum_principle_gap(v: Field) -> float:
    """Most negative value of v relative to its weighted L2 norm (0 when v >= 0)."""
    w = v.grid.weights
    norm = np.sqrt(np.sum(v.values ** 2 * w))
    if norm == 0:
        return 0.0
    return float(max(0.0, -v.values[v.grid.mask].min()) / norm)


def as_dense(op: DiscreteOperator) -> np.ndarray:
    """Dense A = W^{-1} S, for small-grid checks."""
    return op.stiffness.toarray() / op.weights[:, None]
