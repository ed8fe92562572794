"""Symmetry-breaking thresholds, the second variation along u*psi, and
nonradiality / variable-dependence indices.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .discretize import Field, _radial_moment
from .groundstate import Problem, RadialProfile, _radial_operator
from .spectra import AngularProfile


class ZeroField(ValueError):
    pass


def breaking_threshold(N: int, beta: float) -> float:
    """p* = 4(N+2)/beta + 2; radial ground states are unstable once p > p*."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 4.0 * (N + 2) / beta + 2.0


def triple_criterion(mu: float, beta: float, p: float) -> bool:
    """The triple-revolution variant (p-1) mu / beta < p - 2."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return (p - 1) * mu / beta < p - 2


@dataclass
class BreakingVerdict:
    N: int
    beta: float
    threshold: float
    p: float
    criterion_met: bool
    M_value: Optional[float] = None
    M_bound: Optional[float] = None
    index: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def verdict(N: int, beta: float, p: float, **extra) -> BreakingVerdict:
    thr = breaking_threshold(N, beta)
    return BreakingVerdict(N, float(beta), thr, float(p), bool(p > thr), **extra)


@dataclass
class SecondVariation:
    value: float
    bound: float
    psi_mass: float
    psi_grad: float
    radial_energy: float
    radial_hardy: float
    nonlinear: float

    def to_dict(self) -> dict:
        return asdict(self)


def second_variation_radial(u_rad: RadialProfile, psi: AngularProfile, problem: Problem,
                            beta: float, mu: Optional[float] = None) -> SecondVariation:
    """M(u, u psi) by separated quadrature, with the bound (int psi^2 w) E (mu/beta - (p-2)).

    Here E = int (u_r^2 + lam u^2) r^{N-1} dr.  mu defaults to the Rayleigh
    quotient of psi, which is the eigenvalue when psi is an eigenfunction.
    """
    N = u_rad.N
    p = problem.p
    e = u_rad.r_edges
    rc = u_rad.r
    u = np.asarray(u_rad.values, float)
    V = problem.potential(rc)
    S0, w, _ = _radial_operator(e, N, problem.domain.bounded_at_origin, problem.lam, 0.0 * rc)
    energy_r = float(u @ (S0 @ u))
    pot_r = float(np.sum(V * u ** 2 * w))
    hardy_r = float(np.sum(u ** 2 * _radial_moment(e, N - 3)))
    nonlin = float(np.sum(problem.weight(rc) * np.abs(u) ** p * w))

    pm = psi.mass()
    pg = psi.gradient_energy()
    value = pm * (energy_r + pot_r - (p - 1) * nonlin) + pg * hardy_r
    mu = pg / pm if mu is None else mu
    bound = pm * energy_r * (mu / beta - (p - 2))
    return SecondVariation(float(value), float(bound), pm, pg, energy_r, hardy_r, nonlin)


# --------------------------------------------------------------------------
# indices


def _angular_axes(u: Field):
    return tuple(range(1, u.values.ndim))


def radial_projection(u: Field) -> Field:
    """Weighted angular average at each radius over the active cells."""
    w = u.grid.weights
    ax = _angular_axes(u)
    tot = w.sum(axis=ax, keepdims=True)
    avg = np.divide((u.values * w).sum(axis=ax, keepdims=True), tot,
                    out=np.zeros_like(tot), where=tot > 0)
    return Field(u.grid, np.broadcast_to(avg, u.values.shape))


def _norm(values, w) -> float:
    return float(np.sqrt(np.sum(values ** 2 * w)))


def nonradiality_index(u: Field) -> float:
    """||u - P u|| / ||u|| in L^2(dmu), P the angular average per radius."""
    w = u.grid.weights
    nu = _norm(u.values, w)
    if nu == 0:
        raise ZeroField("nonradiality index of the zero field")
    return _norm(u.values - radial_projection(u).values, w) / nu


def phi_projection(u: Field) -> Field:
    if not u.grid.is_triple:
        raise ValueError("phi averages need a triple-revolution field")
    w = u.grid.weights
    tot = w.sum(axis=2, keepdims=True)
    avg = np.divide((u.values * w).sum(axis=2, keepdims=True), tot,
                    out=np.zeros_like(tot), where=tot > 0)
    return Field(u.grid, np.broadcast_to(avg, u.values.shape))


def dependence_indices(u: Field):
    """(index_theta, index_phi) for a triple-revolution field.

    index_phi measures the part of u that varies in phi; index_theta measures
    the theta variation left in the phi-average of u.
    """
    w = u.grid.weights
    nu = _norm(u.values, w)
    if nu == 0:
        raise ZeroField("dependence indices of the zero field")
    uphi = phi_projection(u)
    urad = radial_projection(u)
    return (_norm(uphi.values - urad.values, w) / nu, _norm(u.values - uphi.values, w) / nu)


def multiplicity_count(N: int) -> int:
    """floor(N/2) + floor((N-1)/2) + ... + floor((N-k)/2) with k = floor(N/3)."""
    if N < 4:
        raise ValueError("multiplicity count needs N >= 4")
    return sum((N - j) // 2 for j in range(N // 3 + 1))
