"""Hardy constants and weighted angular eigenpairs.

Hardy-type constants are the smallest eigenvalue of the pencil (S, M) where S
is the stiffness matrix of -Laplacian + lam (+ V) and M holds the cell weights
of int u^2 / |x|^2.  The angular problems are 1-D Neumann Sturm-Liouville
problems -(w psi')' = mu w psi, discretised by finite volumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import Field, Grid, assemble, build_grid, inverse_square_mass
from .geometry import Domain

DEFAULT_LOG_DEPTH = 24.0


class NotConverged(RuntimeError):
    pass


@dataclass
class SpectralResult:
    value: float
    vector: object = None
    iterations: int = 0
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "iterations": self.iterations, "residual": self.residual,
                **self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --------------------------------------------------------------------------
# generalized pencils


def inverse_iteration(S, mass, k: int = 1, block: int = 4, tol: float = 1e-9,
                      maxiter: int = 3000, seed: int = 0):
    """Smallest k eigenpairs of S x = mu diag(mass) x by block inverse iteration.

    Each sweep solves S Y = M X with a cached LU factorization, then applies a
    Rayleigh-Ritz step on span(Y).  Returns (values, vectors, sweeps, residuals)
    with vectors M-orthonormal.
    """
    n = S.shape[0]
    block = min(max(block, k + 2), n)
    lu = spla.splu(sp.csc_matrix(S))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block)) + 1.0
    mass = np.asarray(mass, float)
    res = np.full(k, np.inf)
    for it in range(1, maxiter + 1):
        Y = lu.solve(mass[:, None] * X)
        # Rayleigh-Ritz in the M inner product
        Hs = Y.T @ (S @ Y)
        Hm = Y.T @ (mass[:, None] * Y)
        vals, C = sla.eigh(0.5 * (Hs + Hs.T), 0.5 * (Hm + Hm.T))
        X = Y @ C
        R = S @ X[:, :k] - mass[:, None] * X[:, :k] * vals[:k]
        scale = np.abs(vals[:k]) * np.sqrt(np.sum(mass[:, None] * X[:, :k] ** 2, axis=0))
        # residual measured in the M^{-1} norm, relative to |mu| ||x||_M
        res = np.sqrt(np.sum(R ** 2 / mass[:, None], axis=0)) / np.maximum(scale, 1e-300)
        if np.all(res <= tol):
            return vals[:k], X[:, :k], it, res
    raise NotConverged(f"inverse iteration stalled at residual {res.max():.3e} after {maxiter} sweeps")


def _pencil_min(grid: Grid, lam: float, potential=None, potential_id="none", tol=1e-9):
    op = assemble(grid, lam, potential, potential_id)
    mass = inverse_square_mass(grid)
    vals, vecs, its, res = inverse_iteration(op.stiffness, mass, k=1, tol=tol)
    vec = vecs[:, 0]
    if np.sum(vec * mass) < 0:
        vec = -vec
    return SpectralResult(float(vals[0]), Field.from_vector(grid, vec), its, float(res[0]))


def hardy_grid(domain: Domain, nr: int = 128, ntheta: int = 64, nphi: Optional[int] = None,
               log_depth: Optional[float] = DEFAULT_LOG_DEPTH) -> Grid:
    """Grid for Hardy quotients: geometric radial cells when the origin is in the domain.

    The Hardy infimum on a ball is approached by functions spread over many
    scales of r, so ball-type grids use edges 0, R e^{-L}, ..., R with L = log_depth.
    """
    if domain.split.is_triple and nphi is None:
        nphi = ntheta
    r_min = None
    if domain.bounded_at_origin and log_depth:
        r_min = domain.radius * math.exp(-log_depth)
    return build_grid(domain, nr, ntheta, nphi, r_min=r_min)


def hardy_constant(domain: Domain, lam: float = 0.0, nr: int = 128, ntheta: int = 64,
                   nphi: Optional[int] = None, log_depth: Optional[float] = DEFAULT_LOG_DEPTH,
                   grid: Optional[Grid] = None) -> SpectralResult:
    """Discrete beta_lam = min (int |grad u|^2 + lam u^2) / (int u^2/|x|^2) over H^1_0."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    grid = grid or hardy_grid(domain, nr, ntheta, nphi, log_depth)
    out = _pencil_min(grid, lam)
    out.meta = {"domain": domain.label, "lambda": lam, **grid.describe(),
                "log_depth": log_depth if domain.bounded_at_origin else None}
    return out


def hardy_richardson(domain: Domain, lam: float = 0.0, nr: int = 128, ntheta: int = 64,
                     log_depth: float = DEFAULT_LOG_DEPTH):
    """One Richardson step for ball-type Hardy constants.

    The graded-grid error behaves like a / L^2 + b (L / nr)^2, so doubling L
    and quadrupling nr divides both terms by four.  Returns (coarse, fine, extrapolated).
    """
    coarse = hardy_constant(domain, lam, nr, ntheta, log_depth=log_depth).value
    fine = hardy_constant(domain, lam, 4 * nr, ntheta, log_depth=2 * log_depth).value
    return coarse, fine, (4 * fine - coarse) / 3


# --------------------------------------------------------------------------
# singular potential


def _H(r, alpha):
    return r ** 2 / (4 * (1 - r) ** 2) + r ** (2 - alpha)


def singular_hardy_bound(alpha: float, samples: int = 4096, steps: int = 40):
    """C_alpha = min over (0,1) of r^2 (1/(4(1-r)^2) + r^{-alpha}); returns (C, argmin)."""
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    r = (np.arange(samples) + 0.5) / samples
    i = int(np.argmin(_H(r, alpha)))
    lo = r[max(i - 1, 0)] if i > 0 else r[0] / 2
    hi = r[min(i + 1, samples - 1)] if i < samples - 1 else (1 + r[-1]) / 2

    def dH(x):
        return x / (2 * (1 - x) ** 3) + (2 - alpha) * x ** (1 - alpha)

    if dH(lo) < 0 < dH(hi):
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if dH(mid) < 0:
                lo = mid
            else:
                hi = mid
        rs = 0.5 * (lo + hi)
    else:
        rs = r[i]
    return float(_H(rs, alpha)), float(rs)


def singular_hardy_constant(alpha: float, grid: Grid) -> SpectralResult:
    """min (int |grad u|^2 + u^2/|x|^alpha) / (int u^2/|x|^2) on a ball grid."""
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    if not grid.domain.bounded_at_origin:
        raise ValueError("the singular quotient is posed on the ball")
    out = _pencil_min(grid, 0.0, lambda r, *_: r ** (-alpha), f"r^-{alpha:g}")
    out.meta = {"alpha": alpha, "bound": singular_hardy_bound(alpha)[0], **grid.describe()}
    return out


# --------------------------------------------------------------------------
# angular Sturm-Liouville problems


def angular_weight(weight_id: str, **params):
    """Weight function for the angular problems.

    omega: cos^{n-1} sin^{n-1} (needs n); w_l: sin^{N-l-1} cos^{l-1} (needs N, l);
    w_mn: cos^{m-1} sin^{n-1} (needs m, n).
    """
    if weight_id == "omega":
        n = params["n"]
        return lambda t: (np.cos(t) * np.sin(t)) ** (n - 1)
    if weight_id == "w_l":
        N, l = params["N"], params["l"]
        return lambda t: np.sin(t) ** (N - l - 1) * np.cos(t) ** (l - 1)
    if weight_id == "w_mn":
        m, n = params["m"], params["n"]
        return lambda t: np.cos(t) ** (m - 1) * np.sin(t) ** (n - 1)
    raise ValueError(f"unknown weight id {weight_id!r}")


@dataclass
class AngularProfile:
    theta: np.ndarray
    psi: np.ndarray
    weight: np.ndarray
    cell_mass: np.ndarray
    face_weight: Optional[np.ndarray] = None

    @property
    def spacing(self) -> float:
        return float(self.theta[1] - self.theta[0])

    def mass(self) -> float:
        """int psi^2 w."""
        return float(np.sum(self.psi ** 2 * self.cell_mass))

    def gradient_energy(self) -> float:
        """int psi'^2 w from face differences."""
        if self.face_weight is None:
            raise ValueError("profile has no face weights")
        return float(np.sum(self.face_weight * np.diff(self.psi) ** 2) / self.spacing)

    def with_values(self, psi) -> "AngularProfile":
        return AngularProfile(self.theta, np.asarray(psi, float) * np.ones_like(self.theta),
                              self.weight, self.cell_mass, self.face_weight)

    def write_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.theta, self.psi, self.weight]), delimiter=",",
                   header="theta,psi,omega", comments="", fmt="%.17g")

    def inner(self, other) -> float:
        return float(np.sum(self.psi * other.psi * self.cell_mass))


def angular_eigs(weight_id: str, box: float = math.pi / 4, k: int = 1, ncells: int = 512,
                 **params) -> list:
    """Lowest k+1 Neumann eigenpairs of -(w psi')' = mu w psi on (0, box).

    Eigenvectors are normalised in L^2(w); nonconstant modes are signed so that
    psi is positive at the right end of the box.
    """
    if ncells < 8:
        raise ValueError("need at least 8 cells")
    w = angular_weight(weight_id, **params)
    edges = np.linspace(0.0, box, ncells + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    h = box / ncells
    mass = w(centers) * h
    cond = w(edges[1:-1]) / h
    diag = np.zeros(ncells)
    diag[:-1] += cond
    diag[1:] += cond
    # symmetric scaling D^{-1/2} K D^{-1/2}
    s = 1.0 / np.sqrt(mass)
    d = diag * s * s
    e = -cond * s[:-1] * s[1:]
    vals, vecs = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, k))
    out = []
    for j in range(k + 1):
        psi = vecs[:, j] * s
        psi /= math.sqrt(np.sum(psi * psi * mass))
        if (j == 0 and psi.sum() < 0) or (j > 0 and psi[-1] < 0):
            psi = -psi
        mu = float(vals[j])
        # residual of K psi = mu M psi, relative to the operator scale
        Kpsi = diag * psi
        Kpsi[:-1] -= cond * psi[1:]
        Kpsi[1:] -= cond * psi[:-1]
        r = Kpsi - mu * mass * psi
        scale = max(abs(mu), float(np.max(d))) * math.sqrt(np.sum(mass * psi ** 2))
        res = float(math.sqrt(np.sum(r ** 2 / mass)) / scale)
        prof = AngularProfile(centers, psi, w(centers), mass, w(edges[1:-1]))
        out.append(SpectralResult(mu, prof, 1, res,
                                  {"weight": weight_id, "box": box, "ncells": ncells, "index": j,
                                   **params}))
    return out
