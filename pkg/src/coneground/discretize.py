"""Cell-centred grids and weighted finite-volume operators on the reduced box.

The operator  -Laplacian + lambda + V  is assembled in divergence form against
the measure r^{N-1} * (angular density).  With S the stiffness matrix and W the
cell measures, the discrete operator is A = W^{-1} S, which is symmetric in the
inner product <u, v> = sum(u * v * W).

Double revolution uses (r, theta); triple revolution uses (r, theta, phi).
Field arrays are indexed [ir, itheta] or [ir, itheta, iphi].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .geometry import (Domain, RevolutionSplit, angular_density_double,
                       angular_density_triple)

MIN_CELLS = 8
QUARTER = np.pi / 4
HALF = np.pi / 2


class GridError(ValueError):
    pass


def _radial_moment(edges, k):
    """Exact cell integrals of r^k over [edges[i], edges[i+1]] (k > -1)."""
    return (edges[1:] ** (k + 1) - edges[:-1] ** (k + 1)) / (k + 1)


@dataclass(eq=False)
class Grid:
    domain: Domain
    r_edges: np.ndarray
    theta_edges: np.ndarray
    phi_edges: Optional[np.ndarray]
    mask: np.ndarray
    r: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)
    phi: Optional[np.ndarray] = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.r = 0.5 * (self.r_edges[1:] + self.r_edges[:-1])
        self.theta = 0.5 * (self.theta_edges[1:] + self.theta_edges[:-1])
        self.phi = None if self.phi_edges is None else 0.5 * (self.phi_edges[1:] + self.phi_edges[:-1])
        self.weights = np.where(self.mask, self._cell_measure(), 0.0)
        self._index = -np.ones(self.mask.shape, dtype=np.int64)
        self._index[self.mask] = np.arange(int(self.mask.sum()))
        for arr in (self.r_edges, self.theta_edges, self.phi_edges, self.mask, self.weights):
            if arr is not None:
                arr.setflags(write=False)

    # -- shape helpers -------------------------------------------------
    @property
    def split(self) -> RevolutionSplit:
        return self.domain.split

    @property
    def N(self) -> int:
        return self.split.N

    @property
    def is_triple(self) -> bool:
        return self.phi_edges is not None

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def nr(self) -> int:
        return self.shape[0]

    @property
    def ntheta(self) -> int:
        return self.shape[1]

    @property
    def nphi(self) -> int:
        return self.shape[2] if self.is_triple else 0

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def theta_box(self) -> float:
        return float(self.theta_edges[-1])

    @property
    def phi_box(self) -> Optional[float]:
        return None if self.phi_edges is None else float(self.phi_edges[-1])

    @property
    def monotone_box(self) -> float:
        """Upper end of the angle carrying the cone monotonicity (theta or phi)."""
        return self.phi_box if self.is_triple else self.theta_box

    @property
    def h(self) -> float:
        """Largest radial cell width."""
        return float(np.max(np.diff(self.r_edges)))

    def mesh(self):
        """Broadcastable cell-centre coordinate arrays (r, theta[, phi])."""
        if self.is_triple:
            return np.meshgrid(self.r, self.theta, self.phi, indexing="ij")
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def angular_density(self, theta=None, phi=None):
        m, n = self.split.m, self.split.n
        theta = self.theta if theta is None else theta
        if self.is_triple:
            phi = self.phi if phi is None else phi
            return angular_density_triple(theta, phi, m, n, self.split.l)
        return angular_density_double(theta, m, n)

    def _cell_measure(self):
        rad = _radial_moment(self.r_edges, self.N - 1)
        dth = np.diff(self.theta_edges)
        if self.is_triple:
            th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
            dph = np.diff(self.phi_edges)
            ang = angular_density_triple(th, ph, *self.split.parts) * np.outer(dth, dph)
            return rad[:, None, None] * ang[None, :, :]
        ang = angular_density_double(self.theta, self.split.m, self.split.n) * dth
        return rad[:, None] * ang[None, :]

    # -- packing ------------------------------------------------------------
    def pack(self, values) -> np.ndarray:
        return np.asarray(values, float)[self.mask]

    def unpack(self, vec) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.mask] = vec
        return out

    @property
    def index(self) -> np.ndarray:
        return self._index

    def evaluate(self, func: Callable) -> np.ndarray:
        """Sample func(r, theta[, phi]) at cell centres; zero outside the domain."""
        vals = np.asarray(func(*self.mesh()), float) * np.ones(self.shape)
        return np.where(self.mask, vals, 0.0)

    def describe(self) -> dict:
        return {
            "domain": self.domain.label,
            "split": list(self.split.parts),
            "nr": self.nr, "ntheta": self.ntheta, "nphi": self.nphi,
            "theta_box": self.theta_box, "phi_box": self.phi_box,
            "graded": bool(not np.allclose(np.diff(self.r_edges), np.diff(self.r_edges)[-1])),
        }


def build_grid(domain: Domain, nr: int, ntheta: int, nphi: Optional[int] = None,
               theta_box: Optional[float] = None, phi_box: Optional[float] = None,
               r_min: Optional[float] = None) -> Grid:
    """Cell-centred tensor grid on the reduced box of `domain`.

    theta_box (double) or phi_box (triple) selects the half box pi/4, used with
    cones that are even across pi/4, or the full box pi/2.  r_min switches a
    ball-type domain to geometric radial cells [0, r_min], ..., [., R].
    """
    if nr < MIN_CELLS or ntheta < MIN_CELLS or (nphi is not None and nphi < MIN_CELLS):
        raise GridError(f"cell counts must be >= {MIN_CELLS}")
    triple = domain.split.is_triple
    if triple and nphi is None:
        raise GridError("triple-revolution grids need nphi")
    if not triple and nphi is not None:
        raise GridError("nphi given for a double-revolution domain")

    cls = domain.symmetry_class
    if triple:
        theta_box = HALF if theta_box is None else theta_box
        if theta_box != HALF:
            raise GridError("triple grids span theta in (0, pi/2)")
        if phi_box is None:
            phi_box = HALF if cls == "triple-K-pi2" else QUARTER
        if phi_box not in (QUARTER, HALF):
            raise GridError("phi box must be pi/4 or pi/2")
    else:
        if theta_box is None:
            theta_box = QUARTER if cls == "pi4-annular" and domain.split.m == domain.split.n else HALF
        if theta_box not in (QUARTER, HALF):
            raise GridError("theta box must be pi/4 or pi/2")
        if theta_box == QUARTER and domain.split.m != domain.split.n:
            raise GridError("the half box (0, pi/4) needs m = n")

    r_lo, r_hi = domain.radial_range()
    if r_min is not None:
        if not domain.bounded_at_origin:
            raise GridError("geometric radial grading is only defined for ball-type domains")
        if not 0 < r_min < r_hi:
            raise GridError("need 0 < r_min < R")
        r_edges = np.concatenate([[0.0], np.geomspace(r_min, r_hi, nr)])
    else:
        r_edges = np.linspace(r_lo, r_hi, nr + 1)
    theta_edges = np.linspace(0.0, theta_box, ntheta + 1)
    phi_edges = np.linspace(0.0, phi_box, nphi + 1) if triple else None

    rc = 0.5 * (r_edges[1:] + r_edges[:-1])
    tc = 0.5 * (theta_edges[1:] + theta_edges[:-1])
    if triple:
        pc = 0.5 * (phi_edges[1:] + phi_edges[:-1])
        R, T, P = np.meshgrid(rc, tc, pc, indexing="ij")
        inner = domain.inner(P, T)
        outer = domain.outer(P, T)
    else:
        R, T = np.meshgrid(rc, tc, indexing="ij")
        inner = domain.inner(T)
        outer = domain.outer(T)
    mask = (R > inner) & (R < outer)
    if not mask.any():
        raise GridError("grid has no active cells")
    return Grid(domain, r_edges, theta_edges, phi_edges, mask)


# --------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        if vals.shape != self.grid.shape:
            raise GridError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field has non-finite values")
        self.values = np.where(self.grid.mask, vals, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "Field":
        return cls(grid, grid.evaluate(func))

    @classmethod
    def from_vector(cls, grid: Grid, vec) -> "Field":
        return cls(grid, grid.unpack(vec))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @property
    def vector(self) -> np.ndarray:
        return self.grid.pack(self.values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __mul__(self, c):
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        return Field(self.grid, self.values - other.values)


# --------------------------------------------------------------------------
# operators


@dataclass(eq=False)
class DiscreteOperator:
    """A = W^{-1} S on the active cells; S is symmetric positive semidefinite."""

    grid: Grid
    stiffness: sp.csr_matrix
    weights: np.ndarray
    lam: float
    potential_id: str
    boundary: dict

    @property
    def shape(self):
        return self.stiffness.shape

    def apply(self, vec) -> np.ndarray:
        return self.stiffness @ np.asarray(vec, float) / self.weights

    def apply_field(self, u: Field) -> Field:
        return Field.from_vector(self.grid, self.apply(u.vector))

    def inner(self, u, v) -> float:
        return float(np.dot(np.asarray(u) * self.weights, np.asarray(v)))

    def energy_form(self, vec) -> float:
        """<A u, u> in the weighted inner product = u^T S u."""
        vec = np.asarray(vec, float)
        return float(vec @ (self.stiffness @ vec))


PotentialLike = Optional[Callable]


def _potential_values(grid: Grid, potential: PotentialLike):
    if potential is None:
        return np.zeros(grid.size)
    vals = grid.pack(grid.evaluate(potential))
    if np.any(vals < 0):
        raise GridError("potentials must be nonnegative")
    return vals


class _Assembler:
    def __init__(self, grid: Grid):
        self.grid = grid
        self.rows, self.cols, self.vals = [], [], []
        self.diag = np.zeros(grid.size)

    def couple(self, ia, ib, cond):
        """Add cond * (u_a - u_b)^2 to the form for active index arrays ia, ib."""
        self.rows += [ia, ib, ia, ib]
        self.cols += [ia, ib, ib, ia]
        self.vals += [cond, cond, -cond, -cond]

    def dirichlet(self, ia, cond):
        np.add.at(self.diag, ia, cond)

    def faces(self, axis, cond_interior, cond_bdry_lo=None, cond_bdry_hi=None):
        """Interior faces normal to `axis`; inactive neighbours count as Dirichlet."""
        mask, idx = self.grid.mask, self.grid.index
        n = mask.shape[axis]
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        ma, mb = mask[lo], mask[hi]
        cond = np.broadcast_to(cond_interior, ma.shape)
        both = ma & mb
        self.couple(idx[lo][both], idx[hi][both], cond[both])
        if cond_bdry_lo is not None:
            # active cell below an inactive one: Dirichlet through the upper face
            only_a = ma & ~mb
            self.dirichlet(idx[lo][only_a], np.broadcast_to(cond_bdry_lo, ma.shape)[only_a])
            only_b = mb & ~ma
            self.dirichlet(idx[hi][only_b], np.broadcast_to(cond_bdry_hi, ma.shape)[only_b])

    def matrix(self):
        n = self.grid.size
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        S = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return (S + sp.diags(self.diag)).tocsr()


def _radial_dirichlet(grid: Grid, asm: _Assembler, area):
    """Dirichlet faces on the radial graph boundaries r = g1, r = g2."""
    dom = grid.domain
    mask, idx, rc = grid.mask, grid.index, grid.r
    N = grid.N
    if grid.is_triple:
        T, P = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        g_in, g_out = dom.inner(P, T), dom.outer(P, T)
    else:
        g_in, g_out = dom.inner(grid.theta), dom.outer(grid.theta)
    any_active = mask.any(axis=0)
    first = np.argmax(mask, axis=0)
    last = mask.shape[0] - 1 - np.argmax(mask[::-1], axis=0)
    cols = np.nonzero(any_active)
    i_first, i_last = first[cols], last[cols]
    area_c = area[cols]
    # outer boundary
    g = g_out[cols]
    dist = np.maximum(g - rc[i_last], 1e-300)
    asm.dirichlet(idx[(i_last,) + cols], g ** (N - 1) * area_c / dist)
    if not dom.bounded_at_origin:
        g = g_in[cols]
        dist = np.maximum(rc[i_first] - g, 1e-300)
        asm.dirichlet(idx[(i_first,) + cols], g ** (N - 1) * area_c / dist)


def _assemble(grid: Grid, lam: float, potential: PotentialLike, potential_id: str):
    N = grid.N
    asm = _Assembler(grid)
    e = grid.r_edges
    rc = grid.r
    mom = _radial_moment(e, N - 3)  # integral of r^{N-1} / r^2 over each radial cell
    dth = np.diff(grid.theta_edges)
    if grid.is_triple:
        m, n, l = grid.split.parts
        dph = np.diff(grid.phi_edges)
        TH, PH = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        area = angular_density_triple(TH, PH, m, n, l) * np.outer(dth, dph)
        # r-faces
        cond_r = (e[1:-1] ** (N - 1) / np.diff(rc))[:, None, None] * area[None]
        asm.faces(0, cond_r)
        # theta-faces
        tf = grid.theta_edges[1:-1]
        TF, PF = np.meshgrid(tf, grid.phi, indexing="ij")
        gap = np.diff(grid.theta)[:, None]
        a_t = angular_density_triple(TF, PF, m, n, l) * dph[None, :]
        cond_t = mom[:, None, None] * (a_t / gap)[None]
        half_t = mom[:, None, None] * (a_t / (0.5 * dth[:-1, None]))[None]
        half_t2 = mom[:, None, None] * (a_t / (0.5 * dth[1:, None]))[None]
        asm.faces(1, cond_t, half_t, half_t2)
        # phi-faces, carrying the 1/sin^2(theta) metric factor
        pf = grid.phi_edges[1:-1]
        TT, PP = np.meshgrid(grid.theta, pf, indexing="ij")
        gap = np.diff(grid.phi)[None, :]
        a_p = angular_density_triple(TT, PP, m, n, l) / np.sin(TT) ** 2 * dth[:, None]
        cond_p = mom[:, None, None] * (a_p / gap)[None]
        half_p = mom[:, None, None] * (a_p / (0.5 * dph[None, :-1]))[None]
        half_p2 = mom[:, None, None] * (a_p / (0.5 * dph[None, 1:]))[None]
        asm.faces(2, cond_p, half_p, half_p2)
    else:
        m, n = grid.split.m, grid.split.n
        area = angular_density_double(grid.theta, m, n) * dth
        cond_r = (e[1:-1] ** (N - 1) / np.diff(rc))[:, None] * area[None, :]
        asm.faces(0, cond_r)
        tf = grid.theta_edges[1:-1]
        a_t = angular_density_double(tf, m, n)
        cond_t = mom[:, None] * (a_t / np.diff(grid.theta))[None, :]
        half_t = mom[:, None] * (a_t / (0.5 * dth[:-1]))[None, :]
        half_t2 = mom[:, None] * (a_t / (0.5 * dth[1:]))[None, :]
        asm.faces(1, cond_t, half_t, half_t2)
    _radial_dirichlet(grid, asm, area)
    w = grid.pack(grid.weights)
    asm.diag += (lam + _potential_values(grid, potential)) * w
    S = asm.matrix()
    boundary = {
        "r_outer": "dirichlet",
        "r_inner": "reflection" if grid.domain.bounded_at_origin else "dirichlet",
        "theta": "neumann",
    }
    if grid.is_triple:
        boundary["phi"] = "neumann"
    return DiscreteOperator(grid, S, w, float(lam), potential_id, boundary)


def h_theta(theta, m: int, n: int):
    """Advection coefficient (m-1) tan(theta) - (n-1)/tan(theta) of the polar operator."""
    theta = np.asarray(theta, float)
    return (m - 1) * np.tan(theta) - (n - 1) / np.tan(theta)


def h_phi(phi):
    """tan(phi) - 1/tan(phi), the phi-advection coefficient for m = n."""
    phi = np.asarray(phi, float)
    return np.tan(phi) - 1.0 / np.tan(phi)


def _check_cone_box(grid: Grid, cone):
    if cone is None:
        return
    have = grid.monotone_box
    if not any(np.isclose(have, b) for b in cone.allowed_boxes):
        raise GridError(f"cone {cone.variant} cannot live on the box (0, {have:.4f})")
    if cone.triple != grid.is_triple:
        raise GridError(f"cone {cone.variant} does not match the grid type")


def assemble_double(grid: Grid, lam: float = 0.0, potential: PotentialLike = None,
                    potential_id: str = "none", cone=None) -> DiscreteOperator:
    """-u_rr - (N-1)u_r/r - u_tt/r^2 + h(theta) u_t/r^2 + (lam + V) u on a double grid."""
    if grid.is_triple:
        raise GridError("assemble_double needs a double-revolution grid")
    if lam < 0:
        raise GridError("lambda must be nonnegative")
    _check_cone_box(grid, cone)
    return _assemble(grid, lam, potential, potential_id)


def assemble_triple(grid: Grid, lam: float = 0.0, potential: PotentialLike = None,
                    potential_id: str = "none", cone=None) -> DiscreteOperator:
    """Spherical-coordinate operator on a triple grid with reflection on the angular edges."""
    if not grid.is_triple:
        raise GridError("assemble_triple needs a triple-revolution grid")
    if lam < 0:
        raise GridError("lambda must be nonnegative")
    if grid.phi_box == QUARTER and grid.split.m != grid.split.n:
        raise GridError("the half phi box needs m = n")
    _check_cone_box(grid, cone)
    return _assemble(grid, lam, potential, potential_id)


def assemble(grid: Grid, lam: float = 0.0, potential: PotentialLike = None,
             potential_id: str = "none", cone=None) -> DiscreteOperator:
    if grid.is_triple:
        return assemble_triple(grid, lam, potential, potential_id, cone)
    return assemble_double(grid, lam, potential, potential_id, cone)


def integrate(field: Field, grid: Optional[Grid] = None) -> float:
    grid = field.grid if grid is None else grid
    if field.grid is not grid:
        raise GridError("field lives on a different grid")
    return float(np.sum(field.values * grid.weights))


def h1_norm_sq(field: Field, grid: Optional[Grid] = None, lam: float = 0.0) -> float:
    """int (|grad u|^2 + lam u^2) dmu from face differences (equals <A u, u> for V = 0)."""
    grid = field.grid if grid is None else grid
    op = _assemble(grid, lam, None, "none")
    return op.energy_form(field.vector)


def inverse_square_mass(grid: Grid) -> np.ndarray:
    """Cell weights of the Hardy denominator int u^2 / |x|^2 dmu.

    The radial factor is the exact cell integral of r^{N-3}, so the first cell
    of a ball grid carries its true share of the singular weight.
    """
    w = grid.weights
    rad = _radial_moment(grid.r_edges, grid.N - 1)
    ratio = _radial_moment(grid.r_edges, grid.N - 3) / rad
    shape = (-1,) + (1,) * (w.ndim - 1)
    return grid.pack(w * ratio.reshape(shape))


# --------------------------------------------------------------------------
# serialization


def field_header(field: Field, **extra) -> dict:
    head = field.grid.describe()
    head.update(extra)
    return head


def write_field_csv(field: Field, path, header_path=None, **extra) -> None:
    """CSV columns r, theta[, phi], value, weight over active cells, plus a JSON header."""
    grid = field.grid
    coords = [c[grid.mask] for c in grid.mesh()]
    cols = coords + [field.values[grid.mask], grid.weights[grid.mask]]
    names = ["r", "theta"] + (["phi"] if grid.is_triple else []) + ["value", "weight"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names),
               comments="", fmt="%.17g")
    if header_path is not None:
        with open(header_path, "w") as fh:
            json.dump(field_header(field, **extra), fh, indent=2, sort_keys=True)


def read_field_csv(path, grid: Grid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, -2]
    if vals.size != grid.size:
        raise GridError(f"CSV has {vals.size} rows, grid has {grid.size} active cells")
    return Field.from_vector(grid, vals)
