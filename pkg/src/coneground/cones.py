"""Monotonicity cones K+, K-, K-pi2 and their triple-revolution analogues.

Fields in a cone are nonnegative, monotone along the cone axis (theta for
double revolution, phi for triple) on (0, pi/4) or (0, pi/2), and even across
pi/4 when the cone asks for it.  On a half-box grid the evenness is built in
through the reflection condition at pi/4 and is not checked separately.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .discretize import HALF, QUARTER, Field, Grid

_VARIANTS = {
    # variant: (triple, direction, even, allowed monotone boxes)
    "K+": (False, "increasing", True, (QUARTER, HALF)),
    "K-": (False, "decreasing", True, (QUARTER, HALF)),
    "K-pi2": (False, "decreasing", False, (HALF,)),
    "K3+": (True, "increasing", True, (QUARTER, HALF)),
    "K3-": (True, "decreasing", True, (QUARTER, HALF)),
    "K3-pi2": (True, "decreasing", False, (HALF,)),
}

_ALIASES = {"K+": "K+", "Kplus": "K+", "K-": "K-", "Kminus": "K-", "K-pi2": "K-pi2",
            "K−": "K-", "K₊": "K+", "K₋": "K-"}


class ConeError(ValueError):
    pass


@dataclass(frozen=True)
class ConeSpec:
    variant: str

    def __post_init__(self):
        v = _ALIASES.get(self.variant, self.variant)
        if v not in _VARIANTS:
            raise ConeError(f"unknown cone {self.variant!r}; expected one of {sorted(_VARIANTS)}")
        object.__setattr__(self, "variant", v)

    @property
    def triple(self) -> bool:
        return _VARIANTS[self.variant][0]

    @property
    def monotone_axis(self) -> str:
        return "phi" if self.triple else "theta"

    @property
    def direction(self) -> str:
        return _VARIANTS[self.variant][1]

    @property
    def even(self) -> bool:
        return _VARIANTS[self.variant][2]

    @property
    def allowed_boxes(self) -> tuple:
        return _VARIANTS[self.variant][3]

    @property
    def box(self):
        """The required box when it is unique, else None."""
        boxes = self.allowed_boxes
        return boxes[0] if len(boxes) == 1 else None

    @property
    def needs_equal_blocks(self) -> bool:
        return self.even

    def check_grid(self, grid: Grid) -> None:
        if grid.is_triple != self.triple:
            raise ConeError(f"cone {self.variant} does not fit a "
                            f"{'triple' if grid.is_triple else 'double'} grid")
        if not any(np.isclose(grid.monotone_box, b) for b in self.allowed_boxes):
            raise ConeError(f"cone {self.variant} cannot live on the box (0, {grid.monotone_box:.4f})")
        if self.even and grid.split.m != grid.split.n:
            raise ConeError(f"cone {self.variant} needs m = n, split is {grid.split}")


def cone_for(name: str, triple: bool) -> ConeSpec:
    """Map a plain cone name (K+, K-, K-pi2) to the double or triple variant."""
    base = ConeSpec(name).variant
    if triple and not base.startswith("K3"):
        base = "K3" + base[1:]
    if not triple and base.startswith("K3"):
        base = "K" + base[2:]
    return ConeSpec(base)


@dataclass
class MembershipReport:
    nonneg_violation: float
    monotonicity_violation: float
    evenness_violation: float
    tol: float
    is_member: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _axis(grid: Grid) -> int:
    return 2 if grid.is_triple else 1


def _mono_extent(grid: Grid, cone: ConeSpec) -> int:
    """Number of cells along the axis on which monotonicity is imposed."""
    n = grid.shape[_axis(grid)]
    if cone.even and np.isclose(grid.monotone_box, HALF):
        if n % 2:
            raise ConeError("full-box grids for even cones need an even cell count")
        return n // 2
    return n


def _axis_spacing(grid: Grid) -> float:
    edges = grid.phi_edges if grid.is_triple else grid.theta_edges
    return float(edges[1] - edges[0])


def is_member(field: Field, cone: ConeSpec, tol: float = 1e-10) -> MembershipReport:
    """Worst violations of nonnegativity, axis monotonicity (as a slope) and evenness."""
    grid = field.grid
    cone.check_grid(grid)
    u = field.values
    mask = grid.mask
    ax = _axis(grid)
    k = _mono_extent(grid, cone)

    nonneg = float(max(0.0, -u[mask].min()))

    part = np.take(u, np.arange(k), axis=ax)
    pm = np.take(mask, np.arange(k), axis=ax)
    du = np.diff(part, axis=ax) / _axis_spacing(grid)
    both = pm[tuple(slice(None) if i != ax else slice(1, None) for i in range(u.ndim))] & \
        pm[tuple(slice(None) if i != ax else slice(0, -1) for i in range(u.ndim))]
    bad = -du if cone.direction == "increasing" else du
    mono = float(max(0.0, bad[both].max())) if both.any() else 0.0

    even = 0.0
    if cone.even and np.isclose(grid.monotone_box, HALF):
        mirrored = np.flip(u, axis=ax)
        mm = mask & np.flip(mask, axis=ax)
        even = float(np.abs(u - mirrored)[mm].max()) if mm.any() else 0.0

    member = nonneg <= tol and mono <= tol and even <= tol
    return MembershipReport(nonneg, mono, even, float(tol), bool(member))


def rearrange_line(values, weights=None, decreasing: bool = True) -> np.ndarray:
    """Monotone rearrangement of one line: sort the values into the required order.

    Values are reassigned node by node without transporting the weights, which
    is exact when the weights along the line are equal.
    """
    vals = np.asarray(values, float)
    out = np.sort(vals, kind="stable")
    return out[::-1].copy() if decreasing else out


def project(field: Field, cone: ConeSpec) -> Field:
    """Clamp negatives, symmetrise across pi/4, then rearrange each axis line."""
    grid = field.grid
    cone.check_grid(grid)
    ax = _axis(grid)
    mask = grid.mask
    u = np.maximum(field.values, 0.0)

    full_even = cone.even and np.isclose(grid.monotone_box, HALF)
    if full_even:
        mirrored = np.flip(u, axis=ax)
        mm = mask & np.flip(mask, axis=ax)
        u = np.where(mm, 0.5 * (u + mirrored), u)

    k = _mono_extent(grid, cone)
    decreasing = cone.direction == "decreasing"
    # move the monotone axis last and walk over the remaining index lines
    moved = np.moveaxis(u, ax, -1)
    mmask = np.moveaxis(mask, ax, -1)
    out = moved.copy()
    lead = moved.shape[:-1]
    if mmask[..., :k].all():
        seg = np.sort(moved[..., :k], axis=-1, kind="stable")
        out[..., :k] = seg[..., ::-1] if decreasing else seg
        lead = ()
    for idx in (np.ndindex(*lead) if lead else ()):
        line_mask = mmask[idx][:k]
        if line_mask.sum() < 2:
            continue
        seg = moved[idx][:k]
        sel = np.nonzero(line_mask)[0]
        seg_new = seg.copy()
        seg_new[sel] = rearrange_line(seg[sel], decreasing=decreasing)
        out[idx][:k] = seg_new
    if full_even:
        n = moved.shape[-1]
        out[..., n - k:] = np.flip(out[..., :k], axis=-1)
    u = np.moveaxis(out, -1, ax)
    u = np.where(mask, u, 0.0)
    return Field(grid, u)


def project_vector(grid: Grid, vec, cone: ConeSpec) -> np.ndarray:
    return project(Field.from_vector(grid, vec), cone).vector
