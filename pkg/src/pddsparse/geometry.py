"""Skeleton discretisation of a square domain.

The domain ``[-L/2, L/2]^2`` is cut into ``m x m`` square subdomains of side
``H = L/m``.  Knots sit on the interior grid lines with spacing ``dz = 1/n``,
so every knot has integer lattice coordinates ``(ix, iy)`` in units of ``dz``
measured from the lower-left corner of the domain.  All geometric predicates
are evaluated on those integers; floating point positions are derived.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

SIDES = ("E", "N", "W", "S")
MID, CROSSING, DIRICHLET = "mid", "crossing", "boundary-dirichlet"


class ConfigurationError(ValueError):
    pass


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DiscretizationConfig:
    """Square tessellation parameters.

    ``side`` is the full side length ``L`` of the domain, ``m`` the number of
    subdomains per side, ``n`` the linear knot density and ``elongation`` the
    number of knots appended past each patch corner on a stencil.
    """

    side: float
    m: int
    n: float
    elongation: int = 3

    @property
    def half_side(self) -> float:
        return 0.5 * self.side

    @property
    def H(self) -> float:
        return self.side / self.m

    @property
    def dz(self) -> float:
        return 1.0 / self.n

    @property
    def knots_per_side(self) -> int:
        """Number of knot intervals along one subdomain side (``n*H``)."""
        return int(round(self.n * self.H))

    def validate(self) -> None:
        if not self.side > 0:
            raise ConfigurationError(f"domain side must be positive, got {self.side}")
        if int(self.m) != self.m or self.m < 2:
            raise ConfigurationError(
                f"need m >= 2 subdomains per side for interior interfaces, got {self.m}")
        if not self.n > 0:
            raise ConfigurationError(f"knot density must be positive, got {self.n}")
        nH = self.n * self.H
        if abs(nH - round(nH)) > 1e-9 * max(1.0, nH) or round(nH) < 1:
            raise ConfigurationError(
                f"n*H = {nH!r} must be a positive integer so knots hit every crossing")
        if self.elongation < 0:
            raise ConfigurationError("elongation must be >= 0")


@dataclass(frozen=True)
class Knot:
    index: int
    lattice: tuple[int, int]
    position: tuple[float, float]
    kind: str
    interfaces: tuple[str, ...]


@dataclass(frozen=True)
class Stencil:
    """Collinear knots interpolating the solution on one patch side.

    ``axis`` is ``"x"`` for horizontal lines (N/S sides, arc length grows with
    x) and ``"y"`` for vertical lines (E/W sides).  ``origin`` is the lattice
    coordinate of the first member along that axis.
    """

    side: str
    axis: str
    line: int
    origin: int
    members: tuple[int, ...]
    z: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Patch:
    owner: int
    lattice_bounds: tuple[int, int, int, int]  # ix0, ix1, iy0, iy1
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    stencils: dict  # side -> Stencil, interface sides only
    dirichlet_sides: tuple[str, ...]

    @property
    def area(self) -> float:
        xmin, xmax, ymin, ymax = self.bounds
        return (xmax - xmin) * (ymax - ymin)

    @property
    def floating(self) -> bool:
        return not self.dirichlet_sides

    def side_segment(self, side: str) -> tuple[tuple[float, float], tuple[float, float]]:
        xmin, xmax, ymin, ymax = self.bounds
        return {
            "E": ((xmax, ymin), (xmax, ymax)),
            "N": ((xmin, ymax), (xmax, ymax)),
            "W": ((xmin, ymin), (xmin, ymax)),
            "S": ((xmin, ymin), (xmax, ymin)),
        }[side]


@dataclass
class Discretization:
    """Knots in system order (Dirichlet knots last) with their patches."""

    config: DiscretizationConfig
    knots: list[Knot]
    patches: dict[int, Patch]
    geometric_order: np.ndarray  # geometric index -> system index
    n_dirichlet: int
    _lattice_index: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.knots)

    @property
    def n_interior(self) -> int:
        return self.N - self.n_dirichlet

    @property
    def positions(self) -> np.ndarray:
        return np.array([k.position for k in self.knots])

    def knot_at(self, ix: int, iy: int) -> int:
        return self._lattice_index[(ix, iy)]

    def find_knot(self, x: float, y: float) -> int:
        cfg = self.config
        ix = (x + cfg.half_side) * cfg.n
        iy = (y + cfg.half_side) * cfg.n
        key = (int(round(ix)), int(round(iy)))
        if abs(ix - key[0]) > 1e-9 or abs(iy - key[1]) > 1e-9 or key not in self._lattice_index:
            raise GeometryError(f"no knot at ({x}, {y})")
        return self._lattice_index[key]

    def is_dirichlet(self, i: int) -> bool:
        return i >= self.n_interior

    def stencil_pattern(self) -> list[np.ndarray]:
        """Sorted column indices per row (stencil union plus diagonal)."""
        rows = []
        for i in range(self.N):
            cols = {i}
            if i in self.patches:
                for st in self.patches[i].stencils.values():
                    cols.update(st.members)
            rows.append(np.array(sorted(cols), dtype=np.int64))
        return rows

    def iter_stencils(self) -> Iterator[tuple[int, Stencil]]:
        for i, p in self.patches.items():
            for st in p.stencils.values():
                yield i, st

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "config": {"side": cfg.side, "m": cfg.m, "n": cfg.n, "elongation": cfg.elongation,
                       "H": cfg.H, "dz": cfg.dz},
            "N": self.N,
            "n_dirichlet": self.n_dirichlet,
            "knots": [{"index": k.index, "position": list(k.position), "kind": k.kind,
                       "interfaces": list(k.interfaces)} for k in self.knots],
            "patches": [{"owner": p.owner, "bounds": list(p.bounds),
                         "dirichlet_sides": list(p.dirichlet_sides),
                         "stencils": {s: {"members": list(st.members), "z": list(st.z),
                                          "axis": st.axis}
                                      for s, st in p.stencils.items()}}
                        for _, p in sorted(self.patches.items())],
            "geometric_order": self.geometric_order.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _classify(ix: int, iy: int, q: int, top: int) -> str:
    if ix in (0, top) or iy in (0, top):
        return DIRICHLET
    if ix % q == 0 and iy % q == 0:
        return CROSSING
    return MID


def build_discretization(cfg: DiscretizationConfig) -> Discretization:
    cfg.validate()
    q = cfg.knots_per_side
    m = int(cfg.m)
    top = m * q
    dz = cfg.dz
    lo = -cfg.half_side

    # geometric (row-major in iy, ix) enumeration of all knots on interior lines
    lattice = set()
    for k in range(1, m):
        for p in range(top + 1):
            lattice.add((k * q, p))
            lattice.add((p, k * q))
    geometric = sorted(lattice, key=lambda t: (t[1], t[0]))
    kinds = [_classify(ix, iy, q, top) for ix, iy in geometric]
    interior = [g for g, kd in enumerate(kinds) if kd != DIRICHLET]
    boundary = [g for g, kd in enumerate(kinds) if kd == DIRICHLET]
    system_of = np.empty(len(geometric), dtype=np.int64)
    for s, g in enumerate(interior + boundary):
        system_of[g] = s

    knots: list[Knot] = [None] * len(geometric)  # type: ignore[list-item]
    index = {}
    for g, (ix, iy) in enumerate(geometric):
        s = int(system_of[g])
        ifaces = []
        if ix % q == 0 and 0 < ix < top:
            ifaces.append(f"x{ix // q}")
        if iy % q == 0 and 0 < iy < top:
            ifaces.append(f"y{iy // q}")
        knots[s] = Knot(s, (ix, iy), (lo + ix * dz, lo + iy * dz), kinds[g], tuple(ifaces))
        index[(ix, iy)] = s

    disc = Discretization(cfg, knots, {}, system_of, len(boundary), index)
    for kn in knots:
        if kn.kind != DIRICHLET:
            disc.patches[kn.index] = _build_patch(disc, kn, q, top)
    return disc


def _build_patch(disc: Discretization, kn: Knot, q: int, top: int) -> Patch:
    ix, iy = kn.lattice
    on_vertical = ix % q == 0
    on_horizontal = iy % q == 0
    if on_vertical and on_horizontal:
        ix0, ix1, iy0, iy1 = ix - q, ix + q, iy - q, iy + q
    elif on_vertical:
        l = iy // q
        ix0, ix1, iy0, iy1 = ix - q, ix + q, l * q, (l + 1) * q
    else:
        k = ix // q
        ix0, ix1, iy0, iy1 = k * q, (k + 1) * q, iy - q, iy + q

    cfg = disc.config
    lo, dz, e = -cfg.half_side, cfg.dz, cfg.elongation
    stencils = {}
    dirichlet = []
    for side, axis, line, a, b in (("E", "y", ix1, iy0, iy1), ("N", "x", iy1, ix0, ix1),
                                   ("W", "y", ix0, iy0, iy1), ("S", "x", iy0, ix0, ix1)):
        if line in (0, top):
            dirichlet.append(side)
            continue
        start, stop = max(0, a - e), min(top, b + e)
        if axis == "y":
            members = tuple(disc.knot_at(line, p) for p in range(start, stop + 1))
        else:
            members = tuple(disc.knot_at(p, line) for p in range(start, stop + 1))
        z = tuple((p - start) * dz for p in range(start, stop + 1))
        stencils[side] = Stencil(side, axis, line, start, members, z)
    bounds = (lo + ix0 * dz, lo + ix1 * dz, lo + iy0 * dz, lo + iy1 * dz)
    return Patch(kn.index, (ix0, ix1, iy0, iy1), bounds, stencils, tuple(dirichlet))


def is_valid_tessellation(cfg: DiscretizationConfig) -> tuple[bool, str]:
    """Connectivity validity of the square tessellation.

    Requires at least nine subdomains, a 3x3 block of floating subdomains and
    side-by-side adjacency of every subdomain.  On the square grid the floating
    subdomains form the inner ``(m-2) x (m-2)`` block.
    """
    m = int(cfg.m)
    if m * m < 9:
        return False, f"only {m * m} subdomains (< 9); no 3x3 floating subtessellation"
    if m - 2 < 3:
        return False, f"no 3x3 floating subtessellation (inner block is {max(m - 2, 0)}x{max(m - 2, 0)})"
    # every square of an m x m grid with m >= 2 shares a side with a neighbour
    return True, "valid"


def arc_coordinate(patch: Patch, side: str, point, tol: float | None = None) -> float:
    """Arc length of ``point`` along ``side`` measured from the stencil origin."""
    if side not in patch.stencils:
        raise GeometryError(f"side {side} of patch {patch.owner} is not an interface")
    st = patch.stencils[side]
    xmin, xmax, ymin, ymax = patch.bounds
    scale = max(abs(xmin), abs(xmax), abs(ymin), abs(ymax), 1.0)
    tol = 1e-12 * 2 * scale if tol is None else tol
    x, y = float(point[0]), float(point[1])
    fixed = {"E": (x, xmax), "W": (x, xmin), "N": (y, ymax), "S": (y, ymin)}[side]
    along, a, b = (y, ymin, ymax) if st.axis == "y" else (x, xmin, xmax)
    if abs(fixed[0] - fixed[1]) > tol or along < a - tol or along > b + tol:
        raise GeometryError(f"point {point} is not on side {side} of patch {patch.bounds}")
    return along - _first_coordinate(patch, st)


def _spacing(st: Stencil) -> float:
    return st.z[1] - st.z[0]


def _first_coordinate(patch: Patch, st: Stencil) -> float:
    # coordinate along the line of the first stencil member
    xmin, _, ymin, _ = patch.bounds
    ix0, _, iy0, _ = patch.lattice_bounds
    if st.axis == "y":
        return ymin - (iy0 - st.origin) * _spacing(st)
    return xmin - (ix0 - st.origin) * _spacing(st)


def side_origin(patch: Patch, side: str) -> float:
    """Line coordinate (x for N/S, y for E/W) of the stencil origin."""
    return _first_coordinate(patch, patch.stencils[side])


def count_knots(cfg: DiscretizationConfig) -> int:
    """Closed-form knot count, used to size sweeps without building them."""
    q = cfg.knots_per_side
    m = int(cfg.m)
    per_line = m * q + 1
    return 2 * (m - 1) * per_line - (m - 1) ** 2


def lattice_distance_to_patch_boundary(patch: Patch, kn: Knot) -> int:
    ix, iy = kn.lattice
    ix0, ix1, iy0, iy1 = patch.lattice_bounds
    return min(ix - ix0, ix1 - ix, iy - iy0, iy1 - iy)


def patch_shape_ok(patch: Patch, cfg: DiscretizationConfig) -> bool:
    H = cfg.H
    xmin, xmax, ymin, ymax = patch.bounds
    w, h = xmax - xmin, ymax - ymin
    return math.isclose(max(w, h), 2 * H) and (math.isclose(min(w, h), H) or math.isclose(min(w, h), 2 * H))
