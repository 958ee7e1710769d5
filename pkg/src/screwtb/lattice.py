"""Geometry of the screw-dislocated square lattice.

The infinite dislocated lattice consists of the columns of an integer grid,
each shifted in height by the normalized planar angle of its (x, y)
coordinate, together with a straight column on the axis. At fixed momentum
along the dislocation line everything reduces to a finite patch of the
plain 2-D grid plus a marked set of "cut" bonds that carry the momentum
phase: hopping across a cut bond changes the helical layer by one.

Two finite geometries are supported:

* ``open-single-core``: a (2L+1) x (2L+1) open box with one dislocation on
  the axis; the cut runs along the negative x half-line.
* ``torus-dipole``: the same box with periodic wrapping and two opposite
  dislocations joined by a finite cut segment, which removes the artificial
  outer edge entirely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Site",
    "BurgersFrame",
    "DislocatedLattice",
    "height_offset",
    "nearest_lift",
    "build_lattice",
    "burgers_frame",
    "cut_crossings",
    "loop_winding",
    "LatticeError",
]

LATTICE_FORMAT = "screwtb-lattice/1"

# Phase exponent on an upward cut crossing: hopping (x,0) -> (x,1) across the
# cut multiplies by exp(1j * CUT_WINDING * kz) and lowers the helical layer.
CUT_WINDING = -1


class LatticeError(ValueError):
    pass


def height_offset(x: int, y: int) -> float:
    """Normalized height of column (x, y): planar angle / 2pi on [-1/2, 1/2).

    The branch cut of the angle sits on the negative x axis. The axis column
    (0, 0) is assigned offset 0 by convention.
    """
    if x == 0 and y == 0:
        return 0.0
    theta = math.atan2(y, x)
    if theta >= math.pi:  # atan2 returns (-pi, pi]; fold to [-pi, pi)
        theta -= 2.0 * math.pi
    return theta / (2.0 * math.pi)


def is_axis(x: int, y: int) -> bool:
    return x == 0 and y == 0


@dataclass(frozen=True)
class Site:
    """A lattice point: integer column (x, y) and integer layer label."""

    x: int
    y: int
    z_index: int = 0

    @property
    def embedded_height(self) -> float:
        return self.z_index + height_offset(self.x, self.y)


def nearest_lift(v) -> Site:
    """Snap a point (x, y, z) with integer x, y to the nearest lattice site.

    Among the sites of column (x, y) the one whose embedded height is
    closest to z is returned; an exact half-integer tie goes to the larger
    height.
    """
    x, y, z = v
    x, y = int(x), int(y)
    h = height_offset(x, y)
    # floor(z - h + 1/2) rounds to the nearest layer with ties upward
    zi = math.floor(z - h + 0.5)
    return Site(x, y, int(zi))


def _gcd_step(p: int, q: int):
    """2x2 unimodular integer matrix M with M @ (p, q) = (gcd, 0), det M = 1."""
    if q == 0:
        if p == 0:
            return 1, np.eye(2, dtype=np.int64)
        s = 1 if p > 0 else -1
        return abs(p), np.array([[s, 0], [0, s]], dtype=np.int64)
    g = math.gcd(p, q)
    # extended gcd: u*p + v*q = g
    u, v = _xgcd(p, q)
    m = np.array([[u, v], [-q // g, p // g]], dtype=np.int64)
    return g, m


def _xgcd(a: int, b: int):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_s, old_t = -old_s, -old_t
    return old_s, old_t


def _int_inverse_3x3(u: np.ndarray) -> np.ndarray:
    """Exact inverse of a unimodular integer 3x3 matrix."""
    u = np.asarray(u, dtype=np.int64)
    det = int(round(np.linalg.det(u.astype(float))))
    if det not in (1, -1):
        raise LatticeError(f"matrix is not unimodular (det = {det})")
    adj = np.empty((3, 3), dtype=np.int64)
    for i in range(3):
        for j in range(3):
            minor = np.delete(np.delete(u, j, axis=0), i, axis=1)
            adj[i, j] = ((-1) ** (i + j)) * (
                minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0]
            )
    return adj * det  # det in {1, -1} so adj/det == adj*det


@dataclass(frozen=True)
class BurgersFrame:
    """An integer frame (a, c, b) completing a primitive Burgers vector b.

    ``matrix`` is unimodular with determinant +1 and third column equal to
    ``b``; it carries the standard-axis dislocation onto the one along b.
    """

    b: tuple[int, int, int]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        det = int(round(np.linalg.det(m.astype(float))))
        if det not in (1, -1):
            raise LatticeError("frame matrix must be unimodular")
        if tuple(int(c) for c in m[:, 2]) != tuple(self.b):
            raise LatticeError("third frame column must equal the Burgers vector")
        object.__setattr__(self, "matrix", m)

    @property
    def inverse(self) -> np.ndarray:
        return _int_inverse_3x3(self.matrix)

    def is_standard(self) -> bool:
        return self.b == (0, 0, 1) and np.array_equal(self.matrix, np.eye(3, dtype=np.int64))


def burgers_frame(b) -> BurgersFrame:
    """Complete a primitive integer vector b to a det +1 frame (a, c, b).

    Non-primitive input (gcd of entries > 1) is rejected. The completion is
    canonicalized by the gcd reduction sequence, so the output is a
    deterministic function of b.
    """
    b = tuple(int(c) for c in b)
    if b == (0, 0, 0):
        raise LatticeError("Burgers vector must be nonzero")
    if math.gcd(math.gcd(abs(b[0]), abs(b[1])), abs(b[2])) != 1:
        raise LatticeError(f"Burgers vector {b} is not primitive")
    if b == (0, 0, 1):
        return BurgersFrame(b=b, matrix=np.eye(3, dtype=np.int64))

    # Reduce b to e_x by unimodular row operations, then rotate x -> z.
    u = np.eye(3, dtype=np.int64)
    vec = np.array(b, dtype=np.int64)
    g, m = _gcd_step(int(vec[0]), int(vec[1]))
    step = np.eye(3, dtype=np.int64)
    step[:2, :2] = m
    u = step @ u
    vec = step @ vec
    g, m = _gcd_step(int(vec[0]), int(vec[2]))
    step = np.eye(3, dtype=np.int64)
    step[np.ix_([0, 2], [0, 2])] = m
    u = step @ u
    vec = step @ vec
    if not (vec[0] == 1 and vec[1] == 0 and vec[2] == 0):
        raise LatticeError(f"internal reduction failure for {b}")
    # cyclic permutation (x,y,z) -> (y,z,x) has determinant +1 and moves e_x to e_z
    perm = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=np.int64)
    u = perm @ u
    t = _int_inverse_3x3(u)
    if int(round(np.linalg.det(t.astype(float)))) == -1:
        t = t.copy()
        t[:, 0] = -t[:, 0]
    return BurgersFrame(b=b, matrix=t)


class DislocatedLattice:
    """A finite momentum-slice realization of the dislocated lattice.

    Sites are (x, y) integer pairs with |x|, |y| <= L, enumerated in
    lexicographic order. ``cut_bonds`` maps directed bonds (a, b) to the
    integer layer change incurred when hopping a -> b; the reverse hop
    incurs the opposite change.
    """

    def __init__(
        self,
        half_width: int,
        boundary: str = "open-single-core",
        core_radius: float = 0.0,
        separation: int | None = None,
        frame: BurgersFrame | None = None,
        cut_row: int = 0,
    ):
        if half_width < 2:
            raise LatticeError("half_width must be at least 2")
        if boundary not in ("open-single-core", "torus-dipole"):
            raise LatticeError(f"unknown boundary {boundary!r}")
        if core_radius >= half_width:
            raise LatticeError("core removal radius must be smaller than the half width")
        if boundary == "torus-dipole":
            if separation is None:
                raise LatticeError("torus-dipole boundary requires a separation")
            if not (1 <= separation < 2 * half_width):
                raise LatticeError("dipole separation must satisfy 1 <= d < 2L")
            if core_radius > 0:
                raise LatticeError("core removal is only supported on the open geometry")
            if cut_row != 0:
                raise LatticeError("cut_row is only supported on the open geometry")
        else:
            separation = None
        if cut_row < 0 or cut_row >= half_width:
            raise LatticeError("cut_row must lie in [0, L)")

        self.half_width = int(half_width)
        self.boundary = boundary
        self.core_radius = float(core_radius)
        self.separation = separation
        self.frame = frame if frame is not None else burgers_frame((0, 0, 1))
        self.cut_row = int(cut_row)

        L = self.half_width
        if boundary == "open-single-core":
            # weights and projections are measured from the axis column
            self.core_centers = [(0.0, 0.0)]
            self.branch_points = [(-0.5, self.cut_row + 0.5)]
        else:
            # exact branch plaquettes of the finite cut segment
            d = separation
            self.core_centers = [(-0.5, 0.5), (-d - 0.5, 0.5)]
            self.branch_points = list(self.core_centers)

        sites = []
        for x in range(-L, L + 1):
            for y in range(-L, L + 1):
                if self.core_radius > 0.0 and x * x + y * y <= self.core_radius**2:
                    continue
                sites.append((x, y))
        self.sites = sites
        self.index = {s: i for i, s in enumerate(sites)}
        self.xs = np.array([s[0] for s in sites], dtype=np.int64)
        self.ys = np.array([s[1] for s in sites], dtype=np.int64)

        self.cut_bonds = self._build_cut_bonds()

    # -- geometry helpers -------------------------------------------------

    @property
    def site_count(self) -> int:
        return len(self.sites)

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    def shift_site(self, site, dx: int, dy: int):
        """Neighbor of ``site`` in direction (dx, dy), or None if it leaves
        the open truncation or hits a removed core site."""
        x, y = site[0] + dx, site[1] + dy
        L = self.half_width
        if self.boundary == "torus-dipole":
            w = self.width
            x = (x + L) % w - L
            y = (y + L) % w - L
        elif not (-L <= x <= L and -L <= y <= L):
            return None
        if (x, y) not in self.index:
            return None
        return (x, y)

    def bond_winding(self, a, b) -> int:
        """Layer change of the directed hop a -> b (0 off the cut)."""
        s = self.cut_bonds.get((a, b))
        if s is not None:
            return s
        s = self.cut_bonds.get((b, a))
        if s is not None:
            return -s
        return 0

    def _build_cut_bonds(self) -> dict:
        bonds = {}
        L = self.half_width
        if self.boundary == "open-single-core":
            r = self.cut_row
            for x in range(-L, 0):
                a, b = (x, r), (x, r + 1)
                if a in self.index and b in self.index:
                    bonds[(a, b)] = CUT_WINDING
            # moving the cut up by r rows drags a vertical connector along x = -1/2
            for j in range(1, r + 1):
                a, b = (-1, j), (0, j)
                if a in self.index and b in self.index:
                    bonds[(a, b)] = CUT_WINDING
        else:
            for x in range(-self.separation, 0):
                a, b = (x, 0), (x, 1)
                if a in self.index and b in self.index:
                    bonds[(a, b)] = CUT_WINDING
        return bonds

    def displacement(self, a, b):
        """Shortest displacement b - a respecting the boundary."""
        dx, dy = b[0] - a[0], b[1] - a[1]
        if self.boundary == "torus-dipole":
            w = self.width
            dx = (dx + self.half_width) % w - self.half_width
            dy = (dy + self.half_width) % w - self.half_width
        return dx, dy

    def graph_distance(self, a, b) -> int:
        """Manhattan distance between sites (toroidal on the dipole)."""
        dx, dy = self.displacement(a, b)
        return abs(dx) + abs(dy)

    def distance_to_core(self, site, core: int = 0) -> float:
        cx, cy = self.core_centers[core]
        dx, dy = site[0] - cx, site[1] - cy
        if self.boundary == "torus-dipole":
            w = self.width
            dx = (dx + w / 2) % w - w / 2
            dy = (dy + w / 2) % w - w / 2
        return math.hypot(dx, dy)

    def core_distances(self, core: int = 0) -> np.ndarray:
        return np.array([self.distance_to_core(s, core) for s in self.sites])

    def is_interior(self, site, depth: int) -> bool:
        """True if the site is more than ``depth`` steps from the open edge."""
        if self.boundary == "torus-dipole":
            return True
        L = self.half_width
        return max(abs(site[0]), abs(site[1])) <= L - depth - 1

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format": LATTICE_FORMAT,
            "half_width": self.half_width,
            "boundary": self.boundary,
            "core_radius": self.core_radius,
            "separation": self.separation,
            "cut_row": self.cut_row,
            "burgers": list(self.frame.b),
            "frame": self.frame.matrix.tolist(),
            "sites": [list(s) for s in self.sites],
            "cut_bonds": [
                [a[0], a[1], b[0], b[1], s] for (a, b), s in sorted(self.cut_bonds.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DislocatedLattice":
        if doc.get("format") != LATTICE_FORMAT:
            raise LatticeError(f"unsupported lattice document format {doc.get('format')!r}")
        frame = BurgersFrame(
            b=tuple(doc["burgers"]), matrix=np.array(doc["frame"], dtype=np.int64)
        )
        lat = cls(
            half_width=doc["half_width"],
            boundary=doc["boundary"],
            core_radius=doc["core_radius"],
            separation=doc["separation"],
            frame=frame,
            cut_row=doc.get("cut_row", 0),
        )
        if [list(s) for s in lat.sites] != doc["sites"]:
            raise LatticeError("site enumeration in document does not match rebuild")
        return lat


def build_lattice(
    half_width: int,
    boundary: str = "open-single-core",
    core_radius: float = 0.0,
    separation: int | None = None,
    frame: BurgersFrame | None = None,
    cut_row: int = 0,
) -> DislocatedLattice:
    """Construct a finite dislocated lattice (deterministic site ordering)."""
    return DislocatedLattice(
        half_width=half_width,
        boundary=boundary,
        core_radius=core_radius,
        separation=separation,
        frame=frame,
        cut_row=cut_row,
    )


def cut_crossings(lattice: DislocatedLattice, path) -> int:
    """Total layer change along a path of adjacent sites.

    Each upward cut crossing contributes the cut winding (-1), each downward
    crossing the opposite. For fixed endpoints the value depends on the path
    only through its winding around the dislocation cores: two paths from a
    to b differ exactly by the enclosed branch-point winding, which is what
    makes the cut a consistent branch cut for the helical layer bookkeeping.
    """
    total = 0
    for a, b in zip(path[:-1], path[1:]):
        if lattice.graph_distance(a, b) != 1:
            raise LatticeError(f"path step {a} -> {b} is not a lattice bond")
        total += lattice.bond_winding(a, b)
    return total


def loop_winding(lattice: DislocatedLattice, loop, core: int = 0) -> int:
    """Winding number of a closed site loop around a branch plaquette,
    computed by planar angle accumulation (independent of the cut data).

    The branch plaquettes sit at half-integer positions, so the angle is
    well defined along any lattice path.
    """
    if loop[0] != loop[-1]:
        raise LatticeError("loop must be closed")
    cx, cy = lattice.branch_points[core]
    total = 0.0
    for a, b in zip(loop[:-1], loop[1:]):
        a1 = math.atan2(a[1] - cy, a[0] - cx)
        b1 = math.atan2(b[1] - cy, b[0] - cx)
        d = b1 - a1
        while d > math.pi:
            d -= 2 * math.pi
        while d < -math.pi:
            d += 2 * math.pi
        total += d
    return int(round(total / (2 * math.pi)))
