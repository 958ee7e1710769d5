"""Lifting finite-propagation flat-lattice operators onto the dislocated lattice.

A flat kernel couples sites of the plain grid within a finite graph
distance. Its lift copies each kernel entry to every pair of helical-layer
lifts of the endpoints that are within the same distance on the dislocated
lattice, with the layer change entering as the momentum phase. Away from
the dislocation this reproduces the kernel verbatim; near it the layer
bookkeeping can place several phased copies on one site pair. The lift is
linear and adjoint-preserving, bounded by a fixed multiple of the kernel
norm, and multiplicative up to a defect supported near the axis.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import DislocatedLattice
from .linalg import opnorm
from .operators import MomentumOperator, canonical_kz

__all__ = [
    "FlatKernel",
    "identity_kernel",
    "x_shift_kernel",
    "y_shift_kernel",
    "random_kernel",
    "compose",
    "lift",
    "norm_bound_check",
    "NormBoundResult",
    "multiplicativity_defect",
]


@dataclass
class FlatKernel:
    """A matrix over the flat reading of the lattice sites.

    ``propagation`` is the largest graph distance carrying a nonzero entry
    (an inclusive integer bound; entries beyond it must vanish and are
    checked at construction).
    """

    matrix: np.ndarray
    propagation: int
    lattice: DislocatedLattice = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        n = self.lattice.site_count
        if m.shape != (n, n):
            raise ValueError(f"kernel shape {m.shape} does not match the lattice ({n} sites)")
        far = _distance_matrix(self.lattice) > self.propagation
        if np.any((m != 0) & far):
            raise ValueError(f"kernel has entries beyond propagation {self.propagation}")
        self.matrix = m

    def adjoint(self) -> "FlatKernel":
        return FlatKernel(
            matrix=self.matrix.conj().T, propagation=self.propagation, lattice=self.lattice
        )


def identity_kernel(lattice: DislocatedLattice) -> FlatKernel:
    return FlatKernel(
        matrix=np.eye(lattice.site_count, dtype=np.complex128), propagation=0, lattice=lattice
    )


def _flat_shift_matrix(lattice: DislocatedLattice, dx: int, dy: int) -> np.ndarray:
    m = np.zeros((lattice.site_count, lattice.site_count), dtype=np.complex128)
    for i, s in enumerate(lattice.sites):
        t = lattice.shift_site(s, dx, dy)
        if t is not None:
            m[lattice.index[t], i] = 1.0
    return m


def x_shift_kernel(lattice: DislocatedLattice) -> FlatKernel:
    return FlatKernel(matrix=_flat_shift_matrix(lattice, 1, 0), propagation=1, lattice=lattice)


def y_shift_kernel(lattice: DislocatedLattice) -> FlatKernel:
    return FlatKernel(matrix=_flat_shift_matrix(lattice, 0, 1), propagation=1, lattice=lattice)


def _distance_matrix(lattice: DislocatedLattice) -> np.ndarray:
    dx = np.abs(lattice.xs[:, None] - lattice.xs[None, :])
    dy = np.abs(lattice.ys[:, None] - lattice.ys[None, :])
    if lattice.boundary == "torus-dipole":
        w = lattice.width
        dx = np.minimum(dx, w - dx)
        dy = np.minimum(dy, w - dy)
    return dx + dy


def random_kernel(
    lattice: DislocatedLattice, propagation: int, rng: np.random.Generator, hermitian: bool = False
) -> FlatKernel:
    """Dense random kernel with entries on all pairs within the propagation."""
    n = lattice.site_count
    mask = _distance_matrix(lattice) <= propagation
    m = np.where(mask, rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)), 0.0)
    if hermitian:
        m = (m + m.conj().T) / 2
    return FlatKernel(matrix=m, propagation=propagation, lattice=lattice)


def compose(k: FlatKernel, l: FlatKernel) -> FlatKernel:
    """Flat product k @ l with the propagation budget summed."""
    if k.lattice is not l.lattice:
        raise ValueError("kernels live on different lattices")
    return FlatKernel(
        matrix=k.matrix @ l.matrix,
        propagation=k.propagation + l.propagation,
        lattice=k.lattice,
    )


def _helix_ball(lattice: DislocatedLattice, start, depth: int):
    """Sites-with-layer reachable from (start, layer 0) within graph depth."""
    out = {(start, 0): 0}
    queue = deque([(start, 0, 0)])
    while queue:
        site, layer, d = queue.popleft()
        if d == depth:
            continue
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            t = lattice.shift_site(site, dx, dy)
            if t is None:
                continue
            nl = layer + lattice.bond_winding(site, t)
            key = (t, nl)
            if key not in out:
                out[key] = d + 1
                queue.append((t, nl, d + 1))
    return out


def lift(k: FlatKernel, lattice: DislocatedLattice, kz: float = 0.0) -> MomentumOperator:
    """Lift a flat kernel to the dislocated lattice at fixed kz.

    The entry between sites t and s picks up exp(1j * n * kz) for every
    helical layer offset n at which the lifted endpoints are within the
    kernel's propagation distance; away from the dislocation exactly one
    offset contributes and the kernel is copied verbatim.
    """
    if k.lattice is not lattice:
        raise ValueError("kernel was built over a different lattice")
    kz = canonical_kz(kz)
    n = lattice.site_count
    out = np.zeros((n, n), dtype=np.complex128)
    for j, s in enumerate(lattice.sites):
        ball = _helix_ball(lattice, s, k.propagation)
        for (t, layer), _d in ball.items():
            i = lattice.index[t]
            val = k.matrix[i, j]
            if val != 0.0:
                out[i, j] += val * np.exp(1j * layer * kz)
    return MomentumOperator(kz=kz, matrix=out, lattice=lattice)


@dataclass(frozen=True)
class NormBoundResult:
    lifted_norm: float
    bound: float

    @property
    def satisfied(self) -> bool:
        return self.lifted_norm <= self.bound + 1e-9


def norm_bound_check(k: FlatKernel, lattice: DislocatedLattice, kz: float = 0.0) -> NormBoundResult:
    """Verify the block-decomposition norm bound for the lift.

    The lift decomposes over at most (2 ceil(R) + 1)^2 quotient offsets,
    each summand bounded by the kernel norm.
    """
    lifted = lift(k, lattice, kz)
    r = math.ceil(k.propagation)
    bound = (2 * r + 1) ** 2 * opnorm(k.matrix)
    return NormBoundResult(lifted_norm=opnorm(lifted.matrix), bound=bound)


def multiplicativity_defect(
    k: FlatKernel,
    l: FlatKernel,
    lattice: DislocatedLattice,
    kz: float = 0.0,
    tol: float | None = None,
) -> float:
    """Support radius of lift(k) lift(l) - lift(k l) around the axis.

    Away from the dislocation the two sides agree entrywise (the layer
    bookkeeping is additive there), so the defect touches only sites within
    roughly the summed propagations of the axis. Returns the largest core
    distance of any site carrying a defect entry, 0.0 for no defect.
    """
    if k.propagation + l.propagation >= lattice.half_width:
        raise ValueError("summed propagation must stay below the lattice half-width")
    a = lift(k, lattice, kz).matrix
    b = lift(l, lattice, kz).matrix
    c = lift(compose(k, l), lattice, kz).matrix
    d = a @ b - c
    if tol is None:
        scale = max(np.abs(k.matrix).max(), 1.0) * max(np.abs(l.matrix).max(), 1.0)
        tol = 1e-10 * scale * (2 * (k.propagation + l.propagation) + 1) ** 2
    rows, cols = np.nonzero(np.abs(d) > tol)
    if rows.size == 0:
        return 0.0
    ncores = len(lattice.core_centers)
    dist = np.min(np.stack([lattice.core_distances(c0) for c0 in range(ncores)]), axis=0)
    return float(np.max(np.maximum(dist[rows], dist[cols])))
