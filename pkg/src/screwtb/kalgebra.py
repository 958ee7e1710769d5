"""Integer K-group bookkeeping for the three-torus and the dislocation map.

The K-groups of the 3-torus algebra are free on eight generators labelled by
coordinate subsets: the even part on {1, xy, yz, zx}, the odd part on
{x, y, z, xyz}. A gapped bulk class decomposes over these generators; the
dislocation boundary map extracts the xy-coefficient after pulling the
class back along the frame adapted to the Burgers vector. The frame acts
through the induced maps on the exterior powers of Z^3, which on the weak
(degree 2) part reduces to the dot product with the Burgers vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import BurgersFrame, _int_inverse_3x3

__all__ = [
    "EVEN_LABELS",
    "ODD_LABELS",
    "KClass",
    "even_class",
    "odd_class",
    "pullback",
    "boundary_map",
    "az_lookup",
    "real_generator_order",
    "AZ_TABLE",
]

EVEN_LABELS = ("1", "xy", "yz", "zx")
ODD_LABELS = ("x", "y", "z", "xyz")
ALL_LABELS = EVEN_LABELS + ODD_LABELS

# ordered index pairs realizing the degree-2 basis (xy, yz, zx)
_PAIRS = {"xy": (0, 1), "yz": (1, 2), "zx": (2, 0)}
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class KClass:
    """An integer combination of the eight torus generators of one parity."""

    coefficients: tuple
    parity: str  # "even" or "odd"

    def __post_init__(self):
        if self.parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")
        if len(self.coefficients) != 8:
            raise ValueError("a class carries 8 generator coefficients")
        object.__setattr__(self, "coefficients", tuple(int(c) for c in self.coefficients))
        live = EVEN_LABELS if self.parity == "even" else ODD_LABELS
        for label, c in zip(ALL_LABELS, self.coefficients):
            if c != 0 and label not in live:
                raise ValueError(f"{self.parity} class has support on generator {label}")

    def coefficient(self, label: str) -> int:
        return self.coefficients[ALL_LABELS.index(label)]

    def __add__(self, other: "KClass") -> "KClass":
        if self.parity != other.parity:
            raise ValueError("cannot add classes of different parity")
        return KClass(
            coefficients=tuple(a + b for a, b in zip(self.coefficients, other.coefficients)),
            parity=self.parity,
        )


def even_class(unit: int = 0, xy: int = 0, yz: int = 0, zx: int = 0) -> KClass:
    return KClass(coefficients=(unit, xy, yz, zx, 0, 0, 0, 0), parity="even")


def odd_class(x: int = 0, y: int = 0, z: int = 0, xyz: int = 0) -> KClass:
    return KClass(coefficients=(0, 0, 0, 0, x, y, z, xyz), parity="odd")


def _lambda2(u: np.ndarray) -> np.ndarray:
    """Induced action of a 3x3 integer matrix on the degree-2 basis."""
    labels = ("xy", "yz", "zx")
    out = np.zeros((3, 3), dtype=np.int64)
    for col, src in enumerate(labels):
        i, j = _PAIRS[src]
        # u e_i wedge u e_j expanded over the basis 2-forms
        for row, dst in enumerate(labels):
            a, b = _PAIRS[dst]
            out[row, col] = u[a, i] * u[b, j] - u[b, i] * u[a, j]
    return out


def pullback(c: KClass, u) -> KClass:
    """Transport a class along the torus automorphism induced by u.

    Degree 0 is fixed, degree 1 transforms by u, degree 2 by the wedge
    square of u, degree 3 by det u.
    """
    u = np.asarray(u, dtype=np.int64)
    if u.shape != (3, 3):
        raise ValueError("expected a 3x3 integer matrix")
    det = int(round(np.linalg.det(u.astype(float))))
    coeffs = dict(zip(ALL_LABELS, c.coefficients))
    if c.parity == "even":
        w = np.array([coeffs["xy"], coeffs["yz"], coeffs["zx"]], dtype=np.int64)
        w2 = _lambda2(u) @ w
        return even_class(unit=coeffs["1"], xy=int(w2[0]), yz=int(w2[1]), zx=int(w2[2]))
    v = np.array([coeffs["x"], coeffs["y"], coeffs["z"]], dtype=np.int64)
    v1 = u @ v
    return odd_class(x=int(v1[0]), y=int(v1[1]), z=int(v1[2]), xyz=det * coeffs["xyz"])


def boundary_map(c: KClass, frame: BurgersFrame) -> int:
    """Predicted dislocation index of a bulk class for a Burgers frame.

    The class is pulled back along the inverse frame and the xy-coefficient
    is extracted. For even (Fermi-projection) classes this equals the dot
    product of the Burgers vector with the weak vector (c_yz, c_zx, c_xy);
    every odd generator and the even unit and out-of-plane generators map
    to zero for the standard frame.
    """
    pulled = pullback(c, _int_inverse_3x3(frame.matrix))
    return pulled.coefficient("xy")


# Strong topological invariants of two-dimensional gapped phases per
# tenfold-way class (standard class order).
AZ_TABLE = {
    "A": "Z",
    "AIII": "0",
    "AI": "0",
    "BDI": "0",
    "D": "Z",
    "DIII": "Z2",
    "AII": "Z2",
    "CII": "0",
    "C": "Z",
    "CI": "0",
}


def az_lookup(label: str) -> str:
    """2-D strong invariant group of a tenfold-way class: 'Z', 'Z2' or '0'."""
    try:
        return AZ_TABLE[label]
    except KeyError:
        raise KeyError(f"unknown symmetry class {label!r}") from None


def real_generator_order(degree: int) -> str:
    """Order of the degree-l real generator: free for l = 0, 4 (mod 8),
    2-torsion for l = 1, 2, zero otherwise."""
    l = degree % 8
    if l in (0, 4):
        return "Z"
    if l in (1, 2):
        return "Z2"
    return "0"
