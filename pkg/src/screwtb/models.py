"""Finite-range tight-binding models and their dislocated realizations.

A model is a map from integer hop vectors r = (n, m, l) to orbital matrices
A_r with the Hermitian pairing A_{-r} = A_r†, so that the Bloch family
H(k) = sum_r A_r exp(1j k.r) is self-adjoint. Dislocating a model replaces
the x and y translations by their dislocated counterparts at fixed kz, with
the fixed operator ordering x-powers before y-powers; the alternative
orderings differ by corrections localized at the dislocation and do not
move any spectral index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GapClosedError
from .lattice import DislocatedLattice
from .linalg import eigvalsh_stack, hermitize
from .operators import canonical_kz, shift_x, shift_y, shift_y_derivative

__all__ = [
    "HoppingModel",
    "MomentumSlice",
    "SymmetryData",
    "SymmetryReport",
    "ModelError",
    "trivial",
    "qwz_stack",
    "builtin_model",
    "BUILTIN_MODELS",
    "bloch",
    "bloch_batch",
    "bulk_gap",
    "transform_model",
    "conjugate_model",
    "direct_sum",
    "disorder_diagonal",
    "assemble_dislocated",
    "assemble_flat",
    "assemble_core_removed",
    "assemble_derivative",
    "check_symmetry",
    "model_to_json_dict",
    "model_from_json_dict",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class HoppingModel:
    """Finite-range hopping model with optional z-invariant onsite disorder.

    ``hops`` maps integer 3-vectors to (orbitals x orbitals) complex
    matrices. Disorder is diagonal per orbital, drawn uniformly from
    [-disorder_strength, disorder_strength] with a per-site deterministic
    stream derived from ``disorder_seed``, and does not depend on z.
    """

    orbitals: int
    hops: dict = field(repr=False)
    disorder_strength: float = 0.0
    disorder_seed: int = 0

    def __post_init__(self):
        clean = {}
        for r, a in self.hops.items():
            r = tuple(int(c) for c in r)
            a = np.asarray(a, dtype=np.complex128)
            if a.shape != (self.orbitals, self.orbitals):
                raise ModelError(f"hop matrix for {r} has shape {a.shape}")
            if np.abs(a).max() == 0.0:
                continue
            clean[r] = a
        object.__setattr__(self, "hops", clean)
        for r, a in clean.items():
            minus = tuple(-c for c in r)
            b = clean.get(minus)
            if b is None or not np.allclose(b, a.conj().T, atol=1e-14):
                raise ModelError(f"hops violate the Hermitian pairing at r = {r}")
        if self.disorder_strength < 0:
            raise ModelError("disorder strength must be nonnegative")

    @property
    def range(self) -> int:
        """Largest Manhattan length of a hop vector."""
        if not self.hops:
            return 0
        return max(abs(n) + abs(m) + abs(l) for (n, m, l) in self.hops)

    @property
    def xy_range(self) -> int:
        if not self.hops:
            return 0
        return max(abs(n) + abs(m) for (n, m, _l) in self.hops)


@dataclass
class MomentumSlice:
    """The dense Hermitian dislocated Hamiltonian at fixed kz."""

    kz: float
    matrix: np.ndarray
    lattice: DislocatedLattice
    orbitals: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


# -- built-in models -------------------------------------------------------


def trivial(orbitals: int = 2, gap: float = 1.0) -> HoppingModel:
    """Atomic insulator: onsite gap * sigma_z, no hopping at all."""
    if orbitals != 2:
        raise ModelError("the trivial built-in is a two-orbital model")
    return HoppingModel(orbitals=2, hops={(0, 0, 0): gap * SIGMA_Z})


_PLANE_AXES = {"xy": (0, 1), "yz": (1, 2), "zx": (2, 0)}


def qwz_stack(m: float, plane: str = "xy") -> HoppingModel:
    """Two-band Chern-insulator layers stacked along the direction normal
    to ``plane``: a weak topological insulator carrying a single planar
    Chern number for 0 < |m| < 2.

    In-plane hops are (sigma_z -+ 1j*sigma_x)/2 along the first plane axis,
    (sigma_z -+ 1j*sigma_y)/2 along the second, plus the onsite m*sigma_z.
    Values of m with a closed bulk gap (0, +-2) are rejected.
    """
    if plane not in _PLANE_AXES:
        raise ModelError(f"unknown plane {plane!r}")
    if m in (0.0, 2.0, -2.0):
        raise ModelError(f"m = {m} is gapless")
    ax1, ax2 = _PLANE_AXES[plane]
    e1, e2 = [0, 0, 0], [0, 0, 0]
    e1[ax1] = 1
    e2[ax2] = 1
    hops = {
        (0, 0, 0): m * SIGMA_Z,
        tuple(e1): (SIGMA_Z - 1j * SIGMA_X) / 2,
        tuple(-c for c in e1): (SIGMA_Z + 1j * SIGMA_X) / 2,
        tuple(e2): (SIGMA_Z - 1j * SIGMA_Y) / 2,
        tuple(-c for c in e2): (SIGMA_Z + 1j * SIGMA_Y) / 2,
    }
    return HoppingModel(orbitals=2, hops=hops)


BUILTIN_MODELS = {"trivial": trivial, "qwz_stack": qwz_stack}


def builtin_model(name: str, **params) -> HoppingModel:
    try:
        ctor = BUILTIN_MODELS[name]
    except KeyError:
        raise ModelError(f"unknown built-in model {name!r}") from None
    return ctor(**params)


# -- model algebra ---------------------------------------------------------


def transform_model(model: HoppingModel, u) -> HoppingModel:
    """Relabel hop vectors by an integer matrix: r -> u @ r.

    Used to express a model in the frame adapted to a general Burgers
    vector; u must be unimodular for the result to describe the same system.
    """
    u = np.asarray(u, dtype=np.int64)
    hops = {}
    for r, a in model.hops.items():
        r2 = tuple(int(c) for c in u @ np.array(r, dtype=np.int64))
        if r2 in hops:
            hops[r2] = hops[r2] + a
        else:
            hops[r2] = a.copy()
    return HoppingModel(
        orbitals=model.orbitals,
        hops=hops,
        disorder_strength=model.disorder_strength,
        disorder_seed=model.disorder_seed,
    )


def conjugate_model(model: HoppingModel) -> HoppingModel:
    """Complex-conjugated model: H'(k) = conj(H(k)); flips the Berry curvature."""
    hops = {tuple(-c for c in r): a.conj() for r, a in model.hops.items()}
    return HoppingModel(
        orbitals=model.orbitals,
        hops=hops,
        disorder_strength=model.disorder_strength,
        disorder_seed=model.disorder_seed,
    )


def direct_sum(a: HoppingModel, b: HoppingModel) -> HoppingModel:
    if a.disorder_strength or b.disorder_strength:
        raise ModelError("direct sums of disordered models are not supported")
    n = a.orbitals + b.orbitals
    hops = {}
    for r in set(a.hops) | set(b.hops):
        block = np.zeros((n, n), dtype=np.complex128)
        if r in a.hops:
            block[: a.orbitals, : a.orbitals] = a.hops[r]
        if r in b.hops:
            block[a.orbitals :, a.orbitals :] = b.hops[r]
        hops[r] = block
    return HoppingModel(orbitals=n, hops=hops)


# -- Bloch theory ----------------------------------------------------------


def bloch(model: HoppingModel, k) -> np.ndarray:
    """Bloch matrix sum_r A_r exp(1j k.r), exactly Hermitian."""
    k = np.asarray(k, dtype=float)
    h = np.zeros((model.orbitals, model.orbitals), dtype=np.complex128)
    for r, a in model.hops.items():
        h = h + a * np.exp(1j * float(np.dot(k, r)))
    return hermitize(h)


def bloch_batch(model: HoppingModel, ks: np.ndarray) -> np.ndarray:
    """Bloch matrices over a stack of momenta, shape (K, N, N)."""
    ks = np.asarray(ks, dtype=float)
    h = np.zeros((ks.shape[0], model.orbitals, model.orbitals), dtype=np.complex128)
    for r, a in model.hops.items():
        phase = np.exp(1j * (ks @ np.asarray(r, dtype=float)))
        h += phase[:, None, None] * a
    return hermitize(h)


def bulk_gap(model: HoppingModel, mu: float = 0.0, grid: int = 24) -> tuple[float, float]:
    """Bulk band edges around mu over a grid of the 3-torus.

    Returns (highest eigenvalue below mu, lowest above). Raises if some
    grid momentum has an eigenvalue within 1e-8 of mu.
    """
    pts = 2.0 * np.pi * np.arange(grid) / grid
    ks = np.stack(np.meshgrid(pts, pts, pts, indexing="ij"), axis=-1).reshape(-1, 3)
    evals = eigvalsh_stack(bloch_batch(model, ks))
    if np.abs(evals - mu).min() < 1e-8:
        raise GapClosedError(f"spectrum touches mu = {mu} on the sampling grid")
    below = evals[evals < mu]
    above = evals[evals > mu]
    if below.size == 0 or above.size == 0:
        raise GapClosedError(f"mu = {mu} is outside the spectrum; no gap to measure")
    return float(below.max()), float(above.min())


# -- dislocated assemblies --------------------------------------------------


def _factor_chain(sx, sy, n: int, m: int):
    """Factor list realizing sx^n sy^m with adjoints for negative powers."""
    chain = []
    fx = sx if n >= 0 else sx.conj().T
    chain.extend([("x", fx)] * abs(n))
    fy = sy if m >= 0 else sy.conj().T
    chain.extend([("y", fy)] * abs(m))
    return chain


def _site_factor(lattice, n, m, sx, sy, cache):
    key = (n, m)
    if key not in cache:
        mat = np.eye(lattice.site_count, dtype=np.complex128)
        for _axis, f in _factor_chain(sx, sy, n, m):
            mat = mat @ f
        cache[key] = mat
    return cache[key]


def disorder_diagonal(model: HoppingModel, lattice: DislocatedLattice) -> np.ndarray:
    """Onsite disorder values, shape (sites, orbitals); all zero for w = 0.

    Each site draws from its own deterministic stream keyed by the model
    seed and the site coordinates, so the realization does not depend on the
    truncation size or site enumeration order.
    """
    w = model.disorder_strength
    vals = np.zeros((lattice.site_count, model.orbitals))
    if w == 0.0:
        return vals
    for i, (x, y) in enumerate(lattice.sites):
        rng = np.random.default_rng([model.disorder_seed, x + 2**20, y + 2**20])
        vals[i] = rng.uniform(-w, w, size=model.orbitals)
    return vals


def _assemble(model, lattice, kz, dislocated: bool) -> MomentumSlice:
    if model.xy_range > lattice.half_width // 2:
        raise ModelError("model range exceeds half the lattice half-width")
    kz = canonical_kz(kz)
    msize = lattice.site_count
    if dislocated:
        sx = shift_x(lattice, kz).matrix
        sy = shift_y(lattice, kz).matrix
    else:
        sx = shift_x(lattice, 0.0).matrix
        sy = shift_y(lattice, 0.0).matrix
    cache: dict = {}
    h = np.zeros((model.orbitals * msize, model.orbitals * msize), dtype=np.complex128)
    for (n, m, l), a in model.hops.items():
        site = _site_factor(lattice, n, m, sx, sy, cache)
        h += np.kron(a, site * np.exp(1j * l * kz))
    h = hermitize(h)
    dis = disorder_diagonal(model, lattice)
    if dis.any():
        h[np.diag_indices_from(h)] += dis.T.reshape(-1)
    return MomentumSlice(kz=kz, matrix=h, lattice=lattice, orbitals=model.orbitals)


def assemble_dislocated(model: HoppingModel, lattice: DislocatedLattice, kz: float) -> MomentumSlice:
    """Dislocated Hamiltonian at fixed kz on the lattice truncation."""
    return _assemble(model, lattice, kz, dislocated=True)


def assemble_flat(model: HoppingModel, lattice: DislocatedLattice, kz: float) -> MomentumSlice:
    """Same assembly with the cut phases removed (no dislocation)."""
    return _assemble(model, lattice, kz, dislocated=False)


def assemble_core_removed(
    model: HoppingModel, lattice: DislocatedLattice, kz: float, radius: float
) -> MomentumSlice:
    """Compression of the dislocated Hamiltonian to the complement of the
    radius-neighborhood of the axis, with the identity on removed sites.

    The result acts on the full index set; removed orbitals contribute
    exact eigenvalue 1. For radius larger than the hopping range this is an
    operator on the punctured (helical-surface) lattice.
    """
    full = assemble_dislocated(model, lattice, kz)
    if radius <= 0.0:
        return full
    keep = lattice.core_distances(0) > radius
    mask = np.tile(keep, model.orbitals).astype(np.complex128)
    h = full.matrix * mask[:, None] * mask[None, :]
    removed = ~keep
    rem_idx = np.nonzero(np.tile(removed, model.orbitals))[0]
    h[rem_idx, rem_idx] = 1.0
    return MomentumSlice(kz=full.kz, matrix=h, lattice=lattice, orbitals=model.orbitals)


def assemble_derivative(model: HoppingModel, lattice: DislocatedLattice, kz: float) -> np.ndarray:
    """Exact d/dkz of the dislocated assembly (cut phases and z-hops)."""
    kz = canonical_kz(kz)
    sx = shift_x(lattice, kz).matrix
    sy = shift_y(lattice, kz).matrix
    dsy = shift_y_derivative(lattice, kz)
    cache: dict = {}
    msize = lattice.site_count
    dh = np.zeros((model.orbitals * msize, model.orbitals * msize), dtype=np.complex128)
    for (n, m, l), a in model.hops.items():
        site = _site_factor(lattice, n, m, sx, sy, cache)
        chain = _factor_chain(sx, sy, n, m)
        dsite = np.zeros_like(site)
        for j, (axis, f) in enumerate(chain):
            if axis != "y":
                continue
            df = dsy if f is sy else dsy.conj().T
            left = np.eye(msize, dtype=np.complex128)
            for _ax, g in chain[:j]:
                left = left @ g
            right = np.eye(msize, dtype=np.complex128)
            for _ax, g in chain[j + 1 :]:
                right = right @ g
            dsite += left @ df @ right
        term = (dsite + 1j * l * site) * np.exp(1j * l * kz)
        dh += np.kron(a, term)
    return hermitize(dh)


# -- symmetry checking -------------------------------------------------------


@dataclass(frozen=True)
class SymmetryData:
    """Optional antiunitary/unitary symmetry matrices with their signs."""

    label: str
    t_matrix: np.ndarray | None = None
    t_sign: int = 1
    c_matrix: np.ndarray | None = None
    c_sign: int = 1
    s_matrix: np.ndarray | None = None


# required (T sign, C sign, S present) per Altland-Zirnbauer label
_AZ_REQUIREMENTS = {
    "A": (None, None, False),
    "AIII": (None, None, True),
    "AI": (1, None, False),
    "BDI": (1, 1, True),
    "D": (None, 1, False),
    "DIII": (-1, 1, True),
    "AII": (-1, None, False),
    "CII": (-1, -1, True),
    "C": (None, -1, False),
    "CI": (1, -1, True),
}


@dataclass
class SymmetryReport:
    label: str
    relation_defects: dict
    missing: list
    passed: bool


def check_symmetry(model: HoppingModel, sym: SymmetryData, grid: int = 4, tol: float = 1e-12) -> SymmetryReport:
    """Verify the symmetry relations of a tenfold-way class on a k-grid.

    Checks T H(-k) T† = H(k)* (time reversal), C H(-k) C† = -H(k)*
    (particle-hole), S H(k) S† = -H(k) (sublattice), the squares
    T conj(T) = t_sign, C conj(C) = c_sign, S² = 1, and S = C conj(T) when
    all three are given. The report lists the worst defect per relation and
    whether the data covers the class requirements.
    """
    if sym.label not in _AZ_REQUIREMENTS:
        raise ModelError(f"unknown symmetry class {sym.label!r}")
    pts = 2.0 * np.pi * np.arange(grid) / grid
    ks = np.stack(np.meshgrid(pts, pts, pts, indexing="ij"), axis=-1).reshape(-1, 3)
    eye = np.eye(model.orbitals)
    defects: dict[str, float] = {}

    def record(name, value):
        defects[name] = max(defects.get(name, 0.0), float(value))

    for k in ks:
        hk = bloch(model, k)
        hmk = bloch(model, -k)
        if sym.t_matrix is not None:
            t = sym.t_matrix
            record("T", np.abs(t @ hmk @ t.conj().T - hk.conj()).max())
        if sym.c_matrix is not None:
            c = sym.c_matrix
            record("C", np.abs(c @ hmk @ c.conj().T + hk.conj()).max())
        if sym.s_matrix is not None:
            s = sym.s_matrix
            record("S", np.abs(s @ hk @ s.conj().T + hk).max())
    if sym.t_matrix is not None:
        record("T^2", np.abs(sym.t_matrix @ sym.t_matrix.conj() - sym.t_sign * eye).max())
    if sym.c_matrix is not None:
        record("C^2", np.abs(sym.c_matrix @ sym.c_matrix.conj() - sym.c_sign * eye).max())
    if sym.s_matrix is not None:
        record("S^2", np.abs(sym.s_matrix @ sym.s_matrix - eye).max())
    if sym.t_matrix is not None and sym.c_matrix is not None and sym.s_matrix is not None:
        record("S=CT", np.abs(sym.s_matrix - sym.c_matrix @ sym.t_matrix.conj()).max())

    t_req, c_req, s_req = _AZ_REQUIREMENTS[sym.label]
    missing = []
    if t_req is not None and (sym.t_matrix is None or sym.t_sign != t_req):
        missing.append("T")
    if c_req is not None and (sym.c_matrix is None or sym.c_sign != c_req):
        missing.append("C")
    if s_req and sym.s_matrix is None:
        missing.append("S")
    passed = not missing and all(v <= tol for v in defects.values())
    return SymmetryReport(label=sym.label, relation_defects=defects, missing=missing, passed=passed)


# -- JSON model files --------------------------------------------------------


def model_to_json_dict(model: HoppingModel) -> dict:
    hops = []
    for r in sorted(model.hops):
        a = model.hops[r]
        hops.append(
            {
                "r": list(r),
                "A": [[[float(v.real), float(v.imag)] for v in row] for row in a],
            }
        )
    return {
        "orbitals": model.orbitals,
        "hops": hops,
        "disorder": {"strength": model.disorder_strength, "seed": model.disorder_seed},
    }


def model_from_json_dict(doc: dict) -> HoppingModel:
    try:
        orbitals = int(doc["orbitals"])
        hops = {}
        for entry in doc["hops"]:
            r = tuple(int(c) for c in entry["r"])
            a = np.array(
                [[complex(re, im) for re, im in row] for row in entry["A"]],
                dtype=np.complex128,
            )
            hops[r] = a
        disorder = doc.get("disorder", {})
        return HoppingModel(
            orbitals=orbitals,
            hops=hops,
            disorder_strength=float(disorder.get("strength", 0.0)),
            disorder_seed=int(disorder.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc


def model_from_json(text: str) -> HoppingModel:
    return model_from_json_dict(json.loads(text))
