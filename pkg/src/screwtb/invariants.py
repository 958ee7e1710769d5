"""Bulk weak topological invariants of gapped hopping models.

Two independent routes to the planar Chern numbers are provided: a
finite-difference curvature integral (the transport formula, real-valued)
and a gauge-invariant plaquette-flux lattice computation that is integer by
construction. They must agree in integer part; the lattice route serves as
the oracle for the integral route.

Orientation convention: the plane label fixes the ordered axes (xy, yz, zx
cyclic), the transverse momentum is held at 0, and the overall sign is
calibrated once so that a positive xy Chern number pairs with positive
dislocation spectral flow for the standard Burgers vector (see the
dislocation module). That one-time calibration is ORIENTATION below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, GapClosedError
from .linalg import eigh, eigh_stack
from .models import HoppingModel, bloch, bloch_batch

__all__ = [
    "ChernResult",
    "fermi_projection",
    "chern_weil",
    "chern_lattice",
    "weak_vector",
    "PLANES",
]

# Ordered in-plane axes and the transverse axis per plane label.
PLANES = {"xy": (0, 1, 2), "yz": (1, 2, 0), "zx": (2, 0, 1)}

# One-time global sign calibration of the Chern orientation against the
# dislocation flow direction (energy increasing with kz counts +1).
ORIENTATION = 1


@dataclass(frozen=True)
class ChernResult:
    plane: str
    value_integral: float
    value_integer: int
    grid: int
    method: str


def fermi_projection(model: HoppingModel, k, mu: float = 0.0) -> np.ndarray:
    """Spectral projection of the Bloch matrix onto energies below mu."""
    h = bloch(model, k)
    w, v = eigh(h)
    if np.abs(w - mu).min() < 1e-8:
        raise GapClosedError(f"eigenvalue within 1e-8 of mu = {mu} at k = {tuple(k)}")
    occ = w < mu
    vo = v[:, occ]
    return vo @ vo.conj().T


def _plane_grid(plane: str, n: int) -> np.ndarray:
    """Momenta (n, n, 3) over the plane's 2-torus, transverse component 0."""
    a1, a2, _ = PLANES[plane]
    pts = 2.0 * np.pi * np.arange(n) / n
    k1, k2 = np.meshgrid(pts, pts, indexing="ij")
    ks = np.zeros((n, n, 3))
    ks[..., a1] = k1
    ks[..., a2] = k2
    return ks


def _occupied_frames(model: HoppingModel, ks: np.ndarray, mu: float):
    """Eigenframes of the occupied bands over a momentum stack."""
    shape = ks.shape[:-1]
    hs = bloch_batch(model, ks.reshape(-1, 3))
    w, v = eigh_stack(hs)
    if np.abs(w - mu).min() < 1e-8:
        flat = int(np.abs(w - mu).min(axis=-1).argmin())
        k_bad = ks.reshape(-1, 3)[flat]
        raise GapClosedError(f"eigenvalue within 1e-8 of mu = {mu} at k = {tuple(k_bad)}")
    counts = (w < mu).sum(axis=-1)
    fill = int(counts[0])
    if not np.all(counts == fill):
        raise GapClosedError("occupied band count varies over the grid")
    frames = v[..., :fill].reshape(*shape, model.orbitals, fill)
    evals = w.reshape(*shape, model.orbitals)
    return frames, evals


def _chern_weil_value(model: HoppingModel, plane: str, mu: float, n: int) -> float:
    ks = _plane_grid(plane, n)
    frames, _ = _occupied_frames(model, ks, mu)
    p = np.einsum("xyif,xyjf->xyij", frames, frames.conj())
    dk = 2.0 * np.pi / n
    d1 = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) / (2 * dk)
    d2 = (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)) / (2 * dk)
    comm = np.einsum("xyij,xyjk,xyki->xy", p, d1, d2)
    comm -= np.einsum("xyij,xyjk,xyki->xy", p, d2, d1)
    integral = comm.sum() * dk * dk
    # tr(P [dP, dP]) is purely imaginary; the curvature integral over the
    # torus divided by 2*pi*i is the (real) Chern number
    return ORIENTATION * float(integral.imag) / (2.0 * np.pi)


def chern_weil(model: HoppingModel, plane: str, mu: float = 0.0, grid: int = 64) -> ChernResult:
    """Chern number from the finite-difference curvature integral.

    If the integral sits further than 0.25 from an integer the grid is
    doubled once; persistent deviation raises ConvergenceError.
    """
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r}")
    n = int(grid)
    value = _chern_weil_value(model, plane, mu, n)
    if abs(value - round(value)) >= 0.25:
        n2 = 2 * n
        value2 = _chern_weil_value(model, plane, mu, n2)
        if abs(value2 - round(value2)) >= 0.25:
            raise ConvergenceError(
                f"curvature integral not near an integer at grids {n} and {n2}: "
                f"{value:.4f}, {value2:.4f}"
            )
        return ChernResult(plane=plane, value_integral=value2, value_integer=int(round(value2)), grid=n2, method="chern_weil")
    return ChernResult(plane=plane, value_integral=value, value_integer=int(round(value)), grid=n, method="chern_weil")


def plaquette_flux_total(frames: np.ndarray) -> float:
    """Total plaquette Berry flux of an occupied-frame field over the torus,
    in units of 2*pi. Gauge invariant: per-point frame phases (and unitary
    frame mixings) drop out of the link-determinant products."""

    def links(axis: int) -> np.ndarray:
        nxt = np.roll(frames, -1, axis=axis)
        overlap = np.einsum("xyif,xyig->xyfg", frames.conj(), nxt)
        det = np.linalg.det(overlap)
        if np.abs(det).min() < 1e-12:
            raise ConvergenceError("singular link overlap; refine the grid")
        return det

    u1 = links(0)
    u2 = links(1)
    flux = np.angle(u1 * np.roll(u2, -1, axis=0) * np.roll(u1, -1, axis=1).conj() * u2.conj())
    return float(flux.sum()) / (2.0 * np.pi)


def chern_lattice(model: HoppingModel, plane: str, mu: float = 0.0, grid: int = 24) -> ChernResult:
    """Gauge-invariant lattice Chern number from plaquette Berry fluxes.

    Each plaquette contributes the principal argument of the product of the
    four occupied-frame link determinants; the total flux over the torus is
    2*pi times an integer, exactly, as long as no link determinant
    degenerates (which raises with a grid-refinement hint).
    """
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r}")
    n = int(grid)
    ks = _plane_grid(plane, n)
    frames, _ = _occupied_frames(model, ks, mu)
    try:
        total = ORIENTATION * plaquette_flux_total(frames)
    except ConvergenceError:
        raise ConvergenceError(
            f"singular link overlap on the {plane} grid n = {n}; refine the grid"
        ) from None
    integer = int(round(total))
    if abs(total - integer) > 1e-6:
        raise ConvergenceError(f"plaquette flux sum {total!r} is not an integer")
    return ChernResult(plane=plane, value_integral=total, value_integer=integer, grid=n, method="lattice_gauge_invariant")


def weak_vector(model: HoppingModel, mu: float = 0.0, grid: int = 24) -> tuple[int, int, int]:
    """The weak Chern vector (C_yz, C_zx, C_xy) via the lattice route."""
    return (
        chern_lattice(model, "yz", mu, grid).value_integer,
        chern_lattice(model, "zx", mu, grid).value_integer,
        chern_lattice(model, "xy", mu, grid).value_integer,
    )
