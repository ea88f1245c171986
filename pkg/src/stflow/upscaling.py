"""Coarsening of rock property fields.

Porosity upscales by plain block averaging, which preserves pore volume
exactly. Permeability upscales flow-based: each coarse block is subjected to
a unit pressure drop along one axis with sealed lateral sides, the fine-scale
TPFA system inside the block is solved, and the effective permeability is
read off the resulting through-flow. Done per direction, so anisotropy
emerges from layering even when the fine field is isotropic.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MeshError
from . import physics


def upscale_porosity(phi: np.ndarray, ratio: int) -> np.ndarray:
    """Block mean over ratio x ratio tiles."""
    phi = np.asarray(phi, dtype=float)
    nx, ny = phi.shape
    if ratio < 1 or nx % ratio or ny % ratio:
        raise ValueError(f"field of shape {phi.shape} cannot be split into {ratio}x{ratio} blocks")
    return phi.reshape(nx // ratio, ratio, ny // ratio, ratio).mean(axis=(1, 3))


def _block_keff(kxb: np.ndarray, kyb: np.ndarray, axis: int) -> float:
    """Effective permeability of one block along `axis` (0 = x, 1 = y).

    Unit-square cells, pressure 1 upstream / 0 downstream imposed through
    half-cell transmissibilities, no-flow lateral sides.
    """
    if axis == 1:
        kxb, kyb = kyb.T, kxb.T
    n, m = kxb.shape  # flow along the first index
    if np.all(kxb == 0.0):
        raise MeshError("cannot upscale a block with zero permeability throughout")

    def tx(a, b):
        s = a + b
        return np.where(s > 0.0, 2.0 * a * b / np.where(s > 0.0, s, 1.0), 0.0)

    idx = np.arange(n * m).reshape(n, m)
    rows, cols, vals = [], [], []
    diag = np.zeros(n * m)

    def add(t, ia, ib):
        nonlocal rows, cols, vals
        rows += [ia, ib]
        cols += [ib, ia]
        vals += [-t, -t]
        diag[ia] += t
        diag[ib] += t

    tin = np.zeros(n * m)
    t_x = tx(kxb[:-1, :], kxb[1:, :])
    for i in range(n - 1):
        for j in range(m):
            if t_x[i, j] > 0.0:
                add(t_x[i, j], idx[i, j], idx[i + 1, j])
    t_y = tx(kyb[:, :-1], kyb[:, 1:])
    for i in range(n):
        for j in range(m - 1):
            if t_y[i, j] > 0.0:
                add(t_y[i, j], idx[i, j], idx[i, j + 1])
    # inlet (p = 1) and outlet (p = 0) through half-cell transmissibilities
    for j in range(m):
        t0 = 2.0 * kxb[0, j]
        t1 = 2.0 * kxb[-1, j]
        diag[idx[0, j]] += t0
        tin[idx[0, j]] = t0
        diag[idx[-1, j]] += t1
    # components with no path to the inlet or outlet float freely: pin them
    grounded = (tin > 0.0) | np.concatenate([np.zeros((n - 1) * m, bool), 2.0 * kxb[-1, :] > 0.0])
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n * m, n * m))
    ncomp, labels = sp.csgraph.connected_components(graph.tocsr(), directed=False)
    live = np.zeros(ncomp, dtype=bool)
    np.logical_or.at(live, labels, grounded)
    floating = ~live[labels]
    diag[floating] = 1.0
    mat_rows = np.asarray(rows)
    mat_vals = np.asarray(vals, dtype=float)
    mat_vals[floating[mat_rows]] = 0.0
    A = sp.coo_matrix(
        (np.concatenate([mat_vals, diag]), (np.concatenate([mat_rows, np.arange(n * m)]),
                                            np.concatenate([cols, np.arange(n * m)]))),
        shape=(n * m, n * m),
    ).tocsr()
    p = spla.spsolve(A, tin)
    # through-flow at the outlet; area = m cells, length = n cells, dp = 1
    q = float(np.sum(2.0 * kxb[-1, :] * p.reshape(n, m)[-1, :]))
    return q * n / m


def upscale_permeability(kx: np.ndarray, ky: np.ndarray, ratio: int) -> tuple[np.ndarray, np.ndarray]:
    """Flow-based effective permeability per coarse block and direction."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    if kx.shape != ky.shape:
        raise ValueError(f"kx {kx.shape} and ky {ky.shape} must have equal shapes")
    nx, ny = kx.shape
    if ratio < 1 or nx % ratio or ny % ratio:
        raise ValueError(f"field of shape {kx.shape} cannot be split into {ratio}x{ratio} blocks")
    out_x = np.empty((nx // ratio, ny // ratio))
    out_y = np.empty_like(out_x)
    for I in range(nx // ratio):
        for J in range(ny // ratio):
            bx = kx[I * ratio:(I + 1) * ratio, J * ratio:(J + 1) * ratio]
            by = ky[I * ratio:(I + 1) * ratio, J * ratio:(J + 1) * ratio]
            if ratio == 1:
                out_x[I, J], out_y[I, J] = bx[0, 0], by[0, 0]
            else:
                out_x[I, J] = _block_keff(bx, by, axis=0)
                out_y[I, J] = _block_keff(bx, by, axis=1)
    return out_x, out_y


def build_level_fields(
    kx_fine: np.ndarray,
    ky_fine: np.ndarray,
    phi_fine: np.ndarray,
    nx: int,
    ny: int,
    ls_max: int,
) -> physics.RockField:
    """Per-level fields from the finest one; each level is computed directly
    from the finest grid (ratio 2^(ls_max - level)), not by repeated pairwise
    coarsening."""
    kx_fine = np.asarray(kx_fine, dtype=float)
    ky_fine = np.asarray(ky_fine, dtype=float)
    phi_fine = np.asarray(phi_fine, dtype=float)
    want = (nx << ls_max, ny << ls_max)
    for name, arr in (("kx", kx_fine), ("ky", ky_fine), ("phi", phi_fine)):
        if arr.shape != want:
            raise ValueError(f"{name} has shape {arr.shape}, expected {want} for {ls_max} levels")
    kxs, kys, phis = [], [], []
    for lev in range(ls_max + 1):
        ratio = 1 << (ls_max - lev)
        if ratio == 1:
            kxs.append(kx_fine.copy())
            kys.append(ky_fine.copy())
            phis.append(phi_fine.copy())
        else:
            ex, ey = upscale_permeability(kx_fine, ky_fine, ratio)
            kxs.append(ex)
            kys.append(ey)
            phis.append(upscale_porosity(phi_fine, ratio))
    rock = physics.RockField(kx=kxs, ky=kys, phi=phis)
    rock.validate(nx=nx, ny=ny)
    return rock
