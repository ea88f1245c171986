"""Space-time mesh with separate spatial and temporal refinement.

The mesh covers one coarse time step of a rectangular 2-D grid. Spatial
refinement is a per-cell quadtree whose leaves are "columns" (a column keeps
one spatial footprint for the whole step); each column carries a binary tree
of time sub-intervals. A leaf element is a column crossed with one of its
time leaves.

Geometry is tracked in integer units of the finest spatial cell and finest
time slice, so tiling and mosaic bookkeeping is exact. Interfaces between
columns are tiled by SubFaces obtained from the intersection of the adjacent
leaves' face traces; each interior SubFace later hosts one auxiliary flux
unknown per phase.

Meshes are immutable once built: refine_temporal / refine_spatial / smooth
return new meshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import MeshError
from . import physics

logger = logging.getLogger(__name__)

# Element keys are (level_s, ci, cj, level_t, k); column keys (level_s, ci, cj).


@dataclass(frozen=True)
class CoarseGrid:
    nx: int
    ny: int
    dx0: float
    dy0: float
    dt0: float
    thickness: float = 1.0
    step_index: int = 0
    t_start: float = 0.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dimensions must be >= 1, got nx={self.nx} ny={self.ny}")
        if self.dx0 <= 0.0 or self.dy0 <= 0.0 or self.dt0 <= 0.0:
            raise ValueError("dx0, dy0 and dt0 must all be positive")


@dataclass(frozen=True)
class Element:
    """One space-time leaf."""

    index: int
    level_s: int
    ci: int
    cj: int
    level_t: int
    k: int
    # extents in finest units
    x0u: int
    y0u: int
    wu: int  # spatial width in finest units (same in x and y)
    t0u: int
    t1u: int
    # physical measures
    dx: float
    dy: float
    volume: float
    duration: float
    cx: float
    cy: float

    @property
    def key(self) -> tuple[int, int, int, int, int]:
        return (self.level_s, self.ci, self.cj, self.level_t, self.k)


@dataclass(frozen=True)
class SubFace:
    """Piece of an interface: trace intersection of two adjacent leaves.

    `left` is the element on the lower-coordinate side (west for x-normal,
    south for y-normal); `right` is -1 for boundary pieces. The measure is
    area (ft2) times duration (days).
    """

    index: int
    orient: int  # 0 = x-normal, 1 = y-normal
    left: int
    right: int
    plane_u: int  # position of the face plane, finest units
    lo_u: int  # tangential extent, finest units
    hi_u: int
    t0u: int
    t1u: int
    area: float
    duration: float

    @property
    def boundary(self) -> bool:
        return self.right < 0

    @property
    def measure(self) -> float:
        return self.area * self.duration


class SpaceTimeMesh:
    def __init__(
        self,
        grid: CoarseGrid,
        ls_max: int,
        lt_max: int,
        columns: dict[tuple[int, int, int], tuple[tuple[int, int], ...]],
    ):
        self.grid = grid
        self.ls_max = int(ls_max)
        self.lt_max = int(lt_max)
        # column key -> sorted tuple of (level_t, k) time leaves
        self.columns = columns
        self._finalize()

    # -- construction helpers -------------------------------------------------

    @property
    def nxu(self) -> int:
        return self.grid.nx << self.ls_max

    @property
    def nyu(self) -> int:
        return self.grid.ny << self.ls_max

    @property
    def ntu(self) -> int:
        return 1 << self.lt_max

    def _col_span(self, key: tuple[int, int, int]) -> tuple[int, int, int]:
        ls, ci, cj = key
        w = 1 << (self.ls_max - ls)
        return ci * w, cj * w, w

    def _leaf_span(self, lt: int, k: int) -> tuple[int, int]:
        w = 1 << (self.lt_max - lt)
        return k * w, (k + 1) * w

    def _finalize(self) -> None:
        g = self.grid
        ux = g.dx0 / (1 << self.ls_max)
        uy = g.dy0 / (1 << self.ls_max)
        ut = g.dt0 / (1 << self.lt_max)
        self.unit_x, self.unit_y, self.unit_t = ux, uy, ut

        # canonical column order: by (y0, x0) in finest units
        col_items = sorted(self.columns.items(), key=lambda it: (self._col_span(it[0])[1], self._col_span(it[0])[0]))
        self.column_keys = [k for k, _ in col_items]
        self.column_index = {k: i for i, k in enumerate(self.column_keys)}

        # elements, grouped by column with time ascending
        elements: list[Element] = []
        self.column_elements: list[list[int]] = []
        index: dict[tuple, int] = {}
        for key, leaves in col_items:
            ls, ci, cj = key
            x0u, y0u, wu = self._col_span(key)
            dx = g.dx0 / (1 << ls)
            dy = g.dy0 / (1 << ls)
            vol = dx * dy * g.thickness
            cx = g.origin[0] + (x0u + 0.5 * wu) * ux
            cy = g.origin[1] + (y0u + 0.5 * wu) * uy
            ids = []
            for lt, k in sorted(leaves, key=lambda lk: self._leaf_span(lk[0], lk[1])[0]):
                t0u, t1u = self._leaf_span(lt, k)
                e = Element(
                    index=len(elements), level_s=ls, ci=ci, cj=cj, level_t=lt, k=k,
                    x0u=x0u, y0u=y0u, wu=wu, t0u=t0u, t1u=t1u,
                    dx=dx, dy=dy, volume=vol, duration=g.dt0 / (1 << lt), cx=cx, cy=cy,
                )
                index[e.key] = e.index
                ids.append(e.index)
                elements.append(e)
            self.column_elements.append(ids)
        self.elements = elements
        self.element_index = index
        self.n_elements = len(elements)

        self._build_raster()
        self._build_subfaces()

    def _build_raster(self) -> None:
        """Finest-unit ownership raster: cell -> column ordinal."""
        own = np.full((self.nxu, self.nyu), -1, dtype=np.int32)
        for ord_, key in enumerate(self.column_keys):
            x0, y0, w = self._col_span(key)
            own[x0:x0 + w, y0:y0 + w] = ord_
        if np.any(own < 0):
            raise MeshError("columns do not tile the domain")
        self.raster = own

    def _adjacent_column_pairs(self) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
        own = self.raster
        xp: set[tuple[int, int]] = set()
        yp: set[tuple[int, int]] = set()
        if self.nxu > 1:
            a, b = own[:-1, :], own[1:, :]
            m = a != b
            xp.update(zip(a[m].tolist(), b[m].tolist()))
        if self.nyu > 1:
            a, b = own[:, :-1], own[:, 1:]
            m = a != b
            yp.update(zip(a[m].tolist(), b[m].tolist()))
        return xp, yp

    def _build_subfaces(self) -> None:
        g = self.grid
        ux, uy, ut = self.unit_x, self.unit_y, self.unit_t
        interior: list[SubFace] = []
        boundary: list[SubFace] = []

        def time_mosaic(col_a: int, col_b: int):
            """Pairs of time-overlapping elements of two columns with the
            overlap window, two-pointer sweep."""
            ea = self.column_elements[col_a]
            eb = self.column_elements[col_b]
            ia = ib = 0
            out = []
            while ia < len(ea) and ib < len(eb):
                A = self.elements[ea[ia]]
                B = self.elements[eb[ib]]
                t0 = max(A.t0u, B.t0u)
                t1 = min(A.t1u, B.t1u)
                if t1 > t0:
                    out.append((A.index, B.index, t0, t1))
                if A.t1u <= B.t1u:
                    ia += 1
                if B.t1u <= A.t1u:
                    ib += 1
            return out

        xp, yp = self._adjacent_column_pairs()
        # deterministic order
        for orient, pairs in ((0, sorted(xp)), (1, sorted(yp))):
            for ca, cb in pairs:
                ka, kb = self.column_keys[ca], self.column_keys[cb]
                xa0, ya0, wa = self._col_span(ka)
                xb0, yb0, wb = self._col_span(kb)
                if orient == 0:
                    plane = xa0 + wa
                    lo = max(ya0, yb0)
                    hi = min(ya0 + wa, yb0 + wb)
                    seg_ft = (hi - lo) * uy
                else:
                    plane = ya0 + wa
                    lo = max(xa0, xb0)
                    hi = min(xa0 + wa, xb0 + wb)
                    seg_ft = (hi - lo) * ux
                area = seg_ft * g.thickness
                for (ea, eb, t0, t1) in time_mosaic(ca, cb):
                    interior.append(SubFace(
                        index=len(interior), orient=orient, left=ea, right=eb,
                        plane_u=plane, lo_u=lo, hi_u=hi, t0u=t0, t1u=t1,
                        area=area, duration=(t1 - t0) * ut,
                    ))

        # domain-boundary faces: one per element per side touching the boundary
        for e in self.elements:
            sides = []
            if e.x0u == 0:
                sides.append((0, 0, e.y0u, e.y0u + e.wu, False))
            if e.x0u + e.wu == self.nxu:
                sides.append((0, self.nxu, e.y0u, e.y0u + e.wu, True))
            if e.y0u == 0:
                sides.append((1, 0, e.x0u, e.x0u + e.wu, False))
            if e.y0u + e.wu == self.nyu:
                sides.append((1, self.nyu, e.x0u, e.x0u + e.wu, True))
            for orient, plane, lo, hi, is_left in sides:
                seg_ft = (hi - lo) * (uy if orient == 0 else ux)
                boundary.append(SubFace(
                    index=-1, orient=orient,
                    left=e.index if is_left else -1,
                    right=-1 if is_left else e.index,
                    plane_u=plane, lo_u=lo, hi_u=hi, t0u=e.t0u, t1u=e.t1u,
                    area=seg_ft * g.thickness, duration=e.duration,
                ))
        self.subfaces = interior
        self.boundary_subfaces = boundary
        self.n_subfaces = len(interior)

    # -- queries ---------------------------------------------------------------

    def leaf_column_at(self, ixu: int, iyu: int) -> tuple[int, int, int]:
        """Leaf column key owning finest cell (ixu, iyu)."""
        for ls in range(self.ls_max, -1, -1):
            key = (ls, ixu >> (self.ls_max - ls), iyu >> (self.ls_max - ls))
            if key in self.columns:
                return key
        raise MeshError(f"no column owns finest cell ({ixu}, {iyu})")

    def column_at_point(self, x: float, y: float) -> tuple[int, int, int]:
        """Leaf column containing physical point (x, y); half-open cells."""
        ixu = min(int((x - self.grid.origin[0]) / self.unit_x), self.nxu - 1)
        iyu = min(int((y - self.grid.origin[1]) / self.unit_y), self.nyu - 1)
        return self.leaf_column_at(max(ixu, 0), max(iyu, 0))

    def elements_of_column(self, key: tuple[int, int, int]) -> list[int]:
        return self.column_elements[self.column_index[key]]

    def coarse_ancestor(self, e: Element) -> tuple[int, int]:
        return e.ci >> e.level_s, e.cj >> e.level_s

    def prev_in_time(self) -> np.ndarray:
        """Index of each element's predecessor leaf in its own column; -1 at
        the step start."""
        prev = np.full(self.n_elements, -1, dtype=np.int64)
        for ids in self.column_elements:
            for a, b in zip(ids[:-1], ids[1:]):
                prev[b] = a
        return prev

    def same_step(self, other: "SpaceTimeMesh") -> bool:
        return (
            self.grid == other.grid
            and self.ls_max == other.ls_max
            and self.lt_max == other.lt_max
        )

    def leaf_set(self) -> frozenset:
        return frozenset(
            (key, leaf) for key, leaves in self.columns.items() for leaf in leaves
        )

    # -- refinement ------------------------------------------------------------

    def _copy_columns(self) -> dict:
        return {k: v for k, v in self.columns.items()}

    def refine_temporal(self, marked) -> "SpaceTimeMesh":
        """Split the marked leaves' time intervals in half."""
        cols = self._copy_columns()
        by_col: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
        for key in marked:
            e = self.elements[self.element_index[key] if isinstance(key, tuple) else key]
            if e.level_t >= self.lt_max:
                raise MeshError(
                    f"element {e.key} already at the temporal cap {self.lt_max}"
                )
            by_col.setdefault((e.level_s, e.ci, e.cj), []).append((e.level_t, e.k))
        for ckey, leaves in by_col.items():
            cur = set(cols[ckey])
            for lt, k in leaves:
                cur.remove((lt, k))
                cur.add((lt + 1, 2 * k))
                cur.add((lt + 1, 2 * k + 1))
            cols[ckey] = tuple(sorted(cur))
        return SpaceTimeMesh(self.grid, self.ls_max, self.lt_max, cols)

    def refine_spatial(self, marked) -> "SpaceTimeMesh":
        """Split the marked elements' columns 4-way; children inherit the
        column's temporal subdivision."""
        cols = self._copy_columns()
        col_keys = set()
        for key in marked:
            e = self.elements[self.element_index[key] if isinstance(key, tuple) else key]
            if e.level_s >= self.ls_max:
                raise MeshError(
                    f"element {e.key} already at the spatial cap {self.ls_max}"
                )
            col_keys.add((e.level_s, e.ci, e.cj))
        for ls, ci, cj in col_keys:
            leaves = cols.pop((ls, ci, cj))
            for a in (0, 1):
                for b in (0, 1):
                    cols[(ls + 1, 2 * ci + a, 2 * cj + b)] = leaves
        return SpaceTimeMesh(self.grid, self.ls_max, self.lt_max, cols)

    def smooth(self) -> "SpaceTimeMesh":
        """Enforce the 2:1 rule between spatially adjacent, time-overlapping
        leaves in both level_s and level_t, by refinement only. Idempotent."""
        mesh = self
        while True:
            # spatial violations first: split the coarser column
            split_cols = set()
            xp, yp = mesh._adjacent_column_pairs()
            for ca, cb in sorted(xp | yp):
                ka, kb = mesh.column_keys[ca], mesh.column_keys[cb]
                if ka[0] - kb[0] >= 2:
                    split_cols.add(kb)
                elif kb[0] - ka[0] >= 2:
                    split_cols.add(ka)
            if split_cols:
                cols = mesh._copy_columns()
                for ls, ci, cj in split_cols:
                    leaves = cols.pop((ls, ci, cj))
                    for a in (0, 1):
                        for b in (0, 1):
                            cols[(ls + 1, 2 * ci + a, 2 * cj + b)] = leaves
                mesh = SpaceTimeMesh(self.grid, self.ls_max, self.lt_max, cols)
                continue
            # temporal violations: split the coarser overlapping leaf
            split_leaves: set[tuple[tuple[int, int, int], tuple[int, int]]] = set()
            for sf in mesh.subfaces:
                a = mesh.elements[sf.left]
                b = mesh.elements[sf.right]
                if a.level_t - b.level_t >= 2:
                    split_leaves.add(((b.level_s, b.ci, b.cj), (b.level_t, b.k)))
                elif b.level_t - a.level_t >= 2:
                    split_leaves.add(((a.level_s, a.ci, a.cj), (a.level_t, a.k)))
            if not split_leaves:
                return mesh
            cols = mesh._copy_columns()
            for ckey, (lt, k) in split_leaves:
                cur = set(cols[ckey])
                cur.remove((lt, k))
                cur.add((lt + 1, 2 * k))
                cur.add((lt + 1, 2 * k + 1))
                cols[ckey] = tuple(sorted(cur))
            mesh = SpaceTimeMesh(self.grid, self.ls_max, self.lt_max, cols)


def build_coarse(grid: CoarseGrid, ls_max: int = 0, lt_max: int = 0) -> SpaceTimeMesh:
    """Conforming mesh with every element at level_s = level_t = 0."""
    cols = {(0, i, j): ((0, 0),) for i in range(grid.nx) for j in range(grid.ny)}
    return SpaceTimeMesh(grid, ls_max, lt_max, cols)


def build_uniform_finest(grid: CoarseGrid, ls_max: int, lt_max: int) -> SpaceTimeMesh:
    """Uniformly refined mesh at the spatial and temporal caps."""
    leaves = tuple((lt_max, k) for k in range(1 << lt_max))
    cols = {
        (ls_max, i, j): leaves
        for i in range(grid.nx << ls_max)
        for j in range(grid.ny << ls_max)
    }
    return SpaceTimeMesh(grid, ls_max, lt_max, cols)


# -- state and transfer operators ------------------------------------------------


class State:
    """Discrete unknowns on a mesh: P_o and S_w per element, auxiliary fluxes
    per interior SubFace per phase (0 = water, 1 = oil)."""

    def __init__(self, mesh: SpaceTimeMesh, p=None, s=None, u_w=None, u_o=None):
        self.mesh = mesh
        n, m = mesh.n_elements, mesh.n_subfaces
        self.p = np.zeros(n) if p is None else np.asarray(p, dtype=float).copy()
        self.s = np.zeros(n) if s is None else np.asarray(s, dtype=float).copy()
        self.u_w = np.zeros(m) if u_w is None else np.asarray(u_w, dtype=float).copy()
        self.u_o = np.zeros(m) if u_o is None else np.asarray(u_o, dtype=float).copy()
        if self.p.shape != (n,) or self.s.shape != (n,):
            raise ValueError("cell arrays do not match the mesh element count")
        if self.u_w.shape != (m,) or self.u_o.shape != (m,):
            raise ValueError("flux arrays do not match the mesh SubFace count")

    def copy(self) -> "State":
        return State(self.mesh, self.p, self.s, self.u_w, self.u_o)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.s, self.u_o, self.u_w])

    @classmethod
    def from_vector(cls, mesh: SpaceTimeMesh, x: np.ndarray) -> "State":
        n, m = mesh.n_elements, mesh.n_subfaces
        return cls(mesh, x[:n], x[n:2 * n], u_o=x[2 * n:2 * n + m], u_w=x[2 * n + m:])


def _ancestor_column(old: SpaceTimeMesh, ls: int, ci: int, cj: int):
    for l in range(ls, -1, -1):
        key = (l, ci >> (ls - l), cj >> (ls - l))
        if key in old.columns:
            return key
    return None


def _ancestor_leaf(leaves: set, lt: int, k: int):
    for l in range(lt, -1, -1):
        if (l, k >> (lt - l)) in leaves:
            return (l, k >> (lt - l))
    return None


def ancestor_map(old: SpaceTimeMesh, new: SpaceTimeMesh) -> np.ndarray:
    """For each new element, the index of the old leaf containing it."""
    if not old.same_step(new):
        raise MeshError("meshes belong to different coarse steps")
    out = np.empty(new.n_elements, dtype=np.int64)
    leafsets = {k: set(v) for k, v in old.columns.items()}
    for e in new.elements:
        ckey = _ancestor_column(old, e.level_s, e.ci, e.cj)
        if ckey is None:
            raise MeshError(f"new mesh is not a refinement of the old one at {e.key}")
        tkey = _ancestor_leaf(leafsets[ckey], e.level_t, e.k)
        if tkey is None:
            raise MeshError(f"no ancestor time leaf for element {e.key}")
        out[e.index] = old.element_index[ckey + tkey]
    return out


def project_state(old_mesh: SpaceTimeMesh, old_state: State, new_mesh: SpaceTimeMesh) -> State:
    """Piecewise-constant injection of cell values; flux-density-preserving
    injection of SubFace fluxes. New interior faces that lie inside an old
    leaf (sibling faces from a spatial split) start at zero flux, which is the
    constitutive value for the injected, locally constant pressure."""
    amap = ancestor_map(old_mesh, new_mesh)
    p = old_state.p[amap]
    s = old_state.s[amap]

    by_plane: dict[tuple[int, int], list] = {}
    for sf in old_mesh.subfaces:
        by_plane.setdefault((sf.orient, sf.plane_u), []).append(sf)
    u_w = np.zeros(new_mesh.n_subfaces)
    u_o = np.zeros(new_mesh.n_subfaces)
    for sf in new_mesh.subfaces:
        for old_sf in by_plane.get((sf.orient, sf.plane_u), ()):
            if (
                old_sf.lo_u <= sf.lo_u and sf.hi_u <= old_sf.hi_u
                and old_sf.t0u <= sf.t0u and sf.t1u <= old_sf.t1u
            ):
                scale = sf.measure / old_sf.measure
                u_w[sf.index] = old_state.u_w[old_sf.index] * scale
                u_o[sf.index] = old_state.u_o[old_sf.index] * scale
                break
    return State(new_mesh, p, s, u_w, u_o)


def restrict_to_coarse(fine_mesh: SpaceTimeMesh, fine_state: State, model) -> tuple[np.ndarray, np.ndarray]:
    """End-of-step restriction to the coarse grid.

    S_w is averaged with fine phi*rho_w*V weights (water mass preserving in
    the fine-weight convention); P_o with plain volume weights. Returns
    (P0, S0) arrays of shape (nx, ny).
    """
    g = fine_mesh.grid
    mass_w = np.zeros((g.nx, g.ny))
    mass_ws = np.zeros((g.nx, g.ny))
    vol = np.zeros((g.nx, g.ny))
    vol_p = np.zeros((g.nx, g.ny))
    ntu = fine_mesh.ntu
    for cidx, key in enumerate(fine_mesh.column_keys):
        eid = fine_mesh.column_elements[cidx][-1]
        e = fine_mesh.elements[eid]
        if e.t1u != ntu:
            raise MeshError("column does not reach the end of the step")
        ic, jc = fine_mesh.coarse_ancestor(e)
        phi = model.rock.phi[e.level_s][e.ci, e.cj]
        rho_w = physics.density(model.fluid, physics.WATER, fine_state.p[eid])
        w = phi * rho_w * e.volume
        mass_w[ic, jc] += w
        mass_ws[ic, jc] += w * fine_state.s[eid]
        vol[ic, jc] += e.volume
        vol_p[ic, jc] += e.volume * fine_state.p[eid]
    return vol_p / vol, mass_ws / mass_w
