"""Sublevel cubical filtrations of pixel grids and their persistence diagrams.

V-construction throughout: pixels are vertices, edges join 4-adjacent pixels,
squares fill 2x2 blocks. A cell's filtration value is the max over its
vertices. H0/H1 pairing is computed by sparse boundary-matrix reduction over
Z/2 with the clearing optimization; a union-find elder-rule pass provides an
independent H0 fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagram import Diagram

__all__ = [
    "CubicalFiltration",
    "FiltrationError",
    "build_filtration",
    "compute_persistence",
    "pair_h0_union_find",
    "grid_persistence",
]


class FiltrationError(RuntimeError):
    """Internal-invariant violation: unsorted or face-violating filtration."""


@dataclass(frozen=True)
class CubicalFiltration:
    """Cells of the V-construction sorted by (filtration value, dim, anchor).

    Cell ids are laid out as vertices, then horizontal edges, then vertical
    edges, then squares, each block in row-major anchor order; sorting by
    (value, id) therefore breaks value ties by dimension first and then by
    anchor, deterministically.
    """

    height: int
    width: int
    values: np.ndarray  # per cell id, float64
    dims: np.ndarray  # per cell id, int8
    order: np.ndarray  # sorted position -> cell id
    pos: np.ndarray  # cell id -> sorted position

    @property
    def n_vertices(self) -> int:
        return self.height * self.width

    @property
    def n_hedges(self) -> int:
        return self.height * (self.width - 1)

    @property
    def n_vedges(self) -> int:
        return (self.height - 1) * self.width

    @property
    def n_cells(self) -> int:
        return len(self.values)

    def edge_endpoints(self, cid: int) -> tuple[int, int]:
        """Vertex ids of an edge cell."""
        h, w = self.height, self.width
        nv, nh = self.n_vertices, self.n_hedges
        if cid < nv + nh:  # horizontal: (r, c) -- (r, c + 1)
            k = cid - nv
            r, c = divmod(k, w - 1)
            a = r * w + c
            return a, a + 1
        k = cid - nv - nh  # vertical: (r, c) -- (r + 1, c)
        r, c = divmod(k, w)
        a = r * w + c
        return a, a + w

    def square_edges(self, cid: int) -> tuple[int, int, int, int]:
        """Edge ids bounding a square cell anchored at its top-left pixel."""
        h, w = self.height, self.width
        nv, nh = self.n_vertices, self.n_hedges
        k = cid - nv - nh - self.n_vedges
        r, c = divmod(k, w - 1)
        top = nv + r * (w - 1) + c
        bottom = nv + (r + 1) * (w - 1) + c
        left = nv + nh + r * w + c
        right = left + 1
        return top, bottom, left, right


def build_filtration(grid: np.ndarray) -> CubicalFiltration:
    """Build the sorted sublevel V-construction filtration of a grid."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError("grid must be a 2D array with positive dimensions")
    h, w = grid.shape
    vvals = grid.ravel()
    hvals = np.maximum(grid[:, :-1], grid[:, 1:]).ravel()
    uvals = np.maximum(grid[:-1, :], grid[1:, :]).ravel()
    svals = np.maximum(
        np.maximum(grid[:-1, :-1], grid[:-1, 1:]),
        np.maximum(grid[1:, :-1], grid[1:, 1:]),
    ).ravel()
    values = np.concatenate([vvals, hvals, uvals, svals])
    dims = np.concatenate(
        [
            np.zeros(len(vvals), np.int8),
            np.ones(len(hvals) + len(uvals), np.int8),
            np.full(len(svals), 2, np.int8),
        ]
    )
    order = np.lexsort((np.arange(len(values)), values)).astype(np.int64)
    pos = np.empty(len(values), np.int64)
    pos[order] = np.arange(len(values))
    return CubicalFiltration(h, w, values, dims, order, pos)


def _validate(filt: CubicalFiltration) -> None:
    sorted_vals = filt.values[filt.order]
    if np.any(np.diff(sorted_vals) < 0):
        raise FiltrationError("filtration not sorted by value")
    pos = filt.pos
    nv, nh, nu = filt.n_vertices, filt.n_hedges, filt.n_vedges
    for eid in range(nv, nv + nh + nu):
        a, b = filt.edge_endpoints(eid)
        if pos[a] > pos[eid] or pos[b] > pos[eid]:
            raise FiltrationError("edge precedes one of its vertices")
    for sid in range(nv + nh + nu, filt.n_cells):
        if any(pos[e] > pos[sid] for e in filt.square_edges(sid)):
            raise FiltrationError("square precedes one of its edges")


def _symdiff(a: list[int], b: list[int]) -> list[int]:
    """Symmetric difference of two ascending int lists (Z/2 column addition)."""
    out: list[int] = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        x, y = a[i], b[j]
        if x < y:
            out.append(x)
            i += 1
        elif y < x:
            out.append(y)
            j += 1
        else:
            i += 1
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def compute_persistence(filt: CubicalFiltration, validate: bool = True) -> Diagram:
    """Persistence diagram (H0 and H1) of a sorted cubical filtration.

    Column reduction of the Z/2 boundary matrix, squares first so that edge
    columns paired as H1 creators are cleared and skipped in the edge pass.
    Zero-persistence pairs are discarded; essential classes are flagged.
    """
    if validate:
        _validate(filt)
    pos = filt.pos
    order = filt.order
    values = filt.values
    n = filt.n_cells
    nv = filt.n_vertices
    ne = filt.n_hedges + filt.n_vedges

    births: list[float] = []
    deaths: list[float] = []
    dims: list[int] = []
    ess: list[bool] = []

    # --- squares: each reduced column pairs an edge (H1 creator) with the
    # square killing it; those edges are cleared for the edge pass
    owner: dict[int, list[int]] = {}
    cleared = np.zeros(n, dtype=bool)
    sq_pos = np.sort(pos[nv + ne :])
    for p in sq_pos:
        sid = order[p]
        col = sorted(int(pos[e]) for e in filt.square_edges(int(sid)))
        while col:
            low = col[-1]
            other = owner.get(low)
            if other is None:
                break
            col = _symdiff(col, other)
        if not col:
            # would be an essential 2-cycle; impossible for planar grids
            continue
        low = col[-1]
        owner[low] = col
        cleared[low] = True
        b, d = values[order[low]], values[sid]
        if d > b:
            births.append(b)
            deaths.append(d)
            dims.append(1)
            ess.append(False)

    # --- edges (skipping cleared ones): nonzero reduced column pairs a vertex
    # (H0 creator) with the merging edge; a zero column is an essential H1 class
    owner0: dict[int, list[int]] = {}
    edge_pos = np.sort(pos[nv : nv + ne])
    for p in edge_pos:
        if cleared[p]:
            continue
        eid = order[p]
        a, b2 = filt.edge_endpoints(int(eid))
        pa, pb = int(pos[a]), int(pos[b2])
        col = [pa, pb] if pa < pb else [pb, pa]
        while col:
            low = col[-1]
            other = owner0.get(low)
            if other is None:
                break
            col = _symdiff(col, other)
        if col:
            low = col[-1]
            owner0[low] = col
            b, d = values[order[low]], values[eid]
            if d > b:
                births.append(b)
                deaths.append(d)
                dims.append(0)
                ess.append(False)
        else:
            births.append(values[eid])
            deaths.append(np.nan)
            dims.append(1)
            ess.append(True)

    # --- unpaired vertices are essential H0 classes
    vert_pos = pos[:nv]
    paired = np.zeros(n, dtype=bool)
    if owner0:
        paired[np.fromiter(owner0.keys(), dtype=np.int64)] = True
    for p in vert_pos:
        if not paired[p]:
            births.append(values[order[p]])
            deaths.append(np.nan)
            dims.append(0)
            ess.append(True)

    return Diagram(
        np.array(births), np.array(deaths), np.array(dims, np.int8), np.array(ess, bool)
    ).canonical()


def pair_h0_union_find(filt: CubicalFiltration) -> Diagram:
    """H0 pairs via union-find with the elder rule (reduction-equivalent).

    On each merging edge, the component whose birth vertex is later in the
    filtration order (larger birth value, ties by larger vertex id) dies.
    """
    pos = filt.pos
    order = filt.order
    values = filt.values
    nv = filt.n_vertices
    ne = filt.n_hedges + filt.n_vedges

    parent = list(range(nv))
    # birth vertex of each component tracked as its sorted position (encodes
    # value with the deterministic tie-break)
    birth_pos = [int(pos[v]) for v in range(nv)]

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    births: list[float] = []
    deaths: list[float] = []

    edge_pos = np.sort(pos[nv : nv + ne])
    for p in edge_pos:
        eid = int(order[p])
        a, b = filt.edge_endpoints(eid)
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        if birth_pos[ra] < birth_pos[rb]:
            elder, younger = ra, rb
        else:
            elder, younger = rb, ra
        parent[younger] = elder
        bval = values[order[birth_pos[younger]]]
        dval = values[eid]
        if dval > bval:
            births.append(bval)
            deaths.append(dval)

    ess_births = [
        values[order[birth_pos[v]]] for v in range(nv) if parent[v] == v
    ]
    n_fin, n_ess = len(births), len(ess_births)
    return Diagram(
        np.array(births + ess_births),
        np.array(deaths + [np.nan] * n_ess),
        np.zeros(n_fin + n_ess, np.int8),
        np.array([False] * n_fin + [True] * n_ess),
    ).canonical()


def grid_persistence(grid: np.ndarray, validate: bool = False) -> Diagram:
    """Convenience: full H0/H1 persistence diagram of a grayscale grid."""
    return compute_persistence(build_filtration(grid), validate=validate)
