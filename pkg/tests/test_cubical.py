import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import alive_counts
from topogate.cubical import (
    CubicalFiltration,
    FiltrationError,
    build_filtration,
    compute_persistence,
    grid_persistence,
    pair_h0_union_find,
)
from topogate.grid import betti_oracle, sublevel_mask

small_grids = arrays(
    np.int64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.integers(0, 5),
)


class TestBuildFiltration:
    def test_1x2_max_of_faces(self):
        f = build_filtration(np.array([[3, 5]]))
        assert f.n_cells == 3
        # edge value = max of endpoints
        assert f.values[2] == 5.0
        assert list(f.values[f.order]) == [3.0, 5.0, 5.0]

    def test_square_max_of_corners(self):
        f = build_filtration(np.array([[1, 2], [3, 4]]))
        assert f.values[-1] == 4.0

    def test_constant_grid(self):
        f = build_filtration(np.full((3, 3), 7))
        assert np.all(f.values == 7.0)

    def test_cell_count(self):
        h, w = 4, 5
        f = build_filtration(np.zeros((h, w)))
        assert f.n_cells == h * w + h * (w - 1) + (h - 1) * w + (h - 1) * (w - 1)

    def test_faces_precede_cells(self):
        f = build_filtration(np.arange(12).reshape(3, 4))
        for eid in range(f.n_vertices, f.n_vertices + f.n_hedges + f.n_vedges):
            a, b = f.edge_endpoints(eid)
            assert f.pos[a] < f.pos[eid] and f.pos[b] < f.pos[eid]


class TestComputePersistence:
    def test_constant_grid(self):
        d = grid_persistence(np.full((2, 2), 7))
        assert d.as_multiset() == [(7.0, None, 0, True)]

    def test_two_minima_merge(self):
        d = grid_persistence(np.array([[0, 2, 1]]))
        assert d.as_multiset() == [(1.0, 2.0, 0, False), (0.0, None, 0, True)]

    def test_ring_loop(self):
        g = np.full((3, 3), 1)
        g[1, 1] = 9
        d = grid_persistence(g)
        assert d.as_multiset() == [(1.0, None, 0, True), (1.0, 9.0, 1, False)]

    def test_face_violation_detected(self):
        f = build_filtration(np.array([[0, 2, 1]]))
        bad_pos = f.pos.copy()
        bad_pos[[0, f.n_vertices]] = bad_pos[[f.n_vertices, 0]]
        bad_order = np.empty_like(f.order)
        bad_order[bad_pos] = np.arange(f.n_cells)
        bad = CubicalFiltration(f.height, f.width, f.values, f.dims, bad_order, bad_pos)
        with pytest.raises(FiltrationError):
            compute_persistence(bad)

    def test_determinism(self, rng):
        g = rng.integers(0, 256, size=(12, 12))
        a = grid_persistence(g)
        b = grid_persistence(g)
        assert a.as_multiset() == b.as_multiset()
        assert np.array_equal(a.births, b.births)

    @given(small_grids)
    @settings(max_examples=150, deadline=None)
    def test_oracle_equivalence(self, g):
        d = grid_persistence(g, validate=True)
        for tau in np.unique(g):
            assert alive_counts(d, tau) == betti_oracle(sublevel_mask(g, tau))

    @given(small_grids)
    @settings(max_examples=100, deadline=None)
    def test_scale_shift_equivariance(self, g):
        base = grid_persistence(g)
        mapped = grid_persistence(3 * g + 2)

        def key(points):
            return sorted(
                (b, np.inf if d is None else d, k, e) for b, d, k, e in points
            )

        transformed = [
            (3 * b + 2, None if d is None else 3 * d + 2, k, e)
            for b, d, k, e in base.as_multiset()
        ]
        assert key(transformed) == key(mapped.as_multiset())


class TestUnionFindH0:
    def test_two_minima_merge(self):
        d = pair_h0_union_find(build_filtration(np.array([[0, 2, 1]])))
        assert d.as_multiset() == [(1.0, 2.0, 0, False), (0.0, None, 0, True)]

    def test_monotone_ramp_no_pairs(self):
        d = pair_h0_union_find(build_filtration(np.array([[0, 1, 2, 3]])))
        assert d.as_multiset() == [(0.0, None, 0, True)]

    def test_equal_minima_tiebreak(self):
        d = pair_h0_union_find(build_filtration(np.array([[0, 5, 0]])))
        assert d.as_multiset() == [(0.0, 5.0, 0, False), (0.0, None, 0, True)]

    @given(small_grids)
    @settings(max_examples=150, deadline=None)
    def test_matches_reduction(self, g):
        f = build_filtration(g)
        uf = pair_h0_union_find(f).as_multiset()
        red = [p for p in compute_persistence(f).as_multiset() if p[2] == 0]
        assert uf == red
