import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfgilbert.errors import FormatError, ParameterError
from sfgilbert.graph import (
    SpatialGrid,
    all_power_sums,
    build_full_graph,
    build_thinned_graph,
    exhaustive_full_graph,
    exhaustive_thinned_graph,
    in_edge_power_sum,
    out_edge_power_sum,
    read_edges,
    thin,
    weakly_connected_components,
    write_edges,
)
from sfgilbert.sampling import RadiusLaw, instance_from_points, sample_instance, stream
from sfgilbert.torus import pairwise_distances

LAW = RadiusLaw.pareto(2, 1)


def test_empty_instance():
    inst = sample_instance(2, 1e-5, 1.0, LAW, 0)
    g = build_full_graph(inst)
    assert g.num_vertices == 0 and g.num_edges == 0
    assert thin(g).num_edges == 0
    assert weakly_connected_components(g) == []


def test_three_point_full_and_thinned(three_points):
    g = build_full_graph(three_points)
    assert g.edge_set() == {(0, 1), (0, 2), (1, 2), (2, 1)}
    t = thin(g)
    assert t.edge_set() == {(0, 1), (1, 2)}
    assert weakly_connected_components(g) == [[0, 1, 2]] == weakly_connected_components(t)


def test_two_points_keep_the_downward_edge():
    inst = instance_from_points([((0, 0), 2.0), ((1, 0), 1.5)], 10)
    assert build_thinned_graph(inst).edge_set() == {(0, 1)}


def test_equal_radii_break_ties_by_lower_id():
    inst = instance_from_points([((0, 0), 1.0), ((0.5, 0), 1.0)], 10)
    assert build_thinned_graph(inst).edge_set() == {(0, 1)}


def test_power_sums_three_points(three_points):
    g = build_full_graph(three_points)
    assert out_edge_power_sum(g, 0, 1.0) == pytest.approx(6.5)
    assert out_edge_power_sum(g, 0, 0.0) == 2.0
    assert in_edge_power_sum(g, 2, 1.0) == pytest.approx(3.5 + 0.5)
    out, inn = all_power_sums(g, 1.0)
    assert out[0] == pytest.approx(6.5) and inn[2] == pytest.approx(4.0)
    with pytest.raises(ParameterError):
        out_edge_power_sum(g, 5, 1.0)


def test_isolated_vertex_power_sum():
    inst = instance_from_points([((0, 0), 0.5), ((5, 5), 0.5)], 20)
    g = build_full_graph(inst)
    for a in (0.0, 1.0, 2.5):
        assert out_edge_power_sum(g, 0, a) == 0.0 and in_edge_power_sum(g, 0, a) == 0.0


def test_huge_radius_reaches_everyone():
    inst = instance_from_points([((0, 0), 100.0), ((3, 3), 0.1), ((-4, 2), 0.1), ((4.9, -4.9), 0.1)], 10)
    assert set(build_full_graph(inst).out_neighbors(0).tolist()) == {1, 2, 3}


@pytest.mark.parametrize("seed", range(100))
def test_grid_full_graph_matches_exhaustive(seed):
    n = 4 + seed % 17
    inst = sample_instance(2, n, 1.0, LAW, seed)
    assert build_full_graph(inst).edge_set() == exhaustive_full_graph(inst).edge_set()


@pytest.mark.parametrize("seed", range(30))
def test_grid_thinned_graph_matches_exhaustive(seed):
    n = 4 + seed % 9
    inst = sample_instance(2, n, 1.0, LAW, 1000 + seed)
    assert build_thinned_graph(inst).edge_set() == exhaustive_thinned_graph(inst).edge_set()


@pytest.mark.parametrize("cell", [0.37, 1.0, 2.5, 50.0])
def test_cell_side_does_not_change_edges(cell):
    inst = sample_instance(2, 9, 1.0, RadiusLaw.pareto(3, 2), 17)
    assert build_full_graph(inst, cell).edge_set() == exhaustive_full_graph(inst).edge_set()


def test_three_dimensional_oracle():
    inst = sample_instance(3, 5, 1.0, RadiusLaw.pareto(3, 1), 21)
    assert build_full_graph(inst).edge_set() == exhaustive_full_graph(inst).edge_set()
    assert build_thinned_graph(inst).edge_set() == exhaustive_thinned_graph(inst).edge_set()


def test_spatial_grid_buckets_partition_points():
    inst = sample_instance(2, 12, 1.0, LAW, 3)
    grid = SpatialGrid(inst.coords, inst.n, 1.3)
    seen = np.concatenate([grid.bucket((i, j)) for i in range(grid.m) for j in range(grid.m)])
    assert sorted(seen.tolist()) == list(range(inst.size))
    assert grid.cell_side >= 1.3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_structural_invariants(seed):
    inst = sample_instance(2, 8, 1.0, LAW, seed)
    g = build_full_graph(inst)
    t = thin(g)
    for row in range(g.num_vertices):
        nb = g.out_neighbors(row)
        assert np.all(np.diff(nb) > 0) and row not in nb
    assert t.edge_set() <= g.edge_set()
    rank = inst.rank
    e = t.edges()
    assert np.all(rank[e[:, 0]] > rank[e[:, 1]])
    # both directions present iff the distance is within the smaller radius
    dist = pairwise_distances(inst.coords, inst.coords, inst.n)
    es = g.edge_set()
    for a, b in es:
        assert ((b, a) in es) == (dist[a, b] <= min(inst.radii[a], inst.radii[b]))


@pytest.mark.parametrize("seed", range(50))
def test_components_preserved_by_thinning(seed):
    inst = sample_instance(2, 32, 1.0, LAW, 5000 + seed)
    g = build_full_graph(inst)
    assert weakly_connected_components(g) == weakly_connected_components(thin(g))


def test_slivnyak_mean_out_equals_mean_in():
    law = RadiusLaw.pareto(4, 1)
    outs, ins = [], []
    for s in range(30):
        g = build_full_graph(sample_instance(2, 24, 1.0, law, s))
        o, i = all_power_sums(g, 1.0)
        outs.append(o.mean())
        ins.append(i.mean())
    # per-instance vertex averages agree exactly: every edge is counted once on each side
    assert np.allclose(outs, ins)
    from sfgilbert.degree_stats import campbell_mean_oracle

    o = np.array(outs)
    assert abs(o.mean() - campbell_mean_oracle(2, 24, 1.0, law)) <= 3 * o.std(ddof=1) / math.sqrt(len(o))


def test_edge_file_roundtrip(tmp_path, three_points):
    t = build_thinned_graph(three_points)
    p = tmp_path / "edges.txt"
    write_edges(t, p)
    back = read_edges(p, three_points)
    assert back.variant == "thinned" and back.edge_set() == t.edge_set()
    p.write_text("0 1\n")
    with pytest.raises(FormatError):
        read_edges(p, three_points)


def test_thin_requires_full_graph(three_points):
    with pytest.raises(ParameterError):
        thin(build_thinned_graph(three_points))


def test_independent_streams_give_distinct_instances():
    a = sample_instance(2, 8, 1.0, LAW, 0, rng=stream(0, 1))
    b = sample_instance(2, 8, 1.0, LAW, 0, rng=stream(0, 2))
    assert a.size != b.size or not np.array_equal(a.coords, b.coords)
