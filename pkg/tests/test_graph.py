import math

import numpy as np
import pytest

from psocirc import (
    CircuitGraph,
    assemble_pso,
    build_tree_maps,
    eigenmodes,
    impedance,
    terminate_semi_infinite,
    validate,
)
from psocirc.graph import (
    DisconnectedGraphError,
    NonPositiveImpedanceError,
    assemble_unreduced,
)
from conftest import assert_lambda_multisets_close, nodal_impedance


def worked_example_graph():
    """Five-vertex circuit with the spanning tree 1->0, 2->1, 3->0, 4->0.

    Inductors sit on tree edges (2,1) and (3,0); capacitors on (1,0),
    (2,1), (2,3), (3,0), (3,4); the drive port is on (4,0).  Values are
    small integers so every assembled entry is an exact float.
    """
    g = CircuitGraph(root="0")
    for v in ("1", "2", "3", "4"):
        g.add_vertex(v)
    g.add_branch("1", "0", c=1.0)
    g.add_branch("2", "1", k=2.0, c=5.0)
    g.add_branch("2", "3", c=7.0)
    g.add_branch("3", "0", k=3.0, c=11.0)
    g.add_branch("3", "4", c=13.0)
    g.add_port("drive", "4", "0")
    tree = [("1", "0"), ("2", "1"), ("3", "0"), ("4", "0")]
    return g, tree


def test_worked_example_l_vectors():
    g, tree = worked_example_graph()
    maps = build_tree_maps(g, tree)
    assert maps.l("0").tolist() == [0, 0, 0, 0]
    assert maps.l("1").tolist() == [1, 0, 0, 0]
    assert maps.l("2").tolist() == [1, 1, 0, 0]
    assert maps.l("3").tolist() == [0, 0, 1, 0]
    assert maps.l("4").tolist() == [0, 0, 0, 1]


def test_worked_example_golden_matrices():
    g, tree = worked_example_graph()
    model = assemble_pso(g, build_tree_maps(g, tree))
    k_expected = np.diag([0.0, 2.0, 3.0, 0.0])
    c_expected = np.array(
        [
            [1.0 + 7.0, 7.0, -7.0, 0.0],
            [7.0, 5.0 + 7.0, -7.0, 0.0],
            [-7.0, -7.0, 11.0 + 7.0 + 13.0, -13.0],
            [0.0, 0.0, -13.0, 13.0],
        ]
    )
    p_expected = np.array([[0.0], [0.0], [0.0], [1.0]])
    assert np.array_equal(model.k, k_expected)
    assert np.array_equal(model.g, np.zeros((4, 4)))
    assert np.array_equal(model.c, c_expected)
    assert np.array_equal(model.p, p_expected)


def test_two_vertex_tree():
    g = CircuitGraph()
    g.add_branch("a", "gnd", c=1e-15)
    maps = build_tree_maps(g)
    assert maps.n_coords == 1
    assert maps.l("gnd").tolist() == [0]  # zero vector: root path is empty
    assert maps.l("a").tolist() == [1]


def test_star_graph_basis_vectors():
    g = CircuitGraph()
    for i in range(5):
        g.add_branch(f"n{i}", "gnd", c=1e-15)
    maps = build_tree_maps(g)
    seen = set()
    for i in range(5):
        vec = maps.l(f"n{i}")
        assert np.sum(np.abs(vec)) == 1
        seen.add(int(np.argmax(vec)))
    assert seen == set(range(5))


def test_disconnected_graph_reports_components():
    g = CircuitGraph()
    g.add_branch("a", "gnd", c=1e-15)
    g.add_branch("x", "y", c=1e-15)
    with pytest.raises(DisconnectedGraphError) as err:
        build_tree_maps(g)
    comps = [frozenset(c) for c in err.value.components]
    assert frozenset({"x", "y"}) in comps


def test_ports_connect_for_tree_purposes():
    # a port edge with no element still makes the graph connected
    g = CircuitGraph()
    g.add_branch("a", "gnd", c=1e-15)
    g.add_port("probe", "b", "gnd")
    g.add_branch("a", "b", c=1e-15)
    build_tree_maps(g)


def test_assembled_models_validate(rng):
    for _ in range(25):
        g = _random_graph(rng)
        model = assemble_pso(g)
        assert validate(model).ok


def _random_graph(rng, n_max=8):
    n = int(rng.integers(2, n_max))
    g = CircuitGraph()
    names = [f"n{i}" for i in range(n)]
    for v in names:
        g.add_branch(v, "gnd", c=float(rng.uniform(0.2, 2.0)) * 1e-13)
    for _ in range(int(rng.integers(1, 2 * n))):
        i, j = rng.choice(n, size=2, replace=False)
        kind = rng.integers(0, 3)
        kwargs = {}
        if kind == 0:
            kwargs["k"] = float(rng.uniform(0.1, 2.0)) * 1e8
        elif kind == 1:
            kwargs["g"] = float(rng.uniform(0.1, 2.0)) * 1e-2
        else:
            kwargs["c"] = float(rng.uniform(0.1, 2.0)) * 1e-14
        g.add_branch(names[i], names[j], **kwargs)
    if rng.uniform() < 0.8:
        g.add_port("p0", names[0], "gnd")
    return g


def test_row_sums_of_unreduced_assembly_vanish(rng):
    for _ in range(10):
        g = _random_graph(rng)
        k_hat, g_hat, c_hat, t = assemble_unreduced(g)
        for hat in (k_hat, g_hat, c_hat):
            assert np.allclose(hat.sum(axis=0), 0.0, atol=1e-9 * max(np.abs(hat).max(), 1))
        # T @ hat reproduces the direct symmetric assembly
        model = assemble_pso(g)
        assert np.allclose(t @ k_hat, model.k, rtol=1e-12, atol=1e-12 * max(np.abs(model.k).max(), 1))
        assert np.allclose(t @ c_hat, model.c, rtol=1e-12, atol=1e-12 * max(np.abs(model.c).max(), 1))


def test_tree_choice_is_coordinate_change(rng):
    # lambda multiset and port impedance are independent of the tree
    for _ in range(10):
        g = _random_graph(rng)
        if not g.ports:
            g.add_port("p0", g.vertices[1], "gnd")
        maps_bfs = build_tree_maps(g)
        tree_alt = _random_spanning_tree(g, rng)
        maps_alt = build_tree_maps(g, tree_alt)
        m0 = assemble_pso(g, maps_bfs)
        m1 = assemble_pso(g, maps_alt)
        lam0 = [m.lam for m in eigenmodes(m0)]
        lam1 = [m.lam for m in eigenmodes(m1)]
        assert_lambda_multisets_close(lam0, lam1)
        s = 1j * rng.uniform(1e9, 1e11)
        z0 = impedance(m0, s).matrix
        z1 = impedance(m1, s).matrix
        assert np.allclose(z0, z1, rtol=1e-9)


def _random_spanning_tree(graph, rng):
    order = list(graph.vertices[1:])
    rng.shuffle(order)
    visited = {graph.root}
    edges = []
    pending = list(order)
    while pending:
        progressed = False
        for v in list(pending):
            nbrs = [u for u in graph.neighbors(v) if u in visited]
            if nbrs:
                parent = nbrs[int(rng.integers(0, len(nbrs)))]
                edges.append((v, parent))
                visited.add(v)
                pending.remove(v)
                progressed = True
        if not progressed:
            raise AssertionError("graph not connected")
    return edges


def test_port_impedance_matches_nodal_analysis(rng):
    for _ in range(10):
        g = _random_graph(rng)
        if not g.ports:
            g.add_port("p0", g.vertices[1], "gnd")
        model = assemble_pso(g)
        s = 1j * rng.uniform(1e9, 5e10)
        z_pso = impedance(model, s).matrix[0, 0]
        z_ref = nodal_impedance(g, s, g.ports[0][1:])
        assert z_pso == pytest.approx(z_ref, rel=1e-9)


def test_terminate_semi_infinite_equals_parallel_resistor():
    L, Cv, z0 = 10e-9, 100e-15, 50.0
    g = CircuitGraph()
    g.add_branch("a", "gnd", k=1 / L, c=Cv)
    g.add_port("drive", "a", "gnd")
    terminated = terminate_semi_infinite(g, ("a", "gnd"), z0)
    lam_t = eigenmodes(assemble_pso(terminated))[0].lam

    g_res = CircuitGraph()
    g_res.add_branch("a", "gnd", k=1 / L, c=Cv, g=1 / z0)
    g_res.add_port("drive", "a", "gnd")
    lam_r = eigenmodes(assemble_pso(g_res))[0].lam
    assert lam_t == pytest.approx(lam_r, rel=1e-12)
    assert terminated.semi_infinite[0]["z0"] == z0
    # original graph is untouched
    assert g.g("a", "gnd") == 0.0


def test_open_line_limit_leaves_modes_unchanged():
    L, Cv = 10e-9, 100e-15
    g = CircuitGraph()
    g.add_branch("a", "gnd", k=1 / L, c=Cv)
    lam0 = eigenmodes(assemble_pso(g))[0].lam
    terminated = terminate_semi_infinite(g, ("a", "gnd"), 1e15)
    lam1 = eigenmodes(assemble_pso(terminated))[0].lam
    assert lam1.imag == pytest.approx(lam0.imag, rel=1e-9)
    assert abs(lam1.real) <= 1e-12 * abs(lam0.imag) + 1e4


def test_nonpositive_impedance_rejected():
    g = CircuitGraph()
    g.add_branch("a", "gnd", c=1e-15)
    with pytest.raises(NonPositiveImpedanceError):
        terminate_semi_infinite(g, ("a", "gnd"), 0.0)


def test_single_capacitor_port_assembly():
    Cv = 100e-15
    g = CircuitGraph()
    g.add_branch("n1", "gnd", c=Cv)
    g.add_port("p", "n1", "gnd")
    model = assemble_pso(g)
    assert np.array_equal(model.k, [[0.0]])
    assert np.array_equal(model.g, [[0.0]])
    assert np.array_equal(model.c, [[Cv]])
    assert np.array_equal(model.p, [[1.0]])
