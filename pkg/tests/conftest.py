import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_psd(rng, n, scale=1.0, rank=None):
    """Random symmetric PSD matrix via A A^T."""
    rank = rank if rank is not None else n
    a = rng.standard_normal((n, rank))
    return scale * (a @ a.T)


def random_model(rng, n, n_ports=1, lossy=True, scales=(1e8, 2e-2, 1e-13)):
    """Random valid PSO model with circuit-like magnitudes."""
    from psocirc import PSOModel

    ks, gs, cs = scales
    k = random_psd(rng, n, ks)
    g = random_psd(rng, n, gs) if lossy else np.zeros((n, n))
    c = random_psd(rng, n, cs) + cs * 0.1 * np.eye(n)  # keep C well conditioned
    p = rng.standard_normal((n, n_ports))
    return PSOModel(k, g, c, p)


def assert_lambda_multisets_close(a, b, rtol=1e-9, atol_scale=1e-9):
    """Greedy nearest matching of two eigenvalue multisets."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    assert len(a) == len(b), f"multiset sizes differ: {len(a)} vs {len(b)}"
    scale = max((abs(x) for x in a), default=1.0)
    for x in a:
        dists = [abs(x - y) for y in b]
        j = int(np.argmin(dists))
        assert dists[j] <= rtol * abs(x) + atol_scale * scale, (
            f"eigenvalue {x} has no partner within tolerance (closest {b[j]})"
        )
        b.pop(j)


def nodal_impedance(graph, s, port):
    """Independent brute-force nodal-analysis impedance of a circuit graph.

    Builds the complex nodal admittance matrix over non-ground vertices
    by stamping k/s + g + c*s per edge and solves for the voltage from a
    unit current injected across the port edge.  Kept deliberately free
    of the spanning-tree machinery it cross-checks.
    """
    live = [v for v in graph.vertices if v != graph.root]
    index = {v: i for i, v in enumerate(live)}
    n = len(live)
    y = np.zeros((n, n), dtype=complex)
    for (a, b) in graph.edges():
        w = graph.k(a, b) / s + graph.g(a, b) + graph.c(a, b) * s
        ia = index.get(a)
        ib = index.get(b)
        if ia is not None:
            y[ia, ia] += w
        if ib is not None:
            y[ib, ib] += w
        if ia is not None and ib is not None:
            y[ia, ib] -= w
            y[ib, ia] -= w
    rhs = np.zeros(n, dtype=complex)
    v_from, v_to = port
    if v_from != graph.root:
        rhs[index[v_from]] += 1.0
    if v_to != graph.root:
        rhs[index[v_to]] -= 1.0
    volts = np.linalg.solve(y, rhs)
    vf = volts[index[v_from]] if v_from != graph.root else 0.0
    vt = volts[index[v_to]] if v_to != graph.root else 0.0
    return vf - vt
