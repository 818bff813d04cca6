import math

import numpy as np
import pytest

from psocirc import (
    ConstraintSet,
    PSOModel,
    constrain,
    eigenmodes,
    impedance,
    transform,
    union,
    validate,
)
from psocirc.compose import DuplicateLabelError, NotInvertibleError, OverConstrainedError
from conftest import assert_lambda_multisets_close, random_model


def lc_model(f_ghz, label):
    Cv = 100e-15
    L = 1.0 / ((2 * math.pi * f_ghz * 1e9) ** 2 * Cv)
    return PSOModel([[1 / L]], [[0.0]], [[Cv]], [[1.0]], (label,), (f"port_{label}",))


def lam_multiset(model):
    return [m.lam for m in eigenmodes(model)]


def test_transform_identity():
    m = random_model(np.random.default_rng(1), 3)
    out = transform(m, np.eye(3))
    assert np.array_equal(out.k, m.k)
    assert np.array_equal(out.g, m.g)
    assert np.array_equal(out.c, m.c)
    assert np.array_equal(out.p, m.p)


def test_transform_scalar_scaling_preserves_lambda():
    m = lc_model(5.0, "a")
    out = transform(m, 2.0 * np.eye(1))
    assert np.array_equal(out.k, 4.0 * m.k)
    assert np.array_equal(out.c, 4.0 * m.c)
    assert_lambda_multisets_close(lam_multiset(m), lam_multiset(out), rtol=1e-12)


def test_transform_preserves_transfer_function(rng):
    m = random_model(rng, 5, n_ports=2)
    u = rng.standard_normal((5, 5)) + 0.5 * np.eye(5)
    out = transform(m, u)
    for _ in range(20):
        s = 1j * rng.uniform(1e8, 1e11)
        z0 = impedance(m, s).matrix
        z1 = impedance(out, s).matrix
        assert np.allclose(z0, z1, rtol=1e-9, atol=1e-9 * np.abs(z0).max())


def test_transform_maps_eigenvectors(rng):
    m = random_model(rng, 4)
    u = rng.standard_normal((4, 4)) + 0.5 * np.eye(4)
    out = transform(m, u)
    inv_ut = np.linalg.inv(u.T)
    sol0, sol1 = eigenmodes(m), eigenmodes(out)
    for mode0, mode1 in zip(sol0, sol1):
        assert mode0.lam == pytest.approx(mode1.lam, rel=1e-7)
        mapped = inv_ut @ mode0.phi_vector
        mapped = mapped / np.linalg.norm(mapped)
        overlap = abs(np.vdot(mapped, mode1.phi_vector))
        assert overlap == pytest.approx(1.0, abs=1e-6)


def test_transform_rejects_singular():
    m = random_model(np.random.default_rng(2), 3)
    u = np.ones((3, 3))
    with pytest.raises(NotInvertibleError):
        transform(m, u)


def test_union_decoupled_modes():
    m = union([lc_model(5.0, "a"), lc_model(6.0, "b")])
    freqs = eigenmodes(m).frequencies_hz()
    assert freqs == pytest.approx([5e9, 6e9], rel=1e-9)


def test_union_with_empty_model_is_identity():
    m = lc_model(5.0, "a")
    empty = PSOModel(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))
    out = union([m, empty])
    assert np.array_equal(out.k, m.k)
    assert out.coord_labels == m.coord_labels


def test_union_eigen_concatenation(rng):
    parts = [random_model(rng, n) for n in (2, 3)]
    parts = [
        PSOModel(p.k, p.g, p.c, p.p, tuple(f"m{i}c{j}" for j in range(p.n_coords)),
                 (f"m{i}p0",))
        for i, p in enumerate(parts)
    ]
    joint = union(parts)
    lam_parts = [lam for p in parts for lam in lam_multiset(p)]
    assert_lambda_multisets_close(lam_multiset(joint), lam_parts, rtol=1e-10)


def test_union_duplicate_labels_rejected():
    with pytest.raises(DuplicateLabelError):
        union([lc_model(5.0, "a"), lc_model(6.0, "a")])


def test_constrain_parallel_capacitors_merge():
    # two identical capacitors to ground, fluxes tied: the port sees 2*C0
    C0 = 50e-15
    m = PSOModel(
        np.zeros((2, 2)), np.zeros((2, 2)), np.diag([C0, C0]),
        np.array([[1.0], [0.0]]),
    )
    reduced, report = constrain(m, ConstraintSet(np.array([[1.0], [-1.0]])))
    assert reduced.n_coords == 1
    s = 2j * math.pi * 5e9
    z = impedance(reduced, s).matrix[0, 0]
    assert z == pytest.approx(1.0 / (s * 2 * C0), rel=1e-12)
    assert np.allclose(report.null_basis.T @ np.array([[1.0], [-1.0]]), 0.0, atol=1e-14)


def test_constrain_empty_set_preserves_spectrum(rng):
    m = random_model(rng, 4)
    reduced, report = constrain(m, ConstraintSet(np.zeros((4, 0))))
    assert reduced.n_coords == 4
    assert report.effective_constraints == 0
    assert_lambda_multisets_close(lam_multiset(m), lam_multiset(reduced))


def test_constrain_prunes_dependent_columns(rng):
    m = random_model(rng, 4)
    y = np.zeros((4, 3))
    y[:, 0] = [1, -1, 0, 0]
    y[:, 1] = [2, -2, 0, 0]  # dependent
    y[:, 2] = [0, 1, -1, 0]
    reduced, report = constrain(m, ConstraintSet(y))
    assert report.effective_constraints == 2
    assert reduced.n_coords == 2


def test_constrain_overconstrained():
    m = random_model(np.random.default_rng(3), 2)
    with pytest.raises(OverConstrainedError):
        constrain(m, ConstraintSet(np.eye(2)))


def test_constrain_preserves_validity(rng):
    for _ in range(20):
        n = int(rng.integers(3, 7))
        m = random_model(rng, n)
        n_con = int(rng.integers(1, n))
        y = rng.standard_normal((n, n_con))
        reduced, _ = constrain(m, ConstraintSet(y))
        assert validate(reduced).ok


def test_constrain_drive_constraint_matrix(rng):
    m = random_model(rng, 4, n_ports=2)
    y = rng.standard_normal((4, 1))
    _, report = constrain(m, ConstraintSet(y))
    # drive constraint is Y_eff^T P for the pruned orthonormal Y
    assert report.drive_constraint.shape == (1, 2)


def test_join_fragments_matches_direct_graph():
    # two LC fragments joined by tying boundary fluxes vs building the
    # merged circuit directly on one graph
    from psocirc.graph import CircuitGraph, assemble_pso

    La, Ca, Lb, Cb, Cmid = 8e-9, 90e-15, 12e-9, 110e-15, 5e-15

    # fragment A: node a to ground with La || Ca plus boundary cap to ab
    ga = CircuitGraph()
    ga.add_branch("a", "gnd", k=1 / La, c=Ca)
    ga.add_branch("a", "ab", c=Cmid)
    ga.add_branch("ab", "gnd", c=1e-15)
    ma = assemble_pso(ga)
    ma = PSOModel(ma.k, ma.g, ma.c, ma.p, ("A_a", "A_ab"), ())

    # fragment B: boundary node ba to node b with Lb || Cb to ground
    gb = CircuitGraph()
    gb.add_branch("b", "gnd", k=1 / Lb, c=Cb)
    gb.add_branch("b", "ba", c=Cmid)
    gb.add_branch("ba", "gnd", c=1e-15)
    mb = assemble_pso(gb)
    mb = PSOModel(mb.k, mb.g, mb.c, mb.p, ("B_b", "B_ba"), ())

    joint = union([ma, mb])
    # tie the two boundary fluxes: coordinate order is A_a, A_ab, B_b, B_ba
    y = np.array([[0.0], [1.0], [0.0], [-1.0]])
    reduced, _ = constrain(joint, ConstraintSet(y))

    direct = CircuitGraph()
    direct.add_branch("a", "gnd", k=1 / La, c=Ca)
    direct.add_branch("a", "shared", c=Cmid)
    direct.add_branch("shared", "gnd", c=2e-15)
    direct.add_branch("b", "gnd", k=1 / Lb, c=Cb)
    direct.add_branch("b", "shared", c=Cmid)
    md = assemble_pso(direct)

    assert_lambda_multisets_close(lam_multiset(reduced), lam_multiset(md))
