import math

import numpy as np
import pytest

from psocirc import (
    PSOModel,
    admittance,
    eigenmodes,
    export_lagrangian,
    impedance,
    scattering,
    validate,
)
from psocirc.model import (
    LossyModelError,
    RankDeficientPortsError,
    SingularAtPointError,
    SingularMassMatrixError,
)
from conftest import random_model


def test_validate_zero_matrices_valid():
    m = PSOModel([[0.0]], [[0.0]], [[0.0]], [[1.0]])
    assert validate(m).ok


def test_validate_reports_asymmetry():
    m = PSOModel([[0, 1], [-1, 0]], np.zeros((2, 2)), np.eye(2), np.ones((2, 1)))
    report = validate(m)
    assert not report.ok
    assert any(v.matrix == "K" and v.kind == "asymmetry" for v in report.violations)


def test_validate_reports_negative_capacitance():
    m = PSOModel([[0.0]], [[0.0]], [[-1e-15]], [[1.0]])
    report = validate(m, psd_tol=1e-18)
    assert any(v.matrix == "C" and v.kind == "not_psd" for v in report.violations)


def test_lc_closed_form():
    L, Cv = 10e-9, 100e-15
    sol = eigenmodes(PSOModel([[1 / L]], [[0.0]], [[Cv]], [[1.0]]))
    assert len(sol) == 1
    expected = 1.0 / (2 * math.pi * math.sqrt(L * Cv))
    assert sol[0].frequency_hz == pytest.approx(expected, rel=1e-12)
    assert sol[0].decay_rate_hz == pytest.approx(0.0, abs=1e-3)


def test_rlc_closed_form_decay():
    L, Cv, R = 10e-9, 100e-15, 3000.0
    sol = eigenmodes(PSOModel([[1 / L]], [[1 / R]], [[Cv]], [[1.0]]))
    # scalar quadratic: lambda^2 C + lambda / R + 1 / L = 0
    assert sol[0].lam.real == pytest.approx(-1.0 / (2 * R * Cv), rel=1e-12)
    assert sol[0].t1_seconds == pytest.approx(R * Cv, rel=1e-12)


def test_free_particle_single_zero_mode():
    sol = eigenmodes(PSOModel([[0.0]], [[0.0]], [[1.0]], [[1.0]]))
    assert len(sol) == 1
    assert sol[0].zero_frequency
    assert sol[0].lam == 0
    assert math.isinf(sol[0].t1_seconds)


def test_overdamped_real_modes_kept_separately():
    # R small enough that the RLC is overdamped: two distinct real roots
    L, Cv, R = 10e-9, 100e-15, 10.0
    sol = eigenmodes(PSOModel([[1 / L]], [[1 / R]], [[Cv]], [[1.0]]))
    assert len(sol) == 2
    assert all(m.overdamped for m in sol)
    roots = sorted(m.lam.real for m in sol)
    poly = np.poly1d([Cv, 1 / R, 1 / L])
    expected = sorted(r.real for r in poly.roots)
    assert roots == pytest.approx(expected, rel=1e-9)


def test_singular_mass_matrix_rejected():
    m = PSOModel(np.eye(2), np.zeros((2, 2)), np.diag([1e-13, 0.0]), np.ones((2, 1)))
    with pytest.raises(SingularMassMatrixError) as err:
        eigenmodes(m)
    assert err.value.bad_coords == ["phi1"]


def test_mode_vectors_unit_norm_and_phase_fixed(rng):
    m = random_model(rng, 5)
    for mode in eigenmodes(m):
        assert np.linalg.norm(mode.phi_vector) == pytest.approx(1.0, rel=1e-12)
        pivot = mode.phi_vector[np.argmax(np.abs(mode.phi_vector))]
        assert pivot.imag == pytest.approx(0.0, abs=1e-12)
        assert pivot.real > 0


def test_impedance_lone_capacitor():
    Cv = 100e-15
    s = 2j * math.pi * 5e9
    z = impedance(PSOModel([[0.0]], [[0.0]], [[Cv]], [[1.0]]), s)
    assert z.matrix[0, 0] == pytest.approx(1.0 / (s * Cv), rel=1e-12)


def test_impedance_lone_resistor():
    R = 50.0
    z = impedance(PSOModel([[0.0]], [[1 / R]], [[1e-15]], [[1.0]]), 2j * math.pi * 1e3)
    assert z.matrix[0, 0] == pytest.approx(R, rel=1e-6)


def test_impedance_rejects_s_zero():
    m = PSOModel([[1e8]], [[0.0]], [[1e-13]], [[1.0]])
    with pytest.raises(SingularAtPointError):
        impedance(m, 0)


def test_impedance_pole_detected():
    L, Cv = 10e-9, 100e-15
    m = PSOModel([[1 / L]], [[0.0]], [[Cv]], [[1.0]])
    s_pole = 1j / math.sqrt(L * Cv)
    with pytest.raises(SingularAtPointError):
        impedance(m, s_pole)


def test_scattering_matched_load():
    z0 = 50.0
    m = PSOModel([[0.0]], [[1 / z0]], [[1e-18]], [[1.0]])
    s_mat = scattering(m, 2j * math.pi * 1e6, z0)
    assert abs(s_mat.matrix[0, 0]) < 1e-6


def test_scattering_open_circuit_limit():
    # shrinking capacitance drives Z to infinity and S to +1
    z0, s = 50.0, 2j * math.pi * 1e9
    for cv, tol in ((1e-15, 1e-3), (1e-18, 1e-6)):
        m = PSOModel([[0.0]], [[0.0]], [[cv]], [[1.0]])
        val = scattering(m, s, z0).matrix[0, 0]
        assert abs(val - 1.0) < tol


def test_admittance_single_capacitor():
    Cv = 100e-15
    s = 2j * math.pi * 5e9
    y = admittance(PSOModel([[0.0]], [[0.0]], [[Cv]], [[1.0]]), s)
    assert y.matrix[0, 0] == pytest.approx(s * Cv, rel=1e-12)


def test_admittance_matches_inverse_impedance(rng):
    m = random_model(rng, 4, n_ports=2)
    for _ in range(100):
        s = 1j * rng.uniform(1e8, 1e11)
        y = admittance(m, s).matrix
        z = impedance(m, s).matrix
        assert np.allclose(y @ z, np.eye(2), rtol=0, atol=1e-9 * np.abs(y @ z).max() + 1e-9)


def test_admittance_low_frequency_limit_is_k_schur(rng):
    # s->0 limit of s*Y(s) against the Schur complement of K in the
    # port block, checked with a two-point Richardson step.
    n, n_ports = 5, 2
    from conftest import random_psd

    k = random_psd(rng, n, 1e8) + 1e8 * np.eye(n)
    g = random_psd(rng, n, 1e-2)
    c = random_psd(rng, n, 1e-13) + 1e-14 * np.eye(n)
    p = np.vstack([np.eye(n_ports), np.zeros((n - n_ports, n_ports))])
    m = PSOModel(k, g, c, p)
    k1 = k[:n_ports, :n_ports]
    k2 = k[n_ports:, :n_ports]
    k3 = k[n_ports:, n_ports:]
    k_tilde = k1 - k2.T @ np.linalg.solve(k3, k2)

    w1, w2 = 2 * math.pi * 1e3, 2 * math.pi * 1e4
    f1 = (1j * w1) * admittance(m, 1j * w1).matrix
    f2 = (1j * w2) * admittance(m, 1j * w2).matrix
    richardson = (w2 * f1 - w1 * f2) / (w2 - w1)  # cancels the linear-in-s term
    assert np.allclose(richardson.real, k_tilde, rtol=1e-6, atol=1e-6 * np.abs(k_tilde).max())


def test_admittance_rank_deficient_ports():
    m = PSOModel(np.eye(2) * 1e8, np.zeros((2, 2)), np.eye(2) * 1e-13,
                 np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(RankDeficientPortsError):
        admittance(m, 1j * 1e9)


def test_impedance_brute_force_nodal_oracle():
    # Appendix-A style circuit evaluated two independent ways
    from psocirc.graph import CircuitGraph, assemble_pso
    from conftest import nodal_impedance

    g = CircuitGraph()
    g.add_branch("n1", "gnd", c=1e-15)
    g.add_branch("n2", "n1", k=2e8, c=5e-15)
    g.add_branch("n2", "n3", c=7e-15)
    g.add_branch("n3", "gnd", k=3e8, c=11e-15)
    g.add_branch("n3", "n4", c=13e-15)
    g.add_port("drive", "n4", "gnd")
    model = assemble_pso(g)
    s = 2j * math.pi * 5e9
    z_pso = impedance(model, s).matrix[0, 0]
    z_ref = nodal_impedance(g, s, ("n4", "gnd"))
    assert z_pso == pytest.approx(z_ref, rel=1e-9)


def test_transfer_reciprocity_and_conjugacy(rng):
    m = random_model(rng, 5, n_ports=2)
    for _ in range(20):
        s = complex(rng.uniform(-1e9, 1e9), rng.uniform(1e8, 1e11))
        z = impedance(m, s).matrix
        assert np.allclose(z, z.T, rtol=1e-9)
        z_conj = impedance(m, s.conjugate()).matrix
        assert np.allclose(z_conj, z.conjugate(), rtol=1e-9)


def test_mode_count_matches_pencil_degree(rng):
    for _ in range(20):
        n = int(rng.integers(1, 7))
        m = random_model(rng, n)
        sol = eigenmodes(m)
        paired = sum(1 for mode in sol if not mode.overdamped)
        real = sum(1 for mode in sol if mode.overdamped)
        assert 2 * paired + real == 2 * n


def test_lossless_eigenvalues_pure_imaginary(rng):
    m = random_model(rng, 5, lossy=False)
    for mode in eigenmodes(m):
        assert abs(mode.lam.real) <= 1e-9 * abs(mode.lam)


def test_export_lagrangian_round_trip():
    L, Cv = 10e-9, 100e-15
    m = PSOModel([[1 / L]], [[0.0]], [[Cv]], [[1.0]], ("phi0",))
    desc = export_lagrangian(m, [{"edge_vector": [1], "ej": 2.5e-24}])
    assert np.array_equal(desc.kinetic_farad, m.c)
    assert np.array_equal(desc.potential_per_henry, m.k)
    assert len(desc.cosine_terms) == 1
    assert desc.cosine_terms[0].edge_vector == (1,)
    assert desc.cosine_terms[0].flux_offset == 0.0
    payload = desc.to_json()
    assert '"energy_joules": 2.5e-24' in payload


def test_export_lagrangian_rejects_lossy():
    m = PSOModel([[1e8]], [[1e-3]], [[1e-13]], [[1.0]])
    with pytest.raises(LossyModelError):
        export_lagrangian(m)


def test_export_lagrangian_empty_junctions():
    m = PSOModel([[1e8]], [[0.0]], [[1e-13]], [[1.0]])
    desc = export_lagrangian(m)
    assert desc.cosine_terms == ()
