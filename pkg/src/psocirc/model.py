"""Positive second order (PSO) state-space models and their analysis.

A PSO model is the tuple (K, G, C, P) describing dynamics

    K @ phi + G @ d(phi)/dt + C @ d2(phi)/dt2 = P @ drive

with K, G, C real symmetric positive semidefinite.  K and C generate
conservative dynamics, G generates decay, and P couples the internal
coordinates to drive/response ports.  This module holds the model type,
its validation, the complex-frequency eigenproblem, transfer functions
(impedance, scattering, admittance) and the lossless Lagrangian export.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

# Default numerical tolerances, relative unless noted.
SYM_TOL = 1e-12
PSD_TOL = 1e-10
PASSIVITY_TOL = 1e-9
COND_LIMIT = 1e12

# Conjugate-pair matching tolerance, relative to |lambda|.
PAIR_TOL = 1e-8


class PsoError(Exception):
    """Base class for all errors raised by this package."""


class SingularMassMatrixError(PsoError):
    """C is singular or too ill-conditioned for the eigenproblem."""

    def __init__(self, message, bad_coords=None, cond=None):
        super().__init__(message)
        self.bad_coords = list(bad_coords or [])
        self.cond = cond


class SolverFailureError(PsoError):
    """The dense eigensolver did not converge."""


class SingularAtPointError(PsoError):
    """A transfer-function evaluation hit a pole of the model."""

    def __init__(self, message, s=None, cond=None):
        super().__init__(message)
        self.s = s
        self.cond = cond


class RankDeficientPortsError(PsoError):
    """P does not have full column rank, admittance is not defined."""


class LossyModelError(PsoError):
    """Lagrangian export requires G = 0."""


def _as_square(a, name):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class PSOModel:
    """The tuple (K, G, C, P) with coordinate and port labels.

    K is in 1/henry, G in siemens, C in farad; P is dimensionless.
    Instances are immutable and safe to share between workers.
    """

    k: np.ndarray
    g: np.ndarray
    c: np.ndarray
    p: np.ndarray
    coord_labels: tuple[str, ...] = ()
    port_labels: tuple[str, ...] = ()

    def __post_init__(self):
        k = _as_square(self.k, "K")
        g = _as_square(self.g, "G")
        c = _as_square(self.c, "C")
        n = k.shape[0]
        if g.shape[0] != n or c.shape[0] != n:
            raise ValueError(
                f"K, G, C must share one dimension, got {k.shape}, {g.shape}, {c.shape}"
            )
        p = np.asarray(self.p, dtype=float)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        if p.shape[0] != n:
            raise ValueError(f"P must have {n} rows, got shape {p.shape}")
        coord_labels = tuple(self.coord_labels) or tuple(f"phi{i}" for i in range(n))
        port_labels = tuple(self.port_labels) or tuple(f"p{j}" for j in range(p.shape[1]))
        if len(coord_labels) != n:
            raise ValueError("coord_labels length must equal the coordinate count")
        if len(port_labels) != p.shape[1]:
            raise ValueError("port_labels length must equal the port count")
        for arr in (k, g, c, p):
            arr.setflags(write=False)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "coord_labels", coord_labels)
        object.__setattr__(self, "port_labels", port_labels)

    @property
    def n_coords(self) -> int:
        return self.k.shape[0]

    @property
    def n_ports(self) -> int:
        return self.p.shape[1]

    def lossless(self, tol=SYM_TOL) -> bool:
        g_norm = _matnorm(self.g)
        if g_norm == 0.0:
            return True
        # conductance scale commensurate with K and C: 1/ohm = sqrt(F/H)
        scale = math.sqrt(_matnorm(self.k) * _matnorm(self.c))
        if scale == 0.0:
            scale = max(_matnorm(self.k), _matnorm(self.c), 1.0)
        return g_norm <= tol * scale


def _matnorm(m) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


@dataclass(frozen=True)
class Violation:
    matrix: str
    kind: str  # "asymmetry" | "not_psd" | "shape"
    worst: float
    detail: str = ""

    def __str__(self):
        return f"{self.matrix}: {self.kind} (worst {self.worst:.3e}) {self.detail}".rstrip()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(str(v) for v in self.violations)


def validate(model: PSOModel, sym_tol=SYM_TOL, psd_tol=PSD_TOL) -> ValidationReport:
    """Check symmetry and positive semidefiniteness of K, G, C.

    Returns a report listing each violated invariant with the offending
    matrix name and the worst asymmetry or eigenvalue.  An empty report
    means the model is valid.  Diagnostic only, never raises.
    """
    violations = []
    for name, m in (("K", model.k), ("G", model.g), ("C", model.c)):
        scale = _matnorm(m)
        asym = _matnorm(m - m.T)
        if asym > sym_tol * max(scale, 1e-300):
            violations.append(
                Violation(name, "asymmetry", asym, f"relative {asym / max(scale, 1e-300):.3e}")
            )
            continue  # eigvalsh below assumes symmetry
        if m.size == 0:
            continue
        eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
        largest = float(np.max(np.abs(eigs))) if eigs.size else 0.0
        smallest = float(np.min(eigs)) if eigs.size else 0.0
        if smallest < -psd_tol * largest:
            violations.append(
                Violation(name, "not_psd", smallest, f"largest magnitude {largest:.3e}")
            )
    return ValidationReport(tuple(violations))


@dataclass(frozen=True)
class EigenMode:
    """One eigenmode: complex frequency lambda and unit flux vector."""

    lam: complex
    phi_vector: np.ndarray
    zero_frequency: bool = False
    overdamped: bool = False

    @property
    def frequency_hz(self) -> float:
        return self.lam.imag / (2.0 * math.pi)

    @property
    def decay_rate_hz(self) -> float:
        if self.lam.real == 0.0:
            return 0.0
        return -2.0 * self.lam.real / (2.0 * math.pi)

    @property
    def t1_seconds(self) -> float:
        if self.lam.real == 0.0:
            return math.inf
        return -1.0 / (2.0 * self.lam.real)


@dataclass(frozen=True)
class EigenSolution:
    """Eigenmodes of a PSO model, one entry per conjugate pair.

    Modes are sorted by frequency ascending.  Purely real eigenvalues
    that found no conjugate partner are stored individually and flagged
    overdamped.
    """

    modes: tuple[EigenMode, ...]
    coord_labels: tuple[str, ...] = ()

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    def frequencies_hz(self) -> np.ndarray:
        return np.array([m.frequency_hz for m in self.modes])

    def decay_rates_hz(self) -> np.ndarray:
        return np.array([m.decay_rate_hz for m in self.modes])


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Unit norm with the largest-magnitude component real positive."""
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return v
    v = v / nrm
    i = int(np.argmax(np.abs(v)))
    pivot = v[i]
    if abs(pivot) > 0.0:
        v = v * (pivot.conjugate() / abs(pivot))
    # Re-normalize to kill the rounding from the phase twist.
    return v / np.linalg.norm(v)


def eigenmodes(model: PSOModel, cond_limit=COND_LIMIT, passivity_tol=PASSIVITY_TOL) -> EigenSolution:
    """Solve the generalized eigenproblem of the PSO model.

    Linearizes the second-order dynamics to the real matrix pencil

        [[-G, -K], [I, 0]] x = lambda [[C, 0], [0, I]] x

    with x = [v_phidot, v_phi], solves it densely (QZ), keeps the
    Im(lambda) >= 0 representative of each conjugate pair, restricts
    eigenvectors to the phi block and normalizes them.

    Raises SingularMassMatrixError when C fails the conditioning check
    and SolverFailureError when the QZ iteration does not converge.
    """
    n = model.n_coords
    if n == 0:
        return EigenSolution((), model.coord_labels)
    c = model.c
    c_scale = _matnorm(c)
    row_scale = np.max(np.abs(c), axis=1) if c.size else np.zeros(0)
    bad = [model.coord_labels[i] for i in range(n) if row_scale[i] <= 1e-30 * max(c_scale, 1e-300)]
    if bad or c_scale == 0.0:
        raise SingularMassMatrixError(
            f"C has no capacitance on coordinates {bad or list(model.coord_labels)}",
            bad_coords=bad or list(model.coord_labels),
        )
    cond = np.linalg.cond(c)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMassMatrixError(
            f"C condition number {cond:.3e} exceeds limit {cond_limit:.1e}",
            bad_coords=bad,
            cond=cond,
        )

    # Scale time and magnitude so the pencil entries sit near unity.
    # Raw SI values (1/H vs F) are ~20 orders of magnitude apart.
    k_scale = _matnorm(model.k)
    tau = math.sqrt(c_scale / k_scale) if k_scale > 0.0 else 1e-9
    ks = model.k * (tau * tau / c_scale)
    gs = model.g * (tau / c_scale)
    cs = c / c_scale

    a_mat = np.block([[-gs, -ks], [np.eye(n), np.zeros((n, n))]])
    b_mat = np.block([[cs, np.zeros((n, n))], [np.zeros((n, n)), np.eye(n)]])
    try:
        vals, vecs = scipy.linalg.eig(a_mat, b_mat)
    except Exception as exc:  # LinAlgError from a failed QZ sweep
        raise SolverFailureError(f"generalized eigensolver failed: {exc}") from exc
    if np.any(~np.isfinite(vals)):
        raise SolverFailureError("eigensolver returned non-finite eigenvalues")
    vals = vals / tau

    lam_scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    # A defective zero eigenvalue (coordinate with neither K nor G) splits
    # under rounding as +-sqrt(eps); snap those back to exactly zero.
    vals[np.abs(vals) <= 1e-7 * lam_scale] = 0.0
    modes = _pair_conjugates(vals, vecs[n:, :], lam_scale)

    # Passivity guard: clip tiny positive real parts, they are rounding.
    out = []
    for lam, vec, overdamped in modes:
        if lam.real > passivity_tol * max(lam_scale, 1e-300):
            raise SolverFailureError(
                f"eigenvalue {lam:.6e} violates passivity (Re > {passivity_tol:.1e} rel)"
            )
        zero = abs(lam) <= 1e-12 * max(lam_scale, 1e-300)
        out.append(EigenMode(lam, _fix_phase(vec), zero_frequency=zero, overdamped=overdamped))
    out.sort(key=lambda m: (m.frequency_hz, -m.lam.real))
    return EigenSolution(tuple(out), model.coord_labels)


def _pair_conjugates(vals, phi_block, lam_scale):
    """Group eigenvalues into conjugate pairs, keeping the Im >= 0 member.

    Real eigenvalues are their own conjugates, so two coincident real
    values (including zeros) merge into one stored mode; an unmatched
    real value is an overdamped mode of its own.
    """
    abs_floor = 1e-14 * max(lam_scale, 1e-300)
    n_eigs = len(vals)
    used = np.zeros(n_eigs, dtype=bool)
    order = np.argsort(-np.abs(vals.imag))  # pair the clearly-complex ones first
    modes = []
    for i in order:
        if used[i]:
            continue
        lam = vals[i]
        tol = PAIR_TOL * abs(lam) + abs_floor
        target = lam.conjugate()
        best, best_d = -1, np.inf
        for j in range(n_eigs):
            if j == i or used[j]:
                continue
            d = abs(vals[j] - target)
            if d < best_d:
                best, best_d = j, d
        used[i] = True
        if best >= 0 and best_d <= tol:
            used[best] = True
            rep = i if vals[i].imag >= 0 else best
            modes.append((vals[rep], phi_block[:, rep].copy(), False))
        else:
            is_real = abs(lam.imag) <= tol
            if is_real:
                modes.append((complex(lam.real, 0.0), phi_block[:, i].copy(), True))
            else:
                # Conjugate partner lost to rounding; store the Im>0 view.
                rep_lam = lam if lam.imag >= 0 else lam.conjugate()
                modes.append((rep_lam, phi_block[:, i].copy(), False))
    return modes


@dataclass(frozen=True)
class TransferSample:
    """One transfer-function sample at a complex Laplace point."""

    s: complex
    matrix: np.ndarray
    kind: str  # "impedance" | "scattering" | "admittance"
    port_labels: tuple[str, ...] = ()


def _dynamic_matrix(model: PSOModel, s: complex) -> np.ndarray:
    if s == 0:
        raise SingularAtPointError("transfer function undefined at s = 0", s=s)
    return model.k / s + model.g + model.c * s


def _solve_at_point(mat, rhs, s):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularAtPointError(
            f"dynamic matrix singular at s = {s:.6e} (cond {cond:.3e})", s=s, cond=cond
        )
    return np.linalg.solve(mat, rhs)


def impedance(model: PSOModel, s: complex) -> TransferSample:
    """Impedance matrix Z(s) = P^T (K/s + G + C s)^-1 P."""
    mat = _dynamic_matrix(model, s)
    sol = _solve_at_point(mat, model.p.astype(complex), s)
    return TransferSample(s, model.p.T @ sol, "impedance", model.port_labels)


def scattering(model: PSOModel, s: complex, z0: float) -> TransferSample:
    """Scattering matrix S = (Z + Z0 I)^-1 (Z - Z0 I) at the point s."""
    z = impedance(model, s).matrix
    eye = np.eye(model.n_ports)
    lhs = z + z0 * eye
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularAtPointError(f"Z + Z0 I singular at s = {s:.6e}", s=s, cond=cond)
    return TransferSample(s, np.linalg.solve(lhs, z - z0 * eye), "scattering", model.port_labels)


def _port_normal_form(model: PSOModel):
    """Coordinate change making P = [I; 0]; returns (U, rank check)."""
    p = model.p
    n, n_ports = p.shape
    if n_ports == 0:
        raise RankDeficientPortsError("model has no ports")
    q, r = np.linalg.qr(p, mode="complete")
    diag = np.abs(np.diag(r[:n_ports, :n_ports])) if n_ports else np.zeros(0)
    if n_ports > n or np.any(diag <= 1e-13 * max(float(np.max(np.abs(p))), 1e-300)):
        raise RankDeficientPortsError("P is rank deficient, admittance undefined")
    u = q.T.copy()
    u[:n_ports, :] = np.linalg.solve(r[:n_ports, :n_ports], u[:n_ports, :])
    return u


def admittance(model: PSOModel, s: complex) -> TransferSample:
    """Admittance matrix via the Schur complement in port-normal coordinates.

    Transforms coordinates so P = [I; 0], partitions K/s + G + C s into
    port and internal blocks and returns Y = Y1 - Y2^T Y3^-1 Y2.  Equals
    impedance(s)^-1 wherever both exist, but stays finite at impedance
    poles that are internal to the network.
    """
    u = _port_normal_form(model)
    n_ports = model.n_ports
    mat = u @ _dynamic_matrix(model, s) @ u.T
    y1 = mat[:n_ports, :n_ports]
    if n_ports == model.n_coords:
        return TransferSample(s, y1, "admittance", model.port_labels)
    y2 = mat[n_ports:, :n_ports]
    y3 = mat[n_ports:, n_ports:]
    cond = np.linalg.cond(y3)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularAtPointError(f"internal block singular at s = {s:.6e}", s=s, cond=cond)
    return TransferSample(
        s, y1 - y2.T @ np.linalg.solve(y3, y2), "admittance", model.port_labels
    )


def select_ports(model: PSOModel, names) -> PSOModel:
    """Model with P restricted to the named port columns, in order."""
    indices = []
    for name in names:
        try:
            indices.append(model.port_labels.index(name))
        except ValueError:
            raise KeyError(f"no port named {name!r}; model has {model.port_labels}")
    return PSOModel(
        model.k, model.g, model.c, model.p[:, indices],
        model.coord_labels, tuple(names),
    )


@dataclass(frozen=True)
class CosineTerm:
    energy_joules: float
    edge_vector: tuple[int, ...]
    flux_offset: float = 0.0


@dataclass(frozen=True)
class LagrangianDescription:
    """Serialized lossless Lagrangian: quadratic part plus cosine terms."""

    coord_labels: tuple[str, ...]
    kinetic_farad: np.ndarray  # C
    potential_per_henry: np.ndarray  # K
    drive_coupling: np.ndarray  # P
    cosine_terms: tuple[CosineTerm, ...] = ()
    form: str = (
        "L = 0.5*dPhi^T C dPhi - 0.5*Phi^T K Phi + Phi^T P D"
        " + sum_j Ej*cos(m_j . Phi + d_j)"
    )

    def to_json(self, indent=2) -> str:
        payload = {
            "form": self.form,
            "coordinates": list(self.coord_labels),
            "kinetic_farad": self.kinetic_farad.tolist(),
            "potential_per_henry": self.potential_per_henry.tolist(),
            "drive_coupling": self.drive_coupling.tolist(),
            "cosine_terms": [
                {
                    "energy_joules": t.energy_joules,
                    "edge_vector": list(t.edge_vector),
                    "flux_offset": t.flux_offset,
                }
                for t in self.cosine_terms
            ],
        }
        return json.dumps(payload, indent=indent)


def export_lagrangian(model: PSOModel, junctions=()) -> LagrangianDescription:
    """Export the Lagrangian of a lossless model.

    Each junction is a mapping with keys ``edge_vector`` (integer vector
    over the coordinates) and ``ej`` (Josephson energy in joules), adding
    a term Ej*cos(m(e).Phi) to the quadratic Lagrangian.  External flux
    offsets are emitted as the constant 0.

    Raises LossyModelError when G != 0.
    """
    if not model.lossless():
        raise LossyModelError("cannot export a Lagrangian for a model with G != 0")
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model invalid: {report}")
    terms = []
    for j in junctions:
        vec = tuple(int(x) for x in j["edge_vector"])
        if len(vec) != model.n_coords:
            raise ValueError("junction edge_vector length must equal the coordinate count")
        terms.append(CosineTerm(float(j["ej"]), vec, float(j.get("flux_offset", 0.0))))
    return LagrangianDescription(
        model.coord_labels, model.c, model.k, model.p, tuple(terms)
    )
