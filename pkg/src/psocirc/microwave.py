"""Analytic microwave network evaluation for the readout circuits.

Continuous (non-discretized) ABCD-matrix treatment of lumped elements
and lossless transmission-line segments, used for the exact environment
admittance Y_e(i w) seen by the transmon, the low-frequency reactance
fit, and the single-port admittance approximation of the transmon
relaxation time T1 = C / Re[Y_e(i w_q)].
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import PsoError


class PoleAtPointError(PsoError):
    """Evaluation hit a pole of the network response."""


class WindowContainsResonanceError(PsoError):
    """The reactance-fit window overlaps an environment resonance."""


class ResonantPointError(PsoError):
    """Re[Y_e] evaluation landed on an environment resonance."""


@dataclass(frozen=True)
class TwoPortABCD:
    """Two-port chain matrix with entries as functions of s.

    b carries ohms and c siemens; a and d are dimensionless.  Reciprocal
    elements satisfy a*d - b*c = 1.
    """

    a: callable
    b: callable
    c: callable
    d: callable

    def matrix(self, s: complex) -> np.ndarray:
        return np.array([[self.a(s), self.b(s)], [self.c(s), self.d(s)]])

    def cascade(self, other: "TwoPortABCD") -> "TwoPortABCD":
        return TwoPortABCD(
            a=lambda s: self.a(s) * other.a(s) + self.b(s) * other.c(s),
            b=lambda s: self.a(s) * other.b(s) + self.b(s) * other.d(s),
            c=lambda s: self.c(s) * other.a(s) + self.d(s) * other.c(s),
            d=lambda s: self.c(s) * other.b(s) + self.d(s) * other.d(s),
        )


def series_impedance(z) -> TwoPortABCD:
    """Series element with impedance z (a constant or a function of s)."""
    zf = z if callable(z) else (lambda s, _z=z: _z)
    return TwoPortABCD(lambda s: 1.0, zf, lambda s: 0.0, lambda s: 1.0)


def shunt_admittance(y) -> TwoPortABCD:
    """Shunt element with admittance y (a constant or a function of s)."""
    yf = y if callable(y) else (lambda s, _y=y: _y)
    return TwoPortABCD(lambda s: 1.0, lambda s: 0.0, yf, lambda s: 1.0)


def series_capacitor(c: float) -> TwoPortABCD:
    return series_impedance(lambda s: 1.0 / (s * c))


def line_segment(z0: float, v: float, length: float) -> TwoPortABCD:
    """Lossless line: a = d = cos(w l / v), b = i z0 sin, c = i sin / z0.

    Written with hyperbolic functions of s l / v so the matrix is exact
    for any complex s, reducing to the trigonometric form on s = i w.
    """
    if z0 <= 0 or v <= 0 or length < 0:
        raise ValueError("line parameters must be positive")
    tau = length / v
    return TwoPortABCD(
        a=lambda s: cmath.cosh(s * tau),
        b=lambda s: z0 * cmath.sinh(s * tau),
        c=lambda s: cmath.sinh(s * tau) / z0,
        d=lambda s: cmath.cosh(s * tau),
    )


def network_elements(kind: str, **params) -> TwoPortABCD:
    """Factory for the standard ABCD elements by name."""
    if kind == "series_impedance":
        return series_impedance(params["z"])
    if kind == "shunt_admittance":
        return shunt_admittance(params["y"])
    if kind == "line":
        return line_segment(params["z0"], params["v"], params["length"])
    raise KeyError(f"unknown element kind {kind!r}")


def input_impedance(cascade, load, s: complex) -> complex:
    """Impedance looking into a cascade of two-ports terminated by load.

    load may be math.inf for an open circuit.  Raises PoleAtPointError
    when the denominator of (A Z_L + B) / (C Z_L + D) vanishes.
    """
    mat = np.eye(2, dtype=complex)
    for element in cascade:
        mat = mat @ element.matrix(s)
    a, b = mat[0]
    c, d = mat[1]
    if load is math.inf or (isinstance(load, float) and math.isinf(load)):
        num, den = a, c
    else:
        num, den = a * load + b, c * load + d
    if den == 0:
        raise PoleAtPointError(f"input impedance pole at s = {s:.6e}")
    return num / den


def parallel(*impedances) -> complex:
    """One-port combination by admittance addition; inf is an open."""
    y = 0.0 + 0.0j
    for z in impedances:
        if z is math.inf or (isinstance(z, float) and math.isinf(z)):
            continue
        if z == 0:
            return 0.0 + 0.0j
        y += 1.0 / z
    if y == 0:
        return math.inf
    return 1.0 / y


def shorted_stub(z0: float, v: float, length: float, s: complex) -> complex:
    """Impedance of a shorted line segment: z0 tanh(s l / v)."""
    return z0 * cmath.tanh(s * length / v)


@dataclass(frozen=True)
class CircuitParams:
    """Component values of a readout circuit (the paper's Table I set)."""

    l_r: float  # resonator length (m)
    x_c: float  # transmon coupler position from the resonator short (m)
    c_r: float  # resonator-to-environment coupling capacitance (F)
    c_c: float  # transmon coupling capacitance (F)
    c_j: float  # transmon capacitance (F)
    l_j: float  # transmon inductance (H)
    nu: float  # line propagation speed (m/s)
    z0: float  # line characteristic impedance (ohm)
    l_f: float | None = None  # Purcell filter length (m)
    x_t: float | None = None  # feedline tap position from each filter short (m)
    x_r: float | None = None  # resonator coupling position along the filter (m)


TABLE_A = CircuitParams(
    l_r=4.99171e-3, x_c=800e-6, c_r=10e-15, c_c=7e-15,
    c_j=100e-15, l_j=10e-9, nu=1.2e8, z0=50.0,
)

TABLE_B = CircuitParams(
    l_r=5.03299e-3, x_c=800e-6, c_r=2.6e-15, c_c=7e-15,
    c_j=100e-15, l_j=10e-9, nu=1.2e8, z0=50.0,
    l_f=10.2522e-3, x_t=880e-6, x_r=5e-3,
)


def _filter_impedance_at(params: CircuitParams, s: complex) -> complex:
    """Impedance of the shorted-shorted filter seen at position x_r.

    The filter is shorted at both ends with a feedline resistor z0
    tapped at x_t from each short; both half-lines from x_r transform
    their tap-plus-stub load back to the coupling position.
    """
    p = params
    z_branches = []
    for span in (p.x_r, p.l_f - p.x_r):
        stub = shorted_stub(p.z0, p.nu, p.x_t, s)
        z_tap = parallel(p.z0, stub)
        line = line_segment(p.z0, p.nu, span - p.x_t)
        z_branches.append(input_impedance([line], z_tap, s))
    return parallel(*z_branches)


def environment_admittance(circuit: str, params: CircuitParams, omega: float) -> complex:
    """Exact admittance Y_e(i w) seen by the transmon, transmon removed.

    Looking out from the transmon terminals: the coupling capacitor C_c
    in series with the resonator at x_c, which splits into the shorted
    stub toward x = 0 and the line toward the open end, terminated there
    by C_r into the rest of the network (the feedline junction for
    fig1a, the Purcell filter for fig1b).
    """
    p = params
    s = 1j * omega
    if circuit == "fig1a":
        z_end = 1.0 / (s * p.c_r) + p.z0 / 2.0  # two feedlines in parallel
    elif circuit == "fig1b":
        z_end = 1.0 / (s * p.c_r) + _filter_impedance_at(p, s)
    else:
        raise KeyError(f"unknown circuit {circuit!r}; expected fig1a or fig1b")
    z_stub = shorted_stub(p.z0, p.nu, p.x_c, s)
    line = line_segment(p.z0, p.nu, p.l_r - p.x_c)
    z_line = input_impedance([line], z_end, s)
    z_node = parallel(z_stub, z_line)
    z_total = 1.0 / (s * p.c_c) + z_node
    if z_total == 0:
        raise PoleAtPointError(f"environment admittance pole at w = {omega:.6e}")
    return 1.0 / z_total


@dataclass(frozen=True)
class ReactanceFit:
    """Leading low-frequency reactances of the environment admittance.

    Models Im[Y_e(i w)] as -(1/L_e)/w + C_e w over the fit window.  The
    residual is the relative RMS misfit; no acceptance threshold is
    applied here.
    """

    c_e: float
    l_e_inv: float
    fit_window: tuple[float, float]
    residual: float


def fit_reactance_samples(omegas, im_values) -> tuple[float, float, float]:
    """Least-squares fit of Im[Y] samples to -(1/L)/w + C w.

    Returns (c_e, l_e_inv, relative rms residual).
    """
    omegas = np.asarray(omegas, dtype=float)
    im_values = np.asarray(im_values, dtype=float)
    design = np.column_stack([-1.0 / omegas, omegas])
    coeffs, *_ = np.linalg.lstsq(design, im_values, rcond=None)
    l_e_inv, c_e = float(coeffs[0]), float(coeffs[1])
    fitted = design @ coeffs
    norm = np.linalg.norm(im_values)
    residual = float(np.linalg.norm(fitted - im_values) / norm) if norm > 0 else 0.0
    return c_e, l_e_inv, residual


def fit_reactances(circuit: str, params: CircuitParams, f_lo: float = 0.1e9,
                   f_hi: float = 1.0e9, n_points: int = 50) -> ReactanceFit:
    """Fit C_e and 1/L_e on a log frequency grid below the first resonance."""
    freqs = np.logspace(math.log10(f_lo), math.log10(f_hi), n_points)
    omegas = 2.0 * math.pi * freqs
    samples = np.array([environment_admittance(circuit, params, w) for w in omegas])
    im = samples.imag
    magnitude = np.abs(samples)
    # A resonance inside the window flips the sign of Im[Y] or spikes |Y|
    # far above its median (|Y| ~ w C_c is otherwise smooth).
    if np.any(np.diff(np.sign(im[im != 0])) != 0) or np.any(
        magnitude > 1e3 * np.median(magnitude)
    ):
        raise WindowContainsResonanceError(
            f"window [{f_lo:.3e}, {f_hi:.3e}] Hz crosses an environment resonance"
        )
    c_e, l_e_inv, residual = fit_reactance_samples(omegas, im)
    return ReactanceFit(c_e, l_e_inv, (f_lo, f_hi), residual)


def admittance_t1(circuit, params: CircuitParams, lj: float,
                  fit: ReactanceFit) -> dict:
    """Single-port admittance estimate of the transmon relaxation time.

    The transmon is modeled as a parallel LRC resonator with
    1/L = 1/lj + 1/L_e and C = C_j + C_e; at the bare frequency
    w_q = 1/sqrt(L C) the relaxation time is T1 = C / Re[Y_e(i w_q)].
    circuit is "fig1a", "fig1b", or a callable omega -> Y_e(i omega).
    """
    if lj <= 0:
        raise ValueError("junction inductance must be positive")
    l_inv = 1.0 / lj + fit.l_e_inv
    c_total = params.c_j + fit.c_e
    omega_q = math.sqrt(l_inv / c_total)
    if callable(circuit):
        y_e = complex(circuit(omega_q))
    else:
        y_e = environment_admittance(circuit, params, omega_q)
    if not np.isfinite(y_e.real) or abs(y_e) > 1e6:
        raise ResonantPointError(f"Y_e evaluation sits on a resonance at w_q = {omega_q:.6e}")
    re_y = y_e.real
    if re_y <= 0:
        raise ResonantPointError(
            f"Re[Y_e] = {re_y:.3e} not positive at w_q = {omega_q:.6e}"
        )
    return {"omega_q": omega_q, "t1": c_total / re_y}
