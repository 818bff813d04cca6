"""Parameter sweeps, mode tracking and regional support analysis.

Higher-level studies built on the eigen solver: classify modes by the
circuit region that dominates them, follow mode identities across a
parameter sweep by eigenvector overlap, project eigenmodes onto declared
regions (regional support vectors), and compare discretizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import EigenSolution, PsoError, eigenmodes
from .netlist import Netlist, SweepStmt, build_circuit


class EmptyRegionError(PsoError):
    """A declared region maps to no coordinates."""


@dataclass(frozen=True)
class RegionalSupportVector:
    """Norm-squared projections of one eigenmode onto the regions.

    Entries are renormalized over the region-covered coordinates so they
    sum to 1; covered_weight records the fraction of the mode that lay
    inside the regions before renormalization.  distance_to_basis is the
    Euclidean distance to the standard basis vector of the dominant
    region, and barycentric_xy places the vector on the plane spanned by
    the basis (an equilateral simplex for three regions).
    """

    region_names: tuple[str, ...]
    entries: tuple[float, ...]
    covered_weight: float
    dominant: str
    distance_to_basis: float
    barycentric_xy: tuple[float, float]

    def entry(self, region: str) -> float:
        return self.entries[self.region_names.index(region)]

    def distance_to(self, region: str) -> float:
        e = np.zeros(len(self.entries))
        e[self.region_names.index(region)] = 1.0
        return float(np.linalg.norm(np.array(self.entries) - e))


def _simplex_vertices(k: int) -> np.ndarray:
    angles = np.pi / 2 + 2 * np.pi * np.arange(k) / k
    return np.column_stack([np.cos(angles), np.sin(angles)])


def regional_support(solution: EigenSolution, regions: dict) -> list[RegionalSupportVector]:
    """Regional support vector of every mode in the solution.

    regions maps region name to an iterable of coordinate indices; the
    regions must be disjoint (not re-checked here) and non-empty.
    """
    names = tuple(regions.keys())
    index_sets = [np.asarray(sorted(regions[name]), dtype=int) for name in names]
    for name, idx in zip(names, index_sets):
        if idx.size == 0:
            raise EmptyRegionError(f"region {name!r} contains no coordinates")
    vertices = _simplex_vertices(len(names))
    out = []
    for mode in solution:
        weights = np.array([float(np.sum(np.abs(mode.phi_vector[idx]) ** 2))
                            for idx in index_sets])
        covered = float(weights.sum())
        entries = weights / covered if covered > 0 else weights
        dom = int(np.argmax(entries))
        basis = np.zeros(len(names))
        basis[dom] = 1.0
        xy = entries @ vertices
        out.append(RegionalSupportVector(
            names, tuple(float(x) for x in entries), covered,
            names[dom], float(np.linalg.norm(entries - basis)),
            (float(xy[0]), float(xy[1])),
        ))
    return out


@dataclass(frozen=True)
class TrackingWarning:
    """A near-ambiguous overlap assignment during mode tracking."""

    step: int
    label: str
    best_overlap: float
    second_overlap: float

    def __str__(self):
        return (f"step {self.step}: mode {self.label!r} overlap {self.best_overlap:.3f} "
                f"vs runner-up {self.second_overlap:.3f}")


def _greedy_match(prev_vectors, cur_vectors, prev_labels, step, ambiguity_ratio):
    """Greedy maximum-|inner product| assignment of previous onto current.

    Returns (assignment, warnings): assignment[i] is the index in
    cur_vectors matched to prev_vectors[i].  An assignment whose
    runner-up overlap comes within ambiguity_ratio of the winner is
    recorded as a TrackingWarning.
    """
    overlap = np.abs(np.conj(prev_vectors) @ cur_vectors.T)
    work = overlap.copy()
    assignment = [None] * len(prev_vectors)
    warnings = []
    for _ in range(min(work.shape)):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        best = work[i, j]
        if best < 0:
            break
        row = overlap[i, :].copy()
        row[j] = -np.inf
        second = float(np.max(row)) if row.size > 1 else 0.0
        if second > ambiguity_ratio * best:
            warnings.append(TrackingWarning(step, prev_labels[i], float(best), second))
        assignment[i] = int(j)
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    return assignment, warnings


def track_modes(solutions, initial_labels=None, ambiguity_ratio: float = 0.9):
    """Propagate mode labels across an ordered list of eigensolutions.

    Matches consecutive eigenvector sets by greedy maximum |inner
    product| assignment.  Returns (labels_per_solution, warnings) where
    warnings lists the assignments whose runner-up overlap came within
    the ambiguity ratio of the winner (reported, never fatal).
    """
    solutions = list(solutions)
    if not solutions:
        return [], []
    n0 = len(solutions[0])
    if initial_labels is None:
        initial_labels = [f"mode{i}" for i in range(n0)]
    if len(initial_labels) != n0:
        raise ValueError("initial_labels length must match the first solution")
    labels = [list(initial_labels)]
    warnings = []
    for step in range(1, len(solutions)):
        prev, cur = solutions[step - 1], solutions[step]
        prev_vecs = np.array([m.phi_vector for m in prev])
        cur_vecs = np.array([m.phi_vector for m in cur])
        assignment, warns = _greedy_match(prev_vecs, cur_vecs, labels[step - 1],
                                          step, ambiguity_ratio)
        warnings.extend(warns)
        new_labels = [None] * len(cur)
        for i, j in enumerate(assignment):
            if j is not None:
                new_labels[j] = labels[step - 1][i]
        spare = 0
        for j in range(len(cur)):
            if new_labels[j] is None:
                new_labels[j] = f"new{step}_{spare}"
                spare += 1
        labels.append(new_labels)
    return labels, warnings


def label_by_region(solution: EigenSolution, regions: dict) -> list[str]:
    """Frequency-ordered labels from each mode's dominant region.

    The lowest mode dominated by region r is labeled "r", the next
    "r:2", and so on; modes outside every region are labeled "mode:N".
    """
    if regions:
        rsvs = regional_support(solution, regions)
    labels = []
    counts: dict[str, int] = {}
    for i, mode in enumerate(solution):
        # modes living mostly outside the regions get a neutral label
        base = rsvs[i].dominant if regions and rsvs[i].covered_weight >= 0.5 else "mode"
        counts[base] = counts.get(base, 0) + 1
        labels.append(base if counts[base] == 1 else f"{base}:{counts[base]}")
    return labels


@dataclass
class ModeRecord:
    label: str
    lam: complex
    frequency_hz: float
    decay_rate_hz: float
    t1_s: float
    rsv: RegionalSupportVector | None = None


@dataclass
class SweepPoint:
    value: float
    modes: list[ModeRecord]
    extras: dict = field(default_factory=dict)

    def mode(self, label: str) -> ModeRecord:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(f"no mode labeled {label!r} at value {self.value}")


@dataclass
class SweepResult:
    """Per-point eigen summaries with tracking-consistent mode labels."""

    param_path: str
    points: list[SweepPoint]
    warnings: list[TrackingWarning]
    failures: list[tuple[float, str]]
    provenance: dict
    region_names: tuple[str, ...] = ()

    def series(self, label: str, attr: str = "frequency_hz"):
        """(values, quantity) arrays for one tracked mode, skipping gaps."""
        xs, ys = [], []
        for p in self.points:
            for m in p.modes:
                if m.label == label:
                    xs.append(p.value)
                    ys.append(getattr(m, attr))
                    break
        return np.array(xs), np.array(ys)

    def labels(self) -> list[str]:
        seen = []
        for p in self.points:
            for m in p.modes:
                if m.label not in seen:
                    seen.append(m.label)
        return seen


def sweep_grid(spec: SweepStmt) -> np.ndarray:
    if spec.log:
        return np.logspace(math.log10(spec.start), math.log10(spec.stop), spec.points)
    return np.linspace(spec.start, spec.stop, spec.points)


def run_sweep(netlist: Netlist, sweep_spec: SweepStmt | None = None, *,
              band: tuple[float, float] = (1e9, 1e10), overlay=None) -> SweepResult:
    """Rebuild and solve the circuit at every sweep point.

    The tracked mode set is fixed at the first point as the modes whose
    frequencies fall inside band; their identities then follow
    eigenvector overlaps even if they wander out of band.  overlay, if
    given, is called as overlay(netlist_at_point, value) and its dict
    lands in the point's extras.  Failed points are recorded and the
    sweep continues.
    """
    if sweep_spec is None:
        declared = netlist.sweeps()
        if not declared:
            raise ValueError("netlist declares no sweep and none was given")
        sweep_spec = declared[0]
    values = sweep_grid(sweep_spec)
    solutions, kept_values, failures, extras_list = [], [], [], []
    region_map = None
    for value in values:
        point_netlist = netlist.with_param(sweep_spec.path, float(value))
        try:
            built = build_circuit(point_netlist)
            solution = eigenmodes(built.model)
            extras = dict(overlay(point_netlist, float(value))) if overlay else {}
        except PsoError as exc:
            failures.append((float(value), str(exc)))
            continue
        if region_map is None:
            region_map = built.region_map
        solutions.append(solution)
        kept_values.append(float(value))
        extras_list.append(extras)
    if not solutions:
        raise PsoError(f"sweep over {sweep_spec.path!r} produced no valid points")

    # Fix the tracked mode set at the first point (modes inside band),
    # then follow each one through the sweep by eigenvector overlap.
    lo, hi = band
    tracked = [i for i, m in enumerate(solutions[0]) if lo <= m.frequency_hz <= hi]
    first = EigenSolution(tuple(solutions[0][i] for i in tracked),
                          solutions[0].coord_labels)
    labels = label_by_region(first, region_map or {})
    warnings: list[TrackingWarning] = []
    selected = [list(tracked)]
    prev_vecs = np.array([m.phi_vector for m in first])
    for step in range(1, len(solutions)):
        cur = solutions[step]
        cur_vecs = np.array([m.phi_vector for m in cur])
        assignment, warns = _greedy_match(prev_vecs, cur_vecs, labels, step,
                                          ambiguity_ratio=0.9)
        warnings.extend(warns)
        indices = [j if j is not None else 0 for j in assignment]
        selected.append(indices)
        prev_vecs = cur_vecs[indices]

    points = []
    for sol, idx_set, value, extras in zip(solutions, selected, kept_values, extras_list):
        subset = EigenSolution(tuple(sol[i] for i in idx_set), sol.coord_labels)
        rsvs = regional_support(subset, region_map) if region_map else [None] * len(subset)
        records = [
            ModeRecord(labels[i], m.lam, m.frequency_hz, m.decay_rate_hz, m.t1_seconds,
                       rsvs[i])
            for i, m in enumerate(subset)
        ]
        records.sort(key=lambda r: r.frequency_hz)
        points.append(SweepPoint(value, records, extras))
    provenance = {
        "param_path": sweep_spec.path,
        "netlist_sha256": netlist.content_hash(),
        "points_requested": int(sweep_spec.points),
        "band_hz": [lo, hi],
        "log": bool(sweep_spec.log),
    }
    return SweepResult(sweep_spec.path, points, warnings, failures, provenance,
                       tuple((region_map or {}).keys()))


def find_crossing(result: SweepResult, label_a: str, label_b: str):
    """Sweep value minimizing the frequency gap of two tracked modes."""
    best = None
    for p in result.points:
        try:
            fa = p.mode(label_a).frequency_hz
            fb = p.mode(label_b).frequency_hz
        except KeyError:
            continue
        gap = abs(fa - fb)
        if best is None or gap < best[1]:
            best = (p.value, gap)
    if best is None:
        raise KeyError(f"modes {label_a!r}/{label_b!r} never co-exist in the sweep")
    return best


@dataclass
class ConvergenceRow:
    delta: float
    value: float
    label: str
    freq_rel_diff: float
    t1_rel_diff: float
    freq_ref: float
    t1_ref: float


def convergence_study(netlist: Netlist, deltas, sweep_spec: SweepStmt | None = None, *,
                      band=(1e9, 1e10), overlay=None) -> list[ConvergenceRow]:
    """Relative frequency and T1 differences against the finest delta.

    Runs the same sweep at every discretization length, aligns modes
    across discretizations by their region-derived labels (eigenvector
    dimensions differ between deltas, so overlap tracking only operates
    within each sweep), and reports per-mode, per-point differences to
    the smallest delta.
    """
    deltas = sorted(set(float(d) for d in deltas))
    if len(deltas) < 2:
        raise ValueError("convergence study needs at least two deltas")
    reference = deltas[0]
    results = {
        d: run_sweep(netlist.with_delta(d), sweep_spec, band=band, overlay=overlay)
        for d in deltas
    }
    ref = results[reference]
    rows = []
    for d in deltas[1:]:
        res = results[d]
        for p_ref, p in zip(ref.points, res.points):
            if p_ref.value != p.value:
                continue
            for m_ref in p_ref.modes:
                try:
                    m = p.mode(m_ref.label)
                except KeyError:
                    continue
                df = abs(m.frequency_hz - m_ref.frequency_hz) / abs(m_ref.frequency_hz)
                if math.isinf(m_ref.t1_s) and math.isinf(m.t1_s):
                    dt1 = 0.0
                elif math.isinf(m_ref.t1_s) or math.isinf(m.t1_s):
                    dt1 = math.inf
                else:
                    dt1 = abs(m.t1_s - m_ref.t1_s) / abs(m_ref.t1_s)
                rows.append(ConvergenceRow(d, p.value, m_ref.label, df, dt1,
                                           m_ref.frequency_hz, m_ref.t1_s))
    return rows
