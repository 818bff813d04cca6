"""Operations for building PSO models from fragments.

Three operations: an invertible coordinate transform, the block-diagonal
union of independent models, and constraint satisfaction which restricts
the dynamics to the null space of a set of linear flux constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import COND_LIMIT, PSOModel, PsoError

# Rank threshold factor for constraint decompositions; multiplied by the
# largest singular value.  Leaves headroom for fF/nH-scale circuits.
RANK_TOL_FACTOR = 1e-11


class NotInvertibleError(PsoError):
    """Transform matrix is singular or too ill-conditioned."""


class DuplicateLabelError(PsoError):
    """Coordinate or port labels collide in a union."""


class OverConstrainedError(PsoError):
    """The constraint null space is empty."""


class RankAmbiguityError(PsoError):
    """Singular values straddle the rank threshold within a factor 10."""


@dataclass(frozen=True)
class ConstraintSet:
    """Linear flux constraints y_matrix^T Phi = 0.

    Columns of y_matrix are constraint directions.  Dependent columns are
    pruned internally before the reduction, so the effective constraint
    matrix always has full column rank.
    """

    y_matrix: np.ndarray
    rank_tol: float | None = None  # absolute; default max singular value * 1e-11

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y_matrix, dtype=float))
        object.__setattr__(self, "y_matrix", y)


@dataclass(frozen=True)
class ReductionReport:
    """Outcome of a constraint reduction.

    null_basis has orthonormal columns spanning the null space of Y^T;
    drive_constraint is Y^T P, the condition the drives must satisfy for
    the constrained dynamics to be consistent (reported, not enforced).
    """

    null_basis: np.ndarray
    drive_constraint: np.ndarray
    effective_constraints: int


def transform(model: PSOModel, u: np.ndarray, cond_limit=COND_LIMIT) -> PSOModel:
    """Apply the invertible coordinate change U.

    Returns (U K U^T, U G U^T, U C U^T, U P).  Eigenvalues and the
    transfer function are preserved; eigenvectors map as (U^T)^-1 v.
    """
    u = np.asarray(u, dtype=float)
    n = model.n_coords
    if u.shape != (n, n):
        raise NotInvertibleError(f"U must be {n}x{n}, got {u.shape}")
    cond = np.linalg.cond(u) if n else 1.0
    if not np.isfinite(cond) or cond > cond_limit:
        raise NotInvertibleError(f"U condition number {cond:.3e} exceeds {cond_limit:.1e}")
    return PSOModel(
        u @ model.k @ u.T,
        u @ model.g @ u.T,
        u @ model.c @ u.T,
        u @ model.p,
        model.coord_labels,
        model.port_labels,
    )


def union(models) -> PSOModel:
    """Block-diagonal union of independent PSO models.

    The eigenvalue multiset of the result is the disjoint union of the
    parts.  Labels are concatenated and must not collide.
    """
    models = list(models)
    if not models:
        return PSOModel(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))
    coord_labels, port_labels = [], []
    for m in models:
        coord_labels.extend(m.coord_labels)
        port_labels.extend(m.port_labels)
    for name, labels in (("coordinate", coord_labels), ("port", port_labels)):
        seen = set()
        for lab in labels:
            if lab in seen:
                raise DuplicateLabelError(f"duplicate {name} label {lab!r} in union")
            seen.add(lab)
    k = scipy.linalg.block_diag(*[m.k for m in models])
    g = scipy.linalg.block_diag(*[m.g for m in models])
    c = scipy.linalg.block_diag(*[m.c for m in models])
    p = scipy.linalg.block_diag(*[m.p for m in models])
    return PSOModel(k, g, c, p, tuple(coord_labels), tuple(port_labels))


def _prune_columns(y: np.ndarray, rank_tol: float | None):
    """Orthonormal basis for the column space of y, with rank guard."""
    if y.size == 0 or np.max(np.abs(y)) == 0.0:
        return np.zeros((y.shape[0], 0))
    u, svals, _ = np.linalg.svd(y, full_matrices=False)
    tol = rank_tol if rank_tol is not None else svals[0] * RANK_TOL_FACTOR
    _check_rank_gap(svals, tol)
    rank = int(np.sum(svals > tol))
    return u[:, :rank]


def _check_rank_gap(svals, tol):
    ambiguous = [s for s in svals if tol / 10.0 < s <= tol * 10.0]
    if ambiguous:
        raise RankAmbiguityError(
            f"singular values {ambiguous} straddle rank tolerance {tol:.3e} within a factor 10"
        )


def constrain(model: PSOModel, constraints: ConstraintSet):
    """Reduce the model onto the null space of the constraints.

    Computes an orthonormal null basis Z of Y^T by SVD, returns the
    congruence-reduced model (Z^T K Z, Z^T G Z, Z^T C Z, Z^T P) and a
    ReductionReport carrying the basis and the drive constraint Y^T P.
    Congruence preserves symmetry and positive semidefiniteness, so the
    result is again a valid PSO model.
    """
    n = model.n_coords
    y = constraints.y_matrix
    if y.shape[0] != n:
        raise ValueError(f"constraint matrix must have {n} rows, got {y.shape}")
    y_eff = _prune_columns(y, constraints.rank_tol)
    n_con = y_eff.shape[1]
    if n_con == 0:
        z = np.eye(n)
    else:
        # Null space of y_eff^T: right singular vectors below tolerance.
        u, svals, vt = np.linalg.svd(y_eff.T)
        tol = constraints.rank_tol
        if tol is None:
            tol = (svals[0] if svals.size else 0.0) * RANK_TOL_FACTOR
        _check_rank_gap(svals, tol)
        rank = int(np.sum(svals > tol))
        z = vt[rank:, :].T
    if z.shape[1] == 0:
        raise OverConstrainedError("constraints leave no free coordinates")
    reduced = PSOModel(
        z.T @ model.k @ z,
        z.T @ model.g @ z,
        z.T @ model.c @ z,
        z.T @ model.p,
        tuple(f"q{i}" for i in range(z.shape[1])),
        model.port_labels,
    )
    report = ReductionReport(z, y_eff.T @ model.p, n_con)
    return reduced, report
