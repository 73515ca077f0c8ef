"""Coupling matrices for Ising label models and their dependence diagnostics.

A coupling matrix is a symmetric nonnegative n x n matrix with zero
diagonal. The diagnostics collected here (alpha_n, row sums, top two
eigenvalues) feed the finite-n proxies for the mean-field,
approximate-regularity and well-connectedness conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EIG_TOL = 1e-10
_EIG_MAX_ITER = 100_000


class CouplingError(ValueError):
    """Invalid coupling construction (bad size or malformed entries)."""


@dataclass(frozen=True)
class CouplingMatrix:
    """Dense symmetric coupling matrix with cached diagnostics.

    alpha_n is max_i sum_j A(i,j)^2, recomputed exactly from the entries.
    lambda1 >= lambda2 are the two largest (algebraic) eigenvalues.
    """

    n: int
    entries: np.ndarray
    alpha_n: float = field(init=False)
    row_sums: np.ndarray = field(init=False)
    lambda1: float = field(init=False)
    lambda2: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.shape != (self.n, self.n):
            raise CouplingError(f"entries must be {self.n}x{self.n}, got {a.shape}")
        if np.any(np.diag(a) != 0.0):
            raise CouplingError("diagonal entries must be exactly zero")
        if not np.array_equal(a, a.T):
            raise CouplingError("entries must be symmetric")
        if np.any(a < 0.0):
            raise CouplingError("entries must be nonnegative")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "alpha_n", float(np.max(np.sum(a * a, axis=1))))
        rs = np.sum(a, axis=1)
        rs.setflags(write=False)
        object.__setattr__(self, "row_sums", rs)
        lam1, lam2 = _top_two_eigenvalues(a)
        object.__setattr__(self, "lambda1", lam1)
        object.__setattr__(self, "lambda2", lam2)


@dataclass(frozen=True)
class ConditionReport:
    """Finite-n proxies for the asymptotic coupling conditions.

    The raw statistics are always reported; the boolean flags apply the
    (configurable) thresholds documented in check_conditions.
    """

    mean_field_stat: float        # alpha_n * sqrt(n log n)
    rowsum_dev_sq: float          # sum_i (R_i - 1)^2 / sqrt(n)
    rowsum_dev: float             # |sum_i (R_i - 1)| / sqrt(n)
    eig_ratio: float              # lambda2 / lambda1 (nan when lambda1 <= 0)
    mean_field: bool
    approx_regular: bool
    well_connected: bool


def make_complete(n: int) -> CouplingMatrix:
    """Scaled complete graph: A(i,j) = 1/n off the diagonal."""
    if n < 2:
        raise CouplingError(f"complete coupling needs n >= 2, got {n}")
    a = np.full((n, n), 1.0 / n)
    np.fill_diagonal(a, 0.0)
    return CouplingMatrix(n=n, entries=a)


def make_matching(n: int) -> CouplingMatrix:
    """Perfect matching: unit edges (0,1), (2,3), ...; requires n even."""
    if n < 2 or n % 2 != 0:
        raise CouplingError(f"matching coupling needs even n >= 2, got {n}")
    a = np.zeros((n, n))
    idx = np.arange(0, n, 2)
    a[idx, idx + 1] = 1.0
    a[idx + 1, idx] = 1.0
    return CouplingMatrix(n=n, entries=a)


def normalize_rowsum(coupling: CouplingMatrix) -> CouplingMatrix:
    """Rescale entries so the maximum row sum is 1. Idempotent."""
    max_row = float(np.max(coupling.row_sums))
    if max_row <= 0.0:
        raise CouplingError("cannot normalize a zero coupling matrix")
    return CouplingMatrix(n=coupling.n, entries=coupling.entries / max_row)


def check_conditions(
    coupling: CouplingMatrix,
    *,
    mean_field_cutoff: float = 0.5,
    regular_cutoff: float = 0.1,
    eig_ratio_cutoff: float = 0.9,
) -> ConditionReport:
    """Report the finite-n dependence diagnostics and threshold flags.

    mean_field:     alpha_n * sqrt(n log n) < mean_field_cutoff
    approx_regular: |sum(R_i - 1)|/sqrt(n) and sum(R_i - 1)^2/sqrt(n)
                    both < regular_cutoff
    well_connected: lambda1 > 0 and lambda2/lambda1 < eig_ratio_cutoff
    """
    n = coupling.n
    mf_stat = coupling.alpha_n * math.sqrt(n * math.log(n)) if n > 1 else 0.0
    dev = coupling.row_sums - 1.0
    dev_sq = float(np.sum(dev * dev)) / math.sqrt(n)
    dev_lin = abs(float(np.sum(dev))) / math.sqrt(n)
    if coupling.lambda1 > 0.0:
        ratio = coupling.lambda2 / coupling.lambda1
        well = ratio < eig_ratio_cutoff
    else:
        ratio = float("nan")
        well = False
    return ConditionReport(
        mean_field_stat=mf_stat,
        rowsum_dev_sq=dev_sq,
        rowsum_dev=dev_lin,
        eig_ratio=ratio,
        mean_field=mf_stat < mean_field_cutoff,
        approx_regular=dev_lin < regular_cutoff and dev_sq < regular_cutoff,
        well_connected=well,
    )


def save_coupling_csv(coupling: CouplingMatrix, path) -> None:
    """Write (i, j, value) triples (upper triangle, 0-based) with an n header."""
    i_idx, j_idx = np.nonzero(np.triu(coupling.entries))
    with open(path, "w") as fh:
        fh.write(f"# coupling n={coupling.n}\n")
        fh.write("i,j,value\n")
        for i, j in zip(i_idx, j_idx):
            fh.write(f"{i},{j},{coupling.entries[i, j]:.17g}\n")


def load_coupling_csv(path) -> CouplingMatrix:
    """Read a coupling matrix written by save_coupling_csv."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# coupling n="):
            raise CouplingError(f"{path}: missing '# coupling n=<n>' header")
        n = int(header.split("=", 1)[1])
        a = np.zeros((n, n))
        fh.readline()  # column header
        for line in fh:
            line = line.strip()
            if not line:
                continue
            si, sj, sv = line.split(",")
            i, j, v = int(si), int(sj), float(sv)
            a[i, j] = v
            a[j, i] = v
    return CouplingMatrix(n=n, entries=a)


def _top_two_eigenvalues(a: np.ndarray) -> tuple[float, float]:
    """Two largest algebraic eigenvalues by power iteration with deflation.

    For a symmetric nonnegative matrix the spectral radius equals lambda1,
    so plain power iteration finds it. lambda2 comes from iterating on
    A - 2*lambda1*v1 v1' + lambda1*I, whose spectrum is {0} on v1 and
    {lambda_i + lambda1 >= 0} elsewhere, hence its top eigenvalue is
    lambda1 + lambda2.
    """
    n = a.shape[0]
    if n == 1 or not np.any(a):
        return 0.0, 0.0
    # Gershgorin shift keeps the iterated spectrum nonnegative; otherwise a
    # magnitude tie lambda_min = -lambda1 (e.g. the matching graph) stalls
    # power iteration between the two eigenspaces.
    shift = float(np.max(np.sum(a, axis=1)))
    lam1_shifted, v1 = _power_iteration(lambda v: a @ v + shift * v, n)
    lam1 = lam1_shifted - shift
    if n == 2:
        # trace is zero, so the remaining eigenvalue is -lam1
        return lam1, -lam1

    def deflated(v):
        # spectrum: 0 on v1, lambda_i + lambda1 >= 0 elsewhere
        return a @ v - (2.0 * lam1) * (v1 @ v) * v1 + lam1 * v

    top, _ = _power_iteration(deflated, n, stream=1, orth=v1)
    return lam1, top - lam1


def _power_iteration(matvec, n: int, stream: int = 0, orth=None) -> tuple[float, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(key=np.array([0, stream], dtype=np.uint64)))
    v = np.ones(n) + 1e-3 * rng.standard_normal(n)
    if orth is not None:
        v -= (orth @ v) * orth
    norm = np.linalg.norm(v)
    if norm == 0.0:  # pragma: no cover - perturbed start is never exactly orth
        return 0.0, v
    v /= norm
    lam = 0.0
    for _ in range(_EIG_MAX_ITER):
        w = matvec(v)
        if orth is not None:
            w -= (orth @ w) * orth
        lam = float(v @ w)
        # symmetric operator: |rayleigh - lambda| <= residual^2 / gap
        if np.linalg.norm(w - lam * v) <= _EIG_TOL * max(1.0, abs(lam)):
            return lam, v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        v = w / norm
    return lam, v
