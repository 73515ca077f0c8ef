"""Two-component symmetric Gaussian mixture: parameters and data generation.

Observations are X_i = theta0 * z_i + eps_i with hidden labels z_i in
{-1,+1} and standard d-variate Gaussian noise. The sign ambiguity
theta <-> -theta is fixed by restricting to the half-space whose first
nonzero coordinate is positive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

THETA1 = "theta1"
THETA2 = "theta2"
BOUNDARY_ZERO = "zero"


class ParameterError(ValueError):
    """Invalid mean parameter (zero vector)."""


def halfspace_side(v) -> str:
    """Classify a vector by the sign of its first nonzero coordinate.

    Returns THETA1 / THETA2 / BOUNDARY_ZERO. The sign rule is exact; no
    tolerance is applied.
    """
    v = np.asarray(v, dtype=float).ravel()
    for x in v:
        if x > 0.0:
            return THETA1
        if x < 0.0:
            return THETA2
    return BOUNDARY_ZERO


@dataclass(frozen=True)
class ThetaParam:
    """Canonical mean vector: nonzero, first nonzero coordinate positive."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=float).ravel().copy()
        side = halfspace_side(v)
        if side == BOUNDARY_ZERO:
            raise ParameterError("mean parameter must be nonzero")
        if side == THETA2:
            raise ParameterError("mean parameter must lie in the canonical half-space")
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)

    @property
    def d(self) -> int:
        return self.vec.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def canonicalize_theta(v) -> ThetaParam:
    """Map v to the canonical half-space (v or -v, whichever qualifies)."""
    v = np.asarray(v, dtype=float).ravel()
    side = halfspace_side(v)
    if side == BOUNDARY_ZERO:
        raise ParameterError("cannot canonicalize the zero vector")
    return ThetaParam(vec=v if side == THETA1 else -v)


@dataclass(frozen=True)
class Dataset:
    """Observation matrix (n x d) with cached column mean.

    The ground-truth labels, when present, are carried only for simulation
    bookkeeping; all inference operations take the raw x array and never
    see them.
    """

    x: np.ndarray
    z: object = None  # optional labels.LabelVector
    xbar: np.ndarray = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"x must be a nonempty n x d matrix, got shape {x.shape}")
        if self.z is not None and len(self.z.values) != x.shape[0]:
            raise ValueError("label vector length must match the number of rows")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        xbar = x.mean(axis=0)
        xbar.setflags(write=False)
        object.__setattr__(self, "xbar", xbar)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def generate(theta0: ThetaParam, z, rng: np.random.Generator) -> Dataset:
    """Draw X_i = theta0 * z_i + eps_i, eps_i ~ N(0, I_d). Keeps z as truth."""
    zvals = np.asarray(z.values, dtype=float)
    n = zvals.shape[0]
    d = theta0.d
    x = zvals[:, None] * theta0.vec[None, :] + rng.standard_normal((n, d))
    return Dataset(x=x, z=z)


def xbar_sign(x) -> float:
    """+1.0 for the canonical half-space, -1.0 otherwise.

    The measure-zero exact-zero mean is treated as canonical with a logged
    warning; it can occur in contrived tests but not under the model.
    """
    side = halfspace_side(np.asarray(x, dtype=float).mean(axis=0))
    if side == BOUNDARY_ZERO:
        logger.warning("column mean is exactly zero; treating as canonical side")
        return 1.0
    return 1.0 if side == THETA1 else -1.0


def save_dataset_csv(ds: Dataset, path) -> None:
    """Write columns x1..xd (and z when present) at 17 significant digits."""
    cols = [f"x{j + 1}" for j in range(ds.d)]
    with open(path, "w") as fh:
        if ds.z is not None:
            fh.write(",".join(cols + ["z"]) + "\n")
            zv = np.asarray(ds.z.values)
            for i in range(ds.n):
                row = ",".join(f"{v:.17g}" for v in ds.x[i])
                fh.write(f"{row},{int(zv[i])}\n")
        else:
            fh.write(",".join(cols) + "\n")
            for i in range(ds.n):
                fh.write(",".join(f"{v:.17g}" for v in ds.x[i]) + "\n")


def load_dataset_csv(path) -> Dataset:
    """Read a dataset written by save_dataset_csv."""
    from .labels import LabelVector  # local import to avoid a cycle

    with open(path) as fh:
        header = fh.readline().strip().split(",")
        has_z = header and header[-1] == "z"
        rows = []
        zs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if has_z:
                rows.append([float(p) for p in parts[:-1]])
                zs.append(int(parts[-1]))
            else:
                rows.append([float(p) for p in parts])
    x = np.asarray(rows, dtype=float)
    z = LabelVector(values=np.asarray(zs, dtype=np.int8)) if has_z else None
    return Dataset(x=x, z=z)
