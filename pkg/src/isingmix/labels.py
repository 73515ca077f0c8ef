"""Samplers for Ising label vectors and label posteriors.

Three sampling routes:

* exact Curie-Weiss sampling via the total-spin decomposition (the pmf
  depends on the configuration only through the number of + spins, so the
  level is drawn from log-domain weights and the + sites are placed
  uniformly, giving an exchangeable exact sample);
* Glauber dynamics (single-site heat bath) for a general coupling matrix;
* exact posterior sampling for Curie-Weiss couplings through the scalar
  auxiliary field that renders the sites conditionally independent: the
  pair (y, w) with density proportional to
  exp(-n*beta*y^2/2) * prod_i exp((beta*y + c_i) w_i)
  has w-marginal equal to the posterior, so y is drawn from a dense grid
  by inverse CDF and each w_i is an independent Rademacher with mean
  tanh(beta*y + c_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .coupling import CouplingMatrix
from .gmm import ThetaParam
from .numutil import logcosh_offsets_mean

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENUM_MAX_SITES = 20
AUX_GRID_POINTS = 20001
_GLAUBER_CHUNK = 4_000_000


class SamplerError(ValueError):
    """Invalid sampler input (negative beta, oversized enumeration, ...)."""


@dataclass(frozen=True)
class LabelVector:
    """Vector of +-1 labels with its cached mean (the magnetization)."""

    values: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("labels must form a nonempty vector")
        if not np.all(np.abs(v) == 1):
            raise ValueError("labels must be +-1")
        v = v.astype(np.int8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mean", float(v.mean(dtype=float)))

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RfimSpec:
    """Posterior sampling problem: inverse temperature, mean parameter, data.

    The per-site external fields are c_i = theta' x_i.
    """

    beta: float
    theta: ThetaParam
    x: np.ndarray

    def __post_init__(self):
        if self.beta < 0:
            raise SamplerError("beta must be nonnegative")
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.theta.d:
            raise ValueError("data dimension must match the parameter dimension")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def fields(self) -> np.ndarray:
        return self.x @ self.theta.vec


# ---------------------------------------------------------------------------
# Curie-Weiss exact sampler


def _cw_level_logweights(n: int, beta: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    s = 2.0 * k - n
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + beta * s * s / (2.0 * n)


def sample_cw(n: int, beta: float, rng: np.random.Generator) -> LabelVector:
    """Exact Curie-Weiss draw: total-spin level, then uniform placement."""
    return LabelVector(values=sample_cw_batch(n, beta, 1, rng)[0])


def sample_cw_batch(n: int, beta: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of exact Curie-Weiss draws, returned as a (size, n) +-1 array."""
    if n < 1:
        raise SamplerError("n must be positive")
    if beta < 0:
        raise SamplerError("beta must be nonnegative")
    lw = _cw_level_logweights(n, beta)
    probs = np.exp(lw - logsumexp(lw))
    probs /= probs.sum()
    ks = rng.choice(n + 1, size=size, p=probs)
    out = np.empty((size, n), dtype=np.int8)
    # rank trick: the k_b smallest uniforms in each row become the + sites
    chunk = max(1, int(2e7) // max(n, 1))
    for lo in range(0, size, chunk):
        hi = min(size, lo + chunk)
        u = rng.random((hi - lo, n))
        order = np.argsort(u, axis=1)
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.broadcast_to(np.arange(n), (hi - lo, n)), axis=1)
        out[lo:hi] = np.where(ranks < ks[lo:hi, None], 1, -1).astype(np.int8)
    return out


# ---------------------------------------------------------------------------
# Glauber dynamics


def default_burn_in_sweeps(n: int) -> int:
    return max(200, int(np.ceil(20 * np.log2(max(n, 2)))))


def sample_glauber(
    coupling: CouplingMatrix,
    beta: float,
    sweeps: int,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
) -> LabelVector:
    """Final state after sweeps*n random single-site heat-bath updates."""
    if sweeps < 1:
        raise SamplerError("sweeps must be >= 1")
    if beta < 0:
        raise SamplerError("beta must be nonnegative")
    n = coupling.n
    z = _glauber_init(n, rng, init)
    steps = sweeps * n
    out = np.empty((0, n), dtype=np.int8)
    _run_glauber(coupling.entries, beta, z, rng, steps, np.empty(0, dtype=np.int64), out)
    return LabelVector(values=z)


def glauber_samples(
    coupling: CouplingMatrix,
    beta: float,
    n_samples: int,
    rng: np.random.Generator,
    burn_in_sweeps: int | None = None,
    thin_sweeps: int = 5,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Thinned samples from one Glauber chain, as a (n_samples, n) +-1 array."""
    if beta < 0:
        raise SamplerError("beta must be nonnegative")
    n = coupling.n
    if burn_in_sweeps is None:
        burn_in_sweeps = default_burn_in_sweeps(n)
    z = _glauber_init(n, rng, init)
    rec = thin_sweeps * n
    first = burn_in_sweeps * n
    total = first + 1 + (n_samples - 1) * rec
    record_at = first + rec * np.arange(n_samples, dtype=np.int64)
    out = np.empty((n_samples, n), dtype=np.int8)
    _run_glauber(coupling.entries, beta, z, rng, total, record_at, out)
    return out


def _glauber_init(n: int, rng: np.random.Generator, init) -> np.ndarray:
    if init is not None:
        z = np.asarray(init)
        if z.shape != (n,) or not np.all(np.abs(z) == 1):
            raise SamplerError("init must be a +-1 vector of length n")
        return z.astype(np.int8)
    return (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)


def _run_glauber(a, beta, z, rng, total_steps, record_at, out):
    """Drive the chain in chunks of precomputed randomness."""
    h = a @ z.astype(float)
    out_pos = 0
    done = 0
    while done < total_steps:
        t = min(_GLAUBER_CHUNK, total_steps - done)
        sites = rng.integers(0, a.shape[0], size=t).astype(np.int64)
        us = rng.random(t)
        local = record_at[(record_at >= done) & (record_at < done + t)] - done
        out_pos = _glauber_chunk(a, beta, z, h, sites, us, local.astype(np.int64), out, out_pos)
        done += t
    return out_pos


def _glauber_chunk_py(a, beta, z, h, sites, us, record_at, out, out_pos):
    r = 0
    n = z.shape[0]
    for t in range(sites.shape[0]):
        i = sites[t]
        p_plus = 0.5 * (1.0 + np.tanh(beta * h[i]))
        new = 1 if us[t] < p_plus else -1
        if new != z[i]:
            dz = float(new - z[i])
            z[i] = new
            for j in range(n):
                h[j] += a[j, i] * dz
        while r < record_at.shape[0] and record_at[r] == t:
            out[out_pos] = z
            out_pos += 1
            r += 1
    return out_pos


if numba is not None:
    _glauber_chunk = numba.njit(cache=True)(_glauber_chunk_py)
else:  # pragma: no cover
    _glauber_chunk = _glauber_chunk_py


# ---------------------------------------------------------------------------
# Exact enumeration (n <= 20)


def all_configs(n: int) -> np.ndarray:
    """All 2^n label configurations as a (2^n, n) +-1 array (bit j = site j)."""
    if n > ENUM_MAX_SITES:
        raise SamplerError(f"enumeration supports n <= {ENUM_MAX_SITES}, got {n}")
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def config_codes(values: np.ndarray) -> np.ndarray:
    """Integer codes of +-1 configurations, matching all_configs ordering."""
    v = np.asarray(values)
    if v.ndim == 1:
        v = v[None, :]
    bits = (v > 0).astype(np.int64)
    return bits @ (1 << np.arange(v.shape[1], dtype=np.int64))


def enumerate_ising_pmf(
    coupling: CouplingMatrix,
    beta: float,
    fields: np.ndarray | None = None,
) -> np.ndarray:
    """Exact pmf over {-1,1}^n, proportional to exp(beta/2 z'Az + fields'z).

    Returns a length-2^n probability vector indexed by config_codes.
    """
    if beta < 0:
        raise SamplerError("beta must be nonnegative")
    n = coupling.n
    z = all_configs(n).astype(float)
    logw = 0.5 * beta * np.einsum("ci,ci->c", z @ coupling.entries, z)
    if fields is not None:
        logw = logw + z @ np.asarray(fields, dtype=float)
    p = np.exp(logw - logsumexp(logw))
    return p / p.sum()


def enumerate_rfim_cw_pmf(spec: RfimSpec) -> np.ndarray:
    """Exact posterior pmf under Curie-Weiss coupling (n <= 20)."""
    n = spec.n
    z = all_configs(n).astype(float)
    zbar = z.mean(axis=1)
    logw = 0.5 * n * spec.beta * zbar**2 + z @ spec.fields
    p = np.exp(logw - logsumexp(logw))
    return p / p.sum()


# ---------------------------------------------------------------------------
# Posterior sampling under Curie-Weiss coupling


def aux_field_grid(spec: RfimSpec) -> tuple[np.ndarray, np.ndarray]:
    """Grid and normalized log-weights of the auxiliary-field distribution.

    The weights discretize the density proportional to
    exp(-n * (beta y^2 / 2 - mean_i log cosh(beta y + c_i))) on
    20001 uniform points spanning [-1 - 5/sqrt(n), 1 + 5/sqrt(n)].
    """
    if spec.beta <= 0:
        raise SamplerError("the auxiliary field exists only for beta > 0")
    n = spec.n
    half = 1.0 + 5.0 / np.sqrt(n)
    grid = np.linspace(-half, half, AUX_GRID_POINTS)
    logw = _aux_field_logdensity(grid, spec.beta, spec.fields)
    norm = logsumexp(logw)
    if not np.isfinite(norm):
        raise FloatingPointError("auxiliary-field grid mass underflowed")
    return grid, logw - norm


def _aux_field_logdensity(y: np.ndarray, beta: float, c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    return n * logcosh_offsets_mean(y, beta, c) - 0.5 * n * beta * y**2


def sample_rfim_cw(spec: RfimSpec, rng: np.random.Generator) -> LabelVector:
    """Exact (up to grid resolution) posterior draw under Curie-Weiss coupling."""
    w, _ = sample_rfim_cw_batch(spec, 1, rng)
    return LabelVector(values=w[0])


def sample_rfim_cw_batch(
    spec: RfimSpec, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Batch posterior draws; returns (labels (size, n), auxiliary fields (size,)).

    For beta = 0 the sites are already independent with means tanh(c_i) and
    the auxiliary field is reported as zero.
    """
    c = spec.fields
    n = spec.n
    if spec.beta == 0.0:
        ys = np.zeros(size)
        means = np.tanh(c)
        w = np.where(rng.random((size, n)) < (1.0 + means[None, :]) / 2.0, 1, -1)
        return w.astype(np.int8), ys
    grid, logw = aux_field_grid(spec)
    cdf = np.cumsum(np.exp(logw))
    cdf /= cdf[-1]
    ys = grid[np.searchsorted(cdf, rng.random(size), side="left")]
    out = np.empty((size, n), dtype=np.int8)
    chunk = max(1, int(2e7) // max(n, 1))
    for lo in range(0, size, chunk):
        hi = min(size, lo + chunk)
        means = np.tanh(spec.beta * ys[lo:hi, None] + c[None, :])
        out[lo:hi] = np.where(rng.random((hi - lo, n)) < (1.0 + means) / 2.0, 1, -1).astype(np.int8)
    return out, ys


def rfim_posterior_means(spec: RfimSpec) -> np.ndarray:
    """Posterior site means E W_i by quadrature over the auxiliary field."""
    c = spec.fields
    if spec.beta == 0.0:
        return np.tanh(c)
    grid, logw = aux_field_grid(spec)
    keep = logw > logw.max() - 60.0
    w = np.exp(logw[keep])
    w /= w.sum()
    return np.tanh(spec.beta * grid[keep][:, None] + c[None, :]).T @ w


def save_labels_csv(z: LabelVector, path) -> None:
    with open(path, "w") as fh:
        fh.write("z\n")
        for v in z.values:
            fh.write(f"{int(v)}\n")


def load_labels_csv(path) -> LabelVector:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "z":
            raise ValueError(f"{path}: expected header 'z', got {header!r}")
        vals = [int(line.strip()) for line in fh if line.strip()]
    return LabelVector(values=np.asarray(vals, dtype=np.int8))
