"""Closed-form limiting quantities for the dependent-label mixture model.

Everything here is an expectation of a smooth function of the scalar
projection S = theta0'X under the tilted two-component mixture
    (1+m)/2 N(theta0, I) + (1-m)/2 N(-theta0, I),
where m = m(beta) is the positive magnetization root (0 for beta <= 1).
Writing X = (theta0/||theta0||^2) S + orthogonal noise reduces every
required moment to one-dimensional Gauss-Hermite quadrature: under
component z the projection is N(z ||theta0||^2, ||theta0||^2) and the
orthogonal part is a centered Gaussian independent of S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .gmm import ThetaParam

GH_NODES = 301

_MIXTURE_KINDS = ("sech2", "x_sech2", "xx_sech2", "tanh_z", "x_tanh_z", "var_blocks")


def solve_m(beta: float) -> float:
    """Positive root of m = tanh(beta m); zero when beta <= 1.

    Bisection on [1e-12, 1] to absolute tolerance 1e-14.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta <= 1.0:
        return 0.0
    lo, hi = 1e-12, 1.0
    # tanh(beta m) - m is positive at lo (slope beta - 1 > 0) and negative at 1
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if math.tanh(beta * mid) - mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14:
            break
    return 0.5 * (lo + hi)


@lru_cache(maxsize=8)
def _gh(num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_hermite(num_nodes)
    return nodes, weights / math.sqrt(math.pi)


def _component_moments(t: float, offset: float, z: int, num_nodes: int) -> dict:
    """Gauss-Hermite moments of a = offset + S with S ~ N(z t^2, t^2).

    Keys: sech2 moments against 1, S, S^2 and tanh moments against 1, S.
    """
    nodes, weights = _gh(num_nodes)
    s = z * t * t + math.sqrt(2.0) * t * nodes
    a = offset + s
    # sech(a) = 2 e^{-|a|} / (1 + e^{-2|a|}) avoids cosh overflow
    ea = np.exp(-np.abs(a))
    sech2 = (2.0 * ea / (1.0 + ea * ea)) ** 2
    tanh = np.tanh(a)
    return {
        "sech2_0": float(weights @ sech2),
        "sech2_1": float(weights @ (s * sech2)),
        "sech2_2": float(weights @ (s * s * sech2)),
        "tanh_0": float(weights @ tanh),
        "tanh_1": float(weights @ (s * tanh)),
    }


@dataclass(frozen=True)
class _Moments:
    """All scalar moments needed by the report, plus geometry helpers."""

    t: float
    e: np.ndarray           # unit vector theta0 / ||theta0||
    p: float                # (1 + m) / 2
    plus: dict
    minus: dict

    def mix(self, key: str) -> float:
        return self.p * self.plus[key] + (1.0 - self.p) * self.minus[key]

    @property
    def alpha0(self) -> float:
        return self.mix("sech2_0")

    @property
    def alpha1(self) -> np.ndarray:
        return self.e * (self.mix("sech2_1") / self.t)

    @property
    def alpha2(self) -> np.ndarray:
        ee = np.outer(self.e, self.e)
        d = self.e.shape[0]
        return ee * (self.mix("sech2_2") / self.t**2) + (np.eye(d) - ee) * self.alpha0

    @property
    def mu(self) -> tuple[float, float]:
        return self.plus["tanh_0"], self.minus["tanh_0"]

    @property
    def nu(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.e * (self.plus["tanh_1"] / self.t),
                self.e * (self.minus["tanh_1"] / self.t))


def _moments(theta0, beta: float, num_nodes: int) -> _Moments:
    v = theta0.vec if isinstance(theta0, ThetaParam) else np.asarray(theta0, dtype=float).ravel()
    t = float(np.linalg.norm(v))
    if t == 0.0:
        raise ValueError("theta0 must be nonzero")
    m = solve_m(beta)
    offset = beta * m
    return _Moments(
        t=t,
        e=v / t,
        p=(1.0 + m) / 2.0,
        plus=_component_moments(t, offset, +1, num_nodes),
        minus=_component_moments(t, offset, -1, num_nodes),
    )


def c_beta(beta: float) -> float:
    """Limiting variance (1 - m^2) / (1 - beta (1 - m^2)) of the scaled
    label mean; diverges at the phase transition beta = 1."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 1.0:
        return math.inf
    m = solve_m(beta)
    return (1.0 - m * m) / (1.0 - beta * (1.0 - m * m))


def mixture_expect(theta0, beta: float, kind: str, num_nodes: int = GH_NODES):
    """Tilted-mixture expectations used by the information report.

    kind: 'sech2' (scalar), 'x_sech2' (vector), 'xx_sech2' (matrix),
    'tanh_z' / 'x_tanh_z' (per-component pairs), 'var_blocks' (dict of the
    score-variance blocks; undefined at beta = 1).
    """
    if kind not in _MIXTURE_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {_MIXTURE_KINDS}")
    mom = _moments(theta0, beta, num_nodes)
    if kind == "sech2":
        return mom.alpha0
    if kind == "x_sech2":
        return mom.alpha1
    if kind == "xx_sech2":
        return mom.alpha2
    if kind == "tanh_z":
        return mom.mu
    if kind == "x_tanh_z":
        return mom.nu
    return _var_blocks(theta0, beta, mom)


def _var_blocks(theta0, beta: float, mom: _Moments) -> dict:
    if beta == 1.0:
        raise ValueError("score-variance blocks diverge at beta = 1")
    v = theta0.vec if isinstance(theta0, ThetaParam) else np.asarray(theta0, dtype=float).ravel()
    m = solve_m(beta)
    p = mom.p
    mu1, mu_1 = mom.mu
    nu1, nu_1 = mom.nu
    ctil = c_beta(beta) / 4.0
    d = v.shape[0]
    s11 = beta**2 * (1.0 - mom.alpha0 - (p * mu1**2 + (1 - p) * mu_1**2)
                     + ctil * (mu1 - mu_1) ** 2)
    s12 = beta * (v * m - mom.alpha1 - (p * mu1 * nu1 + (1 - p) * mu_1 * nu_1)
                  + ctil * (mu1 - mu_1) * (nu1 - nu_1))
    s22 = (np.eye(d) + np.outer(v, v) - mom.alpha2
           - (p * np.outer(nu1, nu1) + (1 - p) * np.outer(nu_1, nu_1))
           + ctil * np.outer(nu1 - nu_1, nu1 - nu_1))
    return {"sigma11": s11, "sigma12": s12, "sigma22": s22}


def info_iid(theta0, num_nodes: int = GH_NODES) -> np.ndarray:
    """I_d - E XX' sech^2(theta0'X) under N(theta0, I).

    The integrand is even in X, so the Gaussian and symmetric-mixture
    expectations coincide; eigenvalues lie in (0, 1] for theta0 != 0.
    """
    mom = _moments(theta0, 0.0, num_nodes)
    d = mom.e.shape[0]
    return np.eye(d) - mom.alpha2


@dataclass(frozen=True)
class InfoReport:
    """All limiting-variance objects at a given (theta0, beta).

    Blocks that require the label-mean variance are None at beta = 1,
    where that variance diverges; i_beta remains well defined there.
    """

    theta0: ThetaParam
    beta: float
    m: float
    i0: np.ndarray
    gamma11: float
    gamma12: np.ndarray
    gamma22: np.ndarray
    sigma11: float | None
    sigma12: np.ndarray | None
    sigma22: np.ndarray | None
    delta: np.ndarray
    c_beta: float
    i_beta: np.ndarray
    alpha0: float
    alpha1: np.ndarray
    alpha2: np.ndarray
    mu: tuple[float, float]
    nu: tuple[np.ndarray, np.ndarray]
    amle_var: np.ndarray | None

    def to_json_dict(self) -> dict:
        def mat(a):
            return None if a is None else np.asarray(a, dtype=float).ravel().tolist()

        return {
            "theta0": self.theta0.vec.tolist(),
            "beta": self.beta,
            "m": self.m,
            "d": int(self.theta0.d),
            "i0": mat(self.i0),
            "gamma11": self.gamma11,
            "gamma12": mat(self.gamma12),
            "gamma22": mat(self.gamma22),
            "sigma11": self.sigma11,
            "sigma12": mat(self.sigma12),
            "sigma22": mat(self.sigma22),
            "delta": mat(self.delta),
            "c_beta": self.c_beta if math.isfinite(self.c_beta) else "inf",
            "i_beta": mat(self.i_beta),
            "alpha0": self.alpha0,
            "alpha1": mat(self.alpha1),
            "alpha2": mat(self.alpha2),
            "mu": list(self.mu),
            "nu": [mat(self.nu[0]), mat(self.nu[1])],
            "amle_var": mat(self.amle_var),
        }


def info_report(theta0, beta: float, num_nodes: int = GH_NODES) -> InfoReport:
    """Assemble every limiting-variance object at (theta0, beta)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta0 = theta0 if isinstance(theta0, ThetaParam) else ThetaParam(vec=np.asarray(theta0, float))
    mom = _moments(theta0, beta, num_nodes)
    m = solve_m(beta)
    d = theta0.d

    gamma11 = beta * (1.0 - beta * mom.alpha0)
    gamma12 = -beta * mom.alpha1
    gamma22 = np.eye(d) - mom.alpha2
    i0 = info_iid(theta0, num_nodes)
    cb = c_beta(beta)

    if beta > 1.0:
        delta = gamma12 / gamma11
        i_beta = gamma22 - np.outer(gamma12, gamma12) / gamma11
    else:
        delta = np.zeros(d)
        i_beta = gamma22

    if math.isfinite(cb):
        blocks = _var_blocks(theta0, beta, mom)
        sigma11, sigma12, sigma22 = blocks["sigma11"], blocks["sigma12"], blocks["sigma22"]
        g22_inv = np.linalg.inv(gamma22)
        amle_var = g22_inv @ sigma22 @ g22_inv
    else:
        sigma11 = sigma12 = sigma22 = amle_var = None

    return InfoReport(
        theta0=theta0, beta=beta, m=m, i0=i0,
        gamma11=gamma11, gamma12=gamma12, gamma22=gamma22,
        sigma11=sigma11, sigma12=sigma12, sigma22=sigma22,
        delta=delta, c_beta=cb, i_beta=i_beta,
        alpha0=mom.alpha0, alpha1=mom.alpha1, alpha2=mom.alpha2,
        mu=mom.mu, nu=mom.nu, amle_var=amle_var,
    )


@dataclass(frozen=True)
class IdentityReport:
    """Relative residuals of the limiting-variance identities."""

    theta0: ThetaParam
    beta: float
    regime: str  # "low" (beta > 1, full set) | "high" (reduced set)
    residuals: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def to_json_dict(self) -> dict:
        return {
            "theta0": self.theta0.vec.tolist(),
            "beta": self.beta,
            "regime": self.regime,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def verify_identities(theta0, beta: float, num_nodes: int = GH_NODES) -> IdentityReport:
    """Check the closed-form identities tying the report's blocks together.

    For beta > 1 the full set: the magnetization and parameter fixed
    points, the two moment identities linking the sech^2 moments to the
    per-component tanh moments, the reconstruction of the efficient
    information from the score-variance blocks, and the sandwich inverse.
    For beta <= 1 the reduced set: fixed points plus i_beta == i0.
    """
    rep = info_report(theta0, beta, num_nodes)
    theta0 = rep.theta0
    v = theta0.vec
    p = (1.0 + rep.m) / 2.0
    mu1, mu_1 = rep.mu
    nu1, nu_1 = rep.nu

    res = {}
    res["m_fixed_point"] = abs(rep.m - (p * mu1 + (1 - p) * mu_1)) / max(abs(rep.m), 1.0)
    res["theta_fixed_point"] = float(
        np.linalg.norm(v - (p * nu1 + (1 - p) * nu_1)) / np.linalg.norm(v)
    )

    if beta > 1.0:
        m2 = 1.0 - rep.m**2
        res["alpha0_identity"] = abs(rep.alpha0 - m2 * (1.0 - (mu1 - mu_1) / 2.0)) / abs(rep.alpha0)
        res["alpha1_identity"] = float(
            np.linalg.norm(rep.alpha1 + 0.5 * m2 * (nu1 - nu_1))
            / max(np.linalg.norm(rep.alpha1), 1e-8)
        )
        recon = (np.outer(rep.delta, rep.delta) * rep.sigma11
                 - np.outer(rep.sigma12, rep.delta) - np.outer(rep.delta, rep.sigma12)
                 + rep.sigma22)
        res["info_reconstruction"] = float(
            np.linalg.norm(rep.i_beta - recon) / np.linalg.norm(rep.i_beta)
        )
        d = theta0.d
        gamma = np.zeros((d + 1, d + 1))
        gamma[0, 0] = rep.gamma11
        gamma[0, 1:] = rep.gamma12
        gamma[1:, 0] = rep.gamma12
        gamma[1:, 1:] = rep.gamma22
        sigma = np.zeros((d + 1, d + 1))
        sigma[0, 0] = rep.sigma11
        sigma[0, 1:] = rep.sigma12
        sigma[1:, 0] = rep.sigma12
        sigma[1:, 1:] = rep.sigma22
        ginv = np.linalg.inv(gamma)
        sandwich22 = (ginv @ sigma @ ginv)[1:, 1:]
        res["sandwich_inverse"] = float(
            np.linalg.norm(sandwich22 @ rep.i_beta - np.eye(d)) / math.sqrt(d)
        )
        regime = "low"
    else:
        res["info_equals_iid"] = float(
            np.linalg.norm(rep.i_beta - rep.i0) / np.linalg.norm(rep.i0)
        )
        regime = "high"

    return IdentityReport(theta0=theta0, beta=beta, regime=regime, residuals=res)


# ---------------------------------------------------------------------------
# Paired counterexample


@dataclass(frozen=True)
class PairedInfoResult:
    info: np.ndarray
    se: np.ndarray
    draws: int


def paired_fisher_info(
    theta0,
    beta: float,
    draws: int = 10_000_000,
    rng: np.random.Generator | None = None,
    chunk: int = 1_000_000,
) -> PairedInfoResult:
    """Per-observation Fisher information of the paired-label model.

    Observation pairs share a label couple (z1, z2) with weights
    proportional to exp(beta z1 z2); the independent pairs make the exact
    score available in closed form, and the information is estimated as
    half the Monte Carlo mean of the score outer product, with per-entry
    standard errors.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta0 = theta0 if isinstance(theta0, ThetaParam) else ThetaParam(vec=np.asarray(theta0, float))
    if rng is None:
        rng = np.random.default_rng(0)
    v = theta0.vec
    d = v.shape[0]
    p_same = 1.0 / (1.0 + math.exp(-2.0 * beta))

    sum1 = np.zeros((d, d))
    sum2 = np.zeros((d, d))
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        z1 = np.where(rng.random(b) < 0.5, 1.0, -1.0)
        z2 = z1 * np.where(rng.random(b) < p_same, 1.0, -1.0)
        x1 = z1[:, None] * v[None, :] + rng.standard_normal((b, d))
        x2 = z2[:, None] * v[None, :] + rng.standard_normal((b, d))
        score = _pair_score(x1, x2, v, beta)
        outer = score[:, :, None] * score[:, None, :]
        sum1 += outer.sum(axis=0)
        sum2 += (outer**2).sum(axis=0)
        done += b
    mean = sum1 / draws
    var = sum2 / draws - mean**2
    return PairedInfoResult(info=0.5 * mean, se=0.5 * np.sqrt(var / draws), draws=draws)


def _pair_score(x1: np.ndarray, x2: np.ndarray, v: np.ndarray, beta: float) -> np.ndarray:
    """Gradient of the log pair density, overflow-safe.

    With s+- = theta'(x1 +- x2) the mixture term of the density is
    proportional to e^beta cosh(s+) + e^-beta cosh(s-); the gradient
    weights the two branches by their share of that sum.
    """
    from .numutil import logcosh

    sp = (x1 + x2) @ v
    sm = (x1 - x2) @ v
    lp = beta + logcosh(sp)
    lm = -beta + logcosh(sm)
    top = np.maximum(lp, lm)
    wp = np.exp(lp - top)
    wm = np.exp(lm - top)
    den = wp + wm
    coef_p = (wp * np.tanh(sp) / den)[:, None]
    coef_m = (wm * np.tanh(sm) / den)[:, None]
    return coef_p * (x1 + x2) + coef_m * (x1 - x2) - 2.0 * v[None, :]
