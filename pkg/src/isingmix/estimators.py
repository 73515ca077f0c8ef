"""Estimators for the mean parameter under dependent labels.

Four routes, all driven only by the observation matrix:

* em_iid        -- minimizer of the product-measure objective
                   N_n(theta) = theta'theta/2 - mean_i log cosh(theta'x_i),
                   computed by the fixed-point map
                   theta <- mean_i x_i tanh(theta'x_i);
* em_mf         -- joint minimizer (u, theta) of the variational objective
                   M_n(u, theta) = theta'theta/2 + beta u^2/2
                                   - mean_i log cosh(beta u + theta'x_i);
* amle          -- plug-in product approximation: fixes the tilt at the
                   magnetization root +-m(beta) and solves the resulting
                   fixed point in theta;
* exact_mle_cw  -- exact marginal likelihood under Curie-Weiss labels,
                   using the one-dimensional auxiliary-field integral for
                   the log partition function.

Score statistics and the unknown-dependence pipeline live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from . import theory
from .gmm import ParameterError, ThetaParam, canonicalize_theta, xbar_sign
from .labels import RfimSpec, rfim_posterior_means
from .numutil import ConvergenceError, golden_min, logcosh, logcosh_offsets_mean

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
FD_STEP = 1e-6
UN_GRID_POINTS = 2001


@dataclass(frozen=True)
class EstimateResult:
    """Solver output; theta_hat is always canonical."""

    method: str
    theta_hat: ThetaParam
    u_hat: float | None
    iterations: int
    converged: bool
    final_grad_norm: float
    objective_value: float
    trace: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.method,
            "theta_hat": [float(v) for v in self.theta_hat.vec],
            "u_hat": None if self.u_hat is None else float(self.u_hat),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "grad_norm": float(self.final_grad_norm),
            "objective": float(self.objective_value),
        }


@dataclass(frozen=True)
class ScoreStatistic:
    """Root-n score vector; lowtemp variant records its tilt center."""

    delta: np.ndarray
    variant: str  # "iid" | "lowtemp"
    u_center: float | None = None

    def __post_init__(self):
        if self.variant not in ("iid", "lowtemp"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "iid" and self.u_center is not None:
            raise ValueError("iid scores carry no tilt center")
        if self.variant == "lowtemp":
            if self.u_center is None or not -1.0 <= self.u_center <= 1.0:
                raise ValueError("lowtemp scores need a tilt center in [-1, 1]")


@dataclass(frozen=True)
class BetaEstimate:
    """Output of the unknown-dependence pipeline."""

    regime: str  # "high" | "low"
    beta_hat: float | None
    theta_hat: ThetaParam
    m_hat: float | None
    threshold: float
    xbar_norm: float
    m_clamped: bool


def _as_vec(theta) -> np.ndarray:
    if isinstance(theta, ThetaParam):
        return theta.vec
    return np.asarray(theta, dtype=float).ravel()


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


# ---------------------------------------------------------------------------
# Objectives


def objective_nn(x, theta) -> float:
    """Product-measure objective theta'theta/2 - mean log cosh(theta'x)."""
    x = _as_matrix(x)
    v = _as_vec(theta)
    return float(0.5 * v @ v - np.mean(logcosh(x @ v)))


def objective_mn(x, beta: float, u: float, theta) -> float:
    """Variational objective; requires |u| <= 1."""
    if not -1.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [-1, 1], got {u}")
    x = _as_matrix(x)
    v = _as_vec(theta)
    return float(0.5 * v @ v + 0.5 * beta * u * u - np.mean(logcosh(beta * u + x @ v)))


# ---------------------------------------------------------------------------
# Fixed-point solvers


def _spectral_init(x: np.ndarray) -> np.ndarray:
    """Deterministic starting point: leading axis of the second moment.

    E XX' = I + theta theta' under the model, so the top eigenvector of the
    sample second moment points near +-theta0 for any label distribution.
    """
    m2 = x.T @ x / x.shape[0]
    eigval, eigvec = np.linalg.eigh(m2)
    v = eigvec[:, -1]
    scale = np.sqrt(max(eigval[-1] - 1.0, 1e-2))
    try:
        return canonicalize_theta(v * scale).vec
    except ParameterError:  # pragma: no cover - eigh never returns zero vectors
        return np.full(x.shape[1], 1.0 / np.sqrt(x.shape[1]))


def em_iid(
    x,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EstimateResult:
    """Fixed point of theta <- mean_i x_i tanh(theta'x_i).

    Stops when the objective gradient norm (which equals the step size for
    this map) drops to tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _as_matrix(x)
    n = x.shape[0]
    theta = _spectral_init(x) if init is None else _as_vec(init).copy()
    trace = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        t = np.tanh(x @ theta)
        nxt = x.T @ t / n
        grad = theta - nxt
        trace.append(objective_nn(x, theta))
        theta = nxt
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
    theta_hat = canonicalize_theta(theta)
    grad_norm = float(np.linalg.norm(theta_hat.vec - x.T @ np.tanh(x @ theta_hat.vec) / n))
    return EstimateResult(
        method="iid",
        theta_hat=theta_hat,
        u_hat=None,
        iterations=iterations,
        converged=converged and grad_norm <= tol,
        final_grad_norm=grad_norm,
        objective_value=objective_nn(x, theta_hat),
        trace=np.asarray(trace),
    )


def mf_grad(x, beta: float, u: float, theta) -> np.ndarray:
    """Gradient (F1, F2) of the variational objective at (u, theta)."""
    x = _as_matrix(x)
    v = _as_vec(theta)
    t = np.tanh(beta * u + x @ v)
    f1 = beta * (u - np.mean(t))
    f2 = v - x.T @ t / x.shape[0]
    return np.concatenate(([f1], f2))


def em_mf(
    x,
    beta: float,
    init_u: float | None = None,
    init_theta=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    scale_u_update_by_beta: bool = False,
) -> EstimateResult:
    """Joint fixed point of the variational objective.

    Updates (simultaneously, from the current iterate)
        u     <- mean_i tanh(beta u + theta'x_i)
        theta <- mean_i x_i tanh(beta u + theta'x_i)
    which are the stationarity conditions of the objective. With
    scale_u_update_by_beta the u-update is multiplied by beta; that variant
    is exposed only for comparison: its fixed points are not stationary
    points unless beta = 1, so it stops on its own fixed-point residual and
    final_grad_norm then reports that residual instead of the objective
    gradient.

    Default initialization is the rate-optimal pair: the signed
    magnetization root for u and the em_iid output for theta.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _as_matrix(x)
    n = x.shape[0]
    if init_u is not None and not -1.0 <= init_u <= 1.0:
        raise ValueError(f"init_u must lie in [-1, 1], got {init_u}")

    if beta == 0.0:
        # the objective does not depend on u; solve the theta block alone
        base = em_iid(x, init=init_theta, tol=tol, max_iter=max_iter)
        return EstimateResult(
            method="mf",
            theta_hat=base.theta_hat,
            u_hat=0.0,
            iterations=base.iterations,
            converged=base.converged,
            final_grad_norm=base.final_grad_norm,
            objective_value=objective_mn(x, 0.0, 0.0, base.theta_hat),
            trace=base.trace,
        )

    if init_theta is None:
        theta = em_iid(x, tol=tol, max_iter=max_iter).theta_hat.vec.copy()
    else:
        theta = _as_vec(init_theta).copy()
    u = xbar_sign(x) * theory.solve_m(beta) if init_u is None else float(init_u)

    trace = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        t = np.tanh(beta * u + x @ theta)
        mean_t = float(np.mean(t))
        u_next = float(np.clip(beta * mean_t if scale_u_update_by_beta else mean_t,
                               -1.0, 1.0))
        theta_next = x.T @ t / n
        if scale_u_update_by_beta:
            resid = np.concatenate(([u - u_next], theta - theta_next))
        else:
            resid = np.concatenate(([beta * (u - mean_t)], theta - theta_next))
        trace.append(objective_mn(x, beta, u, theta))
        u, theta = u_next, theta_next
        if np.linalg.norm(resid) <= tol:
            converged = True
            break

    # joint sign flip (u, theta) -> (-u, -theta) leaves the objective invariant
    theta_hat = canonicalize_theta(theta)
    if not np.array_equal(theta_hat.vec, theta):
        u = -u
    if scale_u_update_by_beta:
        t = np.tanh(beta * u + x @ theta_hat.vec)
        grad_norm = float(np.linalg.norm(np.concatenate((
            [u - float(np.clip(beta * np.mean(t), -1.0, 1.0))],
            theta_hat.vec - x.T @ t / n,
        ))))
    else:
        grad_norm = float(np.linalg.norm(mf_grad(x, beta, u, theta_hat)))
    return EstimateResult(
        method="mf",
        theta_hat=theta_hat,
        u_hat=u,
        iterations=iterations,
        converged=converged and grad_norm <= tol,
        final_grad_norm=grad_norm,
        objective_value=objective_mn(x, beta, u, theta_hat),
        trace=np.asarray(trace),
    )


def solve_un(x, theta0, beta: float) -> float:
    """Global minimizer over [-1, 1] of u -> M_n(u, theta0).

    Coarse 2001-point scan, then golden-section refinement to 1e-10. Exact
    ties between symmetric minimizers break toward the half-space side of
    the column mean (+ for the canonical side). For beta = 0 the objective
    is constant in u and 0 is returned by convention.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0.0:
        return 0.0
    x = _as_matrix(x)
    c = x @ _as_vec(theta0)

    def g(u):
        return 0.5 * beta * u * u - float(np.mean(logcosh(beta * u + c)))

    grid = np.linspace(-1.0, 1.0, UN_GRID_POINTS)
    vals = 0.5 * beta * grid**2 - logcosh_offsets_mean(grid, beta, c)
    best = int(np.argmin(vals))
    near = np.flatnonzero(vals <= vals[best] + 1e-12 * max(1.0, abs(vals[best])))
    sign = xbar_sign(x)
    if np.any(grid[near] > 0) and np.any(grid[near] < 0):
        matching = near[np.sign(grid[near]) == sign]
        if matching.size:
            best = int(matching[np.argmin(vals[matching])])
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, UN_GRID_POINTS - 1)]
    return float(np.clip(golden_min(g, lo, hi, xtol=1e-10), -1.0, 1.0))


def amle(
    x,
    beta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init=None,
) -> EstimateResult:
    """Product-approximation estimator with the tilt pinned at +-m(beta).

    The tilt sign follows the half-space side of the column mean; for
    beta <= 1 the magnetization root is zero and the iteration coincides
    with em_iid.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _as_matrix(x)
    n = x.shape[0]
    m_signed = xbar_sign(x) * theory.solve_m(beta)
    offset = beta * m_signed
    theta = _spectral_init(x) if init is None else _as_vec(init).copy()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        nxt = x.T @ np.tanh(offset + x @ theta) / n
        grad = theta - nxt
        theta = nxt
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
    theta_hat = canonicalize_theta(theta)
    v = theta_hat.vec
    grad_norm = float(np.linalg.norm(v - x.T @ np.tanh(offset + x @ v) / n))
    objective = float(0.5 * v @ v - np.mean(logcosh(offset + x @ v)))
    return EstimateResult(
        method="amle",
        theta_hat=theta_hat,
        u_hat=m_signed,
        iterations=iterations,
        converged=converged and grad_norm <= tol,
        final_grad_norm=grad_norm,
        objective_value=objective,
    )


# ---------------------------------------------------------------------------
# Exact Curie-Weiss likelihood


def logz_cw(x, beta: float, theta) -> float:
    """(1/n) log of the Curie-Weiss partition function sum over labels of
    exp(n beta wbar^2 / 2 + sum_i (theta'x_i) w_i).

    Uses the exact scalar-integral identity
        Z = sqrt(n beta / 2 pi) * integral exp(-n beta y^2/2)
            * prod_i 2 cosh(beta y + theta'x_i) dy
    evaluated by composite Simpson rules on windows around the integrand's
    modes (located by a coarse scan plus Newton polish). For beta = 0 the
    integral degenerates and the product form is returned directly.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    x = _as_matrix(x)
    c = x @ _as_vec(theta)
    n = x.shape[0]
    if beta == 0.0:
        return float(np.mean(logcosh(c)) + np.log(2.0))
    log_integral = _log_aux_integral(n, beta, c)
    return float((0.5 * np.log(n * beta / (2.0 * np.pi)) + log_integral) / n + np.log(2.0))


def _aux_exponent(y: np.ndarray, beta: float, c: np.ndarray) -> np.ndarray:
    """-n*beta*y^2/2 + sum_i log cosh(beta*y + c_i)."""
    n = c.shape[0]
    return n * logcosh_offsets_mean(y, beta, c) - 0.5 * n * beta * y**2


def _aux_modes(n: int, beta: float, c: np.ndarray) -> list[tuple[float, float]]:
    """Local maxima of the integrand exponent with their curvatures.

    Returns (mode, exponent second derivative at the mode / n), the latter
    clipped away from zero for window sizing.
    """
    scan = np.linspace(-1.05, 1.05, 211)
    vals = _aux_exponent(scan, beta, c)
    cand = [i for i in range(len(scan)) if
            (i == 0 or vals[i] >= vals[i - 1]) and (i == len(scan) - 1 or vals[i] >= vals[i + 1])]
    modes = []
    for i in cand:
        y = scan[i]
        for _ in range(60):
            t = np.tanh(beta * y + c)
            g1 = beta * (y - float(np.mean(t)))          # d/dy of exponent / (-n)
            g2 = beta * (1.0 - beta * float(np.mean(1.0 - t * t)))
            if g2 <= 0:
                break
            step = np.clip(g1 / g2, -0.1, 0.1)
            y -= step
            if abs(g1) < 1e-13:
                break
        t = np.tanh(beta * y + c)
        g2 = beta * (1.0 - beta * float(np.mean(1.0 - t * t)))
        modes.append((float(y), max(g2, 1e-12)))
    # deduplicate polished modes that collapsed together
    modes.sort()
    dedup: list[tuple[float, float]] = []
    for y, g2 in modes:
        if not dedup or abs(y - dedup[-1][0]) > 1e-6:
            dedup.append((y, g2))
    return dedup


def _log_aux_integral(n: int, beta: float, c: np.ndarray) -> float:
    """log integral of exp(_aux_exponent) over the real line."""
    windows = []
    for y0, g2 in _aux_modes(n, beta, c):
        sigma = 1.0 / np.sqrt(n * g2)
        half = min(max(13.0 * sigma, 8.0 * n ** (-0.25), 0.05), 50.0)
        windows.append((y0 - half, y0 + half))
    windows.sort()
    merged = [list(windows[0])]
    for lo, hi in windows[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    points = 3201 if n <= 64 else 801
    parts = [_window_exponents(lo, hi, points, beta, c) for lo, hi in merged]
    top = max(float(e.max()) for _, e in parts)
    total = 0.0
    for g, e in parts:
        v = np.exp(e - top)
        h = g[1] - g[0]
        total += h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())
    return top + float(np.log(total))


def _window_exponents(lo, hi, points, beta, c):
    """Exponent values on a window grid, self-adapted to the peak shape.

    Widens when the exponent is still hot at an edge (tail not covered) and
    zooms when fewer than 40 grid points carry the top-2-nats core (peak
    narrower than the curvature estimate suggested, e.g. near criticality).
    """
    g = e = None
    for _ in range(5):
        g = np.linspace(lo, hi, points)
        e = _aux_exponent(g, beta, c)
        top = float(e.max())
        if e[0] > top - 40.0 or e[-1] > top - 40.0:
            mid, half = 0.5 * (lo + hi), hi - lo
            lo, hi = mid - half, mid + half
            continue
        core = np.flatnonzero(e >= top - 2.0)
        if core.size < 40:
            width = max(g[core[-1]] - g[core[0]], (hi - lo) / (points - 1))
            center = float(g[int(np.argmax(e))])
            lo, hi = center - 8.0 * width, center + 8.0 * width
            continue
        return g, e
    return g, e


def _fd_grad(f, v: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(v)
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = h
        g[j] = (f(v + e) - f(v - e)) / (2.0 * h)
    return g


def exact_mle_cw(x, beta: float, tol: float = 1e-7) -> EstimateResult:
    """Exact marginal MLE under Curie-Weiss labels.

    Minimizes theta'theta/2 - logz_cw by BFGS with central-difference
    gradients, multistarted from the iid EM fit, the variational fit, and
    the column-mean direction. The reported gradient norm is recomputed
    from the analytic likelihood gradient (posterior-mean identity).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    x = _as_matrix(x)
    n = x.shape[0]

    def f(v):
        return 0.5 * v @ v - logz_cw(x, beta, v)

    starts = [em_iid(x, tol=1e-10).theta_hat.vec]
    if beta > 0:
        starts.append(em_mf(x, beta, tol=1e-10).theta_hat.vec)
    xbar = x.mean(axis=0)
    if np.linalg.norm(xbar) > 1e-12:
        starts.append(xbar_sign(x) * xbar / max(theory.solve_m(beta), 0.1))

    best = None
    any_success = False
    total_iter = 0
    for s in starts:
        res = minimize(f, s, jac=lambda v: _fd_grad(f, v), method="BFGS",
                       options={"gtol": tol, "maxiter": 500})
        total_iter += int(res.nit)
        any_success = any_success or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if best is None:  # pragma: no cover - starts is never empty
        raise ConvergenceError("no starting point produced a result")

    theta_hat = canonicalize_theta(best.x)
    post_means = rfim_posterior_means(RfimSpec(beta=beta, theta=theta_hat, x=x))
    grad = theta_hat.vec - x.T @ post_means / n
    return EstimateResult(
        method="mle_cw",
        theta_hat=theta_hat,
        u_hat=None,
        iterations=total_iter,
        converged=any_success,
        final_grad_norm=float(np.linalg.norm(grad)),
        objective_value=float(best.fun),
    )


def elbo_cw(x, beta: float, u_vec, theta) -> float:
    """Mean-field lower bound on logz_cw at site marginals u_vec.

    Value: beta ubar^2/2 + mean_i (theta'x_i) u_i - mean_i H(u_i) with H the
    negative binary entropy (H(0) = -log 2, H(+-1) = 0), so the bound at
    u = 0 equals log 2 and elbo_cw <= logz_cw for every feasible u.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    x = _as_matrix(x)
    u = np.asarray(u_vec, dtype=float).ravel()
    if u.shape[0] != x.shape[0]:
        raise ValueError("u_vec length must match the number of observations")
    if np.any(np.abs(u) > 1.0):
        raise ValueError("u_vec entries must lie in [-1, 1]")
    c = x @ _as_vec(theta)
    p = (1.0 + u) / 2.0
    neg_entropy = xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)
    return float(0.5 * beta * np.mean(u) ** 2 + np.mean(c * u) - np.mean(neg_entropy))


def mf_fixed_point_uvec(x, beta: float, theta, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Site marginals solving u_i = tanh(beta ubar + theta'x_i) at fixed theta."""
    x = _as_matrix(x)
    c = x @ _as_vec(theta)
    ubar = xbar_sign(x) * max(theory.solve_m(beta), 0.0)
    for _ in range(max_iter):
        u = np.tanh(beta * ubar + c)
        nxt = float(np.mean(u))
        if abs(nxt - ubar) <= tol:
            ubar = nxt
            break
        ubar = nxt
    return np.tanh(beta * ubar + c)


# ---------------------------------------------------------------------------
# Score statistics and the unknown-dependence pipeline


def score_iid(x, theta0) -> ScoreStatistic:
    """sqrt(n) (mean_i x_i tanh(theta0'x_i) - theta0)."""
    x = _as_matrix(x)
    v = _as_vec(theta0)
    n = x.shape[0]
    delta = np.sqrt(n) * (x.T @ np.tanh(x @ v) / n - v)
    return ScoreStatistic(delta=delta, variant="iid")


def score_lowtemp(x, theta0, beta: float) -> ScoreStatistic:
    """sqrt(n) (mean_i x_i tanh(beta U_n + theta0'x_i) - theta0)."""
    x = _as_matrix(x)
    v = _as_vec(theta0)
    n = x.shape[0]
    un = solve_un(x, v, beta)
    delta = np.sqrt(n) * (x.T @ np.tanh(beta * un + x @ v) / n - v)
    return ScoreStatistic(delta=delta, variant="lowtemp", u_center=un)


def estimate_beta_unknown(x, threshold_scale: float = 1.0) -> BetaEstimate:
    """Two-stage pipeline when the dependence strength is unknown.

    Declares the strong-dependence regime when ||xbar|| exceeds
    threshold_scale * n^(-1/8); in that regime inverts the magnetization
    equation at m_hat = ||xbar|| / ||theta_hat|| (clamped into (0, 1)).
    The iid EM estimate is returned in both regimes.
    """
    x = _as_matrix(x)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    tau = threshold_scale * n ** (-1.0 / 8.0)
    xbar_norm = float(np.linalg.norm(x.mean(axis=0)))
    fit = em_iid(x)
    if xbar_norm <= tau:
        return BetaEstimate(
            regime="high", beta_hat=None, theta_hat=fit.theta_hat,
            m_hat=None, threshold=tau, xbar_norm=xbar_norm, m_clamped=False,
        )
    m_raw = xbar_norm / fit.theta_hat.norm
    m_hat = float(np.clip(m_raw, 1e-8, 1.0 - 1e-8))
    beta_hat = float(np.arctanh(m_hat) / m_hat)
    return BetaEstimate(
        regime="low", beta_hat=beta_hat, theta_hat=fit.theta_hat,
        m_hat=m_hat, threshold=tau, xbar_norm=xbar_norm, m_clamped=m_raw >= 1.0,
    )
