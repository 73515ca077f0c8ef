"""Reproducible Monte Carlo studies over the estimators and their theory.

Replication r of a run draws everything from the Philox substream
(seed, beta_index * replications + r), so results are bit-reproducible and
independent of how replications are split across workers: workers fill
slots of a results array and the reduction always happens in index order.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__, estimators, theory
from .coupling import CouplingMatrix, load_coupling_csv
from .gmm import ThetaParam, generate
from .labels import sample_cw, sample_glauber, default_burn_in_sweeps
from .rng import GENERATOR_NAME, make_rng

SCHEMA_VERSION = 1
Z975 = 1.959963984540054
_ESTIMATORS = ("iid", "mf", "amle", "mle_cw")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    n: int
    d: int
    replications: int
    theta0: tuple
    beta_grid: tuple
    label_model: str = "cw"           # "cw" | "ising"
    coupling_path: str | None = None  # required for "ising"
    estimators: tuple = ("iid",)
    output_path: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if any(b < 0 for b in self.beta_grid):
            raise ValueError("every beta must be nonnegative")
        if self.label_model not in ("cw", "ising"):
            raise ValueError(f"unknown label model {self.label_model!r}")
        if self.label_model == "ising" and not self.coupling_path:
            raise ValueError("ising label model needs a coupling_path")
        unknown = set(self.estimators) - set(_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        ThetaParam(vec=np.asarray(self.theta0))  # must be canonicalizable

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


def _meta(cfg: ExperimentConfig, wall_time_s: float) -> dict:
    return {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "artifact_version": __version__,
        "rng": GENERATOR_NAME,
        "schema": SCHEMA_VERSION,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": wall_time_s,
    }


@dataclass(frozen=True)
class EstimatorSummary:
    beta: float
    estimator: str
    n_ok: int
    n_failed: int
    flagged: bool
    mean: np.ndarray
    cov_scaled: np.ndarray        # sample covariance of sqrt(n)(theta_hat - theta0)
    theory_cov: np.ndarray | None
    coverage: np.ndarray          # per-coordinate 95% Wald coverage


@dataclass(frozen=True)
class RunSummary:
    config: ExperimentConfig
    entries: tuple
    wall_time_s: float

    def to_json_dict(self) -> dict:
        return {
            "kind": "run_summary",
            "config": self.config.to_dict(),
            "meta": _meta(self.config, self.wall_time_s),
            "results": [
                {
                    "beta": e.beta,
                    "estimator": e.estimator,
                    "n_ok": e.n_ok,
                    "n_failed": e.n_failed,
                    "flagged": e.flagged,
                    "mean": e.mean.tolist(),
                    "cov_scaled": e.cov_scaled.ravel().tolist(),
                    "theory_cov": None if e.theory_cov is None else e.theory_cov.ravel().tolist(),
                    "coverage": e.coverage.tolist(),
                }
                for e in self.entries
            ],
        }


def _load_coupling(cfg: ExperimentConfig) -> CouplingMatrix | None:
    if cfg.label_model == "ising":
        return load_coupling_csv(cfg.coupling_path)
    return None


def _simulate_x(cfg: ExperimentConfig, beta: float, rng, coupling) -> np.ndarray:
    theta0 = ThetaParam(vec=np.asarray(cfg.theta0))
    if cfg.label_model == "cw":
        z = sample_cw(cfg.n, beta, rng)
    else:
        z = sample_glauber(coupling, beta, default_burn_in_sweeps(cfg.n), rng)
    return generate(theta0, z, rng).x


def _fit_one(x: np.ndarray, beta: float, method: str) -> estimators.EstimateResult:
    if method == "iid":
        return estimators.em_iid(x)
    if method == "mf":
        return estimators.em_mf(x, beta)
    if method == "amle":
        return estimators.amle(x, beta)
    return estimators.exact_mle_cw(x, beta)


def _mc_worker(cfg_dict: dict, beta_index: int, lo: int, hi: int) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    beta = cfg.beta_grid[beta_index]
    coupling = _load_coupling(cfg)
    d = cfg.d
    thetas = {m: np.full((hi - lo, d), np.nan) for m in cfg.estimators}
    ok = {m: np.zeros(hi - lo, dtype=bool) for m in cfg.estimators}
    for r in range(lo, hi):
        rng = make_rng(cfg.seed, beta_index * cfg.replications + r)
        x = _simulate_x(cfg, beta, rng, coupling)
        for m in cfg.estimators:
            res = _fit_one(x, beta, m)
            thetas[m][r - lo] = res.theta_hat.vec
            ok[m][r - lo] = res.converged
    return {"lo": lo, "hi": hi, "thetas": thetas, "ok": ok}


def _theory_cov(method: str, rep: theory.InfoReport) -> np.ndarray | None:
    if method == "iid":
        return np.linalg.inv(rep.i0)
    if method in ("mf", "mle_cw"):
        return np.linalg.inv(rep.i_beta)
    return rep.amle_var  # may be None at beta = 1


def run_monte_carlo(cfg: ExperimentConfig, workers: int = 1) -> RunSummary:
    """Sampling distribution of the configured estimators on cfg.beta_grid."""
    t0 = time.perf_counter()
    theta0 = np.asarray(cfg.theta0)
    entries = []
    for bi, beta in enumerate(cfg.beta_grid):
        r_tot = cfg.replications
        thetas = {m: np.full((r_tot, cfg.d), np.nan) for m in cfg.estimators}
        ok = {m: np.zeros(r_tot, dtype=bool) for m in cfg.estimators}
        for part in _run_parts(cfg, bi, workers):
            lo, hi = part["lo"], part["hi"]
            for m in cfg.estimators:
                thetas[m][lo:hi] = part["thetas"][m]
                ok[m][lo:hi] = part["ok"][m]
        rep = theory.info_report(ThetaParam(vec=theta0), beta)
        for m in cfg.estimators:
            good = thetas[m][ok[m]]
            n_ok = good.shape[0]
            n_failed = r_tot - n_ok
            scaled = np.sqrt(cfg.n) * (good - theta0[None, :])
            if n_ok >= 2:
                cov = np.cov(scaled, rowvar=False).reshape(cfg.d, cfg.d)
            else:
                cov = np.full((cfg.d, cfg.d), np.nan)
            tcov = _theory_cov(m, rep)
            if tcov is not None:
                half = Z975 * np.sqrt(np.diag(tcov) / cfg.n)
                covered = np.abs(good - theta0[None, :]) <= half[None, :]
                coverage = covered.mean(axis=0) if n_ok else np.full(cfg.d, np.nan)
            else:
                coverage = np.full(cfg.d, np.nan)
            entries.append(EstimatorSummary(
                beta=beta, estimator=m, n_ok=n_ok, n_failed=n_failed,
                flagged=n_failed > 0.01 * r_tot,
                mean=good.mean(axis=0) if n_ok else np.full(cfg.d, np.nan),
                cov_scaled=cov, theory_cov=tcov, coverage=coverage,
            ))
    return RunSummary(config=cfg, entries=tuple(entries),
                      wall_time_s=time.perf_counter() - t0)


def _run_parts(cfg: ExperimentConfig, beta_index: int, workers: int):
    r_tot = cfg.replications
    if workers <= 1:
        yield _mc_worker(cfg.to_dict(), beta_index, 0, r_tot)
        return
    bounds = np.linspace(0, r_tot, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_mc_worker, cfg.to_dict(), beta_index, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        for fut in futures:
            yield fut.result()


# ---------------------------------------------------------------------------
# Variance sweep


@dataclass(frozen=True)
class SweepTable:
    config: ExperimentConfig
    columns: tuple
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        meta = _meta(self.config, 0.0)
        with open(path, "w") as fh:
            for k in ("schema", "seed", "config_hash", "artifact_version", "timestamp"):
                fh.write(f"# {k}: {meta[k]}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def run_variance_sweep(cfg: ExperimentConfig) -> SweepTable:
    """Closed-form limiting variances per beta: 1/I0, 1/I_beta, amle.

    Matrix entries are flattened row-major into columns suffixed _ij.
    amle entries are NaN at beta = 1 where the label-mean variance diverges.
    """
    theta0 = ThetaParam(vec=np.asarray(cfg.theta0))
    d = cfg.d
    ij = [(i, j) for i in range(d) for j in range(d)]
    columns = (["beta", "m"]
               + [f"inv_I0_{i}{j}" for i, j in ij]
               + [f"inv_Ibeta_{i}{j}" for i, j in ij]
               + [f"amle_var_{i}{j}" for i, j in ij])
    rows = np.empty((len(cfg.beta_grid), len(columns)))
    inv_i0 = np.linalg.inv(theory.info_iid(theta0))
    for k, beta in enumerate(cfg.beta_grid):
        rep = theory.info_report(theta0, beta)
        inv_ib = np.linalg.inv(rep.i_beta)
        amle = rep.amle_var if rep.amle_var is not None else np.full((d, d), np.nan)
        rows[k] = np.concatenate(
            [[beta, rep.m], inv_i0.ravel(), inv_ib.ravel(), amle.ravel()]
        )
    return SweepTable(config=cfg, columns=tuple(columns), rows=rows)


# ---------------------------------------------------------------------------
# LAN diagnostic


@dataclass(frozen=True)
class LanReport:
    config: ExperimentConfig
    beta: float
    h: np.ndarray
    info: np.ndarray              # precision matrix used in the prediction
    llr: np.ndarray               # exact log likelihood ratios, one per replication
    score_term: np.ndarray        # h' Delta
    predicted: np.ndarray         # h' Delta - h' I h / 2
    wall_time_s: float

    @property
    def hih(self) -> float:
        return float(self.h @ self.info @ self.h)

    @property
    def mean_llr(self) -> float:
        return float(self.llr.mean())

    @property
    def var_llr(self) -> float:
        return float(self.llr.var(ddof=1))

    @property
    def se_mean_llr(self) -> float:
        return float(self.llr.std(ddof=1) / math.sqrt(self.llr.size))

    @property
    def mean_pred_error(self) -> float:
        return float((self.llr - self.predicted).mean())

    @property
    def var_pred_error(self) -> float:
        return float((self.llr - self.predicted).var(ddof=1))

    @property
    def slope(self) -> float:
        s = self.score_term
        v = float(np.var(s))
        if v == 0.0:
            return float("nan")
        return float(np.cov(self.llr, s, ddof=0)[0, 1] / v)

    def to_json_dict(self) -> dict:
        return {
            "kind": "lan_report",
            "config": self.config.to_dict(),
            "meta": _meta(self.config, self.wall_time_s),
            "beta": self.beta,
            "h": self.h.tolist(),
            "info": self.info.ravel().tolist(),
            "replications": int(self.llr.size),
            "mean_llr": self.mean_llr,
            "theory_mean_llr": -0.5 * self.hih,
            "se_mean_llr": self.se_mean_llr,
            "var_llr": self.var_llr,
            "theory_var_llr": self.hih,
            "mean_pred_error": self.mean_pred_error,
            "var_pred_error": self.var_pred_error,
            "slope": self.slope,
        }

    def to_csv(self, path) -> None:
        meta = _meta(self.config, self.wall_time_s)
        with open(path, "w") as fh:
            for k in ("schema", "seed", "config_hash", "artifact_version", "timestamp"):
                fh.write(f"# {k}: {meta[k]}\n")
            fh.write("rep,llr,score_term,predicted\n")
            for r in range(self.llr.size):
                fh.write(f"{r},{self.llr[r]:.17g},{self.score_term[r]:.17g},"
                         f"{self.predicted[r]:.17g}\n")


def _lan_worker(cfg_dict: dict, beta_index: int, h_list: list, lo: int, hi: int) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    beta = cfg.beta_grid[beta_index]
    h = np.asarray(h_list, dtype=float)
    theta0 = np.asarray(cfg.theta0)
    theta_n = theta0 + h / math.sqrt(cfg.n)
    rep_info = theory.info_report(ThetaParam(vec=theta0), beta)
    info = rep_info.i0 if beta <= 1.0 else rep_info.i_beta
    llr = np.empty(hi - lo)
    score_term = np.empty(hi - lo)
    for r in range(lo, hi):
        rng = make_rng(cfg.seed, beta_index * cfg.replications + r)
        x = _simulate_x(cfg, beta, rng, None)
        shift = -(2.0 * (h @ theta0) * math.sqrt(cfg.n) + h @ h) / 2.0
        llr[r - lo] = shift + cfg.n * (
            estimators.logz_cw(x, beta, theta_n) - estimators.logz_cw(x, beta, theta0)
        )
        if beta <= 1.0:
            delta = estimators.score_iid(x, theta0).delta
        else:
            delta = estimators.score_lowtemp(x, theta0, beta).delta
        score_term[r - lo] = h @ delta
    return {"lo": lo, "hi": hi, "llr": llr, "score_term": score_term, "info": info}


def run_lan_diagnostic(cfg: ExperimentConfig, h, workers: int = 1) -> LanReport:
    """Exact log likelihood ratio against its quadratic expansion.

    Curie-Weiss labels only (the exact likelihood needs the scalar-integral
    partition function). Uses the iid score for beta <= 1 and the tilted
    score above the transition.
    """
    if cfg.label_model != "cw":
        raise ValueError("the LAN diagnostic requires the cw label model")
    if len(cfg.beta_grid) != 1:
        raise ValueError("the LAN diagnostic runs one beta at a time")
    t0 = time.perf_counter()
    h = np.asarray(h, dtype=float).ravel()
    if h.shape[0] != cfg.d:
        raise ValueError("h must have the model dimension")
    r_tot = cfg.replications
    llr = np.empty(r_tot)
    score_term = np.empty(r_tot)
    info = None
    if workers <= 1:
        parts = [_lan_worker(cfg.to_dict(), 0, h.tolist(), 0, r_tot)]
    else:
        bounds = np.linspace(0, r_tot, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_lan_worker, cfg.to_dict(), 0, h.tolist(), int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
            ]
            parts = [f.result() for f in futures]
    for part in parts:
        llr[part["lo"]:part["hi"]] = part["llr"]
        score_term[part["lo"]:part["hi"]] = part["score_term"]
        info = part["info"]
    hih = float(h @ info @ h)
    return LanReport(
        config=cfg, beta=cfg.beta_grid[0], h=h, info=info, llr=llr,
        score_term=score_term, predicted=score_term - 0.5 * hih,
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Persistence


def persist(obj, path) -> None:
    """Write a summary (JSON) or table (CSV with a metadata block)."""
    try:
        if isinstance(obj, SweepTable):
            obj.to_csv(path)
        elif isinstance(obj, LanReport) and str(path).endswith(".csv"):
            obj.to_csv(path)
        elif hasattr(obj, "to_json_dict"):
            with open(path, "w") as fh:
                json.dump(obj.to_json_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            raise TypeError(f"cannot persist object of type {type(obj).__name__}")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_table_csv(path) -> tuple[dict, list, np.ndarray]:
    """Read a CSV written by persist: (metadata, columns, rows)."""
    meta = {}
    with open(path) as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            meta[key.strip()] = val.strip()
            pos = fh.tell()
            line = fh.readline()
        columns = line.strip().split(",")
        rows = [
            [float(v) for v in ln.strip().split(",")]
            for ln in fh if ln.strip()
        ]
    return meta, columns, np.asarray(rows)
