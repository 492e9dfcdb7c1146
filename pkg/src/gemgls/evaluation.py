"""Simulation metrics and the Monte Carlo harness."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from .covmodel import (
    MeanSpec,
    correlation_from_spec,
    cov_to_corr,
    normalize_kronecker,
    sample_matrix_variate,
)
from .design import TwoGroupDesign
from .errors import (
    GemglsError,
    InvalidParameterError,
    TooFewValuesError,
    UndefinedROCError,
)
from .gemini import center, fit_gemini
from .gls import design_effect, gls_fit, ols_fit, paired_t, sd_ratio, unpaired_t
from .pipeline import Alg2Config, PenaltyPolicy, algorithm1, algorithm2, penalty_value

log = logging.getLogger(__name__)

ESTIMATORS = ("ols", "alg1", "alg2", "oracle_gls", "oracle_modsel", "unpaired_t", "paired_t")
NORMAL_IQR = 2 * stats.norm.ppf(0.75)


def rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman correlation of the magnitudes of ``a`` and ``b``."""
    a, b = np.abs(np.ravel(a)), np.abs(np.ravel(b))
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(stats.spearmanr(a, b).correlation)


def estimation_metrics(gamma_hat, gamma_true, b_inv_hat=None, b_inv_true=None) -> dict:
    gamma_hat = np.ravel(gamma_hat)
    gamma_true = np.ravel(gamma_true)
    if gamma_hat.shape != gamma_true.shape:
        raise InvalidParameterError("gamma vectors differ in length")
    out = {
        "rmse": float(np.linalg.norm(gamma_hat - gamma_true) / np.sqrt(gamma_true.size)),
        "rank_corr": rank_correlation(gamma_hat, gamma_true),
    }
    if b_inv_hat is not None and b_inv_true is not None:
        out["rel_fro"] = float(np.linalg.norm(b_inv_hat - b_inv_true) / np.linalg.norm(b_inv_true))
    return out


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, support) -> RocCurve:
    """ROC of ``scores`` (larger means non-null) against the true support.

    Thresholds sweep every distinct score; tied scores enter together.
    """
    scores = np.ravel(np.asarray(scores, dtype=float))
    m = scores.size
    truth = np.zeros(m, dtype=bool)
    truth[np.asarray(support, dtype=int)] = True
    n_pos = int(truth.sum())
    if n_pos == 0 or n_pos == m:
        raise UndefinedROCError("support must be a nonempty proper subset")
    order = np.argsort(-scores, kind="stable")
    s, t = scores[order], truth[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), m - 1]
    tp = np.cumsum(t)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / (m - n_pos)]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, np.r_[np.inf, s[ends]], auc)


def design_effect_ratio(estimated: float, true_: float) -> float:
    if not true_ > 0:
        raise InvalidParameterError("true design effect must be positive")
    return float(estimated / true_)


@dataclass
class QuantileTable:
    empirical: np.ndarray
    normal: np.ndarray
    slope: float


def calibration_quantiles(t_stats) -> QuantileTable:
    """Sorted statistics against normal quantiles at ``(i - 0.5)/m``.

    ``slope`` is the empirical interquartile range over the normal one.
    """
    t = np.sort(np.ravel(np.asarray(t_stats, dtype=float)))
    m = t.size
    if m < 10:
        raise TooFewValuesError(f"need at least 10 statistics, got {m}")
    normal = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    q25, q75 = np.percentile(t, [25, 75])
    return QuantileTable(t, normal, float((q75 - q25) / NORMAL_IQR))


def structure_metrics(b: np.ndarray, design: TwoGroupDesign | None = None) -> dict:
    """The five difficulty metrics of a sample covariance ``b``.

    Groups default to first half / second half.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    design = design or TwoGroupDesign.balanced(n)
    rho = cov_to_corr(b)
    off = ~np.eye(n, dtype=bool)
    rho_inv = np.linalg.inv(rho)
    de = design_effect(design, np.linalg.inv(b))
    return {
        "rho2": float(np.mean(rho[off] ** 2)) if n > 1 else 0.0,
        "fro_over_trace": float(np.linalg.norm(b) / np.trace(b)),
        "inv_corr_l1_off": float(np.abs(rho_inv[off]).sum()),
        "sd_gls": float(np.sqrt(de)),
        "sd_ratio": sd_ratio(b, design),
    }


# --------------------------------------------------------------------------
# Monte Carlo harness


@dataclass
class SimConfig:
    """One simulation setting.

    ``penalty_grid`` lists penalty multipliers; each grid point re-runs the
    estimators that fit ``B^-1`` (alg1, alg2 stage 4, oracle_modsel).
    """

    a_spec: dict = field(default_factory=lambda: {"kind": "ar1", "n": 500, "rho": 0.8})
    b_spec: dict = field(default_factory=lambda: {"kind": "ar1", "n": 40, "rho": 0.8})
    mean: dict = field(default_factory=lambda: {"kind": "sparse", "d0": 10, "effect": 0.8})
    assignment: str = "contiguous"
    estimators: list[str] = field(default_factory=lambda: ["ols", "alg1", "alg2", "oracle_gls"])
    replications: int = 10
    seed: int = 0
    penalty_kind: str = "plugin"
    penalty_grid: list[float] = field(default_factory=lambda: [0.5])
    alg2_stage1_multiplier: float = 0.5
    alg2_threshold: str = "plugin"
    alg2_top_k: int | None = None
    alg2_threshold_multiplier: float = 1.0
    noise: str = "gaussian"
    keep_null_stats: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidParameterError("replications must be >= 1")
        if not self.estimators:
            raise InvalidParameterError("estimator list is empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise InvalidParameterError(f"unknown estimators {sorted(unknown)}")
        if self.assignment not in ("contiguous", "random"):
            raise InvalidParameterError("assignment must be contiguous or random")
        if not self.penalty_grid:
            raise InvalidParameterError("penalty grid is empty")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidParameterError(f"unknown simulation config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k != "workers"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def build_mean(spec: dict, m: int) -> MeanSpec:
    spec = dict(spec)
    kind = spec.pop("kind", "sparse")
    if kind == "sparse":
        return MeanSpec.sparse(m, spec.get("d0", 10), spec.get("effect", 0.8), spec.get("mu", 0.0))
    if kind == "effects":
        eff = np.asarray(spec["effects"], dtype=float)
        return MeanSpec.sparse(m, eff.size, eff, spec.get("mu", 0.0))
    if kind == "exp_decay":
        return MeanSpec.exp_decay(m, spec.get("max_diff", 5.0), spec.get("rate", 3 / 2000),
                                  spec.get("n_nonzero"))
    if kind == "null":
        return MeanSpec(np.zeros(m), np.zeros(m))
    raise InvalidParameterError(f"unknown mean kind {kind!r}")


@dataclass
class SimReport:
    config: SimConfig
    records: list[dict]
    failures: int
    null_stats: dict[str, np.ndarray] = field(default_factory=dict)
    roc: dict[str, np.ndarray] = field(default_factory=dict)

    def values(self, estimator: str, metric: str, grid: float | None = None) -> np.ndarray:
        grid = self.config.penalty_grid[0] if grid is None else grid
        return np.array([r["value"] for r in self.records
                         if r["estimator"] == estimator and r["metric"] == metric
                         and r["grid"] in (grid, None)])

    def summary(self) -> list[dict]:
        groups: dict[tuple, list[float]] = {}
        for r in self.records:
            groups.setdefault((r["estimator"], r["grid"], r["metric"]), []).append(r["value"])
        rows = []
        for (est, grid, metric), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or -1, kv[0][2])):
            v = np.asarray(vals, dtype=float)
            v = v[np.isfinite(v)]
            sd = float(v.std(ddof=1)) if v.size > 1 else float("nan")
            rows.append({
                "estimator": est, "grid": grid, "metric": metric, "count": int(v.size),
                "mean": float(v.mean()) if v.size else float("nan"),
                "sd": sd, "se": sd / math.sqrt(v.size) if v.size > 1 else float("nan"),
                "median": float(np.median(v)) if v.size else float("nan"),
            })
        return rows

    def provenance(self) -> dict:
        return {"config": self.config.to_dict(), "config_hash": self.config.digest(),
                "seed": self.config.seed, "failures": self.failures}

    def write(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "records.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rep", "estimator", "grid", "metric", "value"])
            for r in self.records:
                w.writerow([r["rep"], r["estimator"], "" if r["grid"] is None else repr(r["grid"]),
                            r["metric"], repr(float(r["value"]))])
        with open(out / "summary.json", "w") as fh:
            json.dump({"summary": self.summary(), "provenance": self.provenance()}, fh,
                      indent=2, sort_keys=True, allow_nan=True)
        if self.roc:
            with open(out / "roc.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["estimator", "fpr", "mean_tpr"])
                for est, tpr in self.roc.items():
                    for f, t in zip(ROC_GRID, tpr):
                        w.writerow([est, repr(float(f)), repr(float(t))])
        if self.null_stats:
            with open(out / "quantiles.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["estimator", "normal", "empirical"])
                for est, t in self.null_stats.items():
                    q = calibration_quantiles(t)
                    for a, b in zip(q.normal, q.empirical):
                        w.writerow([est, repr(float(a)), repr(float(b))])


ROC_GRID = np.linspace(0, 1, 101)


class _Setting:
    """Per-run constants shared (read-only) by all replications."""

    def __init__(self, cfg: SimConfig):
        a = correlation_from_spec(cfg.a_spec)
        b = correlation_from_spec(cfg.b_spec)
        self.model = normalize_kronecker(a, b)
        self.model.A_sqrt, self.model.B_sqrt  # compute once before threads start
        self.n, self.m = self.model.n, self.model.m
        self.mean = build_mean(cfg.mean, self.m)
        self.support = self.mean.support
        self.truth = (self.model.A, self.model.B)
        self.b_inv = self.model.B_inv


def _policy(cfg: SimConfig, mult: float) -> PenaltyPolicy:
    return PenaltyPolicy(kind=cfg.penalty_kind, multiplier=mult)


def _replicate(cfg: SimConfig, st: _Setting, rep: int, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    if cfg.assignment == "random":
        design = TwoGroupDesign.random_balanced(st.n, rng)
    else:
        design = TwoGroupDesign.balanced(st.n)
    x = sample_matrix_variate(st.mean, st.model, design, cfg.noise, rng)
    gamma = st.mean.gamma
    null = np.ones(st.m, dtype=bool)
    null[st.support] = False
    true_de = design_effect(design, st.b_inv)
    proper = 0 < st.support.size < st.m
    records, nulls, rocs, failures = [], {}, {}, 0

    def emit(est, grid, gamma_hat, t=None, b_inv=None, de=None):
        met = estimation_metrics(gamma_hat, gamma, b_inv, st.b_inv if b_inv is not None else None)
        if de is not None:
            met["de_ratio"] = design_effect_ratio(de, true_de)
        if proper:
            roc = roc_curve(np.abs(gamma_hat), st.support)
            met["auc"] = roc.auc
            if grid == cfg.penalty_grid[0] or grid is None:
                rocs[est] = np.interp(ROC_GRID, roc.fpr, roc.tpr)
        if t is not None and null.sum() >= 10:
            met["null_slope"] = calibration_quantiles(t[null]).slope
            if cfg.keep_null_stats and (grid == cfg.penalty_grid[0] or grid is None):
                nulls[est] = t[null]
        for k, v in met.items():
            records.append({"rep": rep, "estimator": est, "grid": grid, "metric": k, "value": float(v)})

    def guarded(est, grid, fn):
        nonlocal failures
        try:
            fn()
        except GemglsError as err:
            failures += 1
            log.warning("rep %d %s grid=%s failed: %s", rep, est, grid, err)
            records.append({"rep": rep, "estimator": est, "grid": grid, "metric": "failed", "value": 1.0})

    ests = cfg.estimators
    if "ols" in ests:
        guarded("ols", None, lambda: emit("ols", None, ols_fit(x, design).gamma_hat))
    if "oracle_gls" in ests:
        def _oracle():
            r = gls_fit(x, design, st.b_inv)
            emit("oracle_gls", None, r.gamma_hat, r.t_stats, st.b_inv, r.design_effect)
        guarded("oracle_gls", None, _oracle)
    if "unpaired_t" in ests:
        def _unp():
            tt = unpaired_t(x, design)
            emit("unpaired_t", None, ols_fit(x, design).gamma_hat, tt.t_stats)
        guarded("unpaired_t", None, _unp)
    if "paired_t" in ests:
        def _pair():
            lab = design.labels
            pairs = list(zip(np.flatnonzero(lab == 1), np.flatnonzero(lab == 2)))
            tt = paired_t(x, pairs)
            emit("paired_t", None, ols_fit(x, design).gamma_hat, tt.t_stats)
        guarded("paired_t", None, _pair)
    for f in cfg.penalty_grid:
        pol = _policy(cfg, f)
        if "alg1" in ests:
            def _a1():
                r = algorithm1(x, design, pol, truth=st.truth)
                emit("alg1", f, r.gls.gamma_hat, r.gls.t_stats, r.gemini.b_inv, r.gls.design_effect)
            guarded("alg1", f, _a1)
        if "alg2" in ests:
            def _a2():
                c = Alg2Config(threshold=cfg.alg2_threshold, top_k=cfg.alg2_top_k,
                               multiplier=cfg.alg2_threshold_multiplier,
                               penalty_stage1=_policy(cfg, cfg.alg2_stage1_multiplier),
                               penalty_stage4=pol)
                r = algorithm2(x, design, c, truth=st.truth)
                emit("alg2", f, r.gls.gamma_hat, r.gls.t_stats, r.gemini.b_inv, r.gls.design_effect)
                records.append({"rep": rep, "estimator": "alg2", "grid": f, "metric": "n_selected",
                                "value": float(r.selection.j0.size)})
            guarded("alg2", f, _a2)
        if "oracle_modsel" in ests:
            def _om():
                lam = penalty_value(pol, st.n, st.m, design.n_min, st.truth)
                fit = fit_gemini(center(x, design, "model_selection", st.support), lam)
                r = gls_fit(x, design, fit.b_inv)
                emit("oracle_modsel", f, r.gamma_hat, r.t_stats, fit.b_inv, r.design_effect)
            guarded("oracle_modsel", f, _om)
    return records, nulls, rocs, failures


def run_simulation(config: SimConfig, workers: int | None = None) -> SimReport:
    """Run all replications; results are merged in replication order."""
    st = _Setting(config)
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    workers = workers or config.workers
    jobs = [(config, st, rep, seeds[rep]) for rep in range(config.replications)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _replicate(*a), jobs))
    else:
        results = [_replicate(*a) for a in jobs]
    records, failures = [], 0
    nulls: dict[str, list] = {}
    rocs: dict[str, list] = {}
    for rec, nl, rc, fl in results:
        records.extend(rec)
        failures += fl
        for k, v in nl.items():
            nulls.setdefault(k, []).append(v)
        for k, v in rc.items():
            rocs.setdefault(k, []).append(v)
    return SimReport(
        config, records, failures,
        {k: np.concatenate(v) for k, v in nulls.items()},
        {k: np.mean(v, axis=0) for k, v in rocs.items()},
    )
