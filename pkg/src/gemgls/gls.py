"""Group-mean estimation, Wald statistics, t tests and BH adjustment."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .covmodel import DataMatrix
from .design import DELTA, TwoGroupDesign
from .errors import DegenerateVarianceError, InvalidParameterError, SingularDesignError


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=float)


@dataclass
class GlsResult:
    beta_hat: np.ndarray  # 2 x m
    gamma_hat: np.ndarray
    omega_hat: np.ndarray  # (D' B^-1 D)^-1
    design_effect: float
    t_stats: np.ndarray
    p_values: np.ndarray
    fdr_adjusted: np.ndarray

    @property
    def se(self) -> float:
        return float(np.sqrt(self.design_effect))

    def rejections(self, q: float = 0.1) -> int:
        return int(np.sum(self.fdr_adjusted <= q))

    def write_csv(self, path, columns=None) -> None:
        m = self.gamma_hat.size
        names = columns or [f"V{j + 1}" for j in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "gamma_hat", "t", "p", "fdr"])
            for j in range(m):
                w.writerow([names[j], repr(float(self.gamma_hat[j])), repr(float(self.t_stats[j])),
                            repr(float(self.p_values[j])), repr(float(self.fdr_adjusted[j]))])

    def summary(self, q: float = 0.1) -> dict:
        return {
            "m": int(self.gamma_hat.size),
            "design_effect": float(self.design_effect),
            "omega_hat": self.omega_hat.tolist(),
            "fdr_level": q,
            "rejections": self.rejections(q),
        }


def _omega(design: TwoGroupDesign, b_inv: np.ndarray) -> np.ndarray:
    D = design.D
    q = D.T @ b_inv @ D
    q = (q + q.T) / 2
    det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
    scale = max(abs(q[0, 0] * q[1, 1]), abs(q[0, 1] * q[1, 0]))
    if not det > 1e-14 * scale or not np.isfinite(det):
        raise SingularDesignError("D' B^-1 D is singular or not positive definite")
    return np.array([[q[1, 1], -q[0, 1]], [-q[1, 0], q[0, 0]]]) / det


def design_effect(design: TwoGroupDesign, b_inv: np.ndarray) -> float:
    """``delta' (D' B^-1 D)^-1 delta``, the variance of the GLS difference."""
    om = _omega(design, np.asarray(b_inv, dtype=float))
    return float(DELTA @ om @ DELTA)


def gls_fit(x: DataMatrix | np.ndarray, design: TwoGroupDesign, b_inv: np.ndarray) -> GlsResult:
    """GLS group means ``(D'B^-1 D)^-1 D'B^-1 X`` and Wald statistics.

    P-values use the standard normal reference.
    """
    xv = _values(x)
    b_inv = np.asarray(b_inv, dtype=float)
    if b_inv.shape != (design.n, design.n) or xv.shape[0] != design.n:
        raise InvalidParameterError("b_inv, data and design disagree on n")
    omega = _omega(design, b_inv)
    beta = omega @ (design.D.T @ (b_inv @ xv))
    gamma = DELTA @ beta
    de = float(DELTA @ omega @ DELTA)
    if not de > 0:
        raise SingularDesignError("non-positive design effect")
    t = gamma / np.sqrt(de)
    p = 2 * stats.norm.sf(np.abs(t))
    return GlsResult(beta, gamma, omega, de, t, p, bh_adjust(p))


def gls_global_mean(x: DataMatrix | np.ndarray, b_inv: np.ndarray) -> np.ndarray:
    """GLS estimate of the grand means with an all-ones design."""
    xv = _values(x)
    w = b_inv @ np.ones(xv.shape[0])
    return (w @ xv) / w.sum()


def sd_ratio(b: np.ndarray, design: TwoGroupDesign) -> float:
    """``sqrt(u'Bu / delta'(D'B^-1 D)^-1 delta)``: OLS over GLS standard deviation."""
    b = np.asarray(b, dtype=float)
    u = design.contrast_weights
    return float(np.sqrt(u @ b @ u / design_effect(design, np.linalg.inv(b))))


@dataclass
class OlsResult:
    beta_hat: np.ndarray
    gamma_hat: np.ndarray


def ols_fit(x: DataMatrix | np.ndarray, design: TwoGroupDesign) -> OlsResult:
    xv = _values(x)
    lab = design.labels
    beta = np.vstack([xv[lab == 1].mean(axis=0), xv[lab == 2].mean(axis=0)])
    return OlsResult(beta, beta[0] - beta[1])


@dataclass
class TTestResult:
    t_stats: np.ndarray
    flavor: str
    dof: int

    @property
    def p_values(self) -> np.ndarray:
        return 2 * stats.t.sf(np.abs(self.t_stats), self.dof)


def unpaired_t(x: DataMatrix | np.ndarray, design: TwoGroupDesign) -> TTestResult:
    """Pooled-variance two-sample t statistic per column."""
    xv = _values(x)
    lab = design.labels
    n1, n2 = design.n1, design.n2
    if n1 + n2 <= 2:
        raise InvalidParameterError("need more than two samples")
    ols = ols_fit(xv, design)
    resid = xv - ols.beta_hat[lab - 1]
    pooled = np.sum(resid**2, axis=0) / (n1 + n2 - 2)
    bad = np.flatnonzero(~(pooled > 0))
    if bad.size:
        raise DegenerateVarianceError(f"zero pooled variance in columns {bad[:10].tolist()}", index=bad)
    t = ols.gamma_hat / np.sqrt(pooled) / np.sqrt(1 / n1 + 1 / n2)
    return TTestResult(t, "unpaired", n1 + n2 - 2)


def paired_t(x: DataMatrix | np.ndarray, pairing=None) -> TTestResult:
    """Paired t statistic on differences ``X[i] - X[i']``.

    ``pairing`` is a sequence of ``(i, i')`` row pairs; the default pairs
    row ``i`` with row ``i + n/2``.
    """
    xv = _values(x)
    n = xv.shape[0]
    if pairing is None:
        if n % 2:
            raise InvalidParameterError("default pairing needs an even number of rows")
        half = n // 2
        pairing = [(i, i + half) for i in range(half)]
    pairs = np.asarray(pairing, dtype=int).reshape(-1, 2)
    flat = pairs.ravel()
    if np.unique(flat).size != flat.size or flat.min() < 0 or flat.max() >= n:
        raise InvalidParameterError("pairing must be a bijection between distinct rows")
    k = pairs.shape[0]
    if k < 2:
        raise InvalidParameterError("need at least two pairs")
    d = xv[pairs[:, 0]] - xv[pairs[:, 1]]
    dbar = d.mean(axis=0)
    ss = np.sum((d - dbar) ** 2, axis=0)
    bad = np.flatnonzero(~(ss > 1e-24 * np.maximum(1.0, np.sum(d * d, axis=0))))
    if bad.size:
        raise DegenerateVarianceError(f"zero spread of differences in columns {bad[:10].tolist()}", index=bad)
    t = dbar * np.sqrt(k - 1) / np.sqrt(ss)
    return TTestResult(t, "paired", k - 1)


def bh_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in the input order."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size and (np.any(~np.isfinite(p)) or p.min() < 0 or p.max() > 1):
        raise InvalidParameterError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out
