"""Centering, Gram matrices and Gemini rescaling.

Turns a data matrix into penalized estimates of the sample-wise inverse
covariance ``B^{-1}`` (and optionally the variable-wise ``A^{-1}``) by
fitting the graphical lasso to row and column sample correlations and
rescaling with the sample standard deviations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .covmodel import DataMatrix
from .design import TwoGroupDesign
from .errors import DegenerateVarianceError, InvalidParameterError, PreconditionError
from .glasso import PenalizedPrecisionFit, SolverConfig, glasso_fit

__all__ = [
    "TwoGroupDesign",
    "CenteredData",
    "GeminiFit",
    "KroneckerEstimate",
    "center",
    "sample_covariances",
    "sample_correlation",
    "fit_gemini",
    "rescale_inverses",
    "kronecker_estimate",
]

SCHEMES = ("group", "global", "model_selection")
VARIANCE_FLOOR = 1e-12


@dataclass
class CenteredData:
    x_cen: np.ndarray
    scheme: str
    m_hat: np.ndarray
    j0: np.ndarray | None = None


def _as_values(x) -> np.ndarray:
    return x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=float)


def group_means(x: np.ndarray, design: TwoGroupDesign) -> np.ndarray:
    """2×m matrix of per-group column means."""
    lab = design.labels
    return np.vstack([x[lab == 1].mean(axis=0), x[lab == 2].mean(axis=0)])


def center(
    x: DataMatrix | np.ndarray,
    design: TwoGroupDesign,
    scheme: str = "group",
    j0: Sequence[int] | np.ndarray | None = None,
) -> CenteredData:
    """Remove a mean estimate from each column.

    ``group`` subtracts the per-group sample means, ``global`` the grand
    mean, and ``model_selection`` group-centers the columns in ``j0`` and
    globally centers the rest.
    """
    x = _as_values(x)
    if x.shape[0] != design.n:
        raise InvalidParameterError("design and data disagree on n")
    if scheme not in SCHEMES:
        raise InvalidParameterError(f"unknown centering scheme {scheme!r}")
    m = x.shape[1]
    rows = design.labels - 1
    group_hat = group_means(x, design)[rows]
    global_hat = np.broadcast_to(x.mean(axis=0), x.shape)
    if scheme == "group":
        m_hat = group_hat
    elif scheme == "global":
        m_hat = np.array(global_hat)
    else:
        if j0 is None:
            raise InvalidParameterError("model_selection centering needs j0")
        j0 = np.unique(np.asarray(j0, dtype=int))
        if j0.size and (j0.min() < 0 or j0.max() >= m):
            raise InvalidParameterError("j0 indices out of range")
        mask = np.zeros(m, dtype=bool)
        mask[j0] = True
        m_hat = np.where(mask[None, :], group_hat, global_hat)
    return CenteredData(x - m_hat, scheme, m_hat, j0)


def sample_covariances(cen: CenteredData | np.ndarray, with_a: bool = True):
    """Return ``(S_B, S_A)`` = ``(X X'/m, X'X/n)``; ``S_A`` is None unless ``with_a``."""
    xc = cen.x_cen if isinstance(cen, CenteredData) else np.asarray(cen, dtype=float)
    n, m = xc.shape
    s_b = xc @ xc.T / m
    s_b = (s_b + s_b.T) / 2
    s_a = None
    if with_a:
        s_a = xc.T @ xc / n
        s_a = (s_a + s_a.T) / 2
    return s_b, s_a


def sample_correlation(s: np.ndarray) -> np.ndarray:
    d = np.diag(s).astype(float)
    floor = VARIANCE_FLOOR * max(float(d.max(initial=0.0)), 0.0)
    bad = np.flatnonzero(~(d > floor))
    if bad.size:
        raise DegenerateVarianceError(
            f"zero or negative variance at index {bad[:10].tolist()}", index=bad
        )
    r = np.sqrt(d)
    g = s / np.outer(r, r)
    g = (g + g.T) / 2
    np.fill_diagonal(g, 1.0)
    return g


@dataclass
class GeminiFit:
    s_b: np.ndarray
    gamma_hat_b: np.ndarray
    fit_b: PenalizedPrecisionFit
    w2: np.ndarray
    lam_b: float
    s_a: np.ndarray | None = None
    gamma_hat_a: np.ndarray | None = None
    fit_a: PenalizedPrecisionFit | None = None
    w1: np.ndarray | None = None
    lam_a: float | None = None
    b_inv: np.ndarray | None = None
    a_inv: np.ndarray | None = None

    @property
    def b_rho(self) -> np.ndarray:
        return self.fit_b.sigma

    @property
    def a_rho(self) -> np.ndarray | None:
        return None if self.fit_a is None else self.fit_a.sigma


def fit_gemini(
    cen: CenteredData | np.ndarray,
    lam_b: float,
    lam_a: float | None = None,
    config: SolverConfig | None = None,
) -> GeminiFit:
    """Penalized correlation fits plus rescaled inverses.

    ``lam_b`` penalizes the n×n sample-wise fit.  The m×m variable-wise fit
    runs only when ``lam_a`` is given.
    """
    xc = cen.x_cen if isinstance(cen, CenteredData) else np.asarray(cen, dtype=float)
    n, m = xc.shape
    s_b, s_a = sample_covariances(xc, with_a=lam_a is not None)
    gamma_b = sample_correlation(s_b)
    fit_b = glasso_fit(gamma_b, lam_b, config)
    fit = GeminiFit(
        s_b=s_b, gamma_hat_b=gamma_b, fit_b=fit_b, lam_b=float(lam_b),
        w2=np.sqrt(m) * np.sqrt(np.diag(s_b)),
    )
    if lam_a is not None:
        gamma_a = sample_correlation(s_a)
        fit.s_a, fit.gamma_hat_a = s_a, gamma_a
        fit.fit_a = glasso_fit(gamma_a, lam_a, config)
        fit.w1 = np.sqrt(n) * np.sqrt(np.diag(s_a))
        fit.lam_a = float(lam_a)
    return rescale_inverses(fit, xc)


def rescale_inverses(fit: GeminiFit, x_cen: np.ndarray) -> GeminiFit:
    """``B^-1 = m W2^-1 theta_B W2^-1`` and ``A^-1 = (|X|_F^2/m) W1^-1 theta_A W1^-1``.

    ``W1``/``W2`` are stored as their diagonals; ``theta`` is the solver's
    precision for the penalized correlation.
    """
    if fit is None or fit.fit_b is None:
        raise PreconditionError("a penalized fit for B is required before rescaling")
    x_cen = np.asarray(x_cen, dtype=float)
    n, m = x_cen.shape
    w2_inv = 1.0 / fit.w2
    b_inv = m * fit.fit_b.theta * np.outer(w2_inv, w2_inv)
    out = replace(fit, b_inv=(b_inv + b_inv.T) / 2)
    if fit.fit_a is not None:
        fro2 = float(np.sum(x_cen * x_cen))
        w1_inv = 1.0 / fit.w1
        a_inv = (fro2 / m) * fit.fit_a.theta * np.outer(w1_inv, w1_inv)
        out.a_inv = (a_inv + a_inv.T) / 2
    return out


@dataclass
class KroneckerEstimate:
    """``(a_factor ⊗ b_factor) / divisor`` kept in factored form."""

    a_factor: np.ndarray
    b_factor: np.ndarray
    divisor: float

    def trace(self) -> float:
        return float(np.trace(self.a_factor) * np.trace(self.b_factor) / self.divisor)

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.a_factor) * np.linalg.norm(self.b_factor) / self.divisor)

    def dense(self) -> np.ndarray:
        """Materialize the mn×mn matrix; only sensible for small problems."""
        return np.kron(self.a_factor, self.b_factor) / self.divisor

    def relative_frobenius_error(self, A: np.ndarray, B: np.ndarray) -> float:
        """``|est - A⊗B|_F / |A⊗B|_F`` without forming either product."""
        sa, sb, c = self.a_factor, self.b_factor, self.divisor
        est2 = np.sum(sa * sa) * np.sum(sb * sb) / c**2
        cross = np.sum(sa * A) * np.sum(sb * B) / c
        true2 = np.sum(A * A) * np.sum(B * B)
        return float(np.sqrt(max(est2 - 2 * cross + true2, 0.0) / true2))


def kronecker_estimate(fit: GeminiFit, x_cen: np.ndarray) -> KroneckerEstimate:
    if fit.fit_a is None or fit.fit_b is None:
        raise PreconditionError("both penalized correlation fits are required")
    fro2 = float(np.sum(np.asarray(x_cen) ** 2))
    if not fro2 > 0:
        raise DegenerateVarianceError("centered data have zero Frobenius norm")
    a_f = fit.a_rho * np.outer(fit.w1, fit.w1)
    b_f = fit.b_rho * np.outer(fit.w2, fit.w2)
    return KroneckerEstimate(a_f, b_f, fro2)
