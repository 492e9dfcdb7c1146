"""Algorithm 1 (group centering), Algorithm 2 (model-selection centering),
penalty recipes and the gene-set stability iteration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .covmodel import DataMatrix, normalize_kronecker
from .design import TwoGroupDesign
from .errors import GemglsError, InvalidParameterError, PreconditionError, attribute
from .gemini import CenteredData, GeminiFit, center, fit_gemini, group_means
from .glasso import SolverConfig
from .gls import GlsResult, bh_adjust, gls_fit, gls_global_mean

ZERO_TOL = 1e-10


@dataclass
class PenaltyPolicy:
    """How to pick the graphical-lasso penalty for the sample-wise fit.

    ``plugin``: ``multiplier * (sqrt(log m / m) + 3 / n)``.
    ``oracle``: ``multiplier * (C_A K sqrt(log(m v n)) / sqrt(m) + |B|_1 / n_min)``
    with ``C_A = sqrt(m) |A|_F / tr(A)``; needs the true ``(A, B)``.
    ``explicit``: ``value``.
    """

    kind: str = "plugin"
    multiplier: float = 0.5
    value: float | None = None
    subgaussian_k: float = 1.0

    def __post_init__(self):
        if self.kind not in ("plugin", "oracle", "explicit"):
            raise InvalidParameterError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "explicit":
            if self.value is None or self.value < 0:
                raise InvalidParameterError("explicit penalty needs a non-negative value")
        elif not self.multiplier > 0:
            raise InvalidParameterError("penalty multiplier must be positive")

    @classmethod
    def explicit(cls, value: float) -> "PenaltyPolicy":
        return cls(kind="explicit", value=float(value))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "multiplier": self.multiplier, "value": self.value,
                "subgaussian_k": self.subgaussian_k}


def penalty_value(policy: PenaltyPolicy, n: int, m: int, n_min: int | None = None, truth=None) -> float:
    if policy.kind == "explicit":
        return float(policy.value)
    if policy.kind == "plugin":
        return float(policy.multiplier * (np.sqrt(np.log(m) / m) + 3.0 / n))
    if truth is None:
        raise PreconditionError("oracle penalty needs the true (A, B)")
    if n_min is None:
        raise PreconditionError("oracle penalty needs n_min")
    model = normalize_kronecker(*truth)
    A, B = model.A, model.B
    c_a = np.sqrt(m) * np.linalg.norm(A) / np.trace(A)
    b_l1 = np.abs(B).sum(axis=0).max()
    return float(policy.multiplier * (
        c_a * policy.subgaussian_k * np.sqrt(np.log(max(m, n))) / np.sqrt(m) + b_l1 / n_min
    ))


def penalty_value_a(policy: PenaltyPolicy | float, n: int, m: int, n_min: int, truth=None) -> float:
    """Penalty for the variable-wise (m×m) fit.

    ``oracle`` uses ``C_B K sqrt(log(m v n)) / sqrt(n) + |B|_1 / n_min``;
    ``plugin`` uses ``sqrt(log(m v n) / n)``.
    """
    if not isinstance(policy, PenaltyPolicy):
        return float(policy)
    if policy.kind == "explicit":
        return float(policy.value)
    if policy.kind == "plugin":
        return float(policy.multiplier * np.sqrt(np.log(max(m, n)) / n))
    if truth is None:
        raise PreconditionError("oracle penalty needs the true (A, B)")
    model = normalize_kronecker(*truth)
    B = model.B
    c_b = np.sqrt(n) * np.linalg.norm(B) / np.trace(B)
    b_l1 = np.abs(B).sum(axis=0).max()
    return float(policy.multiplier * (
        c_b * policy.subgaussian_k * np.sqrt(np.log(max(m, n))) / np.sqrt(n) + b_l1 / n_min
    ))


class FitResult(NamedTuple):
    gemini: GeminiFit
    gls: GlsResult
    centered: CenteredData


def _check_shapes(x: DataMatrix | np.ndarray, design: TwoGroupDesign) -> np.ndarray:
    xv = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=float)
    n, m = xv.shape
    if n != design.n:
        raise InvalidParameterError("design and data disagree on n")
    if m < 3 or n < 4 or design.n_min < 2:
        raise InvalidParameterError("need m >= 3, n >= 4 and at least two samples per group")
    return xv


def _run_stage(xv, design, cen_args, lam_b, lam_a, config, tag):
    step = "centering"
    try:
        cen = center(xv, design, *cen_args)
        step = "covariance"
        fit = fit_gemini(cen, lam_b, lam_a, config)
        step = "gls"
        res = gls_fit(xv, design, fit.b_inv)
    except GemglsError as err:
        raise attribute(err, f"{tag}:{step}")
    return FitResult(fit, res, cen)


def algorithm1(
    x: DataMatrix | np.ndarray,
    design: TwoGroupDesign,
    penalty: PenaltyPolicy | float | None = None,
    penalty_a: PenaltyPolicy | float | None = None,
    config: SolverConfig | None = None,
    truth=None,
) -> FitResult:
    """Group-center every column, estimate ``B^-1`` and run GLS.

    ``penalty_a`` switches on the variable-wise fit of ``A^-1``.
    """
    xv = _check_shapes(x, design)
    n, m = xv.shape
    lam_b = _resolve(PenaltyPolicy() if penalty is None else penalty, n, m, design, truth)
    lam_a = None if penalty_a is None else penalty_value_a(penalty_a, n, m, design.n_min, truth)
    return _run_stage(xv, design, ("group",), lam_b, lam_a, config, "algorithm1")


def _resolve(p, n, m, design, truth) -> float:
    if isinstance(p, PenaltyPolicy):
        return penalty_value(p, n, m, design.n_min, truth)
    return float(p)


def count_offdiag(mat: np.ndarray, tol: float = ZERO_TOL) -> int:
    off = ~np.eye(mat.shape[0], dtype=bool)
    return int(np.count_nonzero(np.abs(mat[off]) > tol))


def tau_components(b_init, b_inv_init, design: TwoGroupDesign, m: int) -> tuple[float, float]:
    """The two summands of the plug-in threshold (support term, lower bound)."""
    from .gls import _omega

    b_l1 = np.abs(b_init).sum(axis=0).max()
    s0 = count_offdiag(b_inv_init)
    first = (np.sqrt(np.log(m)) / np.sqrt(m) + b_l1 / design.n_min) * np.sqrt(
        design.n_ratio * s0 / design.n_min
    )
    omega = _omega(design, b_inv_init)
    lower = np.sqrt(np.log(m)) * np.sqrt(np.linalg.norm(omega, 2))
    return float(first), float(lower)


def tau_init(b_init, b_inv_init, design: TwoGroupDesign, m: int, multiplier: float = 1.0,
             lower_bound_only: bool = False) -> float:
    """Plug-in threshold for selecting strong mean effects (constant fixed at 1)."""
    if not 0 < multiplier <= 1:
        raise InvalidParameterError("threshold multiplier must lie in (0, 1]")
    first, lower = tau_components(b_init, b_inv_init, design, m)
    return multiplier * (lower if lower_bound_only else first + lower)


@dataclass
class SelectionResult:
    j0: np.ndarray
    j1: np.ndarray
    tau: float | None
    gamma_init: np.ndarray


def rank_by_magnitude(gamma: np.ndarray) -> np.ndarray:
    """Indices sorted by decreasing ``|gamma|``; ties go to the lower index."""
    return np.lexsort((np.arange(gamma.size), -np.abs(gamma)))


def select_genes(gamma_init: np.ndarray, tau: float | None = None, top_k: int | None = None) -> SelectionResult:
    """Threshold ``|gamma| > 2 tau``, or keep the ``top_k`` largest magnitudes."""
    g = np.asarray(gamma_init, dtype=float)
    m = g.size
    if top_k is not None:
        if not 0 <= top_k <= m:
            raise InvalidParameterError("top_k must lie in [0, m]")
        j0 = np.sort(rank_by_magnitude(g)[:top_k])
    else:
        if tau is None or not tau > 0:
            raise InvalidParameterError("threshold selection needs tau > 0")
        j0 = np.flatnonzero(np.abs(g) > 2 * tau)
    j1 = np.setdiff1d(np.arange(m), j0)
    return SelectionResult(j0, j1, tau, g)


@dataclass
class Alg2Config:
    """``threshold`` is ``plugin``, ``lower_bound`` or ``top_k``."""

    threshold: str = "plugin"
    multiplier: float = 1.0
    top_k: int | None = None
    penalty_stage1: PenaltyPolicy = field(default_factory=lambda: PenaltyPolicy(multiplier=0.5))
    penalty_stage4: PenaltyPolicy = field(default_factory=lambda: PenaltyPolicy(multiplier=0.25))
    solver: SolverConfig | None = None

    def __post_init__(self):
        if self.threshold not in ("plugin", "lower_bound", "top_k"):
            raise InvalidParameterError(f"unknown threshold mode {self.threshold!r}")
        if self.threshold == "top_k" and (self.top_k is None or self.top_k < 0):
            raise InvalidParameterError("top_k mode needs a non-negative count")
        if not 0 < self.multiplier <= 1:
            raise InvalidParameterError("threshold multiplier must lie in (0, 1]")


class Alg2Result(NamedTuple):
    selection: SelectionResult
    gemini: GeminiFit
    gls: GlsResult
    initial: FitResult
    centered: CenteredData


def algorithm2(x: DataMatrix | np.ndarray, design: TwoGroupDesign, config: Alg2Config | None = None,
               truth=None) -> Alg2Result:
    """Run Algorithm 1, group-center only the strong effects, refit."""
    config = config or Alg2Config()
    xv = _check_shapes(x, design)
    n, m = xv.shape
    if config.threshold == "top_k" and config.top_k > m:
        raise InvalidParameterError("top_k exceeds m")
    init = algorithm1(xv, design, config.penalty_stage1, config=config.solver, truth=truth)
    try:
        if config.threshold == "top_k":
            sel = select_genes(init.gls.gamma_hat, top_k=config.top_k)
        else:
            b_inv0 = init.gemini.b_inv
            tau = tau_init(np.linalg.inv(b_inv0), b_inv0, design, m, config.multiplier,
                           lower_bound_only=config.threshold == "lower_bound")
            sel = select_genes(init.gls.gamma_hat, tau)
    except GemglsError as err:
        raise attribute(err, "algorithm2:selection")
    lam4 = _resolve(config.penalty_stage4, n, m, design, truth)
    stage = _run_stage(xv, design, ("model_selection", sel.j0), lam4, None, config.solver, "algorithm2")
    return Alg2Result(sel, stage.gemini, stage.gls, init, stage.centered)


@dataclass
class StabilityReport:
    schedule: list[int]
    top: int
    rankings: list[np.ndarray]
    overlap: np.ndarray
    gamma_hats: list[np.ndarray]
    fdr_counts: dict[float, list[int]]
    true_positives: list[int] | None = None
    false_positives: list[int] | None = None

    def to_dict(self) -> dict:
        return {
            "schedule": list(self.schedule),
            "top": self.top,
            "overlap": self.overlap.tolist(),
            "fdr_counts": {repr(k): v for k, v in self.fdr_counts.items()},
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
        }


def _stability_path(xv, design, schedule, lam, config, fdr_level):
    n, m = xv.shape
    lab = design.labels
    beta = group_means(xv, design)
    mu = xv.mean(axis=0)
    gamma = beta[0] - beta[1]
    gammas, counts = [], []
    for i, k in enumerate(schedule):
        try:
            top = rank_by_magnitude(gamma)[:k]
            mask = np.zeros(m, dtype=bool)
            mask[top] = True
            m_hat = np.where(mask[None, :], beta[lab - 1], mu[None, :])
            fit = fit_gemini(xv - m_hat, lam, None, config)
            res = gls_fit(xv, design, fit.b_inv)
        except GemglsError as err:
            raise attribute(err, f"stability:iteration{i + 1}")
        beta = res.beta_hat
        mu = gls_global_mean(xv, fit.b_inv)
        gamma = res.gamma_hat
        gammas.append(gamma)
        counts.append(int(np.sum(bh_adjust(res.p_values) <= fdr_level)))
    return gammas, counts


def stability_iteration(
    x: DataMatrix | np.ndarray,
    design: TwoGroupDesign,
    schedule: Sequence[int],
    penalty: PenaltyPolicy | float,
    top: int = 10,
    lambdas: Sequence[float] = (),
    fdr_level: float = 0.1,
    support: Sequence[int] | None = None,
    config: SolverConfig | None = None,
) -> StabilityReport:
    """Successively group-center fewer of the top-ranked variables.

    Returns the top-``top`` overlap matrix across iterations for ``penalty``
    and, for ``penalty`` plus every value in ``lambdas``, the number of BH
    rejections at ``fdr_level`` per iteration.
    """
    xv = _check_shapes(x, design)
    n, m = xv.shape
    schedule = [int(k) for k in schedule]
    if not schedule or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidParameterError("schedule must be non-empty and strictly decreasing")
    if schedule[0] > m or schedule[-1] < 0:
        raise InvalidParameterError("schedule counts must lie in [0, m]")
    lam = _resolve(penalty, n, m, design, None)
    gammas, counts = _stability_path(xv, design, schedule, lam, config, fdr_level)
    rankings = [rank_by_magnitude(g)[:top] for g in gammas]
    k = len(schedule)
    overlap = np.array([[np.intersect1d(rankings[i], rankings[j]).size for j in range(k)]
                        for i in range(k)])
    fdr = {lam: counts}
    for extra in lambdas:
        if float(extra) not in fdr:
            fdr[float(extra)] = _stability_path(xv, design, schedule, float(extra), config, fdr_level)[1]
    tp = fp = None
    if support is not None:
        sup = np.asarray(support, dtype=int)
        tp = [int(np.intersect1d(r, sup).size) for r in rankings]
        fp = [top - t for t in tp]
    return StabilityReport(schedule, top, rankings, overlap, gammas, fdr, tp, fp)
