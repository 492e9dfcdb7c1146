"""Population covariance structures and matrix-variate sampling.

Correlation matrices are plain symmetric ``numpy`` arrays with unit
diagonal; :func:`check_correlation` enforces the invariants.  Data are
drawn as ``X = M + B^{1/2} Z A^{1/2}`` with symmetric square roots.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np

from .design import TwoGroupDesign
from .errors import InvalidParameterError

NOISE_KINDS = ("gaussian", "rademacher", "uniform")


def check_correlation(c: np.ndarray, *, name: str = "correlation") -> np.ndarray:
    """Validate symmetry, unit diagonal and positive definiteness."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidParameterError(f"{name} must be square")
    if not np.allclose(c, c.T, atol=1e-12, rtol=0):
        raise InvalidParameterError(f"{name} is not symmetric")
    if not np.all(np.diag(c) == 1.0):
        raise InvalidParameterError(f"{name} does not have unit diagonal")
    if not is_positive_definite(c):
        raise InvalidParameterError(f"{name} is not positive definite")
    return c


def is_positive_definite(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def cov_to_corr(b: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(b))
    c = b / np.outer(d, d)
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    return c


def ar1_correlation(n: int, rho: float) -> np.ndarray:
    """``B_ij = rho^|i-j|``; the inverse is tridiagonal (a chain graph)."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if not abs(rho) < 1:
        raise InvalidParameterError(f"AR1 parameter must lie in (-1, 1), got {rho}")
    idx = np.arange(n)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def star_block_correlation(n_blocks: int, block_size: int, rho: float = 0.5) -> np.ndarray:
    """Block-diagonal correlation whose blocks have star-shaped inverses.

    The first index of each block is the hub: hub edges get ``rho``, every
    other off-diagonal pair in the block gets ``rho**2``.
    """
    if n_blocks < 1 or block_size < 1:
        raise InvalidParameterError("n_blocks and block_size must be >= 1")
    if not 0 < rho < 1:
        raise InvalidParameterError(f"star-block rho must lie in (0, 1), got {rho}")
    block = np.full((block_size, block_size), rho * rho)
    block[0, :] = rho
    block[:, 0] = rho
    np.fill_diagonal(block, 1.0)
    return np.kron(np.eye(n_blocks), block)


def _precision_to_correlation(omega: np.ndarray) -> np.ndarray:
    # invert the precision, then rescale that covariance to unit diagonal
    return cov_to_corr(np.linalg.inv(omega))


def _edge_precision(n: int, edges, weights) -> np.ndarray:
    omega = 0.25 * np.eye(n)
    for (i, j), w in zip(edges, weights):
        omega[i, j] -= w
        omega[j, i] -= w
        omega[i, i] += w
        omega[j, j] += w
    return omega


def erdos_renyi_correlation(
    n: int, d: int, w_min: float = 0.6, w_max: float = 0.8, seed=None
) -> np.ndarray:
    """Random concentration-matrix model on ``d`` uniformly chosen edges.

    Starting from ``0.25 I``, each edge ``(i, j)`` with weight
    ``w ~ U[w_min, w_max)`` subtracts ``w`` off-diagonal and adds ``w`` to
    both diagonal entries, which keeps the precision diagonally dominant.
    """
    n_pairs = n * (n - 1) // 2
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if not 0 <= d <= n_pairs:
        raise InvalidParameterError(f"d={d} edges requested but only {n_pairs} available")
    if not 0 < w_min <= w_max:
        raise InvalidParameterError("need 0 < w_min <= w_max")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    picks = rng.choice(n_pairs, size=d, replace=False)
    weights = rng.uniform(w_min, w_max, size=d)
    edges = zip(iu[picks], ju[picks])
    return _precision_to_correlation(_edge_precision(n, edges, weights))


def twin_pair_correlation(
    n_pairs: int, extra_edges: int = 0, w_min: float = 0.6, w_max: float = 0.8, seed=None
) -> np.ndarray:
    """Sample correlation for twin-pair studies (sample ``i`` paired with ``i + n/2``).

    Uses the same edge-weight construction as :func:`erdos_renyi_correlation`
    with every twin pair forced into the graph plus ``extra_edges`` random
    non-twin edges.  Serves as a stand-in for a covariance estimated from a
    discordant-twin expression study.
    """
    n = 2 * n_pairs
    twins = [(i, i + n_pairs) for i in range(n_pairs)]
    others = [(i, j) for i in range(n) for j in range(i + 1, n) if j != i + n_pairs]
    if not 0 <= extra_edges <= len(others):
        raise InvalidParameterError("too many extra edges requested")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(others), size=extra_edges, replace=False)
    edges = twins + [others[k] for k in picks]
    weights = rng.uniform(w_min, w_max, size=len(edges))
    return _precision_to_correlation(_edge_precision(n, edges, weights))


def correlation_from_spec(spec: Mapping[str, Any]) -> np.ndarray:
    """Build a structure from a JSON-style spec such as ``{"kind": "ar1", "n": 80, "rho": 0.8}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "ar1":
            return ar1_correlation(spec["n"], spec["rho"])
        if kind in ("star_block", "starblock"):
            return star_block_correlation(spec["n_blocks"], spec["block_size"], spec.get("rho", 0.5))
        if kind in ("erdos_renyi", "er"):
            return erdos_renyi_correlation(
                spec["n"], spec.get("d", spec["n"]), spec.get("w_min", 0.6),
                spec.get("w_max", 0.8), spec.get("seed", 0),
            )
        if kind == "twin_pairs":
            return twin_pair_correlation(
                spec["n_pairs"], spec.get("extra_edges", 0), spec.get("w_min", 0.6),
                spec.get("w_max", 0.8), spec.get("seed", 0),
            )
        if kind == "identity":
            return np.eye(spec["n"])
        if kind == "csv":
            return read_matrix_csv(spec["path"])
    except KeyError as exc:
        raise InvalidParameterError(f"structure spec {kind!r} is missing field {exc}") from None
    raise InvalidParameterError(f"unknown structure kind {kind!r}")


def structure_dim(spec: Mapping[str, Any]) -> int:
    if spec.get("kind") in ("star_block", "starblock"):
        return spec["n_blocks"] * spec["block_size"]
    if spec.get("kind") == "twin_pairs":
        return 2 * spec["n_pairs"]
    return spec["n"]


def sym_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition."""
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        return np.diag(np.sqrt(np.diag(a)))
    w, v = np.linalg.eigh(a)
    if w.min() <= 0:
        raise InvalidParameterError("matrix is not positive definite")
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2


@dataclass
class KroneckerModel:
    """Separable covariance ``A ⊗ B`` of ``vec(X)``; A is m×m, B is n×n."""

    A: np.ndarray
    B: np.ndarray
    normalized: bool = False

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @cached_property
    def A_sqrt(self) -> np.ndarray:
        return sym_sqrt(self.A)

    @cached_property
    def B_sqrt(self) -> np.ndarray:
        return sym_sqrt(self.B)

    @cached_property
    def B_inv(self) -> np.ndarray:
        b_inv = np.linalg.inv(self.B)
        return (b_inv + b_inv.T) / 2


def normalize_kronecker(A: np.ndarray, B: np.ndarray) -> KroneckerModel:
    """Trade scale between factors so that ``trace(A) == m``; ``A ⊗ B`` is unchanged."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    for name, mat in (("A", A), ("B", B)):
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or not is_positive_definite(mat):
            raise InvalidParameterError(f"{name} must be a positive definite matrix")
    m = A.shape[0]
    tr = np.trace(A)
    if tr == m:
        return KroneckerModel(A.copy(), B.copy(), normalized=True)
    return KroneckerModel((m / tr) * A, (tr / m) * B, normalized=True)


@dataclass
class MeanSpec:
    """Two-group mean ``M = 1 mu^T + 0.5 delta_n gamma^T``."""

    mu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        self.gamma = np.asarray(self.gamma, dtype=float).ravel()
        if self.mu.shape != self.gamma.shape:
            raise InvalidParameterError("mu and gamma must have the same length")

    @property
    def m(self) -> int:
        return self.gamma.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.gamma)

    @property
    def d0(self) -> int:
        return int(np.count_nonzero(self.gamma))

    @classmethod
    def sparse(cls, m: int, d0: int, effect: float | np.ndarray, mu: float = 0.0) -> "MeanSpec":
        """First ``d0`` variables carry difference ``effect`` (scalar or per-variable)."""
        gamma = np.zeros(m)
        gamma[:d0] = effect
        return cls(np.full(m, mu), gamma)

    @classmethod
    def exp_decay(cls, m: int, max_diff: float = 5.0, rate: float = 3 / 2000,
                  n_nonzero: int | None = None) -> "MeanSpec":
        """``gamma_j = C exp(-rate j)`` for ``j = 1..n_nonzero``, with C making ``gamma_1 = max_diff``."""
        k = m if n_nonzero is None else n_nonzero
        j = np.arange(1, k + 1)
        gamma = np.zeros(m)
        gamma[:k] = max_diff * np.exp(-rate * (j - 1))
        return cls(np.zeros(m), gamma)

    def matrix(self, design: TwoGroupDesign) -> np.ndarray:
        return np.outer(np.ones(design.n), self.mu) + 0.5 * np.outer(design.delta_n, self.gamma)


@dataclass
class DataMatrix:
    """An n×m data matrix (samples by variables) with group labels."""

    values: np.ndarray
    groups: np.ndarray
    columns: list[str] | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidParameterError("data must be a 2-d matrix")
        if not np.isfinite(self.values).all():
            raise InvalidParameterError("data contain non-finite entries")
        self.groups = np.asarray(self.groups).astype(int).ravel()
        if self.groups.size != self.values.shape[0]:
            raise InvalidParameterError("one group label per row is required")
        self.design  # validates labels

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @cached_property
    def design(self) -> TwoGroupDesign:
        return TwoGroupDesign(self.groups)


def draw_noise(shape, noise: str, rng: np.random.Generator) -> np.ndarray:
    """IID mean-0 variance-1 entries."""
    if noise == "gaussian":
        return rng.standard_normal(shape)
    if noise == "rademacher":
        return 2.0 * rng.integers(0, 2, size=shape) - 1.0
    if noise == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    raise InvalidParameterError(f"unknown noise kind {noise!r}; expected one of {NOISE_KINDS}")


def sample_matrix_variate(
    mean: MeanSpec,
    model: KroneckerModel,
    design: TwoGroupDesign,
    noise: str = "gaussian",
    seed=None,
    z: np.ndarray | None = None,
) -> DataMatrix:
    """Draw ``X = M + B^{1/2} Z A^{1/2}``.

    ``seed`` may be anything ``numpy.random.default_rng`` accepts.  ``z``
    overrides the noise draw (used for noiseless checks).
    """
    n, m = design.n, mean.m
    if model.m != m or model.n != n:
        raise InvalidParameterError(
            f"dimension mismatch: mean has m={m}, design n={n}, model is "
            f"A {model.m}x{model.m}, B {model.n}x{model.n}"
        )
    if z is None:
        z = draw_noise((n, m), noise, np.random.default_rng(seed))
    elif z.shape != (n, m):
        raise InvalidParameterError("z has the wrong shape")
    x = mean.matrix(design) + model.B_sqrt @ z @ model.A_sqrt
    return DataMatrix(x, design.labels)


def write_matrix_csv(path, mat: np.ndarray) -> None:
    """Headerless CSV with shortest round-trip float formatting."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as fh:
        for row in mat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
