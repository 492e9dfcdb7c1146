"""Two-group design matrices and centering projections."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

DELTA = np.array([1.0, -1.0])


@dataclass(frozen=True)
class TwoGroupDesign:
    """Group membership for ``n`` samples, labels in {1, 2}.

    Groups need not be contiguous; ``u`` and ``v`` are the indicator
    vectors of group 1 and group 2 and ``D = [u, v]``.
    """

    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels).astype(int).ravel()
        if labels.size == 0 or not np.isin(labels, (1, 2)).all():
            raise InvalidParameterError("group labels must be 1 or 2")
        if not (labels == 1).any() or not (labels == 2).any():
            raise InvalidParameterError("both groups must be nonempty")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def contiguous(cls, n1: int, n2: int) -> "TwoGroupDesign":
        """First ``n1`` samples in group 1, the following ``n2`` in group 2."""
        if n1 < 1 or n2 < 1:
            raise InvalidParameterError("both groups must be nonempty")
        return cls(np.r_[np.ones(n1, int), np.full(n2, 2)])

    @classmethod
    def balanced(cls, n: int) -> "TwoGroupDesign":
        return cls.contiguous(n // 2, n - n // 2)

    @classmethod
    def random_balanced(cls, n: int, rng: np.random.Generator) -> "TwoGroupDesign":
        labels = np.r_[np.ones(n // 2, int), np.full(n - n // 2, 2)]
        return cls(rng.permutation(labels))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def n1(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def n2(self) -> int:
        return int((self.labels == 2).sum())

    @property
    def n_min(self) -> int:
        return min(self.n1, self.n2)

    @property
    def n_max(self) -> int:
        return max(self.n1, self.n2)

    @property
    def n_ratio(self) -> float:
        return self.n_max / self.n_min

    @property
    def u(self) -> np.ndarray:
        return (self.labels == 1).astype(float)

    @property
    def v(self) -> np.ndarray:
        return (self.labels == 2).astype(float)

    @property
    def D(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    @property
    def delta(self) -> np.ndarray:
        return DELTA.copy()

    @property
    def delta_n(self) -> np.ndarray:
        """+1 for group-1 rows, -1 for group-2 rows."""
        return self.u - self.v

    @property
    def contrast_weights(self) -> np.ndarray:
        """Weights giving the difference of group sample means, ``u/n1 - v/n2``."""
        return self.u / self.n1 - self.v / self.n2

    @property
    def P1(self) -> np.ndarray:
        n = self.n
        return np.full((n, n), 1.0 / n)

    @property
    def P2(self) -> np.ndarray:
        u, v = self.u, self.v
        return np.outer(u, u) / self.n1 + np.outer(v, v) / self.n2

    def swapped(self) -> "TwoGroupDesign":
        return TwoGroupDesign(3 - self.labels)
