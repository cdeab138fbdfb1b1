"""Real-variable Heisenberg group structures.

The group H^n is R^{2n+1} with the twisted product
(x,t)(y,s) = (x+y, s+t - 2 x^t J y), where J is the standard symplectic
matrix on R^{2n}.  All hot paths use the J-action as a coordinate swap
with sign; dense matrices are materialized only for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_vec(coords) -> np.ndarray:
    v = np.asarray(coords, dtype=float)
    if v.ndim != 1 or v.size == 0 or v.size % 2 != 0:
        raise ValueError(f"coordinates must be a flat vector of even length, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class HeisenbergElement:
    """A point (x, t) of H^n, with x in R^{2n} and t the central coordinate."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vec(self.x))

    @property
    def n(self) -> int:
        return self.x.size // 2


def symplectic_apply(v: np.ndarray) -> np.ndarray:
    """J @ v without materializing J: (v_1, v_2) -> (v_2, -v_1) blockwise."""
    v = _as_vec(v)
    n = v.size // 2
    return np.concatenate([v[n:], -v[:n]])


def symplectic_matrix(n: int) -> np.ndarray:
    """Dense 2n x 2n symplectic matrix (tests and determinant cross-checks only)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def symplectic_form(x: np.ndarray, y: np.ndarray) -> float:
    """x^t J y, computed blockwise."""
    x = _as_vec(x)
    y = _as_vec(y)
    if x.size != y.size:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    n = x.size // 2
    return float(x[:n] @ y[n:] - x[n:] @ y[:n])


def twist(x: np.ndarray, y: np.ndarray) -> float:
    """The twist term 2 x^t J y of the group law; antisymmetric in (x, y)."""
    return 2.0 * symplectic_form(x, y)


def group_mul(p: HeisenbergElement, q: HeisenbergElement) -> HeisenbergElement:
    if p.n != q.n:
        raise ValueError(f"dimension mismatch: n={p.n} vs n={q.n}")
    return HeisenbergElement(p.x + q.x, q.t + p.t - twist(p.x, q.x))


def group_inv(p: HeisenbergElement) -> HeisenbergElement:
    return HeisenbergElement(-p.x, -p.t)


@dataclass(frozen=True)
class DiagonalB:
    """The diagonal matrix B = diag(b_1..b_n, b_1..b_n) with b_i = b_{i+n}."""

    b: tuple

    def __init__(self, b):
        arr = tuple(float(v) for v in np.atleast_1d(b))
        if not arr:
            raise ValueError("b must contain at least one entry")
        object.__setattr__(self, "b", arr)

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def duplicated(self) -> np.ndarray:
        """Length-2n diagonal, entry i equal to entry i+n."""
        return np.concatenate([self.b, self.b])

    def matrix(self) -> np.ndarray:
        return np.diag(self.duplicated)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.duplicated * _as_vec(v)


def twist_plus_B_det(B: DiagonalB) -> float:
    """det(2J + 2B) = prod_i (4 b_i^2 + 4)."""
    return float(np.prod([4.0 * bi * bi + 4.0 for bi in B.b]))
