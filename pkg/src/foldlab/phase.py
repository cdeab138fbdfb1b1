"""Phase-function catalog with analytic derivative formulas.

Each family carries a closed-form mixed Hessian d^2 Phi / dx_k dy_l and a
finite-difference oracle to check it against.  The radial family also has
the closed-form determinant (Fefferman's rotation device), and the twisted
family the quadratic-in-Q determinant product used to locate the singular
variety.

Sign convention: the twisted quadratic family is defined so that its mixed
Hessian is exactly  beta r^-(beta+2) (I - (beta+2) u u^t) + mu (2J + 2B),
the form whose determinant factorizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import DiagonalB, symplectic_matrix, twist


class Family(Enum):
    BILINEAR = "bilinear"
    RADIAL = "radial"
    COND_I = "cond_i"
    COND_II = "cond_ii"
    CURVE = "curve"


@dataclass(frozen=True)
class PhaseSpec:
    """A parameterized phase Phi(x, y) with analytic derivative oracles.

    family          one of Family
    beta            singular exponent, > 0 (ignored by BILINEAR)
    n               Heisenberg index; ambient dimension is 2n (1 for CURVE)
    mu              coupling in front of the twist / curve term
    kappa           COND_I perturbation exponent, > 2
    B               diagonal quadratic coefficients (COND_II)
    k               curve power, >= 2 (CURVE)
    rho             optional cubic perturbation coefficient (COND_II)
    phi_scale       extra factor on the COND_I radial perturbation; dyadic
                    rescaling of the |x|^kappa model shrinks it by
                    2^{-j(kappa-2)}, which callers encode here
    dim_override    explicit dimension for BILINEAR
    """

    family: Family
    beta: float = 1.0
    n: int = 1
    mu: float = 1.0
    kappa: float = 3.0
    B: DiagonalB | None = None
    k: int = 2
    rho: float = 0.0
    phi_scale: float = 1.0
    dim_override: int | None = None

    def __post_init__(self):
        if self.family is not Family.BILINEAR and self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.family is Family.COND_I and self.kappa <= 2:
            raise ValueError(f"kappa must exceed 2, got {self.kappa}")
        if self.family is Family.CURVE and self.k < 2:
            raise ValueError(f"curve power k must be >= 2, got {self.k}")
        if self.family is Family.COND_II and self.B is None:
            object.__setattr__(self, "B", DiagonalB([0.0] * self.n))
        if self.family is Family.COND_II and self.B.n != self.n:
            raise ValueError(f"B has n={self.B.n} entries, phase has n={self.n}")

    @property
    def dim(self) -> int:
        if self.family is Family.CURVE:
            return 1
        if self.family is Family.BILINEAR:
            return self.dim_override if self.dim_override else 2 * self.n
        return 2 * self.n


def _sep(x, y, spec):
    z = np.asarray(x, float) - np.asarray(y, float)
    r = float(np.linalg.norm(z))
    if r <= 0.0 and spec.family is not Family.BILINEAR:
        raise ValueError("phase is singular on the diagonal: require x != y")
    return z, r


def phase_eval(spec: PhaseSpec, x, y) -> float:
    """Phi(x, y) for the given family."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if spec.family is Family.BILINEAR:
        return float(x @ y)
    z, r = _sep(x, y, spec)
    if spec.family is Family.RADIAL:
        return r ** -spec.beta
    if spec.family is Family.CURVE:
        s = float(z[0])
        return abs(s) ** -spec.beta - spec.mu * s ** spec.k
    val = r ** -spec.beta + spec.mu * twist(x, y)
    if spec.family is Family.COND_I:
        val -= spec.mu * spec.phi_scale * r ** spec.kappa
    else:
        val -= spec.mu * float(z @ spec.B.apply(z))
        val += spec.rho * r ** 3
    return val


def mixed_hessian(spec: PhaseSpec, x, y) -> np.ndarray:
    """Analytic d x d matrix of d^2 Phi / dx_k dy_l."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    d = x.size
    if spec.family is Family.BILINEAR:
        return np.eye(d)
    z, r = _sep(x, y, spec)
    u = z / r
    b = spec.beta
    if spec.family is Family.CURVE:
        s = float(z[0])
        m = -(b * (b + 1) * abs(s) ** (-b - 2) - spec.mu * spec.k * (spec.k - 1) * s ** (spec.k - 2))
        return np.array([[m]])
    M = b * r ** (-(b + 2)) * (np.eye(d) - (b + 2) * np.outer(u, u))
    if spec.family is Family.RADIAL:
        return M
    M = M + spec.mu * 2.0 * symplectic_matrix(spec.n)
    if spec.family is Family.COND_I:
        kap = spec.kappa
        M = M + spec.mu * spec.phi_scale * kap * r ** (kap - 2) * (
            np.eye(d) + (kap - 2) * np.outer(u, u))
    else:
        M = M + spec.mu * 2.0 * spec.B.matrix()
        if spec.rho:
            M = M - 3.0 * spec.rho * r * (np.eye(d) + np.outer(u, u))
    return M


def fd_mixed_hessian(spec: PhaseSpec, x, y, step: float = 1e-5) -> np.ndarray:
    """Central-difference mixed Hessian, O(step^2) accurate."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if step <= 0:
        raise ValueError("step must be positive")
    if spec.family is not Family.BILINEAR:
        r = float(np.linalg.norm(x - y))
        if step > r / 10.0:
            raise ValueError(f"step {step} too large relative to |x-y| = {r}")
    d = x.size
    M = np.empty((d, d))
    for kk in range(d):
        ek = np.zeros(d)
        ek[kk] = step
        for ll in range(d):
            el = np.zeros(d)
            el[ll] = step
            M[kk, ll] = (
                phase_eval(spec, x + ek, y + el)
                - phase_eval(spec, x + ek, y - el)
                - phase_eval(spec, x - ek, y + el)
                + phase_eval(spec, x - ek, y - el)
            ) / (4.0 * step * step)
    return M


def fefferman_det(beta: float, n: int, r: float) -> float:
    """det of the radial mixed Hessian: -(beta+1) beta^{2n} r^{-2n(beta+2)}."""
    if r <= 0:
        raise ValueError("r must be positive")
    if beta in (0.0, -1.0):
        raise ValueError("beta must avoid 0 and -1")
    return -(beta + 1.0) * beta ** (2 * n) * r ** (-2 * n * (beta + 2))


def heisenberg_det(beta: float, B: DiagonalB, r: float, mu: float = 1.0) -> float:
    """det of the twisted mixed Hessian rad + mu(2J + 2B), via the rotation device.

    With Q = r^-(beta+2) this is
      -(beta^2(beta+1)Q^2 + 2 mu beta^2 b_1 Q - 4 mu^2 b_1^2 - 4 mu^2)
        * prod_{i>=2} ((beta Q + 2 mu b_i)^2 + 4 mu^2).

    For n >= 2 with distinct b_i the factorization is exact in the frame
    where u = (x-y)/|x-y| is aligned with the first coordinate axis (the
    rotation must commute with J and B); for n = 1 it holds for every u.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    Q = r ** (-(beta + 2))
    b1 = B.b[0]
    val = -(beta**2 * (beta + 1) * Q**2 + 2 * mu * beta**2 * b1 * Q - 4 * mu**2 * b1**2 - 4 * mu**2)
    for bi in B.b[1:]:
        val *= (beta * Q + 2 * mu * bi) ** 2 + 4 * mu**2
    return float(val)


def mixed_hessian_aligned(beta: float, B: DiagonalB, r: float, mu: float = 1.0) -> np.ndarray:
    """Twisted mixed Hessian in the u-aligned frame: beta Q (I - (beta+2) E11) + mu(2J+2B)."""
    if r <= 0:
        raise ValueError("r must be positive")
    n = B.n
    d = 2 * n
    Q = r ** (-(beta + 2))
    M = beta * Q * np.eye(d)
    M[0, 0] -= beta * Q * (beta + 2)
    return M + mu * (2.0 * symplectic_matrix(n) + 2.0 * B.matrix())
