"""Fold-singularity analysis of the canonical relation of a phase.

Locates the singular variety (the |x-y| radius where the mixed-Hessian
determinant vanishes), and verifies at sampled variety points the three
fold conditions: corank one, first-order vanishing of the determinant in
the normal direction (u, -u), and transversality of the Hessian kernel
to the variety.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .geometry import DiagonalB
from .phase import Family, PhaseSpec, heisenberg_det, mixed_hessian

RANK_TOL = 1e-8  # singular values below RANK_TOL * sigma_max count as zero


@dataclass(frozen=True)
class SingularVariety:
    """The radius r* with det = 0, when one exists."""

    exists: bool
    radius: float = float("nan")
    Q_root: float = float("nan")


@dataclass(frozen=True)
class FoldReport:
    points_tested: int
    corank_ok: bool
    first_order_ok: bool
    transversality_ok: bool
    min_margin: float
    det_gradient_direction_error: float
    variety: SingularVariety

    @property
    def all_ok(self) -> bool:
        return self.corank_ok and self.first_order_ok and self.transversality_ok


def singular_radius(beta: float, b1: float, mu: float = 1.0) -> SingularVariety:
    """Positive root of beta^2(beta+1)Q^2 + 2 mu beta^2 b1 Q = 4 mu^2 (b1^2 + 1).

    The quadratic has positive leading coefficient and negative constant
    term, so for beta > 0 and mu != 0 there is exactly one positive root.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if mu == 0.0:
        return SingularVariety(exists=False)
    a = beta**2 * (beta + 1)
    b = 2 * mu * beta**2 * b1
    c = -4 * mu**2 * (b1**2 + 1)
    disc = b * b - 4 * a * c
    assert disc > 0, "quadratic must have real roots for beta > 0"
    Q = (-b + np.sqrt(disc)) / (2 * a)
    assert Q > 0, "positive root must exist for beta > 0"
    radius = Q ** (-1.0 / (beta + 2))
    return SingularVariety(exists=True, radius=float(radius), Q_root=float(Q))


def det_gradient(spec: PhaseSpec, x, y, step: float = 1e-6) -> np.ndarray:
    """Gradient of (x, y) |-> det(mixed_hessian) by central differences.

    Returns a vector of length 2d: d first entries are the x-derivatives.
    On the singular variety this must be parallel to (u, -u).
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    d = x.size
    r = float(np.linalg.norm(x - y))
    if r <= 0:
        raise ValueError("require x != y")
    h = step * max(r, 1.0)
    g = np.empty(2 * d)
    for i in range(2 * d):
        dx = np.zeros(d)
        dy = np.zeros(d)
        if i < d:
            dx[i] = h
        else:
            dy[i - d] = h
        g[i] = (
            np.linalg.det(mixed_hessian(spec, x + dx, y + dy))
            - np.linalg.det(mixed_hessian(spec, x - dx, y - dy))
        ) / (2.0 * h)
    return g


def _variety_for(spec: PhaseSpec) -> SingularVariety:
    if spec.family in (Family.BILINEAR, Family.RADIAL):
        return SingularVariety(exists=False)
    if spec.family is Family.COND_II:
        return singular_radius(spec.beta, spec.B.b[0], mu=spec.mu)
    raise ValueError(f"no singular-variety formula for family {spec.family}")


def numeric_radius(spec: PhaseSpec, rel_bracket: tuple = (0.8, 1.25)) -> float:
    """Re-solve det(mixed_hessian) = 0 in r near the closed-form radius.

    Used when the phase carries perturbation terms (e.g. a cubic remainder)
    that move the singular variety off the closed-form root.  Requires the
    determinant to depend on r only (n = 1).
    """
    if spec.n != 1:
        raise ValueError("numeric radius re-solve requires n = 1")
    base = _variety_for(replace(spec, rho=0.0))
    if not base.exists:
        raise ValueError("no closed-form variety to perturb from")
    u = np.array([1.0, 0.0])
    x = np.zeros(2)

    def det_of_r(r):
        return np.linalg.det(mixed_hessian(spec, x, x - r * u))

    lo = base.radius * rel_bracket[0]
    hi = base.radius * rel_bracket[1]
    if det_of_r(lo) * det_of_r(hi) > 0:
        raise ValueError(f"determinant does not change sign in [{lo:g}, {hi:g}]")
    return float(brentq(det_of_r, lo, hi, xtol=1e-14, rtol=8.9e-16))


def check_fold(spec: PhaseSpec, samples: int = 50, theta: float = 0.1, seed: int = 0,
               radius: float | None = None) -> FoldReport:
    """Verify the three fold conditions at `samples` random variety points.

    Points are parameterized as x random in the unit ball, y = x - r* u
    with u a random direction (the variety depends only on |x-y|).
    `radius` overrides the closed-form variety radius (for perturbed phases
    whose variety was re-solved numerically, see numeric_radius).

    (a) rank of the mixed Hessian is d-1 (singular values, relative
        threshold RANK_TOL);
    (b) the directional derivative of det along (u, -u)/sqrt(2) exceeds
        1e-3 times the local determinant scale beta^{2n} r*^{-2n(beta+2)};
    (c) every unit kernel vector w satisfies |u . w| >= theta.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    variety = _variety_for(spec)
    if radius is not None:
        variety = SingularVariety(exists=True, radius=float(radius),
                                  Q_root=float(radius) ** (-(spec.beta + 2)))
    if not variety.exists:
        return FoldReport(0, True, True, True, float("nan"), float("nan"), variety)
    rng = np.random.default_rng(seed)
    d = spec.dim
    rstar = variety.radius
    det_scale = spec.beta ** (2 * spec.n) * rstar ** (-2 * spec.n * (spec.beta + 2))
    corank_ok = True
    first_order_ok = True
    transversality_ok = True
    min_margin = np.inf
    max_angle_err = 0.0
    for _ in range(samples):
        x = rng.normal(size=d)
        x *= rng.uniform() ** (1.0 / d) / np.linalg.norm(x)
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        y = x - rstar * u
        M = mixed_hessian(spec, x, y)
        svals = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(svals > RANK_TOL * svals[0]))
        if rank != d - 1:
            corank_ok = False
        # (b): derivative of det along the unit direction (u, -u)/sqrt(2)
        h = 1e-6
        step = h * u / (2.0 * np.sqrt(2.0))
        dd = (
            np.linalg.det(mixed_hessian(spec, x + step, y - step))
            - np.linalg.det(mixed_hessian(spec, x - step, y + step))
        ) / (2.0 * h)
        if abs(dd) < 1e-3 * det_scale:
            first_order_ok = False
        # gradient direction vs (u, -u)
        g = det_gradient(spec, x, y)
        nvec = np.concatenate([u, -u]) / np.sqrt(2.0)
        cosang = abs(g @ nvec) / np.linalg.norm(g)
        max_angle_err = max(max_angle_err, float(np.arccos(np.clip(cosang, -1.0, 1.0))))
        # (c): kernel transversality
        _, s, Vt = np.linalg.svd(M)
        for row in range(d):
            if s[row] <= RANK_TOL * s[0]:
                w = Vt[row]
                margin = abs(float(u @ w))
                min_margin = min(min_margin, margin)
                if margin < theta:
                    transversality_ok = False
    return FoldReport(
        points_tested=samples,
        corank_ok=corank_ok,
        first_order_ok=first_order_ok,
        transversality_ok=transversality_ok,
        min_margin=float(min_margin),
        det_gradient_direction_error=max_angle_err,
        variety=variety,
    )


def curve_fold_check(beta: float, k: int, mu: float, bracket: tuple = (1e-3, 10.0)):
    """Root x0 > 0 of Phi''(x) = beta(beta+1) x^{-beta-2} - mu k(k-1) x^{k-2}.

    Returns (x0, Phi'''(x0)); the third derivative must be nonzero for the
    curve-case fold.  Raises if the bracket contains no sign change.
    """
    if beta <= 0 or k < 2 or mu < 0:
        raise ValueError("require beta > 0, k >= 2, mu >= 0")

    def d2(xx):
        return beta * (beta + 1) * xx ** (-beta - 2) - mu * k * (k - 1) * xx ** (k - 2)

    lo, hi = bracket
    if d2(lo) * d2(hi) > 0:
        raise ValueError(f"no sign change of Phi'' in bracket {bracket}")
    x0 = brentq(d2, lo, hi, xtol=1e-14, rtol=8.9e-16)
    third = -beta * (beta + 1) * (beta + 2) * x0 ** (-beta - 3) - mu * k * (k - 1) * (k - 2) * x0 ** (k - 3)
    return float(x0), float(third)


def variety_residual(beta: float, b1: float, mu: float = 1.0) -> float:
    """|heisenberg_det| at the reported variety radius (plug-back oracle)."""
    v = singular_radius(beta, b1, mu=mu)
    if not v.exists:
        raise ValueError("variety does not exist")
    return abs(heisenberg_det(beta, DiagonalB([b1]), v.radius, mu=mu))
