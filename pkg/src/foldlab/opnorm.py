"""Discretized oscillatory integral operators and norm-decay measurement.

T_lam f(x) = integral e^{i lam Phi(x,y)} Psi(x,y) f(y) dy is discretized
by the midpoint rule on tensor grids.  The operator applies matrix-free
through a compiled kernel (or a numpy fallback); the L2 -> L2 norm is the
top singular value via power iteration on the adjoint composition, scaled
by sqrt(hx^d * hy^d) so the value is grid-size independent.

The resolution rule h * lam * sup|grad Phi| <= 2*pi/6 (at least six nodes
per oscillation on the amplitude support) is enforced at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import bump
from .phase import Family, PhaseSpec

try:  # compiled extension; falls back to vectorized numpy
    from . import _kernels as _kern

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - exercised when the ext is absent
    from . import _kernels_py as _kern

    BACKEND = "python"

from . import _kernels_py  # always available, used by the benchmark

RESOLUTION_NODES = 6  # nodes per oscillation period
_MAX_PHASE_STEP = 2.0 * math.pi / RESOLUTION_NODES
_NTAB = 4096
_EMPTY = np.zeros(2)
_EMPTY_DIR = np.zeros(1)


class ResolutionError(ValueError):
    """Grid too coarse for the requested oscillation frequency."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform midpoint-rule tensor grid on a box.

    points_per_axis nodes per axis; node i on axis l sits at
    lo_l + (i + 1/2) h_l with h_l = (hi_l - lo_l) / N.  Quadrature weight
    per node is prod_l h_l (midpoint rule).
    """

    dim: int
    points_per_axis: int
    box: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        box = self.box if self.box else ((-1.0, 1.0),) * self.dim
        box = tuple((float(a), float(b)) for a, b in box)
        if len(box) != self.dim or any(b <= a for a, b in box):
            raise ValueError(f"box must be {self.dim} nonempty intervals")
        object.__setattr__(self, "box", box)

    @property
    def spacings(self) -> tuple:
        return tuple((b - a) / self.points_per_axis for a, b in self.box)

    @property
    def weight(self) -> float:
        """Quadrature weight of a single node (uniform midpoint rule)."""
        return float(np.prod(self.spacings))

    @property
    def total_nodes(self) -> int:
        return self.points_per_axis**self.dim

    def axes(self) -> list:
        return [
            a + (np.arange(self.points_per_axis) + 0.5) * h
            for (a, _), h in zip(self.box, self.spacings)
        ]

    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.ascontiguousarray(np.stack([g.ravel() for g in grids], axis=-1))


@dataclass(frozen=True)
class Amplitude:
    """Smooth compactly supported amplitude in separated form.

    Psi(x, y) = W(x) * V(y) * rho(|x - y|) * cone(x - y)

    with every factor optional:
      x_knots    per-axis C-inf plateau bump knots for W (None -> W = 1)
      y_knots    same for V (None -> V = 1)
      r_knots    radial plateau bump knots for rho (None -> rho = 1);
                 also multiplied by |x-y|^(-r_power)
      cone_dir / cone_aperture   angular bump around a unit direction,
                 vanishing for angles >= 2*aperture

    Evaluable as Psi(x, y) on arrays of points.
    """

    x_knots: tuple | None = None
    y_knots: tuple | None = None
    r_knots: tuple | None = None
    r_power: float = 0.0
    cone_dir: tuple | None = None
    cone_aperture: float = 0.125

    def __post_init__(self):
        for name in ("x_knots", "y_knots", "r_knots"):
            kn = getattr(self, name)
            if kn is not None:
                kn = tuple(float(v) for v in kn)
                if len(kn) != 4 or not (kn[0] < kn[1] <= kn[2] < kn[3]):
                    raise ValueError(f"{name} must be 4 increasing knots, got {kn}")
                object.__setattr__(self, name, kn)
        if self.r_power and self.r_knots is None:
            raise ValueError("r_power needs r_knots (support must exclude the diagonal)")
        if self.cone_dir is not None:
            d = np.asarray(self.cone_dir, float)
            nrm = np.linalg.norm(d)
            if nrm == 0:
                raise ValueError("cone_dir must be nonzero")
            object.__setattr__(self, "cone_dir", tuple(d / nrm))
            if not 0 < self.cone_aperture <= math.pi / 4:
                raise ValueError("cone_aperture must lie in (0, pi/4]")

    @property
    def r_support(self) -> tuple:
        """(r_lo, r_hi) of the radial factor, or None if unrestricted."""
        return (self.r_knots[0], self.r_knots[3]) if self.r_knots else None

    def _window(self, knots, pts):
        w = np.ones(pts.shape[0])
        for l in range(pts.shape[1]):
            w *= bump(pts[:, l], *knots)
        return w

    def __call__(self, x, y):
        x = np.atleast_2d(np.asarray(x, float))
        y = np.atleast_2d(np.asarray(y, float))
        out = np.ones(max(x.shape[0], y.shape[0]))
        if self.x_knots:
            out = out * self._window(self.x_knots, x)
        if self.y_knots:
            out = out * self._window(self.y_knots, y)
        z = x - y
        r = np.linalg.norm(z, axis=-1)
        if self.r_knots:
            out = out * bump(r, *self.r_knots) * np.where(r > 0, r, 1.0) ** (-self.r_power)
        if self.cone_dir is not None:
            u = (z @ np.asarray(self.cone_dir)) / np.where(r > 0, r, 1.0)
            ang = np.arccos(np.clip(u, -1.0, 1.0))
            ap = self.cone_aperture
            out = out * bump(ang, -2 * ap, -ap, ap, 2 * ap)
        return out if out.size > 1 else float(out[0])


@dataclass
class NormResult:
    norm: float
    iterations: int
    residual: float
    converged: bool


@dataclass
class NormDecaySeries:
    """Measured norms across a lambda sweep with the fitted log-log slope."""

    entries: list  # of (lam, norm, iterations, residual)
    slope: float = field(default=float("nan"))
    slope_stderr: float = field(default=float("nan"))

    def __post_init__(self):
        lams = [e[0] for e in self.entries]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("lambdas must be strictly increasing")
        if any(e[1] <= 0 for e in self.entries):
            raise ValueError("norms must be positive")


def _phase_tables(phase: PhaseSpec, r2lo: float, r2hi: float, ntab: int = _NTAB):
    """Lookup tables (in r^2) realizing the radial part of the phase.

    Returns (phase_id, tabA, tabB, bdup, mu) for the kernel:
      phase = lerp(tabA) [+ sign(x0-y0)*lerp(tabB)]
              + mu*(2 x^t J y) - mu * sum_l bdup_l (x_l-y_l)^2
    """
    d = phase.dim
    if phase.family is Family.BILINEAR:
        return 0, np.zeros(2), np.zeros(2), np.zeros(d), 0.0
    r = np.sqrt(np.linspace(max(r2lo, 1e-12), r2hi, ntab))
    tabA = r ** (-phase.beta)
    tabB = np.zeros(ntab)
    bdup = np.zeros(d)
    mu = 0.0
    if phase.family is Family.RADIAL:
        pass
    elif phase.family is Family.COND_I:
        tabA = tabA - phase.mu * phase.phi_scale * r**phase.kappa
        mu = phase.mu
    elif phase.family is Family.COND_II:
        if phase.rho:
            tabA = tabA + phase.rho * r**3
        bdup = np.array(list(phase.B.b) * 2, float)
        mu = phase.mu
    elif phase.family is Family.CURVE:
        if phase.k % 2 == 0:
            tabA = tabA - phase.mu * r**phase.k
        else:
            tabB = -phase.mu * r**phase.k
        return 4, tabA, tabB, bdup, 0.0
    else:  # pragma: no cover
        raise ValueError(f"unsupported family {phase.family}")
    return 1, tabA, tabB, bdup, mu


def _grad_bounds(phase, tabA, tabB, r, xmax, ymax, bdup, mu):
    """Upper bounds on sup|grad_x Phi| and sup|grad_y Phi| on the support."""
    if phase.family is Family.BILINEAR:
        return ymax, xmax
    gA = float(np.max(np.abs(np.gradient(tabA, r))))
    if np.any(tabB):
        gA += float(np.max(np.abs(np.gradient(tabB, r))))
    rhi = float(r[-1])
    bmax = float(np.max(np.abs(bdup))) if len(bdup) else 0.0
    tw_x = 2.0 * abs(mu) * ymax + 2.0 * abs(mu) * bmax * rhi
    tw_y = 2.0 * abs(mu) * xmax + 2.0 * abs(mu) * bmax * rhi
    return gA + tw_x, gA + tw_y


class OscOperator:
    """Matrix-free discretization of T_lam on given x/y grids.

    Use build_operator (validates the resolution rule) rather than
    constructing directly.

    When the phase has no twist coupling the kernel depends on x - y only
    and both window factors separate, so the apply is a discrete
    convolution; if the two grids share their spacing an FFT fast path is
    used (prefer_fft=False forces the direct summation path).
    """

    def __init__(self, phase, amplitude, lam, ygrid, xgrid, *, cache_limit=1.6e8,
                 prefer_fft=True):
        self.phase = phase
        self.amplitude = amplitude
        self.lam = float(lam)
        self.xgrid = xgrid
        self.ygrid = ygrid
        d = phase.dim
        if xgrid.dim != d or ygrid.dim != d:
            raise ValueError(f"grids must have dim {d}")
        rs = amplitude.r_support
        if rs is not None:
            self.r2lo, self.r2hi, self.use_rcut = rs[0] ** 2, rs[1] ** 2, 1
        else:
            # no radial cutoff: table still needs a range covering all pairs
            span = sum(
                (max(bx[1], by[1]) - min(bx[0], by[0])) ** 2
                for bx, by in zip(xgrid.box, ygrid.box)
            )
            self.r2lo, self.r2hi, self.use_rcut = 0.0, span + 1.0, 0
            if phase.family is not Family.BILINEAR:
                raise ValueError("singular phases need an amplitude with r_knots "
                                 "(support must exclude the diagonal)")
        pid, tabA, tabB, bdup, mu = _phase_tables(phase, self.r2lo, self.r2hi)
        self.phase_id, self.tabA, self.tabB, self.bdup, self.mu = pid, tabA, tabB, bdup, mu
        self.n_twist = phase.n if pid == 1 and mu != 0.0 else 0
        # amplitude tables and windows
        r = np.sqrt(np.linspace(max(self.r2lo, 1e-12), self.r2hi, len(tabA)))
        if amplitude.r_knots:
            self.tabAmp = bump(r, *amplitude.r_knots) * r ** (-amplitude.r_power)
        else:
            self.tabAmp = np.ones(len(tabA))
        self.xs = xgrid.nodes()
        self.ys = ygrid.nodes()
        self.wx = (amplitude._window(amplitude.x_knots, self.xs)
                   if amplitude.x_knots else np.ones(len(self.xs)))
        self.wy = (amplitude._window(amplitude.y_knots, self.ys)
                   if amplitude.y_knots else np.ones(len(self.ys)))
        if amplitude.cone_dir is not None:
            ap = amplitude.cone_aperture
            self.ulo = math.cos(2.0 * ap)
            ugrid = np.linspace(self.ulo, 1.0, 512)
            ang = np.arccos(np.clip(ugrid, -1.0, 1.0))
            self.tabCone = bump(ang, -2 * ap, -ap, ap, 2 * ap)
            self.conedir = np.asarray(amplitude.cone_dir, float)
            self.use_cone = 1
        else:
            self.ulo, self.tabCone, self.conedir, self.use_cone = 0.0, _EMPTY, _EMPTY_DIR, 0
        self.scale = math.sqrt(xgrid.weight * ygrid.weight)
        self._resolution_check()
        convolutional = (
            self.phase_id != 0
            and (self.mu == 0.0 or self.n_twist == 0)
            and all(
                abs(hx - hy) <= 1e-12 * hx
                for hx, hy in zip(xgrid.spacings, ygrid.spacings)
            )
        )
        self.use_fft = bool(prefer_fft and convolutional)
        if self.use_fft:
            self._setup_fft()
            self.npairs = 0
            self.cached = False
            return
        self.npairs = _kern.count_pairs(
            self.xs, self.ys,
            self.r2lo if self.use_rcut else -1.0,
            self.r2hi if self.use_rcut else 1e30,
        )
        self.cached = self.npairs <= cache_limit
        if self.cached:
            vals = np.empty(self.npairs, np.complex64)
            cols = np.empty(self.npairs, np.int32)
            rowptr = np.empty(len(self.xs) + 1, np.int64)
            _kern.build_csr(self.xs, self.ys, self.wx, self.wy,
                            self.tabA, self.tabB, self.tabAmp, self.bdup,
                            self.tabCone, self.conedir, self.use_cone, self.ulo,
                            self.phase_id, self.n_twist, self.lam, self.mu,
                            self.r2lo, self.r2hi, self.use_rcut,
                            vals, cols, rowptr)
            self._csr = (vals, cols, rowptr)

    def _kernel_of_difference(self, z):
        """Exact kernel amp * exp(i lam Phi) at difference vectors z (..., d).

        Only valid for twist-free phases (the convolutional case)."""
        z = np.asarray(z, float)
        r2 = np.einsum("...l,...l->...", z, z)
        r = np.sqrt(r2)
        inside = (r2 >= self.r2lo) & (r2 <= self.r2hi) if self.use_rcut else r2 > 0
        rs = np.where(inside, r, 1.0)
        ph = rs ** (-self.phase.beta)
        fam = self.phase.family
        if fam is Family.CURVE:
            s = z[..., 0]
            ph = ph - self.phase.mu * s**self.phase.k
        elif fam is Family.COND_II and self.phase.rho:
            ph = ph + self.phase.rho * rs**3
        elif fam is Family.COND_I:
            ph = ph - self.phase.mu * self.phase.phi_scale * rs**self.phase.kappa
        amp = np.ones_like(rs)
        a = self.amplitude
        if a.r_knots:
            amp = bump(rs, *a.r_knots) * rs ** (-a.r_power)
        if a.cone_dir is not None:
            u = (z @ np.asarray(a.cone_dir)) / rs
            ang = np.arccos(np.clip(u, -1.0, 1.0))
            ap = a.cone_aperture
            amp = amp * bump(ang, -2 * ap, -ap, ap, 2 * ap)
        return np.where(inside, amp * np.exp(1j * self.lam * ph), 0.0)

    def _setup_fft(self):
        from scipy.fft import fftn, next_fast_len

        xa = self.xgrid.axes()
        ya = self.ygrid.axes()
        mx = self.xgrid.points_per_axis
        my = self.ygrid.points_per_axis
        # difference grid per axis: x_i - y_j for i - j in [-(my-1), mx-1]
        axes = []
        for l in range(self.phase.dim):
            h = self.xgrid.spacings[l]
            off = xa[l][0] - ya[l][0]
            axes.append(off + h * np.arange(-(my - 1), mx))
        grids = np.meshgrid(*axes, indexing="ij")
        zv = np.stack([g.ravel() for g in grids], axis=-1)
        k = self._kernel_of_difference(zv).reshape([mx + my - 1] * self.phase.dim)
        self._fft_shape = tuple(next_fast_len(mx + my - 1) for _ in range(self.phase.dim))
        self._Fk = fftn(k, self._fft_shape)
        self._Fk_rev = fftn(np.conj(k[(slice(None, None, -1),) * self.phase.dim]),
                            self._fft_shape)
        self._mx, self._my = mx, my

    def _apply_fft(self, f, adjoint):
        from scipy.fft import fftn, ifftn

        d = self.phase.dim
        mx, my = self._mx, self._my
        if adjoint:
            g = (self.wx * f).reshape([mx] * d)
            conv = ifftn(fftn(g, self._fft_shape) * self._Fk_rev)
            sl = tuple(slice(mx - 1, mx - 1 + my) for _ in range(d))
            return self.wy * conv[sl].ravel()
        g = (self.wy * f).reshape([my] * d)
        conv = ifftn(fftn(g, self._fft_shape) * self._Fk)
        sl = tuple(slice(my - 1, my - 1 + mx) for _ in range(d))
        return self.wx * conv[sl].ravel()

    def _resolution_check(self):
        r = np.sqrt(np.linspace(max(self.r2lo, 1e-12), self.r2hi, len(self.tabA)))
        xmax = math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in self.xgrid.box))
        ymax = math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in self.ygrid.box))
        fx, fy = _grad_bounds(self.phase, self.tabA, self.tabB, r,
                              xmax, ymax, self.bdup, self.mu)
        self.grad_bounds = (fx, fy)
        for grid, f, which in ((self.xgrid, fx, "x"), (self.ygrid, fy, "y")):
            h = max(grid.spacings)
            if h * self.lam * f > _MAX_PHASE_STEP * (1 + 1e-12):
                spans = [b - a for a, b in grid.box]
                need = max(
                    math.ceil(s * self.lam * f / _MAX_PHASE_STEP) for s in spans
                )
                raise ResolutionError(
                    f"{which}-grid too coarse for lambda={self.lam:g}: "
                    f"h*lam*sup|grad Phi| = {h * self.lam * f:.3g} > "
                    f"{_MAX_PHASE_STEP:.3g}; need points_per_axis >= {need}, "
                    f"got {grid.points_per_axis}"
                )

    @property
    def shape(self):
        return (len(self.xs), len(self.ys))

    def apply(self, f, adjoint=False):
        """g_i = sum_j K_ij f_j (w/o quadrature weight; see apply_weighted)."""
        f = np.ascontiguousarray(f, complex)
        if self.use_fft:
            return self._apply_fft(f, adjoint)
        out = np.zeros(len(self.ys) if adjoint else len(self.xs), complex)
        if self.cached:
            _kern.csr_apply(*self._csr, f, out, int(adjoint))
        else:
            _kern.apply_fly(self.xs, self.ys, self.wx, self.wy,
                            self.tabA, self.tabB, self.tabAmp, self.bdup,
                            self.tabCone, self.conedir, self.use_cone, self.ulo,
                            self.phase_id, self.n_twist, self.lam, self.mu,
                            self.r2lo, self.r2hi, self.use_rcut,
                            f, out, int(adjoint))
        return out

    def apply_weighted(self, f):
        """The quadrature approximation of (T_lam f)(x_i): apply times w_y."""
        return self.apply(f) * self.ygrid.weight

    def dense(self):
        """Materialize the kernel matrix (for small grids / oracle tests)."""
        if len(self.xs) * len(self.ys) > 4e7:
            raise ValueError("dense materialization too large")
        if self.use_fft:
            z = self.xs[:, None, :] - self.ys[None, :, :]
            return (self.wx[:, None] * self.wy[None, :]
                    * self._kernel_of_difference(z))
        if self.cached:
            vals, cols, rowptr = self._csr
            K = np.zeros(self.shape, np.complex128)
            for i in range(self.shape[0]):
                sl = slice(rowptr[i], rowptr[i + 1])
                K[i, cols[sl]] = vals[sl]
            return K
        eye = np.eye(len(self.ys), dtype=complex)
        return np.stack([self.apply(eye[j]) for j in range(len(self.ys))], axis=1)


def build_operator(phase, amplitude, lam, grid, xgrid=None, *, cache_limit=1.6e8,
                   prefer_fft=True):
    """Validated constructor: grid is the y-grid, xgrid defaults to it."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return OscOperator(phase, amplitude, lam, grid, xgrid or grid,
                       cache_limit=cache_limit, prefer_fft=prefer_fft)


def operator_norm(op, tol=1e-6, max_iter=500, seed=0):
    """Top singular value of the weighted operator by power iteration.

    Iterates v <- A*A v; the reported norm is sigma_max * sqrt(wx * wy),
    the L2-consistent operator norm.  residual is the final relative
    change of the singular-value estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=len(op.ys)) + 1j * rng.normal(size=len(op.ys))
    v /= np.linalg.norm(v)
    prev = 0.0
    sig = 0.0
    res = float("inf")
    for it in range(max_iter):
        w = op.apply(op.apply(v), adjoint=True)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return NormResult(0.0, it + 1, 0.0, True)
        sig = math.sqrt(nw)  # v normalized, so |A*Av| -> sigma_max^2
        v = w / nw
        if prev:
            res = abs(sig - prev) / sig
            if res <= tol:
                return NormResult(sig * op.scale, it + 1, res, True)
        prev = sig
    return NormResult(sig * op.scale, max_iter, res, False)


def fit_slope(entries):
    """OLS slope of log(norm) vs log(lambda) with residual-based stderr."""
    if isinstance(entries, NormDecaySeries):
        entries = entries.entries
    if len(entries) < 3:
        raise ValueError("need at least 3 points")
    L = np.log([e[0] for e in entries])
    N = np.log([e[1] for e in entries])
    if np.ptp(L) == 0:
        raise ValueError("degenerate abscissae")
    A = np.vstack([L, np.ones_like(L)]).T
    coef, _, _, _ = np.linalg.lstsq(A, N, rcond=None)
    resid = N - A @ coef
    dof = len(L) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        stderr = math.sqrt(max(cov[0, 0], 0.0))
    else:
        stderr = 0.0
    return float(coef[0]), stderr


@dataclass
class LevelNormResult:
    """Operator norm of a planar twisted-convolution operator, with the
    index of the level attaining it and the number of levels scanned."""

    norm: float
    level: int
    levels: int


def _radial_kernel_phase(phase, amplitude):
    """(phi, dphi) of a purely radial planar kernel, with validation."""
    if phase.dim != 2:
        raise ValueError("radial diagonalization requires a planar phase (n = 1)")
    if amplitude.r_knots is None or amplitude.x_knots or amplitude.y_knots \
            or amplitude.cone_dir is not None:
        raise ValueError("amplitude must be purely radial (r_knots only)")
    if phase.family is Family.RADIAL:
        def phi(r):
            return r ** (-phase.beta)
        def dphi(r):
            return -phase.beta * r ** (-phase.beta - 1)
    elif phase.family is Family.COND_I:
        def phi(r):
            return r ** (-phase.beta) - phase.mu * phase.phi_scale * r**phase.kappa
        def dphi(r):
            return (-phase.beta * r ** (-phase.beta - 1)
                    - phase.mu * phase.phi_scale * phase.kappa * r ** (phase.kappa - 1))
    elif phase.family is Family.COND_II:
        if any(phase.B.b):
            raise ValueError("COND_II kernel is radial only for B = 0")
        def phi(r):
            return r ** (-phase.beta) + phase.rho * r**3
        def dphi(r):
            return -phase.beta * r ** (-phase.beta - 1) + 3 * phase.rho * r**2
    else:
        raise ValueError(f"kernel of family {phase.family} is not a radial twist")
    return phi, dphi


def _radial_kernel_weights(phase, amplitude, lam, n_r, phi):
    """Quadrature weights 2 pi k(r) r dr of the radial kernel on n_r nodes."""
    k0, _, _, k3 = amplitude.r_knots
    r = np.linspace(k0, k3, int(n_r))
    a = bump(r, *amplitude.r_knots)
    if amplitude.r_power:
        a = a * r ** (-amplitude.r_power)
    return r, 2 * math.pi * a * np.exp(1j * lam * phi(r)) * r * (r[1] - r[0])


def twisted_radial_eigenvalues(phase, amplitude, lam, *, ell_max=None, n_r=None):
    """Landau-level eigenvalues of the untruncated twisted operator.

    For a planar phase lam * (phi(|x-y|) + 2 mu x^t J y) with a purely radial
    amplitude a(|x-y|), the operator

        (Tf)(x) = int k(|x-y|) exp(i c x^t J y) f(y) dy,
        k(r) = a(r) exp(i lam phi(r)),   c = 2 lam mu,

    commutes with the magnetic translations of field strength c, so it is
    diagonal over the Landau-level decomposition of L^2(R^2).  Its distinct
    eigenvalues are the Laguerre transforms

        e_l = 2 pi int_0^inf k(r) L_l(c r^2) exp(-c r^2 / 2) r dr,

    each infinitely degenerate.  This returns the complex array (e_0, ...,
    e_{ell_max-1}) evaluated by quadrature with the stable damped three-term
    Laguerre recurrence.  Operators sharing the same c (e.g. dyadic pieces
    at a common central frequency) are diagonal in the same basis, so their
    compositions multiply eigenvalue-wise.

    Requires dim == 2, mu != 0, a radial kernel (COND_I, or COND_II with
    B == 0), and an amplitude with only radial factors.
    """
    phi, dphi = _radial_kernel_phase(phase, amplitude)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if phase.mu == 0 or phase.family is Family.RADIAL:
        raise ValueError("mu must be nonzero (no twist, no Landau structure)")
    k0, _, _, k3 = amplitude.r_knots
    c = 2.0 * lam * abs(phase.mu)
    gmax = float(np.max(np.abs(dphi(np.linspace(k0, k3, 2048)))))
    if ell_max is None:
        # levels couple to radial frequencies ~ 2 sqrt(l c); beyond the
        # largest phase frequency lam*gmax the eigenvalues are negligible
        ell_max = int(1.3 * (lam * gmax) ** 2 / (4.0 * c)) + 32
    if n_r is None:
        cycles = (lam * gmax + 2.0 * math.sqrt(ell_max * c) + c * k3) * (k3 - k0) / (2 * math.pi)
        n_r = max(4000, int(40 * cycles))
    r, w = _radial_kernel_weights(phase, amplitude, lam, n_r, phi)
    x = c * r * r
    m_prev = np.exp(-x / 2)          # L_0(x) e^{-x/2}
    m_cur = (1.0 - x) * m_prev       # L_1(x) e^{-x/2}
    out = np.empty(int(ell_max), complex)
    out[0] = np.sum(w * m_prev)
    if ell_max > 1:
        out[1] = np.sum(w * m_cur)
    for ell in range(1, int(ell_max) - 1):
        m_next = ((2 * ell + 1 - x) * m_cur - ell * m_prev) / (ell + 1)
        out[ell + 1] = np.sum(w * m_next)
        m_prev, m_cur = m_cur, m_next
    return out


def twisted_radial_norm(phase, amplitude, lam, *, ell_max=None, n_r=None):
    """Exact operator norm of the untruncated twisted operator on the plane.

    sup_l |e_l| over the Landau-level eigenvalues of
    `twisted_radial_eigenvalues`, with the maximizing level.  Unlike grid
    truncations to a spatial window, the result carries no window-boundary
    deficit, so norm decay in lam is visible already at moderate
    frequencies.
    """
    vals = np.abs(twisted_radial_eigenvalues(phase, amplitude, lam,
                                             ell_max=ell_max, n_r=n_r))
    top = int(vals.argmax())
    return LevelNormResult(float(vals[top]), top, len(vals))


def radial_symbol_norm(phase, amplitude, lam, *, n_r=None, n_freq=None):
    """Exact operator norm of the untruncated twist-free radial operator.

    With mu = 0 the operator is a plain convolution by the radial kernel
    k(r) = a(r) exp(i lam phi(r)); its L^2 norm is the sup of the Fourier
    symbol, computed as a Hankel transform:

        norm = sup_rho | 2 pi int_0^inf k(r) J_0(rho r) r dr |.

    This is the c -> 0 limit of the Landau-level diagonalization and serves
    the untwisted (tau = 0) entries of the dyadic sweeps.
    """
    from scipy.special import j0

    phi, dphi = _radial_kernel_phase(phase, amplitude)
    if phase.mu != 0 and phase.family is not Family.RADIAL:
        raise ValueError("radial_symbol_norm requires mu = 0 (no twist)")
    if lam <= 0:
        raise ValueError("lam must be positive")
    k0, _, _, k3 = amplitude.r_knots
    gmax = float(np.max(np.abs(dphi(np.linspace(k0, k3, 2048)))))
    rho_max = 1.3 * lam * gmax + 16.0 / (k3 - k0)
    if n_freq is None:
        n_freq = max(2048, int(8 * rho_max * k3 / (2 * math.pi)))
    if n_r is None:
        n_r = max(4000, int(40 * (lam * gmax + rho_max) * (k3 - k0) / (2 * math.pi)))
    r, w = _radial_kernel_weights(phase, amplitude, lam, n_r, phi)
    rho = np.linspace(0.0, rho_max, int(n_freq))
    # block over rho to bound the J0 evaluation workspace
    best = 0.0
    step = max(1, int(4e7 // len(r)))
    for lo in range(0, len(rho), step):
        block = j0(np.outer(rho[lo:lo + step], r))
        best = max(best, float(np.max(np.abs(block @ w))))
    return best


def _sector_bounds(direction, half_angle, rlo, rhi):
    """Per-axis ranges of z = r*omega with r in [rlo, rhi] and
    angle(omega, direction) <= half_angle.  Returns (zmin, zmax) arrays."""
    direction = direction / np.linalg.norm(direction)
    theta = np.arccos(np.clip(direction, -1.0, 1.0))  # angle to each axis
    hi_cos = np.cos(np.maximum(theta - half_angle, 0.0))
    lo_cos = np.cos(np.minimum(theta + half_angle, math.pi))
    zmax = np.where(hi_cos > 0, rhi * hi_cos, rlo * hi_cos)
    zmin = np.where(lo_cos < 0, rhi * lo_cos, rlo * lo_cos)
    return zmin, zmax


def auto_grids(phase, amplitude, lam, *, x_box=None, margin=1.02, min_n=8,
               one_sided=False):
    """x/y grids sized by the resolution rule for the given phase and lambda.

    The x box covers the amplitude's x window (or [-1,1]^d); the y box is
    the x box dilated by the radial support (one_sided restricts y to
    x - r > 0 for the 1-d curve phase).
    """
    d = phase.dim
    if x_box is None:
        if amplitude.x_knots:
            x_box = ((amplitude.x_knots[0], amplitude.x_knots[3]),) * d
        else:
            x_box = ((-1.0, 1.0),) * d
    rs = amplitude.r_support
    if rs is None:
        if amplitude.y_knots:
            y_box = ((amplitude.y_knots[0], amplitude.y_knots[3]),) * d
        else:
            y_box = x_box
    else:
        rlo, rhi = rs
        if one_sided and d == 1:
            y_box = ((x_box[0][0] - rhi, x_box[0][1] - rlo),)
        elif amplitude.cone_dir is not None:
            # the angular cutoff confines z = x - y to a spherical sector;
            # restrict the y box to x_box - sector (the kernel vanishes
            # outside), which shrinks the grid by ~1/aperture^(d-1)
            zmin, zmax = _sector_bounds(np.asarray(amplitude.cone_dir),
                                        2.0 * amplitude.cone_aperture, rlo, rhi)
            y_box = tuple((a - zhi, b - zlo)
                          for (a, b), zlo, zhi in zip(x_box, zmin, zmax))
        else:
            y_box = tuple((a - rhi, b + rhi) for a, b in x_box)
    # probe with a tiny grid to get gradient bounds, then rebuild sized
    r2lo = rs[0] ** 2 if rs else 1e-12
    r2hi = rs[1] ** 2 if rs else sum(
        (max(bx[1], by[1]) - min(bx[0], by[0])) ** 2 for bx, by in zip(x_box, y_box)
    ) + 1.0
    pid, tabA, tabB, bdup, mu = _phase_tables(phase, r2lo, r2hi)
    r = np.sqrt(np.linspace(max(r2lo, 1e-12), r2hi, len(tabA)))
    xmax = math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in x_box))
    ymax = math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in y_box))
    fx, fy = _grad_bounds(phase, tabA, tabB, r, xmax, ymax, bdup, mu)
    nx = ny = min_n
    for box, f in ((x_box, fx), (y_box, fy)):
        span = max(b - a for a, b in box)
        need = math.ceil(margin * span * lam * f / _MAX_PHASE_STEP)
        if box is x_box:
            nx = max(min_n, need)
        else:
            ny = max(min_n, need)
    if pid != 0 and mu == 0.0:
        # convolutional case: share the exact grid spacing (expanding each
        # box to a whole number of steps) so the FFT path engages
        h = min(max(b - a for a, b in x_box) / nx,
                max(b - a for a, b in y_box) / ny)

        def snap(box):
            n = max(math.ceil((b - a) / h - 1e-9) for a, b in box)
            out = []
            for a, b in box:
                pad = (n * h - (b - a)) / 2.0
                out.append((a - pad, b + pad))
            return n, tuple(out)

        nx, x_box = snap(x_box)
        ny, y_box = snap(y_box)
    return (GridSpec(d, nx, x_box), GridSpec(d, ny, y_box))


def decay_sweep(phase, amplitude, lambdas, *, tol=3e-4, max_iter=200, seed=0,
                one_sided=False, cache_limit=1.6e8):
    """Norms across a lambda sweep with auto-sized grids and the fitted slope.

    Raises if any norm estimate fails to converge (a bad point would
    silently poison the slope fit).
    """
    lambdas = sorted(float(l) for l in lambdas)
    if len(lambdas) < 4:
        raise ValueError("need at least 4 lambdas")
    entries = []
    for lam in lambdas:
        xg, yg = auto_grids(phase, amplitude, lam, one_sided=one_sided)
        op = build_operator(phase, amplitude, lam, yg, xg, cache_limit=cache_limit)
        res = operator_norm(op, tol=tol, max_iter=max_iter, seed=seed)
        if not res.converged:
            raise RuntimeError(
                f"norm did not converge at lambda={lam:g} "
                f"(residual {res.residual:.2e} after {res.iterations} iters)"
            )
        entries.append((lam, res.norm, res.iterations, res.residual))
    slope, stderr = fit_slope(entries)
    return NormDecaySeries(entries=entries, slope=slope, slope_stderr=stderr)
