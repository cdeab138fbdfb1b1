import math

import numpy as np
import pytest

import foldlab.opnorm as opnorm
from foldlab.geometry import DiagonalB
from foldlab.opnorm import (
    BACKEND,
    Amplitude,
    GridSpec,
    NormDecaySeries,
    ResolutionError,
    auto_grids,
    build_operator,
    decay_sweep,
    fit_slope,
    operator_norm,
)
from foldlab.phase import Family, PhaseSpec

RING = Amplitude(r_knots=(0.45, 0.7, 1.3, 1.55))
BILIN = PhaseSpec(Family.BILINEAR, n=1)
RAD = PhaseSpec(Family.RADIAL, beta=1.0, n=1)
TWISTED = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0, B=DiagonalB([0.0]))


class TestGridSpec:
    def test_midpoint_nodes(self):
        g = GridSpec(1, 4, ((0.0, 1.0),))
        assert np.allclose(g.axes()[0], [0.125, 0.375, 0.625, 0.875])
        assert g.weight == pytest.approx(0.25)
        assert g.total_nodes == 4

    def test_tensor_nodes(self):
        g = GridSpec(2, 3, ((0.0, 3.0), (-1.0, 1.0)))
        nodes = g.nodes()
        assert nodes.shape == (9, 2)
        assert g.spacings == (1.0, 2.0 / 3.0)
        assert g.weight == pytest.approx(2.0 / 3.0)

    def test_default_box(self):
        g = GridSpec(2, 4)
        assert g.box == ((-1.0, 1.0), (-1.0, 1.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec(0, 4)
        with pytest.raises(ValueError):
            GridSpec(1, 1)
        with pytest.raises(ValueError):
            GridSpec(1, 4, ((1.0, 0.0),))
        with pytest.raises(ValueError):
            GridSpec(2, 4, ((0.0, 1.0),))


class TestAmplitude:
    def test_plateau_value(self):
        a = Amplitude(x_knots=(-1.0, -0.5, 0.5, 1.0))
        assert a(np.zeros((1, 2)), np.ones((1, 2))) == pytest.approx(1.0)
        assert a(np.full((1, 2), 2.0), np.ones((1, 2))) == 0.0

    def test_radial_power(self):
        a = Amplitude(r_knots=(0.5, 0.9, 1.1, 1.5), r_power=2.0)
        x = np.array([[1.0, 0.0]])
        y = np.array([[0.0, 0.0]])
        assert a(x, y) == pytest.approx(1.0)  # bump plateau times r^{-2} at r=1

    def test_r_power_requires_r_knots(self):
        with pytest.raises(ValueError):
            Amplitude(r_power=1.0)

    def test_bad_knots(self):
        with pytest.raises(ValueError):
            Amplitude(x_knots=(0.0, 1.0, 0.5, 2.0))

    def test_cone_normalized(self):
        a = Amplitude(cone_dir=(3.0, 4.0))
        assert np.hypot(*a.cone_dir) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            Amplitude(cone_dir=(0.0, 0.0))

    def test_separable_product(self):
        a = Amplitude(x_knots=(-1, -0.5, 0.5, 1), y_knots=(-2, -1, 1, 2),
                      r_knots=(0.5, 0.9, 1.1, 1.5))
        x = np.array([[0.0, 0.0]])
        y = np.array([[0.95, 0.0]])
        ax = Amplitude(x_knots=(-1, -0.5, 0.5, 1))
        ay = Amplitude(y_knots=(-2, -1, 1, 2))
        ar = Amplitude(r_knots=(0.5, 0.9, 1.1, 1.5))
        assert a(x, y) == pytest.approx(ax(x, y) * ay(x, y) * ar(x, y))


def small_op(phase=RAD, amp=RING, lam=1.0, n=18, box=((-1.2, 1.2),) * 2, **kw):
    g = GridSpec(phase.dim, n, box[: phase.dim])
    return build_operator(phase, amp, lam, g, **kw)


class TestOperatorOracles:
    def test_dense_matches_matrix_free(self):
        op = small_op(prefer_fft=False)
        K = op.dense()
        rng = np.random.default_rng(0)
        f = rng.normal(size=K.shape[1]) + 1j * rng.normal(size=K.shape[1])
        assert np.allclose(op.apply(f), K @ f, rtol=1e-12, atol=1e-12)
        g = rng.normal(size=K.shape[0]) + 1j * rng.normal(size=K.shape[0])
        assert np.allclose(op.apply(g, adjoint=True), K.conj().T @ g, rtol=1e-12, atol=1e-12)

    def test_power_iteration_matches_svd(self):
        op = small_op(phase=TWISTED, lam=1.0, n=20)
        K = op.dense()
        sigma = np.linalg.svd(K, compute_uv=False)[0]
        res = operator_norm(op, tol=1e-10, max_iter=2000)
        assert res.converged
        assert res.norm == pytest.approx(sigma * op.scale, rel=1e-6)

    def test_norm_invariant_under_grid_refinement(self):
        # the sqrt(wx*wy) scaling makes the norm grid-size independent up to
        # quadrature error
        a = operator_norm(small_op(lam=1.0, n=18), tol=1e-8, max_iter=1000).norm
        b = operator_norm(small_op(lam=1.0, n=28), tol=1e-8, max_iter=1000).norm
        assert abs(a - b) / b < 5e-3

    def test_zero_frequency_volume(self):
        # lam = 0 with flat windows: kernel = amp, norm of the smoothing
        # operator f -> int rho(|x-y|) f dy is bounded by ||rho||_{L1 in y},
        # and for kernel identically 1 on a box it is sqrt(|X| |Y|)
        amp = Amplitude()
        g = GridSpec(1, 40, ((0.0, 2.0),))
        flat = PhaseSpec(Family.BILINEAR, dim_override=1)
        op = build_operator(flat, amp, 0.0, g)
        res = operator_norm(op, tol=1e-10, max_iter=500)
        assert res.norm == pytest.approx(2.0, rel=1e-9)  # sqrt(|X||Y|) = 2

    def test_fft_path_matches_direct(self):
        g = GridSpec(2, 48, ((-1.1, 1.1), (-1.1, 1.1)))
        op_f = build_operator(RAD, RING, 4.0, g, prefer_fft=True)
        op_d = build_operator(RAD, RING, 4.0, g, prefer_fft=False)
        assert op_f.use_fft and not op_d.use_fft
        rng = np.random.default_rng(1)
        f = rng.normal(size=op_f.shape[1]) + 1j * rng.normal(size=op_f.shape[1])
        # direct path interpolates radial tables; agreement is at table
        # accuracy, the FFT path being exact
        ref = op_f.apply(f)
        assert np.linalg.norm(op_d.apply(f) - ref) / np.linalg.norm(ref) < 1e-4
        ga = rng.normal(size=op_f.shape[0]) + 1j * rng.normal(size=op_f.shape[0])
        refa = op_f.apply(ga, adjoint=True)
        assert np.linalg.norm(op_d.apply(ga, adjoint=True) - refa) / np.linalg.norm(refa) < 1e-4

    def test_fft_adjoint_consistent(self):
        # <Af, g> = <f, A* g> on the FFT path
        phase = PhaseSpec(Family.CURVE, beta=1.0, mu=1.0, k=2)
        g = GridSpec(1, 256, ((-1.5, 1.5),))
        op = build_operator(phase, RING, 10.0, g)
        assert op.use_fft
        rng = np.random.default_rng(2)
        f = rng.normal(size=op.shape[1]) + 1j * rng.normal(size=op.shape[1])
        h = rng.normal(size=op.shape[0]) + 1j * rng.normal(size=op.shape[0])
        lhs = np.vdot(h, op.apply(f))
        rhs = np.vdot(op.apply(h, adjoint=True), f)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_twisted_phase_never_uses_fft(self):
        op = small_op(phase=TWISTED, lam=1.0, n=20)
        assert not op.use_fft

    def test_backends_agree(self):
        op_c = small_op(phase=TWISTED, lam=1.0, n=20, prefer_fft=False)
        saved = opnorm._kern
        try:
            opnorm._kern = opnorm._kernels_py
            op_p = small_op(phase=TWISTED, lam=1.0, n=20, prefer_fft=False)
        finally:
            opnorm._kern = saved
        rng = np.random.default_rng(3)
        f = rng.normal(size=op_c.shape[1]) + 1j * rng.normal(size=op_c.shape[1])
        a = op_c.apply(f)
        b = op_p.apply(f)
        assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-6

    def test_on_the_fly_matches_cached(self):
        op_c = small_op(lam=1.0, n=12, prefer_fft=False)
        op_s = small_op(lam=1.0, n=12, prefer_fft=False, cache_limit=0)
        assert op_c.cached and not op_s.cached
        rng = np.random.default_rng(4)
        f = rng.normal(size=op_c.shape[1]) + 1j * rng.normal(size=op_c.shape[1])
        # cached path stores complex64; agreement at single precision
        assert np.linalg.norm(op_c.apply(f) - op_s.apply(f)) / np.linalg.norm(op_s.apply(f)) < 1e-5

    def test_unimodular_invariance(self):
        # |e^{i lam Phi}| = 1: norm at lam and with conjugated phase agree;
        # here: curve phase with mu -> the kernel's modulus is the amplitude,
        # so the Frobenius norm is lam-independent
        op1 = small_op(lam=1.0, n=24, prefer_fft=False)
        op2 = small_op(lam=2.0, n=24, prefer_fft=False)
        f1 = np.linalg.norm(op1.dense())
        f2 = np.linalg.norm(op2.dense())
        assert f1 == pytest.approx(f2, rel=1e-5)


class TestResolutionRule:
    def test_rejects_coarse_grid(self):
        with pytest.raises(ResolutionError) as ei:
            small_op(lam=500.0, n=10)
        assert "points_per_axis" in str(ei.value)

    def test_error_reports_sufficient_count(self):
        with pytest.raises(ResolutionError) as ei:
            small_op(lam=20.0, n=10)
        need = int(str(ei.value).split("points_per_axis >= ")[1].split(",")[0])
        # rebuilding at the advertised count must succeed
        small_op(lam=20.0, n=need)

    def test_singular_phase_requires_r_cutoff(self):
        with pytest.raises(ValueError):
            small_op(amp=Amplitude(), lam=1.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            small_op(lam=-1.0)


class TestAutoGrids:
    def test_y_box_covers_x_box_dilated(self):
        xg, yg = auto_grids(RAD, RING, 8.0)
        rhi = RING.r_support[1]
        for (xa, xb), (ya, yb) in zip(xg.box, yg.box):
            assert ya <= xa - rhi + 1e-9 and yb >= xb + rhi - 1e-9

    def test_resolution_satisfied(self):
        for lam in (4.0, 16.0):
            xg, yg = auto_grids(RAD, RING, lam)
            build_operator(RAD, RING, lam, yg, xg)  # must not raise

    def test_convolutional_grids_share_spacing(self):
        xg, yg = auto_grids(RAD, RING, 64.0)
        assert xg.spacings[0] == pytest.approx(yg.spacings[0], rel=1e-13)

    def test_one_sided_curve(self):
        phase = PhaseSpec(Family.CURVE, beta=1.0, mu=1.0, k=2)
        amp = Amplitude(x_knots=(-0.5, -0.35, 0.35, 0.5), r_knots=(0.45, 0.7, 1.3, 1.55))
        xg, yg = auto_grids(phase, amp, 16.0, one_sided=True)
        # boxes may be padded by up to one spacing to share the grid step
        slack = yg.spacings[0] + 1e-9
        assert yg.box[0][1] <= xg.box[0][1] - RING.r_support[0] + slack


class TestSlopeFitting:
    def test_exact_power_law(self):
        entries = [(l, 3.0 * l**-0.5, 0, 0.0) for l in (2.0, 4.0, 8.0, 16.0)]
        slope, err = fit_slope(entries)
        assert slope == pytest.approx(-0.5, abs=1e-12)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_stderr_reflects_scatter(self):
        rng = np.random.default_rng(5)
        entries = [(l, l**-1.0 * math.exp(0.05 * rng.normal()), 0, 0.0)
                   for l in np.geomspace(2, 64, 8)]
        slope, err = fit_slope(entries)
        assert abs(slope + 1.0) < 0.1
        assert 0.0 < err < 0.1

    def test_requires_three_points(self):
        with pytest.raises(ValueError):
            fit_slope([(1.0, 1.0, 0, 0.0), (2.0, 0.5, 0, 0.0)])

    def test_series_validation(self):
        with pytest.raises(ValueError):
            NormDecaySeries(entries=[(2.0, 1.0, 0, 0.0), (1.0, 1.0, 0, 0.0)])
        with pytest.raises(ValueError):
            NormDecaySeries(entries=[(1.0, -1.0, 0, 0.0), (2.0, 1.0, 0, 0.0)])


CURVE = PhaseSpec(Family.CURVE, beta=1.0, mu=1.0, k=2)
CURVE_AMP = Amplitude(x_knots=(-0.5, -0.35, 0.35, 0.5), r_knots=(0.45, 0.7, 1.3, 1.55))


class TestDecaySweep:
    # the 1-d curve phase keeps these cheap; the full 2-d sweeps are
    # exercised by the acceptance suite
    def test_curve_sweep_small(self):
        series = decay_sweep(CURVE, CURVE_AMP, [16.0, 32.0, 64.0, 128.0],
                             tol=1e-5, one_sided=True)
        assert len(series.entries) == 4
        assert series.slope < -0.1  # oscillation produces genuine decay
        norms = [e[1] for e in series.entries]
        assert all(n > 0 for n in norms)

    def test_deterministic(self):
        kw = dict(tol=1e-5, one_sided=True, seed=7)
        a = decay_sweep(CURVE, CURVE_AMP, [16.0, 32.0, 64.0, 128.0], **kw)
        b = decay_sweep(CURVE, CURVE_AMP, [16.0, 32.0, 64.0, 128.0], **kw)
        assert a.entries == b.entries

    def test_requires_four_lambdas(self):
        with pytest.raises(ValueError):
            decay_sweep(RAD, RING, [1.0, 2.0, 4.0])


def test_backend_reports_compiled():
    # the build installs the compiled extension; the fallback stays importable
    assert BACKEND in ("compiled", "python")
    import foldlab._kernels_py  # noqa: F401


class TestTwistedRadialNorm:
    """The twisted operator with radial kernel is diagonal over Landau
    levels; oracles below validate the eigenvalue formula from scratch."""

    def _landau(self, lam):
        return opnorm.twisted_radial_norm(TWISTED, RING, lam)

    def test_coherent_state_is_eigenfunction(self):
        # apply the continuum operator by direct quadrature to the ground
        # coherent state exp(-c|y|^2/2); the ratio (Tf)(x)/f(x) must be a
        # single complex constant equal to the level-0 Laguerre transform
        from foldlab.cutoffs import bump

        lam, mu = 2.0, 1.0
        c = 2 * lam * mu
        n, L = 400, 4.0
        ax = (np.arange(n) - n / 2 + 0.5) * (2 * L / n)
        dy = ax[1] - ax[0]
        Y1, Y2 = np.meshgrid(ax, ax, indexing="ij")
        f = np.exp(-c * (Y1**2 + Y2**2) / 2)
        ratios = []
        for x in [(0.3, -0.8), (-1.0, 0.2), (0.6, 0.6), (0.0, 1.1)]:
            Z1, Z2 = x[0] - Y1, x[1] - Y2
            rr = np.hypot(Z1, Z2)
            k = bump(rr.ravel(), *RING.r_knots).reshape(rr.shape)
            k = k * np.exp(1j * lam / np.where(rr > 0, rr, 1.0))
            tw = np.exp(1j * c * (x[0] * Y2 - x[1] * Y1))
            g = np.sum(k * tw * f) * dy * dy
            ratios.append(g / np.exp(-c * (x[0] ** 2 + x[1] ** 2) / 2))
        ratios = np.array(ratios)
        assert np.max(np.abs(ratios - ratios.mean())) < 1e-6
        r = np.linspace(0.45, 1.55, 100001)
        a = bump(r, *RING.r_knots)
        e0 = 2 * math.pi * np.trapezoid(
            a * np.exp(1j * lam / r) * np.exp(-c * r * r / 2) * r, r)
        assert abs(ratios.mean() - e0) < 1e-6

    def test_norm_dominates_windowed_grid_operator(self):
        # multiplying by a spatial window can only shrink the norm, and
        # widening the window recovers more of it
        lam = 8.0
        norms = []
        for w in (0.25, 0.5):
            amp = Amplitude(x_knots=(-w, -0.7 * w, 0.7 * w, w),
                            r_knots=RING.r_knots)
            grid, xgrid = auto_grids(TWISTED, amp, lam)
            op = build_operator(TWISTED, amp, lam, grid, xgrid)
            norms.append(operator_norm(op, tol=1e-4).norm)
        full = self._landau(lam).norm
        assert norms[0] < norms[1] <= full * 1.02
        assert norms[1] > 0.3 * full

    def test_quadrature_and_level_cutoff_converged(self):
        res = self._landau(32.0)
        fine = opnorm.twisted_radial_norm(TWISTED, RING, 32.0,
                                          ell_max=res.levels + 200,
                                          n_r=120001)
        assert abs(res.norm - fine.norm) < 1e-8
        assert res.level == fine.level

    def test_cond_i_kernel_supported(self):
        ph = PhaseSpec(Family.COND_I, beta=1.0, mu=1.0, kappa=3.0, n=1)
        res = opnorm.twisted_radial_norm(ph, RING, 16.0)
        assert res.norm > 0
        # phi_scale changes the radial phase, hence the norm
        ph2 = PhaseSpec(Family.COND_I, beta=1.0, mu=1.0, kappa=3.0,
                        phi_scale=2.0, n=1)
        assert opnorm.twisted_radial_norm(ph2, RING, 16.0).norm != res.norm

    def test_validation(self):
        with pytest.raises(ValueError, match="nonzero"):
            opnorm.twisted_radial_norm(RAD, RING, 4.0)
        with pytest.raises(ValueError, match="B = 0"):
            ph = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0,
                           B=DiagonalB([0.5]))
            opnorm.twisted_radial_norm(ph, RING, 4.0)
        with pytest.raises(ValueError, match="radial"):
            amp = Amplitude(x_knots=(-1, -0.7, 0.7, 1), r_knots=RING.r_knots)
            opnorm.twisted_radial_norm(TWISTED, amp, 4.0)
        with pytest.raises(ValueError, match="radial"):
            amp = Amplitude(r_knots=RING.r_knots, cone_dir=(1.0, 0.0))
            opnorm.twisted_radial_norm(TWISTED, amp, 4.0)
        with pytest.raises(ValueError, match="positive"):
            opnorm.twisted_radial_norm(TWISTED, RING, 0.0)
        with pytest.raises(ValueError, match="planar"):
            ph4 = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0, n=2,
                            B=DiagonalB([0.0, 0.0]))
            opnorm.twisted_radial_norm(ph4, RING, 4.0)
