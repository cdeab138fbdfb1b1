"""Quantitative acceptance battery.

Each test prints one `[PRIMARY] criterion N` pass/fail line with the
measured values, and asserts the stated tolerance and runtime budget.
Everything is seeded and deterministic.
"""

import math
import time

import numpy as np
import pytest

from foldlab.canrel import (
    check_fold,
    curve_fold_check,
    numeric_radius,
    singular_radius,
    variety_residual,
)
from foldlab.cutoffs import build_cutoffs, theta_partition_sum
from foldlab.decomp import (
    AmplitudeSpec,
    cotlar_assemble,
    critical_band,
    key_estimate_sweep,
    ortho_sweep,
    regime_check,
)
from foldlab.geometry import DiagonalB
from foldlab.opnorm import Amplitude, decay_sweep, fit_slope, twisted_radial_norm
from foldlab.phase import (
    Family,
    PhaseSpec,
    fefferman_det,
    heisenberg_det,
    mixed_hessian,
    mixed_hessian_aligned,
)


def report(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\n[PRIMARY] criterion {num} ({name}): {status} — {detail}")
    return ok


def test_criterion_01_determinant_identities():
    t0 = time.time()
    rng = np.random.default_rng(0)
    worst = 0.0
    for beta in (0.5, 1.0, 2.0):
        for n in (1, 2):
            spec = PhaseSpec(Family.RADIAL, beta=beta, n=n)
            for _ in range(100):
                r = float(rng.uniform(0.3, 2.0))
                x = rng.normal(size=2 * n)
                u = rng.normal(size=2 * n)
                u /= np.linalg.norm(u)
                direct = float(np.linalg.det(mixed_hessian(spec, x, x - r * u)))
                rel = abs(fefferman_det(beta, n, r) - direct) / abs(direct)
                worst = max(worst, rel)
                mu = float(rng.uniform(0.2, 2.0))
                B = DiagonalB(rng.uniform(-1.0, 1.0, size=n))
                direct = float(np.linalg.det(mixed_hessian_aligned(beta, B, r, mu)))
                rel = abs(heisenberg_det(beta, B, r, mu) - direct) / max(abs(direct), 1e-300)
                worst = max(worst, rel)
    anchor = fefferman_det(1.0, 1, 1.0)
    elapsed = time.time() - t0
    ok = worst < 1e-6 and abs(anchor + 2.0) < 1e-12 and elapsed < 5.0
    assert report(1, "determinant identities", ok,
                  f"max rel err {worst:.2e} (tol 1e-6), "
                  f"det(beta=1,n=1,r=1) = {anchor:.12g} (expect -2), {elapsed:.2f}s")


def test_criterion_02_singular_radius():
    t0 = time.time()
    v = singular_radius(1.0, 0.0, 1.0)
    q_err = abs(v.Q_root - math.sqrt(2.0))
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        beta = float(rng.uniform(0.3, 3.0))
        b1 = float(rng.uniform(-2.0, 2.0))
        worst = max(worst, variety_residual(beta, b1, mu=1.0))
    elapsed = time.time() - t0
    ok = q_err < 1e-12 and worst < 1e-10 and elapsed < 1.0
    assert report(2, "singular radius", ok,
                  f"Q root {v.Q_root:.12g} (expect sqrt(2)), "
                  f"worst plug-back residual {worst:.2e} (tol 1e-10), {elapsed:.2f}s")


def test_criterion_03_fold_conditions():
    t0 = time.time()
    spec = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0, B=DiagonalB([0.0]))
    rep = check_fold(spec, samples=50, theta=0.1, seed=0)
    spec_rho = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0, B=DiagonalB([0.0]),
                         rho=1e-3)
    rep_rho = check_fold(spec_rho, samples=50, theta=0.1, seed=0,
                         radius=numeric_radius(spec_rho))
    elapsed = time.time() - t0
    ok = (rep.all_ok and rep.min_margin >= 0.1
          and rep_rho.all_ok and rep_rho.min_margin >= 0.1
          and elapsed < 10.0)
    assert report(3, "fold conditions", ok,
                  f"50 pts corank/1st-order/transversality = "
                  f"{rep.corank_ok}/{rep.first_order_ok}/{rep.transversality_ok}, "
                  f"margin {rep.min_margin:.3f} (>= 0.1); with rho=1e-3: "
                  f"{rep_rho.all_ok}, margin {rep_rho.min_margin:.3f}, {elapsed:.2f}s")


def test_criterion_04_curve_fold():
    t0 = time.time()
    x0, third = curve_fold_check(1.0, 2, 1.0)
    elapsed = time.time() - t0
    ok = abs(x0 - 1.0) < 1e-8 and abs(third + 6.0) < 1e-6 and elapsed < 1.0
    assert report(4, "curve fold point", ok,
                  f"x0 = {x0:.12g} (expect 1 +- 1e-8), "
                  f"third derivative = {third:.12g} (expect -6 +- 1e-6), {elapsed:.2f}s")


def test_criterion_05_nondegenerate_vs_fold_rates():
    t0 = time.time()
    lambdas = [2.0**k for k in range(6, 13)]
    bilin = PhaseSpec(Family.BILINEAR, dim_override=1)
    amp_b = Amplitude(x_knots=(-0.5, -0.35, 0.35, 0.5),
                      y_knots=(-0.5, -0.35, 0.35, 0.5))
    s_bilin = decay_sweep(bilin, amp_b, lambdas)
    curve = PhaseSpec(Family.CURVE, beta=1.0, mu=1.0, k=2)
    amp_c = Amplitude(x_knots=(-0.5, -0.35, 0.35, 0.5),
                      r_knots=(0.45, 0.7, 1.3, 1.55))
    s_curve = decay_sweep(curve, amp_c, lambdas, one_sided=True)
    sep = s_curve.slope - s_bilin.slope
    elapsed = time.time() - t0
    ok = (abs(s_bilin.slope + 0.5) < 0.05 and abs(s_curve.slope + 1.0 / 3.0) < 0.05
          and sep >= 0.1 and elapsed < 60.0)
    assert report(5, "nondegenerate vs fold decay", ok,
                  f"bilinear slope {s_bilin.slope:.4f} (expect -0.5 +- 0.05), "
                  f"curve slope {s_curve.slope:.4f} (expect -1/3 +- 0.05), "
                  f"separation {sep:.3f} (>= 0.1), {elapsed:.1f}s")


def test_criterion_06_twisted_fold_rates():
    t0 = time.time()
    lambdas = [2.0**k for k in range(3, 8)]
    twisted = PhaseSpec(Family.COND_II, beta=1.0, mu=1.0, B=DiagonalB([0.0]))
    amp_t = Amplitude(r_knots=(0.45, 0.7, 1.3, 1.55))
    crit_entries = [(lam, twisted_radial_norm(twisted, amp_t, lam).norm)
                    for lam in lambdas]
    crit_slope, _ = fit_slope(crit_entries)
    radial = PhaseSpec(Family.RADIAL, beta=1.0, n=1)
    amp_r = Amplitude(x_knots=(-1.5, -1.05, 1.05, 1.5),
                      r_knots=(0.45, 0.7, 1.3, 1.55))
    s_zero = decay_sweep(radial, amp_r, lambdas)
    elapsed = time.time() - t0
    ok = (abs(crit_slope + 5.0 / 6.0) < 0.1 and abs(s_zero.slope + 1.0) < 0.1
          and elapsed < 600.0)
    assert report(6, "planar twisted decay", ok,
                  f"critical-coupling slope {crit_slope:.4f} (expect -5/6 +- 0.1), "
                  f"zero-coupling slope {s_zero.slope:.4f} (expect -1 +- 0.1), "
                  f"{elapsed:.1f}s")


def test_criterion_07_key_estimate():
    t0 = time.time()
    results = {}
    for alpha, expect in ((0.0, -5.0 / 6.0), (5.0 / 6.0, 0.0), (1.0, 1.0 / 6.0)):
        aspec = AmplitudeSpec(alpha=alpha, beta=1.0, n=1)
        series = key_estimate_sweep(aspec, [2, 3, 4, 5, 6], eps=0.5, n_tau=3)
        results[alpha] = (series.slope, expect)
    elapsed = time.time() - t0
    ok = all(abs(s - e) < 0.15 for s, e in results.values()) and elapsed < 900.0
    detail = ", ".join(
        f"alpha={a:g}: slope {s:.3f} (expect {e:+.3f} +- 0.15)"
        for a, (s, e) in results.items())
    assert report(7, "dyadic key estimate", ok, f"{detail}, {elapsed:.1f}s")


def test_criterion_08_almost_orthogonality():
    t0 = time.time()
    aspec = AmplitudeSpec(alpha=5.0 / 6.0, beta=1.0, n=1)
    j = 2
    sweep = ortho_sweep(aspec, j, [j + g for g in range(5)], eps=0.5, n_tau=1)
    submult = all(r.submultiplicative for r in sweep.rows)
    elapsed = time.time() - t0
    max_slope = -aspec.beta / 6.0 + 0.1
    ok = sweep.slope <= max_slope and submult and elapsed < 900.0
    assert report(8, "almost orthogonality", ok,
                  f"composed-norm slope {sweep.slope:.3f} (<= {max_slope:.3f}), "
                  f"submultiplicative at every gap: {submult}, {elapsed:.1f}s")


def test_criterion_09_regime_bounds():
    t0 = time.time()
    aspec = AmplitudeSpec(alpha=0.5, beta=1.0, n=1)
    j = 2
    _, hi = critical_band(j, aspec.beta, 0.25)
    table = regime_check(aspec, j, [0.0, 2 * hi, 8 * hi, 32 * hi], eps=0.25)
    elapsed = time.time() - t0
    ok = table.fitted_A <= 10.0 and not table.flagged and elapsed < 300.0
    assert report(9, "off-band regime bounds", ok,
                  f"fitted constant A = {table.fitted_A:.3f} (<= 10) over "
                  f"{len(table.rows)} couplings, {elapsed:.1f}s")


def test_criterion_10_partitions_and_cotlar():
    t0 = time.time()
    t = np.concatenate([np.geomspace(1e-9, 0.5, 400), np.linspace(0.25, 1.0, 1201)])
    theta_err = float(np.abs(theta_partition_sum(t[t <= 0.5]) - 1.0).max())
    fam = build_cutoffs(0.125)
    chi_err = float(np.abs(fam.chi_sum(np.linspace(0.25, 1.0, 1201)) - 1.0).max())
    bound = cotlar_assemble({k: 4.0**-k for k in range(6)})
    with pytest.raises(ValueError):
        cotlar_assemble({0: 1.0, 1: 1.0, 2: 1.0})
    elapsed = time.time() - t0
    ok = (theta_err < 1e-12 and chi_err < 1e-12
          and math.isfinite(bound.total) and elapsed < 1.0)
    assert report(10, "partitions and Cotlar assembly", ok,
                  f"ring-partition err {theta_err:.2e}, patch-partition err "
                  f"{chi_err:.2e} (tol 1e-12), Cotlar total {bound.total:.6g} "
                  f"(finite; non-decaying gains raise), {elapsed:.2f}s")
