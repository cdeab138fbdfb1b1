"""Experiment runner: `foldlab run <config.json>` and `foldlab list`.

Each experiment reads a JSON config, runs one sweep or check, writes a
CSV of per-measurement rows and a summary JSON, and exits 0 if every
declared check passed, 2 if a tolerance failed, 1 on usage/config errors.
Runs are deterministic given (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import canrel, decomp, opnorm, phase
from .geometry import DiagonalB

CSV_SCHEMA_VERSION = 1

_EXPERIMENTS = {}


def _experiment(name, anchor):
    def deco(fn):
        _EXPERIMENTS[name] = (fn, anchor)
        return fn
    return deco


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


class ExperimentResult:
    def __init__(self, columns):
        self.columns = columns
        self.rows = []
        self.summary = {}
        self.passed = True

    def add_row(self, **kw):
        self.rows.append([kw.get(c, "") for c in self.columns])

    def check(self, name, ok, value):
        self.summary[name] = {"value": value, "pass": bool(ok)}
        self.passed = self.passed and bool(ok)


def _phase_from_params(p):
    fam = phase.Family(p.get("family", "cond_ii"))
    kw = dict(
        family=fam,
        beta=float(p.get("beta", 1.0)),
        n=int(p.get("n", 1)),
        mu=float(p.get("mu", 1.0)),
        kappa=float(p.get("kappa", 3.0)),
        k=int(p.get("k", 2)),
        rho=float(p.get("rho", 0.0)),
    )
    if "b" in p:
        kw["B"] = DiagonalB([float(v) for v in p["b"]])
    if "dim" in p:
        kw["dim_override"] = int(p["dim"])
    return phase.PhaseSpec(**kw)


def _validate_beta(p):
    beta = float(p.get("beta", 1.0))
    if beta <= 0 or beta == -1.0:
        raise ConfigError(
            f"beta={beta:g} violates the precondition beta > 0 "
            "(the determinant device also requires beta != -1)")
    return beta


class ConfigError(ValueError):
    pass


@_experiment("det-verify", "mixed-Hessian determinant factorizations")
def _run_det_verify(p, seed, rng):
    beta_list = p.get("betas", [0.5, 1.0, 2.0])
    n_list = p.get("ns", [1, 2])
    samples = int(p.get("samples", 100))
    tol = float(p.get("tol", 1e-6))
    for beta in beta_list:
        if beta <= 0:
            raise ConfigError(f"beta={beta:g} violates beta > 0")
    res = ExperimentResult(
        ["kind", "beta", "n", "r", "mu", "closed_form", "direct", "rel_err"])
    worst = 0.0
    for beta in beta_list:
        for n in n_list:
            for _ in range(samples):
                r = float(rng.uniform(0.3, 2.0))
                d = 2 * n
                # radial determinant against a direct eigenvalue product
                closed = phase.fefferman_det(beta, n, r)
                x = rng.normal(size=d)
                u = rng.normal(size=d)
                u /= np.linalg.norm(u)
                spec = phase.PhaseSpec(family=phase.Family.RADIAL, beta=beta, n=n)
                direct = float(np.linalg.det(
                    phase.mixed_hessian(spec, x, x - r * u)))
                rel = abs(closed - direct) / abs(direct)
                worst = max(worst, rel)
                res.add_row(kind="radial", beta=beta, n=n, r=r, mu=0.0,
                            closed_form=closed, direct=direct, rel_err=rel)
                # twisted determinant in the aligned frame
                mu = float(rng.uniform(0.2, 2.0))
                bvals = [float(rng.uniform(-1.0, 1.0)) for _ in range(n)]
                B = DiagonalB(bvals)
                closed = phase.heisenberg_det(beta, B, r, mu)
                direct = float(np.linalg.det(
                    phase.mixed_hessian_aligned(beta, B, r, mu)))
                rel = abs(closed - direct) / max(abs(direct), 1e-300)
                worst = max(worst, rel)
                res.add_row(kind="twisted", beta=beta, n=n, r=r, mu=mu,
                            closed_form=closed, direct=direct, rel_err=rel)
    res.check("max_rel_err", worst < tol, worst)
    res.summary["tol"] = tol
    return res


@_experiment("fold-check", "fold conditions on the singular variety")
def _run_fold_check(p, seed, rng):
    beta = _validate_beta(p)
    samples = int(p.get("samples", 50))
    theta = float(p.get("theta", 0.1))
    rho = float(p.get("rho", 0.0))
    spec = phase.PhaseSpec(family=phase.Family.COND_II, beta=beta,
                           n=int(p.get("n", 1)), mu=float(p.get("mu", 1.0)),
                           B=DiagonalB([float(v) for v in p.get("b", [0.0])]),
                           rho=rho)
    rep = canrel.check_fold(spec, samples=samples, theta=theta, seed=seed)
    res = ExperimentResult(
        ["points_tested", "radius", "min_margin", "gradient_direction_error"])
    res.add_row(points_tested=rep.points_tested, radius=rep.variety.radius,
                min_margin=rep.min_margin,
                gradient_direction_error=rep.det_gradient_direction_error)
    res.check("corank_one", rep.corank_ok, rep.points_tested)
    res.check("first_order_vanishing", rep.first_order_ok, rep.min_margin)
    res.check("transversality", rep.transversality_ok, rep.min_margin)
    return res


@_experiment("curve-fold", "one-dimensional fold point of the curve phase")
def _run_curve_fold(p, seed, rng):
    beta = _validate_beta(p)
    k = int(p.get("k", 2))
    mu = float(p.get("mu", 1.0))
    x0, third = canrel.curve_fold_check(beta, k, mu)
    res = ExperimentResult(["beta", "k", "mu", "x0", "third_derivative"])
    res.add_row(beta=beta, k=k, mu=mu, x0=x0, third_derivative=third)
    res.check("third_derivative_nonzero", abs(third) > 1e-10, third)
    res.summary["x0"] = x0
    return res


@_experiment("rate-sweep", "operator-norm decay across a lambda sweep")
def _run_rate_sweep(p, seed, rng):
    spec = _phase_from_params(p)
    _validate_beta(p)
    lam_lo, lam_hi = (int(v) for v in p.get("lambda_exponents", [6, 12]))
    lambdas = [2.0**k for k in range(lam_lo, lam_hi + 1)]
    amp = opnorm.Amplitude(
        x_knots=tuple(p["x_knots"]) if "x_knots" in p else None,
        y_knots=tuple(p["y_knots"]) if "y_knots" in p else None,
        r_knots=tuple(p["r_knots"]) if "r_knots" in p else None,
        r_power=float(p.get("r_power", 0.0)),
        cone_dir=tuple(p["cone_dir"]) if "cone_dir" in p else None,
        cone_aperture=float(p.get("cone_aperture", 0.25)),
    )
    series = opnorm.decay_sweep(
        spec, amp, lambdas, tol=float(p.get("norm_tol", 3e-4)),
        seed=seed, one_sided=bool(p.get("one_sided", False)))
    res = ExperimentResult(["lambda", "norm", "iterations", "residual"])
    for lam, nrm, its, rr in series.entries:
        res.add_row(**{"lambda": lam, "norm": nrm, "iterations": its,
                       "residual": rr})
    res.summary["slope"] = series.slope
    res.summary["slope_stderr"] = series.slope_stderr
    if "expect_slope" in p:
        tol = float(p.get("slope_tol", 0.05))
        ok = abs(series.slope - float(p["expect_slope"])) <= tol
        res.check("slope", ok, series.slope)
    return res


def _aspec_from_params(p):
    return decomp.AmplitudeSpec(
        alpha=float(p.get("alpha", 0.0)),
        beta=float(p.get("beta", 1.0)),
        n=int(p.get("n", 1)),
        delta=float(p.get("delta", 0.125)),
        h_patch=p.get("h_patch"),
        x_half_width=float(p.get("x_half_width", 0.12)),
        use_cone=bool(p.get("use_cone", True)),
    )


@_experiment("key-estimate", "dyadic-piece norm growth across j")
def _run_key_estimate(p, seed, rng):
    _validate_beta(p)
    aspec = _aspec_from_params(p)
    j_list = list(p.get("j_list", [2, 3, 4, 5, 6]))
    series = decomp.key_estimate_sweep(
        aspec, j_list, condition=p.get("condition", "II"),
        eps=float(p.get("eps", 0.5)), n_tau=int(p.get("n_tau", 3)),
        kappa=float(p.get("kappa", 3.0)), b=p.get("b"),
        tol=float(p.get("norm_tol", 3e-4)), seed=seed)
    res = ExperimentResult(["j", "norm", "tau_at_max", "iterations"])
    for j, nrm, tau, its in series.entries:
        res.add_row(j=j, norm=nrm, tau_at_max=tau, iterations=its)
    res.summary["slope"] = series.slope
    res.summary["slope_stderr"] = series.slope_stderr
    if "expect_slope" in p:
        ok = abs(series.slope - float(p["expect_slope"])) <= float(
            p.get("slope_tol", 0.15))
        res.check("slope", ok, series.slope)
    return res


@_experiment("ortho-sweep", "composed-norm decay in the dyadic gap")
def _run_ortho(p, seed, rng):
    _validate_beta(p)
    aspec = _aspec_from_params(p)
    j = int(p.get("j", 2))
    gaps = list(p.get("gaps", [0, 1, 2, 3, 4]))
    sweep = decomp.ortho_sweep(
        aspec, j, [j + g for g in gaps], condition=p.get("condition", "II"),
        eps=float(p.get("eps", 0.5)), n_tau=int(p.get("n_tau", 1)),
        tol=float(p.get("norm_tol", 3e-4)), seed=seed)
    res = ExperimentResult(
        ["gap", "jprime", "tau", "composed", "norm_j", "norm_jprime",
         "submultiplicative"])
    for r in sweep.rows:
        res.add_row(gap=r.gap, jprime=r.jprime, tau=r.tau,
                    composed=r.composed, norm_j=r.norm_j,
                    norm_jprime=r.norm_jprime,
                    submultiplicative=r.submultiplicative)
    res.summary["slope"] = sweep.slope
    res.check("submultiplicativity",
              all(r.submultiplicative for r in sweep.rows),
              min((r.norm_j * r.norm_jprime - r.composed) for r in sweep.rows))
    if "max_slope" in p:
        res.check("slope", sweep.slope <= float(p["max_slope"]), sweep.slope)
    return res


@_experiment("regime-check", "off-band norm bounds")
def _run_regime(p, seed, rng):
    _validate_beta(p)
    aspec = _aspec_from_params(p)
    j = int(p.get("j", 2))
    eps = float(p.get("eps", 0.25))
    if "tau_list" in p:
        taus = [float(t) for t in p["tau_list"]]
    else:
        _, hi = decomp.critical_band(j, aspec.beta, eps)
        taus = [0.0, 2 * hi, 8 * hi, 32 * hi]
    table = decomp.regime_check(aspec, j, taus, eps=eps,
                                condition=p.get("condition", "II"),
                                tol=float(p.get("norm_tol", 3e-4)), seed=seed)
    res = ExperimentResult(["tau", "norm", "bound", "ratio"])
    for r in table.rows:
        res.add_row(tau=r.tau, norm=r.norm, bound=r.bound,
                    ratio=r.norm / r.bound)
    res.summary["fitted_A"] = table.fitted_A
    res.check("A_bounded", table.fitted_A <= float(p.get("max_A", 10.0)),
              table.fitted_A)
    return res


@_experiment("cotlar", "geometric assembly of composed-norm gains")
def _run_cotlar(p, seed, rng):
    gains = {int(k): float(v) for k, v in p.get("gains", {}).items()}
    if not gains:
        raise ConfigError("cotlar requires a 'gains' map {k: bound}")
    bound = decomp.cotlar_assemble(gains)
    res = ExperimentResult(["k", "gain", "sqrt_gain"])
    for k in sorted(gains):
        res.add_row(k=k, gain=gains[k], sqrt_gain=math.sqrt(gains[k]))
    res.summary["partial_sum"] = bound.partial_sum
    res.summary["tail"] = bound.tail
    res.summary["total"] = bound.total
    res.summary["rate"] = bound.rate
    res.check("finite", math.isfinite(bound.total), bound.total)
    return res


_ANCHORS = {
    "det-verify": "closed-form mixed-Hessian determinants (rotation device)",
    "fold-check": "corank/derivative/transversality on the singular variety",
    "curve-fold": "vanishing second derivative, nonzero third (plane curve)",
    "rate-sweep": "nondegenerate -d/2 vs fold -d/2+1/6 norm decay",
    "key-estimate": "worst-case dyadic norms over the critical coupling band",
    "ortho-sweep": "almost-orthogonality gain 2^{-beta |j-j'| / 6}",
    "regime-check": "off-band min(2^{-j n beta}, 2^{2jn}|tau|^{-n}) bounds",
    "cotlar": "Cotlar-Stein summation of composed-norm gains",
}


def list_experiments() -> str:
    lines = ["available experiments:"]
    for name in sorted(_EXPERIMENTS):
        lines.append(f"  {name:<14} {_ANCHORS[name]}")
    return "\n".join(lines)


def _config_hash(cfg) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run(config: dict, out_dir: Path, seed: int | None = None,
        threads: int | None = None) -> int:
    name = config.get("experiment")
    if name not in _EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; choose from "
            f"{', '.join(sorted(_EXPERIMENTS))}")
    params = dict(config.get("parameters", {}))
    seed = int(config.get("seed", 0)) if seed is None else int(seed)
    if threads:
        os.environ["FOLDLAB_THREADS"] = str(threads)
    fn, _ = _EXPERIMENTS[name]
    rng = np.random.default_rng(seed)
    t0 = time.time()
    result = fn(params, seed, rng)
    wall = time.time() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = _config_hash({"experiment": name, "parameters": params})
    csv_path = out_dir / f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# foldlab csv schema v{CSV_SCHEMA_VERSION}; "
                 f"experiment={name}; config_hash={chash}; seed={seed}\n")
        w = csv.writer(fh)
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_fmt(v) for v in row])
    summary = {
        "experiment": name,
        "config_hash": chash,
        "seed": seed,
        "results": result.summary,
        "pass": result.passed,
        "wall_time_s": round(wall, 3),
    }
    with open(out_dir / f"{name}.summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")
    print(f"{name}: {'PASS' if result.passed else 'FAIL'} "
          f"({wall:.1f}s) -> {csv_path}")
    return 0 if result.passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="foldlab", description="oscillatory-integral experiment runner")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("foldlab-out"))
    p_run.add_argument("--threads", type=int,
                       default=int(os.environ.get("FOLDLAB_THREADS", "0")) or None)
    p_run.add_argument("--seed", type=int, default=None)
    sub.add_parser("list", help="list experiments")
    args = parser.parse_args(argv)
    if args.cmd == "list":
        print(list_experiments())
        return 0
    try:
        config = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 1
    try:
        return run(config, args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
