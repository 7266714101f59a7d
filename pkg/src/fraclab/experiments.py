"""Experiment drivers: each returns its data files as ``{name: bytes}``.

Output bytes depend only on the configuration (seeds included), never on
time or environment, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .config import ConfigError, ExperimentConfig
from .elliptic import NonlocalProblem, bass_ren_check, self_improvement_scan, solve_stiffness
from .forms import FormOperator, sobolev_gram_norm
from .kernels import validate
from .lattice import bandlimited
from .localization import Cutoff, cutoff_norm_transfer, local_improvement_experiment
from .norms import Ball, norm_report, sobolev_exponents, sobolev_norm
from .parabolic import SeparableForcing, TimeCircle, parabolic_self_improvement, solve_cauchy
from .probe import lambda_trend, sweep

__all__ = ["run_experiment", "to_json", "to_csv"]


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_plain(x.real), _plain(x.imag)]
    if x is None or isinstance(x, str):
        return x
    raise TypeError(f"cannot serialize {type(x).__name__}")


def to_json(obj) -> bytes:
    return (json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n").encode()


def to_csv(rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode()


def _field_header(values: np.ndarray, **meta) -> dict:
    return {"dtype": "complex128", "byteorder": "little", "order": "C", "shape": list(values.shape), **meta}


def _field_bytes(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<c16").tobytes()


def _problem(cfg: ExperimentConfig) -> NonlocalProblem:
    return NonlocalProblem(cfg.grid, cfg.kernel, cfg.source, cfg.beta_kernel, cfg.g_source)


def _validate_kernels(cfg):
    rep = validate(cfg.kernel, cfg.grid)
    out = {"kernel": rep.to_dict(), "ok": rep.ok}
    if not rep.ok:
        err = ConfigError("kernel", f"kernel leaves the ellipticity window at {len(rep.violations)} cell pairs")
        err.report = out
        raise err
    return {"report.json": to_json(out)}


def _norms_suite(cfg):
    opts = cfg.sections["norms"]
    rng = np.random.default_rng(cfg.seed)
    rows = [("draw", "s", "p", "lebesgue", "gagliardo", "full", "besov")]
    for d in range(opts["draws"]):
        u = bandlimited(cfg.grid, rng, kmax=opts["kmax"], real=False)
        for s in cfg.s_values:
            for p in cfg.p_values:
                r = norm_report(u, s, p, besov=opts["besov"])
                rows.append((d, s, p, r.lebesgue, r.gagliardo, r.full,
                             r.besov if r.besov is not None else ""))
    files = {"norms.csv": to_csv(rows)}
    if cfg.kernel is not None:
        ex = {}
        for s in cfg.s_values:
            for p in cfg.p_values:
                try:
                    ex[f"{s:g},{p:g}"] = sobolev_exponents(
                        cfg.kernel.order, None if cfg.beta_kernel is None else cfg.beta_kernel.order,
                        s, p, cfg.grid.dim).to_dict()
                except ValueError as exc:
                    ex[f"{s:g},{p:g}"] = {"error": str(exc)}
        files["exponents.json"] = to_json(ex)
    return files


def _elliptic_solve(cfg):
    prob = _problem(cfg)
    u, hist = solve_stiffness(prob.operator(), prob.load(), cfg.tol, cfg.maxiter, cfg.method,
                              return_history=True)
    norms = {f"{s:g},{p:g}": sobolev_norm(u, s, p) for s in cfg.s_values for p in cfg.p_values}
    summary = {"regime": prob.regime, "iterations": max(0, len(hist) - 2), "norms": norms,
               "energy_norm": sobolev_gram_norm(u, prob.alpha), "mean": u.mean()}
    header = _field_header(u.values, dim=cfg.grid.dim, points=cfg.grid.points, period=cfg.grid.period)
    return {"solution.bin": _field_bytes(u.values), "solution.json": to_json(header),
            "residuals.csv": to_csv([("step", "residual")] + list(enumerate(hist))),
            "summary.json": to_json(summary)}


def _self_improve(cfg):
    rep = self_improvement_scan(_problem(cfg), cfg.s_values, cfg.p_values, cfg.tol)
    return {"scan.csv": to_csv(rep.csv_rows()), "summary.json": to_json(rep.summary())}


def _bass_ren(cfg):
    prob = _problem(cfg)
    out = {f"{p:g}": bass_ren_check(prob, p, tol=cfg.tol) for p in cfg.sections["bass_ren"]["p"]}
    return {"bass_ren.json": to_json(out)}


def _localize(cfg):
    opts = cfg.sections["localize"]
    prob = _problem(cfg)
    ball = Ball(tuple(opts["center"]), opts["radius"])
    plateau = Ball(tuple(opts["center"]), opts["plateau"])
    rep = local_improvement_experiment(prob, ball, plateau, opts["s"], opts["p"], cfg.tol)
    cut = Cutoff.smooth(prob.grid, ball.center, ball.radius, plateau.radius)
    from .elliptic import solve_nonlocal
    transfer = cutoff_norm_transfer(solve_nonlocal(prob, cfg.tol), cut, opts["s"], opts["p"])
    rows = [("N", "local", "global")] + [(r["N"], r["local"], r["global"]) for r in rep.rows]
    summary = dict(rep.summary(), lipschitz=cut.lipschitz, forward_lipschitz=cut.forward_lipschitz,
                   transfer=transfer)
    return {"local.csv": to_csv(rows), "summary.json": to_json(summary)}


def _parabolic(cfg):
    t = cfg.sections["time"]
    circle = TimeCircle(t["buffer"] * t["horizon"], t["points"], t["horizon"])
    tk = cfg.time_kernel()
    forcing = SeparableForcing(cfg.source, t["profile"], t["power"])
    sol = solve_cauchy(tk, forcing, circle, cfg.grid, cfg.tol)
    rep = parabolic_self_improvement(tk, forcing, circle, cfg.grid, cfg.s_values, cfg.p_values, cfg.tol)
    rows = [("s", "p", "coarse", "fine", "ratio", "stable")] + [
        (r["s"], r["p"], r["coarse"], r["fine"], r["ratio"], int(r["stable"])) for r in rep.rows]
    window = sol.restricted()
    header = _field_header(window, dim=cfg.grid.dim, points=cfg.grid.points, period=cfg.grid.period,
                           time_length=circle.length, time_points=circle.points, horizon=circle.horizon,
                           time_samples="window [0, T]")
    summary = dict(rep.summary(), v0_norm=sol.v0_norm, v0_tolerance=sol.v0_tolerance,
                   iterations=max(0, len(sol.residuals) - 2))
    return {"solution.bin": _field_bytes(window), "solution.json": to_json(header),
            "improvement.csv": to_csv(rows), "summary.json": to_json(summary)}


def _sweep(cfg):
    opts = cfg.sections["sweep"]
    res = sweep(FormOperator(cfg.kernel, cfg.grid), cfg.s_values, opts["slope"],
                consistency=opts["consistency"], seed=cfg.seed, tol=cfg.tol)
    summary = {"eps_hat": res.eps_hat, "eps_sides": res.eps_sides, "resolutions": res.resolutions,
               "center_audit": res.center_audit(),
               "consistency": {f"{c.s:g}": c.consistency for c in res.cells}}
    if opts["lambdas"]:
        cell = getattr(cfg.kernel.variant, "cell_size", 8)
        summary["lambda_trend"] = lambda_trend(opts["lambdas"], cfg.kernel.order, cfg.grid, cfg.s_values,
                                               cell_size=max(cell, 1))
    return {"sweep.csv": to_csv(res.csv_rows()), "summary.json": to_json(summary)}


_RUNNERS = {
    "validate-kernels": _validate_kernels,
    "norms-suite": _norms_suite,
    "elliptic-solve": _elliptic_solve,
    "self-improve": _self_improve,
    "bass-ren": _bass_ren,
    "localize": _localize,
    "parabolic-cauchy": _parabolic,
    "sneiberg-sweep": _sweep,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    return _RUNNERS[cfg.experiment](cfg)
