"""Command-line front end: ``ouaccel <command> --config PATH [--out DIR] [--seed N]``.

Every command writes its artifacts plus ``summary.json`` into the output
directory. Internal checks that fail are collected into ``failures.json``
and turn the exit code nonzero (1); invalid configurations exit with 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import design as dz
from . import evolution as ev
from . import kinetic as kn
from . import simulate as sm
from . import tolerances as tol
from .matrixcore import PrecisionMatrix, ValidationError, matrix_exponential, random_spd

COMMANDS = ("design", "evolve", "simulate", "expnorm", "kinetic")


class Report:
    """Collects check outcomes for one command run."""

    def __init__(self):
        self.failures: list[dict] = []
        self.summary: dict = {}

    def check(self, name: str, ok: bool, **detail) -> bool:
        if not ok:
            self.failures.append({"check": name, **_jsonable(detail)})
        return ok


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _f(x: float) -> str:
    return f"{x:.16e}"


def preset_names() -> list[str]:
    root = resources.files("ouaccel") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("ouaccel") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_config(config: str | None, preset: str | None) -> dict:
    if (config is None) == (preset is None):
        raise ValidationError("give exactly one of --config PATH or --preset NAME")
    if preset is not None:
        return load_preset(preset)
    with open(config) as fh:
        return json.load(fh)


def precision_from_spec(spec) -> PrecisionMatrix:
    if not isinstance(spec, dict):
        raise ValidationError("'s' must be an object with one of the keys matrix, diag, random")
    keys = [k for k in ("matrix", "diag", "random") if k in spec]
    if len(keys) != 1:
        raise ValidationError(f"'s' needs exactly one of matrix/diag/random, got {sorted(spec)}")
    kind = keys[0]
    if kind == "matrix":
        return PrecisionMatrix(np.array(spec["matrix"], dtype=float))
    if kind == "diag":
        return PrecisionMatrix.diag(spec["diag"])
    r = spec["random"]
    return random_spd(int(r["n"]), float(r["condition_number"]), int(r["seed"]))


def _require_s(cfg: dict) -> PrecisionMatrix:
    if "s" not in cfg:
        raise ValidationError("config has no 's' block")
    return precision_from_spec(cfg["s"])


def _law(spec, s: PrecisionMatrix) -> ev.GaussianLaw:
    if spec == "equilibrium":
        return ev.GaussianLaw.equilibrium(s)
    mean = np.asarray(spec["mean"], dtype=float)
    cov = spec.get("cov", "identity")
    cov = np.eye(mean.size) if cov == "identity" else np.asarray(cov, dtype=float)
    return ev.GaussianLaw(mean, cov)


def cmd_design(cfg: dict, out: Path, rep: Report) -> None:
    s = _require_s(cfg)
    block = cfg.get("design", {})
    family = block.get("family", dz.HYPOELLIPTIC_OPTIMAL)
    nu = block.get("nu")
    scale = float(np.linalg.norm(s.s))
    rows = []
    built = {}
    for fam in (dz.REVERSIBLE_IDENTITY, dz.REVERSIBLE_OPTIMAL, dz.ELLIPTIC_OPTIMAL, dz.HYPOELLIPTIC_OPTIMAL):
        d = dz.build_design(s, fam, nu=nu, full_eigenspace=bool(block.get("full_eigenspace", False)))
        built[fam] = d
        rows.append(d)
        rep.check(
            f"{fam}.rate",
            abs(d.rate - d.nominal_rate) <= 1e-8 * abs(d.nominal_rate),
            rate=d.rate,
            nominal=d.nominal_rate,
        )
        rep.check(
            f"{fam}.invariance",
            d.invariance_residual <= tol.MEMBERSHIP_RTOL * scale,
            residual=d.invariance_residual,
        )
    chain = dz.mean_chain(s)
    rep.check("mean_chain", all(chain[i] <= chain[i + 1] * (1 + 1e-12) for i in range(3)), chain=chain)
    if family == dz.CUSTOM:
        chosen = dz.build_design(s, dz.CUSTOM, d_override=np.asarray(block["d"], dtype=float), nu=nu)
    else:
        chosen = built[family]
    (out / "design.json").write_text(dz.design_to_json(chosen) + "\n")
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "rate", "nominal_rate", "invariance_residual", "hypoelliptic"])
        for d in rows:
            w.writerow([d.family, _f(d.rate), _f(d.nominal_rate), _f(d.invariance_residual), int(d.hypoelliptic)])
    print(f"{'family':<22}{'rate':>22}{'closed form':>22}")
    for d in rows:
        print(f"{d.family:<22}{d.rate:>22.15g}{d.nominal_rate:>22.15g}")
    rep.summary.update({"n": s.n, "family": chosen.family, "rates": {d.family: d.rate for d in rows}})


def cmd_evolve(cfg: dict, out: Path, rep: Report) -> None:
    s = _require_s(cfg)
    block = cfg.get("evolve", {})
    family = block.get("family", dz.HYPOELLIPTIC_OPTIMAL)
    design = dz.build_design(s, family)
    t0 = float(block.get("t0", ev.optimal_warmup(s)))
    t_end = float(block.get("t_end", 10.0))
    sched = ev.Schedule.uniform(t0, t_end, int(block.get("points", 401)))
    law0 = _law(block.get("initial", {"mean": np.ones(s.n).tolist()}), s)
    rows = ev.run_schedule(law0, design, s, sched, check=False)
    ev.write_schedule_csv(out / "schedule.csv", rows)
    bad = ev.bound_violations(rows, s)
    rep.check("entropy_bound", not bad, first_violation=None if not bad else [bad[0].t, bad[0].kl, bad[0].bound])
    rep.summary.update({"family": family, "t0": t0, "t_end": t_end, "kl0": rows[0].kl if rows else None})
    window = block.get("fit_window")
    if window is not None:
        samples = [(r.t, r.kl) for r in rows if r.kl > 0]
        fit = ev.fit_rate(samples, tuple(window))
        rep.summary["fitted_rate"] = fit.rate
        rep.summary["nominal_rate"] = design.nominal_rate
        rep.check(
            "fitted_rate",
            abs(fit.rate - design.nominal_rate) <= 0.02 * design.nominal_rate,
            fitted=fit.rate,
            nominal=design.nominal_rate,
        )
    print(f"t0 = {t0:.6g}, KL(0) = {rows[0].kl:.6g}, KL(t_end) = {rows[-1].kl:.6g}")


def _traj_config(block: dict, seed: int) -> sm.TrajectoryConfig:
    initial = block.get("initial", 0.0)
    return sm.TrajectoryConfig(
        step=float(block["step"]),
        horizon=float(block["horizon"]),
        seed=int(seed),
        n_paths=int(block.get("n_paths", 1)),
        initial=initial,
        max_points=int(block.get("max_points", 100_000)),
    )


def _subset(batch: sm.TrajectoryBatch, k: int | None) -> sm.TrajectoryBatch:
    if k is None or k >= batch.n_paths:
        return batch
    vel = None if batch.velocities is None else batch.velocities[:k]
    return sm.TrajectoryBatch(
        times=batch.times,
        paths=batch.paths[:k],
        step=batch.step,
        scheme=batch.scheme,
        seed=batch.seed,
        path_ids=batch.path_ids[:k],
        stability_flag=batch.stability_flag,
        design_digest=batch.design_digest,
        velocities=vel,
    )


def _write_batch(out: Path, name: str, batch: sm.TrajectoryBatch, export: int | None, n_paths: int) -> None:
    sm.write_trajectory_csv(out / f"trajectory_{name}.csv", _subset(batch, export))
    meta = batch.metadata()
    meta["n_paths"] = n_paths
    _dump(out / f"metadata_{name}.json", meta)


def cmd_simulate(cfg: dict, out: Path, rep: Report) -> None:
    block = cfg.get("simulate")
    if block is None:
        raise ValidationError("config has no 'simulate' block")
    seed = int(cfg.get("seed", 0))
    tc = _traj_config(block, seed)
    export = block.get("export_paths")
    scheme = block.get("scheme", "ou")
    flags = {}
    if scheme == "planar":
        batches = sm.simulate_planar_figure(float(block["eps"]), float(block["h"]), tc)
    elif scheme == "doublewell":
        well = sm.DoubleWell(float(block["a"]), float(block["b"]))
        rev, kin = sm.simulate_doublewell_pair(well, tc)
        batches = {"reversible": rev, "kinetic": kin}
        with open(out / "crossings.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "reversible_sign_changes", "kinetic_sign_changes",
                        "reversible_transitions", "kinetic_transitions"])
            for i, pid in enumerate(rev.path_ids):
                w.writerow([int(pid), int(rev.crossings[i]), int(kin.crossings[i]),
                            int(rev.extra["transitions"][i]), int(kin.extra["transitions"][i])])
        rep.summary["crossings"] = crossing_summary(rev, kin)
        rep.summary["barrier"] = well.barrier
    elif scheme in ("ou", "coupled"):
        s = _require_s(cfg)
        if scheme == "ou":
            d = dz.build_design(s, block.get("family", dz.HYPOELLIPTIC_OPTIMAL))
            batches = {"ou": sm.simulate_ou(d, tc)}
        else:
            fa, fb = block.get("families", [dz.REVERSIBLE_IDENTITY, dz.HYPOELLIPTIC_OPTIMAL])
            ba, bb = sm.simulate_coupled(dz.build_design(s, fa), dz.build_design(s, fb), tc)
            batches = {fa: ba, fb: bb}
    else:
        raise ValidationError(f"unknown simulation scheme {scheme!r}")
    for name, batch in batches.items():
        _write_batch(out, name, batch, export, tc.n_paths)
        flags[name] = batch.stability_flag
    rep.summary.update({"scheme": scheme, "seed": seed, "stability_flags": flags, "rng_algorithm": sm.RNG_ALGORITHM})
    for name, flag in flags.items():
        if flag:
            print(f"warning: step {tc.step} is unstable for {name}", file=sys.stderr)


def crossing_summary(rev: sm.TrajectoryBatch, kin: sm.TrajectoryBatch) -> dict:
    """Paired comparison of kinetic minus reversible counts (same noise per path)."""
    out = {}
    for key, a, b in (
        ("sign_changes", rev.crossings, kin.crossings),
        ("transitions", rev.extra["transitions"], kin.extra["transitions"]),
    ):
        diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        n = diff.size
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        out[key] = {
            "reversible_mean": float(np.mean(a)),
            "kinetic_mean": float(np.mean(b)),
            "mean_difference": float(diff.mean()),
            "standard_error": se,
            "z": float(diff.mean() / se) if se > 0 else math.copysign(math.inf, diff.mean() or 1.0),
        }
    return out


def cmd_expnorm(cfg: dict, out: Path, rep: Report) -> None:
    block = cfg.get("expnorm")
    if block is None:
        raise ValidationError("config has no 'expnorm' block")
    eps = float(block.get("eps", 0.05))
    t_end = float(block.get("t_end", 20.0))
    times = np.linspace(t_end / int(block.get("points", 200)), t_end, int(block.get("points", 200)))
    curves = block.get("curves") or [
        {"label": "reversible", "h": 0.0, "hypoelliptic": False},
        {"label": "elliptic_h2", "h": math.sqrt(2 / eps), "hypoelliptic": False},
        {"label": "hypoelliptic_h2", "h": math.sqrt(2 / eps), "hypoelliptic": True},
        {"label": "hypoelliptic_h1", "h": math.sqrt(1 / eps), "hypoelliptic": True},
    ]
    status = {}
    for c in curves:
        d, _ = dz.planar_design(eps, float(c["h"]), bool(c["hypoelliptic"]))
        label = c["label"]
        try:
            curve = ev.exp_norm_curve_2d(d.a, times)
        except ValidationError as exc:
            # keep the direct curve so the figure can still be drawn
            direct = np.array([np.linalg.norm(matrix_exponential(d.a, t), 2) ** 2 for t in times])
            curve = ev.NormCurve2D(math.nan, math.nan, math.nan, times, np.full_like(times, math.nan), direct)
            status[label] = {"in_domain": False, "reason": str(exc)}
        else:
            err = float(np.max(np.abs(curve.norm_sq_closed / curve.norm_sq_direct - 1)))
            status[label] = {
                "in_domain": True,
                "alpha": curve.alpha,
                "nu": curve.nu,
                "re_lambda": curve.re_lambda,
                "M": curve.prefactor_max,
                "max_rel_error": err,
            }
            rep.check(f"{label}.closed_vs_direct", err <= 1e-8, max_rel_error=err)
        ev.write_norm_curve_csv(out / f"norm_curve_{label}.csv", curve)
    sweep = block.get("h_sweep")
    if sweep:
        ms = []
        with open(out / "prefactor.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "alpha_inv_sq", "alpha_inv_sq_formula", "M"])
            for h in sweep:
                d, _ = dz.planar_design(eps, float(h), True)
                e = ev.planar_eigen(d.a)
                m = ev.prefactor_m(e.alpha)
                ms.append(m)
                formula = ((1 - eps) ** 2 + 4 / h**2) / (1 + eps) ** 2
                w.writerow([_f(h), _f(e.alpha_inv_sq), _f(formula), _f(m)])
        rep.check("M_decreasing", all(a >= b for a, b in zip(ms, ms[1:])), M=ms)
        rep.summary["M_limit"] = 1.0 / eps if eps <= 1 else None
    rep.summary["curves"] = status


def cmd_kinetic(cfg: dict, out: Path, rep: Report) -> None:
    s = _require_s(cfg)
    block = cfg.get("kinetic", {})
    nus = np.geomspace(float(block.get("nu_min", 1e-2)), float(block.get("nu_max", 1e2)), int(block.get("points", 201)))
    rows = kn.nu_sweep(s, nus)
    kn.write_sweep_csv(out / "nu_sweep.csv", rows)
    bad = kn.sweep_mismatches(s, rows)
    rep.check("closed_vs_block_eigenvalues", not bad, mismatches=bad[:5])
    opt = kn.optimize_nu(s, block.get("bracket"))
    (out / "optimum.json").write_text(opt.to_json() + "\n")
    lambdas = block.get("lambdas", [kn.CROSSOVER_LAMBDA])
    comps = [kn.overdamped_vs_kinetic(float(lam)) for lam in lambdas]
    rep.summary.update(
        {
            "nu_star": opt.nu,
            "rate_star": opt.rate,
            "crossover_lambda": kn.CROSSOVER_LAMBDA,
            "comparisons": [c.__dict__ for c in comps],
        }
    )
    print(f"nu* = {opt.nu:.12g}, rate* = {opt.rate:.12g}")


HANDLERS = {
    "design": cmd_design,
    "evolve": cmd_evolve,
    "simulate": cmd_simulate,
    "expnorm": cmd_expnorm,
    "kinetic": cmd_kinetic,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ouaccel", description="Optimal non-reversible OU samplers.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", help="name of a shipped preset config (see --list-presets)")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="override the config's top-level seed")
    return p


def run(command: str, cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()
    code = 0
    try:
        HANDLERS[command](cfg, out, rep)
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        rep.failures.append({"check": "config", "error": f"{type(exc).__name__}: {exc}"})
        code = 2
    rep.summary["command"] = command
    rep.summary["ok"] = not rep.failures
    _dump(out / "summary.json", rep.summary)
    if rep.failures:
        _dump(out / "failures.json", {"command": command, "failures": rep.failures})
        for f in rep.failures:
            print(f"FAILED {f['check']}: {f}", file=sys.stderr)
        return code or 1
    failures = out / "failures.json"
    if failures.exists():
        failures.unlink()
    return 0


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if argv and argv[0] == "--list-presets":
        print("\n".join(preset_names()))
        return 0
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    return run(args.command, cfg, Path(args.out))


if __name__ == "__main__":
    sys.exit(main())
