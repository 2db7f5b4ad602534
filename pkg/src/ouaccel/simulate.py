"""Euler-Maruyama simulation of OU samplers and of the double-well demo.

Every path owns a counter-based Philox stream keyed by (seed, path index),
so batches are reproducible bit for bit whatever the batching or thread
layout. Gaussian increments come from numpy's ziggurat sampler.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import SamplerDesign
from .evolution import GaussianLaw
from .matrixcore import ValidationError, psd_factor

RNG_ALGORITHM = "numpy-philox4x64-seedseq-spawnkey/ziggurat-normal"

# noise block (paths x steps x dims) kept below this many floats
_NOISE_BUDGET = 4_000_000
_STEP_CHUNK = 256


@dataclass(frozen=True)
class TrajectoryConfig:
    step: float
    horizon: float
    seed: int
    n_paths: int = 1
    initial: object = 0.0
    max_points: int = 100_000
    first_path: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError("step must be positive")
        if self.horizon < self.step:
            raise ValidationError("horizon must be at least one step")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.max_points < 2:
            raise ValidationError("max_points must be >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    @property
    def stride(self) -> int:
        return max(1, math.ceil(self.n_steps / (self.max_points - 1)))

    def record_steps(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.stride)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


@dataclass(frozen=True)
class DoubleWell:
    """V(x) = a x^4 - b x^2."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError("quartic coefficient must be positive")
        if self.b < 0:
            raise ValidationError("quadratic coefficient must be non-negative")
        x = self.minimizer
        assert math.isclose(self.potential(x), -self.b**2 / (4 * self.a), rel_tol=1e-12, abs_tol=1e-15)
        assert abs(self.grad(x)) <= 1e-12 * max(1.0, self.b * x)

    @property
    def minimizer(self) -> float:
        return math.sqrt(self.b / (2 * self.a))

    @property
    def barrier(self) -> float:
        return self.b**2 / (4 * self.a)

    def potential(self, x):
        return self.a * x**4 - self.b * x**2

    def grad(self, x):
        return 4 * self.a * x**3 - 2 * self.b * x


@dataclass
class TrajectoryBatch:
    times: np.ndarray
    paths: np.ndarray  # (n_paths, n_times, dim)
    step: float
    scheme: str
    seed: int
    path_ids: np.ndarray
    stability_flag: bool
    design_digest: str = ""
    rng_algorithm: str = RNG_ALGORITHM
    velocities: np.ndarray | None = None
    energy: np.ndarray | None = None
    crossings: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "step": self.step,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
            "design_digest": self.design_digest,
            "rng_algorithm": self.rng_algorithm,
            "stability_flag": self.stability_flag,
            "scheme": self.scheme,
        }


def path_generator(seed: int, path_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(path_id,))
    return np.random.Generator(np.random.Philox(ss))


def design_digest(design: SamplerDesign) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(design.a, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(design.d, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def stability_flag(a, step: float) -> bool:
    """True when the spectral radius of I + step A exceeds 1."""
    a = np.asarray(a, dtype=float)
    m = np.eye(a.shape[0]) + step * a
    return bool(np.max(np.abs(np.linalg.eigvals(m))) > 1.0)


def _rowwise(x: np.ndarray, mt: np.ndarray) -> np.ndarray:
    """x @ mt accumulated column by column in a fixed order.

    BLAS may pick different kernels for different batch sizes; this keeps
    each row's arithmetic independent of how many rows are processed.
    """
    out = x[:, 0:1] * mt[0]
    for k in range(1, mt.shape[0]):
        out = out + x[:, k : k + 1] * mt[k]
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("OUACCEL_THREADS", "1")))
    except ValueError:
        return 1


def _initial_points(initial, dim: int, gens) -> np.ndarray:
    if isinstance(initial, GaussianLaw):
        f = psd_factor(initial.cov)
        out = np.empty((len(gens), dim))
        for i, g in enumerate(gens):
            z = g.standard_normal(f.shape[1])
            out[i] = initial.mean + f @ z
        return out
    x0 = np.broadcast_to(np.asarray(initial, dtype=float), (dim,))
    return np.tile(x0, (len(gens), 1))


def _batches(cfg: TrajectoryConfig, width: int) -> list[np.ndarray]:
    per = max(1, _NOISE_BUDGET // (_STEP_CHUNK * max(width, 1)))
    ids = np.arange(cfg.first_path, cfg.first_path + cfg.n_paths)
    return [ids[i : i + per] for i in range(0, len(ids), per)]


def _run_linear(systems, dim: int, width: int, cfg: TrajectoryConfig, initial=None):
    """Euler-Maruyama for several linear systems sharing one Brownian stream.

    ``systems`` is a list of (A, G) with G of shape (dim, width); each step is
    x <- x + p A x + G dW with dW ~ N(0, p I_width).
    """
    rec = cfg.record_steps()
    sqrt_p = math.sqrt(cfg.step)
    p = cfg.step
    mats = [(np.ascontiguousarray(a.T), np.ascontiguousarray(g.T)) for a, g in systems]

    def run(ids):
        gens = [path_generator(cfg.seed, int(i)) for i in ids]
        x0 = _initial_points(cfg.initial if initial is None else initial, dim, gens)
        xs = [x0.copy() for _ in systems]
        out = [np.empty((len(ids), len(rec), dim)) for _ in systems]
        r = 0
        if rec[0] == 0:
            for o, x in zip(out, xs):
                o[:, 0] = x
            r = 1
        k = 0
        while k < cfg.n_steps:
            m = min(_STEP_CHUNK, cfg.n_steps - k)
            noise = np.stack([g.standard_normal((m, width)) for g in gens]) if width else None
            for c in range(m):
                for idx, ((at, gt), x) in enumerate(zip(mats, xs)):
                    x_new = x + p * _rowwise(x, at)
                    if width:
                        x_new = x_new + _rowwise(sqrt_p * noise[:, c, :], gt)
                    xs[idx] = x_new
                k += 1
                if r < len(rec) and rec[r] == k:
                    for o, x in zip(out, xs):
                        o[:, r] = x
                    r += 1
        return out

    batches = _batches(cfg, max(width, 1))
    workers = min(_threads(), len(batches))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, batches))
    else:
        parts = [run(b) for b in batches]
    paths = [np.concatenate([part[i] for part in parts]) for i in range(len(systems))]
    return rec * cfg.step, paths


def simulate_ou(design: SamplerDesign, cfg: TrajectoryConfig, noise_map=None) -> TrajectoryBatch:
    """Paths of dX = A X dt + G dW with G G^T = 2D (G = psd factor of 2D by default)."""
    g = psd_factor(2.0 * design.d) if noise_map is None else _check_noise_map(noise_map, design)
    times, (paths,) = _run_linear([(design.a, g)], design.n, g.shape[1], cfg)
    return TrajectoryBatch(
        times=times,
        paths=paths,
        step=cfg.step,
        scheme="ou-euler-maruyama",
        seed=cfg.seed,
        path_ids=np.arange(cfg.first_path, cfg.first_path + cfg.n_paths),
        stability_flag=stability_flag(design.a, cfg.step),
        design_digest=design_digest(design),
        extra={"noise_map": g},
    )


def _check_noise_map(g, design: SamplerDesign) -> np.ndarray:
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if g.shape[0] != design.n:
        raise ValidationError(f"noise map has {g.shape[0]} rows, design dimension is {design.n}")
    target = 2.0 * design.d
    if np.linalg.norm(g @ g.T - target) > 1e-10 * max(np.linalg.norm(target), 1.0):
        raise ValidationError("noise map G does not satisfy G G^T = 2D")
    return g


def _pad(g: np.ndarray, width: int) -> np.ndarray:
    return np.hstack([g, np.zeros((g.shape[0], width - g.shape[1]))])


def simulate_coupled(
    design_a: SamplerDesign,
    design_b: SamplerDesign,
    cfg: TrajectoryConfig,
    noise_a=None,
    noise_b=None,
) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """Two OU schemes driven by one Brownian motion.

    The shared Brownian dimension is the larger noise width; each scheme uses
    its declared projection ``noise_*`` (default: its own psd factor padded
    with zero columns).
    """
    if design_a.n != design_b.n:
        raise ValidationError("coupled designs must have the same dimension")
    ga = psd_factor(2.0 * design_a.d) if noise_a is None else _check_noise_map(noise_a, design_a)
    gb = psd_factor(2.0 * design_b.d) if noise_b is None else _check_noise_map(noise_b, design_b)
    width = max(ga.shape[1], gb.shape[1])
    ga, gb = _pad(ga, width), _pad(gb, width)
    times, (pa, pb) = _run_linear([(design_a.a, ga), (design_b.a, gb)], design_a.n, width, cfg)
    ids = np.arange(cfg.first_path, cfg.first_path + cfg.n_paths)
    out = []
    for design, paths, g in ((design_a, pa, ga), (design_b, pb, gb)):
        out.append(
            TrajectoryBatch(
                times=times,
                paths=paths,
                step=cfg.step,
                scheme="ou-euler-maruyama-coupled",
                seed=cfg.seed,
                path_ids=ids,
                stability_flag=stability_flag(design.a, cfg.step),
                design_digest=design_digest(design),
                extra={"noise_map": g},
            )
        )
    return out[0], out[1]


def simulate_planar_figure(eps: float, h: float, cfg: TrajectoryConfig) -> dict[str, TrajectoryBatch]:
    """Reversible, elliptic and hypoelliptic planar samplers on one 2-D Brownian motion.

    The elliptic and reversible schemes take sqrt(2) dB, the hypoelliptic one
    sqrt(2) (0, dB1 + dB2).
    """
    from .design import planar_design

    rev, _ = planar_design(eps, 0.0, hypoelliptic=False)
    ell, _ = planar_design(eps, h, hypoelliptic=False)
    hyp, _ = planar_design(eps, h, hypoelliptic=True)
    g_ell = math.sqrt(2.0) * np.eye(2)
    g_hyp = math.sqrt(2.0) * np.array([[0.0, 0.0], [1.0, 1.0]])
    systems = [(rev.a, g_ell), (ell.a, g_ell), (hyp.a, g_hyp)]
    times, paths = _run_linear(systems, 2, 2, cfg)
    ids = np.arange(cfg.first_path, cfg.first_path + cfg.n_paths)
    out = {}
    for name, design, p_ in zip(("reversible", "elliptic", "hypoelliptic"), (rev, ell, hyp), paths):
        out[name] = TrajectoryBatch(
            times=times,
            paths=p_,
            step=cfg.step,
            scheme="ou-euler-maruyama-coupled",
            seed=cfg.seed,
            path_ids=ids,
            stability_flag=stability_flag(design.a, cfg.step),
            design_digest=design_digest(design),
            extra={"h": h, "eps": eps},
        )
    return out


def _run_doublewell(well: DoubleWell, cfg: TrajectoryConfig, schemes: tuple[str, ...]):
    rec = cfg.record_steps()
    p = cfg.step
    noise_scale = math.sqrt(2.0 * p)
    init = np.atleast_1d(np.asarray(cfg.initial, dtype=float))
    x_init = float(init[0])
    y_init = float(init[1]) if init.size > 1 else 0.0
    xm = well.minimizer

    def run(ids):
        gens = [path_generator(cfg.seed, int(i)) for i in ids]
        nb = len(ids)
        state = {}
        for sch in schemes:
            state[sch] = [np.full(nb, x_init), np.full(nb, y_init)]
        xs_out = {sch: np.empty((nb, len(rec))) for sch in schemes}
        ys_out = {sch: np.empty((nb, len(rec))) for sch in schemes}
        cross = {sch: np.zeros(nb, dtype=np.int64) for sch in schemes}
        # well-to-well transitions: side flips only once x reaches the other minimum
        side = {sch: np.sign(np.full(nb, x_init)) for sch in schemes}
        trans = {sch: np.zeros(nb, dtype=np.int64) for sch in schemes}
        for sch in schemes:
            xs_out[sch][:, 0] = x_init
            ys_out[sch][:, 0] = y_init
        r = 1
        k = 0
        while k < cfg.n_steps:
            m = min(_STEP_CHUNK, cfg.n_steps - k)
            noise = np.stack([g.standard_normal(m) for g in gens])
            for c in range(m):
                dw = noise_scale * noise[:, c]
                for sch in schemes:
                    x, y = state[sch]
                    if sch == "kinetic":
                        x_new = x + p * y
                        y = y + p * (-well.grad(x) - y) + dw
                    else:
                        x_new = x - p * well.grad(x) + dw
                    cross[sch] += x * x_new < 0
                    flip = ((side[sch] <= 0) & (x_new >= xm)) | ((side[sch] >= 0) & (x_new <= -xm))
                    trans[sch] += flip & (side[sch] != 0)
                    side[sch] = np.where(flip, np.sign(x_new), side[sch])
                    state[sch] = [x_new, y]
                k += 1
                if r < len(rec) and rec[r] == k:
                    for sch in schemes:
                        xs_out[sch][:, r] = state[sch][0]
                        ys_out[sch][:, r] = state[sch][1]
                    r += 1
        return xs_out, ys_out, cross, trans

    batches = _batches(cfg, 1)
    workers = min(_threads(), len(batches))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, batches))
    else:
        parts = [run(b) for b in batches]
    times = rec * p
    ids = np.arange(cfg.first_path, cfg.first_path + cfg.n_paths)
    # linearization at the minima: x'' = 4b
    flag = bool(abs(1 - p * 4 * well.b) > 1)
    out = {}
    for sch in schemes:
        xs = np.concatenate([part[0][sch] for part in parts])
        ys = np.concatenate([part[1][sch] for part in parts])
        kinetic = sch == "kinetic"
        energy = well.potential(xs) + (0.5 * ys**2 if kinetic else 0.0)
        out[sch] = TrajectoryBatch(
            times=times,
            paths=xs[:, :, None],
            step=p,
            scheme=f"doublewell-{sch}",
            seed=cfg.seed,
            path_ids=ids,
            stability_flag=flag,
            velocities=ys[:, :, None] if kinetic else None,
            energy=energy,
            crossings=np.concatenate([part[2][sch] for part in parts]),
            extra={
                "a": well.a,
                "b": well.b,
                "transitions": np.concatenate([part[3][sch] for part in parts]),
            },
        )
    return out


def simulate_langevin_doublewell(well: DoubleWell, cfg: TrajectoryConfig, kinetic: bool) -> TrajectoryBatch:
    """Kinetic: dX = Y dt, dY = -V'(X) dt - Y dt + sqrt(2) dB.  Reversible: dX = -V'(X) dt + sqrt(2) dB."""
    sch = "kinetic" if kinetic else "reversible"
    return _run_doublewell(well, cfg, (sch,))[sch]


def simulate_doublewell_pair(well: DoubleWell, cfg: TrajectoryConfig) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """(reversible, kinetic) double-well paths driven by the same Brownian motion."""
    out = _run_doublewell(well, cfg, ("reversible", "kinetic"))
    return out["reversible"], out["kinetic"]


def euler_law(design: SamplerDesign, law0: GaussianLaw, step: float, n_steps: int) -> GaussianLaw:
    """Exact law of the Euler-Maruyama chain after ``n_steps`` steps.

    m <- (I + pA) m and C <- (I + pA) C (I + pA)^T + 2pD; the gap to the
    continuous-time law is the scheme's first-order bias.
    """
    f = np.eye(design.n) + step * design.a
    q = 2.0 * step * design.d
    m = law0.mean.copy()
    c = law0.cov.copy()
    for _ in range(n_steps):
        m = f @ m
        c = f @ c @ f.T + q
    return GaussianLaw(m, 0.5 * (c + c.T))


def empirical_law(batch: TrajectoryBatch, t: float) -> GaussianLaw:
    if batch.n_paths < 2:
        raise ValidationError("need at least two paths")
    hit = np.flatnonzero(np.abs(batch.times - t) <= 1e-9 * max(1.0, abs(t)))
    if hit.size == 0:
        raise ValidationError(f"t = {t} is not on the recorded grid")
    x = batch.paths[:, hit[0], :]
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return GaussianLaw(x.mean(axis=0), cov)


def write_trajectory_csv(path, batch: TrajectoryBatch) -> None:
    dim = batch.paths.shape[2]
    header = ["t", "path_id"] + [f"x_{i + 1}" for i in range(dim)]
    if batch.velocities is not None:
        header += [f"y_{i + 1}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for pi, pid in enumerate(batch.path_ids):
            for ti, t in enumerate(batch.times):
                row = [f"{t:.16e}", str(int(pid))] + [f"{v:.16e}" for v in batch.paths[pi, ti]]
                if batch.velocities is not None:
                    row += [f"{v:.16e}" for v in batch.velocities[pi, ti]]
                w.writerow(row)


def write_metadata_json(path, batch: TrajectoryBatch) -> None:
    with open(path, "w") as fh:
        json.dump(batch.metadata(), fh, indent=1, sort_keys=True)
