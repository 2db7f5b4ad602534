"""Exact propagation of Gaussian laws under an OU generator and entropy decay."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import tolerances as tol
from .design import REVERSIBLE_IDENTITY, SamplerDesign, build_design
from .matrixcore import PrecisionMatrix, ValidationError, matrix_exponential


class BoundViolation(AssertionError):
    """The entropy of a schedule run exceeded its theoretical envelope."""


@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        scale = max(np.linalg.norm(cov), 1e-300)
        if np.linalg.norm(cov - cov.T) > tol.SYMMETRY_RTOL * scale:
            raise ValidationError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        vals, vecs = np.linalg.eigh(cov)
        if vals[0] < -tol.PSD_INDEFINITE_RTOL * scale:
            raise ValidationError(f"covariance is indefinite (min eigenvalue {vals[0]:.3e})")
        if vals[0] < 0:
            cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.mean.size

    @classmethod
    def equilibrium(cls, s: PrecisionMatrix) -> "GaussianLaw":
        return cls(np.zeros(s.n), s.inv_s)


@dataclass(frozen=True)
class Schedule:
    t0: float
    t_end: float
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if not 0 < self.t0 <= self.t_end:
            raise ValidationError(f"need 0 < t0 <= t_end, got t0={self.t0}, t_end={self.t_end}")
        if grid.size and (grid[0] < 0 or grid[-1] > self.t_end):
            raise ValidationError("grid must lie in [0, t_end]")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def uniform(cls, t0: float, t_end: float, points: int = 401) -> "Schedule":
        return cls(t0, t_end, np.linspace(0.0, t_end, points))


@dataclass(frozen=True)
class ScheduleRow:
    t: float
    kl: float
    bound: float
    tv_bound: float


@dataclass(frozen=True)
class RateFit:
    rate: float
    residual: float
    n_samples: int


@dataclass(frozen=True)
class NormCurve2D:
    alpha: float
    nu: float
    re_lambda: float
    times: np.ndarray
    norm_sq_closed: np.ndarray
    norm_sq_direct: np.ndarray

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.norm_sq_closed.tolist()))

    @property
    def prefactor_max(self) -> float:
        return prefactor_m(self.alpha)


def ou_transition(a, d, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(e^{tA}, V_t) with V_t = int_0^t e^{sA} 2D e^{sA^T} ds.

    V is obtained from one block exponential of [[A, 2D], [0, -A^T]] at a
    step small enough for the -A^T block to stay bounded, then doubled
    exactly: V_{2s} = e^{sA} V_s e^{sA^T} + V_s.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    n = a.shape[0]
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    if t == 0:
        return np.eye(n), np.zeros((n, n))
    size = np.linalg.norm(a, 1) * t
    k = max(0, math.ceil(math.log2(size))) if size > 1 else 0
    tau = t / 2**k
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[:n, n:] = 2.0 * d
    block[n:, n:] = -a.T
    e = scipy.linalg.expm(tau * block)
    f = e[:n, :n]
    v = e[:n, n:] @ f.T
    v = 0.5 * (v + v.T)
    for _ in range(k):
        v = f @ v @ f.T + v
        v = 0.5 * (v + v.T)
        f = f @ f
    return f, v


def evolve_law(law: GaussianLaw, design: SamplerDesign, t: float) -> GaussianLaw:
    f, v = ou_transition(design.a, design.d, t)
    return GaussianLaw(f @ law.mean, f @ law.cov @ f.T + v)


def kl_to_equilibrium(law: GaussianLaw, s: PrecisionMatrix) -> float:
    """KL(N(m, Sigma) || N(0, S^-1)).

    Evaluated as 1/2 [sum_i (d_i - log(1 + d_i)) + m^T S m] where d_i are the
    eigenvalues of S^{1/2} (Sigma - S^-1) S^{1/2}, which keeps full relative
    accuracy as the law approaches equilibrium.
    """
    cov = law.cov
    vals = np.linalg.eigvalsh(cov)
    if vals[0] <= tol.COV_SINGULAR_RTOL * max(vals[-1], 1e-300):
        raise ValidationError("covariance is singular: relative entropy is infinite")
    gap = s.sqrt_s @ (cov - s.inv_s) @ s.sqrt_s
    delta = np.linalg.eigvalsh(0.5 * (gap + gap.T))
    cov_term = float(np.sum(delta - np.log1p(delta)))
    mean_term = float(law.mean @ s.s @ law.mean)
    return 0.5 * max(cov_term, 0.0) + 0.5 * mean_term


def pinsker_tv_bound(kl: float) -> float:
    if kl < 0:
        raise ValidationError(f"relative entropy must be non-negative, got {kl}")
    return min(1.0, math.sqrt(kl / 2.0))


def optimal_warmup(s: PrecisionMatrix) -> float:
    """Warm-up length minimizing the two-phase bound, t0 = 1 / (2 max sigma(S))."""
    return 1.0 / (2.0 * s.lambda_max)


def two_phase_bound(t: float, t0: float, s: PrecisionMatrix, kl0: float) -> float:
    """Envelope for the entropy at time t of a two-phase schedule.

    For t >= t0 this is (1 / (t0 min sigma(S))) exp(-2 max sigma(S) (t - t0)) KL(0);
    during warm-up the reversible log-Sobolev decay exp(-2 min sigma(S) t) KL(0).
    """
    if t < t0:
        return math.exp(-2.0 * s.lambda_min * t) * kl0
    return math.exp(-2.0 * s.lambda_max * (t - t0)) * kl0 / (t0 * s.lambda_min)


def kl_resolution(s: PrecisionMatrix) -> float:
    """Smallest KL the exact-law pipeline can resolve.

    Propagated covariances carry relative error ~ eps cond(S) and KL is
    quadratic in that error, so values below N (64 eps cond(S))^2 are noise.
    """
    cond = s.lambda_max / s.lambda_min
    return s.n * (64.0 * np.finfo(float).eps * cond) ** 2


def bound_violations(rows, s: PrecisionMatrix) -> list:
    floor = kl_resolution(s)
    return [r for r in rows if r.kl > r.bound * (1 + 1e-9) + floor]


def run_schedule(
    law0: GaussianLaw,
    design: SamplerDesign,
    s: PrecisionMatrix,
    schedule: Schedule,
    check: bool = True,
    workers: int | None = None,
) -> list[ScheduleRow]:
    """Warm up with the reversible identity design on [0, t0], then switch."""
    if schedule.grid.size and schedule.grid[0] < 0:
        raise ValidationError("grid point < 0")
    warm = build_design(s, REVERSIBLE_IDENTITY)
    kl0 = kl_to_equilibrium(law0, s)
    t0 = schedule.t0
    law_t0 = evolve_law(law0, warm, t0)

    def point(t: float) -> ScheduleRow:
        law = evolve_law(law0, warm, t) if t < t0 else evolve_law(law_t0, design, t - t0)
        kl = kl_to_equilibrium(law, s)
        return ScheduleRow(float(t), kl, two_phase_bound(t, t0, s, kl0), pinsker_tv_bound(kl))

    grid = schedule.grid.tolist()
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, grid))
    else:
        rows = [point(t) for t in grid]
    if check:
        bad = bound_violations(rows, s)
        if bad:
            row = bad[0]
            raise BoundViolation(f"KL({row.t}) = {row.kl:.6e} exceeds bound {row.bound:.6e}")
    return rows


def fit_rate(samples, window: tuple[float, float], mode: str = "entropy") -> RateFit:
    """Least-squares decay exponent of ln(value) against t inside ``window``.

    ``mode='entropy'`` halves the slope (entropy decays at 2 rho), ``'norm'``
    returns the raw negated slope.
    """
    if mode not in ("entropy", "norm"):
        raise ValidationError(f"unknown fit mode {mode!r}")
    lo, hi = window
    pts = np.array([(t, v) for t, v in samples if lo <= t <= hi], dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise ValidationError(f"need at least 3 samples in window {window}, got {len(pts)}")
    if np.any(pts[:, 1] <= 0):
        raise ValidationError("samples must be positive to fit a log-slope")
    coef, res, *_ = np.polyfit(pts[:, 0], np.log(pts[:, 1]), 1, full=True)
    slope = coef[0]
    rms = float(np.sqrt(res[0] / len(pts))) if res.size else 0.0
    rate = -slope / 2.0 if mode == "entropy" else -slope
    return RateFit(float(rate), rms, len(pts))


def default_fit_window(rate: float) -> tuple[float, float]:
    return 5.0 / rate, 10.0 / rate


@dataclass(frozen=True)
class PlanarEigen:
    """Closed-form eigen data of a real 2x2 matrix with eigenvalues mu +- i omega.

    With the (unnormalized) eigenvector v = (a12, lam - a11), or its column
    counterpart when |a21| > |a12|, and w = v^T v:
    alpha^2 - 1 = 4 c^2 omega^2 / |w|^2 where c is the pivot entry.
    """

    mu: float
    omega: float
    w_abs: float
    pivot: float

    @property
    def alpha(self) -> float:
        if self.w_abs == 0.0:
            return math.inf
        return math.sqrt(1.0 + (2.0 * self.pivot * self.omega / self.w_abs) ** 2)

    @property
    def alpha_inv_sq(self) -> float:
        den = self.w_abs**2 + 4.0 * self.pivot**2 * self.omega**2
        return self.w_abs**2 / den if den > 0 else 0.0


# |tr^2 - 4 det| below this fraction of ||A||_F^2 counts as a double eigenvalue
DEFECTIVE_RTOL = 1e-12


def planar_eigen(a) -> PlanarEigen:
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2):
        raise ValidationError("expected a 2x2 matrix")
    tr = a[0, 0] + a[1, 1]
    gap = a[0, 0] - a[1, 1]
    # tr^2 - 4 det written without cancellation in the trace part
    disc = gap * gap + 4.0 * a[0, 1] * a[1, 0]
    scale = float(np.sum(a * a))
    if disc > DEFECTIVE_RTOL * scale:
        raise ValidationError("eigenvalues are real and distinct: closed form out of domain")
    mu = 0.5 * tr
    omega = 0.5 * math.sqrt(max(-disc, 0.0))
    if abs(a[0, 1]) >= abs(a[1, 0]):
        c, shift = a[0, 1], mu - a[0, 0]
    else:
        c, shift = a[1, 0], mu - a[1, 1]
    if c == 0.0:
        # diagonal with a double eigenvalue: normal
        return PlanarEigen(mu, omega, 0.0, 0.0)
    w = complex(c * c + shift * shift - omega * omega, 2.0 * shift * omega)
    return PlanarEigen(mu, omega, abs(w), c)


def eigenbasis_alpha(a) -> tuple[float, float, float]:
    """(alpha, nu, Re l1): alpha = |conj(v1)^T v2|^-1 for unit eigenvectors, nu = |l1 - l2|.

    alpha is infinite for a normal matrix and equals 1 at a defective double
    eigenvalue.
    """
    e = planar_eigen(a)
    return e.alpha, 2.0 * e.omega, e.mu


def exp_norm_curve_2d(a, times) -> NormCurve2D:
    """||e^{tA}||_2^2 for a real 2x2 A with eigenvalues mu +- i omega.

    The closed form e^{2 mu t} (1 + 2 / (sqrt(2(alpha^2-1)/(1-cos(nu t)) + 1) - 1))
    is evaluated as e^{2 mu t} (1 + 2 (y + sqrt(y (1 + y)))) with
    y = (1 - cos(nu t)) / (2 (alpha^2 - 1)) = t^2 sinc^2(omega t) |w|^2 / (4 c^2).
    The second expression has no 0/0: it gives y = 0 for normal matrices and
    the defective limit y = t^2 ||A - mu I||^2 / 4 when omega = 0.
    """
    e = planar_eigen(a)
    times = np.asarray(times, dtype=float)
    if e.pivot == 0.0:
        y = np.zeros_like(times)
    else:
        sinc = np.sinc(e.omega * times / math.pi)
        y = (times * sinc * e.w_abs / (2.0 * e.pivot)) ** 2
    closed = np.exp(2 * e.mu * times) * (1.0 + 2.0 * (y + np.sqrt(y * (1.0 + y))))
    direct = np.array([np.linalg.norm(matrix_exponential(a, t), 2) ** 2 for t in times])
    return NormCurve2D(e.alpha, 2.0 * e.omega, e.mu, times, closed, direct)


def prefactor_m(alpha: float) -> float:
    """M = max over t of the oscillating factor = 1 + 2 / (alpha - 1)."""
    if math.isinf(alpha):
        return 1.0
    if alpha <= 1.0:
        return math.inf
    return 1.0 + 2.0 / (alpha - 1.0)


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_schedule_csv(path, rows: list[ScheduleRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kl", "bound", "tv_bound"])
        for r in rows:
            w.writerow([_fmt(r.t), _fmt(r.kl), _fmt(r.bound), _fmt(r.tv_bound)])


def write_norm_curve_csv(path, curve: NormCurve2D) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "norm_sq_closed", "norm_sq_direct"])
        for t, c, d in zip(curve.times, curve.norm_sq_closed, curve.norm_sq_direct):
            w.writerow([_fmt(t), _fmt(c), _fmt(d)])
