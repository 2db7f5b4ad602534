"""Spectral analysis of the Gaussian kinetic (underdamped Langevin) sampler.

For a velocity scale nu > 0 the 2N-dimensional process is

    dX = Y dt,    dY = -nu S X dt - (1/nu) Y dt + sqrt(2) dB,

with drift [[0, I], [-nu S, -I/nu]] and diffusion diag(0, I). For every
eigenpair (lam, v) of S, (v, -r v) is an eigenvector for -r exactly when
r^2 - r/nu + lam nu = 0, so the rate is the smallest real part of the slow
roots over the spectrum of S.

The stationary law is N(0, S^-1) x N(0, nu I): the velocity *variance* is nu.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .design import CUSTOM, SamplerDesign, hypoellipticity_check, invariance_residual
from .matrixcore import PrecisionMatrix, ValidationError, general_eigenvalues

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class KineticSpec:
    s: PrecisionMatrix
    nu: float

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValidationError(f"velocity scale must be positive, got {self.nu}")


def kinetic_drift(spec: KineticSpec) -> np.ndarray:
    n = spec.s.n
    eye = np.eye(n)
    return np.block([[np.zeros((n, n)), eye], [-spec.nu * spec.s.s, -eye / spec.nu]])


def kinetic_diffusion(n: int) -> np.ndarray:
    return np.diag(np.r_[np.zeros(n), np.ones(n)])


def stationary_covariance(spec: KineticSpec) -> np.ndarray:
    """diag(S^-1, nu I), the covariance left invariant by the kinetic flow."""
    n = spec.s.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = spec.s.inv_s
    out[n:, n:] = spec.nu * np.eye(n)
    return out


def stationary_precision(spec: KineticSpec) -> PrecisionMatrix:
    n = spec.s.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = spec.s.s
    out[n:, n:] = np.eye(n) / spec.nu
    return PrecisionMatrix(out)


def kinetic_design(spec: KineticSpec) -> SamplerDesign:
    """The kinetic pair (A, D) as a design for the 2N-dimensional target."""
    a = kinetic_drift(spec)
    d = kinetic_diffusion(spec.s.n)
    s2 = stationary_precision(spec)
    j = -np.asarray(s2.right_divide(a), dtype=float) - d
    j = 0.5 * (j - j.T)
    return SamplerDesign(
        a=a,
        d=d,
        j=j,
        family=CUSTOM,
        rate=kinetic_rate(spec),
        nominal_rate=kinetic_rate(spec),
        invariance_residual=invariance_residual(a, d, s2),
        hypoelliptic=hypoellipticity_check(a, d),
    )


def quadratic_roots(lam: float, nu: float) -> tuple[complex, complex]:
    """(slow, fast) roots of r^2 - r/nu + lam nu = 0.

    The slow real root is written as 2 lam nu^2 / (1 + sqrt(1 - 4 lam nu^3))
    to avoid cancellation when 4 lam nu^3 is small.
    """
    disc = 1.0 - 4.0 * lam * nu**3
    if disc >= 0:
        root = math.sqrt(disc)
        slow = 2.0 * lam * nu**2 / (1.0 + root)
        fast = (1.0 + root) / (2.0 * nu)
        return complex(slow), complex(fast)
    im = math.sqrt(-disc) / (2.0 * nu)
    return complex(1.0 / (2.0 * nu), -im), complex(1.0 / (2.0 * nu), im)


def branch_rate(lam: float, nu: float) -> float:
    """Real part of the slow root for one eigenvalue of S."""
    return quadratic_roots(lam, nu)[0].real


def kinetic_rate(spec: KineticSpec) -> float:
    """Closed-form rate: min over sigma(S) of the slow-root real part."""
    return min(branch_rate(float(lam), spec.nu) for lam in spec.s.eigenvalues)


def kinetic_rate_numeric(spec: KineticSpec) -> float:
    return general_eigenvalues(kinetic_drift(spec)).rho


_EPS = float(np.finfo(float).eps)


def crosscheck_tolerance(spec: KineticSpec) -> float:
    """Admissible |closed form - block eigenvalue| gap.

    1e-9 relative, plus the eigensolver's backward error eps ||A||_F (which
    dominates for small nu, where the slow root ~ nu^2 lam sits next to entries
    ~ 1/nu), plus sqrt(eps ||A||_F / nu) next to the double-root branch point.
    """
    r = kinetic_rate(spec)
    norm = float(np.linalg.norm(kinetic_drift(spec)))
    out = 1e-9 * r + 8.0 * _EPS * norm
    gaps = np.abs(1.0 - 4.0 * spec.s.eigenvalues * spec.nu**3)
    if np.min(gaps) < 1e-4:
        out += 8.0 * math.sqrt(_EPS * norm / spec.nu)
    return out


def eigenvector_residual(spec: KineticSpec) -> float:
    """Largest relative residual of the (v, -r v) eigenvector ansatz."""
    a = kinetic_drift(spec)
    worst = 0.0
    for lam, v in zip(spec.s.eigenvalues, spec.s.eigenvectors.T):
        for r in quadratic_roots(float(lam), spec.nu):
            w = np.r_[v, -r * v]
            res = np.linalg.norm(a @ w + r * w) / (np.linalg.norm(w) * max(1.0, abs(r)))
            worst = max(worst, float(res))
    return worst


@dataclass(frozen=True)
class NuOptimum:
    nu: float
    rate: float
    bracket: tuple[float, float]
    history: list = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "nu_star": self.nu,
                "rate_star": self.rate,
                "bracket": list(self.bracket),
                "history": [list(h) for h in self.history],
            },
            indent=1,
        )


def default_bracket(s: PrecisionMatrix) -> tuple[float, float]:
    hat = (4.0 * s.lambda_max) ** (-1.0 / 3.0)
    return 1e-3 * hat, 1e3 * hat


def optimize_nu(s: PrecisionMatrix, bracket=None, rtol: float = 1e-10, max_iter: int = 500) -> NuOptimum:
    """Golden-section maximization of kinetic_rate over log(nu).

    The rate has a kink at 4 lam_min nu^3 = 1, so no derivatives are used.
    Every bracket refinement (lo, hi, best nu, best rate) is kept in
    ``history``.
    """
    lo, hi = default_bracket(s) if bracket is None else (float(bracket[0]), float(bracket[1]))
    if not 0 < lo < hi:
        raise ValidationError(f"invalid bracket ({lo}, {hi})")

    def f(log_nu: float) -> float:
        return kinetic_rate(KineticSpec(s, math.exp(log_nu)))

    a, b = math.log(lo), math.log(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    history = []
    for _ in range(max_iter):
        if b - a <= rtol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        best = (c, fc) if fc >= fd else (d, fd)
        history.append((math.exp(a), math.exp(b), math.exp(best[0]), best[1]))
    # the maximum sits on a kink, so keep the best evaluated abscissa
    x = max((0.5 * (a + b), c, d), key=f)
    nu_star = math.exp(x)
    edge = 1e-6
    if x - math.log(lo) < edge or math.log(hi) - x < edge:
        raise ValidationError(
            f"rate is monotone over the bracket: r({lo:.6g}) = {f(math.log(lo)):.6g}, "
            f"r({hi:.6g}) = {f(math.log(hi)):.6g}"
        )
    return NuOptimum(nu_star, f(x), (lo, hi), history)


@dataclass(frozen=True)
class RateComparison:
    lam: float
    overdamped: float
    kinetic: float
    winner: str


def overdamped_vs_kinetic(lam: float) -> RateComparison:
    """Rate lam of dX = -lam X dt + sqrt(2) dB against the optimal kinetic rate (lam/2)^(1/3)."""
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    kin = (lam / 2.0) ** (1.0 / 3.0)
    if abs(lam - kin) <= 1e-12 * lam:
        winner = "equal"
    else:
        winner = "overdamped" if lam > kin else "kinetic"
    return RateComparison(lam, lam, kin, winner)


CROSSOVER_LAMBDA = 1.0 / math.sqrt(2.0)


def rescaled_drift(spec: KineticSpec) -> np.ndarray:
    """Drift of dX = Y/nu dt, dY = -S X dt - Y/nu dt + sqrt(2) dB.

    It also leaves N(0, S^-1) x N(0, nu I) invariant, but Y is no longer the
    velocity of X; no rate claim is attached to it.
    """
    n = spec.s.n
    eye = np.eye(n)
    return np.block([[np.zeros((n, n)), eye / spec.nu], [-spec.s.s, -eye / spec.nu]])


def nu_sweep(s: PrecisionMatrix, nus) -> list[tuple[float, float, float]]:
    """(nu, closed-form rate, block-matrix rate) rows."""
    rows = []
    for nu in np.asarray(nus, dtype=float):
        spec = KineticSpec(s, float(nu))
        rows.append((float(nu), kinetic_rate(spec), kinetic_rate_numeric(spec)))
    return rows


def sweep_mismatches(s: PrecisionMatrix, rows) -> list[tuple[float, float, float]]:
    """Rows whose closed-form and block rates differ beyond crosscheck_tolerance."""
    return [row for row in rows if abs(row[1] - row[2]) > crosscheck_tolerance(KineticSpec(s, row[0]))]


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nu", "rate", "rate_numeric"])
        for nu, r, rn in rows:
            w.writerow([f"{nu:.16e}", f"{r:.16e}", f"{rn:.16e}"])
