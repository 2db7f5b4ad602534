"""Dense linear-algebra kernels shared by the rest of the package.

LAPACK does the heavy lifting: ``eigh`` for symmetric problems, ``eigvals``
(Hessenberg reduction + shifted QR) for general spectra and scipy's
scaling-and-squaring Pade ``expm`` for exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import tolerances as tol


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_square(m, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    return m


def extended_product(*mats) -> np.ndarray:
    """Chain product accumulated in extended precision, rounded once at the end.

    Used where a product feeds an ill-conditioned spectrum: rounding every
    intermediate in double would perturb rho(A) by eps * ||A|| * cond(V).
    """
    acc = np.asarray(mats[0], dtype=np.longdouble)
    for m in mats[1:]:
        acc = acc @ np.asarray(m, dtype=np.longdouble)
    return acc


def symmetry_residual(m: np.ndarray) -> float:
    """Relative Frobenius asymmetry ``||M - M^T|| / ||M||`` (0 for M = 0)."""
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(m - m.T) / scale)


def symmetric_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""
    m = _as_square(m)
    res = symmetry_residual(m)
    if res > tol.SYMMETRY_RTOL:
        raise ValidationError(f"matrix is not symmetric (relative residual {res:.3e})")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    return vals, vecs


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    abscissa: float
    rho: float


def general_eigenvalues(a) -> Spectrum:
    a = _as_square(a)
    values = np.linalg.eigvals(a).astype(complex)
    abscissa = float(np.max(values.real))
    return Spectrum(values=values, abscissa=abscissa, rho=-abscissa)


def spectral_rate(a) -> float:
    """rho(A) = min over the spectrum of -Re(lambda)."""
    return general_eigenvalues(a).rho


def matrix_exponential(a, t: float = 1.0) -> np.ndarray:
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    a = _as_square(a)
    if t == 0:
        return np.eye(a.shape[0])
    return scipy.linalg.expm(t * a)


def psd_factor(d) -> np.ndarray:
    """Return F with ``F @ F.T == D`` and one column per retained eigenvalue.

    Eigenvalues below ``RANK_RTOL * ||D||`` are treated as zero; clearly
    negative ones (below ``-PSD_INDEFINITE_RTOL * ||D||``) are an error.
    """
    d = _as_square(d, "diffusion matrix")
    vals, vecs = symmetric_eig(d)
    scale = np.linalg.norm(d, 2) if d.size else 0.0
    if scale == 0.0:
        return np.zeros((d.shape[0], 0))
    if vals[0] < -tol.PSD_INDEFINITE_RTOL * scale:
        raise ValidationError(f"matrix is indefinite (min eigenvalue {vals[0]:.3e})")
    keep = vals > tol.RANK_RTOL * scale
    # descending order so the dominant direction comes first
    idx = np.flatnonzero(keep)[::-1]
    return vecs[:, idx] * np.sqrt(vals[idx])


class PrecisionMatrix:
    """Validated symmetric positive-definite precision matrix S.

    The input is symmetrized as (M + M^T)/2; the discarded asymmetry is kept
    in ``asymmetry``. Eigendecomposition and both symmetric square roots are
    computed once and cached as read-only arrays.
    """

    def __init__(self, s):
        m = _as_square(s, "precision matrix")
        self.asymmetry = symmetry_residual(m)
        if self.asymmetry > tol.SYMMETRY_RTOL:
            raise ValidationError(
                f"precision matrix is not symmetric (relative residual {self.asymmetry:.3e})"
            )
        sym = 0.5 * (m + m.T)
        vals, vecs = np.linalg.eigh(sym)
        if vals[0] <= 0:
            raise ValidationError(
                f"precision matrix is not positive definite (min eigenvalue {vals[0]:.3e})"
            )
        self.n = sym.shape[0]
        self.s = _frozen(sym)
        self.eigenvalues = _frozen(vals)
        self.eigenvectors = _frozen(vecs)
        root = np.sqrt(vals)
        self.sqrt_s = _frozen(_sym((vecs * root) @ vecs.T))
        self.inv_sqrt_s = _frozen(_sym((vecs / root) @ vecs.T))
        self.inv_s = _frozen(_sym((vecs / vals) @ vecs.T))

    @classmethod
    def diag(cls, values) -> "PrecisionMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def is_homothety(self) -> bool:
        return bool(self.lambda_max - self.lambda_min <= 1e-12 * self.lambda_max)

    def right_divide(self, a) -> np.ndarray:
        """A S^-1 in extended precision, refined against S directly.

        The cached inverse alone is only accurate to eps * cond(S); two rounds
        of refinement X <- X + (A - X S) S^-1 remove that error.
        """
        s = self.s.astype(np.longdouble)
        a = np.asarray(a, dtype=np.longdouble)
        inv = self.inv_s.astype(np.longdouble)
        x = a @ inv
        for _ in range(2):
            x = x + (a - x @ s) @ inv
        return x

    def __repr__(self):
        return f"PrecisionMatrix(n={self.n}, eigenvalues={self.eigenvalues!r})"


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def random_spd(n: int, condition_number: float, seed: int) -> PrecisionMatrix:
    """Seeded random SPD matrix.

    Q comes from the QR factorization of a Gaussian matrix; eigenvalues are
    log-uniform on [1, condition_number] with both endpoints pinned when n >= 2
    so the requested condition number is attained exactly.
    """
    if condition_number < 1:
        raise ValidationError("condition_number must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    logs = rng.uniform(0.0, np.log(condition_number), size=n)
    if n >= 2:
        logs[0], logs[1] = 0.0, np.log(condition_number)
    lam = np.exp(logs)
    return PrecisionMatrix((q * lam) @ q.T)
