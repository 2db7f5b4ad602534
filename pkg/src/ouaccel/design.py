"""Construction and certification of sampler designs (A, D).

A pair (A, D) leaves N(0, S^-1) invariant with randomness budget Tr D <= N
exactly when A = -(D + J) S for an antisymmetric J. Given D, the fastest
drift is obtained by working in the frame x -> S^{1/2} x, where the problem
becomes choosing an antisymmetric J~ so that every eigenvalue of D~ + J~ has
real part Tr(D~)/N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .matrixcore import (
    PrecisionMatrix,
    ValidationError,
    extended_product,
    psd_factor,
    spectral_rate,
    symmetric_eig,
)

REVERSIBLE_IDENTITY = "reversible_identity"
REVERSIBLE_OPTIMAL = "reversible_optimal"
ELLIPTIC_OPTIMAL = "elliptic_optimal"
HYPOELLIPTIC_OPTIMAL = "hypoelliptic_optimal"
CUSTOM = "custom"
FAMILIES = (
    REVERSIBLE_IDENTITY,
    REVERSIBLE_OPTIMAL,
    ELLIPTIC_OPTIMAL,
    HYPOELLIPTIC_OPTIMAL,
    CUSTOM,
)


@dataclass(frozen=True)
class SamplerDesign:
    a: np.ndarray
    d: np.ndarray
    j: np.ndarray
    family: str
    rate: float
    nominal_rate: float
    invariance_residual: float
    hypoelliptic: bool
    # J~ = S^{1/2} J S^{1/2}, kept from construction for certificate checks
    j_tilde: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class EqualDiagonalBasis:
    p: np.ndarray
    residual: float
    rotations: int


def _antisym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m - m.T)


def _sym_float(m) -> np.ndarray:
    return np.asarray(0.5 * (m + m.T), dtype=float)


def invariance_residual(a, d, s: PrecisionMatrix) -> float:
    """||A S^-1 + S^-1 A^T + 2D||_F, zero iff N(0, S^-1) is invariant."""
    as_inv = s.right_divide(a)
    r = as_inv + as_inv.T + 2 * np.asarray(d, dtype=np.longdouble)
    return float(np.linalg.norm(np.asarray(r, dtype=float)))


def _check_diffusion(d: np.ndarray, n: int) -> None:
    if d.shape != (n, n):
        raise ValidationError(f"diffusion matrix shape {d.shape} does not match dimension {n}")
    if np.linalg.norm(d - d.T) > tol.SYMMETRY_RTOL * max(np.linalg.norm(d), 1.0):
        raise ValidationError("diffusion matrix is not symmetric")
    tr = float(np.trace(d))
    if tr > n + tol.TRACE_ATOL:
        raise ValidationError(f"Tr D = {tr!r} exceeds the randomness budget {n}")
    lo = float(np.linalg.eigvalsh(0.5 * (d + d.T))[0])
    if lo < -tol.RANK_RTOL * max(np.linalg.norm(d, 2), 1e-300):
        raise ValidationError(f"diffusion matrix is not PSD (min eigenvalue {lo:.3e})")


def check_membership(a, d, s: PrecisionMatrix):
    """Decompose A = -(D + J) S.

    Returns ``(is_member, J, residual)``; J is None when the symmetric defect
    exceeds the membership tolerance.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.shape != (s.n, s.n) or d.shape != (s.n, s.n):
        raise ValidationError(
            f"dimension mismatch: A {a.shape}, D {d.shape}, S is {s.n}x{s.n}"
        )
    residual = invariance_residual(a, d, s)
    ok = residual <= tol.MEMBERSHIP_RTOL * np.linalg.norm(s.s)
    if ok:
        try:
            _check_diffusion(d, s.n)
        except ValidationError:
            ok = False
    if not ok:
        return False, None, residual
    j = np.asarray(_antisym(-s.right_divide(a) - d), dtype=float)
    return True, j, residual


def controllable_rank(a, d) -> int:
    """Dimension of the Krylov space spanned by F, A^T F, (A^T)^2 F, ...

    F is the PSD factor of D. The Krylov blocks are orthonormalized as they
    are generated (block Arnoldi) so the rank decision is not spoiled by the
    growth of (A^T)^k.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    f = psd_factor(d)
    if f.shape[1] == 0:
        return 0
    at = a.T
    a_norm = max(np.linalg.norm(at, 2), 1e-300)

    def new_directions(block, basis, scale):
        if basis is not None:
            for _ in range(2):
                block = block - basis @ (basis.T @ block)
        if block.shape[1] == 0:
            return block
        u, sv, _ = np.linalg.svd(block, full_matrices=False)
        return u[:, sv > tol.RANK_RTOL * scale]

    basis = new_directions(f, None, np.linalg.norm(f, 2))
    frontier = basis
    while basis.shape[1] < n and frontier.shape[1] > 0:
        frontier = new_directions(at @ frontier, basis, a_norm)
        basis = np.hstack([basis, frontier])
    return min(basis.shape[1], n)


def hypoellipticity_check(a, d) -> bool:
    """Kalman rank test: Ker D contains no nontrivial A^T-invariant subspace."""
    a = np.asarray(a, dtype=float)
    return controllable_rank(a, d) == a.shape[0]


def equal_diagonal_basis(m) -> EqualDiagonalBasis:
    """Orthonormal P such that every diagonal entry of P^T M P equals Tr M / N.

    Starts from the eigenbasis and applies at most N-1 plane rotations, each
    one setting a single diagonal entry to the mean exactly.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    _, p = symmetric_eig(m)
    b = p.T @ m @ p
    b = 0.5 * (b + b.T)
    mean = float(np.trace(m)) / n
    thresh = 0.1 * tol.EQUAL_DIAGONAL_RTOL * (1.0 + abs(mean))
    fixed = np.zeros(n, dtype=bool)
    rotations = 0
    for _ in range(n - 1):
        dev = np.diag(b) - mean
        free = ~fixed & (np.abs(dev) > thresh)
        if not free.any():
            break
        masked = np.where(free, dev, 0.0)
        i, j = int(np.argmax(masked)), int(np.argmin(masked))
        if masked[i] <= 0 or masked[j] >= 0:
            break
        hi, lo, off = b[i, i], b[j, j], b[i, j]
        half_gap = 0.5 * (hi - lo)
        radius = np.hypot(half_gap, off)
        phi = np.arctan2(off, half_gap)
        target = (mean - 0.5 * (hi + lo)) / radius
        theta = 0.5 * (phi + np.arccos(np.clip(target, -1.0, 1.0)))
        c, s_ = np.cos(theta), np.sin(theta)
        g = np.array([[c, -s_], [s_, c]])
        idx = [i, j]
        p[:, idx] = p[:, idx] @ g
        b[:, idx] = b[:, idx] @ g
        b[idx, :] = g.T @ b[idx, :]
        fixed[i] = True
        rotations += 1
    residual = float(np.max(np.abs(np.diag(p.T @ m @ p) - mean)))
    return EqualDiagonalBasis(p=p, residual=residual, rotations=rotations)


def default_nu(n: int) -> np.ndarray:
    return np.arange(n + 1, 2 * n + 1, dtype=float)


def jhat(n: int, nu=None) -> np.ndarray:
    """Antisymmetric matrix with entries (nu_k + nu_l) / (nu_k - nu_l).

    ``nu`` defaults to nu_k = N + k. The matching Lyapunov weight for the
    commutator identity is ``diag(1 / nu)``, see :func:`lyapunov_weights`.
    """
    nu = default_nu(n) if nu is None else np.asarray(nu, dtype=float)
    if nu.shape != (n,):
        raise ValidationError(f"expected {n} weights, got shape {nu.shape}")
    if np.any(nu <= 0):
        raise ValidationError("weights must be positive")
    diff = nu[:, None] - nu[None, :]
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.min(np.abs(diff[off])) < tol.NU_SEPARATION_RTOL * nu.max():
        raise ValidationError("weights are not separated enough to build Jhat")
    out = np.zeros((n, n))
    out[off] = (nu[:, None] + nu[None, :])[off] / diff[off]
    return _antisym(out)


def lyapunov_weights(nu) -> np.ndarray:
    """Diagonal Q for which Q Jhat - Jhat Q = -DQ - QD + 2Q with D all-ones."""
    return np.diag(1.0 / np.asarray(nu, dtype=float))


def commutator_identity_check(q, jtilde, d=None) -> float:
    """Frobenius residual of Q J - J Q + D Q + Q D - 2 Q."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    jtilde = np.atleast_2d(np.asarray(jtilde, dtype=float))
    n = q.shape[0]
    w = np.diag(q)
    if np.any(q != np.diag(w)) or np.any(w <= 0):
        raise ValidationError("Q must be a positive diagonal matrix")
    if n > 1 and np.min(np.abs(w[:, None] - w[None, :])[~np.eye(n, dtype=bool)]) == 0:
        raise ValidationError("Q has repeated diagonal entries")
    d = np.ones((n, n)) if d is None else np.asarray(d, dtype=float)
    return float(np.linalg.norm(q @ jtilde - jtilde @ q + d @ q + q @ d - 2 * q))


def optimal_antisymmetric(d_tilde, nu=None):
    """Antisymmetric J~ with Re sigma(D~ + J~) = {Tr D~ / N}.

    Returns ``(j_tilde, p, lyapunov)`` where ``lyapunov`` is the matrix
    ``P diag(1/nu) P^T`` certifying the spectrum: for the normalized
    B = (D~ + J~) / c one has ``L B + B^T L = 2 L``.
    """
    d_tilde = np.asarray(d_tilde, dtype=float)
    n = d_tilde.shape[0]
    nu = default_nu(n) if nu is None else np.asarray(nu, dtype=float)
    c = float(np.trace(d_tilde)) / n
    if c <= 0:
        return np.zeros((n, n)), np.eye(n), np.eye(n)
    basis = equal_diagonal_basis(d_tilde / c)
    p = basis.p
    m = p.T @ (d_tilde / c) @ p
    m = 0.5 * (m + m.T)
    # Hadamard weighting reduces to P Jhat P^T when M is the all-ones matrix
    jn = p @ (m * jhat(n, nu)) @ p.T
    lyap = p @ lyapunov_weights(nu) @ p.T
    return c * _antisym(jn), p, lyap


def _rank_one_direction(s: PrecisionMatrix, eigenspace: bool) -> np.ndarray:
    lam = s.eigenvalues
    vecs = s.eigenvectors
    if not eigenspace:
        return vecs[:, -1:]
    top = lam >= lam[-1] * (1 - 1e-10)
    return vecs[:, top]


def nominal_rate(s: PrecisionMatrix, family: str, d=None) -> float:
    n = s.n
    if family == REVERSIBLE_IDENTITY:
        return s.lambda_min
    if family == REVERSIBLE_OPTIMAL:
        return n / float(np.sum(1.0 / s.eigenvalues))
    if family == ELLIPTIC_OPTIMAL:
        return float(np.sum(s.eigenvalues)) / n
    if family == HYPOELLIPTIC_OPTIMAL:
        return s.lambda_max
    if family == CUSTOM:
        return float(np.trace(s.sqrt_s @ d @ s.sqrt_s)) / n
    raise ValidationError(f"unknown family {family!r}")


def _finish(a, d, j, family, s, j_tilde=None) -> SamplerDesign:
    return SamplerDesign(
        a=a,
        d=d,
        j=j,
        family=family,
        rate=spectral_rate(a),
        nominal_rate=nominal_rate(s, family, d),
        invariance_residual=invariance_residual(a, d, s),
        hypoelliptic=hypoellipticity_check(a, d),
        j_tilde=j_tilde,
    )


def design_from_diffusion(s: PrecisionMatrix, d, family: str = CUSTOM, nu=None) -> SamplerDesign:
    """Fastest drift for a given diffusion D (rate Tr(S^{1/2} D S^{1/2}) / N)."""
    d = np.asarray(d, dtype=float)
    d = 0.5 * (d + d.T)
    d_tilde = _sym_float(extended_product(s.sqrt_s, d, s.sqrt_s))
    j_tilde, _, _ = optimal_antisymmetric(d_tilde, nu)
    j_ext = extended_product(s.inv_sqrt_s, j_tilde, s.inv_sqrt_s)
    j_ext = 0.5 * (j_ext - j_ext.T)
    a = np.asarray(-extended_product(d + j_ext, s.s), dtype=float)
    j = np.asarray(j_ext, dtype=float)
    return _finish(a, d, j, family, s, j_tilde=j_tilde)


def build_design(
    s: PrecisionMatrix,
    family: str,
    d_override=None,
    nu=None,
    full_eigenspace: bool = False,
) -> SamplerDesign:
    """Build a certified design of the requested family.

    ``full_eigenspace`` spreads D over the whole top eigenspace of S when
    max sigma(S) is degenerate; by default D has rank one.
    """
    n = s.n
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}")
    if (d_override is not None) != (family == CUSTOM):
        raise ValidationError("d_override is required for, and only allowed with, family 'custom'")

    if family == REVERSIBLE_IDENTITY:
        d = np.eye(n)
        return _finish(-s.s.copy(), d, np.zeros((n, n)), family, s, j_tilde=np.zeros((n, n)))
    if family == REVERSIBLE_OPTIMAL:
        k = n / float(np.sum(1.0 / s.eigenvalues))
        d = k * s.inv_s
        return _finish(-k * np.eye(n), d, np.zeros((n, n)), family, s, j_tilde=np.zeros((n, n)))
    if family == ELLIPTIC_OPTIMAL:
        return design_from_diffusion(s, np.eye(n), family, nu)
    if family == HYPOELLIPTIC_OPTIMAL:
        v = _rank_one_direction(s, full_eigenspace)
        d = (n / v.shape[1]) * (v @ v.T)
        return design_from_diffusion(s, d, family, nu)

    d = np.asarray(d_override, dtype=float)
    _check_diffusion(d, n)
    return design_from_diffusion(s, d, CUSTOM, nu)


def planar_design(eps: float, h: float, hypoelliptic: bool) -> tuple[SamplerDesign, PrecisionMatrix]:
    """Two-dimensional designs for S = diag(eps, 1) with rotation strength h.

    Elliptic:      dX = -[[eps, -h], [eps h, 1]] X dt + sqrt(2) dB
    Hypoelliptic:  dZ = -[[0, -h], [eps h, 2]] Z dt + sqrt(2) (0, dB1 + dB2)
    """
    s = PrecisionMatrix.diag([eps, 1.0])
    if hypoelliptic:
        a = -np.array([[0.0, -h], [eps * h, 2.0]])
        d = np.diag([0.0, 2.0])
    else:
        a = -np.array([[eps, -h], [eps * h, 1.0]])
        d = np.eye(2)
    j = np.array([[0.0, -h], [h, 0.0]])
    return _finish(a, d, j, CUSTOM, s), s


def frobenius_bound_check(design: SamplerDesign, s: PrecisionMatrix):
    """(||A||_F, 4 N^2 sqrt(lambda_max^3 / lambda_min), satisfied)."""
    norm = float(np.linalg.norm(design.a))
    bound = 4.0 * s.n**2 * np.sqrt(s.lambda_max**3 / s.lambda_min)
    return norm, float(bound), bool(norm <= bound)


def adjoint_drift(design: SamplerDesign, s: PrecisionMatrix) -> np.ndarray:
    """Drift C = -2 D S - A of the L^2(psi_inf)-adjoint generator."""
    return -2.0 * design.d @ s.s - design.a


def tilde_frame(design: SamplerDesign, s: PrecisionMatrix):
    """(D~, J~) in the S^{1/2} frame."""
    d_tilde = _sym_float(extended_product(s.sqrt_s, design.d, s.sqrt_s))
    j_tilde = design.j_tilde
    if j_tilde is None:
        j_tilde = np.asarray(_antisym(extended_product(s.sqrt_s, design.j, s.sqrt_s)), dtype=float)
    return d_tilde, j_tilde


def certificate_spectrum(design: SamplerDesign, s: PrecisionMatrix) -> np.ndarray:
    """Eigenvalues of (D~ + J~) / (Tr D~ / N); real parts are 1 for optimal designs."""
    d_tilde, j_tilde = tilde_frame(design, s)
    c = float(np.trace(d_tilde)) / s.n
    return np.linalg.eigvals((d_tilde + j_tilde) / c)


def lyapunov_certificate_residual(design: SamplerDesign, s: PrecisionMatrix, nu=None) -> float:
    """Relative residual of L B + B^T L - 2L with B = (D~ + J~)/c, L = P diag(1/nu) P^T."""
    d_tilde, j_tilde = tilde_frame(design, s)
    c = float(np.trace(d_tilde)) / s.n
    _, _, lyap = optimal_antisymmetric(d_tilde, nu)
    b = (d_tilde + j_tilde) / c
    r = lyap @ b + b.T @ lyap - 2 * lyap
    return float(np.linalg.norm(r) / np.linalg.norm(lyap))


def mean_chain(s: PrecisionMatrix) -> tuple[float, float, float, float]:
    """(min, harmonic mean, arithmetic mean, max) of the spectrum of S."""
    lam = s.eigenvalues
    return (
        float(lam[0]),
        s.n / float(np.sum(1.0 / lam)),
        float(np.sum(lam)) / s.n,
        float(lam[-1]),
    )


def design_to_json(design: SamplerDesign) -> str:
    """Serialize; floats use the shortest repr that round-trips bit-exactly."""
    doc = {
        "n": design.n,
        "family": design.family,
        "A": design.a.tolist(),
        "D": design.d.tolist(),
        "J": design.j.tolist(),
        "rate": design.rate,
        "nominal_rate": design.nominal_rate,
        "residuals": {"invariance": design.invariance_residual},
        "hypoelliptic": design.hypoelliptic,
    }
    if design.j_tilde is not None:
        doc["J_tilde"] = design.j_tilde.tolist()
    return json.dumps(doc, indent=1)


def design_from_json(text: str) -> SamplerDesign:
    doc = json.loads(text)
    jt = doc.get("J_tilde")
    return SamplerDesign(
        a=np.array(doc["A"], dtype=float),
        d=np.array(doc["D"], dtype=float),
        j=np.array(doc["J"], dtype=float),
        family=doc["family"],
        rate=float(doc["rate"]),
        nominal_rate=float(doc["nominal_rate"]),
        invariance_residual=float(doc["residuals"]["invariance"]),
        hypoelliptic=bool(doc["hypoelliptic"]),
        j_tilde=None if jt is None else np.array(jt, dtype=float),
    )
