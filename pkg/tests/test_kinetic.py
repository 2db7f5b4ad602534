import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouaccel import kinetic as kn
from ouaccel.evolution import GaussianLaw, evolve_law
from ouaccel.matrixcore import PrecisionMatrix, ValidationError, general_eigenvalues, random_spd

MULTISCALE = PrecisionMatrix.diag([0.05, 1.0])


def hom(lam, n=1):
    return PrecisionMatrix(lam * np.eye(n))


def test_drift_layout():
    spec = kn.KineticSpec(MULTISCALE, 0.5)
    a = kn.kinetic_drift(spec)
    assert np.array_equal(a[:2, 2:], np.eye(2))
    assert np.array_equal(a[2:, :2], -0.5 * MULTISCALE.s)
    assert np.array_equal(a[2:, 2:], -2.0 * np.eye(2))
    with pytest.raises(ValidationError):
        kn.KineticSpec(MULTISCALE, 0.0)


def test_scalar_roots():
    slow, fast = kn.quadratic_roots(1.0, 1.0)
    assert slow == pytest.approx(complex(0.5, -math.sqrt(3) / 2), rel=1e-15)
    assert fast == pytest.approx(complex(0.5, math.sqrt(3) / 2), rel=1e-15)
    ev = general_eigenvalues(kn.kinetic_drift(kn.KineticSpec(hom(1.0), 1.0))).values
    assert np.allclose(sorted(-ev, key=lambda z: z.imag), [0.5 - 0.5j * math.sqrt(3), 0.5 + 0.5j * math.sqrt(3)], atol=1e-14)
    for r in (slow, fast):
        assert abs(r * r - r + 1) <= 1e-15


def test_homothety_above_threshold():
    lam, nu = 3.0, 1.0
    assert 4 * lam * nu**3 > 1
    spec = kn.KineticSpec(hom(lam, 3), nu)
    assert kn.kinetic_rate(spec) == 1 / (2 * nu)
    vals = general_eigenvalues(kn.kinetic_drift(spec)).values
    assert np.allclose(vals.real, -1 / (2 * nu), atol=1e-12)


def test_small_nu_limit():
    nu = 1e-3
    r = kn.kinetic_rate(kn.KineticSpec(hom(1.0), nu))
    assert r == pytest.approx(nu**2, rel=0.01)
    # the cancellation-free form holds full precision
    exact = (1 - math.sqrt(1 - 4 * nu**3)) / (2 * nu)
    assert r == pytest.approx(nu**2 * (1 + nu**3 + 2 * nu**6), rel=1e-12)
    assert r == pytest.approx(exact, rel=1e-6)


def test_homothety_optimum_value():
    spec = kn.KineticSpec(hom(1.0), 4 ** (-1 / 3))
    assert kn.kinetic_rate(spec) == pytest.approx(0.5 ** (1 / 3), rel=1e-12)
    assert kn.kinetic_rate(spec) == pytest.approx(0.793701, abs=1e-6)


def test_multiscale_rate_at_half():
    spec = kn.KineticSpec(MULTISCALE, 0.5)
    branches = [kn.branch_rate(lam, 0.5) for lam in (0.05, 1.0)]
    # lam = 0.05: 4 lam nu^3 = 0.025 < 1, slow real root; lam = 1: 0.5 < 1 too
    assert kn.kinetic_rate(spec) == min(branches)
    assert abs(kn.kinetic_rate(spec) - kn.kinetic_rate_numeric(spec)) <= kn.crosscheck_tolerance(spec)
    assert kn.kinetic_rate(spec) == pytest.approx(2 * 0.05 * 0.25 / (1 + math.sqrt(1 - 0.025)), rel=1e-15)


def test_branch_point_double_root():
    lam = 1.0
    nu = (4 * lam) ** (-1 / 3)
    slow, fast = kn.quadratic_roots(lam, nu)
    assert slow.real == pytest.approx(1 / (2 * nu), rel=1e-7)
    spec = kn.KineticSpec(hom(lam), nu)
    assert abs(kn.kinetic_rate(spec) - kn.kinetic_rate_numeric(spec)) <= kn.crosscheck_tolerance(spec)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(1.0, 1e4), st.floats(-3.0, 2.0))
def test_closed_form_matches_block_eigenvalues(seed, n, cond, log_nu):
    spec = kn.KineticSpec(random_spd(n, cond, seed), 10.0**log_nu)
    assert abs(kn.kinetic_rate(spec) - kn.kinetic_rate_numeric(spec)) <= kn.crosscheck_tolerance(spec)
    assert kn.eigenvector_residual(spec) <= 1e-9


def test_crosscheck_tolerance_is_tight_in_the_regular_regime():
    spec = kn.KineticSpec(MULTISCALE, 0.5)
    assert kn.crosscheck_tolerance(spec) <= 1e-9 * kn.kinetic_rate(spec) + 1e-14


@pytest.mark.parametrize("lam", [0.1, 1.0, 2.0])
def test_homothety_monotone_on_grid(lam):
    star = (4 * lam) ** (-1 / 3)
    nus = star * np.logspace(-2, 2, 100)
    rates = np.array([kn.kinetic_rate(kn.KineticSpec(hom(lam), nu)) for nu in nus])
    left = nus < star
    assert np.all(np.diff(rates[left]) > 0)
    assert np.all(np.diff(rates[~left]) < 0)


def test_continuity_in_nu():
    nus = np.linspace(0.1, 3.0, 2001)
    rates = np.array([kn.kinetic_rate(kn.KineticSpec(MULTISCALE, nu)) for nu in nus])
    assert np.max(np.abs(np.diff(rates))) < 1e-2
    # square-root kink at 4 lam nu^3 = 1: jumps shrink like sqrt(delta)
    kink = (4 * 0.05) ** (-1 / 3)
    r0 = kn.kinetic_rate(kn.KineticSpec(MULTISCALE, kink))
    for delta in (1e-4, 1e-6, 1e-8, 1e-10):
        for nu in (kink * (1 - delta), kink * (1 + delta)):
            assert abs(kn.kinetic_rate(kn.KineticSpec(MULTISCALE, nu)) - r0) <= 2 * math.sqrt(delta)


def test_stationary_product_law():
    for nu in (0.3, 1.0, 2.5):
        spec = kn.KineticSpec(MULTISCALE, nu)
        d = kn.kinetic_design(spec)
        assert d.invariance_residual <= 1e-12
        eq = GaussianLaw(np.zeros(4), kn.stationary_covariance(spec))
        out = evolve_law(eq, d, 7.0)
        assert np.linalg.norm(out.cov - eq.cov) <= 1e-10 * np.linalg.norm(eq.cov)


def test_nu_squared_velocity_variance_not_stationary():
    spec = kn.KineticSpec(MULTISCALE, 2.0)
    cov = kn.stationary_covariance(spec)
    cov[2:, 2:] = 4.0 * np.eye(2)
    out = evolve_law(GaussianLaw(np.zeros(4), cov), kn.kinetic_design(spec), 5.0)
    assert np.linalg.norm(out.cov - cov) > 0.1


def test_rescaled_drift_is_stationary_only():
    spec = kn.KineticSpec(MULTISCALE, 0.7)
    a = kn.rescaled_drift(spec)
    c = kn.stationary_covariance(spec)
    d = kn.kinetic_diffusion(2)
    assert np.linalg.norm(a @ c + c @ a.T + 2 * d) <= 1e-14


@pytest.mark.parametrize(
    "lam,nu_star,rate",
    [(1.0, 4 ** (-1 / 3), 0.5 ** (1 / 3)), (2.0, 0.5, 1.0), (0.1, 0.4 ** (-1 / 3), 0.05 ** (1 / 3))],
)
def test_optimize_homothety(lam, nu_star, rate):
    opt = kn.optimize_nu(hom(lam, 2))
    assert abs(opt.nu - nu_star) <= 1e-8 * nu_star
    assert opt.rate == pytest.approx(rate, rel=1e-10)


def test_optimize_multiscale_interior():
    opt = kn.optimize_nu(MULTISCALE)
    lo, hi = opt.bracket
    assert lo < opt.nu < hi
    assert opt.nu == pytest.approx((4 * 0.05) ** (-1 / 3), rel=1e-8)
    ends = [kn.kinetic_rate(kn.KineticSpec(MULTISCALE, nu)) for nu in (lo, hi)]
    assert opt.rate > max(ends)
    assert opt.history and all(h[0] <= h[2] <= h[1] for h in opt.history)
    doc = json.loads(opt.to_json())
    assert doc["nu_star"] == opt.nu and len(doc["history"]) == len(opt.history)


def test_optimize_monotone_bracket():
    with pytest.raises(ValidationError, match="monotone"):
        kn.optimize_nu(hom(1.0), bracket=(1.0, 10.0))
    with pytest.raises(ValidationError):
        kn.optimize_nu(hom(1.0), bracket=(2.0, 1.0))


def test_overdamped_comparison():
    c = kn.overdamped_vs_kinetic(kn.CROSSOVER_LAMBDA)
    assert c.winner == "equal" and c.kinetic == pytest.approx(2**-0.5, rel=1e-15)
    c = kn.overdamped_vs_kinetic(1.0)
    assert c.winner == "overdamped" and c.kinetic == pytest.approx(0.7937, abs=1e-4)
    c = kn.overdamped_vs_kinetic(0.1)
    assert c.winner == "kinetic" and c.kinetic == pytest.approx(0.3684, abs=1e-4)
    with pytest.raises(ValidationError):
        kn.overdamped_vs_kinetic(0.0)


def test_sweep_csv(tmp_path):
    rows = kn.nu_sweep(MULTISCALE, np.logspace(-2, 1, 30))
    assert kn.sweep_mismatches(MULTISCALE, rows) == []
    kn.write_sweep_csv(tmp_path / "s.csv", rows)
    lines = open(tmp_path / "s.csv").read().splitlines()
    assert lines[0] == "nu,rate,rate_numeric" and len(lines) == 31
