"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from conftest import fixture_model, random_model, random_paired_model, record
from vjump import decay, dispersion, forests, particles, spectral
from vjump.cli import l1_density_distance
from vjump.model import VelocityModel, build_transition_matrix, check_sk_condition
from vjump.spectral import Gaussian, Grid, InitialDatum

SEED = 20261017


def maxnorm(a):
    return float(np.max(np.abs(a)))


@pytest.fixture(scope="module")
def instances():
    """200 random symmetric connected models, n <= 10, d <= 3, rates in (0, 1]."""
    rng = np.random.default_rng(SEED)
    return [random_model(rng) for _ in range(200)]


def test_ac01_goldstein_kac_closed_forms():
    t0 = time.perf_counter()
    m = VelocityModel.goldstein_kac(1.0, 1.0)
    drift = dispersion.drift_velocity_minor(m)
    Dm = dispersion.diffusion_matrix_minor(m)[0, 0]
    Df = dispersion.diffusion_matrix_forest(m)[0, 0]
    Dh = dispersion.hessian_oracle(m)[1][0, 0]
    elapsed = time.perf_counter() - t0
    ok = (drift[0] == 0.0 and abs(Dm - 1) <= 1e-12 and abs(Df - 1) <= 1e-12
          and abs(Dh - 1) <= 1e-6 and elapsed < 1.0)
    record("AC-01 goldstein-kac closed forms:", ok,
           f"drift={drift[0]!r} D_minor={Dm!r} D_forest={Df!r} |D_hessian-1|={abs(Dh - 1):.2e} time={elapsed:.2f}s")
    assert ok


def test_ac02_matrix_tree_equivalence(instances):
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for m in instances:
        table = forests.forest_minor_table(m, 3)
        dets = forests.minors_from_matrix(m, 3)
        for I, val in dets.items():
            worst = max(worst, abs(table[I] - val) / abs(val))
            count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 30.0
    record("AC-02 forest sums equal principal minors:", ok,
           f"{len(instances)} models, {count} index sets, worst rel err={worst:.2e}, time={elapsed:.1f}s")
    assert ok


def test_ac03_first_minor_equality(instances):
    worst = 0.0
    for m in instances:
        minors = forests.first_order_minors(build_transition_matrix(m))
        worst = max(worst, np.max(np.abs(minors - minors[0])) / abs(minors[0]))
    ok = worst <= 1e-10
    record("AC-03 first-order minors independent of index:", ok, f"worst rel deviation={worst:.2e}")
    assert ok


def test_ac04_drift_is_mean(instances):
    worst = 0.0
    for m in instances:
        mean = m.velocities.mean(axis=0)
        err = maxnorm(dispersion.drift_velocity_minor(m) - mean) / maxnorm(m.velocities)
        worst = max(worst, err)
    ok = worst <= 1e-12
    record("AC-04 drift equals mean velocity:", ok, f"worst rel err={worst:.2e}")
    assert ok


def test_ac05_three_route_diffusion_and_psd(instances):
    t0 = time.perf_counter()
    worst_f = worst_h = 0.0
    worst_psd = np.inf
    for m in instances[:100]:
        c = dispersion.recenter(m)
        Dm = dispersion.diffusion_matrix_minor(c)
        Df = dispersion.diffusion_matrix_forest(c)
        _, Dh = dispersion.hessian_oracle(c)
        scale = maxnorm(Dm)
        worst_f = max(worst_f, maxnorm(Dm - Df) / scale)
        worst_h = max(worst_h, maxnorm(Dm - Dh) / scale)
        worst_psd = min(worst_psd, np.linalg.eigvalsh(Dm).min() / scale)
    elapsed = time.perf_counter() - t0
    ok = worst_f <= 1e-10 and worst_h <= 1e-6 and worst_psd >= -1e-10 and elapsed < 60.0
    record("AC-05 minor/forest/hessian agreement and PSD:", ok,
           f"minor-forest={worst_f:.2e} minor-hessian={worst_h:.2e} min eig/|D|={worst_psd:.3e} time={elapsed:.1f}s")
    assert ok


def test_ac06_paired_reduction():
    rng = np.random.default_rng(SEED + 6)
    worst = 0.0
    count = 0
    for _ in range(60):
        m = random_paired_model(rng, pairs=int(rng.integers(1, 5)), d=int(rng.integers(1, 4)),
                                zero=bool(rng.random() < 0.4))
        Dp = dispersion.diffusion_matrix_paired(m)  # verifies the pair minor equalities first
        Dm = dispersion.diffusion_matrix_minor(m)
        worst = max(worst, maxnorm(Dp - Dm) / maxnorm(Dm))
        count += 1
    ok = worst <= 1e-10
    record("AC-06 paired-velocity formula matches minors:", ok, f"{count} models, worst rel err={worst:.2e}")
    assert ok


@pytest.mark.slow
def test_ac07_decay_exponents():
    t0 = time.perf_counter()
    gk = VelocityModel.goldstein_kac(1.0, 1.0)
    grid = Grid(1, 400.0, 4096)
    datum = InitialDatum((Gaussian(0, 1.0, (0.0,), 1.0),))
    times = np.geomspace(10.0, 100.0, 11)
    one = decay.run_decay(gk, grid, datum, times)
    control = decay.run_decay(gk, grid, datum, times, factor=1.0)
    elapsed1 = time.perf_counter() - t0
    s_u, s_d = one.fits["u"].slope, one.fits["difference"].slope
    s_c = control.fits["difference"].slope
    ok1 = abs(s_u + 0.25) <= 0.10 and abs(s_d + 0.75) <= 0.10 and elapsed1 < 120.0
    ok_control = abs(s_c + 0.25) <= 0.10 and abs(s_c + 0.75) > 0.10

    t1 = time.perf_counter()
    m2 = fixture_model("paired_2d")
    grid2 = Grid(2, 160.0, 512)
    datum2 = InitialDatum((Gaussian(0, 1.0, (0.0, 0.0), 0.5),))
    two = decay.run_decay(m2, grid2, datum2, times)
    elapsed2 = time.perf_counter() - t1
    s2_u, s2_d = two.fits["u"].slope, two.fits["difference"].slope
    ok2 = abs(s2_u + 0.5) <= 0.10 and abs(s2_d + 1.0) <= 0.15
    ok = ok1 and ok_control and ok2
    record("AC-07 decay exponents:", ok,
           f"d=1 |u| {s_u:.3f}+-{one.fits['u'].stderr:.3f}, |u-u_par| {s_d:.3f}+-{one.fits['difference'].stderr:.3f}"
           f" ({elapsed1:.1f}s); unhalved control |u-u_par| {s_c:.3f}; "
           f"d=2 |u| {s2_u:.3f}, |u-u_par| {s2_d:.3f} ({elapsed2:.1f}s)")
    assert ok


def _random_datum(rng, n, d, positive=False):
    bumps = []
    for i in range(n):
        for _ in range(int(rng.integers(1, 3))):
            amp = rng.uniform(0.2, 1.0) * (1 if positive or rng.random() < 0.6 else -1)
            bumps.append(Gaussian(i, amp, tuple(rng.uniform(-4, 4, d)), rng.uniform(1.0, 2.5)))
    return InitialDatum(tuple(bumps))


def _grid(d):
    return Grid(1, 40.0, 512) if d == 1 else Grid(2, 25.0, 128)


def test_ac08_lyapunov_monotonicity():
    rng = np.random.default_rng(SEED + 8)
    times = np.geomspace(0.1, 20.0, 10)
    worst = -np.inf
    for _ in range(20):
        m = random_model(rng, nmax=6, d=int(rng.integers(1, 3)))
        g = _grid(m.d)
        f0 = _random_datum(rng, m.n, m.d).sample(g, m.n)
        fields = [spectral.solve_hyperbolic(m, f0, t) for t in times]
        for eta in ("square", "absolute", "positive-part"):
            vals = np.array([spectral.lyapunov_functional(f, eta) for f in fields])
            scale = max(vals[0], np.finfo(float).tiny)
            worst = max(worst, np.max(np.diff(vals)) / scale)
    ok = worst <= 1e-8
    record("AC-08 Lyapunov functionals nonincreasing:", ok,
           f"20 models x 3 functionals, largest relative increase={worst:.2e}")
    assert ok


def test_ac09_comparison_principle():
    rng = np.random.default_rng(SEED + 9)
    times = np.geomspace(0.1, 20.0, 10)
    worst_ratio = 0.0
    held = True
    for _ in range(20):
        m = random_model(rng, nmax=6, d=int(rng.integers(1, 3)))
        g = _grid(m.d)
        f0 = _random_datum(rng, m.n, m.d).sample(g, m.n)
        gap = _random_datum(rng, m.n, m.d, positive=True).sample(g, m.n)
        g0 = spectral.SpectralField(g, f0.coeffs + gap.coeffs)
        rep = spectral.comparison_check(m, f0, g0, times)
        held &= rep.holds
        worst_ratio = max(worst_ratio, rep.worst_violation / (rep.tolerance / spectral.RINGING_RTOL))
    ok = held and worst_ratio <= 1e-8
    record("AC-09 ordered data stay ordered:", ok, f"20 models, worst violation/amplitude={worst_ratio:.2e}")
    assert ok


def test_ac10_spectral_bounds():
    rng = np.random.default_rng(SEED + 10)
    worst_abs = -np.inf
    worst_c0 = np.inf
    worst_plateau = 0.0
    models = 0
    while models < 30:
        m = random_model(rng, nmax=8)
        if not check_sk_condition(m):
            continue
        models += 1
        kmax = dispersion.resolving_frequency(m)
        mags = np.concatenate([[0.0], np.geomspace(1e-5 * kmax, kmax, 120)])
        for u in dispersion.scan_directions(m):
            scan = dispersion.spectral_abscissa_scan(m, mags[:, None] * u[None])
            worst_abs = max(worst_abs, scan.worst_margin)
            worst_c0 = min(worst_c0, scan.c0)
            worst_plateau = max(worst_plateau, abs(scan.abscissa[-1] - scan.plateau) / abs(scan.plateau))
    ok = worst_abs < 0 and worst_c0 > 0 and worst_plateau <= 0.05
    record("AC-10 spectral abscissa bounds:", ok,
           f"{models} SK models, max abscissa (k!=0)={worst_abs:.3e}, min c0={worst_c0:.3e}, "
           f"worst plateau rel err={worst_plateau:.3f}")
    assert ok


@pytest.mark.slow
def test_ac11_monte_carlo_consistency():
    t0 = time.perf_counter()
    gk = VelocityModel.goldstein_kac(1.0, 1.0)
    grid = Grid(1, 50.0, 512)
    datum = InitialDatum((Gaussian(0, 1.0, (0.0,), 1.0),))
    t_end, dt = 5.0, 0.002
    u = spectral.total_density(spectral.solve_hyperbolic(gk, datum.sample(grid, 2), t_end))
    counts = (1_000, 10_000, 100_000)
    l1 = []
    for count in counts:
        ens = particles.sample_ensemble(gk, datum, count, SEED, dt=dt, box=grid.L)
        ens = particles.run(ens, t_end)
        l1.append(l1_density_distance(particles.density_histogram(ens, grid), u))
    C = float(np.mean([e * np.sqrt(n) for e, n in zip(l1[:2], counts[:2])]))
    ok_l1 = l1[2] <= 3 * C / np.sqrt(counts[2]) and l1[0] > l1[1] > l1[2]

    # stationary start at the origin, long run for the variance
    point = InitialDatum((Gaussian(0, 1.0, (0.0,), 1e-12), Gaussian(1, 1.0, (0.0,), 1e-12)))
    ens = particles.run(particles.sample_ensemble(gk, point, 100_000, SEED + 1, dt=dt), 10.0)
    x = ens.positions[:, 0]
    var = float(x.var(ddof=1))
    exact = particles.telegraph_variance(1.0, 1.0, 10.0)
    m4 = float(np.mean((x - x.mean()) ** 4))
    se = np.sqrt((m4 - var**2) / x.size)
    ok_var = abs(var - exact) <= 3 * se
    elapsed = time.perf_counter() - t0
    ok = ok_l1 and ok_var and elapsed < 60.0
    record("AC-11 Monte Carlo vs PDE:", ok,
           f"L1={[f'{e:.4f}' for e in l1]} bound={3 * C / np.sqrt(counts[2]):.4f}; "
           f"variance {var:.4f} vs {exact:.4f} ({(var - exact) / se:+.2f} SE); time={elapsed:.1f}s")
    assert ok
