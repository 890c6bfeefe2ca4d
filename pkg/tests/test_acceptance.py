"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured values once its assertions hold.  Heavy runs are shared
through module-scoped fixtures; every fixture also records its wall time so
the runtime limits are part of the checks."""

import math
import time

import numpy as np
import pytest

from afosim.analysis import (compare_maps, fit_convergence, frequency_response,
                             mean_lambda_omega, spectrogram)
from afosim.errors import SingularManifoldError
from afosim.integrator import IntegratorOptions, integrate
from afosim.manifolds import reconstruction_error, residual
from afosim.models import AfoParams, PoolParams, PoolState, afo_system, pool_system
from afosim.signals import (Constant, Cosine, SignalSpec, lorenz_trace,
                            zero_crossings)
from afosim.slowfast_maps import (envelope, fixed_points_cosine,
                                  fixed_points_periodic, predict_sequence)

F1, F2, F3 = 30.0, 30.0 * math.sqrt(2.0), 30.0 * math.pi / math.sqrt(2.0)
POOL3_SIGNAL = SignalSpec([Cosine(1.3, F1, 0.0), Cosine(1.0, F2, 0.0),
                           Cosine(1.4, F3, 0.0)])
POOL3_TARGETS = [(F1, 1.3), (F2, 1.0), (F3, 1.4)]


def _report(criterion, detail):
    print(f"\nACCEPTANCE {criterion}: PASS — {detail}")


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def fig2_bundle():
    sig = SignalSpec([Cosine(1.0, 100.0, 0.0)])
    opts = IntegratorOptions(max_step=math.pi / 100 / 50, output_step=1e-4)
    start = time.perf_counter()
    traj = integrate(afo_system(AfoParams(1.0, 1e7), sig), [0.0, 90.0],
                     0.0, 11.0, opts, event_signals=[("input", sig)])
    report = fit_convergence(traj, 1.0)
    pred = predict_sequence(90.0, zero_crossings(sig, 0.0, 11.0), 1.0)
    comp = compare_maps(traj, pred, 1e7)
    runtime = time.perf_counter() - start
    return dict(traj=traj, report=report, comp=comp, runtime=runtime)


@pytest.fixture(scope="module")
def fig3_bundle():
    sig = SignalSpec([Cosine(1.3, 30.0, 0.4), Cosine(1.0, 60.0, 0.0),
                      Cosine(1.4, 90.0, 1.3)])
    opts = IntegratorOptions(max_step=math.pi / 90 / 50, output_step=2e-4)
    start = time.perf_counter()
    traj = integrate(afo_system(AfoParams(1.0, 1e6), sig), [0.0, 40.0],
                     0.0, 10.0, opts, event_signals=[("input", sig)])
    pred = predict_sequence(40.0, zero_crossings(sig, 0.0, 10.0), 1.0)
    comp = compare_maps(traj, pred, 1e6)
    runtime = time.perf_counter() - start
    return dict(traj=traj, sig=sig, comp=comp, runtime=runtime)


@pytest.fixture(scope="module")
def lorenz_bundle():
    start = time.perf_counter()
    trace = lorenz_trace(60.0)
    sig = SignalSpec([trace, Constant(-23.0)])
    # FFT oracle for the dominant pulsation of the same centered trace
    v = sig.eval_array(trace.times)
    w = np.hanning(v.size)
    amp = np.abs(np.fft.rfft((v - v.mean()) * w))
    freqs = 2 * math.pi * np.fft.rfftfreq(v.size, float(trace.times[1] - trace.times[0]))
    peak = float(freqs[np.argmax(amp)])

    bound = trace.freq_bound(0.0, 60.0)
    phi0 = 0.0 if sig.eval(0.0) > 0 else math.pi
    opts = IntegratorOptions(max_step=math.pi / (50 * bound), output_step=5e-4)
    K = 1e5
    traj = integrate(afo_system(AfoParams(1.0, K), sig), [phi0, 15.0],
                     0.0, 25.0, opts, event_signals=[("input", sig)])
    report = fit_convergence(traj, 1.0)
    pred = predict_sequence(15.0, zero_crossings(sig, 0.0, 25.0, omega_max_hint=bound), 1.0)
    comp = compare_maps(traj, pred, K)
    runtime = time.perf_counter() - start
    return dict(peak=peak, report=report, comp=comp, runtime=runtime)


@pytest.fixture(scope="module")
def aperiodic_bundle():
    opts = IntegratorOptions(max_step=math.pi / F3 / 50, output_step=2e-4)
    start = time.perf_counter()
    traj = integrate(afo_system(AfoParams(1.0, 1e7), POOL3_SIGNAL), [0.0, 40.0],
                     0.0, 7.0, opts, event_signals=[("input", POOL3_SIGNAL)])
    report = fit_convergence(traj, 1.0)
    pred = predict_sequence(40.0, zero_crossings(POOL3_SIGNAL, 0.0, 7.0), 1.0)
    comp = compare_maps(traj, pred, 1e7)
    runtime = time.perf_counter() - start
    return dict(report=report, comp=comp, runtime=runtime)


def _run_pool3(K):
    p = PoolParams(3, 1.0, K, 10.0)
    y0 = PoolState(phi=[0.0, 2 * math.pi / 3, 4 * math.pi / 3],
                   omega=[25.0, 45.0, 70.0], alpha=[0.0, 0.0, 0.0]).as_array()
    opts = IntegratorOptions(max_step=math.pi / (50 * F3), output_step=1e-3)
    start = time.perf_counter()
    traj = integrate(pool_system(p, POOL3_SIGNAL), y0, 0.0, 60.0, opts)
    runtime = time.perf_counter() - start
    tail = traj.times >= 55.0
    finals = []
    for i in range(3):
        finals.append((float(traj.column(f"omega_{i}")[tail].mean()),
                       float(traj.column(f"alpha_{i}")[tail].mean())))
    finals.sort()
    err = reconstruction_error(traj, POOL3_SIGNAL)
    mse = float(np.mean(err[tail] ** 2))
    freq_ok = all(abs(lw - ft) <= 1.0 for (lw, _), (ft, _) in zip(finals, POOL3_TARGETS))
    alpha_ok = all(abs(a - fa) <= 0.1 for (_, a), (_, fa) in zip(finals, POOL3_TARGETS))
    return dict(finals=finals, mse=mse, freq_ok=freq_ok, alpha_ok=alpha_ok,
                runtime=runtime)


@pytest.fixture(scope="module")
def pool3_moderate():
    return _run_pool3(100.0)


@pytest.fixture(scope="module")
def pool3_strong():
    return _run_pool3(1e4)


# ---------------------------------------------------------------- criteria

def test_criterion_01_fig2_reproduction(fig2_bundle):
    rep = fig2_bundle["report"]
    comp = fig2_bundle["comp"]
    assert abs(rep.omega_final - 100.008) <= 0.01
    assert abs(rep.ripple_amplitude - math.pi / 2) <= 0.05
    assert comp.max_error < 0.05 * math.pi
    assert fig2_bundle["runtime"] < 60.0
    _report("1 (fig2 reproduction)",
            f"tail mean={rep.omega_final:.4f}, ripple={rep.ripple_amplitude:.4f}, "
            f"map max err={comp.max_error / math.pi:.4f} pi, "
            f"runtime={fig2_bundle['runtime']:.1f}s")


def test_criterion_01b_envelope_bounds_every_sample(fig2_bundle):
    # the exponential envelope stays within pi/2 (+0.1 slack) of omega(t)
    traj = fig2_bundle["traj"]
    fp = fixed_points_cosine(1.0, 100.0)
    env = envelope(90.0, fp.omega_tilde, 1.0, traj.times)
    gap = np.abs(traj.column("omega") - env)
    assert gap.max() <= math.pi / 2 + 0.1
    _report("1b (envelope)", f"max |omega - envelope| = {gap.max():.3f}")


def test_criterion_02_closed_form_consistency():
    rng = np.random.default_rng(2024)
    n_bounds = 0
    for _ in range(1000):
        lam = 10.0 ** rng.uniform(-1, 1)
        omega_F = 10.0 ** rng.uniform(math.log10(0.5), math.log10(50.0))
        fp = fixed_points_cosine(lam, omega_F)
        assert abs((fp.omega_bar_plus - fp.omega_bar_minus) - math.pi) < 1e-12
        period = 2 * math.pi / omega_F
        fp2 = fixed_points_periodic(lam, omega_F, [period / 2, period])
        assert abs(fp2.omega_bar_plus - fp.omega_bar_plus) < 1e-12
        assert abs(fp2.omega_bar_minus - fp.omega_bar_minus) < 1e-12
        if lam * math.pi / omega_F < 1.0:
            n_bounds += 1
            assert omega_F < lam * fp.omega_bar_plus < omega_F + lam * math.pi
            assert omega_F - lam * math.pi < lam * fp.omega_bar_minus < omega_F
    _report("2 (closed-form consistency)",
            f"1000 samples, {n_bounds} in the bound regime")


def test_criterion_03_fig3_reproduction(fig3_bundle):
    traj = fig3_bundle["traj"]
    comp = fig3_bundle["comp"]
    tail = traj.times >= traj.t1 - 1.0
    lam_om = traj.column("omega")[tail]
    lo, hi = 60.0 - math.pi - 0.5, 60.0 + math.pi + 0.5
    assert lo <= lam_om.min() and lam_om.max() <= hi
    assert comp.max_error < 0.05 * math.pi
    assert fig3_bundle["runtime"] < 60.0
    _report("3 (fig3 reproduction)",
            f"tail range [{lam_om.min():.2f}, {lam_om.max():.2f}] in "
            f"[{lo:.2f}, {hi:.2f}], map max err={comp.max_error / math.pi:.4f} pi, "
            f"runtime={fig3_bundle['runtime']:.1f}s")


def test_criterion_04_slow_rate_limit(fig3_bundle):
    sig = fig3_bundle["sig"]
    period = 2 * math.pi / 30.0
    cr = zero_crossings(sig, 0.0, 2.1 * period)
    t0 = cr.times[0]
    zs = cr.times[(cr.times > t0) & (cr.times <= t0 + period + 1e-12)] - t0
    zs[-1] = period
    assert zs.size == 4
    lam = 1e-6
    fp = fixed_points_periodic(lam, 30.0, zs)
    assert abs(lam * fp.omega_tilde - 60.0) / 60.0 < 1e-3
    fpc = fixed_points_cosine(1e-6, 100.0)
    assert abs(1e-6 * fpc.omega_tilde - 100.0) / 100.0 < 1e-6
    _report("4 (slow-rate limit)",
            f"periodic: lambda*omega_tilde={lam * fp.omega_tilde:.4f} (target 60), "
            f"cosine: {1e-6 * fpc.omega_tilde:.6f} (target 100)")


def test_criterion_05_lorenz_extraction(lorenz_bundle):
    b = lorenz_bundle
    assert b["peak"] == pytest.approx(8.42, abs=0.4)  # sanity on the oracle itself
    assert abs(b["report"].omega_final - b["peak"]) < 0.5
    assert b["comp"].mean_error < 0.2
    assert b["runtime"] < 120.0
    _report("5 (lorenz extraction)",
            f"tail mean={b['report'].omega_final:.3f} vs FFT peak={b['peak']:.3f}, "
            f"map mean err={b['comp'].mean_error:.4f}, runtime={b['runtime']:.1f}s")


def test_criterion_06_strictly_positive_input():
    sig = SignalSpec([Constant(2.0), Cosine(1.0, 100.0, 0.0)])
    opts = IntegratorOptions(max_step=math.pi / 100 / 50, output_step=1e-3)
    traj = integrate(afo_system(AfoParams(1.0, 1e5), sig), [0.0, 20.0],
                     0.0, 8.0, opts, event_signals=[("input", sig)])
    assert len(traj.events) == 0
    rep = fit_convergence(traj, 1.0)
    assert abs(rep.omega_final) < 0.1
    _report("6 (strictly positive input)",
            f"tail mean lambda*omega = {rep.omega_final:.2e}")


def test_criterion_07_aperiodic_strong_coupling(aperiodic_bundle):
    rep = aperiodic_bundle["report"]
    comp = aperiodic_bundle["comp"]
    assert not rep.converged
    assert comp.mean_error < 0.1 * math.pi
    _report("7 (aperiodic strong coupling)",
            f"non-converged (r2={rep.fit_r2:.2f}, ripple={rep.ripple_amplitude:.2f}); "
            f"map mean err={comp.mean_error / math.pi:.4f} pi over {comp.n_events} events")


def test_criterion_08_frequency_response():
    start = time.perf_counter()
    details = []
    for lam in (0.1, 1.0, 10.0):
        omega_F = 1000.0 * lam
        K = 100.0 * omega_F
        pts = frequency_response(lam, omega_F, [lam, 10 * lam, 100 * lam], K)
        mag = {round(p.mod_freq / lam, 3): p.magnitude_db for p in pts}
        ph = {round(p.mod_freq / lam, 3): math.degrees(p.phase) for p in pts}
        assert mag[1.0] == pytest.approx(-3.0, abs=0.5)
        assert ph[1.0] == pytest.approx(-45.0, abs=5.0)
        slope = mag[100.0] - mag[10.0]
        assert slope == pytest.approx(-20.0, abs=2.0)
        details.append(f"lambda={lam:g}: {mag[1.0]:.2f} dB / {ph[1.0]:.1f} deg, "
                       f"slope {slope:.1f} dB/dec")
    runtime = time.perf_counter() - start
    assert runtime < 600.0
    _report("8 (frequency response)", "; ".join(details) + f"; runtime={runtime:.0f}s")


def test_criterion_09_manifold_residual_and_slow_phase(fig2_bundle):
    sig = SignalSpec([Cosine(1.0, 10.0, 0.3), Constant(0.2)])
    rng = np.random.default_rng(99)
    ratios = []
    while len(ratios) < 100:
        k = int(rng.integers(-3, 4))
        Omega = float(rng.uniform(-5, 5))
        theta = float(rng.uniform(0, 2))
        if abs(sig.eval(theta)) <= 0.1 or abs(k * math.pi - Omega) < 0.1:
            continue
        r1 = residual(k, Omega, theta, sig, 1.0, 1e-4)
        r2 = residual(k, Omega, theta, sig, 1.0, 5e-5)
        ratios.append(r1 / r2)
    ratios = np.array(ratios)
    assert np.all((ratios > 3.5) & (ratios < 4.5))

    # slow-phase regression on one steady-state decay of the fig2 run
    traj = fig2_bundle["traj"]
    ev = traj.event_times()
    t_a, t_b = ev[-10], ev[-9]
    gap = t_b - t_a
    sel = (traj.times >= t_a + 0.1 * gap) & (traj.times <= t_b - 0.1 * gap)
    ts = traj.times[sel]
    om = traj.column("omega")[sel]
    slope = np.polyfit(ts, np.log(om), 1)[0]
    assert slope == pytest.approx(-1.0, rel=0.02)
    _report("9 (manifold residual & slow phase)",
            f"residual ratios in [{ratios.min():.2f}, {ratios.max():.2f}], "
            f"slow-phase slope={slope:.4f}")


def test_criterion_10_single_oscillator_pool():
    I = SignalSpec([Cosine(2.0, 30.0, 0.0)])
    p = PoolParams(1, 1.0, 1e5, 2.0)
    opts = IntegratorOptions(max_step=math.pi / 30 / 50, output_step=1e-3)
    start = time.perf_counter()
    traj = integrate(pool_system(p, I),
                     PoolState(phi=[0.0], omega=[20.0], alpha=[0.0]).as_array(),
                     0.0, 40.0, opts)
    runtime = time.perf_counter() - start
    tail = traj.times >= 39.0
    lam_om = traj.column("omega_0")[tail]
    alpha = traj.column("alpha_0")[tail]
    ripple = 0.5 * (lam_om.max() - lam_om.min())
    assert lam_om.mean() == pytest.approx(30.0, abs=0.2)
    assert alpha.mean() == pytest.approx(2.0, abs=0.02)
    assert ripple < 0.1
    assert runtime < 120.0
    _report("10 (single-oscillator pool)",
            f"lambda*omega={lam_om.mean():.4f}, alpha={alpha.mean():.4f}, "
            f"ripple={ripple:.4f}, runtime={runtime:.1f}s")


def test_criterion_11_pool_three_moderate_coupling(pool3_moderate):
    r = pool3_moderate
    assert r["freq_ok"] and r["alpha_ok"]
    assert r["mse"] < 1e-2
    assert r["runtime"] < 300.0
    got = ", ".join(f"({lw:.2f}, {a:.3f})" for lw, a in r["finals"])
    _report("11 (pool N=3, K=100)",
            f"(lambda*omega, alpha) = {got}; recon MSE={r['mse']:.2e}, "
            f"runtime={r['runtime']:.1f}s")


def test_criterion_12_pool_three_strong_coupling(pool3_strong):
    r = pool3_strong
    assert r["mse"] < 1e-2
    assert not (r["freq_ok"] and r["alpha_ok"])
    got = ", ".join(f"({lw:.2f}, {a:.3f})" for lw, a in r["finals"])
    _report("12 (pool N=3, K=1e4)",
            f"reconstruction holds (MSE={r['mse']:.2e}) while per-oscillator "
            f"convergence fails: {got}")


def test_criterion_13_exact_solution_persistence():
    p = PoolParams(3, 1.0, 100.0, 10.0)
    y0 = PoolState(phi=[0.0, 0.0, 0.0], omega=[F1, F2, F3],
                   alpha=[1.3, 1.0, 1.4]).as_array()
    opts = IntegratorOptions(max_step=math.pi / (50 * F3), output_step=1e-3)
    horizon = 10 * 2 * math.pi / 30.0
    traj = integrate(pool_system(p, POOL3_SIGNAL), y0, 0.0, horizon, opts)
    # 10x integrator tolerance, scaled by the largest state component
    threshold = 10 * (opts.rel_tol * float(np.abs(y0).max()) + opts.abs_tol)
    dev_omega = float(np.max(np.abs(traj.states[:, 3:6] - y0[3:6])))
    dev_alpha = float(np.max(np.abs(traj.states[:, 6:9] - y0[6:9])))
    assert dev_omega < threshold
    assert dev_alpha < threshold
    _report("13 (exact-solution persistence)",
            f"max deviation omega={dev_omega:.2e}, alpha={dev_alpha:.2e} "
            f"< {threshold:.2e}")


# ------------------------------------------------------------- smoke runs

def test_smoke_pool50_reconstructs(tmp_path):
    from afosim.cli import bundled_config_path, load_config
    from afosim.experiments import run_experiment
    cfg = load_config(bundled_config_path("pool50"))
    summary = run_experiment(cfg, tmp_path, quiet=True)
    assert summary["recon_mse_tail"] < 0.01  # RMS error below 0.1

    rows = np.loadtxt(tmp_path / "pool50" / "spectrogram.csv",
                      delimiter=",", skiprows=1)
    last = rows[rows[:, 0] == rows[:, 0].max()]
    peaks = []
    for target, amp in POOL3_TARGETS:
        near = last[np.abs(last[:, 1] - target) <= 2.0]
        total = float(near[:, 2].sum())
        assert 0.5 * amp < total < 2.0 * amp
        peaks.append(f"{target:.1f}: {total:.2f} (input {amp})")
    _report("smoke (pool N=50)",
            f"recon MSE={summary['recon_mse_tail']:.2e}; distribution peaks "
            + "; ".join(peaks))


def test_smoke_timevarying_reconstructs(tmp_path):
    from afosim.cli import bundled_config_path, load_config
    from afosim.experiments import run_experiment
    cfg = load_config(bundled_config_path("timevarying"))
    summary = run_experiment(cfg, tmp_path, quiet=True)
    assert summary["recon_mse_tail"] < 0.01
    _report("smoke (time-varying spectra, N=100)",
            f"recon MSE={summary['recon_mse_tail']:.2e}")
