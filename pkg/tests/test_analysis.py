import io
import math

import numpy as np
import pytest

from afosim.analysis import (compare_maps, event_omega_extrema,
                             fit_convergence, freq_response_to_csv,
                             frequency_response, mean_lambda_omega,
                             spectrogram, spectrogram_to_csv,
                             sync_region_sweep)
from afosim.errors import AlignmentError, DomainError
from afosim.integrator import IntegratorOptions, Trajectory, integrate
from afosim.models import (AfoParams, PoolParams, System, afo_system,
                           pool_system)
from afosim.signals import Cosine, CrossingList, SignalSpec, zero_crossings
from afosim.slowfast_maps import predict_sequence


def synthetic_exponential_traj(lam=1.0, omega0=90.0, omega_inf=100.0,
                               t1=12.0, dt=1e-3):
    """Trajectory whose omega follows the exact exponential envelope and
    whose phi satisfies the phase identity d(phi-omega)/dt = lambda*omega."""
    ts = np.arange(0.0, t1 + dt / 2, dt)
    omega = (omega0 - omega_inf) * np.exp(-lam * ts) + omega_inf
    Omega = lam * (omega_inf * ts + (omega0 - omega_inf) * (1 - np.exp(-lam * ts)) / lam)
    phi = Omega + omega
    d_omega = -lam * (omega0 - omega_inf) * np.exp(-lam * ts)
    d_phi = lam * omega + d_omega
    states = np.column_stack([phi, omega])
    slopes = np.column_stack([d_phi, d_omega])
    system = System(0, 2, np.array([lam, 1e6]), None, ("phi", "omega"))
    return Trajectory(ts, states, slopes, [], system, {})


def test_fit_recovers_exact_exponential():
    traj = synthetic_exponential_traj()
    rep = fit_convergence(traj, 1.0)
    assert rep.fitted_rate == pytest.approx(1.0, rel=1e-3)
    assert rep.fit_r2 > 0.9999
    assert rep.converged
    assert rep.omega_final == pytest.approx(100.0, abs=1e-3)
    assert rep.ripple_amplitude < 1e-4


def test_fit_requires_enough_data():
    traj = synthetic_exponential_traj(t1=3.0)
    with pytest.raises(DomainError):
        fit_convergence(traj, 1.0)


def test_mean_lambda_omega_exact_identity():
    # omega(t) = 100 - 10 e^{-t}; its mean over [2, 10] by direct quadrature
    traj = synthetic_exponential_traj()
    got = mean_lambda_omega(traj, 1.0, 2.0, 10.0)
    expected = (100.0 * 8.0 - 10.0 * (math.exp(-2.0) - math.exp(-10.0))) / 8.0
    assert got == pytest.approx(expected, rel=1e-9)


def test_strictly_positive_input_adapts_to_zero():
    # no sign changes: the frequency state decays to the DC "zero frequency"
    from afosim.signals import Constant
    sig = SignalSpec([Constant(2.0), Cosine(1.0, 100.0, 0.0)])
    opts = IntegratorOptions(max_step=math.pi / 100 / 50, output_step=1e-3)
    traj = integrate(afo_system(AfoParams(1.0, 1e4), sig), [0.0, 20.0],
                     0.0, 8.0, opts, event_signals=[("input", sig)])
    assert len(traj.events) == 0
    rep = fit_convergence(traj, 1.0)
    assert abs(rep.omega_final) < 0.1


def test_event_extrema_track_sawtooth():
    sig = SignalSpec([Cosine(1.0, 50.0, 0.0)])
    K = 1e5
    opts = IntegratorOptions(max_step=math.pi / 50 / 50, output_step=2e-4)
    traj = integrate(afo_system(AfoParams(1.0, K), sig), [0.0, 45.0], 0.0,
                     8.0, opts, event_signals=[("input", sig)])
    times, minus, plus, used = event_omega_extrema(traj, K)
    assert times.size == len(traj.events)
    jumps = (plus - minus)[used][5:]
    assert np.all(np.abs(jumps - math.pi) < 0.2)


def test_compare_maps_alignment_errors():
    sig = SignalSpec([Cosine(1.0, 50.0, 0.0)])
    opts = IntegratorOptions(max_step=math.pi / 50 / 50, output_step=5e-4)
    traj = integrate(afo_system(AfoParams(1.0, 1e4), sig), [0.0, 45.0], 0.0,
                     2.0, opts, event_signals=[("input", sig)])
    cr = zero_crossings(sig, 0.0, 1.0)  # shorter window: fewer events
    pred = predict_sequence(45.0, cr, 1.0)
    with pytest.raises(AlignmentError):
        compare_maps(traj, pred, 1e4)


def test_compare_maps_small_errors_at_strong_coupling():
    sig = SignalSpec([Cosine(1.0, 50.0, 0.0)])
    K = 1e6
    opts = IntegratorOptions(max_step=math.pi / 50 / 50, output_step=2e-4)
    traj = integrate(afo_system(AfoParams(1.0, K), sig), [0.0, 45.0], 0.0,
                     6.0, opts, event_signals=[("input", sig)])
    pred = predict_sequence(45.0, zero_crossings(sig, 0.0, 6.0), 1.0)
    comp = compare_maps(traj, pred, K)
    assert comp.max_error < 0.05 * math.pi
    buf = io.StringIO()
    comp.to_csv(buf)
    assert buf.getvalue().startswith("t_event,sim_minus,sim_plus")


def test_compare_maps_error_grows_as_coupling_shrinks():
    # the jump layer at a crossing has width ~ (K |F'|)^(-1/2), so halving
    # K grows the per-event error by about sqrt(2)
    sig = SignalSpec([Cosine(1.0, 50.0, 0.0)])
    cr = zero_crossings(sig, 0.0, 6.0)
    pred = predict_sequence(45.0, cr, 1.0)
    means = []
    for K in (1e3, 2e3, 4e3, 8e3):
        opts = IntegratorOptions(max_step=math.pi / 50 / 50, output_step=2e-4)
        traj = integrate(afo_system(AfoParams(1.0, K), sig), [0.0, 45.0],
                         0.0, 6.0, opts, event_signals=[("input", sig)])
        means.append(compare_maps(traj, pred, K).mean_error)
    for coarse, fine in zip(means, means[1:]):
        assert 1.2 < coarse / fine < 1.6


def test_frequency_response_minus_3db_at_cutoff():
    pts = frequency_response(1.0, 200.0, [1.0], 2e4)
    assert pts[0].magnitude_db == pytest.approx(-3.0, abs=0.5)
    assert math.degrees(pts[0].phase) == pytest.approx(-45.0, abs=5.0)


def test_frequency_response_monotone_above_cutoff():
    pts = frequency_response(1.0, 200.0, [2.0, 6.3, 20.0], 2e4)
    mags = [p.magnitude_db for p in pts]
    assert mags[0] > mags[1] - 0.5 and mags[1] > mags[2] - 0.5
    assert mags[0] > mags[2]


def test_frequency_response_rejects_fast_modulation():
    with pytest.raises(DomainError):
        frequency_response(1.0, 100.0, [20.0], 1e4)


def test_freq_response_csv():
    pts = frequency_response(1.0, 200.0, [1.0], 2e4)
    buf = io.StringIO()
    freq_response_to_csv(pts, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "omega_C,magnitude_db,phase"
    assert len(lines) == 2


def _pool_traj(phi, omega, alpha, lam=1.0):
    n = len(phi)
    names = tuple([f"phi_{i}" for i in range(n)]
                  + [f"omega_{i}" for i in range(n)]
                  + [f"alpha_{i}" for i in range(n)])
    system = System(3, 3 * n, np.array([lam, 100.0, 1.0, float(n)]), None, names)
    ts = np.array([0.0, 1.0])
    row = np.concatenate([phi, omega, alpha])
    states = np.vstack([row, row])
    slopes = np.zeros_like(states)
    return Trajectory(ts, states, slopes, [], system, {})


def test_spectrogram_single_oscillator_amplitude():
    traj = _pool_traj([0.0], [30.0], [2.0])
    frames = spectrogram(traj, 1.0, [0.5])
    assert frames[0].bin_amplitudes[0] == 2.0
    assert frames[0].bin_centers[0] == 30.5


def test_spectrogram_opposite_phases_cancel():
    traj = _pool_traj([0.3, 0.3 + math.pi], [30.0, 30.2], [1.0, 1.0])
    frames = spectrogram(traj, 1.0, [0.0])
    assert frames[0].bin_amplitudes[0] == pytest.approx(0.0, abs=1e-12)


def test_spectrogram_aligned_phases_sum_exactly():
    traj = _pool_traj([0.0, 0.0, 0.0], [40.1, 40.5, 40.9], [0.7, 1.1, 0.4])
    frames = spectrogram(traj, 1.0, [1.0])
    assert frames[0].bin_amplitudes[0] == 0.7 + 1.1 + 0.4


def test_spectrogram_csv():
    traj = _pool_traj([0.0], [30.0], [2.0])
    frames = spectrogram(traj, 1.0, [0.0, 1.0])
    buf = io.StringIO()
    spectrogram_to_csv(frames, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "time,bin_center,amplitude"
    assert len(lines) == 3


def test_sync_region_sweep_classifies_lock_tongue():
    # Adler estimate for cos(60 t): lock for |lambda*omega0 - 60| < K/2
    sig = SignalSpec([Cosine(1.0, 60.0, 0.0)])
    res = sync_region_sweep(sig, [20.0], [55.0, 90.0], 1.0, horizon=8.0)
    assert res.locked[0, 0]
    assert not res.locked[0, 1]
    assert res.exponential[0, 0]
    assert res.omega_final[0, 0] == pytest.approx(60.0, abs=1.0)
    doc = res.to_json_dict()
    assert set(doc) >= {"grid", "flags", "parameters"}
    buf = io.StringIO()
    res.to_csv(buf)
    assert buf.getvalue().splitlines()[0].startswith("K,omega0,locked")


def test_sync_region_sweep_stable_under_longer_horizon():
    sig = SignalSpec([Cosine(1.0, 60.0, 0.0)])
    a = sync_region_sweep(sig, [10.0, 30.0], [50.0, 65.0, 90.0], 1.0, horizon=8.0)
    b = sync_region_sweep(sig, [10.0, 30.0], [50.0, 65.0, 90.0], 1.0, horizon=16.0)
    assert np.array_equal(a.locked, b.locked)
    assert np.array_equal(a.exponential, b.exponential)


def test_sync_region_sweep_rejects_incommensurate_input():
    import math as m
    sig = SignalSpec([Cosine(1.0, 30.0, 0.0), Cosine(1.0, 30.0 * m.sqrt(2), 0.0)])
    with pytest.raises(DomainError):
        sync_region_sweep(sig, [10.0], [40.0], 1.0, horizon=6.0)


def test_sync_region_sweep_deterministic_with_threads():
    sig = SignalSpec([Cosine(1.0, 60.0, 0.0)])
    a = sync_region_sweep(sig, [15.0], [55.0, 70.0], 1.0, horizon=8.0, threads=1)
    b = sync_region_sweep(sig, [15.0], [55.0, 70.0], 1.0, horizon=8.0, threads=4)
    assert np.array_equal(a.rotation, b.rotation)
    assert np.array_equal(a.fitted_rate, b.fitted_rate)
