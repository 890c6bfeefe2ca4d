"""Experiment-level analyses built on simulated trajectories.

Conventions used throughout:

* The mean of lambda*omega over a window is computed exactly from the
  identity d(phi - omega)/dt = lambda*omega, so no quadrature of the
  ripple is involved; windows are snapped to event times when events are
  available so partial sawtooth periods cannot bias the mean.
* "Just before" / "just after" values of omega at an event are extracted
  as the min/max of the dense trajectory on windows around the event: the
  slow decay makes omega minimal at the crossing and maximal at the apex
  of the fast jump, so the extraction needs no assumption about the width
  of the jump layer.
* Demodulation of the frequency read-out uses single-frequency least
  squares (fit a*cos + b*sin + c over an integer number of modulation
  periods), which is immune to the 2*omega_F ripple riding on omega(t).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import AlignmentError, DomainError
from .integrator import IntegratorOptions, Trajectory, integrate
from .models import AfoParams, afo_system, phase_system
from .signals import Cosine, FmSine, SignalSpec
from .slowfast_maps import MapPrediction

__all__ = [
    "ConvergenceReport", "FreqResponsePoint", "SpectroFrame", "MapComparison",
    "SyncRegionResult", "fit_convergence", "sync_region_sweep",
    "frequency_response", "compare_maps", "spectrogram",
    "mean_lambda_omega", "event_omega_extrema",
]


# -- shared helpers -----------------------------------------------------

def _omega_Omega_columns(traj: Trajectory):
    names = traj.names
    if "omega" in names and "phi" in names:
        return traj.column("omega"), traj.column("phi") - traj.column("omega")
    if "omega" in names and "Omega" in names:
        return traj.column("omega"), traj.column("Omega")
    raise DomainError("trajectory is not a single-oscillator run")


def mean_lambda_omega(traj: Trajectory, lambda_: float, a: float, b: float) -> float:
    """Exact time-average of lambda*omega over [a, b] via the phase identity
    (no ripple quadrature error)."""
    if not b > a:
        raise DomainError("mean_lambda_omega: need b > a")
    names = traj.names
    sa = traj.dense_eval(a)
    sb = traj.dense_eval(b)
    if "phi" in names:
        i_phi, i_om = names.index("phi"), names.index("omega")
        Oa, Ob = sa[i_phi] - sa[i_om], sb[i_phi] - sb[i_om]
    else:
        i_O = names.index("Omega")
        Oa, Ob = sa[i_O], sb[i_O]
    return (Ob - Oa) / (b - a)


def _tail_window(traj: Trajectory, lambda_: float):
    """Last 1/lambda of the run, snapped inward to event times when at
    least two events fall inside."""
    b = traj.t1
    a = max(traj.t0, b - 1.0 / lambda_)
    ev = traj.event_times()
    inside = ev[(ev >= a) & (ev <= b)]
    if inside.size >= 2:
        return float(inside[0]), float(inside[-1])
    return a, b


def event_omega_extrema(traj: Trajectory, coupling: float):
    """Simulated omega just before / just after each recorded event.

    Returns (times, omega_minus, omega_plus, used) where `used` marks events
    whose post-jump apex fits inside the run.  The pre value is the minimum
    of omega on a window reaching back toward the previous event; the post
    value is the maximum on a window reaching toward the next one.  Both
    windows end well clear of the neighbouring events, and are never
    shorter than 10/coupling on the post side.
    """
    ev = traj.event_times()
    if ev.size == 0:
        raise DomainError("trajectory has no events")
    omega, _ = _omega_Omega_columns(traj)
    ts = traj.times
    bounds = np.concatenate([[traj.t0], ev, [traj.t1]])
    gaps_prev = ev - bounds[:-2]
    gaps_next = bounds[2:] - ev
    med_gap = float(np.median(np.diff(bounds)))
    minus = np.empty(ev.size)
    plus = np.empty(ev.size)
    used = np.ones(ev.size, dtype=bool)
    for i, te in enumerate(ev):
        lo = int(np.searchsorted(ts, te - 0.35 * gaps_prev[i]))
        mid = int(np.searchsorted(ts, te, side="right"))  # first sample past te
        hi = int(np.searchsorted(ts, te + max(0.6 * gaps_next[i], 10.0 / coupling)))
        lo = min(lo, ts.size - 1)
        mid = max(mid, lo + 1)
        hi = max(min(hi, ts.size), mid)
        minus[i] = omega[lo:mid].min()
        plus[i] = omega[mid - 1:hi].max()
        if traj.t1 - te < 0.1 * med_gap:
            used[i] = False
    return ev, minus, plus, used


# -- convergence --------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    omega_final: float       # tail mean of lambda*omega
    fitted_rate: float       # decay rate of the transient envelope, 1/s
    fit_r2: float
    ripple_amplitude: float  # (max - min)/2 of lambda*omega over the tail


def fit_convergence(traj: Trajectory, lambda_: float) -> ConvergenceReport:
    """Detect and quantify exponential settling of the frequency read-out.

    The tail mean comes from the exact phase identity over the last
    1/lambda (event-snapped); the rate comes from a log-linear fit of the
    post-jump envelope against its own tail limit, restricted to the part
    of the transient at least 5% of its initial size.  With fewer than six
    events the envelope falls back to the dense samples.
    """
    span = traj.t1 - traj.t0
    if span < 5.0 / lambda_:
        raise DomainError(f"fit_convergence: need >= {5.0 / lambda_:g} s of data, got {span:g}")
    omega, _ = _omega_Omega_columns(traj)
    a, b = _tail_window(traj, lambda_)
    omega_final = mean_lambda_omega(traj, lambda_, a, b)

    tail = (traj.times >= a) & (traj.times <= b)
    lam_om_tail = lambda_ * omega[tail]
    ripple = 0.5 * float(lam_om_tail.max() - lam_om_tail.min()) if lam_om_tail.size else 0.0

    ev = traj.event_times()
    if ev.size >= 6:
        t_env, _, w_plus, used = event_omega_extrema(
            traj, coupling=float(traj.system.pars[1]) if traj.system.pars.size > 1 else 1e6)
        t_env, w_env = t_env[used], lambda_ * w_plus[used]
    else:
        t_env, w_env = traj.times, lambda_ * omega

    n_lim = max(3, t_env.size // 10)
    limit = float(np.mean(w_env[-n_lim:]))
    resid = w_env - limit
    r0 = abs(resid[0])
    if r0 <= 0:
        return ConvergenceReport(True, omega_final, math.nan, 1.0, ripple)
    keep = np.abs(resid) >= 0.05 * r0
    # contiguous prefix of the transient only
    cut = int(np.argmin(keep)) if not keep.all() else keep.size
    t_fit, r_fit = t_env[:cut], np.abs(resid[:cut])
    if t_fit.size < 3:
        return ConvergenceReport(False, omega_final, math.nan, 0.0, ripple)
    A = np.column_stack([t_fit, np.ones_like(t_fit)])
    sol, *_ = np.linalg.lstsq(A, np.log(r_fit), rcond=None)
    pred = A @ sol
    ss_res = float(np.sum((np.log(r_fit) - pred) ** 2))
    ss_tot = float(np.sum((np.log(r_fit) - np.log(r_fit).mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    rate = -float(sol[0])
    converged = bool(r2 > 0.95 and ripple < 2.0 * lambda_ * math.pi)
    return ConvergenceReport(converged, float(omega_final), rate, r2, ripple)


# -- synchronization region sweep ---------------------------------------

_LOCK_RATIOS = sorted({Fraction(p, q) for q in range(1, 5) for p in range(1, 13)})


def _fundamental_frequency(spec: SignalSpec) -> float:
    freqs = [t.freq for t in spec.terms if isinstance(t, Cosine)]
    if not freqs:
        raise DomainError("sync sweep needs a cosine-sum input")
    g = freqs[0]
    for f in freqs[1:]:
        a, b = g, f
        while abs(b) > 1e-9 * g:
            a, b = b, math.fmod(a, b)
        g = abs(a)
    if g < 1e-3 * min(freqs):  # incommensurate terms have no usable period
        raise DomainError("sync sweep needs commensurate cosine frequencies")
    return g


@dataclass(frozen=True)
class SyncRegionResult:
    K_grid: np.ndarray
    omega0_grid: np.ndarray
    locked: np.ndarray        # [i_K, j_omega0] phase-locking of the fixed oscillator
    exponential: np.ndarray   # [i_K, j_omega0] exponential adaptive convergence
    rotation: np.ndarray
    fitted_rate: np.ndarray
    omega_final: np.ndarray
    parameters: dict

    def to_json_dict(self):
        return {
            "grid": {"K": self.K_grid.tolist(), "omega0": self.omega0_grid.tolist()},
            "flags": {"locked": self.locked.tolist(),
                      "exponential": self.exponential.tolist()},
            "rotation": self.rotation.tolist(),
            "fitted_rate": self.fitted_rate.tolist(),
            "omega_final": self.omega_final.tolist(),
            "parameters": self.parameters,
        }

    def to_csv(self, path_or_file):
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "w")
            close = True
        try:
            f.write("K,omega0,locked,exponential,rotation,fitted_rate,omega_final\n")
            for i, K in enumerate(self.K_grid):
                for j, w0 in enumerate(self.omega0_grid):
                    f.write(f"{K:.17g},{w0:.17g},{int(self.locked[i, j])},"
                            f"{int(self.exponential[i, j])},{self.rotation[i, j]:.17g},"
                            f"{self.fitted_rate[i, j]:.17g},{self.omega_final[i, j]:.17g}\n")
        finally:
            if close:
                f.close()


def sync_region_sweep(signal: SignalSpec, K_grid, omega0_grid, lambda_: float,
                      horizon: float | None = None, threads: int | None = None,
                      opts: IntegratorOptions | None = None) -> SyncRegionResult:
    """Classify each (K, omega0) cell two ways: phase locking of the
    non-adaptive oscillator (rotation number within 1% of a p/q multiple of
    the input fundamental, q <= 4, p <= 12) and exponential convergence of
    the adaptive oscillator (settled fit with rate within [lambda/2,
    2 lambda]).  Cells run independently; results merge in grid order.
    """
    K_grid = np.asarray(K_grid, dtype=float)
    omega0_grid = np.asarray(omega0_grid, dtype=float)
    if K_grid.size == 0 or omega0_grid.size == 0:
        raise DomainError("sync_region_sweep: empty grid")
    omega_fund = _fundamental_frequency(signal)
    if horizon is None:
        horizon = max(10.0 / lambda_, 80.0 * math.pi / omega_fund)
    bound = signal.frequency_bound(0.0, horizon)
    if opts is None:
        opts = IntegratorOptions(rel_tol=1e-8, abs_tol=1e-10,
                                 max_step=math.pi / (50.0 * bound),
                                 output_step=min(1e-2, horizon / 2048.0))

    ratios = np.array([float(r) for r in _LOCK_RATIOS])

    def run_cell(args):
        K, w0 = args
        ps = phase_system(lambda_ * w0, K, signal)
        tr = integrate(ps, np.array([0.0]), 0.0, horizon, opts)
        phi = tr.states[:, 0]
        half = np.searchsorted(tr.times, 0.5 * (tr.t0 + tr.t1))
        rho = (phi[-1] - phi[half]) / (tr.times[-1] - tr.times[half])
        rel = np.abs(rho - ratios * omega_fund) / (ratios * omega_fund)
        locked = bool(np.min(rel) <= 0.01)

        afo = afo_system(AfoParams(lambda_, K), signal)
        tr2 = integrate(afo, np.array([0.0, w0]), 0.0, horizon, opts,
                        event_signals=[("input", signal)])
        rep = fit_convergence(tr2, lambda_)
        expo = bool(rep.converged and math.isfinite(rep.fitted_rate)
                    and 0.5 * lambda_ <= rep.fitted_rate <= 2.0 * lambda_)
        return locked, expo, float(rho), rep.fitted_rate, rep.omega_final

    cells = [(float(K), float(w0)) for K in K_grid for w0 in omega0_grid]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run_cell, cells))

    shape = (K_grid.size, omega0_grid.size)
    locked = np.array([r[0] for r in results]).reshape(shape)
    expo = np.array([r[1] for r in results]).reshape(shape)
    rho = np.array([r[2] for r in results]).reshape(shape)
    rate = np.array([r[3] for r in results]).reshape(shape)
    wfin = np.array([r[4] for r in results]).reshape(shape)
    params = {"lambda": lambda_, "horizon": horizon, "omega_fund": omega_fund}
    return SyncRegionResult(K_grid, omega0_grid, locked, expo, rho, rate, wfin, params)


# -- frequency response --------------------------------------------------

@dataclass(frozen=True)
class FreqResponsePoint:
    mod_freq: float       # modulation pulsation omega_C, rad/s
    magnitude_db: float   # response of lambda*omega to unit frequency modulation
    phase: float          # rad, relative to the cos(omega_C t) modulation


def frequency_response(lambda_: float, omega_F: float, omega_C_list, K: float,
                       settle_factor: float = 7.0,
                       opts: IntegratorOptions | None = None) -> list[FreqResponsePoint]:
    """Drive the oscillator with a frequency-modulated input (instantaneous
    pulsation omega_F + cos(omega_C t)) and demodulate lambda*omega at each
    omega_C by single-frequency least squares over an integer number of
    modulation periods, after discarding the settling transient.

    The fitted samples are the exact per-gap means of lambda*omega between
    consecutive input crossings (from the phase identity), evaluated at the
    gap midpoints.  Uniform resampling of the raw read-out would alias the
    frequency-modulated sawtooth harmonics straight into the demodulation
    band; the gap means carry no ripple at all.
    """
    points = []
    for omega_C in omega_C_list:
        omega_C = float(omega_C)
        if omega_C > omega_F / 10.0:
            raise DomainError(
                f"frequency_response: omega_C={omega_C:g} violates "
                f"omega_C <= omega_F/10 = {omega_F / 10.0:g}")
        period = 2.0 * math.pi / omega_C
        n_p = max(4, int(math.ceil((3.0 / lambda_) / period)))
        t_settle = settle_factor / lambda_
        t1 = t_settle + n_p * period
        sig = SignalSpec([FmSine(carrier=omega_F, mod_freq=omega_C)])
        if opts is None:
            run_opts = IntegratorOptions(
                rel_tol=1e-8, abs_tol=1e-10,
                max_step=math.pi / (50.0 * (omega_F + 1.0 + omega_C)),
                output_step=min(0.3 / lambda_, period / 64.0))
        else:
            run_opts = opts
        traj = integrate(afo_system(AfoParams(lambda_, K), sig),
                         np.array([0.0, omega_F / lambda_]), 0.0, t1, run_opts,
                         event_signals=[("input", sig)])
        t_start = t1 - n_p * period
        if t_start < t_settle - 1e-9 or n_p < 2:
            raise DomainError("frequency_response: fewer than 2 settled modulation periods")
        names = traj.names
        i_phi, i_om = names.index("phi"), names.index("omega")
        ev_t = np.array([e.time for e in traj.events])
        ev_Omega = np.array([e.state_after[i_phi] - e.state_after[i_om]
                             for e in traj.events])
        sel = ev_t >= t_start
        ev_t, ev_Omega = ev_t[sel], ev_Omega[sel]
        if ev_t.size < 8:
            raise DomainError("frequency_response: too few crossings in the window")
        mids = 0.5 * (ev_t[1:] + ev_t[:-1])
        gap_means = np.diff(ev_Omega) / np.diff(ev_t)
        A = np.column_stack([np.cos(omega_C * mids), np.sin(omega_C * mids),
                             np.ones_like(mids)])
        (a, b, _), *_ = np.linalg.lstsq(A, gap_means, rcond=None)
        mag = math.hypot(a, b)
        points.append(FreqResponsePoint(omega_C, 20.0 * math.log10(mag),
                                        math.atan2(-b, a)))
    return points


def freq_response_to_csv(points, path_or_file):
    close = False
    f = path_or_file
    if not hasattr(f, "write"):
        f = open(f, "w")
        close = True
    try:
        f.write("omega_C,magnitude_db,phase\n")
        for p in points:
            f.write(f"{p.mod_freq:.17g},{p.magnitude_db:.17g},{p.phase:.17g}\n")
    finally:
        if close:
            f.close()


# -- map vs. simulation ---------------------------------------------------

@dataclass(frozen=True)
class MapComparison:
    event_times: np.ndarray
    errors_minus: np.ndarray
    errors_plus: np.ndarray
    sim_minus: np.ndarray
    sim_plus: np.ndarray

    @property
    def n_events(self):
        return self.event_times.size

    @property
    def max_error(self):
        return float(max(self.errors_minus.max(initial=0.0),
                         self.errors_plus.max(initial=0.0)))

    @property
    def mean_error(self):
        both = np.concatenate([self.errors_minus, self.errors_plus])
        return float(both.mean()) if both.size else 0.0

    def to_csv(self, path_or_file):
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "w")
            close = True
        try:
            f.write("t_event,sim_minus,sim_plus,error_minus,error_plus\n")
            for i in range(self.n_events):
                f.write(f"{self.event_times[i]:.17g},{self.sim_minus[i]:.17g},"
                        f"{self.sim_plus[i]:.17g},{self.errors_minus[i]:.17g},"
                        f"{self.errors_plus[i]:.17g}\n")
        finally:
            if close:
                f.close()


def compare_maps(traj: Trajectory, pred: MapPrediction, K: float) -> MapComparison:
    """Per-event absolute error between simulated omega around each fast
    jump and the discrete-map prediction.  Trailing events whose jump apex
    does not fit inside the run are excluded from both sides."""
    ev = traj.event_times()
    if ev.size != len(pred):
        raise AlignmentError(
            f"event count mismatch: trajectory has {ev.size}, prediction {len(pred)}")
    if ev.size == 0:
        raise AlignmentError("no events to compare")
    span = traj.t1 - traj.t0
    if np.max(np.abs(ev - pred.event_times)) > 1e-6 * span:
        raise AlignmentError("event times disagree between trajectory and prediction")
    times, sim_minus, sim_plus, used = event_omega_extrema(traj, K)
    return MapComparison(
        event_times=times[used],
        errors_minus=np.abs(sim_minus - pred.omega_minus)[used],
        errors_plus=np.abs(sim_plus - pred.omega_plus)[used],
        sim_minus=sim_minus[used],
        sim_plus=sim_plus[used],
    )


# -- pool spectrogram ------------------------------------------------------

@dataclass(frozen=True)
class SpectroFrame:
    time: float
    bin_centers: np.ndarray
    bin_amplitudes: np.ndarray


def spectrogram(pool_traj: Trajectory, bin_width: float, frame_times) -> list[SpectroFrame]:
    """Amplitude-weighted frequency distribution of a pool run.

    At each frame time every oscillator is assigned to the bin containing
    its frequency read-out lambda*omega_i; a bin's amplitude is the peak
    over one period (256 samples) of the summed cosine of its members,
    which scores coherent members by their combined amplitude and lets
    opposite phases cancel.
    """
    if not bin_width > 0:
        raise DomainError("spectrogram: bin_width must be > 0")
    names = pool_traj.names
    n = sum(1 for nm in names if nm.startswith("phi_"))
    if n == 0:
        raise DomainError("spectrogram: not a pool trajectory")
    lam = float(pool_traj.system.pars[0])
    frames = []
    tbar = np.arange(256) / 256.0
    for ft in np.asarray(frame_times, dtype=float):
        state = pool_traj.dense_eval(ft)
        phi = state[:n]
        lam_om = lam * state[n:2 * n]
        alpha = state[2 * n:3 * n]
        bins = np.floor(lam_om / bin_width).astype(np.int64)
        centers = []
        amps = []
        for b in np.unique(bins):
            members = bins == b
            psi = (b + 0.5) * bin_width
            # sample one full period of the summed cosine; psi*t_bar spans 2*pi
            phases = np.add.outer(2.0 * math.pi * tbar, phi[members])
            wave = np.cos(phases) @ alpha[members]
            centers.append(psi)
            amps.append(float(wave.max()))
        frames.append(SpectroFrame(float(ft), np.asarray(centers), np.asarray(amps)))
    return frames


def spectrogram_to_csv(frames, path_or_file):
    close = False
    f = path_or_file
    if not hasattr(f, "write"):
        f = open(f, "w")
        close = True
    try:
        f.write("time,bin_center,amplitude\n")
        for fr in frames:
            for c, a in zip(fr.bin_centers, fr.bin_amplitudes):
                f.write(f"{fr.time:.17g},{c:.17g},{a:.17g}\n")
    finally:
        if close:
            f.close()
