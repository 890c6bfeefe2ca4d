"""Adaptive embedded Runge-Kutta 5(4) integration with dense output and
event detection.

The stepping loop lives in `_core` (compiled); this module owns options,
validation, the `Trajectory` container and its serialization.  Event
functions are time signals (`SignalSpec`): every physical event in this
package is a sign change of an input signal, and localizing those needs no
state feedback.  A strict sign change is bisected to `event_time_tol`;
tangential touches are not events.

The solver is explicit on purpose: the fast transitions of the strongly
coupled systems are brief boundary layers, and the controller walks through
them with small steps rather than requiring an implicit method.  Step-size
underflow (below 1e-14 of the horizon) raises `StiffnessError` with the
failure time, state and last error estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _core
from .errors import DomainError, StiffnessError
from .models import System
from .signals import Packed, SignalSpec

__all__ = ["IntegratorOptions", "EventRecord", "Trajectory", "integrate"]

TRAJ_MAGIC = b"AFOTRAJ1"


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = math.inf
    initial_step: float = 0.0  # 0 -> automatic
    event_time_tol: float = 1e-9
    output_step: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0 and 0.0 < self.abs_tol < 1.0):
            raise DomainError("IntegratorOptions: tolerances must be in (0, 1)")
        if not self.max_step > 0:
            raise DomainError("IntegratorOptions: max_step must be > 0")
        if self.initial_step < 0:
            raise DomainError("IntegratorOptions: initial_step must be >= 0")
        if not (self.event_time_tol > 0 and self.output_step > 0):
            raise DomainError("IntegratorOptions: event_time_tol and output_step must be > 0")


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str
    state_before: np.ndarray
    state_after: np.ndarray


class Trajectory:
    """Dense time series of one integration plus its tagged events.

    `times` is the fixed output grid (strictly increasing), `states` one row
    per time, `slopes` the ODE right-hand side at each row (used for cubic
    Hermite interpolation between rows).  Immutable by convention once
    returned.
    """

    def __init__(self, times, states, slopes, events, system: System,
                 stats: dict):
        self.times = times
        self.states = states
        self.slopes = slopes
        self.events = events
        self.system = system
        self.stats = stats

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])

    @property
    def names(self):
        return self.system.names

    def column(self, name: str) -> np.ndarray:
        try:
            return self.states[:, self.system.names.index(name)]
        except ValueError:
            raise DomainError(f"trajectory has no state named {name!r}") from None

    def event_times(self, kind: str | None = None) -> np.ndarray:
        return np.array([e.time for e in self.events
                         if kind is None or e.kind == kind])

    def dense_eval(self, t) -> np.ndarray:
        """Interpolated state at time t (cubic Hermite between grid rows)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        span = (self.t0 - 1e-12 * (self.t1 - self.t0), self.t1 + 1e-12 * (self.t1 - self.t0))
        if t_arr.min() < span[0] or t_arr.max() > span[1]:
            raise DomainError(f"dense_eval: t outside [{self.t0}, {self.t1}]")
        out = np.empty((t_arr.size, self.states.shape[1]))
        for i, ti in enumerate(t_arr):
            out[i] = _core.hermite_eval(self.times, self.states, self.slopes, ti)
        return out[0] if np.ndim(t) == 0 else out

    # -- serialization --

    def to_csv(self, path_or_file):
        """Header row `t,<state names>`; floats at 17 significant digits."""
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "w")
            close = True
        try:
            f.write("t," + ",".join(self.names) + "\n")
            for i in range(self.times.size):
                row = [f"{self.times[i]:.17g}"] + [f"{v:.17g}" for v in self.states[i]]
                f.write(",".join(row) + "\n")
        finally:
            if close:
                f.close()

    def events_to_csv(self, path_or_file):
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "w")
            close = True
        try:
            f.write("t,kind," + ",".join(f"before_{n}" for n in self.names)
                    + "," + ",".join(f"after_{n}" for n in self.names) + "\n")
            for e in self.events:
                vals = [f"{v:.17g}" for v in e.state_before] + [f"{v:.17g}" for v in e.state_after]
                f.write(f"{e.time:.17g},{e.kind}," + ",".join(vals) + "\n")
        finally:
            if close:
                f.close()

    def to_binary(self, path_or_file):
        """Compact regression dump: magic "AFOTRAJ1", an int64 length-prefixed
        JSON header, then little-endian float64 blocks (times, states, slopes,
        event times, event pre/post states)."""
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "wb")
            close = True
        try:
            header = json.dumps({
                "names": list(self.names),
                "n": int(self.times.size),
                "dim": int(self.states.shape[1]),
                "event_kinds": [e.kind for e in self.events],
            }).encode()
            f.write(TRAJ_MAGIC)
            f.write(np.int64(len(header)).tobytes())
            f.write(header)
            for arr in (self.times, self.states, self.slopes):
                f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            ev_t = np.array([e.time for e in self.events])
            ev_pre = np.array([e.state_before for e in self.events]).reshape(len(self.events), -1)
            ev_post = np.array([e.state_after for e in self.events]).reshape(len(self.events), -1)
            for arr in (ev_t, ev_pre, ev_post):
                f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        finally:
            if close:
                f.close()

    @classmethod
    def from_binary(cls, path_or_file, system: System | None = None):
        close = False
        f = path_or_file
        if not hasattr(f, "read"):
            f = open(f, "rb")
            close = True
        try:
            if f.read(8) != TRAJ_MAGIC:
                raise DomainError("not a trajectory dump (bad magic)")
            hlen = int(np.frombuffer(f.read(8), dtype=np.int64)[0])
            header = json.loads(f.read(hlen).decode())
            n, dim = header["n"], header["dim"]
            times = np.frombuffer(f.read(8 * n), dtype="<f8").copy()
            states = np.frombuffer(f.read(8 * n * dim), dtype="<f8").reshape(n, dim).copy()
            slopes = np.frombuffer(f.read(8 * n * dim), dtype="<f8").reshape(n, dim).copy()
            n_ev = len(header["event_kinds"])
            ev_t = np.frombuffer(f.read(8 * n_ev), dtype="<f8")
            ev_pre = np.frombuffer(f.read(8 * n_ev * dim), dtype="<f8").reshape(n_ev, dim)
            ev_post = np.frombuffer(f.read(8 * n_ev * dim), dtype="<f8").reshape(n_ev, dim)
            events = [EventRecord(float(ev_t[i]), header["event_kinds"][i],
                                  ev_pre[i].copy(), ev_post[i].copy())
                      for i in range(n_ev)]
            if system is None:
                system = System(0, dim, np.zeros(1), None, tuple(header["names"]))
            return cls(times, states, slopes, events, system, {})
        finally:
            if close:
                f.close()


def integrate(system: System, y0, t0: float, t1: float,
              opts: IntegratorOptions | None = None,
              event_signals: Sequence[tuple[str, SignalSpec]] = ()) -> Trajectory:
    """Integrate `system` from t0 to t1.

    event_signals is a list of (label, SignalSpec); every strict sign change
    of such a signal is localized to opts.event_time_tol and recorded with
    the interpolated states one tolerance before and after the crossing.
    Identical inputs produce bitwise-identical trajectories.
    """
    if opts is None:
        opts = IntegratorOptions()
    if not t1 > t0:
        raise DomainError("integrate: need t1 > t0")
    y0 = np.ascontiguousarray(y0, dtype=float)
    if y0.size != system.dim:
        raise DomainError(f"integrate: y0 has size {y0.size}, system needs {system.dim}")
    if not np.all(np.isfinite(y0)):
        raise DomainError("integrate: y0 must be finite")

    sig = system.signal.packed() if system.signal is not None else Packed.empty()
    if system.signal is not None and system.kind != _core.SYS_TRANSFORMED:
        system.signal._check_span(t0, t1)

    labels = [label for label, _ in event_signals]
    if event_signals:
        ev_kinds = []
        ev_params = []
        ev_off = [0]
        for _, espec in event_signals:
            p = espec.packed()
            if p.tknots.size and len(espec.traces) > 0:
                # traces in event signals share the drive-signal arrays only
                # when it's literally the same spec; simplest correct rule:
                if system.signal is not espec:
                    raise DomainError(
                        "trace-backed event signals must be the drive signal itself")
            ev_kinds.append(p.kinds)
            ev_params.append(p.params)
            ev_off.append(ev_off[-1] + p.kinds.size)
        ev = Packed(np.concatenate(ev_kinds), np.concatenate(ev_params),
                    sig.tknots, sig.tcoefs, sig.tkoff, sig.tcoff)
        ev_off = np.asarray(ev_off, dtype=np.int64)
    else:
        ev = Packed.empty()
        ev_off = np.array([0], dtype=np.int64)

    max_step = min(opts.max_step, t1 - t0)
    res = _core.rk45_run(
        system.kind, system.pars, y0, float(t0), float(t1),
        opts.rel_tol, opts.abs_tol, max_step, opts.initial_step,
        opts.event_time_tol, opts.output_step,
        *sig.as_args(), ev_off, *ev.as_args())
    (status, ts, ys, fs, ev_t, ev_idx, ev_pre, ev_post,
     n_steps, n_rejected, fail_t, fail_err, y_last) = res

    if status == _core.STATUS_STIFF:
        raise StiffnessError(fail_t, y_last.copy(), fail_err)

    order = np.lexsort((ev_idx, ev_t))  # simultaneous events in label order
    events = [EventRecord(float(ev_t[i]), labels[int(ev_idx[i])],
                          ev_pre[i].copy(), ev_post[i].copy())
              for i in order]
    stats = {"n_steps": int(n_steps), "n_rejected": int(n_rejected),
             "rel_tol": opts.rel_tol, "abs_tol": opts.abs_tol}
    return Trajectory(ts, ys, fs, events, system, stats)
