"""Declarative input signals: sums of analytic terms plus sampled traces.

A `SignalSpec` is an immutable sum of terms (cosines, chirps, FM bursts,
cubic-spline traces, constants).  It evaluates exactly and deterministically,
knows its own instantaneous-frequency bound, and can locate its sign changes
to a requested time tolerance.  Specs serialize to/from the JSON document
used by the experiment configs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import _core
from .errors import ConfigurationError, DomainError

__all__ = [
    "Cosine", "LinearChirp", "QuadraticChirp", "FmGaussian", "FmSine",
    "SampledTrace", "Constant", "SignalSpec", "CrossingList",
    "zero_crossings", "remove_mean", "lorenz_trace",
]

DEFAULT_TIME_TOL = 1e-9


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"{name}: non-finite parameter {v!r}")


@dataclass(frozen=True)
class Cosine:
    """amplitude * cos(freq * t + phase)"""
    amplitude: float
    freq: float
    phase: float = 0.0

    def __post_init__(self):
        _require_finite("Cosine", self.amplitude, self.freq, self.phase)
        if self.amplitude < 0:
            raise DomainError("Cosine: amplitude must be >= 0")
        if self.freq <= 0:
            raise DomainError("Cosine: freq must be > 0")

    def value(self, t):
        return self.amplitude * np.cos(self.freq * t + self.phase)

    def slope(self, t):
        return -self.amplitude * self.freq * np.sin(self.freq * t + self.phase)

    def freq_bound(self, t0, t1):
        return self.freq

    def pack(self):
        return _core.TERM_COSINE, (self.amplitude, self.freq, self.phase, 0.0)


@dataclass(frozen=True)
class LinearChirp:
    """amplitude * sin(base_freq * t + rate * t^2); frequency sweeps linearly."""
    amplitude: float
    base_freq: float
    rate: float

    def __post_init__(self):
        _require_finite("LinearChirp", self.amplitude, self.base_freq, self.rate)
        if self.amplitude < 0:
            raise DomainError("LinearChirp: amplitude must be >= 0")
        if self.base_freq <= 0:
            raise DomainError("LinearChirp: base_freq must be > 0")

    def value(self, t):
        return self.amplitude * np.sin((self.base_freq + self.rate * t) * t)

    def slope(self, t):
        arg = (self.base_freq + self.rate * t) * t
        return self.amplitude * np.cos(arg) * (self.base_freq + 2.0 * self.rate * t)

    def freq_bound(self, t0, t1):
        return max(abs(self.base_freq + 2.0 * self.rate * t0),
                   abs(self.base_freq + 2.0 * self.rate * t1))

    def pack(self):
        return _core.TERM_LINCHIRP, (self.amplitude, self.base_freq, self.rate, 0.0)


@dataclass(frozen=True)
class QuadraticChirp:
    """amplitude * sin(base_freq * t + cubic_coeff * t^3)."""
    amplitude: float
    base_freq: float
    cubic_coeff: float

    def __post_init__(self):
        _require_finite("QuadraticChirp", self.amplitude, self.base_freq, self.cubic_coeff)
        if self.amplitude < 0:
            raise DomainError("QuadraticChirp: amplitude must be >= 0")
        if self.base_freq <= 0:
            raise DomainError("QuadraticChirp: base_freq must be > 0")

    def value(self, t):
        return self.amplitude * np.sin(self.base_freq * t + self.cubic_coeff * t ** 3)

    def slope(self, t):
        arg = self.base_freq * t + self.cubic_coeff * t ** 3
        return self.amplitude * np.cos(arg) * (self.base_freq + 3.0 * self.cubic_coeff * t * t)

    def freq_bound(self, t0, t1):
        return max(abs(self.base_freq + 3.0 * self.cubic_coeff * t0 * t0),
                   abs(self.base_freq + 3.0 * self.cubic_coeff * t1 * t1),
                   abs(self.base_freq))

    def pack(self):
        return _core.TERM_QUADCHIRP, (self.amplitude, self.base_freq, self.cubic_coeff, 0.0)


@dataclass(frozen=True)
class FmGaussian:
    """amplitude * sin(carrier * t) * exp(-(t - center)^2 / width_sq)."""
    amplitude: float
    carrier: float
    center: float
    width_sq: float

    def __post_init__(self):
        _require_finite("FmGaussian", self.amplitude, self.carrier, self.center, self.width_sq)
        if self.amplitude < 0:
            raise DomainError("FmGaussian: amplitude must be >= 0")
        if self.carrier <= 0:
            raise DomainError("FmGaussian: carrier must be > 0")
        if self.width_sq <= 0:
            raise DomainError("FmGaussian: width_sq must be > 0")

    def value(self, t):
        u = t - self.center
        return self.amplitude * np.sin(self.carrier * t) * np.exp(-u * u / self.width_sq)

    def slope(self, t):
        u = t - self.center
        g = np.exp(-u * u / self.width_sq)
        return self.amplitude * g * (self.carrier * np.cos(self.carrier * t)
                                     - np.sin(self.carrier * t) * 2.0 * u / self.width_sq)

    def freq_bound(self, t0, t1):
        return self.carrier + 4.0 / math.sqrt(self.width_sq)

    def pack(self):
        return _core.TERM_FMGAUSS, (self.amplitude, self.carrier, self.center, self.width_sq)


@dataclass(frozen=True)
class FmSine:
    """sin(carrier * t + sin(mod_freq * t) / mod_freq).

    Instantaneous frequency is carrier + cos(mod_freq * t): a unit-depth
    frequency modulation around the carrier.
    """
    carrier: float
    mod_freq: float

    def __post_init__(self):
        _require_finite("FmSine", self.carrier, self.mod_freq)
        if self.carrier <= 0 or self.mod_freq <= 0:
            raise DomainError("FmSine: carrier and mod_freq must be > 0")

    def value(self, t):
        return np.sin(self.carrier * t + np.sin(self.mod_freq * t) / self.mod_freq)

    def slope(self, t):
        arg = self.carrier * t + np.sin(self.mod_freq * t) / self.mod_freq
        return np.cos(arg) * (self.carrier + np.cos(self.mod_freq * t))

    def freq_bound(self, t0, t1):
        return self.carrier + 1.0 + self.mod_freq

    def pack(self):
        return _core.TERM_FMSINE, (1.0, self.carrier, self.mod_freq, 0.0)


class SampledTrace:
    """Cubic-spline interpolation of a sampled time series.

    Evaluation outside the sampled span is a domain error at the Python
    level; the compiled kernels clamp to the span edges, which callers must
    have validated beforehand.
    """

    def __init__(self, times, values):
        times = np.ascontiguousarray(times, dtype=float)
        values = np.ascontiguousarray(values, dtype=float)
        if times.ndim != 1 or times.size < 4 or times.shape != values.shape:
            raise DomainError("SampledTrace: need matching 1-d arrays with >= 4 samples")
        if not np.all(np.diff(times) > 0):
            raise DomainError("SampledTrace: times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise DomainError("SampledTrace: samples must be finite")
        self.times = times
        self.values = values
        self._spline = CubicSpline(times, values)
        self._fbound = None

    def __eq__(self, other):
        return (isinstance(other, SampledTrace)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return (f"SampledTrace(n={self.times.size}, "
                f"span=[{self.times[0]:g}, {self.times[-1]:g}])")

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def _check_span(self, t):
        lo, hi = self.span
        tt = np.asarray(t, dtype=float)
        if np.any(tt < lo - 1e-12) or np.any(tt > hi + 1e-12):
            raise DomainError(f"SampledTrace evaluated at t outside span [{lo}, {hi}]")

    def value(self, t):
        self._check_span(t)
        return self._spline(np.clip(t, *self.span))

    def slope(self, t):
        self._check_span(t)
        return self._spline(np.clip(t, *self.span), 1)

    def freq_bound(self, t0, t1):
        # spectral bound: pulsation below which 99.9% of the energy of the
        # centered trace lives, with a floor of one cycle per span
        if self._fbound is None:
            v = self.values - self.values.mean()
            dt = float(np.mean(np.diff(self.times)))
            power = np.abs(np.fft.rfft(v)) ** 2
            freqs = 2.0 * math.pi * np.fft.rfftfreq(v.size, dt)
            cum = np.cumsum(power)
            if cum[-1] <= 0.0:
                self._fbound = 2.0 * math.pi / (self.times[-1] - self.times[0])
            else:
                k = int(np.searchsorted(cum, 0.999 * cum[-1]))
                w = freqs[min(k, freqs.size - 1)]
                self._fbound = max(1.5 * w, 2.0 * math.pi / (self.times[-1] - self.times[0]))
        return self._fbound

    def pack(self):
        # trace index is patched in by SignalSpec packing
        return _core.TERM_TRACE, (0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Constant:
    offset: float

    def __post_init__(self):
        _require_finite("Constant", self.offset)

    def value(self, t):
        return self.offset * np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else self.offset

    def slope(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0

    def freq_bound(self, t0, t1):
        return 0.0

    def pack(self):
        return _core.TERM_CONSTANT, (self.offset, 0.0, 0.0, 0.0)


_TERM_KINDS = {
    "cosine": (Cosine, ("amplitude", "freq", "phase")),
    "linear_chirp": (LinearChirp, ("amplitude", "base_freq", "rate")),
    "quadratic_chirp": (QuadraticChirp, ("amplitude", "base_freq", "cubic_coeff")),
    "fm_gaussian": (FmGaussian, ("amplitude", "carrier", "center", "width_sq")),
    "fm_sine": (FmSine, ("carrier", "mod_freq")),
    "sampled_trace": (SampledTrace, ("times", "values")),
    "constant": (Constant, ("offset",)),
}
_KIND_NAMES = {cls: name for name, (cls, _) in _TERM_KINDS.items()}

_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_P = np.empty((0, 4))
_EMPTY_F = np.empty(0)
_EMPTY_C = np.empty((4, 0))
_OFF0 = np.array([0], dtype=np.int64)


class Packed:
    """Flat-array form of a SignalSpec, consumed by the compiled kernels."""

    __slots__ = ("kinds", "params", "tknots", "tcoefs", "tkoff", "tcoff")

    def __init__(self, kinds, params, tknots, tcoefs, tkoff, tcoff):
        self.kinds = kinds
        self.params = params
        self.tknots = tknots
        self.tcoefs = tcoefs
        self.tkoff = tkoff
        self.tcoff = tcoff

    @classmethod
    def empty(cls):
        return cls(_EMPTY_I64, _EMPTY_P, _EMPTY_F, _EMPTY_C, _OFF0, _OFF0)

    def as_args(self):
        return (self.kinds, self.params, self.tknots, self.tcoefs, self.tkoff, self.tcoff)


class SignalSpec:
    """Sum of signal terms; immutable and safe to share across threads."""

    def __init__(self, terms: Iterable):
        terms = tuple(terms)
        if not terms:
            raise DomainError("SignalSpec needs at least one term")
        for term in terms:
            if not hasattr(term, "pack"):
                raise DomainError(f"not a signal term: {term!r}")
        self.terms = terms
        self._packed = None

    def __repr__(self):
        return f"SignalSpec({list(self.terms)!r})"

    def __eq__(self, other):
        return isinstance(other, SignalSpec) and self.terms == other.terms

    def __add__(self, other):
        if isinstance(other, SignalSpec):
            return SignalSpec(self.terms + other.terms)
        return SignalSpec(self.terms + (other,))

    @property
    def traces(self):
        return [t for t in self.terms if isinstance(t, SampledTrace)]

    def span(self):
        """Intersection of trace spans, or None when unconstrained."""
        traces = self.traces
        if not traces:
            return None
        lo = max(tr.span[0] for tr in traces)
        hi = min(tr.span[1] for tr in traces)
        return lo, hi

    def packed(self) -> Packed:
        if self._packed is None:
            kinds = np.empty(len(self.terms), dtype=np.int64)
            params = np.empty((len(self.terms), 4))
            traces = []
            for i, term in enumerate(self.terms):
                code, p = term.pack()
                kinds[i] = code
                params[i] = p
                if code == _core.TERM_TRACE:
                    params[i, 0] = float(len(traces))
                    traces.append(term)
            if traces:
                tknots = np.concatenate([tr.times for tr in traces])
                tcoefs = np.concatenate([tr._spline.c for tr in traces], axis=1)
                tkoff = np.cumsum([0] + [tr.times.size for tr in traces]).astype(np.int64)
                tcoff = np.cumsum([0] + [tr.times.size - 1 for tr in traces]).astype(np.int64)
            else:
                tknots, tcoefs, tkoff, tcoff = _EMPTY_F, _EMPTY_C, _OFF0, _OFF0
            self._packed = Packed(kinds, np.ascontiguousarray(params),
                                  tknots, np.ascontiguousarray(tcoefs), tkoff, tcoff)
        return self._packed

    def _check_span(self, t0, t1=None):
        span = self.span()
        if span is None:
            return
        t1 = t0 if t1 is None else t1
        if t0 < span[0] - 1e-12 or t1 > span[1] + 1e-12:
            raise DomainError(
                f"evaluation window [{t0}, {t1}] outside trace span {span}")

    def eval(self, t: float) -> float:
        """Signal value at time t (sum over terms)."""
        if not math.isfinite(t):
            raise DomainError("eval: t must be finite")
        self._check_span(t)
        return float(_core.sig_value(t, *self.packed().as_args()))

    def eval_slope(self, t: float) -> float:
        """Time derivative of the signal at t."""
        if not math.isfinite(t):
            raise DomainError("eval_slope: t must be finite")
        self._check_span(t)
        return float(_core.sig_slope(t, *self.packed().as_args()))

    def eval_array(self, ts) -> np.ndarray:
        ts = np.ascontiguousarray(ts, dtype=float)
        if ts.size:
            self._check_span(float(ts.min()), float(ts.max()))
        return _core.sig_values(ts, *self.packed().as_args())

    def frequency_bound(self, t0: float, t1: float) -> float:
        """Largest instantaneous pulsation of any term over [t0, t1]."""
        return max(term.freq_bound(t0, t1) for term in self.terms)

    # -- JSON document (experiment-config contract) --

    def to_json_dict(self) -> dict:
        items = []
        for term in self.terms:
            name = _KIND_NAMES[type(term)]
            _, fields = _TERM_KINDS[name]
            d = {"kind": name}
            for f in fields:
                v = getattr(term, f)
                d[f] = v.tolist() if isinstance(v, np.ndarray) else v
            items.append(d)
        return {"terms": items}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SignalSpec":
        try:
            items = doc["terms"]
        except (TypeError, KeyError):
            raise ConfigurationError("signal document must be {'terms': [...]}") from None
        terms = []
        for item in items:
            item = dict(item)
            kind = item.pop("kind", None)
            if kind not in _TERM_KINDS:
                raise ConfigurationError(f"unknown signal term kind: {kind!r}")
            cls_, fields = _TERM_KINDS[kind]
            unknown = set(item) - set(fields)
            if unknown:
                raise ConfigurationError(f"unknown fields for {kind}: {sorted(unknown)}")
            try:
                terms.append(cls_(**item))
            except (TypeError, DomainError) as exc:
                raise ConfigurationError(f"bad {kind} term: {exc}") from exc
        return cls(terms)

    @classmethod
    def from_json(cls, text: str) -> "SignalSpec":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class CrossingList:
    """Strictly increasing zero-crossing times with crossing directions
    (+1 for a negative-to-positive crossing)."""
    times: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "directions", np.asarray(self.directions, dtype=np.int64))
        if self.times.shape != self.directions.shape:
            raise DomainError("CrossingList: times/directions shape mismatch")
        if self.times.size and not np.all(np.diff(self.times) > 0):
            raise DomainError("CrossingList: times must be strictly increasing")

    def __len__(self):
        return self.times.size


def _default_scan_dt(spec, t0, t1, omega_max_hint):
    bound = omega_max_hint if omega_max_hint else spec.frequency_bound(t0, t1)
    if bound <= 0:
        return (t1 - t0) / 64.0
    return (math.pi / bound) / 20.0


def zero_crossings(spec: SignalSpec, t0: float, t1: float,
                   scan_dt: float | None = None,
                   time_tol: float = DEFAULT_TIME_TOL,
                   omega_max_hint: float | None = None) -> CrossingList:
    """Locate every strict sign change of the signal on [t0, t1].

    The window is scanned at scan_dt and each bracketed sign change is
    bisected to time_tol.  Tangential zeros (touches without a sign change
    at the scan resolution) are excluded; samples that are exactly zero
    inherit the previous sign.
    """
    if not t1 > t0:
        raise DomainError("zero_crossings: need t1 > t0")
    spec._check_span(t0, t1)
    bound = omega_max_hint if omega_max_hint else spec.frequency_bound(t0, t1)
    if scan_dt is None:
        scan_dt = _default_scan_dt(spec, t0, t1, omega_max_hint)
    elif bound > 0 and scan_dt > (math.pi / bound) / 20.0 * (1 + 1e-9):
        raise ConfigurationError(
            f"scan_dt={scan_dt:g} too coarse for frequency bound {bound:g} "
            f"(need <= {(math.pi / bound) / 20.0:g})")

    n = max(int(math.ceil((t1 - t0) / scan_dt)), 8)
    ts = np.linspace(t0, t1, n + 1)
    vals = spec.eval_array(ts)

    signs = np.sign(vals).astype(np.int64)
    for i in range(signs.size):  # exact zeros inherit the previous sign
        if signs[i] == 0:
            signs[i] = signs[i - 1] if i > 0 else 0
    idx = np.nonzero((signs[:-1] != 0) & (signs[1:] != 0) & (signs[:-1] != signs[1:]))[0]

    times = []
    dirs = []
    packed = spec.packed().as_args()
    for i in idx:
        a, b = float(ts[i]), float(ts[i + 1])
        sa = signs[i]
        while b - a > time_tol:
            m = 0.5 * (a + b)
            vm = float(_core.sig_value(m, *packed))
            sm = 1 if vm > 0 else (-1 if vm < 0 else sa)
            if sm == sa:
                a = m
            else:
                b = m
        times.append(0.5 * (a + b))
        dirs.append(int(signs[i + 1]))
    return CrossingList(np.asarray(times), np.asarray(dirs, dtype=np.int64))


def remove_mean(spec: SignalSpec, t0: float, t1: float,
                scan_dt: float | None = None) -> SignalSpec:
    """Return spec plus a constant cancelling its trapezoid-rule mean on
    [t0, t1].  The window should cover at least one period of the signal."""
    if not t1 > t0:
        raise DomainError("remove_mean: need t1 > t0")
    spec._check_span(t0, t1)
    if scan_dt is None:
        scan_dt = _default_scan_dt(spec, t0, t1, None)
    n = max(int(math.ceil((t1 - t0) / scan_dt)), 8)
    ts = np.linspace(t0, t1, n + 1)
    vals = spec.eval_array(ts)
    mean = float(np.trapezoid(vals, ts) / (t1 - t0))
    return spec + Constant(-mean)


def lorenz_trace(t1: float, tol: float = 1e-9,
                 init: Sequence[float] = (-8.0, 8.0, 27.0),
                 discard: float = 10.0,
                 out_dt: float = 1e-3) -> SampledTrace:
    """z-component of a chaotic Lorenz run, sampled densely on [0, t1].

    The first `discard` seconds are integrated and dropped so the returned
    trace starts on the attractor.  Identical arguments give bitwise
    identical traces.
    """
    from .integrator import IntegratorOptions, integrate
    from .models import lorenz_system

    if not t1 > 0:
        raise DomainError("lorenz_trace: need t1 > 0")
    if out_dt > 1e-3:
        raise DomainError("lorenz_trace: output step must be <= 0.001 s")
    y0 = np.asarray(init, dtype=float)
    if y0.shape != (3,) or not np.all(np.isfinite(y0)):
        raise DomainError("lorenz_trace: init must be three finite numbers")
    opts = IntegratorOptions(rel_tol=tol, abs_tol=tol * 1e-2,
                             max_step=1e-2, output_step=out_dt)
    traj = integrate(lorenz_system(), y0, 0.0, discard + t1, opts)
    keep = traj.times >= discard
    times = traj.times[keep] - discard
    return SampledTrace(times, traj.states[keep, 2])
