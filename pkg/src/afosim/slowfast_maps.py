"""Closed-form discrete maps for one slow-fast event and their fixed points.

Between two sign changes of the input, the frequency state decays at rate
lambda on a slow manifold; each sign change then triggers a fast jump of
+pi.  Both envelopes are generated from the single recursion on the
post-jump value,

    omega_plus[n+1]  = omega_plus[n] * exp(-lambda * gap) + pi
    omega_minus[n+1] = omega_plus[n] * exp(-lambda * gap)

which is self-consistent (minus = plus - pi after every event) and
reproduces the closed-form fixed-point pairs for both the even-gap and the
general periodic case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .signals import CrossingList

__all__ = [
    "FixedPoints", "MapPrediction", "step_event", "fixed_points_cosine",
    "fixed_points_periodic", "limit_frequency", "predict_sequence", "envelope",
]


@dataclass(frozen=True)
class FixedPoints:
    """Stationary post-jump / pre-jump values of the event maps and their
    midpoint.  Always satisfies omega_bar_plus - omega_bar_minus = pi."""
    omega_bar_plus: float
    omega_bar_minus: float
    omega_tilde: float

    def __post_init__(self):
        if abs((self.omega_bar_plus - self.omega_bar_minus) - math.pi) > 1e-9 * (
                1.0 + abs(self.omega_bar_plus)):
            raise DomainError("FixedPoints: plus/minus must differ by pi")


@dataclass(frozen=True)
class MapPrediction:
    """Predicted frequency state just before (minus) and just after (plus)
    each fast jump; plus - minus == pi at every event."""
    event_times: np.ndarray
    omega_plus: np.ndarray
    omega_minus: np.ndarray

    def __post_init__(self):
        for name in ("event_times", "omega_plus", "omega_minus"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.event_times.size
        if self.omega_plus.size != n or self.omega_minus.size != n:
            raise DomainError("MapPrediction: array length mismatch")

    def __len__(self):
        return self.event_times.size

    def to_csv(self, path_or_file):
        close = False
        f = path_or_file
        if not hasattr(f, "write"):
            f = open(f, "w")
            close = True
        try:
            f.write("t_event,omega_minus,omega_plus\n")
            for i in range(len(self)):
                f.write(f"{self.event_times[i]:.17g},{self.omega_minus[i]:.17g},"
                        f"{self.omega_plus[i]:.17g}\n")
        finally:
            if close:
                f.close()


def step_event(omega_before_decay: float, dt: float, lambda_: float):
    """One slow-fast event: decay for dt at rate lambda, then jump by +pi.

    Returns (omega_minus, omega_plus): the value at the end of the slow
    phase and the value right after the fast jump.
    """
    if not dt > 0:
        raise DomainError("step_event: dt must be > 0")
    omega_minus = omega_before_decay * math.exp(-lambda_ * dt)
    return omega_minus, omega_minus + math.pi


def fixed_points_cosine(lambda_: float, omega_F: float) -> FixedPoints:
    """Fixed points of the event maps for a pure cosine input of pulsation
    omega_F (sign changes every pi/omega_F)."""
    if not (lambda_ > 0 and omega_F > 0):
        raise DomainError("fixed_points_cosine: lambda and omega_F must be > 0")
    x = lambda_ * math.pi / omega_F
    plus = math.pi / (-math.expm1(-x))
    minus = math.pi / math.expm1(x)
    return FixedPoints(plus, minus, 0.5 * (plus + minus))


def fixed_points_periodic(lambda_: float, omega_F: float, zeros) -> FixedPoints:
    """Fixed points of the per-period maps for a periodic input whose sign
    changes within one period (time origin at a sign change) are `zeros`.

    `zeros` must be strictly increasing, all positive, with the last entry
    equal to the period 2*pi/omega_F.

    Caveat: these are period-to-period values.  With several unevenly
    spaced events per period the trajectory between anchor events is not
    bounded by this pair; use `predict_sequence` for per-event bounds.
    """
    if not (lambda_ > 0 and omega_F > 0):
        raise DomainError("fixed_points_periodic: lambda and omega_F must be > 0")
    zeros = np.asarray(zeros, dtype=float)
    if zeros.size == 0:
        raise DomainError("fixed_points_periodic: empty zero list")
    period = 2.0 * math.pi / omega_F
    if np.any(zeros <= 0) or np.any(np.diff(zeros) <= 0):
        raise DomainError("fixed_points_periodic: zeros must be positive and increasing")
    if abs(zeros[-1] - period) > 1e-9 * period:
        raise DomainError("fixed_points_periodic: last zero must equal the period")
    denom = math.expm1(lambda_ * period)
    exps = np.exp(lambda_ * zeros)
    plus = math.pi * float(np.sum(exps)) / denom
    minus = math.pi * (1.0 + float(np.sum(exps[:-1]))) / denom
    return FixedPoints(plus, minus, 0.5 * (plus + minus))


def limit_frequency(n_zeros: int, omega_F: float) -> float:
    """Adapted frequency in the slow-rate limit: omega_F * n_zeros / 2.

    n_zeros is the number of sign changes per period, which is even for a
    continuous periodic input whose zeros are not extrema.
    """
    if n_zeros < 2 or n_zeros % 2 != 0:
        raise DomainError("limit_frequency: n_zeros must be even and >= 2")
    if not omega_F > 0:
        raise DomainError("limit_frequency: omega_F must be > 0")
    return omega_F * n_zeros / 2.0


def predict_sequence(omega0: float, crossings: CrossingList, lambda_: float,
                     t_start: float = 0.0) -> MapPrediction:
    """Iterate the event map over the crossing times.

    omega0 is the frequency state at t_start; the first slow phase runs
    from t_start to the first crossing.  Each crossing contributes exactly
    one +pi jump.
    """
    if len(crossings) == 0:
        raise DomainError("predict_sequence: no crossings")
    times = crossings.times
    if times[0] <= t_start:
        raise DomainError("predict_sequence: crossings must lie after t_start")
    minus = np.empty(times.size)
    plus = np.empty(times.size)
    w = omega0
    prev_t = t_start
    for i, ti in enumerate(times):
        m, p = step_event(w, ti - prev_t, lambda_)
        minus[i] = m
        plus[i] = p
        w = p
        prev_t = ti
    return MapPrediction(times.copy(), plus, minus)


def envelope(omega0: float, omega_tilde: float, lambda_: float, t) -> float:
    """Average exponential convergence: (omega0 - omega_tilde) * exp(-lambda
    t) + omega_tilde."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("envelope: t must be >= 0")
    out = (omega0 - omega_tilde) * np.exp(-lambda_ * t) + omega_tilde
    return float(out) if out.ndim == 0 else out
