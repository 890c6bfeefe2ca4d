"""ODE right-hand sides: single adaptive oscillator, its slow/fast
coordinate form, and the feedback pool with amplitude adaptation.

The dataclasses here are the friendly state/parameter bundles; `System`
descriptors carry the kind code + packed parameter vector the compiled
integration loop dispatches on.  The plain-Python `*_rhs` functions evaluate
the same formulas and exist for direct evaluation, tests and the manifold
diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import DomainError
from .signals import SignalSpec

__all__ = [
    "AfoParams", "AfoState", "TransformedState", "PoolParams", "PoolState",
    "System", "afo_rhs", "transformed_rhs", "pool_rhs",
    "to_transformed", "from_transformed",
    "afo_system", "transformed_system", "pool_system", "lorenz_system",
    "decay_system", "harmonic_system", "phase_system",
]


@dataclass(frozen=True)
class AfoParams:
    """Convergence-rate parameter (lambda, 1/s) and coupling strength K."""
    lambda_: float
    coupling: float

    def __post_init__(self):
        if not (self.lambda_ > 0 and math.isfinite(self.lambda_)):
            raise DomainError("AfoParams: lambda must be positive and finite")
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise DomainError("AfoParams: coupling must be positive and finite")

    @property
    def epsilon(self) -> float:
        """Singular-perturbation parameter 1/K."""
        return 1.0 / self.coupling


@dataclass(frozen=True)
class AfoState:
    """Oscillator phase (unwrapped; never reduced mod 2*pi) and frequency
    state.  The frequency read-out is lambda * omega."""
    phi: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.phi) and math.isfinite(self.omega)):
            raise DomainError("AfoState: state must be finite")

    def as_array(self):
        return np.array([self.phi, self.omega])


@dataclass(frozen=True)
class TransformedState:
    """State in the slow/fast coordinates (omega, Omega = phi - omega,
    theta = time)."""
    omega: float
    Omega: float
    theta: float

    def __post_init__(self):
        for v in (self.omega, self.Omega, self.theta):
            if not math.isfinite(v):
                raise DomainError("TransformedState: state must be finite")

    def as_array(self):
        return np.array([self.omega, self.Omega, self.theta])


def to_transformed(state: AfoState, t: float) -> TransformedState:
    return TransformedState(omega=state.omega, Omega=state.phi - state.omega, theta=t)


def from_transformed(state: TransformedState) -> tuple[AfoState, float]:
    return AfoState(phi=state.Omega + state.omega, omega=state.omega), state.theta


@dataclass(frozen=True)
class PoolParams:
    """Pool of n oscillators sharing one feedback error; eta is the
    amplitude-adaptation gain."""
    n_oscillators: int
    lambda_: float
    coupling: float
    eta: float

    def __post_init__(self):
        if self.n_oscillators < 1:
            raise DomainError("PoolParams: need at least one oscillator")
        for name in ("lambda_", "coupling", "eta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"PoolParams: {name} must be positive and finite")


@dataclass(frozen=True)
class PoolState:
    phi: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        for name in ("phi", "omega", "alpha"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.phi.size
        if not (self.omega.size == n and self.alpha.size == n):
            raise DomainError("PoolState: phi/omega/alpha must have equal length")
        for arr in (self.phi, self.omega, self.alpha):
            if not np.all(np.isfinite(arr)):
                raise DomainError("PoolState: state must be finite")

    @property
    def n(self):
        return self.phi.size

    def as_array(self):
        return np.concatenate([self.phi, self.omega, self.alpha])

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=float)
        n = y.size // 3
        return cls(phi=y[:n], omega=y[n:2 * n], alpha=y[2 * n:])


def afo_rhs(state: AfoState, t: float, p: AfoParams, f: SignalSpec):
    """d(phi, omega)/dt for the adaptive frequency phase oscillator."""
    c = p.coupling * math.sin(state.phi) * f.eval(t)
    return (p.lambda_ * state.omega - c, -c)


def transformed_rhs(state: TransformedState, p: AfoParams, f: SignalSpec):
    """d(omega, Omega, theta)/dt in the slow/fast coordinates.

    Trajectories map onto `afo_rhs` trajectories under phi = Omega + omega,
    t = theta; omega' vanishes on the planes Omega + omega = k*pi.
    """
    c = p.coupling * math.sin(state.Omega + state.omega) * f.eval(state.theta)
    return (-c, p.lambda_ * state.omega, 1.0)


def pool_rhs(state: PoolState, t: float, p: PoolParams, input_signal: SignalSpec):
    """Derivatives of (phi_i, omega_i, alpha_i) under the shared feedback
    error e = I(t) - sum_j alpha_j cos(phi_j), computed once per call."""
    if state.n != p.n_oscillators:
        raise DomainError("pool_rhs: state size does not match params")
    cos_phi = np.cos(state.phi)
    e = input_signal.eval(t) - float(state.alpha @ cos_phi)
    w = p.coupling * e * np.sin(state.phi)
    return (p.lambda_ * state.omega - w, -w, p.eta * e * cos_phi)


@dataclass(frozen=True)
class System:
    """Descriptor the integrator dispatches on: a compiled-kind code, flat
    parameters, the drive signal (if any) and state-column names."""
    kind: int
    dim: int
    pars: np.ndarray
    signal: SignalSpec | None
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "pars", np.ascontiguousarray(self.pars, dtype=float))


def afo_system(p: AfoParams, signal: SignalSpec) -> System:
    return System(_core.SYS_AFO, 2, np.array([p.lambda_, p.coupling]),
                  signal, ("phi", "omega"))


def transformed_system(p: AfoParams, signal: SignalSpec) -> System:
    return System(_core.SYS_TRANSFORMED, 3, np.array([p.lambda_, p.coupling]),
                  signal, ("omega", "Omega", "theta"))


def pool_system(p: PoolParams, input_signal: SignalSpec) -> System:
    n = p.n_oscillators
    names = tuple([f"phi_{i}" for i in range(n)]
                  + [f"omega_{i}" for i in range(n)]
                  + [f"alpha_{i}" for i in range(n)])
    return System(_core.SYS_POOL, 3 * n,
                  np.array([p.lambda_, p.coupling, p.eta, float(n)]),
                  input_signal, names)


def lorenz_system() -> System:
    return System(_core.SYS_LORENZ, 3, np.zeros(1), None, ("x", "y", "z"))


def decay_system(dim: int = 1) -> System:
    return System(_core.SYS_DECAY, dim, np.zeros(1), None,
                  tuple(f"y_{i}" for i in range(dim)))


def harmonic_system(omega: float) -> System:
    return System(_core.SYS_HARMONIC, 2, np.array([float(omega)]), None, ("x", "v"))


def phase_system(drive: float, coupling: float, signal: SignalSpec) -> System:
    """Fixed-frequency phase oscillator (no adaptation): phi' = drive
    - coupling * sin(phi) * F(t).  Used for synchronization-region sweeps."""
    return System(_core.SYS_PHASE, 1, np.array([float(drive), float(coupling)]),
                  signal, ("phi",))
