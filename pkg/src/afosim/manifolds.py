"""Slow-manifold geometry: first-order heights, stability classification,
slow flows and a numerical invariance check.

All formulas are the O(epsilon) truncations; second-order terms are not
computed.  Formulas refuse evaluation near their singular set (denominator
below 1e-8 relative to the correction's numerator) instead of returning
huge values: that proximity means the manifold family is ending at the
F = 0 separatrix, not that a height exists there.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularManifoldError
from .signals import SignalSpec

__all__ = [
    "Stability", "Family", "ManifoldBranch",
    "single_manifold_omega", "classify_single", "slow_flow",
    "feedback_manifolds", "feedback_MF_flow", "pool_manifold",
    "residual", "sample_surface", "reconstruction_error",
]


class Stability(enum.Enum):
    ATTRACTING = "attracting"
    REPELLING = "repelling"
    SADDLE = "saddle"


class Family(enum.Enum):
    PI = "pi"
    PI_MINUS_FEEDBACK = "pi_minus_feedback"
    PI_PLUS_FEEDBACK = "pi_plus_feedback"
    FEEDBACK = "feedback"


@dataclass(frozen=True)
class ManifoldBranch:
    k: object  # int for a single oscillator, int tuple for pools
    family: Family
    stability: Stability


def _guard(denominator: float, numerator_scale: float, what: str):
    if abs(denominator) < 1e-8 * (1.0 + abs(numerator_scale)):
        raise SingularManifoldError(
            f"{what}: denominator {denominator:.3e} too close to the "
            f"singular set (numerator scale {numerator_scale:.3e})")


def single_manifold_omega(k: int, Omega: float, F_theta: float,
                          lambda_: float, epsilon: float) -> float:
    """First-order manifold height omega = (k pi - Omega) * (1 +
    epsilon (-1)^k lambda / F)."""
    base = k * math.pi - Omega
    _guard(F_theta, epsilon * lambda_ * base, "single_manifold_omega")
    sign = -1.0 if k % 2 else 1.0
    return base * (1.0 + epsilon * sign * lambda_ / F_theta)


def classify_single(k: int, F_theta: float) -> Stability:
    """Attracting iff (-1)^(k+1) * F < 0; singular when F = 0."""
    _guard(F_theta, 0.0, "classify_single")
    sign = 1.0 if (k + 1) % 2 == 0 else -1.0
    return Stability.ATTRACTING if sign * F_theta < 0 else Stability.REPELLING


def slow_flow(Omega0: float, k: int, lambda_: float, t):
    """Leading-order slow flow from an initial offset Omega0 off the k-th
    plane: omega = -Omega0 e^(-lambda t), Omega = k pi + Omega0 e^(-lambda t).
    Their sum stays k*pi for all t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("slow_flow: t must be >= 0")
    decay = Omega0 * np.exp(-lambda_ * t)
    omega = -decay
    Omega = k * math.pi + decay
    if omega.ndim == 0:
        return float(omega), float(Omega)
    return omega, Omega


def feedback_manifolds(k: int, Omega: float, I_theta: float, alpha: float,
                       lambda_: float, epsilon: float):
    """Manifold height for a single oscillator inside the feedback loop.

    Returns (omega, family, stability): the attracting branch exists while
    alpha < (-1)^k I(theta), the repelling one for alpha above it; equality
    is the singular boundary where the branch ends.
    """
    sign = -1.0 if k % 2 else 1.0
    denom = sign * I_theta - alpha
    base = k * math.pi - Omega
    _guard(denom, epsilon * lambda_ * base, "feedback_manifolds")
    omega = base * (1.0 + epsilon * lambda_ / denom)
    if denom > 0:
        return omega, Family.PI_MINUS_FEEDBACK, Stability.ATTRACTING
    return omega, Family.PI_PLUS_FEEDBACK, Stability.REPELLING


def feedback_MF_flow(I_theta: float, alpha: float, Omega: float,
                     branch_sign: int, n: int, lambda_: float) -> float:
    """Slow flow of Omega on the output-matching manifold (the branch where
    alpha cos(Omega + omega) = I): dOmega/dt = lambda * ((+-arccos(I/alpha)
    - 2 pi n) - Omega).  alpha stays constant on this manifold.
    """
    if alpha == 0:
        raise DomainError("feedback_MF_flow: alpha must be nonzero")
    ratio = I_theta / alpha
    if abs(ratio) > 1.0 + 1e-12:
        raise DomainError("feedback_MF_flow: |I| > |alpha| is off the manifold")
    if branch_sign not in (1, -1):
        raise DomainError("feedback_MF_flow: branch_sign must be +1 or -1")
    target = branch_sign * math.acos(max(-1.0, min(1.0, ratio))) - 2.0 * math.pi * n
    return lambda_ * (target - Omega)


def pool_manifold(k, Omega, I_theta: float, alpha, lambda_: float, epsilon: float):
    """Per-oscillator manifold heights for the N-oscillator pool, with the
    transverse eigenvalues and the resulting stability class.

    Eigenvalue i is alpha_i + (-1)^(k_i + 1) I + sum_{j != i} alpha_j
    (-1)^(k_j + k_i); the branch is attracting when all are negative,
    repelling when all are positive, saddle otherwise.
    """
    k = np.asarray(k, dtype=np.int64)
    Omega = np.asarray(Omega, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n = k.size
    if Omega.size != n or alpha.size != n:
        raise DomainError("pool_manifold: k/Omega/alpha must have equal length")
    signs = np.where(k % 2 == 0, 1.0, -1.0)
    denom = I_theta - float(np.sum(signs * alpha))
    base = k * math.pi - Omega
    _guard(denom, epsilon * lambda_ * float(np.max(np.abs(base), initial=0.0)),
           "pool_manifold")
    omega = base * (1.0 + epsilon * lambda_ * signs / denom)

    eig = np.empty(n)
    for i in range(n):
        cross = float(np.sum(signs * alpha * signs[i])) - alpha[i]
        eig[i] = alpha[i] - signs[i] * I_theta + cross
    if np.all(eig < 0):
        stability = Stability.ATTRACTING
    elif np.all(eig > 0):
        stability = Stability.REPELLING
    else:
        stability = Stability.SADDLE
    return omega, stability, eig


def residual(k: int, Omega: float, theta: float, signal: SignalSpec,
             lambda_: float, epsilon: float) -> float:
    """Invariance defect of the first-order manifold at (Omega, theta):
    |epsilon * d(omega_m)/dt + sin(Omega + omega_m) F(theta)| where the
    manifold height omega_m(Omega, theta) is transported by the slow flow.

    Zero for the exact manifold; the first-order truncation leaves an
    O(epsilon^2) defect, so halving epsilon quarters the value.
    """
    F = signal.eval(theta)
    base = k * math.pi - Omega
    _guard(F, epsilon * lambda_ * base, "residual")
    sign = -1.0 if k % 2 else 1.0
    corr = epsilon * sign * lambda_ / F
    omega_m = base * (1.0 + corr)
    dF = signal.eval_slope(theta)
    d_dOmega = -(1.0 + corr)
    d_dtheta = -base * corr * dF / F
    omega_dot = d_dOmega * lambda_ * omega_m + d_dtheta
    return abs(epsilon * omega_dot + math.sin(Omega + omega_m) * F)


def sample_surface(ks, Omega: float, F_values, lambda_: float, epsilon: float,
                   path_or_file):
    """Emit a CSV grid (k, Omega, F, omega, stability) of manifold heights
    for external plotting of the layered structure."""
    close = False
    f = path_or_file
    if not hasattr(f, "write"):
        f = open(f, "w")
        close = True
    try:
        f.write("k,Omega,F,omega,stability\n")
        for k in ks:
            for Fv in F_values:
                try:
                    w = single_manifold_omega(k, Omega, Fv, lambda_, epsilon)
                    s = classify_single(k, Fv).value
                except SingularManifoldError:
                    continue
                f.write(f"{k},{Omega:.17g},{Fv:.17g},{w:.17g},{s}\n")
    finally:
        if close:
            f.close()


def reconstruction_error(traj, input_signal: SignalSpec) -> np.ndarray:
    """Pointwise input-minus-output error I(t) - sum_i alpha_i cos(phi_i)
    along a pool trajectory.

    This is a diagnostic only: the candidate invariant set where this error
    vanishes is not normally hyperbolic for several oscillators, so no
    geometry is claimed for it.
    """
    names = traj.names
    n = sum(1 for nm in names if nm.startswith("phi_"))
    if n == 0:
        raise DomainError("reconstruction_error: not a pool trajectory")
    phi = traj.states[:, :n]
    alpha = traj.states[:, 2 * n:3 * n]
    out = np.sum(alpha * np.cos(phi), axis=1)
    return input_signal.eval_array(traj.times) - out
