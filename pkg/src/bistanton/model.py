"""Model parameters and the deterministic force of the two-photon-driven Kerr oscillator.

Positions ``q`` and pseudo-momenta ``p`` are plain NumPy arrays whose last
axis has length 2, so every function here broadcasts over leading axes.
2x2 matrices are ``(2, 2)`` arrays.

The Kerr force is

    f(q) = -(gamma + (delta + gamma |q|^2 / 2) J + epsilon M) q

and the Ornstein-Uhlenbeck force is the same expression with the cubic term
removed.  Both are handled through a single cubic coefficient ``kappa``
(``gamma / 2`` for Kerr, ``0`` for OU).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, PreconditionError

J = np.array([[0.0, -1.0], [1.0, 0.0]])
M = np.array([[0.0, 1.0], [1.0, 0.0]])
I2 = np.eye(2)


def rotation(theta):
    """Return ``exp(theta J)``, the counter-clockwise rotation by ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _as_vec(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 2:
        raise ValueError(f"expected trailing axis of length 2, got shape {q.shape}")
    return q


@dataclass(frozen=True)
class KerrParams:
    """Parameters of the Kerr oscillator, all in the same frequency unit.

    ``u`` is the interaction strength that sets the noise level of the
    classical stochastic system (weight ``exp(-S/u)``, noise variance
    ``2 u`` per component and unit time).  ``u = 0`` is allowed for purely
    deterministic work.
    """

    gamma: float = 1.0
    delta: float = 0.0
    epsilon: float = 0.0
    u: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "delta", "epsilon", "u"):
            if not math.isfinite(getattr(self, name)):
                raise PreconditionError(f"{name} must be finite")
        if self.gamma <= 0:
            raise PreconditionError(f"gamma must be > 0, got {self.gamma}")
        if self.epsilon < 0:
            raise PreconditionError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.u < 0:
            raise PreconditionError(f"u must be >= 0, got {self.u}")

    @property
    def cubic(self) -> float:
        return 0.5 * self.gamma

    def replace(self, **changes) -> "KerrParams":
        return replace(self, **changes)

    @classmethod
    def from_ratios(cls, delta, epsilon, u=0.0, gamma=1.0) -> "KerrParams":
        """Build from ``delta/gamma``, ``epsilon/gamma`` and ``u/gamma``."""
        return cls(gamma=gamma, delta=delta * gamma, epsilon=epsilon * gamma, u=u * gamma)


@dataclass(frozen=True)
class OUParams:
    """Linear (Ornstein-Uhlenbeck) force ``-(gamma + delta J + epsilon M) q``."""

    gamma: float = 1.0
    delta: float = 0.0
    epsilon: float = 0.0
    u: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "delta", "epsilon", "u"):
            if not math.isfinite(getattr(self, name)):
                raise PreconditionError(f"{name} must be finite")
        if self.gamma <= 0:
            raise PreconditionError(f"gamma must be > 0, got {self.gamma}")
        if self.u < 0:
            raise PreconditionError(f"u must be >= 0, got {self.u}")

    @property
    def cubic(self) -> float:
        return 0.0

    @property
    def nu(self) -> float:
        return math.hypot(self.gamma, self.delta)

    @property
    def theta_nu(self) -> float:
        return math.atan2(self.delta, self.gamma)

    @property
    def is_stable(self) -> bool:
        # eigenvalues of the drift matrix are -gamma +- sqrt(eps^2 - delta^2)
        return self.nu > abs(self.epsilon)

    def linear_matrix(self) -> np.ndarray:
        """Drift matrix ``A`` with ``f(q) = A q``."""
        return -(self.gamma * I2 + self.delta * J + self.epsilon * M)

    def replace(self, **changes) -> "OUParams":
        return replace(self, **changes)


def force(params, q):
    """Deterministic force for ``KerrParams`` or ``OUParams`` (vectorised)."""
    q = _as_vec(q)
    x, y = q[..., 0], q[..., 1]
    g, d, e, k = params.gamma, params.delta, params.epsilon, params.cubic
    d_eff = d + k * (x * x + y * y)
    fx = -g * x + d_eff * y - e * y
    fy = -g * y - d_eff * x - e * x
    return np.stack([fx, fy], axis=-1)


def jacobian(params, q):
    """Jacobian ``df/dq`` of :func:`force` at a single point ``q``."""
    q = _as_vec(q)
    x, y = float(q[0]), float(q[1])
    g, d, e, k = params.gamma, params.delta, params.epsilon, params.cubic
    d_eff = d + k * (x * x + y * y)
    # d/dq of k|q|^2 J q is k(|q|^2 J + 2 (Jq) q^T), with Jq = (-y, x)
    return np.array(
        [
            [-g + 2 * k * x * y, d_eff - e + 2 * k * y * y],
            [-d_eff - e - 2 * k * x * x, -g - 2 * k * x * y],
        ]
    )


def kerr_force(params: KerrParams, q):
    return force(params, q)


def kerr_jacobian(params: KerrParams, q):
    return jacobian(params, q)


def ou_force(params: OUParams, q):
    return force(params, q)


def gradient_potential(params, q):
    """Scalar ``U`` in ``f = -grad U - J grad V``: ``gamma |q|^2/2 + epsilon x y``."""
    q = _as_vec(q)
    x, y = q[..., 0], q[..., 1]
    return 0.5 * params.gamma * (x * x + y * y) + params.epsilon * x * y


def curl_potential(params, q):
    """Scalar ``V`` in ``f = -grad U - J grad V``: ``delta |q|^2/2 + kappa |q|^4/4``."""
    q = _as_vec(q)
    r2 = q[..., 0] ** 2 + q[..., 1] ** 2
    return 0.5 * params.delta * r2 + 0.25 * params.cubic * r2 * r2


@dataclass(frozen=True)
class HelmholtzData:
    """Laplacians of the gradient and curl potentials at one point."""

    lap_u: float
    lap_v: float


def helmholtz_laplacians(params, q) -> HelmholtzData:
    """Return ``(Laplacian U, Laplacian V)`` at ``q``.

    ``Laplacian U = 2 gamma`` everywhere.  With ``V = delta r^2/2 + kappa r^4/4``,
    ``Laplacian V = 2 delta + 4 kappa r^2`` (``2 delta + 2 gamma r^2`` for Kerr).
    """
    q = _as_vec(q)
    r2 = float(q[0] ** 2 + q[1] ** 2)
    return HelmholtzData(lap_u=2.0 * params.gamma, lap_v=2.0 * params.delta + 4.0 * params.cubic * r2)


def photon_number_estimate(params: KerrParams, q):
    """Photon number ``gamma |q|^2 / (4 u)`` represented by the classical position ``q``."""
    if params.u <= 0:
        raise DomainError("photon number needs u > 0 to fix the field scale")
    q = _as_vec(q)
    return params.gamma * (q[..., 0] ** 2 + q[..., 1] ** 2) / (4.0 * params.u)
