"""Analytical approximations: constraint-angle dynamics, pseudo-potentials and
the closed-form phase boundary.

On the zero-energy surface the pseudo-momentum is parametrised by an angle,
``p = (exp(theta J) - 1) f / 2``.  The angle obeys

    theta_dot = sin(theta) Lap U - (1 - cos(theta)) Lap V

whose non-trivial stationary value ``2 arctan(Lap U / Lap V)`` generates
escape paths.  Locking theta to its value at the initial attractor turns
``p`` into a known field whose gradient part is an (approximate)
pseudo-potential for the escape action.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoRootError, PreconditionError
from .meanfield import STABLE, FixedPoint
from .model import (I2, J, M, HelmholtzData, KerrParams, OUParams, force, helmholtz_laplacians, jacobian,
                    rotation)

TWO_PI = 2.0 * math.pi

ANALYTIC, EQUAL_ACTION, LINDBLAD = "analytic_eq11", "equal_action_numeric", "lindblad_oracle"
METHODS = (ANALYTIC, EQUAL_ACTION, LINDBLAD)


def theta_rhs(theta, h: HelmholtzData):
    return math.sin(theta) * h.lap_u - (1.0 - math.cos(theta)) * h.lap_v


def stationary_angle(h: HelmholtzData) -> float:
    """Escape branch of ``theta_dot = 0``, returned in ``(0, 2 pi)``."""
    if h.lap_u == 0.0 and h.lap_v == 0.0:
        raise PreconditionError("both Laplacians vanish: stationary angle undefined")
    theta = (2.0 * math.atan2(h.lap_u, h.lap_v)) % TWO_PI
    if theta == 0.0:
        raise PreconditionError("escape branch coincides with the trapping branch (Lap U = 0)")
    return theta


def local_stationary_angle(params, q) -> float:
    return stationary_angle(helmholtz_laplacians(params, q))


# --- Ornstein-Uhlenbeck ---------------------------------------------------------


def _check_ou(params: OUParams, allow_unstable: bool):
    if not params.is_stable and not allow_unstable:
        raise DomainError(
            f"OU drift is not stable (nu={params.nu:.6g} <= epsilon={params.epsilon:.6g}); "
            "the pseudo-potential is not a Lyapunov function"
        )


def ou_hessian(params: OUParams, allow_unstable=False) -> np.ndarray:
    """Hessian of the OU pseudo-potential.

    ``P(q) = (cos th_nu / 2) q.(nu + eps M exp(th_nu J)) q`` with
    ``gamma = nu cos th_nu`` and ``delta = nu sin th_nu``.
    """
    _check_ou(params, allow_unstable)
    th = params.theta_nu
    mat = params.nu * I2 + params.epsilon * M @ rotation(th)
    return math.cos(th) * 0.5 * (mat + mat.T)


def ou_pseudo_potential(params: OUParams, q, allow_unstable=False):
    q = np.asarray(q, dtype=float)
    hess = ou_hessian(params, allow_unstable)
    return 0.5 * np.einsum("...i,ij,...j->...", q, hess, q)


def ou_escape_action(params: OUParams, q_i, q_f, allow_unstable=False) -> float:
    return float(ou_pseudo_potential(params, q_f, allow_unstable) - ou_pseudo_potential(params, q_i, allow_unstable))


# --- frozen-angle pseudo-potential ---------------------------------------------


@dataclass(frozen=True)
class FrozenThetaField:
    """Momentum field ``p(q) = (exp(theta0 J) - 1) f(q) / 2`` and its gradient part.

    In coordinates ``u = q - q0`` centred on the source, ``p`` is a cubic
    polynomial without constant term.  Each homogeneous piece ``G_n`` is split
    into the gradient of ``u.G_n(u) / (n + 1)`` and a remainder tangent to
    circles around the source, which is discarded.  For a source at the
    origin this is exactly the split of ``(A + |q|^2 B) q`` into
    ``Sym(A) q + (radial part of B) |q|^2 q`` plus pure-curl terms.
    """

    params: KerrParams
    theta0: float
    source_label: str
    source_q: np.ndarray
    quadratic_part: np.ndarray  # Sym(K F0), Hessian of P at the source
    quartic_coefficient: float  # coefficient of |u|^4

    @property
    def k_matrix(self) -> np.ndarray:
        return 0.5 * (rotation(self.theta0) - I2)

    def momentum(self, q):
        return np.einsum("ij,...j->...i", self.k_matrix, force(self.params, q))

    def potential(self, q):
        q = np.asarray(q, dtype=float)
        u = q - self.source_q
        q0 = self.source_q
        th = self.theta0
        kappa = self.params.cubic
        u2 = np.einsum("...i,...i->...", u, u)
        quad = 0.5 * np.einsum("...i,ij,...j->...", u, self.quadratic_part, u)
        # u.G2(u)/3 with G2 = -kappa K (2 (q0.u) J u + |u|^2 J q0)
        u_dot_q0 = u @ q0
        u_j_q0 = np.einsum("...i,ij,j->...", u, J, q0)
        cubic = 0.5 * kappa * u2 * (math.sin(th) * u_dot_q0 + (1.0 - math.cos(th)) / 3.0 * u_j_q0)
        return quad + cubic + self.quartic_coefficient * u2 * u2

    def gradient(self, q, h=1e-6):
        """Central-difference gradient of :meth:`potential` (test support)."""
        q = np.asarray(q, dtype=float)
        out = np.empty(q.shape)
        for i in range(2):
            dq = np.zeros(2)
            dq[i] = h
            out[..., i] = (self.potential(q + dq) - self.potential(q - dq)) / (2 * h)
        return out


def frozen_theta_field(params: KerrParams, source: FixedPoint) -> FrozenThetaField:
    if source.kind != STABLE:
        raise PreconditionError(f"source {source.label} is {source.kind}, expected stable")
    theta0 = local_stationary_angle(params, source.q)
    k_mat = 0.5 * (rotation(theta0) - I2)
    lin = k_mat @ jacobian(params, source.q)
    return FrozenThetaField(
        params=params,
        theta0=theta0,
        source_label=source.label,
        source_q=np.array(source.q, dtype=float),
        quadratic_part=0.5 * (lin + lin.T),
        quartic_coefficient=params.cubic * math.sin(theta0) / 8.0,
    )


def frozen_theta_action(params: KerrParams, source: FixedPoint, target: FixedPoint) -> float:
    field = frozen_theta_field(params, source)
    return float(field.potential(target.q) - field.potential(source.q))


# --- closed-form phase boundary ---------------------------------------------------


@dataclass(frozen=True)
class BoundaryPoint:
    delta: float
    epsilon_star: float
    gamma: float
    method: str
    residual: float
    ok: bool = True
    message: str = ""

    @classmethod
    def gap(cls, delta, gamma, method, message):
        return cls(delta, math.nan, gamma, method, math.nan, ok=False, message=message)


def boundary_residual(delta, epsilon, gamma=1.0) -> float:
    """Left minus right side of the implicit phase-boundary equation.

    With ``s = sqrt(epsilon^2 - gamma^2)``::

        delta (s + delta)^2 (gamma^2 + (2 s - delta)^2) / (4 s (gamma^2 + delta^2))
          - [epsilon^2 - gamma^2 - (delta - s + gamma sqrt((delta^2 - s^2) / epsilon^2))^2]
    """
    if not epsilon > gamma:
        raise DomainError(f"requires epsilon > gamma (got epsilon={epsilon}, gamma={gamma})")
    s2 = epsilon * epsilon - gamma * gamma
    s = math.sqrt(s2)
    radicand = delta * delta - s2
    # tolerate round-off exactly at the cusp delta = -s
    if radicand < -1e-12 * max(1.0, delta * delta) or delta > 0:
        raise DomainError(
            f"requires delta <= -sqrt(epsilon^2 - gamma^2) (got delta={delta}, sqrt(...)={s:.12g})"
        )
    radicand = max(radicand, 0.0)
    lhs = delta * (s + delta) ** 2 / (4.0 * s * (gamma * gamma + delta * delta)) * (gamma * gamma + (2.0 * s - delta) ** 2)
    rhs = s2 - (delta - s + gamma * math.sqrt(radicand / (epsilon * epsilon))) ** 2
    return lhs - rhs


def bistable_strip(delta, gamma=1.0):
    """Open interval of epsilon where vacuum and bright states coexist."""
    return gamma, math.hypot(gamma, delta)


def boundary_epsilon(delta, gamma=1.0, tol=None) -> BoundaryPoint:
    """Root of :func:`boundary_residual` in epsilon inside the bistable strip."""
    if tol is None:
        tol = 1e-10 * gamma
    if not delta < 0:
        raise DomainError(f"boundary is defined for delta < 0 (got delta={delta})")
    lo, hi = bistable_strip(delta, gamma)
    a, b = 1.000001 * lo, 0.999999 * hi
    if not a < b:
        raise NoRootError(f"bistable strip at delta={delta} is too narrow to bracket")
    fa = boundary_residual(delta, a, gamma)
    fb = boundary_residual(delta, b, gamma)
    if fa * fb > 0:
        raise NoRootError(f"no sign change of the boundary residual on [{a:.9g}, {b:.9g}] at delta={delta}")
    root = brentq(lambda e: boundary_residual(delta, e, gamma), a, b, xtol=tol, rtol=4 * np.finfo(float).eps)
    return BoundaryPoint(delta, root, gamma, ANALYTIC, boundary_residual(delta, root, gamma))


def _boundary_or_gap(delta, gamma, tol):
    try:
        return boundary_epsilon(delta, gamma, tol)
    except (DomainError, NoRootError) as exc:
        return BoundaryPoint.gap(delta, gamma, ANALYTIC, str(exc))


def trace_boundary(delta_grid, gamma=1.0, tol=None, threads=None) -> list:
    """:func:`boundary_epsilon` over a grid; failures become gap entries."""
    deltas = [float(d) for d in delta_grid]
    if not deltas:
        return []
    if threads == 1 or len(deltas) == 1:
        return [_boundary_or_gap(d, gamma, tol) for d in deltas]
    with ThreadPoolExecutor(max_workers=threads or os.cpu_count()) as pool:
        return list(pool.map(lambda d: _boundary_or_gap(d, gamma, tol), deltas))


BOUNDARY_COLUMNS = ("delta", "epsilon_star", "gamma", "method", "residual", "ok", "message")


def write_boundary_csv(points, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(BOUNDARY_COLUMNS)
    for bp in points:
        writer.writerow([repr(bp.delta), repr(bp.epsilon_star), repr(bp.gamma), bp.method, repr(bp.residual),
                         int(bp.ok), bp.message])
