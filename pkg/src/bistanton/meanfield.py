"""Fixed points of the deterministic force and the mean-field phase diagram."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .model import I2, J, M, KerrParams, jacobian, kerr_force

STABLE, SADDLE, UNSTABLE = "stable", "saddle", "unstable"
VACUUM, CAT, BISTABLE = "vacuum", "cat", "bistable"

# parameter points this close (in units of gamma) to a regime boundary are flagged
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class FixedPoint:
    q: np.ndarray
    kind: str
    eigenvalues: np.ndarray
    label: str

    @property
    def radius(self) -> float:
        return float(np.hypot(*self.q))

    def negated(self) -> "FixedPoint":
        """Image under the q -> -q symmetry (labels swap plus/minus)."""
        swap = {"bright_plus": "bright_minus", "bright_minus": "bright_plus",
                "saddle_plus": "saddle_minus", "saddle_minus": "saddle_plus"}
        return FixedPoint(-self.q, self.kind, self.eigenvalues, swap.get(self.label, self.label))


@dataclass(frozen=True)
class FixedPointSet:
    points: tuple
    degenerate: bool = False

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, label) -> FixedPoint:
        for fp in self.points:
            if fp.label == label:
                return fp
        raise KeyError(label)

    def labels(self):
        return [fp.label for fp in self.points]

    def of_kind(self, kind):
        return [fp for fp in self.points if fp.kind == kind]


@dataclass(frozen=True)
class Regime:
    tag: str
    lower_gap: float  # epsilon - gamma
    upper_gap: float  # sqrt(gamma^2 + delta^2) - epsilon
    degenerate: bool = False
    notes: dict = field(default_factory=dict)


def _kind(eigenvalues) -> str:
    re = np.real(eigenvalues)
    if np.all(re < 0):
        return STABLE
    if np.all(re > 0):
        return UNSTABLE
    return SADDLE


def _canonical_sign(q):
    """Pick the representative of +-q with y >= 0 (then x >= 0)."""
    if q[1] < 0 or (q[1] == 0 and q[0] < 0):
        return -q
    return q


def _newton_polish(params, q, iterations=8):
    for _ in range(iterations):
        r = kerr_force(params, q)
        if np.linalg.norm(r) < 1e-15 * max(1.0, np.linalg.norm(q)):
            break
        q = q - np.linalg.solve(jacobian(params, q), r)
    return q


def stability(params: KerrParams, q, tol=1e-8):
    """Eigenvalues of the force Jacobian at a fixed point and its kind.

    Raises
    ------
    PreconditionError
        If ``|f(q)|`` exceeds ``tol * gamma * max(1, |q|)``.
    """
    q = np.asarray(q, dtype=float)
    res = float(np.linalg.norm(kerr_force(params, q)))
    if res > tol * params.gamma * max(1.0, float(np.linalg.norm(q))):
        raise PreconditionError(f"q={q.tolist()} is not a fixed point (|f(q)| = {res:.3e})")
    eig = np.linalg.eigvals(jacobian(params, q))
    eig = eig[np.argsort(eig.real)]
    return eig, _kind(eig)


def find_fixed_points(params: KerrParams) -> FixedPointSet:
    """All real solutions of ``f(q) = 0``.

    Nonzero solutions satisfy ``delta + gamma |q|^2 / 2 = +-sqrt(epsilon^2 - gamma^2)``
    and lie along the null vector of ``gamma + delta_eff J + epsilon M``.
    """
    g, d, e = params.gamma, params.delta, params.epsilon
    degenerate = _near_boundary(params)
    origin = np.zeros(2)
    eig0, kind0 = stability(params, origin)
    points = [FixedPoint(origin, kind0, eig0, VACUUM)]
    if e >= g:
        s = math.sqrt(e * e - g * g)
        roots = [s] if s == 0 else [s, -s]
        for d_eff in roots:
            r2 = 2.0 * (d_eff - d) / g
            if r2 <= 0:
                continue
            # first row of (g + d_eff J + e M) u = 0 is g u0 + (e - d_eff) u1 = 0
            u = np.array([d_eff - e, g])
            q = _canonical_sign(math.sqrt(r2) * u / np.linalg.norm(u))
            q = _canonical_sign(_newton_polish(params, q))
            eig, kind = stability(params, q)
            tag = "bright" if kind == STABLE else "saddle"
            plus = FixedPoint(q, kind, eig, tag + "_plus")
            points.extend([plus, plus.negated()])
    return FixedPointSet(tuple(points), degenerate)


def _near_boundary(params) -> bool:
    g, d, e = params.gamma, params.delta, params.epsilon
    return abs(e - g) <= DEGENERACY_TOL * g or abs(math.hypot(g, d) - e) <= DEGENERACY_TOL * g


def classify_regime(params: KerrParams) -> Regime:
    """Vacuum, cat or bistable, read off the stability of the fixed points."""
    fps = find_fixed_points(params)
    origin_stable = fps[VACUUM].kind == STABLE
    n_stable_bright = sum(1 for fp in fps if fp.label.startswith("bright") and fp.kind == STABLE)
    if not origin_stable:
        tag = CAT
    elif n_stable_bright:
        tag = BISTABLE
    else:
        tag = VACUUM
    g, d, e = params.gamma, params.delta, params.epsilon
    return Regime(
        tag=tag,
        lower_gap=e - g,
        upper_gap=math.hypot(g, d) - e,
        degenerate=fps.degenerate,
        notes={"n_fixed_points": len(fps)},
    )


def vacuum_jacobian(params: KerrParams) -> np.ndarray:
    return -(params.gamma * I2 + params.delta * J + params.epsilon * M)
