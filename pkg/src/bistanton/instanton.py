"""Numerical instantons: escape paths of the auxiliary Hamiltonian system.

The Hamiltonian is ``H(q, p) = |p|^2 + p.f(q)`` and paths obey

    dq/dt = 2 p + f(q),        dp/dt = -(df/dq)^T p.

An escape path leaves a stable fixed point along the two-dimensional
unstable manifold of ``(q_source, 0)`` and lands on a saddle.  The manifold
is entered a distance ``eta`` from the source in direction ``phi``, with the
momentum fixed by the local quadratic quasi-potential; ``phi`` is the only
shooting parameter.  A global scan over ``phi`` finds the candidate
branches, and each branch is sharpened by lengthening the total time ``tau``
stage by stage, every stage warm-started from the previous ``phi``.  The
attainable miss distance is limited by double precision, so once the miss
stops improving the trajectory is cut at its closest approach to the target
and completed with the linearised stable-manifold motion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import brentq, minimize_scalar, root

from . import _integrate
from .approx import EQUAL_ACTION, BoundaryPoint, bistable_strip
from .errors import ConvergenceError, NoRootError, PreconditionError, SingularPointError, StiffIntegrationError
from .meanfield import BISTABLE, SADDLE, STABLE, UNSTABLE, VACUUM, FixedPoint, classify_regime, find_fixed_points
from .model import I2, KerrParams, force, jacobian

PATH_COLUMNS = ("t", "qx", "qy", "px", "py", "S", "theta", "H")


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(2)
        p = np.asarray(self.p, dtype=float).reshape(2)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise PreconditionError("phase point must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def as_array(self):
        return np.concatenate([self.q, self.p])


@dataclass
class InstantonPath:
    """A sampled trajectory ``(q(t), p(t))`` with its cumulative action.

    ``tail_start`` is the first sample of the appended linear approach to the
    target (``len(times)`` when there is none); ``splice_jump`` is the size of
    the discarded unstable component at the joint.
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    action: np.ndarray
    theta: np.ndarray
    h_residual_max: float
    source: FixedPoint | None
    target: FixedPoint | None
    tau: float
    target_q: np.ndarray | None = None
    miss: float = math.nan
    phi: float = math.nan
    tail_start: int | None = None
    splice_jump: float = 0.0
    stage_actions: list = field(default_factory=list)
    stage_misses: list = field(default_factory=list)

    def __post_init__(self):
        if self.tail_start is None:
            self.tail_start = len(self.times)

    def __len__(self):
        return len(self.times)

    @property
    def states(self):
        return [PhasePoint(q, p) for q, p in zip(self.q, self.p)]

    @property
    def total_action(self) -> float:
        return float(self.action[-1])

    def hamiltonian_values(self, params):
        return hamiltonian_array(params, self.q, self.p)

    def negated(self) -> "InstantonPath":
        """Image under ``(q, p) -> (-q, -p)``, which maps solutions to solutions."""
        return InstantonPath(
            times=self.times, q=-self.q, p=-self.p, action=self.action, theta=self.theta,
            h_residual_max=self.h_residual_max,
            source=self.source.negated() if self.source else None,
            target=self.target.negated() if self.target else None,
            tau=self.tau,
            target_q=None if self.target_q is None else -self.target_q,
            miss=self.miss, phi=(self.phi + math.pi) % (2 * math.pi), tail_start=self.tail_start,
            splice_jump=self.splice_jump, stage_actions=list(self.stage_actions),
            stage_misses=list(self.stage_misses),
        )


@dataclass(frozen=True)
class ShootingSchedule:
    """Settings for :func:`shoot_escape`.

    ``tau_list=None`` derives the continuation ladder from the arrival time
    found by the scan, in steps of ``tau_step / rate`` where ``rate`` is the
    slowest approach rate at the target.  ``eta`` and ``target_tol`` default
    to ``1e-5 * max(1, |q_source|)`` and ``1e-3 * max(1, |q_target|)``.  The
    attainable miss is about the square root of the energy drift, since any
    residual ``H`` forces an unstable component ``~ H / miss`` at the target.
    """

    tau_list: tuple | None = None
    eta: float | None = None
    rtol: float = 1e-10
    atol: float = 1e-12
    max_iter: int = 40
    target_tol: float | None = None
    n_scan: int = 720
    scan_horizon: float | None = None
    n_candidates: int = 6
    tau_step: float = 0.5
    window_points: int = 21
    max_steps: int = 50_000

    def __post_init__(self):
        if self.tau_list is not None:
            taus = tuple(float(t) for t in self.tau_list)
            if not taus or any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
                raise PreconditionError("tau_list must be positive and strictly increasing")
            object.__setattr__(self, "tau_list", taus)
        if self.eta is not None and not self.eta > 0:
            raise PreconditionError("eta must be > 0")
        if self.target_tol is not None and not self.target_tol > 0:
            raise PreconditionError("target_tol must be > 0")
        if self.n_scan < 8 or self.max_iter < 1:
            raise PreconditionError("n_scan must be >= 8 and max_iter >= 1")

    @property
    def integrator_tol(self):
        return self.rtol, self.atol


# --- Hamiltonian and flow ------------------------------------------------------


def hamiltonian(params, s: PhasePoint) -> float:
    return float(s.p @ s.p + s.p @ force(params, s.q))


def hamiltonian_array(params, q, p):
    return np.einsum("...i,...i->...", p, p) + np.einsum("...i,...i->...", p, force(params, q))


def flow_rhs(params, s: PhasePoint):
    """Return ``(dq/dt, dp/dt)``."""
    f = force(params, s.q)
    return 2.0 * s.p + f, -jacobian(params, s.q).T @ s.p


def _coeffs(params):
    return float(params.gamma), float(params.delta), float(params.epsilon), float(params.cubic)


def _run(params, y0, tau, rtol, atol, r_max, max_steps):
    g, d, e, k = _coeffs(params)
    return _integrate.integrate(np.asarray(y0, dtype=float), float(tau), g, d, e, k, rtol, atol, r_max, max_steps)


def _raise_for_status(status, t_stop):
    if status == _integrate.STEP_UNDERFLOW:
        raise StiffIntegrationError(f"step size underflow at t={t_stop:.6g}", t_stop)
    if status == _integrate.BUFFER_FULL:
        raise StiffIntegrationError(f"step budget exhausted at t={t_stop:.6g}", t_stop)


def integrate_path(params, start: PhasePoint, tau, tol=(1e-10, 1e-12), max_steps=2_000_000) -> InstantonPath:
    """Integrate Hamilton's equations from ``start`` for a time ``tau``.

    Every accepted step of the adaptive Dormand-Prince 5(4) scheme is kept,
    together with ``S(t) = int p.dq/dt - H dt``.

    Raises
    ------
    StiffIntegrationError
        If the step size underflows (finite-time blow-up) or the step
        budget runs out.
    """
    if not tau > 0:
        raise PreconditionError("tau must be > 0")
    rtol, atol = tol
    y0 = np.concatenate([start.as_array(), [0.0]])
    ts, ys, status, t_stop = _run(params, y0, tau, rtol, atol, math.inf, max_steps)
    _raise_for_status(status, t_stop)
    q, p = ys[:, :2], ys[:, 2:4]
    h = hamiltonian_array(params, q, p)
    path = InstantonPath(
        times=ts, q=q, p=p, action=ys[:, 4], theta=np.full(len(ts), math.nan),
        h_residual_max=float(np.max(np.abs(h))), source=None, target=None, tau=float(tau),
    )
    return path


# --- linearisation at fixed points -----------------------------------------------


def extended_linearization(params, q0) -> np.ndarray:
    """Jacobian of the Hamiltonian flow at ``(q0, 0)``: ``[[F, 2I], [0, -F^T]]``."""
    f_mat = jacobian(params, q0)
    top = np.hstack([f_mat, 2.0 * I2])
    bottom = np.hstack([np.zeros((2, 2)), -f_mat.T])
    return np.vstack([top, bottom])


def _real_basis(vals, vecs):
    """Real basis of the span of ``vecs`` (complex pairs become Re/Im)."""
    cols, used = [], np.zeros(len(vals), dtype=bool)
    for i, lam in enumerate(vals):
        if used[i]:
            continue
        used[i] = True
        v = vecs[:, i]
        if abs(lam.imag) > 1e-12 * max(1.0, abs(lam)):
            cols.extend([v.real, v.imag])
            j = int(np.argmin(np.abs(vals - np.conj(lam)) + used * 1e300))
            used[j] = True
        else:
            cols.append(v.real)
    return np.column_stack(cols)


def unstable_manifold_hessian(params, q0) -> np.ndarray:
    """Matrix ``Hq`` with ``p = Hq dq`` on the linear unstable manifold of ``(q0, 0)``.

    The unstable eigenvalues of the extended linearisation at a stable point
    are those of ``-F^T``; for an eigenvector ``dp`` with eigenvalue ``mu``
    the matching position is ``dq = 2 (mu - F)^{-1} dp``.
    """
    f_mat = jacobian(params, q0)
    mus, dps = np.linalg.eig(-f_mat.T)
    if not np.all(mus.real > 0):
        raise PreconditionError(f"point {np.asarray(q0).tolist()} is not a stable fixed point")
    dqs = np.column_stack([np.linalg.solve(mu * I2 - f_mat, 2.0 * dps[:, i]) for i, mu in enumerate(mus)])
    basis = _real_basis(mus, np.vstack([dqs, dps]))
    qpart, ppart = basis[:2], basis[2:]
    hq = ppart @ np.linalg.inv(qpart)
    return 0.5 * (hq + hq.T)


def _start_state(q0, hq, eta, phi):
    dq = eta * np.array([math.cos(phi), math.sin(phi)])
    dp = hq @ dq
    return np.array([q0[0] + dq[0], q0[1] + dq[1], dp[0], dp[1], 0.5 * dq @ dp])


def _slowest_rate(eigs):
    return float(np.min(np.abs(np.real(eigs))))


# --- shooting ---------------------------------------------------------------------


def _check_stable(params, fp: FixedPoint):
    eig = np.linalg.eigvals(jacobian(params, fp.q))
    if not np.all(eig.real < 0):
        raise PreconditionError(f"source {fp.label} is not stable")


class _Shooter:
    """Shared state of one source/target shooting problem."""

    def __init__(self, params, source_q, schedule: ShootingSchedule, target_q, use_momentum=True):
        self.params = params
        self.schedule = schedule
        self.q0 = np.asarray(source_q, dtype=float)
        self.qt = np.asarray(target_q, dtype=float)
        self.use_momentum = use_momentum
        self.eta = schedule.eta if schedule.eta is not None else 1e-5 * max(1.0, float(np.linalg.norm(self.q0)))
        self.hq = unstable_manifold_hessian(params, self.q0)
        scale = max(1.0, float(np.linalg.norm(self.q0)), float(np.linalg.norm(self.qt)))
        # observed escape paths stay within ~1.4 scale in both |q| and |p|
        self.r_max = 2.5 * scale
        self.rate_src = _slowest_rate(np.linalg.eigvals(jacobian(params, self.q0)))
        self._unstable_rows = None
        if use_momentum:
            vals, vecs = np.linalg.eig(extended_linearization(params, self.qt))
            self._unstable_rows = np.linalg.inv(vecs)[vals.real > 0]

    def run(self, phi, tau):
        s = self.schedule
        return _run(self.params, _start_state(self.q0, self.hq, self.eta, phi), tau, s.rtol, s.atol,
                    self.r_max, s.max_steps)

    def distance(self, ys):
        d = np.linalg.norm(ys[:, :2] - self.qt, axis=1)
        if self.use_momentum:
            d = d + np.linalg.norm(ys[:, 2:4], axis=1)
        return d

    def deviation(self, ys):
        return np.hstack([ys[:, :2] - self.qt, ys[:, 2:4]])

    def unstable_part(self, ys):
        """Norm of the unstable eigen-coordinates of the deviation from ``(q_t, 0)``."""
        return np.linalg.norm(self.deviation(ys) @ self._unstable_rows.T, axis=1)

    def miss(self, phi, tau):
        ts, ys, status, _ = self.run(phi, tau)
        if status != _integrate.OK:
            return 1e3 + self.r_max
        return float(self.distance(ys[-1:])[0])

    def unstable_miss(self, phi, tau):
        ts, ys, status, _ = self.run(phi, tau)
        if status != _integrate.OK:
            return 1e3 + self.r_max
        return float(self.unstable_part(ys[-1:])[0])

    def horizon(self, rate_target):
        if self.schedule.scan_horizon is not None:
            return self.schedule.scan_horizon
        return 2.0 * (math.log(1.0 / self.eta) + 10.0) / min(self.rate_src, rate_target)

    def scan(self, horizon):
        n = self.schedule.n_scan
        phis = 2 * math.pi * np.arange(n) / n
        best_d = np.empty(n)
        best_t = np.empty(n)
        for i, phi in enumerate(phis):
            ts, ys, _, _ = self.run(phi, horizon)
            d = self.distance(ys)
            j = int(np.argmin(d))
            best_d[i], best_t[i] = d[j], ts[j]
        return phis, best_d, best_t

    def candidates(self, phis, dist, arrival, threshold):
        n = len(phis)
        minima = [i for i in range(n) if dist[i] <= dist[i - 1] and dist[i] <= dist[(i + 1) % n] and dist[i] < threshold]
        minima.sort(key=lambda i: dist[i])
        return [(phis[i], arrival[i]) for i in minima[: self.schedule.n_candidates]]


def _refine_tau(sh: _Shooter, phi, t_arrive, dtau):
    """tau-continuation for one branch; returns the best stage found.

    Each stage minimises, over ``phi``, the unstable eigen-coordinates of the
    terminal deviation from ``(q_t, 0)``.  Their zero set is the target's
    stable manifold, so the minimum is sharp and the plain miss
    ``|q - q_t| + |p|`` then decays like ``exp(-rate tau)`` instead of
    stalling at the square root of the integration noise.  Brent's method
    brackets downhill from the previous optimum with a step equal to the
    last drift of ``phi``.  The sequence stops at the first stage whose miss
    does not improve, which marks the precision floor.
    """
    s = sh.schedule
    ladder = s.tau_list if s.tau_list is not None else [t_arrive + k * dtau for k in range(s.max_iter)]
    step = 2 * math.pi / s.n_scan / s.window_points
    best = None
    stages = []
    for tau in ladder[: s.max_iter]:
        obj = lambda x: sh.unstable_miss(x, tau)  # noqa: E731
        try:
            res = minimize_scalar(obj, bracket=(phi - step, phi + step), method="brent",
                                  options={"xtol": 1e-15, "maxiter": 200})
            x = float(res.x)
        except (RuntimeError, ValueError):
            x = phi
        ts, ys, status, _ = sh.run(x, tau)
        m = float(sh.distance(ys[-1:])[0]) if status == _integrate.OK else math.inf
        if best is not None and m >= best[0]:
            break
        stages.append((tau, float(ys[-1, 4]), m))
        best = (m, x, tau, ts, ys)
        step = max(abs(x - phi), 1e-15)
        phi = x
    return best, stages


def _linear_tail(params, target_q, deviation, n_samples=400, floor=1e-10):
    """Linearised stable motion from ``deviation`` toward ``(target_q, 0)``.

    Returns ``(dt, dq, dp, jump)`` where ``jump`` is the norm of the
    discarded unstable component.
    """
    lin = extended_linearization(params, target_q)
    vals, vecs = np.linalg.eig(lin)
    coeff = np.linalg.solve(vecs, deviation.astype(complex))
    stable = vals.real < 0
    jump = float(np.linalg.norm((vecs[:, ~stable] @ coeff[~stable]).real))
    kept = np.where(stable, coeff, 0.0)
    start = (vecs @ kept).real
    amp = float(np.linalg.norm(start))
    rate = _slowest_rate(vals[stable])
    scale = floor * max(1.0, float(np.linalg.norm(target_q)))
    t_end = max(math.log(max(amp, scale) / scale), 1.0) / rate
    t = np.linspace(0.0, t_end, n_samples)
    traj = (vecs @ (kept[:, None] * np.exp(np.outer(vals, t)))).real
    return t, traj[:2].T, traj[2:].T, jump


def _target_rate(params, target_q):
    """Slowest approach rate onto ``target_q`` along the escape manifold."""
    vals = np.linalg.eigvals(extended_linearization(params, target_q))
    return _slowest_rate(vals[vals.real < 0])


def _assemble(params, sh: _Shooter, best, stages, source, target, with_tail=True):
    m, phi, tau, ts, ys = best
    d = sh.distance(ys)
    if with_tail:
        # trade the discarded unstable part against the linearisation error
        scale = max(1.0, float(np.linalg.norm(sh.qt)))
        cut = int(np.argmin(sh.unstable_part(ys) + d * d / scale))
    else:
        cut = len(ts) - 1
    ts, ys = ts[: cut + 1], ys[: cut + 1]
    times, q, p, action = ts, ys[:, :2], ys[:, 2:4], ys[:, 4]
    jump = 0.0
    tail_start = len(times)
    if with_tail:
        dev = np.concatenate([q[-1] - sh.qt, p[-1]])
        t_tail, dq, dp, jump = _linear_tail(params, sh.qt, dev)
        if len(t_tail) > 1:
            p_tail = dp[1:]
            p2 = np.einsum("ij,ij->i", dp, dp)
            s_tail = action[-1] + cumulative_trapezoid(p2, t_tail, initial=0.0)[1:]
            times = np.concatenate([times, times[-1] + t_tail[1:]])
            q = np.vstack([q, sh.qt + dq[1:]])
            p = np.vstack([p, p_tail])
            action = np.concatenate([action, s_tail])
    h = hamiltonian_array(params, q, p)
    path = InstantonPath(
        times=times, q=q, p=p, action=action, theta=np.full(len(times), math.nan),
        h_residual_max=float(np.max(np.abs(h))), source=source, target=target, tau=float(times[-1]),
        target_q=sh.qt.copy(), miss=float(m), phi=phi, tail_start=tail_start, splice_jump=jump,
        stage_actions=[st[1] for st in stages], stage_misses=[st[2] for st in stages],
    )
    path.theta = theta_along(params, path)
    return path


def _default_tol(schedule, target_q):
    if schedule.target_tol is not None:
        return schedule.target_tol
    return 1e-3 * max(1.0, float(np.linalg.norm(target_q)))


def shoot_escape(params: KerrParams, source: FixedPoint, target: FixedPoint, schedule: ShootingSchedule | None = None,
                 check_regime=True) -> InstantonPath:
    """Minimal-action escape path from a stable ``source`` to a saddle ``target``.

    Raises
    ------
    PreconditionError
        If the source is not stable, the target is not a saddle or unstable
        point, or the parameters are not (robustly) bistable.
    ConvergenceError
        If no branch reaches the target within ``target_tol``; carries the
        best miss distance.
    """
    schedule = schedule or ShootingSchedule()
    if check_regime:
        regime = classify_regime(params)
        if regime.degenerate:
            raise PreconditionError("parameters sit on a regime boundary")
        if regime.tag != BISTABLE:
            raise PreconditionError(f"parameters are in the {regime.tag} regime, expected bistable")
    if source.kind != STABLE:
        raise PreconditionError(f"source {source.label} is {source.kind}, expected stable")
    if target.kind not in (SADDLE, UNSTABLE):
        raise PreconditionError(f"target {target.label} is {target.kind}, expected saddle or unstable")
    sh = _Shooter(params, source.q, schedule, target.q)
    rate_t = _target_rate(params, target.q)
    tol = _default_tol(schedule, target.q)
    phis, dist, arrival = sh.scan(sh.horizon(rate_t))
    threshold = 0.25 * max(1.0, float(np.linalg.norm(target.q - source.q)))
    cands = sh.candidates(phis, dist, arrival, threshold)
    best_path, best_miss = None, float(np.min(dist))
    for phi, t_arr in cands:
        best, stages = _refine_tau(sh, phi, t_arr, schedule.tau_step / rate_t)
        if best is None:
            continue
        best_miss = min(best_miss, best[0])
        if best[0] > tol:
            continue
        path = _assemble(params, sh, best, stages, source, target)
        if best_path is None or path.total_action < best_path.total_action:
            best_path = path
    if best_path is None:
        raise ConvergenceError(
            f"no escape branch from {source.label} to {target.label} reached tolerance {tol:.3g}",
            best_miss=best_miss,
        )
    return best_path


def minimal_escape(params: KerrParams, source: FixedPoint, schedule: ShootingSchedule | None = None) -> InstantonPath:
    """Least-action escape from ``source`` over both saddles.

    From the vacuum the two saddles are related by ``q -> -q`` and only one
    is shot.
    """
    fps = find_fixed_points(params)
    saddles = [fp for fp in fps if fp.kind == SADDLE]
    if not saddles:
        raise PreconditionError("no saddle points at these parameters")
    if source.label == VACUUM:
        saddles = saddles[:1]
    paths, errors = [], []
    for sd in saddles:
        try:
            paths.append(shoot_escape(params, source, sd, schedule))
        except ConvergenceError as exc:
            errors.append(exc)
    if not paths:
        raise ConvergenceError(f"no escape from {source.label} converged",
                               best_miss=min(e.best_miss for e in errors))
    return min(paths, key=lambda pth: pth.total_action)


def _origin(params) -> FixedPoint:
    eig = np.linalg.eigvals(jacobian(params, np.zeros(2)))
    kind = STABLE if np.all(eig.real < 0) else (UNSTABLE if np.all(eig.real > 0) else SADDLE)
    return FixedPoint(np.zeros(2), kind, eig, VACUUM)


def shoot_to_point(params, q_f, source: FixedPoint | None = None, schedule: ShootingSchedule | None = None) -> InstantonPath:
    """Least-action path from a stable ``source`` (default: the origin) to an arbitrary point.

    Both ``phi`` and the arrival time are free, so each branch found by the
    scan is polished with a two-dimensional root solve of ``q(tau) = q_f``.
    """
    schedule = schedule or ShootingSchedule()
    source = source or _origin(params)
    _check_stable(params, source)
    q_f = np.asarray(q_f, dtype=float)
    sh = _Shooter(params, source.q, schedule, q_f, use_momentum=False)
    tol = schedule.target_tol if schedule.target_tol is not None else 1e-9 * max(1.0, float(np.linalg.norm(q_f)))
    phis, dist, arrival = sh.scan(sh.horizon(sh.rate_src))
    cands = sh.candidates(phis, dist, arrival, 0.5 * max(1.0, float(np.linalg.norm(q_f))))

    def residual(x):
        ts, ys, status, _ = sh.run(x[0], max(x[1], 1e-6))
        return ys[-1, :2] - q_f

    best_path, best_miss = None, float(np.min(dist))
    for phi, t_arr in cands:
        sol = root(residual, [phi, t_arr], method="hybr", options={"xtol": 1e-13})
        phi_s, tau_s = float(sol.x[0]), float(sol.x[1])
        if not tau_s > 0:
            continue
        ts, ys, status, _ = sh.run(phi_s, tau_s)
        miss = float(np.linalg.norm(ys[-1, :2] - q_f))
        best_miss = min(best_miss, miss)
        if miss > tol or status != _integrate.OK:
            continue
        path = _assemble(params, sh, (miss, phi_s, tau_s, ts, ys), [], source, None, with_tail=False)
        if best_path is None or path.total_action < best_path.total_action:
            best_path = path
    if best_path is None:
        raise ConvergenceError(f"no branch reached q_f={q_f.tolist()} within {tol:.3g}", best_miss=best_miss)
    return best_path


# --- numerical phase boundary ---------------------------------------------------


def escape_actions(params: KerrParams, schedule: ShootingSchedule | None = None):
    """Minimal escape actions ``(S_vacuum, S_bright)`` at bistable parameters."""
    fps = find_fixed_points(params)
    s_vac = minimal_escape(params, fps[VACUUM], schedule).total_action
    s_bright = minimal_escape(params, fps["bright_plus"], schedule).total_action
    return s_vac, s_bright


def equal_action_epsilon(delta, gamma=1.0, schedule=None, step=0.1, xtol=1e-4) -> BoundaryPoint:
    """Drive strength at which vacuum and bright escape actions coincide.

    ``S_vacuum - S_bright`` falls with ``epsilon``, so a bracket is found by
    stepping from the middle of the bistable strip (``step`` is a fraction of
    its width) towards the sign change; Brent's method then refines it to
    ``xtol * gamma``.  The residual is the action difference at the root.

    Raises
    ------
    NoRootError
        If no sign change is found inside the strip.
    """
    lo, hi = bistable_strip(delta, gamma)

    def gap(frac):
        eps = lo + frac * (hi - lo)
        s_vac, s_bright = escape_actions(KerrParams(gamma=gamma, delta=delta, epsilon=eps), schedule)
        return s_vac - s_bright

    a, fa = 0.5, gap(0.5)
    direction = 1.0 if fa > 0 else -1.0
    while True:
        b = a + direction * step
        if not 0.0 < b < 1.0:
            raise NoRootError(f"escape actions do not cross inside the bistable strip at delta={delta}")
        fb = gap(b)
        if fa * fb <= 0:
            break
        a, fa = b, fb
    lo_f, hi_f = sorted((a, b))
    frac = brentq(gap, lo_f, hi_f, xtol=xtol * gamma / (hi - lo))
    eps = lo + frac * (hi - lo)
    return BoundaryPoint(delta, eps, gamma, EQUAL_ACTION, gap(frac))


# --- diagnostics along paths ----------------------------------------------------


def _signed_angle(f, v):
    cross = f[:, 0] * v[:, 1] - f[:, 1] * v[:, 0]
    dot = np.einsum("ij,ij->i", f, v)
    return np.arctan2(cross, dot)


def _extrapolate(t, y, t0):
    coef = np.polyfit(t - t0, y, 1)
    return float(np.polyval(coef, 0.0))


def theta_along(params, path: InstantonPath, singular_tol=1e-12) -> np.ndarray:
    """Constraint angle from ``f(q)`` to ``dq/dt``, unwrapped in time.

    On the linear tail ``f`` and ``dq/dt`` are taken from the linearisation
    at the target, which avoids cancellation in ``f(q_target + dq)``.  The
    first and last samples are extrapolated from their five neighbours.

    Raises
    ------
    SingularPointError
        If an interior sample has ``|f| < singular_tol``.
    """
    n = len(path.times)
    if n < 7:
        raise PreconditionError("path too short to reconstruct theta")
    q, p = path.q, path.p
    f = force(params, q)
    if path.tail_start < n and path.target_q is not None:
        f_mat = jacobian(params, path.target_q)
        dq = q[path.tail_start:] - path.target_q
        f[path.tail_start:] = dq @ f_mat.T
    qdot = 2.0 * p + f
    inner = slice(1, n - 1)
    fnorm = np.linalg.norm(f[inner], axis=1)
    if np.any(fnorm < singular_tol):
        i = int(np.argmin(fnorm)) + 1
        raise SingularPointError(f"|f| = {fnorm[i - 1]:.3e} at sample {i} (t={path.times[i]:.6g})")
    theta = np.empty(n)
    theta[inner] = np.unwrap(_signed_angle(f[inner], qdot[inner]))
    # branch choice: start in [0, 2 pi), the range of the stationary angle
    theta[inner] -= 2 * math.pi * math.floor(theta[1] / (2 * math.pi))
    t = path.times
    theta[0] = _extrapolate(t[1:6], theta[1:6], t[0])
    theta[-1] = _extrapolate(t[-6:-1], theta[-6:-1], t[-1])
    return theta


def action_of(path: InstantonPath) -> float:
    return path.total_action


def momentum_action(path: InstantonPath) -> float:
    """``S(0) + int |p|^2 dt`` by the trapezoid rule on the stored samples."""
    p2 = np.einsum("ij,ij->i", path.p, path.p)
    return float(path.action[0] + trapezoid(p2, path.times))


def write_path_csv(params, path: InstantonPath, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PATH_COLUMNS)
    h = path.hamiltonian_values(params)
    for i in range(len(path.times)):
        writer.writerow([repr(float(v)) for v in (path.times[i], *path.q[i], *path.p[i], path.action[i], path.theta[i], h[i])])
