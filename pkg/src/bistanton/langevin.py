"""Euler-Maruyama sampling of the classical Langevin process

    dq = f(q) dt + sqrt(2 u) dW,

whose stationary density at small ``u`` is ``~ exp(-S/u)``.

Each trajectory owns an independent random stream spawned from
``(seed, trajectory index)``; noise is drawn in blocks per stream and the
compiled kernel consumes it.  Statistics are accumulated per trajectory and
reduced in a fixed order, so results depend only on the configuration.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import InstabilityError, PreconditionError
from .model import force

BLOWUP_RADIUS = 1e6
N_BATCHES = 16
_CHUNK = 4096


@dataclass(frozen=True)
class LangevinConfig:
    dt: float = 1e-3
    n_steps: int = 100_000
    n_traj: int = 16
    burn_in: int = 10_000
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise PreconditionError("dt must be > 0")
        if self.n_traj < 1:
            raise PreconditionError("n_traj must be >= 1")
        if not self.n_steps > self.burn_in >= 0:
            raise PreconditionError("n_steps must exceed burn_in >= 0")
        if self.record_stride < 1:
            raise PreconditionError("record_stride must be >= 1")


@dataclass
class SteadyStats:
    mean_q: np.ndarray
    covariance: np.ndarray
    mean_abs_q2: float
    photon_estimate: float
    standard_errors: dict
    n_samples: int
    n_effective: float
    histogram: "Histogram | None" = None

    def to_json(self, **kwargs) -> str:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        d = {k: clean(v) for k, v in asdict(self).items() if k != "histogram"}
        return json.dumps(d, **kwargs)


@dataclass
class Histogram:
    x_edges: np.ndarray
    y_edges: np.ndarray
    density: np.ndarray  # shape (nx, ny), integrates to the in-range fraction

    def write_csv(self, fh):
        xc = 0.5 * (self.x_edges[1:] + self.x_edges[:-1])
        yc = 0.5 * (self.y_edges[1:] + self.y_edges[:-1])
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("x", "y", "density"))
        for i, x in enumerate(xc):
            for j, y in enumerate(yc):
                writer.writerow((repr(float(x)), repr(float(y)), repr(float(self.density[i, j]))))


@dataclass
class FirstPassageStats:
    """Escape times; censored runs carry ``nan`` in ``times``."""

    times: np.ndarray
    n_censored: int
    horizon: float
    u: float
    extra: dict = field(default_factory=dict)

    @property
    def n_escaped(self) -> int:
        return int(np.sum(np.isfinite(self.times)))

    @property
    def mean_time(self) -> float:
        """Exponential-law estimate ``(sum of observed times) / (number of escapes)``.

        Censored runs contribute their full horizon, which removes the
        downward bias of simply dropping them.
        """
        if self.n_escaped == 0:
            return math.inf
        observed = np.nansum(self.times) + self.n_censored * self.horizon
        return float(observed / self.n_escaped)

    @property
    def log_mean_time(self) -> float:
        return math.log(self.mean_time)

    def mean_time_interval(self, z=1.96):
        """Approximate confidence interval from the exponential law (delta method on log)."""
        k = self.n_escaped
        if k == 0:
            return (math.inf, math.inf)
        half = z / math.sqrt(k)
        return (self.mean_time * math.exp(-half), self.mean_time * math.exp(half))


def em_step(params, q, dt, noise, u=None):
    """One Euler-Maruyama step ``q + f(q) dt + sqrt(2 u dt) noise``."""
    u = params.u if u is None else u
    q = np.asarray(q, dtype=float)
    return q + force(params, q) * dt + math.sqrt(2.0 * u * dt) * np.asarray(noise, dtype=float)


# --- compiled kernels --------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _drift(x, y, g, d, e, k):
    de = d + k * (x * x + y * y)
    return -g * x + de * y - e * y, -g * y - de * x - e * x


@numba.njit(cache=True)
def _steady_chunk(q, noise, step0, dt, g, d, e, k, amp, burn_in, stride, sums, hist, x0, y0, hx, hy, bad):
    n_traj, n_chunk = noise.shape[0], noise.shape[1]
    nx, ny = hist.shape[1], hist.shape[2]
    for i in range(n_traj):
        x, y = q[i, 0], q[i, 1]
        for s in range(n_chunk):
            fx, fy = _drift(x, y, g, d, e, k)
            x = x + fx * dt + amp * noise[i, s, 0]
            y = y + fy * dt + amp * noise[i, s, 1]
            if not (x * x + y * y < 1e12):
                bad[i] = step0 + s + 1
                break
            n = step0 + s + 1
            if n > burn_in and (n - burn_in) % stride == 0:
                sums[i, 0] += 1.0
                sums[i, 1] += x
                sums[i, 2] += y
                sums[i, 3] += x * x
                sums[i, 4] += x * y
                sums[i, 5] += y * y
                if nx > 0:
                    ix = int(math.floor((x - x0) / hx))
                    iy = int(math.floor((y - y0) / hy))
                    if 0 <= ix < nx and 0 <= iy < ny:
                        hist[i, ix, iy] += 1.0
        q[i, 0], q[i, 1] = x, y


@numba.njit(cache=True)
def _passage_chunk(q, noise, step0, dt, g, d, e, k, amp, cx, cy, r2, hit_step, bad):
    n_traj, n_chunk = noise.shape[0], noise.shape[1]
    for i in range(n_traj):
        if hit_step[i] >= 0 or bad[i] > 0:
            continue
        x, y = q[i, 0], q[i, 1]
        for s in range(n_chunk):
            fx, fy = _drift(x, y, g, d, e, k)
            x = x + fx * dt + amp * noise[i, s, 0]
            y = y + fy * dt + amp * noise[i, s, 1]
            if not (x * x + y * y < 1e12):
                bad[i] = step0 + s + 1
                break
            if (x - cx) ** 2 + (y - cy) ** 2 <= r2:
                hit_step[i] = step0 + s + 1
                break
        q[i, 0], q[i, 1] = x, y


def _streams(seed, n_traj):
    children = np.random.SeedSequence(seed).spawn(n_traj)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _noise_block(streams, n):
    return np.stack([rng.standard_normal((n, 2)) for rng in streams])


def _coeffs(params):
    return float(params.gamma), float(params.delta), float(params.epsilon), float(params.cubic)


def _initial(start, n_traj):
    q = np.empty((n_traj, 2))
    q[:] = np.asarray(start, dtype=float)
    return q


def _raise_blowup(bad, dt):
    idx = int(np.argmax(bad > 0))
    raise InstabilityError(
        f"trajectory {idx} exceeded |q| = {BLOWUP_RADIUS:g} at step {int(bad[idx])}; try a smaller dt (now {dt:g})"
    )


def sample_steady_state(params, cfg: LangevinConfig, start=(0.0, 0.0), hist_range=None, hist_bins=64) -> SteadyStats:
    """Ensemble statistics of ``q`` after ``burn_in`` steps.

    ``hist_range=((xmin, xmax), (ymin, ymax))`` additionally accumulates a
    normalised 2D histogram.  Standard errors come from splitting the
    trajectories into up to 16 batches.
    """
    u = params.u
    if not u > 0:
        raise PreconditionError("steady-state sampling needs u > 0")
    g, d, e, k = _coeffs(params)
    amp = math.sqrt(2.0 * u * cfg.dt)
    streams = _streams(cfg.seed, cfg.n_traj)
    q = _initial(start, cfg.n_traj)
    sums = np.zeros((cfg.n_traj, 6))
    if hist_range is not None:
        (xa, xb), (ya, yb) = hist_range
        hist = np.zeros((cfg.n_traj, hist_bins, hist_bins))
        hx, hy = (xb - xa) / hist_bins, (yb - ya) / hist_bins
    else:
        xa = ya = 0.0
        hx = hy = 1.0
        hist = np.zeros((cfg.n_traj, 0, 0))
    bad = np.zeros(cfg.n_traj, dtype=np.int64)
    step = 0
    while step < cfg.n_steps:
        n = min(_CHUNK, cfg.n_steps - step)
        _steady_chunk(q, _noise_block(streams, n), step, cfg.dt, g, d, e, k, amp,
                      cfg.burn_in, cfg.record_stride, sums, hist, xa, ya, hx, hy, bad)
        if np.any(bad):
            _raise_blowup(bad, cfg.dt)
        step += n
    return _reduce(params, sums, hist, hist_range, hist_bins)


def _moments(s):
    n = s[0]
    mx, my = s[1] / n, s[2] / n
    cxx = s[3] / n - mx * mx
    cxy = s[4] / n - mx * my
    cyy = s[5] / n - my * my
    return np.array([mx, my, cxx, cxy, cyy, (s[3] + s[5]) / n])


def _reduce(params, sums, hist, hist_range, hist_bins) -> SteadyStats:
    total = np.sum(sums, axis=0)
    m = _moments(total)
    n_traj = sums.shape[0]
    n_b = min(N_BATCHES, n_traj)
    names = ("mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy", "mean_abs_q2")
    if n_b >= 2:
        batches = np.array([_moments(np.sum(b, axis=0)) for b in np.array_split(sums, n_b)])
        se = np.std(batches, axis=0, ddof=1) / math.sqrt(n_b)
    else:
        se = np.full(6, math.nan)
    errors = dict(zip(names, se.tolist()))
    n_eff = float(m[2] / se[0] ** 2) if se[0] > 0 else math.nan
    histogram = None
    if hist_range is not None:
        (xa, xb), (ya, yb) = hist_range
        counts = np.sum(hist, axis=0)
        area = (xb - xa) * (yb - ya) / hist_bins**2
        histogram = Histogram(np.linspace(xa, xb, hist_bins + 1), np.linspace(ya, yb, hist_bins + 1),
                              counts / (total[0] * area))
    photon = params.gamma * m[5] / (4.0 * params.u)
    errors["photon_estimate"] = float(params.gamma * se[5] / (4.0 * params.u))
    return SteadyStats(
        mean_q=m[:2].copy(),
        covariance=np.array([[m[2], m[3]], [m[3], m[4]]]),
        mean_abs_q2=float(m[5]),
        photon_estimate=float(photon),
        standard_errors=errors,
        n_samples=int(total[0]),
        n_effective=n_eff,
        histogram=histogram,
    )


def first_passage(params, start, center, radius, cfg: LangevinConfig, u=None) -> FirstPassageStats:
    """First hitting times of the disc ``|q - center| <= radius``.

    Trajectories still outside after ``cfg.n_steps`` are censored and
    counted, never dropped.  ``cfg.burn_in`` is ignored.
    """
    u = params.u if u is None else u
    if not u > 0:
        raise PreconditionError("first passage needs u > 0")
    start = np.asarray(start, dtype=float)
    center = np.asarray(center, dtype=float)
    horizon = cfg.n_steps * cfg.dt
    if np.linalg.norm(start - center) <= radius:
        return FirstPassageStats(np.zeros(cfg.n_traj), 0, horizon, u)
    g, d, e, k = _coeffs(params)
    amp = math.sqrt(2.0 * u * cfg.dt)
    streams = _streams(cfg.seed, cfg.n_traj)
    q = _initial(start, cfg.n_traj)
    hit = np.full(cfg.n_traj, -1, dtype=np.int64)
    bad = np.zeros(cfg.n_traj, dtype=np.int64)
    step = 0
    while step < cfg.n_steps and np.any(hit < 0):
        n = min(_CHUNK, cfg.n_steps - step)
        _passage_chunk(q, _noise_block(streams, n), step, cfg.dt, g, d, e, k, amp,
                       float(center[0]), float(center[1]), float(radius) ** 2, hit, bad)
        if np.any(bad):
            _raise_blowup(bad, cfg.dt)
        step += n
    times = np.where(hit >= 0, hit * cfg.dt, math.nan)
    return FirstPassageStats(times, int(np.sum(hit < 0)), horizon, u)


def lyapunov_covariance(params, u=None) -> np.ndarray:
    """Stationary covariance of the linear process: solves ``A C + C A^T + 2 u I = 0``."""
    u = params.u if u is None else u
    a = params.linear_matrix()
    return solve_continuous_lyapunov(a, -2.0 * u * np.eye(2))
