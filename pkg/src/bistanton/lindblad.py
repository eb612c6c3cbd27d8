"""Truncated-Fock Lindblad solver for the driven Kerr mode.

    H = delta a^dag a + (U/2) a^dag^2 a^2 + (epsilon/2)(a^dag^2 + a^2),   L = sqrt(2 gamma) a

``U`` here is the Hamiltonian interaction.  The classical noise strength
of :mod:`bistanton.langevin` is ``u = U / 2``; with that identification the
mean-field photon number ``gamma |q|^2 / (2 U)`` equals
:func:`bistanton.model.photon_number_estimate`.

Density matrices are vectorised column-major, ``vec(A rho B) = (B^T kron A) vec(rho)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigs, splu

from .approx import LINDBLAD, BoundaryPoint, bistable_strip
from .errors import ConvergenceError, NoRootError, PreconditionError
from .meanfield import find_fixed_points
from .model import KerrParams

SWEEP_COLUMNS = ("delta", "epsilon", "U", "N_final", "photon_number", "gap", "tail_mass")


def classical_u(U: float) -> float:
    return 0.5 * U


@dataclass(frozen=True)
class FockSpace:
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise PreconditionError("cutoff must be >= 1")

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    @property
    def lowering(self) -> sp.csr_matrix:
        return sp.diags(np.sqrt(np.arange(1.0, self.dim)), 1, format="csr")

    @property
    def number(self) -> sp.csr_matrix:
        return sp.diags(np.arange(float(self.dim)), 0, format="csr")


@dataclass
class SteadyDensity:
    rho: np.ndarray
    photon_number: float
    tail_mass: float
    liouvillian_residual: float
    cutoff: int

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))))

    def expect(self, op) -> complex:
        op = op.toarray() if sp.issparse(op) else np.asarray(op)
        return complex(np.trace(op @ self.rho))


def hamiltonian_matrix(params: KerrParams, space: FockSpace, U: float) -> sp.csr_matrix:
    a = space.lowering
    ad = a.T.tocsr()
    ad2 = ad @ ad
    a2 = a @ a
    return (params.delta * (ad @ a) + 0.5 * U * (ad2 @ a2) + 0.5 * params.epsilon * (ad2 + a2)).tocsr()


def build_liouvillian(params: KerrParams, N: int, U: float) -> sp.csr_matrix:
    """Sparse superoperator of ``-i[H, rho] + 2 gamma (a rho a^dag - {a^dag a, rho}/2)``."""
    if N < 2:
        raise PreconditionError("cutoff N must be >= 2")
    if U < 0:
        raise PreconditionError("U must be >= 0")
    space = FockSpace(N)
    eye = sp.identity(space.dim, format="csr")
    h = hamiltonian_matrix(params, space, U)
    a = space.lowering
    n_op = (a.T @ a).tocsr()
    coherent = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    # a is real, so conj(a^dag)^T = a
    jump = 2.0 * params.gamma * (sp.kron(a, a) - 0.5 * sp.kron(eye, n_op) - 0.5 * sp.kron(n_op.T, eye))
    return (coherent + jump).tocsr()


def _trace_row(dim):
    return np.eye(dim).reshape(-1, order="F")


def _solve_steady(lv: sp.csr_matrix, dim: int):
    """Null vector with unit trace: the first equation is replaced by ``tr rho = 1``."""
    tr = _trace_row(dim)
    bordered = lv.tolil(copy=True)
    bordered[0, :] = tr
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    x = splu(bordered.tocsc()).solve(rhs)
    return x


def _density(x, dim, lv):
    rho = x.reshape(dim, dim, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    residual = float(np.max(np.abs(lv @ rho.reshape(-1, order="F"))))
    pops = np.real(np.diag(rho))
    photon = float(np.dot(np.arange(dim), pops))
    top = int(math.ceil(0.9 * dim))
    tail = float(np.sum(pops[top:]))
    return rho, photon, tail, residual


def steady_state_at(params: KerrParams, N: int, U: float) -> SteadyDensity:
    """Steady state at a fixed cutoff, without convergence checks."""
    lv = build_liouvillian(params, N, U)
    dim = N + 1
    rho, photon, tail, residual = _density(_solve_steady(lv, dim), dim, lv)
    return SteadyDensity(rho, photon, tail, residual, N)


def mean_field_photons(params: KerrParams, U: float) -> float:
    """Largest mean-field photon number ``gamma |q|^2 / (2 U)`` over all fixed points."""
    fps = find_fixed_points(params)
    r2 = max(fp.radius**2 for fp in fps)
    if r2 == 0.0:
        return 0.0
    if not U > 0:
        raise PreconditionError("mean-field photon number of a bright state needs U > 0")
    return params.gamma * r2 / (2.0 * U)


def initial_cutoff(params: KerrParams, U: float) -> int:
    return int(math.ceil(3.0 * mean_field_photons(params, U) + 20))


def steady_state(params: KerrParams, U: float, tol=1e-4, N=None, N_max=300) -> SteadyDensity:
    """Steady state with automatic cutoff escalation (25% per step).

    Accepts once the top-10% population is below ``tol`` and the photon
    number changed by less than ``tol`` (relative) from the previous cutoff.

    Raises
    ------
    ConvergenceError
        At ``N_max`` without convergence; ``best_miss`` is the last tail mass.
    """
    n_cur = max(N or initial_cutoff(params, U), 2)
    prev = None
    while True:
        cur = steady_state_at(params, n_cur, U)
        if prev is not None and cur.tail_mass < tol:
            scale = max(abs(cur.photon_number), 1e-12)
            if abs(cur.photon_number - prev.photon_number) <= tol * max(scale, 1.0):
                return cur
        if n_cur >= N_max:
            raise ConvergenceError(
                f"cutoff N={n_cur} reached N_max without convergence (tail mass {cur.tail_mass:.3e})",
                best_miss=cur.tail_mass,
            )
        prev = cur
        n_cur = min(N_max, int(math.ceil(1.25 * n_cur)))


def liouvillian_gap(params: KerrParams, N: int, U: float, k=6, dense_below=64, sector=None) -> float:
    """Smallest nonzero ``|Re lambda|`` of the Liouvillian.

    Small spaces use a dense eigensolver; larger ones shift-invert near 0.

    The pair drive conserves photon-number parity, so ``rho_mn`` with even
    and odd ``m - n`` evolve separately.  ``sector="even"`` restricts to the
    block holding the steady state.  Its slowest mode is the switching
    between vacuum and bright states, which has a sharp minimum at the phase
    boundary.  The full spectrum is usually limited by tunnelling between
    the two bright states instead (odd block), which keeps shrinking as the
    drive grows.
    """
    lv = build_liouvillian(params, N, U)
    if sector is not None:
        if sector not in ("even", "odd"):
            raise PreconditionError(f"unknown parity sector {sector!r}")
        idx = np.arange(lv.shape[0])
        diff = idx % (N + 1) - idx // (N + 1)
        keep = np.flatnonzero(diff % 2 == (0 if sector == "even" else 1))
        lv = lv.tocsr()[keep][:, keep]
    dim2 = lv.shape[0]
    if dim2 <= dense_below**2 and dim2 <= 4096:
        vals = np.linalg.eigvals(lv.toarray())
    else:
        sigma = -1e-6 * params.gamma
        try:
            vals = eigs(lv.tocsc(), k=k, sigma=sigma, which="LM", return_eigenvectors=False)
        except (ArpackNoConvergence, ArpackError) as exc:
            raise ConvergenceError(f"shift-invert eigensolve failed: {exc}") from exc
    rates = np.sort(np.abs(vals.real))
    if sector == "odd":
        # no steady state in this block
        return float(rates[0])
    zero_tol = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
    nonzero = rates[rates > zero_tol]
    if nonzero.size == 0:
        raise ConvergenceError("no nonzero eigenvalue found near the origin")
    return float(nonzero[0])


def gap_minimum_epsilon(delta, U, gamma=1.0, n_grid=15, stages=2, tol=1e-4, N_max=300) -> float:
    """Drive strength minimising the even-sector gap across the bistable strip.

    Grid scan with ``stages`` zoom-ins onto the neighbours of the minimum.
    """
    lo, hi = bistable_strip(delta, gamma)
    pad = 0.01 * (hi - lo)
    a, b = lo + pad, hi - pad
    best = math.nan
    for _ in range(stages + 1):
        eps = np.linspace(a, b, n_grid)
        gaps = []
        for e in eps:
            params = KerrParams(gamma=gamma, delta=delta, epsilon=float(e))
            st = steady_state(params, U, tol=tol, N_max=N_max)
            gaps.append(liouvillian_gap(params, st.cutoff, U, sector="even"))
        i = int(np.argmin(gaps))
        best = float(eps[i])
        a, b = eps[max(i - 1, 0)], eps[min(i + 1, n_grid - 1)]
    return best


@dataclass
class SweepPoint:
    delta: float
    epsilon: float
    U: float
    N_final: int
    photon_number: float
    gap: float
    tail_mass: float


def photon_sweep(delta, epsilons, U, gamma=1.0, tol=1e-4, with_gap=False, N_max=300) -> list:
    out = []
    for eps in epsilons:
        params = KerrParams(gamma=gamma, delta=delta, epsilon=float(eps))
        st = steady_state(params, U, tol=tol, N_max=N_max)
        gap = liouvillian_gap(params, st.cutoff, U) if with_gap else math.nan
        out.append(SweepPoint(delta, float(eps), U, st.cutoff, st.photon_number, gap, st.tail_mass))
    return out


def write_sweep_csv(points, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for pt in points:
        writer.writerow([repr(pt.delta), repr(pt.epsilon), repr(pt.U), pt.N_final, repr(pt.photon_number),
                         repr(pt.gap), repr(pt.tail_mass)])


def locate_numeric_boundary(delta, U, epsilon_range=None, gamma=1.0, n_grid=17, stages=3, tol=1e-4,
                            N_max=300) -> BoundaryPoint:
    """Drive strength of steepest photon-number rise, by three-stage grid refinement.

    Each stage evaluates the photon number on ``n_grid`` points, takes the
    largest finite-difference slope and zooms onto the two neighbouring
    intervals.  ``residual`` holds the final grid spacing.

    Raises
    ------
    NoRootError
        If the range leaves the bistable strip or the response is flat.
    """
    lo, hi = gamma, math.hypot(gamma, delta)
    if epsilon_range is None:
        epsilon_range = (lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo))
    a, b = map(float, epsilon_range)
    if not (delta < 0 and lo < a < b < hi):
        raise NoRootError(f"epsilon range {epsilon_range} is not inside the bistable strip ({lo}, {hi:.6g})")
    best_eps, best_slope = math.nan, 0.0
    for _ in range(stages):
        grid = np.linspace(a, b, n_grid)
        pts = photon_sweep(delta, grid, U, gamma, tol, N_max=N_max)
        n = np.array([p.photon_number for p in pts])
        slopes = np.diff(n) / np.diff(grid)
        j = int(np.argmax(slopes))
        best_slope = float(slopes[j])
        best_eps = 0.5 * (grid[j] + grid[j + 1])
        h = grid[1] - grid[0]
        a, b = max(grid[0], grid[j] - h), min(grid[-1], grid[j + 1] + h)
    scale = mean_field_photons(KerrParams(gamma=gamma, delta=delta, epsilon=b), U)
    if not best_slope > 1e-6 * max(scale, 1.0):
        raise NoRootError(f"photon number has no rising inflection on the range (max slope {best_slope:.3e})")
    return BoundaryPoint(delta, best_eps, gamma, LINDBLAD, residual=float(b - a) / (n_grid - 1),
                         message=f"max slope {best_slope:.6g}")
