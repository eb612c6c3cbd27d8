"""PNG figures for the CLI ``--figures`` option.

Figures are built with the object-oriented :class:`matplotlib.figure.Figure`
API, so no pyplot state or GUI backend is involved and worker threads may
render concurrently.
"""

from __future__ import annotations

import math

import numpy as np
from matplotlib.figure import Figure

from .approx import local_stationary_angle
from .meanfield import find_fixed_points

_REGIME_COLORS = {"vacuum": "#4477aa", "bistable": "#ee6677", "cat": "#228833", "error": "#bbbbbb"}
_METHOD_STYLE = {"analytic_eq11": ("-", "#cc3399"), "equal_action_numeric": ("o", "#333333"),
                 "lindblad_oracle": ("s", "#3388cc")}


def _save(fig, path):
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def regime_map(rows, path):
    """Scatter of the regime tag over the (delta, epsilon) grid."""
    fig = Figure(figsize=(5.0, 4.0), layout="constrained")
    ax = fig.add_subplot()
    for tag, color in _REGIME_COLORS.items():
        pts = [(r["delta"], r["epsilon"]) for r in rows if r["regime"] == tag]
        if pts:
            x, y = zip(*pts)
            ax.scatter(x, y, s=12, color=color, label=tag, marker="s", linewidths=0)
    ax.set_xlabel(r"$\delta$")
    ax.set_ylabel(r"$\epsilon$")
    if rows:
        ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def instanton_panels(params, inst, path):
    """Trajectory in the q plane, theta against the local stationary angle, and S(t)."""
    fig = Figure(figsize=(11.0, 3.6), layout="constrained")
    ax_q, ax_th, ax_s = fig.subplots(1, 3)
    ax_q.plot(inst.q[:, 0], inst.q[:, 1], color="k", lw=1.2)
    for fp in find_fixed_points(params):
        marker = "o" if fp.kind == "stable" else "x"
        ax_q.plot(*fp.q, marker, color="#cc3399", ms=6)
    ax_q.set_xlabel("$q_x$")
    ax_q.set_ylabel("$q_y$")
    ax_q.set_aspect("equal", adjustable="datalim")

    t = inst.times
    stationary = np.array([_stationary_or_nan(params, q) for q in inst.q])
    ax_th.plot(t, inst.theta, color="k", lw=1.2, label=r"$\theta(t)$")
    ax_th.plot(t, stationary, color="#3388cc", lw=1.0, ls="--", label=r"$\theta_s(q(t))$")
    ax_th.set_xlabel("t")
    ax_th.legend(fontsize=8)

    ax_s.plot(t, inst.action, color="k", lw=1.2)
    ax_s.set_xlabel("t")
    ax_s.set_ylabel("S")
    return _save(fig, path)


def _stationary_or_nan(params, q):
    try:
        return local_stationary_angle(params, q)
    except ValueError:
        return math.nan


def boundary_curves(points, path):
    fig = Figure(figsize=(5.0, 4.0), layout="constrained")
    ax = fig.add_subplot()
    methods = sorted({bp.method for bp in points})
    for m in methods:
        sel = sorted((bp.delta, bp.epsilon_star) for bp in points if bp.method == m and bp.ok)
        if not sel:
            continue
        style, color = _METHOD_STYLE.get(m, ("^", "#999999"))
        x, y = zip(*sel)
        ax.plot(x, y, style, color=color, label=m, ms=4)
    ax.set_xlabel(r"$\delta$")
    ax.set_ylabel(r"$\epsilon^*$")
    if methods:
        ax.legend(fontsize=8)
    return _save(fig, path)


def density_image(hist, path):
    fig = Figure(figsize=(4.6, 4.0), layout="constrained")
    ax = fig.add_subplot()
    mesh = ax.pcolormesh(hist.x_edges, hist.y_edges, hist.density.T, cmap="viridis", shading="flat")
    fig.colorbar(mesh, ax=ax, label="density")
    ax.set_xlabel("$q_x$")
    ax.set_ylabel("$q_y$")
    ax.set_aspect("equal")
    return _save(fig, path)


def photon_map(points, path):
    """Photon number over the sweep; a line plot when only one detuning is present."""
    fig = Figure(figsize=(5.0, 4.0), layout="constrained")
    ax = fig.add_subplot()
    deltas = sorted({pt.delta for pt in points})
    if len(deltas) <= 1:
        sel = sorted((pt.epsilon, pt.photon_number) for pt in points)
        if sel:
            x, y = zip(*sel)
            ax.plot(x, y, "o-", color="k", ms=3)
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel(r"$\langle n \rangle$")
    else:
        sc = ax.scatter([pt.delta for pt in points], [pt.epsilon for pt in points],
                        c=[pt.photon_number for pt in points], cmap="magma", marker="s", s=20)
        fig.colorbar(sc, ax=ax, label=r"$\langle n \rangle$")
        ax.set_xlabel(r"$\delta$")
        ax.set_ylabel(r"$\epsilon$")
    return _save(fig, path)


def populations(density, path):
    fig = Figure(figsize=(5.0, 3.4), layout="constrained")
    ax = fig.add_subplot()
    pops = np.real(np.diag(density.rho))
    ax.semilogy(np.arange(pops.size), np.clip(pops, 1e-18, None), color="k", lw=1.0)
    ax.set_xlabel("n")
    ax.set_ylabel(r"$\rho_{nn}$")
    return _save(fig, path)
