"""Command-line front end.

Every subcommand resolves its options (flags > ``--config`` file > defaults),
writes ``manifest.json`` into ``--out`` before computing, then emits CSV/JSON
results and rewrites the manifest with their SHA-256 checksums.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
non-convergence, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .approx import (ANALYTIC, EQUAL_ACTION, LINDBLAD, METHODS, BoundaryPoint, frozen_theta_action,
                     trace_boundary, write_boundary_csv)
from .errors import (ConvergenceError, DomainError, InstabilityError, NoRootError, PreconditionError,
                     SingularPointError, StiffIntegrationError)
from .instanton import ShootingSchedule, equal_action_epsilon, minimal_escape, shoot_escape, write_path_csv
from .langevin import LangevinConfig, lyapunov_covariance, sample_steady_state
from .lindblad import SweepPoint, liouvillian_gap, locate_numeric_boundary, steady_state, write_sweep_csv
from .meanfield import BISTABLE, SADDLE, VACUUM, classify_regime, find_fixed_points
from .model import KerrParams, OUParams

log = logging.getLogger("bistanton")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4
_NUMERIC_ERRORS = (ConvergenceError, NoRootError, StiffIntegrationError, InstabilityError, SingularPointError)

FIXED_POINT_LABELS = ("vacuum", "bright_plus", "bright_minus", "saddle_plus", "saddle_minus")
MEANFIELD_COLUMNS = ("delta", "epsilon", "gamma", "regime", "degenerate", "n_fixed_points") + tuple(
    f"{lab}_{suffix}" for lab in FIXED_POINT_LABELS
    for suffix in ("qx", "qy", "kind", "eig1_re", "eig1_im", "eig2_re", "eig2_im")
)
DIFFERENCE_COLUMNS = ("delta", "method_a", "method_b", "epsilon_a", "epsilon_b", "rel_diff")
POPULATION_COLUMNS = ("n", "population")


class UsageError(Exception):
    pass


# --- option table and config resolution -------------------------------------------


@dataclass(frozen=True)
class Option:
    name: str
    kind: type | str  # float, int, str or "flag"
    default: object = None
    help: str = ""
    required: bool = False
    choices: tuple | None = None

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")

    def convert(self, raw):
        if raw is None:
            return None
        if self.kind == "flag":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise UsageError(f"{self.name}: expected a boolean, got {raw!r}")
        try:
            value = self.kind(raw)
        except (TypeError, ValueError):
            raise UsageError(f"{self.name}: cannot parse {raw!r} as {self.kind.__name__}") from None
        if self.choices and value not in self.choices:
            raise UsageError(f"{self.name}: {value!r} is not one of {', '.join(self.choices)}")
        return value


COMMON = (
    Option("gamma", float, 1.0, "loss rate; sets the unit of all other rates"),
    Option("seed", int, 0, "base seed for stochastic subcommands"),
    Option("out", str, "bistanton-out", "output directory"),
    Option("threads", int, None, "worker pool size (default: $BISTANTON_THREADS, else all cores)"),
    Option("figures", "flag", False, "also render PNG figures next to the data"),
)
POINT = (
    Option("delta", float, None, "detuning delta/gamma", required=True),
    Option("epsilon", float, None, "two-photon drive epsilon/gamma", required=True),
)

COMMANDS = {
    "meanfield": (
        "regimes and fixed points over a (delta, epsilon) grid",
        (Option("grid", str, None, "delta/gamma grid 'min:max:step'", required=True),
         Option("epsilon-grid", str, None, "epsilon/gamma grid 'min:max:step'", required=True)),
    ),
    "instanton": (
        "minimal-action escape path from a stable state",
        POINT + (
            Option("source", str, "vacuum", "escape source", choices=("vacuum", "bright")),
            Option("target", str, None, "saddle label (default: the cheaper saddle)",
                   choices=("saddle_plus", "saddle_minus")),
            Option("eta", float, None, "initial offset from the source"),
            Option("target-tol", float, None, "accepted miss distance at the saddle"),
            Option("tau-list", str, None, "comma-separated continuation times (default: automatic)"),
            Option("n-scan", int, 720, "launch angles in the global scan"),
            Option("rtol", float, 1e-10, "integrator relative tolerance"),
            Option("atol", float, 1e-12, "integrator absolute tolerance"),
        ),
    ),
    "boundary": (
        "phase boundary epsilon*(delta) by one or more methods",
        (Option("grid", str, None, "delta/gamma grid 'min:max:step'", required=True),
         Option("methods", str, ANALYTIC, "comma-separated subset of " + ",".join(METHODS)),
         Option("u", float, None, "interaction U/gamma for lindblad_oracle"),
         Option("tol", float, 1e-4, "Fock cutoff tolerance for lindblad_oracle"),
         Option("n-max", int, 300, "largest Fock cutoff for lindblad_oracle")),
    ),
    "langevin": (
        "Euler-Maruyama steady-state statistics and density histogram",
        POINT + (
            Option("u", float, None, "noise strength u/gamma (variance 2u per component)", required=True),
            Option("model", str, "kerr", "force model", choices=("kerr", "ou")),
            Option("start", str, "0,0", "initial point 'x,y'"),
            Option("dt", float, 1e-3, "time step (units of 1/gamma)"),
            Option("steps", int, 200_000, "steps per trajectory"),
            Option("burn-in", int, 20_000, "discarded initial steps"),
            Option("traj", int, 32, "number of trajectories"),
            Option("stride", int, 1, "record every k-th step"),
            Option("bins", int, 64, "histogram bins per axis"),
            Option("extent", str, None, "histogram window 'xmin,xmax,ymin,ymax'"),
        ),
    ),
    "lindblad": (
        "truncated-Fock steady state of the quantum model",
        POINT + (
            Option("u", float, None, "interaction U/gamma", required=True),
            Option("cutoff", int, None, "initial Fock cutoff (default from the mean-field photon number)"),
            Option("tol", float, 1e-4, "tail-mass and photon-number tolerance"),
            Option("n-max", int, 300, "largest Fock cutoff"),
            Option("gap", "flag", False, "also compute the Liouvillian gap"),
        ),
    ),
    "sweep": (
        "Lindblad photon-number map over a (delta, epsilon) grid",
        (Option("grid", str, None, "delta/gamma grid 'min:max:step'", required=True),
         Option("epsilon-grid", str, None, "epsilon/gamma grid 'min:max:step'", required=True),
         Option("u", float, None, "interaction U/gamma", required=True),
         Option("tol", float, 1e-4, "tail-mass and photon-number tolerance"),
         Option("n-max", int, 300, "largest Fock cutoff"),
         Option("gap", "flag", False, "also compute the Liouvillian gap")),
    ),
}


def options_for(command):
    return COMMANDS[command][1] + COMMON


@dataclass
class RunConfig:
    command: str
    options: dict
    config_file: str | None = None

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def out_dir(self) -> Path:
        return Path(self.options["out"])

    def to_text(self) -> str:
        lines = [f"command={self.command}"]
        lines += [f"{k}={'' if v is None else v}" for k, v in sorted(self.options.items())]
        return "\n".join(lines) + "\n"


def read_config_file(path) -> dict:
    """Parse a flat ``key=value`` file, or take ``config.options`` from a manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        cfg = data.get("config", data)
        values = dict(cfg.get("options", {}))
        if "command" in cfg:
            values["command"] = cfg["command"]
        return {k: v for k, v in values.items() if v is not None}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if value:
            values[key.replace("-", "_")] = value
    return values


def _default_threads():
    env = os.environ.get("BISTANTON_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"BISTANTON_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def resolve(command, flags: dict, config_file=None) -> RunConfig:
    file_values = read_config_file(config_file) if config_file else {}
    file_cmd = file_values.pop("command", command)
    if file_cmd != command:
        raise UsageError(f"config file is for '{file_cmd}', not '{command}'")
    known = {opt.dest: opt for opt in options_for(command)}
    unknown = sorted(set(file_values) - set(known))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    resolved = {}
    for dest, opt in known.items():
        if flags.get(dest) is not None:
            value = opt.convert(flags[dest])
        elif dest in file_values:
            value = opt.convert(file_values[dest])
        else:
            value = opt.default
        if value is None and opt.required:
            raise UsageError(f"missing required option --{opt.name}")
        resolved[dest] = value
    if resolved["threads"] is None:
        resolved["threads"] = _default_threads()
    if resolved["threads"] < 1:
        raise UsageError("threads must be >= 1")
    return RunConfig(command, resolved, str(config_file) if config_file else None)


# --- parsing helpers ------------------------------------------------------------


def parse_grid(spec: str) -> np.ndarray:
    """``'min:max:step'`` (inclusive of ``max`` up to rounding) or a single value.

    ``max < min`` gives an empty grid.
    """
    parts = spec.split(":")
    try:
        nums = [float(x) for x in parts]
    except ValueError:
        raise UsageError(f"grid {spec!r}: expected 'min:max:step'") from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3:
        raise UsageError(f"grid {spec!r}: expected 'min:max:step'")
    lo, hi, step = nums
    if not all(math.isfinite(v) for v in nums) or not step > 0:
        raise UsageError(f"grid {spec!r}: step must be positive and all values finite")
    if hi < lo:
        return np.empty(0)
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if n > 1_000_000:
        raise UsageError(f"grid {spec!r} has {n} points")
    return np.round(lo + step * np.arange(n), 12)


def _floats(spec, count, what):
    try:
        vals = [float(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"{what} {spec!r}: expected {count} comma-separated numbers") from None
    if len(vals) != count:
        raise UsageError(f"{what} {spec!r}: expected {count} comma-separated numbers")
    return vals


def _num(x):
    return repr(float(x))


def _kerr(cfg) -> KerrParams:
    return KerrParams.from_ratios(cfg.delta, cfg.epsilon, gamma=cfg.gamma)


# --- output collection ----------------------------------------------------------


@dataclass
class Outputs:
    root: Path
    files: list = field(default_factory=list)

    def path(self, name) -> Path:
        self.files.append(name)
        return self.root / name

    def open(self, name):
        return open(self.path(name), "w", encoding="utf-8", newline="")

    def write_json(self, name, data):
        with self.open(name) as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(cfg: RunConfig, status, started, outputs: Outputs | None = None, extra=None):
    data = {
        "tool": "bistanton",
        "version": __version__,
        "config": {"command": cfg.command, "options": cfg.options, "config_file": cfg.config_file},
        "status": status,
        "started": started,
        "finished": None if status == "running" else _now(),
        "outputs": {},
    }
    if outputs is not None:
        data["outputs"] = {name: sha256(outputs.root / name) for name in outputs.files
                           if (outputs.root / name).exists()}
    if extra:
        data.update(extra)
    path = cfg.out_dir / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


# --- subcommands -------------------------------------------------------------------


def _pool_map(fn, items, threads):
    """Ordered map over a bounded pool; results arrive in input order."""
    if threads == 1 or len(items) <= 1:
        return map(fn, items)
    pool = ThreadPoolExecutor(max_workers=threads)
    try:
        return list(pool.map(fn, items))
    finally:
        pool.shutdown()


def _meanfield_row(gamma, delta, epsilon):
    params = KerrParams(gamma=gamma, delta=delta, epsilon=epsilon)
    row = {"delta": delta, "epsilon": epsilon, "gamma": gamma}
    try:
        regime = classify_regime(params)
        fps = find_fixed_points(params)
    except Exception as exc:  # logged per point, the sweep continues
        log.warning("meanfield failed at delta=%g epsilon=%g: %s", delta, epsilon, exc)
        row.update(regime="error", degenerate="", n_fixed_points=0, points={})
        return row
    row.update(regime=regime.tag, degenerate=int(regime.degenerate), n_fixed_points=len(fps),
               points={fp.label: fp for fp in fps})
    return row


def _meanfield_cells(row):
    cells = [_num(row["delta"]), _num(row["epsilon"]), _num(row["gamma"]), row["regime"],
             row["degenerate"], row["n_fixed_points"]]
    for lab in FIXED_POINT_LABELS:
        fp = row["points"].get(lab)
        if fp is None:
            cells += [""] * 7
            continue
        eig = list(fp.eigenvalues)
        cells += [_num(fp.q[0]), _num(fp.q[1]), fp.kind]
        for ev in eig:
            cells += [_num(ev.real), _num(ev.imag)]
    return cells


def cmd_meanfield(cfg: RunConfig, out: Outputs):
    deltas = parse_grid(cfg.grid) * cfg.gamma
    epsilons = parse_grid(cfg.epsilon_grid) * cfg.gamma
    if np.any(epsilons < 0):
        raise UsageError("epsilon grid must be non-negative")
    jobs = [(float(d), float(e)) for d in deltas for e in epsilons]
    rows = _pool_map(lambda de: _meanfield_row(cfg.gamma, *de), jobs, cfg.threads)
    collected = []
    with out.open("meanfield.csv") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MEANFIELD_COLUMNS)
        for row in rows:
            writer.writerow(_meanfield_cells(row))
            collected.append(row)
    if cfg.figures:
        from .report import regime_map

        regime_map(collected, out.path("meanfield.png"))
    return EXIT_OK


def _schedule(cfg) -> ShootingSchedule:
    taus = None
    if cfg.tau_list:
        try:
            taus = tuple(float(x) for x in cfg.tau_list.split(","))
        except ValueError:
            raise UsageError(f"tau-list {cfg.tau_list!r}: expected comma-separated numbers") from None
    return ShootingSchedule(tau_list=taus, eta=cfg.eta, target_tol=cfg.target_tol, n_scan=cfg.n_scan,
                            rtol=cfg.rtol, atol=cfg.atol)


def cmd_instanton(cfg: RunConfig, out: Outputs):
    params = _kerr(cfg)
    regime = classify_regime(params)
    if regime.tag != BISTABLE or regime.degenerate:
        raise PreconditionError(
            f"delta/gamma={cfg.delta}, epsilon/gamma={cfg.epsilon} is in the {regime.tag} regime"
            f"{' (on a boundary)' if regime.degenerate else ''}; escape paths need the bistable strip "
            f"gamma < epsilon < sqrt(gamma^2 + delta^2) with delta < 0"
        )
    schedule = _schedule(cfg)
    fps = find_fixed_points(params)
    source = fps[VACUUM] if cfg.source == "vacuum" else fps["bright_plus"]
    summary = {"source": source.label, "delta": params.delta, "epsilon": params.epsilon, "gamma": params.gamma}
    try:
        if cfg.target:
            target = fps[cfg.target]
            if target.kind != SADDLE:
                raise PreconditionError(f"{cfg.target} is not a saddle")
            path = shoot_escape(params, source, target, schedule)
        else:
            path = minimal_escape(params, source, schedule)
    except ConvergenceError as exc:
        summary.update(status="not_converged", best_miss=exc.best_miss, message=str(exc))
        out.write_json("instanton_summary.json", summary)
        raise
    with out.open("instanton_path.csv") as fh:
        write_path_csv(params, path, fh)
    try:
        frozen = frozen_theta_action(params, source, path.target)
    except (PreconditionError, DomainError) as exc:
        log.warning("frozen-theta action unavailable: %s", exc)
        frozen = math.nan
    summary.update(
        status="converged", target=path.target.label, action=path.total_action,
        h_residual_max=path.h_residual_max, theta_start=float(path.theta[0]), theta_end=float(path.theta[-1]),
        miss=path.miss, phi=path.phi, tau=path.tau, n_samples=len(path), frozen_theta_action=frozen,
    )
    out.write_json("instanton_summary.json", summary)
    if cfg.figures:
        from .report import instanton_panels

        instanton_panels(params, path, out.path("instanton.png"))
    return EXIT_OK


def _parse_methods(spec):
    methods = [m.strip() for m in spec.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {', '.join(bad) or '(none)'}; choose from {', '.join(METHODS)}")
    return methods


def _gap_on_error(fn, delta, gamma, method):
    try:
        return fn(delta)
    except (PreconditionError, DomainError, NoRootError, ConvergenceError, StiffIntegrationError) as exc:
        log.warning("%s failed at delta=%g: %s", method, delta, exc)
        return BoundaryPoint.gap(delta, gamma, method, str(exc))


def relative_differences(points, methods):
    """``|eps_b - eps_a| / eps_a`` for every method pair at shared detunings."""
    by = {(bp.method, bp.delta): bp for bp in points}
    deltas = sorted({bp.delta for bp in points})
    rows = []
    for i, ma in enumerate(methods):
        for mb in methods[i + 1:]:
            for d in deltas:
                a, b = by.get((ma, d)), by.get((mb, d))
                if a is None or b is None:
                    continue
                rel = abs(b.epsilon_star - a.epsilon_star) / a.epsilon_star if a.ok and b.ok else math.nan
                rows.append((d, ma, mb, a.epsilon_star, b.epsilon_star, rel))
    return rows


def cmd_boundary(cfg: RunConfig, out: Outputs):
    methods = _parse_methods(cfg.methods)
    g = cfg.gamma
    deltas = [float(d) for d in parse_grid(cfg.grid) * g]
    if LINDBLAD in methods and cfg.u is None:
        raise UsageError("lindblad_oracle needs --u")

    def equal_action(d):
        return _gap_on_error(lambda x: equal_action_epsilon(x, g), d, g, EQUAL_ACTION)

    def oracle(d):
        U = cfg.u * g
        return _gap_on_error(lambda x: locate_numeric_boundary(x, U, gamma=g, tol=cfg.tol, N_max=cfg.n_max),
                             d, g, LINDBLAD)

    points = []
    for method in methods:
        if method == ANALYTIC:
            points += trace_boundary(deltas, g, threads=cfg.threads)
        else:
            points += list(_pool_map(equal_action if method == EQUAL_ACTION else oracle, deltas, cfg.threads))
    with out.open("boundary.csv") as fh:
        write_boundary_csv(points, fh)
    with out.open("boundary_differences.csv") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIFFERENCE_COLUMNS)
        for d, ma, mb, ea, eb, rel in relative_differences(points, methods):
            writer.writerow((_num(d), ma, mb, _num(ea), _num(eb), _num(rel)))
    if cfg.figures:
        from .report import boundary_curves

        boundary_curves(points, out.path("boundary.png"))
    return EXIT_OK


def _default_extent(params, u, model):
    if model == "ou":
        cov = lyapunov_covariance(params, u)
        half = 5.0 * math.sqrt(float(np.max(np.diag(cov))))
    else:
        r = max(fp.radius for fp in find_fixed_points(params))
        half = 1.3 * r + 5.0 * math.sqrt(u / params.gamma)
    return (-half, half), (-half, half)


def cmd_langevin(cfg: RunConfig, out: Outputs):
    g = cfg.gamma
    if cfg.model == "ou":
        params = OUParams(gamma=g, delta=cfg.delta * g, epsilon=cfg.epsilon * g, u=cfg.u * g)
        if not params.is_stable:
            raise PreconditionError("OU drift is unstable at these parameters")
    else:
        params = KerrParams.from_ratios(cfg.delta, cfg.epsilon, u=cfg.u, gamma=g)
    lcfg = LangevinConfig(dt=cfg.dt / g, n_steps=cfg.steps, n_traj=cfg.traj, burn_in=cfg.burn_in,
                          seed=cfg.seed, record_stride=cfg.stride)
    start = _floats(cfg.start, 2, "start")
    if cfg.extent:
        xa, xb, ya, yb = _floats(cfg.extent, 4, "extent")
        if not (xa < xb and ya < yb):
            raise UsageError("extent must satisfy xmin < xmax and ymin < ymax")
        extent = ((xa, xb), (ya, yb))
    else:
        extent = _default_extent(params, params.u, cfg.model)
    stats = sample_steady_state(params, lcfg, start=start, hist_range=extent, hist_bins=cfg.bins)
    summary = json.loads(stats.to_json())
    if cfg.model == "ou":
        summary["lyapunov_covariance"] = lyapunov_covariance(params).tolist()
    out.write_json("langevin_stats.json", summary)
    with out.open("langevin_histogram.csv") as fh:
        stats.histogram.write_csv(fh)
    if cfg.figures:
        from .report import density_image

        density_image(stats.histogram, out.path("langevin_density.png"))
    return EXIT_OK


def cmd_lindblad(cfg: RunConfig, out: Outputs):
    params = _kerr(cfg)
    U = cfg.u * cfg.gamma
    st = steady_state(params, U, tol=cfg.tol, N=cfg.cutoff, N_max=cfg.n_max)
    pops = np.real(np.diag(st.rho))
    with out.open("lindblad_populations.csv") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POPULATION_COLUMNS)
        for n, pn in enumerate(pops):
            writer.writerow((n, _num(pn)))
    summary = {
        "delta": params.delta, "epsilon": params.epsilon, "gamma": params.gamma, "U": U,
        "cutoff": st.cutoff, "photon_number": st.photon_number, "tail_mass": st.tail_mass,
        "liouvillian_residual": st.liouvillian_residual, "trace": st.trace,
        "hermiticity_residual": st.hermiticity_residual, "min_eigenvalue": st.min_eigenvalue,
        "gap": liouvillian_gap(params, st.cutoff, U) if cfg.gap else None,
        "gap_even_sector": liouvillian_gap(params, st.cutoff, U, sector="even") if cfg.gap else None,
    }
    out.write_json("lindblad_summary.json", summary)
    if cfg.figures:
        from .report import populations

        populations(st, out.path("lindblad_populations.png"))
    return EXIT_OK


def _sweep_point(delta, epsilon, U, cfg):
    params = KerrParams(gamma=cfg.gamma, delta=delta, epsilon=epsilon)
    try:
        st = steady_state(params, U, tol=cfg.tol, N_max=cfg.n_max)
        gap = liouvillian_gap(params, st.cutoff, U) if cfg.gap else math.nan
    except (ConvergenceError, PreconditionError) as exc:
        log.warning("sweep point delta=%g epsilon=%g failed: %s", delta, epsilon, exc)
        best = getattr(exc, "best_miss", math.nan)
        return SweepPoint(delta, epsilon, U, -1, math.nan, math.nan, best)
    return SweepPoint(delta, epsilon, U, st.cutoff, st.photon_number, gap, st.tail_mass)


def cmd_sweep(cfg: RunConfig, out: Outputs):
    g = cfg.gamma
    U = cfg.u * g
    if not U > 0:
        raise UsageError("sweep needs --u > 0")
    jobs = [(float(d), float(e)) for d in parse_grid(cfg.grid) * g for e in parse_grid(cfg.epsilon_grid) * g]
    points = list(_pool_map(lambda de: _sweep_point(de[0], de[1], U, cfg), jobs, cfg.threads))
    with out.open("sweep.csv") as fh:
        write_sweep_csv(points, fh)
    if cfg.figures:
        from .report import photon_map

        photon_map(points, out.path("sweep.png"))
    return EXIT_OK


HANDLERS = {
    "meanfield": cmd_meanfield,
    "instanton": cmd_instanton,
    "boundary": cmd_boundary,
    "langevin": cmd_langevin,
    "lindblad": cmd_lindblad,
    "sweep": cmd_sweep,
}


# --- entry point ---------------------------------------------------------------------


_NEGATIVE_ARG = re.compile(r"^-\d|^-\.\d")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bistanton", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    parser.subparser_for = sub.choices.__getitem__
    for name, (summary, _) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary)
        # let grid values such as "-10:-1:0.5" through as arguments, not flags
        p._negative_number_matcher = _NEGATIVE_ARG
        p.add_argument("--config", metavar="FILE", help="key=value file (or a previous manifest.json)")
        for opt in options_for(name):
            flag = "--" + opt.name
            default_text = "" if opt.default is None else f" [default: {opt.default}]"
            if opt.kind == "flag":
                p.add_argument(flag, dest=opt.dest, action="store_true", default=None,
                               help=opt.help + default_text)
            else:
                p.add_argument(flag, dest=opt.dest, default=None, metavar=opt.dest.upper(),
                               help=opt.help + default_text + (" (required)" if opt.required else ""))
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(args.command, flags, args.config)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except (UsageError, OSError) as exc:
        parser.subparser_for(args.command).error(str(exc))
    started = _now()
    write_manifest(cfg, "running", started)
    out = Outputs(cfg.out_dir)
    code, message = EXIT_INTERNAL, ""
    try:
        code = HANDLERS[cfg.command](cfg, out)
    except (UsageError, PreconditionError, DomainError) as exc:
        code, message = EXIT_USAGE, str(exc)
    except _NUMERIC_ERRORS as exc:
        code, message = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except Exception as exc:
        log.exception("internal error")
        code, message = EXIT_INTERNAL, f"{type(exc).__name__}: {exc}"
    if message:
        print(f"bistanton {cfg.command}: error: {message}", file=sys.stderr)
    status = "ok" if code == EXIT_OK else "failed"
    write_manifest(cfg, status, started, out, {"exit_code": code, "message": message})
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
