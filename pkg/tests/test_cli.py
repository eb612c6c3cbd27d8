import csv
import json
from pathlib import Path

import pytest

from bistanton import cli

GOLDEN = Path(__file__).parent / "golden"


def invoke(*argv):
    try:
        return cli.run([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def header(path):
    return Path(path).read_text(encoding="utf-8").splitlines()[0]


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text(encoding="utf-8"))


def golden(name):
    return (GOLDEN / f"{name}.header").read_text(encoding="utf-8").strip()


# --- parsing -------------------------------------------------------------------


def test_parse_grid():
    assert cli.parse_grid("-3:-1:1").tolist() == [-3.0, -2.0, -1.0]
    assert cli.parse_grid("-10:-1:0.5").size == 19
    assert cli.parse_grid("2.5").tolist() == [2.5]
    assert cli.parse_grid("1:0:0.5").size == 0
    for bad in ("1:2", "a:b:c", "0:1:0", "0:1:-1"):
        with pytest.raises(cli.UsageError):
            cli.parse_grid(bad)


def test_config_file_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("BISTANTON_THREADS", raising=False)
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# toy grid\ngrid = -3:-1:1\nepsilon-grid=0.5:2.5:1\nthreads=2\ngamma=1.0\n")
    cfg = cli.resolve("meanfield", {"threads": "5"}, cfg_file)
    assert cfg.threads == 5 and cfg.grid == "-3:-1:1" and cfg.gamma == 1.0 and cfg.figures is False
    assert cli.resolve("meanfield", {}, cfg_file).threads == 2
    monkeypatch.setenv("BISTANTON_THREADS", "3")
    assert cli.resolve("meanfield", {"grid": "0", "epsilon_grid": "0"}).threads == 3


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("grid=0\nepsilon_grid=0\nbogus=1\n")
    with pytest.raises(cli.UsageError):
        cli.resolve("meanfield", {}, bad)
    with pytest.raises(cli.UsageError):
        cli.resolve("meanfield", {"grid": "0"})
    with pytest.raises(cli.UsageError):
        cli.resolve("instanton", {"delta": "x", "epsilon": "1"})
    with pytest.raises(cli.UsageError):
        cli.resolve("instanton", {"delta": "-3", "epsilon": "1.6", "source": "saddle"})


# --- meanfield -----------------------------------------------------------------------


def test_meanfield_toy_grid(tmp_path):
    out = tmp_path / "mf"
    assert invoke("meanfield", "--grid", "-3:-1:1", "--epsilon-grid", "0.5:2.5:1", "--out", out) == 0
    rows = read_csv(out / "meanfield.csv")
    assert len(rows) == 9
    assert header(out / "meanfield.csv").startswith("delta,epsilon,gamma,regime,")
    assert header(out / "meanfield.csv") == golden("meanfield.csv")
    m = manifest(out)
    assert m["status"] == "ok" and m["exit_code"] == 0
    assert set(m["outputs"]) == {"meanfield.csv"}
    assert m["config"]["options"]["grid"] == "-3:-1:1"


def test_meanfield_empty_grid(tmp_path):
    out = tmp_path / "empty"
    assert invoke("meanfield", "--grid", "0:-1:1", "--epsilon-grid", "0:1:1", "--out", out) == 0
    assert (out / "meanfield.csv").read_text().splitlines() == [golden("meanfield.csv")]


def test_meanfield_invalid_grid(tmp_path):
    assert invoke("meanfield", "--grid", "0:1:0", "--epsilon-grid", "0:1:1", "--out", tmp_path) == 2
    assert invoke("meanfield", "--epsilon-grid", "0:1:1", "--out", tmp_path) == 2


def test_meanfield_phase_diagram_has_three_contiguous_regions(tmp_path):
    out = tmp_path / "pd"
    assert invoke("meanfield", "--grid", "-10:-1:1", "--epsilon-grid", "0:12:0.25", "--out", out,
                  "--threads", 2) == 0
    rows = read_csv(out / "meanfield.csv")
    by_delta = {}
    for r in rows:
        by_delta.setdefault(float(r["delta"]), []).append((float(r["epsilon"]), r["regime"]))
    for delta, col in by_delta.items():
        tags = [t for _, t in sorted(col)]
        runs = [tags[0]] + [b for a, b in zip(tags, tags[1:]) if a != b]
        assert runs == ["vacuum", "bistable", "cat"], delta


def test_reruns_from_manifest_are_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert invoke("meanfield", "--grid", "-4:-2:1", "--epsilon-grid", "1:3:0.5", "--out", a, "--threads", 3) == 0
    assert invoke("meanfield", "--config", a / "manifest.json", "--out", b, "--threads", 1) == 0
    assert manifest(a)["outputs"] == manifest(b)["outputs"]


def test_manifest_is_written_before_results(tmp_path, monkeypatch):
    seen = {}

    def spy(cfg, out):
        seen.update(manifest(cfg.out_dir))
        return cli.EXIT_OK

    monkeypatch.setitem(cli.HANDLERS, "meanfield", spy)
    assert invoke("meanfield", "--grid", "0", "--epsilon-grid", "0", "--out", tmp_path) == 0
    assert seen["status"] == "running" and seen["outputs"] == {}


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise KeyError("unexpected")

    monkeypatch.setitem(cli.HANDLERS, "meanfield", boom)
    assert invoke("meanfield", "--grid", "0", "--epsilon-grid", "0", "--out", tmp_path) == 4
    assert manifest(tmp_path)["status"] == "failed"


# --- instanton -----------------------------------------------------------------------


def test_instanton_bright_escape(tmp_path):
    out = tmp_path / "inst"
    assert invoke("instanton", "--delta", -3, "--epsilon", 1.6, "--source", "bright", "--out", out) == 0
    assert header(out / "instanton_path.csv") == golden("instanton_path.csv")
    summary = json.loads((out / "instanton_summary.json").read_text())
    assert summary["status"] == "converged"
    assert summary["h_residual_max"] < 1e-6
    assert {"action", "theta_start", "theta_end", "frozen_theta_action"} <= set(summary)
    rows = read_csv(out / "instanton_path.csv")
    assert float(rows[-1]["S"]) == pytest.approx(summary["action"])


def test_instanton_outside_bistable_strip(tmp_path, capsys):
    assert invoke("instanton", "--delta", -3, "--epsilon", 0.5, "--out", tmp_path) == 2
    assert "vacuum regime" in capsys.readouterr().err


def test_instanton_non_convergence(tmp_path):
    code = invoke("instanton", "--delta", -3, "--epsilon", 1.6, "--target-tol", 1e-14, "--n-scan", 16,
                  "--target", "saddle_plus", "--out", tmp_path)
    assert code == 3
    summary = json.loads((tmp_path / "instanton_summary.json").read_text())
    assert summary["status"] == "not_converged" and summary["best_miss"] > 0


# --- boundary ------------------------------------------------------------------------


def test_boundary_analytic_line(tmp_path):
    out = tmp_path / "bd"
    assert invoke("boundary", "--grid", "-10:-1:0.5", "--out", out) == 0
    rows = read_csv(out / "boundary.csv")
    assert len(rows) == 19 and all(r["ok"] == "1" for r in rows)
    assert header(out / "boundary.csv") == golden("boundary.csv")
    assert header(out / "boundary_differences.csv") == golden("boundary_differences.csv")


def test_boundary_gaps_are_recorded(tmp_path):
    assert invoke("boundary", "--grid", "-1:1:1", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "boundary.csv")
    assert [r["ok"] for r in rows] == ["1", "0", "0"]
    assert rows[2]["epsilon_star"] == "nan" and rows[2]["message"]


def test_boundary_usage_errors(tmp_path, capsys):
    assert invoke("boundary", "--grid", "-3", "--methods", "analytic_eq11,magic", "--out", tmp_path) == 2
    assert "unknown method" in capsys.readouterr().err
    assert invoke("boundary", "--grid", "-3", "--methods", "lindblad_oracle", "--out", tmp_path) == 2


def test_relative_differences():
    from bistanton.approx import BoundaryPoint

    pts = [BoundaryPoint(-3.0, 2.0, 1.0, "analytic_eq11", 0.0), BoundaryPoint(-3.0, 2.1, 1.0, "lindblad_oracle", 0.0),
           BoundaryPoint(-4.0, 2.5, 1.0, "analytic_eq11", 0.0)]
    rows = cli.relative_differences(pts, ["analytic_eq11", "lindblad_oracle"])
    assert rows == [(-3.0, "analytic_eq11", "lindblad_oracle", 2.0, 2.1, pytest.approx(0.05))]


# --- langevin / lindblad / sweep -------------------------------------------------------


def test_langevin_ou_histogram_and_determinism(tmp_path):
    args = ("langevin", "--model", "ou", "--delta", 1, "--epsilon", 0.5, "--u", 0.1, "--steps", 20000,
            "--burn-in", 2000, "--traj", 8, "--bins", 16, "--seed", 5)
    a, b = tmp_path / "a", tmp_path / "b"
    assert invoke(*args, "--out", a) == 0
    assert invoke(*args, "--out", b, "--threads", 1) == 0
    assert header(a / "langevin_histogram.csv") == golden("langevin_histogram.csv")
    assert len(read_csv(a / "langevin_histogram.csv")) == 16 * 16
    assert manifest(a)["outputs"] == manifest(b)["outputs"]
    stats = json.loads((a / "langevin_stats.json").read_text())
    assert "lyapunov_covariance" in stats


def test_langevin_missing_flag(tmp_path):
    assert invoke("langevin", "--delta", 1, "--epsilon", 0.5, "--out", tmp_path) == 2


def test_lindblad_summary(tmp_path):
    assert invoke("lindblad", "--delta", -3, "--epsilon", 1.2, "--u", 0.3, "--gap", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "lindblad_summary.json").read_text())
    assert summary["trace"] == pytest.approx(1.0)
    assert summary["gap_even_sector"] >= summary["gap"] * (1 - 1e-9) > 0
    assert header(tmp_path / "lindblad_populations.csv") == golden("lindblad_populations.csv")


def test_sweep_map(tmp_path):
    out = tmp_path / "sw"
    assert invoke("sweep", "--grid", "-4:-3:1", "--epsilon-grid", "1.2:2.0:0.4", "--u", 0.3, "--out", out,
                  "--threads", 2) == 0
    rows = read_csv(out / "sweep.csv")
    assert header(out / "sweep.csv") == golden("sweep.csv")
    assert [(float(r["delta"]), float(r["epsilon"])) for r in rows] == [
        (-4.0, 1.2), (-4.0, 1.6), (-4.0, 2.0), (-3.0, 1.2), (-3.0, 1.6), (-3.0, 2.0)]


def test_figures_are_rendered(tmp_path):
    assert invoke("meanfield", "--grid", "-3:-1:1", "--epsilon-grid", "0.5:2.5:1", "--figures",
                  "--out", tmp_path) == 0
    png = tmp_path / "meanfield.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "meanfield.png" in manifest(tmp_path)["outputs"]
