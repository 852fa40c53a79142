import json
import os
from pathlib import Path

import pytest

from genwave import cli, harness
from genwave.gennum import CSV_FIELDS

FLAT_FAST = dict(cells=(32, 64, 128), horizon=0.5, error_tol=1e-2)


def flat_cfg(tmp_path, name="flat", **over):
    params = dict(FLAT_FAST, **over)
    return harness.default_config("flat-convergence", out_dir=str(tmp_path / name), **params)


# -- config -------------------------------------------------------------------------

def test_registry_lists_all_scenarios():
    assert set(harness.SCENARIOS) == {"flat-convergence", "cone", "collapse",
                                      "hoelder-pullback", "algebra-suite"}


@pytest.mark.parametrize("text, path", [
    ("[scenario]\nname = nope\n", "scenario.name"),
    ("[scenario]\nname = cone\n[params]\nfoo = 1\n", "params.foo"),
    ("[scenario]\nname = cone\n[extra]\nx = 1\n", "extra"),
    ("[scenario]\nname = cone\ncolour = red\n", "scenario.colour"),
    ("[scenario]\nname = cone\n[grid]\ncount = 3\n", "grid"),
    ("[scenario]\nname = cone\n[grid]\nstep = 3\n", "grid.step"),
    ("[scenario]\nname = cone\n[params]\nalpha = half\n", "params.alpha"),
    ("[params]\nalpha = 0.5\n", "scenario.name"),
    ("[scenario]\nname = cone\nseed = x\n", "scenario.seed"),
])
def test_config_errors_name_the_key(text, path):
    with pytest.raises(harness.ConfigError) as info:
        harness.load_config(text)
    assert info.value.path == path
    assert path in str(info.value)


def test_config_parsing_and_round_trip(tmp_path):
    text = ("[scenario]\nname = cone\nseed = 7\n[grid]\neps0 = 0.5\nq = 0.8\ncount = 9\n"
            "[params]\nalpha = 0.7\ncells = 64\n")
    cfg = harness.load_config(text)
    assert cfg.seed == 7 and cfg["alpha"] == 0.7 and cfg["cells"] == 64
    assert (cfg.grid.eps0, cfg.grid.q, cfg.grid.count) == (0.5, 0.8, 9)
    assert cfg["ring_radius"] == 1.0
    path = tmp_path / "c.ini"
    path.write_text(harness.config_to_ini(cfg))
    assert harness.load_config(str(path)) == cfg
    assert harness.load_config(path, seed=3, grid=(1.0, 0.7, 8)).seed == 3


def test_grid_option():
    assert harness.parse_grid_option("1,0.7,16") == (1.0, 0.7, 16)
    with pytest.raises(harness.ConfigError):
        harness.parse_grid_option("1,0.7")


def test_list_params_parse():
    cfg = harness.load_config("[scenario]\nname = algebra-suite\n[params]\nexponents = 1, -2\n")
    assert cfg["exponents"] == (1.0, -2.0)


# -- writers ----------------------------------------------------------------------------

def test_emit_csv_empty_has_header_only(tmp_path):
    p = harness.emit_csv(tmp_path / "x.csv", ("a", "b"), [])
    assert p.read_text() == "a,b\n"


def test_plotdata_round_trip(tmp_path):
    p = harness.emit_plotdata(tmp_path / "plot_f.dat", {"one": ([1, 2], [3, 4]),
                                                        "two": ([0.5], [0.25])})
    curves = harness._read_plotdata(p)
    assert curves == {"one": ([1.0, 2.0], [3.0, 4.0]), "two": ([0.5], [0.25])}


def test_unwritable_output_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        harness.emit_csv(blocker / "x.csv", ("a",), [])


# -- bundles ----------------------------------------------------------------------------------

def test_bundle_layout_and_checksums(tmp_path):
    b = harness.run_scenario(flat_cfg(tmp_path))
    assert b.status == "pass", b.manifest["errors"]
    names = {f["path"] for f in b.manifest["files"]}
    assert {"convergence.csv", "fits.csv", "checks.csv", "energy.csv"} <= names
    assert b.verify() == []
    assert tuple(b.read_csv("fits.csv")[0]) == tuple(CSV_FIELDS)
    for row in b.read_csv("checks.csv"):
        assert row["passed"] in ("true", "false") and row["source"]
    re = harness.ResultBundle.load(b.root)
    assert [c.name for c in re.checks] == [c.name for c in b.checks]
    (b.root / "energy.csv").write_text("tampered\n")
    assert re.verify() == ["energy.csv"]


def test_timestamps_only_in_manifest(tmp_path):
    b = harness.run_scenario(flat_cfg(tmp_path))
    assert "started" in b.manifest
    for f in b.manifest["files"]:
        assert b.manifest["started"][:10] not in (b.root / f["path"]).read_text()


def test_output_env_variable(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ENV, str(tmp_path / "root"))
    cfg = harness.default_config("flat-convergence", **FLAT_FAST)
    b = harness.run_scenario(cfg)
    assert b.root == tmp_path / "root" / "flat-convergence"
    assert (b.root / harness.MANIFEST).exists()


def test_failed_check_sets_fail_status(tmp_path):
    b = harness.run_scenario(flat_cfg(tmp_path, order_target=3.0))
    assert b.status == "fail" and not b.check("convergence_order").passed


def test_error_keeps_partial_results(tmp_path):
    cfg = harness.default_config("cone", grid=(0.25, 0.8, 8), out_dir=str(tmp_path / "c"),
                                 cells=2)
    b = harness.run_scenario(cfg)
    assert b.status == "error"
    assert b.manifest["errors"][0]["type"] == "ValueError"
    assert (b.root / "growth.csv").exists()
    assert b.check("metric_validity").passed


def test_svg_rendering(tmp_path):
    pytest.importorskip("matplotlib")
    b = harness.run_scenario(flat_cfg(tmp_path), svg=True)
    assert (b.root / "plot_error.svg").exists()
    assert b.verify() == []


# -- compare -----------------------------------------------------------------------------------

def test_compare_identical_runs_is_empty(tmp_path):
    a = harness.run_scenario(flat_cfg(tmp_path, "a"))
    b = harness.run_scenario(flat_cfg(tmp_path, "b"))
    assert harness.compare_runs(a.root, b.root).empty


def test_compare_rejects_mixed_scenarios(tmp_path):
    a = harness.run_scenario(flat_cfg(tmp_path, "a"))
    b = harness.run_scenario(harness.default_config(
        "algebra-suite", grid=(1.0, 0.7, 8), out_dir=str(tmp_path / "b"), ics_pairs=5))
    with pytest.raises(ValueError, match="scenario mismatch"):
        harness.compare_runs(a, b)


@pytest.mark.slow
def test_compare_grid_refinement_keeps_verdicts(tmp_path):
    runs = [harness.run_scenario(harness.default_config(
        "algebra-suite", grid=(1.0, 0.7, j), out_dir=str(tmp_path / str(j)), ics_pairs=20))
        for j in (8, 16)]
    rep = harness.compare_runs(*runs)
    power = [r for r in rep.rows if r["kind"] == "fit" and "*eps^" in r["name"]]
    assert not [r for r in power if r["flip"]]
    assert max((abs(r["delta"]) for r in power), default=0.0) <= 0.05


@pytest.mark.slow
def test_compare_cone_alpha_keeps_validity(tmp_path):
    runs = [harness.run_scenario(harness.default_config(
        "cone", out_dir=str(tmp_path / str(a)), alpha=a, cells=64, horizon=0.1))
        for a in (0.5, 0.9)]
    rep = harness.compare_runs(*runs)
    assert not [r for r in rep.flips if r["name"] == "metric_validity"]
    assert all(r.check("metric_validity").passed for r in runs)


# -- CLI ----------------------------------------------------------------------------------------

def test_cli_list(capsys):
    assert cli.main(["list-scenarios", "-v"]) == 0
    out = capsys.readouterr().out
    for name in harness.SCENARIOS:
        assert name in out
    assert "alpha (float)" in out


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nname = cone\n[params]\nfoo = 1\n")
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "params.foo" in capsys.readouterr().err
    assert cli.main(["run", "--scenario", "nope"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_run_pass_fail_error(tmp_path, capsys):
    ini = tmp_path / "flat.ini"
    ini.write_text("[scenario]\nname = flat-convergence\n[params]\ncells = 32,64,128\n"
                   "horizon = 0.5\nerror_tol = 0.01\n")
    assert cli.main(["run", "--config", str(ini), "--out", str(tmp_path / "ok")]) == 0
    out = capsys.readouterr().out
    assert "PASS  convergence_order" in out
    ini.write_text(ini.read_text() + "order_target = 3\n")
    assert cli.main(["run", "--config", str(ini), "--out", str(tmp_path / "bad")]) == 1


def test_cli_run_error_exit_code(tmp_path):
    ini = tmp_path / "cone.ini"
    ini.write_text("[scenario]\nname = cone\n[grid]\ncount = 8\neps0 = 0.25\nq = 0.8\n"
                   "[params]\ncells = 2\n")
    assert cli.main(["run", "--config", str(ini), "--out", str(tmp_path / "e")]) == 3
    manifest = json.loads((tmp_path / "e" / harness.MANIFEST).read_text())
    assert manifest["status"] == "error"


def test_cli_compare(tmp_path, capsys):
    a = harness.run_scenario(flat_cfg(tmp_path, "a"))
    b = harness.run_scenario(flat_cfg(tmp_path, "b", order_target=3.0))
    assert cli.main(["compare", str(a.root), str(a.root)]) == 0
    assert "no differences" in capsys.readouterr().out
    assert cli.main(["compare", str(a.root), str(b.root)]) == 1
    assert "VERDICT FLIP" in capsys.readouterr().out
    assert cli.main(["compare", str(a.root), str(tmp_path / "none")]) == 2
