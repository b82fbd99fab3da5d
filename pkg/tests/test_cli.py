import json
import os

import pytest

from gdflows.cli import ConfigError, RunConfig, main


def _write(path, text):
    path.write_text(text)
    return path


def test_config_parsing_and_hash():
    cfg = RunConfig.parse("schema_version = 1\nn = 3  # order\nhamiltonians.z = 0,-3 1.5,2\n")
    assert cfg.int("n") == 3
    assert cfg.complexes("hamiltonians.z") == [-3j, 1.5 + 2j]
    same = RunConfig.parse("hamiltonians.z = 0,-3 1.5,2\nn = 3\nschema_version = 1\n")
    assert cfg.hash() == same.hash()


@pytest.mark.parametrize("text", [
    "n = 2\n",                                   # no schema version
    "schema_version = 2\n",                      # wrong schema version
    "schema_version = 1\nbogus = 1\n",           # unknown key
    "schema_version = 1\ntol.c2.oracle = 0\n",   # non-positive tolerance
    "schema_version = 1\ntol.c99.x = 1\n",       # unknown tolerance
    "schema_version = 1\npotential.file = nowhere.csv\n",
    "schema_version = 1\nn\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_missing_config_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_derive_flow(capsys, tmp_path):
    assert main(["derive-flow", "--n", "2", "--k", "3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "du0/dt" in out and "u0_3" in out
    assert (tmp_path / "flow_2_3.txt").exists()
    assert main(["derive-flow", "--n", "2", "--k", "4"]) == 1
    assert "not an integer" in capsys.readouterr().err


def test_scatter_zero_potential_is_reproducible(tmp_path):
    cfg = _write(tmp_path / "z.cfg", "schema_version = 1\nn = 2\npotential = zero\n"
                                     "radii = geom 0.5 4 4\n")
    for d in ("a", "b"):
        assert main(["scatter", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("manifest.json", "record.csv", "record.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["passed"] and man["failures"] == 0
    assert any(c["name"] == "max |a - I|" for c in man["checks"])
    assert "seconds" in json.loads((tmp_path / "a" / "timing.json").read_text())


def test_canon_and_hamiltonians(tmp_path):
    cfg = _write(tmp_path / "g.cfg", "schema_version = 1\nn = 2\npotential = gaussian\n"
                                     "potential.amplitude = 0.3\npotential.sigma = 0.7\n"
                                     "radii = quadrature 8 8\nhamiltonians.k = 1 3\n")
    assert main(["canon", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    rows = (tmp_path / "c" / "canonical.csv").read_text().splitlines()
    assert rows[0].startswith("ray,radius,nu") and len(rows) == 9
    assert main(["hamiltonians", "--config", str(cfg), "--out", str(tmp_path / "h")]) == 0
    assert (tmp_path / "h" / "hamiltonians.csv").read_text().startswith("k,H_re,H_im")


def test_evolve_writes_snapshots_and_plot(tmp_path):
    cfg = _write(tmp_path / "e.cfg", "schema_version = 1\nn = 2\npotential.amplitude = 0.3\n"
                                     "potential.sigma = 0.7\nflow.k = 1\nflow.T = 0.1\n"
                                     "flow.snapshots = 2\n")
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "snapshot_001.csv").exists()
    assert "snapshot_001.csv" in (tmp_path / "plot_u0.gp").read_text()


def test_verify_exit_codes(tmp_path, capsys):
    assert main(["verify", "--criteria", "11", "--out", str(tmp_path / "ok")]) == 0
    assert "PASS criterion 11" in capsys.readouterr().out
    bad = _write(tmp_path / "bad.cfg", "schema_version = 1\ntol.c5.wronskian = 1e-300\n")
    assert main(["verify", "--config", str(bad), "--criteria", "5",
                 "--out", str(tmp_path / "bad")]) == 1
    man = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert not man["passed"] and man["failures"] > 0


def test_threads_flag_sets_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GDFLOWS_THREADS", "1")
    main(["verify", "--criteria", "11", "--threads", "2", "--out", str(tmp_path)])
    assert os.environ["GDFLOWS_THREADS"] == "2"
