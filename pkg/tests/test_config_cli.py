import json
import subprocess
import sys

import pytest

from datorus.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from datorus.config import ConfigError, RunConfig, load_config, parse_assignments

SMALL_ERGODIC = ["--set", "lyap_iters=1000", "--set", "lyap_orbits=2", "--set", "cs_points=20",
                 "--set", "cs_iters=1000", "--set", "srb_starts=3", "--set", "srb_iters=5000",
                 "--set", "srb_depth=2", "--set", "basin_depth=3", "--set", "basin_samples=200",
                 "--set", "basin_iters=200", "--set", "entropy_depth=3"]


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.matrix_rows == ((1, 1, 0), (0, 0, 1), (1, 0, 0))
    assert len(cfg.hash) == 64


def test_parse_types():
    cfg = parse_assignments(["delta=0.05", "surgery=off", "chain_depths=3,4", "seed=7",
                             "q=0,0,0", "output=x"])
    assert cfg.delta == 0.05 and cfg.surgery is False
    assert cfg.chain_depths == (3, 4) and cfg.seed == 7 and cfg.output == "x"
    assert isinstance(cfg.q[0], float)


@pytest.mark.parametrize("item", ["nokey", "bogus=1", "delta=abc", "surgery=maybe"])
def test_parse_errors(item):
    with pytest.raises(ConfigError):
        parse_assignments([item])


@pytest.mark.parametrize("item, msg", [
    ("mu_s=0.8", "must exceed 1"),
    ("chain_depths=0", "chain_depths"),
    ("matrix=1,2,3", "nine integers"),
    ("delta=-1", "delta"),
])
def test_validation_errors(item, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(None, [item])


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\ndelta = 0.07\nseed = 3  # trailing\n\n")
    cfg = load_config(p, ["seed=4"])
    assert cfg.delta == 0.07 and cfg.seed == 4
    p.write_text("delta 0.07\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_text_round_trip(tmp_path):
    cfg = parse_assignments(["delta=0.07", "chain_depths=2,3"])
    p = tmp_path / "c.cfg"
    p.write_text(cfg.to_text())
    again = load_config(p)
    assert again == cfg and again.hash == cfg.hash


def test_hash_changes_with_config():
    assert RunConfig().hash != parse_assignments(["seed=1"]).hash
    assert RunConfig().hash == parse_assignments(["output=elsewhere", "workers=3"]).hash


def test_dump_config(capsys):
    assert main(["chain", "--dump-config", "--seed", "9"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "seed = 9" in out and "chain_depths = 4,5,6" in out


def test_config_error_exit_code(capsys, tmp_path):
    assert main(["build-verify", "--set", "mu_s=0.8", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "must exceed 1" in capsys.readouterr().err
    assert main(["build-verify", "--set", "nonsense=1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_spectrum_error_exit_code(capsys, tmp_path):
    code = main(["build-verify", "--set", "matrix=2,0,0,0,1,0,0,0,1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "unimodular" in capsys.readouterr().err


def test_unknown_flag():
    with pytest.raises(SystemExit) as e:
        main(["chain", "--frobnicate"])
    assert e.value.code == 2


def test_missing_command():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2


def test_no_surgery_build(tmp_path, capsys):
    code = main(["build-verify", "--no-surgery", "--out", str(tmp_path),
                 "--set", "property_samples=2000"])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    v = {r["id"]: r["verdict"] for r in rep["verdicts"]}
    assert v["P1"] == "N/A"
    assert "stable_arc" not in v
    assert rep["config"]["surgery"] is False
    assert "N/A" in capsys.readouterr().out


def test_chain_single_depth(tmp_path, capsys):
    code = main(["chain", "--depths", "2", "--out", str(tmp_path), "-q"])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert list(rep["sections"]["chain"]["depths"]) == ["2"]
    assert (tmp_path / "boxes_depth2.csv").exists()
    assert (tmp_path / "edges_depth2.bin").exists()
    assert capsys.readouterr().out == ""
    assert rep["schema_version"] == "1.0" and rep["config_hash"]


def test_ergodic_csvs_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    ca = main(["ergodic", "--out", str(a), "-q", *SMALL_ERGODIC])
    cb = main(["ergodic", "--out", str(b), "-q", *SMALL_ERGODIC])
    assert ca == cb and ca in (EXIT_OK, EXIT_FAIL)
    for name in ("orbits.csv", "birkhoff.csv", "histogram.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "orbits.csv").read_text().splitlines()[0].split(",")
    assert header[-2:] == ["seed", "config_hash"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "datorus", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("build-verify", "chain", "semiconj", "ergodic", "full"):
        assert cmd in r.stdout
