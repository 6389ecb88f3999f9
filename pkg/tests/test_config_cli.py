import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from gossipqcd.cli import main, parse_range
from gossipqcd.config import config_from_dict, config_to_dict, load_config, reference_config_path
from gossipqcd.errors import ParseError, ValidationError

REF_TEXT = reference_config_path().read_text()


def write_cfg(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoad:
    def test_reference(self):
        cfg = load_config("reference.cfg")
        assert cfg.node_count == 5 and len(cfg.distribution.entries) == 26
        assert cfg.rho == 0.1 and cfg.gamma == 6.0 and cfg.window == 15
        assert len(cfg.thresholds) == 7 and cfg.thresholds[0] == 10.0 and cfg.thresholds[-1] == 10000.0

    def test_rho_one(self, tmp_path):
        with pytest.raises(ValidationError) as err:
            load_config(write_cfg(tmp_path, REF_TEXT.replace("rho = 0.1", "rho = 1.0")))
        assert err.value.field == "rho"

    def test_disconnected(self, tmp_path):
        text = REF_TEXT.replace(
            "edges = [[0, 1], [0, 2], [0, 3], [0, 4], [1, 2], [1, 3], [1, 4], [2, 3], [2, 4], [3, 4]]",
            "edges = [[0, 1], [2, 3], [3, 4]]",
        )
        with pytest.raises(ValidationError) as err:
            load_config(write_cfg(tmp_path, text))
        assert err.value.field == "connectivity"

    def test_identical_densities(self, tmp_path):
        text = REF_TEXT.replace("mean = 0.3", "mean = 0.0")
        with pytest.raises(ValidationError) as err:
            load_config(write_cfg(tmp_path, text))
        assert err.value.field == "kl_positivity"

    def test_reducible_explicit_law(self, tmp_path):
        text = REF_TEXT.replace('kind = "uniform_enumerated"', 'kind = "explicit"\nentries = [{partner = [0, 1, 2, 3, 4], weight = 1.0}]')
        with pytest.raises(ValidationError) as err:
            load_config(write_cfg(tmp_path, text))
        assert err.value.field == "irreducibility"

    def test_syntax_error_has_line(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_config(write_cfg(tmp_path, REF_TEXT.replace("rho = 0.1", "rho = = 0.1")))
        assert "line" in str(err.value)

    def test_wrong_type_names_field(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_config(write_cfg(tmp_path, REF_TEXT.replace("rho = 0.1", 'rho = "x"')))
        assert "detection.rho" in str(err.value)

    def test_round_trip(self):
        cfg = load_config("reference.cfg")
        again = config_from_dict(config_to_dict(cfg))
        assert config_to_dict(again) == config_to_dict(cfg)
        assert json.loads(json.dumps(config_to_dict(cfg))) == config_to_dict(cfg)


class TestRange:
    def test_forms(self):
        assert parse_range("1..15", int) == list(range(1, 16))
        assert parse_range("20..60:10") == [20.0, 30.0, 40.0, 50.0, 60.0]
        assert parse_range("2,4.5") == [2.0, 4.5]


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "gossipqcd.cli", *map(str, args)], capture_output=True, text=True)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestCLI:
    def test_validate(self, tmp_path):
        assert main(["validate", "reference.cfg", "-o", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "validate.csv")
        assert all(r[1] == "true" for r in rows[1:])

    def test_bounds(self, tmp_path):
        assert main(["bounds", "reference.cfg", "--L", "1..15", "-o", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "bounds.csv")
        assert rows[0] == ["L", "alpha", "beta", "upper_rate", "lower_rate"]
        assert len(rows) == 16

    def test_unknown_subcommand(self):
        res = run_cli("frobnicate")
        assert res.returncode == 2 and "usage" in res.stderr

    def test_missing_seed(self, tmp_path):
        res = run_cli("first-layer", "reference.cfg", "-o", tmp_path)
        assert res.returncode == 2
        assert res.stderr.strip().startswith("E_NO_SEED:") and len(res.stderr.strip().splitlines()) == 1

    def test_module_error_is_one_line(self, tmp_path):
        cfg = write_cfg(tmp_path, REF_TEXT.replace("rho = 0.1", "rho = 1.0"))
        res = run_cli("validate", cfg, "-o", tmp_path)
        assert res.returncode == 1
        lines = res.stderr.strip().splitlines()
        assert len(lines) == 1 and lines[0].startswith("E_VALIDATION: rho")

    def test_missing_file(self, tmp_path):
        res = run_cli("bounds", tmp_path / "nope.cfg")
        assert res.returncode == 1 and res.stderr.startswith("E_PARSE:")

    def test_kl_bounds_alias(self, tmp_path):
        assert main(["kl-bounds", "reference.cfg", "--gammas", "0,20", "-o", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "kl-sweep.csv")
        assert rows[0] == ["gamma", "owner", "exact_dkl", "thm4_lower", "thm4_upper", "centralized_kl"]

    def test_float_format(self, tmp_path):
        main(["gossip-stats", "reference.cfg", "-o", str(tmp_path)])
        rows = read_rows(tmp_path / "gossip-stats.csv")
        p = float(rows[1][4])
        assert repr(p) == repr(float(format(p, ".17g")))
        assert sum(float(r[4]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize(
        "argv,files",
        [
            (["bounds", "reference.cfg", "--L", "1..4"], ["bounds.csv"]),
            (["second-layer", "reference.cfg", "--gammas", "20,40"], ["second-layer.csv"]),
            (["gossip-stats", "reference.cfg", "--method", "both", "--trials", "3000", "--seed", "4"], ["gossip-stats.csv"]),
            (
                ["first-layer", "reference.cfg", "--seed", "9", "--trials", "600", "--thresholds", "10,100,1000",
                 "--modes", "centralized,isolated:4,distributed:1"],
                ["first-layer.csv", "decay-fits.csv"],
            ),
        ],
    )
    def test_manifest_rerun_identical(self, tmp_path, argv, files):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["-o", str(first)]) == 0
        manifest = next(first.glob("*-manifest.json"))
        data = json.loads(manifest.read_text())
        assert data["outputs"] == files and "version" in data and "timestamp" in data
        assert main(["rerun", str(manifest), "-o", str(second)]) == 0
        for f in files:
            assert (first / f).read_bytes() == (second / f).read_bytes()
