import csv
import json
from pathlib import Path

import numpy as np
import pytest

from newsmech.cli import main
from newsmech.config import ScenarioConfig, expand_range, parse_text
from newsmech.errors import ValidationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def small_copy(tmp_path, name):
    """Copy of a shipped config with the simulation count cut down."""
    p = tmp_path / name
    p.write_text((CONFIGS / name).read_text().replace("simulate.count = 1000", "simulate.count = 60"))
    return p


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


class TestConfig:
    def test_parse(self):
        d = parse_text("kind = auction  # note\n\nenv.n = 3\nenv.x = 1.5e-1\nlist = 1, 2,3\nname = uniform\n")
        assert d == {"kind": "auction", "env.n": 3, "env.x": 0.15, "list": [1, 2, 3], "name": "uniform"}

    @pytest.mark.parametrize("text", ["kind auction", "kind = a\nkind = b", "1bad = 2", "x ="])
    def test_malformed(self, text):
        with pytest.raises(ValidationError):
            parse_text(text)

    def test_ranges(self):
        np.testing.assert_allclose(expand_range("1.0:2.0:0.1"), np.round(np.arange(11) * 0.1 + 1, 12))
        assert expand_range(3).tolist() == [3.0]
        assert expand_range([1, 2]).tolist() == [1.0, 2.0]
        with pytest.raises(ValidationError):
            expand_range("2:1:0.5")

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "a.cfg"
        p.write_text("kind = screening\ngrid_size = 11\n")
        cfg = ScenarioConfig.load(p)
        cfg.overrides["grid_size"] = 21
        assert cfg.integer("grid_size") == 21
        with pytest.raises(ValidationError):
            cfg.number("kind")


class TestRun:
    def test_sqrt_screening_q_column(self, tmp_path):
        assert run("run", CONFIGS / "screening_sqrt.cfg", "--timeline", "A", "--out-dir", tmp_path) == 0
        head, data = read_csv(tmp_path / "menu_A.csv")
        assert head == ["lambda", "q", "t"] and data.shape == (201, 3)
        np.testing.assert_allclose(data[:, 1], 1 / (1 + data[:, 0]) ** 4, rtol=1e-12)
        doc = json.loads((tmp_path / "result.json").read_text())
        assert doc["schema"] == "newsmech.result/1"
        assert doc["results"]["A"]["audit"]["pass"]

    @pytest.mark.parametrize("name", ["screening_sqrt.cfg", "auction_uniform.cfg", "public_good.cfg", "timelines_cd.cfg"])
    def test_byte_identical(self, tmp_path, name):
        cfg = small_copy(tmp_path, name)
        for sub in ("x", "y"):
            assert run("run", cfg, "--grid-size", 21, "--out-dir", tmp_path / sub) == 0
        assert files_of(tmp_path / "x") == files_of(tmp_path / "y")

    def test_malformed_leaves_nothing(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("kind = screening\nenv.G.kind = uniform\nenv.G.lo = 1\nenv.G.hi = 3\n"
                       "env.F.kind = uniform\nenv.F.lo = 0\nenv.F.hi = 1\n")
        out = tmp_path / "out"
        assert run("run", bad, "--grid-size", 11, "--out-dir", out) == 1
        assert not out.exists()
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["code"] == "validation" and "Assumption (S)" in err["error"]["message"]

    def test_unknown_kind(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("kind = lottery\n")
        assert run("run", bad, "--out-dir", tmp_path / "o") == 1

    def test_unsupported_instance(self, tmp_path, capsys):
        cfg = (CONFIGS / "auction_uniform.cfg").read_text().replace("env.lambda_g = 1.2", "env.lambda_g = 2.5")
        p = tmp_path / "a2.cfg"
        p.write_text(cfg)
        assert run("run", p, "--grid-size", 11, "--out-dir", tmp_path / "o") == 2
        assert json.loads(capsys.readouterr().err)["error"]["code"] == "unsupported"

    def test_simulate(self, tmp_path):
        assert run("run", small_copy(tmp_path, "timelines_cd.cfg"), "--out-dir", tmp_path / "o") == 0
        res = json.loads((tmp_path / "o" / "result.json").read_text())["results"]
        assert res["pass"] and res["count"] == 60
        assert res["cd_failures"] == [] and res["classical_failures"] == []
        assert run("audit", tmp_path / "o" / "result.json") == 0


class TestSweep:
    def test_auction_sweep(self, tmp_path, monkeypatch):
        assert run("sweep", CONFIGS / "auction_friction_sweep.cfg", "--grid-size", 21, "--out-dir", tmp_path / "a") == 0
        head, data = read_csv(tmp_path / "a" / "sweep.csv")
        assert head == ["friction", "rev_A", "rev_C"] and data.shape == (11, 3)
        monkeypatch.setenv("NEWSMECH_THREADS", "3")
        assert run("sweep", CONFIGS / "auction_friction_sweep.cfg", "--grid-size", 21, "--out-dir", tmp_path / "b") == 0
        assert files_of(tmp_path / "a") == files_of(tmp_path / "b")

    def test_bad_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NEWSMECH_THREADS", "many")
        assert run("sweep", CONFIGS / "auction_friction_sweep.cfg", "--grid-size", 11, "--out-dir", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_public_good_sweep(self, tmp_path):
        assert run("sweep", CONFIGS / "public_good.cfg", "--out-dir", tmp_path) == 0
        head, data = read_csv_bool(tmp_path / "sweep.csv")
        assert head == ["Lambda_g", "ic_A", "ic_B", "ic_C"]
        assert all(r[1] == "true" for r in data)

    def test_simulate_has_no_sweep(self, tmp_path):
        assert run("sweep", CONFIGS / "timelines_cd.cfg", "--out-dir", tmp_path / "o") == 1


def read_csv_bool(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestAudit:
    @pytest.fixture
    def solved(self, tmp_path):
        assert run("run", CONFIGS / "screening_sqrt.cfg", "--grid-size", 21, "--out-dir", tmp_path) == 0
        return tmp_path / "result.json"

    def test_fresh_passes_and_is_idempotent(self, solved, tmp_path):
        assert run("audit", solved, "--out", tmp_path / "v1.json") == 0
        assert run("audit", solved, "--out", tmp_path / "v2.json") == 0
        assert (tmp_path / "v1.json").read_bytes() == (tmp_path / "v2.json").read_bytes()
        verdict = json.loads((tmp_path / "v1.json").read_text())
        assert verdict["pass"] and verdict["schema"] == "newsmech.verdict/1"

    def test_tampered_transfers_fail(self, solved, tmp_path):
        doc = json.loads(solved.read_text())
        menu = doc["results"]["B"]["menu"]
        menu["t"] = [t + 0.1 if i == 5 else t for i, t in enumerate(menu["t"])]
        solved.write_text(json.dumps(doc))
        assert run("audit", solved) == 4
        verdict = json.loads(solved.with_name("verdict.json").read_text())
        assert not verdict["checks"]["B"]["pass"] and verdict["checks"]["A"]["pass"]

    def test_auction_audit(self, tmp_path):
        assert run("run", CONFIGS / "auction_uniform.cfg", "--grid-size", 11, "--out-dir", tmp_path) == 0
        assert run("audit", tmp_path / "result.json") == 0
        doc = json.loads((tmp_path / "result.json").read_text())
        doc["results"]["A"]["mechanism"]["transfer"][0]["support"] = [0.1]
        (tmp_path / "result.json").write_text(json.dumps(doc))
        assert run("audit", tmp_path / "result.json") == 4

    def test_schema_mismatch(self, tmp_path):
        p = tmp_path / "r.json"
        p.write_text(json.dumps({"schema": "other/1"}))
        assert run("audit", p) == 1
        p.write_text("{not json")
        assert run("audit", p) == 1
