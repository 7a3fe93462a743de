import json

import pytest

from mmconv.cli import main
from mmconv.core import space_from_json

SPACE = {"points": 3, "root": 0, "dist": [[0, 1, 2], [1, 0, 1], [2, 1, 0]],
         "mass": [1.0, 0.5, 0.0]}


@pytest.fixture
def space_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps(SPACE))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_and_restrict(capsys, space_file):
    code, out, _ = run(capsys, "space", "validate", space_file)
    assert code == 0
    assert json.loads(out) == {"valid": True, "points": 3, "support": [0, 1], "total_mass": 1.5}
    code, out, _ = run(capsys, "space", "restrict", space_file, "0.5")
    assert code == 0 and space_from_json(json.loads(out)).mass.tolist() == [1.0, 0.0, 0.0]


def test_lowmass_and_dmd(capsys, space_file):
    code, out, _ = run(capsys, "space", "lowmass", space_file, "--delta", "0.5")
    assert code == 0 and json.loads(out)["value"] == 0.5
    code, out, _ = run(capsys, "space", "dmd", space_file, "1")
    assert code == 0
    atoms = json.loads(out)["atoms"]
    assert sorted((a["tri"][0], a["w"]) for a in atoms) == [(0.0, 1.0), (1.0, 0.5)]


def test_validation_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"points": 2, "root": 0, "dist": [[0, 1], [2, 0]],
                               "mass": [1, 1]}))
    code, _, err = run(capsys, "space", "validate", str(bad))
    assert code == 2 and err.startswith("error:")
    code, _, _ = run(capsys, "space", "validate", str(tmp_path / "missing.json"))
    assert code == 2


def test_size_limit_exit_code(capsys, tmp_path):
    n = 13
    p = tmp_path / "pr.json"
    p.write_text(json.dumps({"mu": [1.0] * n, "nu": [1.0] * n,
                             "dist": [[abs(i - j) for j in range(n)] for i in range(n)]}))
    code, _, _ = run(capsys, "dist", "pr", str(p), "--oracle")
    assert code == 3
    code, out, _ = run(capsys, "dist", "pr", str(p))
    assert code == 0 and json.loads(out)["value"] == 0.0


def test_distances(capsys, space_file, tmp_path):
    code, out, _ = run(capsys, "dist", "ghp", space_file, space_file)
    assert code == 0
    rep = json.loads(out)
    assert rep["value"] == 0.0 and rep["certificate"] == "exact"
    code, out, _ = run(capsys, "dist", "localized", space_file, space_file, "--inner", "SGHP")
    assert code == 0 and json.loads(out)["value"] == 0.0
    h = tmp_path / "h.json"
    h.write_text(json.dumps({"a": [0], "b": [0, 2], "dist": SPACE["dist"]}))
    code, out, _ = run(capsys, "dist", "hausdorff", str(h))
    assert code == 0 and json.loads(out)["value"] == 2.0


def test_generators(capsys, tmp_path):
    code, out, _ = run(capsys, "gen", "gw", "--seed", "4", "--node-cap", "30")
    assert code == 0 and "parent" in json.loads(out)
    code, out, _ = run(capsys, "gen", "brownian", "--n-grid", "10", "--pitman")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "t,value" and len(lines) == 12
    dest = tmp_path / "k.json"
    code, _, _ = run(capsys, "gen", "kallenberg", "--n", "4", "--steps", "2000",
                     "--out", str(dest))
    assert code == 0 and space_from_json(json.loads(dest.read_text())).point_count >= 1


def test_run_sequence_csv_and_json(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"indices": [1, 2, 3], "generator": {"name": "constant"}}))
    code, out, _ = run(capsys, "run", "sequence", "--config", str(cfg), "--seed", "9")
    assert code == 0 and out.startswith("# schema mmconv-report/1 kind=sequence")
    dest = tmp_path / "r.json"
    code, _, _ = run(capsys, "run", "sequence", "--config", str(cfg), "--out", str(dest))
    assert code == 0 and json.loads(dest.read_text())["kind"] == "sequence"
    cfg.write_text(json.dumps({"trials": 10}))
    code, _, _ = run(capsys, "run", "kallenberg", "--config", str(cfg))
    assert code == 2
