import json
import math

import numpy as np
import pytest

from mmconv.errors import ValidationError
from mmconv.harness import (
    ConvergenceReport,
    corner_ball_mass,
    cube_space,
    generator_agreement,
    run_cube,
    run_kallenberg,
    run_measure_swap,
    run_sequence,
    trend_passes,
)


def test_trend_passes():
    assert trend_passes([0.5, 0.3, 0.2, 0.1], 0.1)
    assert not trend_passes([0.3, 0.2, 0.2], 0.5)
    assert trend_passes([1.0, 0.0, 0.0, 0.0], 0.0)
    assert not trend_passes([0.3, 0.2], 1.0)
    assert not trend_passes([0.3, 0.2, 0.15], 0.1)
    assert trend_passes([None, 0.3, 0.2, 0.1], 0.1)


def test_csv_cells_and_header():
    rep = ConvergenceReport("sequence", {"seed": 1}, ["n", "x", "ok", "note"],
                            [{"n": 1, "x": np.float64(0.1), "ok": True, "note": None}],
                            {"f": False}, {"seed": 1})
    lines = rep.to_csv().splitlines()
    assert lines[0] == "# schema mmconv-report/1 kind=sequence"
    assert lines[3] == '# flags {"f": false}'
    assert lines[4:] == ["n,x,ok,note", "1,0.1,true,"]
    assert rep.to_json()["rows"] == [{"n": 1, "x": 0.1, "ok": True, "note": None}]


def test_constant_sequence_is_all_zero():
    rep = run_sequence({"indices": [1, 2, 3], "generator": {"name": "constant"}})
    for col in ("dmd_m1", "ghp_ub", "localized_gp", "localized_sghp"):
        assert rep.column(col) == [0.0, 0.0, 0.0]
    assert rep.flags["gromov_weak_trend"] and rep.flags["ghw_trend"]
    assert rep.flags["mass_bound_holds"]


def test_mass_perturb_sequence_decreases():
    rep = run_sequence({"indices": [1, 2, 4, 8], "m_list": [1, 2],
                        "generator": {"name": "mass_perturb"}, "thresholds": {"weak": 10.0}})
    for col in ("dmd_m1", "dmd_m2", "ghp_ub"):
        v = rep.column(col)
        assert all(a > b for a, b in zip(v, v[1:])), col
    # total mass 4.5 scaled by 1 + 1/n: the gap is a lower bound for every metric
    assert all(g >= 4.5 / n - 1e-12 for g, n in zip(rep.column("ghp_ub"), rep.column("n")))
    assert rep.flags["gromov_weak_trend"]


def test_sequence_config_validation():
    with pytest.raises(ValidationError):
        run_sequence({"indices": [2, 1], "generator": {"name": "constant"}})
    with pytest.raises(ValidationError):
        run_sequence({"indices": [1], "generator": {"name": "nope"}})
    with pytest.raises(ValidationError):
        run_sequence({"indices": [1]})
    with pytest.raises(ValidationError):
        run_cube({"dims": [7]})
    with pytest.raises(ValidationError):
        run_kallenberg({"trials": 10})


def test_cube_space_and_corner_mass():
    x = cube_space(2, 0.1, 50, 3)
    assert x.point_count == 51 and math.isclose(x.total_mass, 1.0)
    assert np.array_equal(x.dist, cube_space(2, 0.1, 50, 3).dist)
    assert corner_ball_mass(1, 0.1, 0.1) == pytest.approx(0.01)
    assert corner_ball_mass(2, 0.1, 0.1) == pytest.approx(0.1 * math.pi * 0.01 / 4)


def test_small_cube_is_deterministic_across_workers():
    cfg = {"dims": [1, 2], "mc_points": 100, "seed": 5}
    a, b = run_cube(cfg, workers=1), run_cube(cfg, workers=2)
    assert a.to_csv() == b.to_csv()
    assert a.kind == "cube" and a.column("n") == [1, 2]


def test_swap_bounds_and_alpha_scaling():
    rep = run_measure_swap({"trees": 6, "alphas": [0.5, 1.0], "R": 100.0, "localized": False})
    assert rep.flags["bounds_hold"]
    for r in rep.rows:
        assert r["case"] == "bounded"
        assert r["pr_deg_bound"] == r["alpha"] / 2 + r["h"]
    half = [r for r in rep.rows if r["alpha"] == 0.5]
    one = [r for r in rep.rows if r["alpha"] == 1.0]
    assert [r["pr_deg_bound"] for r in half] == [r["pr_deg_bound"] / 2 for r in one]


def test_swap_boundary_case_and_localized():
    rep = run_measure_swap({"trees": 12, "R": 1.5, "seed": 2})
    assert rep.flags["bounds_hold"]
    assert all(r["localized_gp_deg"] >= 0 for r in rep.rows)
    assert any(r["case"] == "boundary" and r["pr_nod_bound"] is None for r in rep.rows)


def test_kallenberg_small_run():
    cfg = {"trials": 50, "n_list": [4, 16], "seed": 3}
    a = run_kallenberg(cfg)
    assert a.column("n") == [4, 16]
    assert all(0 <= k <= 1 for k in a.column("ks"))
    assert a.to_csv() == run_kallenberg(cfg).to_csv()
    assert json.loads(a.to_csv().splitlines()[1][len("# config "):])["trials"] == 50


def test_generator_agreement_shape():
    out = generator_agreement(200, 2000, 1)
    assert set(out) == {"ks", "critical_1pct", "agree"}
    assert out["critical_1pct"] == pytest.approx(1.628 * math.sqrt(2 / 200))
