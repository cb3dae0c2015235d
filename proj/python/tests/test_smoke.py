import math

import numpy as np
import pytest

import glopt


def test_case_seeds_split_domains():
    a = glopt.case_seed(1, "train", 0)
    b = glopt.case_seed(1, "eval", 0)
    assert a != b
    assert b >> 63 == 1 and a >> 63 == 0
    assert glopt.case_seed(1, "eval", 0) == b
    with pytest.raises(ValueError):
        glopt.case_seed(1, "test", 0)


def test_make_case_is_reproducible():
    seed = glopt.case_seed(7, "eval", 3)
    c1 = glopt.make_case("nightmare", seed)
    c2 = glopt.make_case("nightmare", seed)
    assert c1["xs"] == c2["xs"] and c1["ys"] == c2["ys"]
    assert len(c1["xs"]) == 40
    assert 0.25 <= c1["x_star"] <= 0.75
    assert abs(c1["curve"].argmin() - c1["x_star"]) < 1e-12
    assert c1["curve"].local_minima() >= 1


def test_preset_dict_round_trip():
    p = glopt.preset("nightmare")
    assert p["n_samples"] == 40
    p["n_samples"] = 24
    c = glopt.make_case(p, 11)
    assert len(c["xs"]) == 24


def test_spline_interpolates_and_vectorizes():
    xs = np.linspace(0, 1, 12)
    ys = np.cos(5 * xs)
    s = glopt.fit_spline(xs, ys)
    assert np.max(np.abs(s(xs) - ys)) < 1e-9
    assert math.isclose(s(float(xs[3])), ys[3], abs_tol=1e-9)
    assert 0.0 <= s.argmin() <= 1.0


def test_model_runs_inside_unit_interval():
    model = glopt.Model({"d_model": 16, "d_edv": 8, "iter_hidden": 16}, init_seed=2)
    c = glopt.make_case("nightmare", glopt.case_seed(1, "eval", 0))
    traj = model.run(c["xs"], c["ys"])
    assert traj["stop_reason"] in ("converged", "max_iters")
    assert traj["positions"][0] == traj["x0"]
    assert all(0.0 <= x <= 1.0 for x in traj["positions"])
    assert glopt.optimize(model, c["xs"], c["ys"]) == traj["x_final"]


def test_default_counts_and_published_table():
    counts = glopt.Model().param_counts()
    assert counts["total"] == counts["main_encoder"] + counts["iterator"] + counts["updater"]
    assert glopt.published_counts()["total"] == 1290846


def test_identity_evaluation_matches_spline_baseline():
    r = glopt.evaluate(None, "nightmare", n_cases=20, seed=4)
    b = glopt.spline_baseline("nightmare", n_cases=20, seed=4)
    assert r["n_evaluated"] == 20
    assert r["improvement"] == 0.0
    assert r["spline"]["mean"] == pytest.approx(b["mean"], abs=0)
    assert [c["spline_error"] for c in r["cases"]] == b["errors"]


def test_train_save_load(tmp_path):
    out = glopt.train(
        {"epochs": 2, "batch_size": 2, "seed": 5},
        {"d_model": 16, "d_edv": 8, "iter_hidden": 16},
        None,
        tmp_path / "run",
    )
    assert [rec["epoch"] for rec in out["log"]] == [1, 2]
    loaded = glopt.Model.load(tmp_path / "run")
    c = glopt.make_case("nightmare", glopt.case_seed(2, "eval", 1))
    assert loaded.run(c["xs"], c["ys"]) == out["model"].run(c["xs"], c["ys"])
    with pytest.raises(glopt.CheckpointError):
        glopt.Model.load(tmp_path / "missing")


def test_bad_config_names_field():
    with pytest.raises(ValueError, match="d_model"):
        glopt.Model({"d_model": 30})


def test_gradcheck_suites_pass():
    suites = glopt.gradcheck()
    assert suites and all(s["passed"] for s in suites)
