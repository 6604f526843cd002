import json

import numpy as np
import pytest

from riskplan.scenario import (
    REGULAR_OBSTACLES,
    ScenarioParseError,
    ScenarioValidationError,
    corridor_scenario,
    double_integrator,
    head_on_scenario,
    load_scenario,
    random_scenario,
    save_scenario,
    scenario_digest,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)


def minimal_doc(**over):
    doc = {
        "horizon": 10,
        "dt": 1.0,
        "delta": 0.05,
        "psi": 1e-6,
        "world_bounds": {"min": [0, 0], "max": [10, 10]},
        "vehicles": [
            {
                "A": np.eye(4).tolist(),
                "B": [[0.5, 0], [0, 0.5], [1, 0], [0, 1]],
                "u_min": [-1, -1],
                "u_max": [1, 1],
                "x0_mean": [1, 1, 0, 0],
                "x0_cov": np.diag([1e-4, 1e-4, 0, 0]).tolist(),
                "w_cov": np.diag([1e-4, 1e-4, 0, 0]).tolist(),
                "goal": {"min": [7, 7], "max": [8, 8]},
                "radius": 0.1,
            }
        ],
        "obstacles": [],
    }
    doc.update(over)
    return doc


def test_minimal_document_loads(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal_doc()))
    sc = load_scenario(path)
    assert sc.N == 1
    assert sc.T == 10 and sc.delta_total == 0.05 and sc.psi == 1e-6
    assert sc.obstacles == []


def test_round_trip_through_file(tmp_path):
    sc = random_scenario(3, 3, seed=11)
    save_scenario(sc, tmp_path / "s.json")
    again = load_scenario(tmp_path / "s.json")
    assert scenario_digest(again) == scenario_digest(sc)


def test_flat_row_major_matrices_accepted():
    doc = minimal_doc()
    doc["vehicles"][0]["A"] = np.eye(4).ravel().tolist()
    sc = scenario_from_dict(doc)
    assert sc.vehicles[0].A.shape == (4, 4)


def test_non_psd_covariance_names_vehicle():
    doc = minimal_doc()
    doc["vehicles"].append(json.loads(json.dumps(doc["vehicles"][0])))
    doc["vehicles"][1]["x0_cov"] = np.diag([1.0, -1.0, 0, 0]).tolist()
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    assert any("vehicle 1" in p and "x0_cov" in p for p in err.value.problems)


def test_validation_lists_every_problem():
    doc = minimal_doc(delta=0.7, horizon=0)
    doc["vehicles"][0]["u_min"] = [2, 2]
    doc["vehicles"][0]["x0_mean"] = [20, 1, 0, 0]
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    text = "\n".join(err.value.problems)
    for fragment in ("horizon", "delta", "u_min", "start outside"):
        assert fragment in text


def test_clockwise_obstacle_rejected():
    doc = minimal_doc(obstacles=[{"vertices": [[4, 4], [4, 5], [5, 5], [5, 4]]}])
    with pytest.raises(ScenarioValidationError):
        scenario_from_dict(doc)


@pytest.mark.parametrize(
    "bad",
    [
        "not json",
        json.dumps([1, 2]),
        json.dumps({"horizon": 10}),
        json.dumps(minimal_doc(vehicles=[{"A": [[1]]}])),
    ],
)
def test_malformed_documents(tmp_path, bad):
    path = tmp_path / "bad.json"
    path.write_text(bad)
    with pytest.raises(ScenarioParseError):
        load_scenario(path)


def test_random_scenario_deterministic():
    assert scenario_digest(random_scenario(2, 3, seed=7)) == scenario_digest(random_scenario(2, 3, seed=7))


def test_random_scenario_seeds_differ():
    starts = {tuple(random_scenario(2, 3, seed=s).vehicles[0].x0_mean[:2]) for s in range(20)}
    assert len(starts) == 20


def test_random_scenario_double_integrator():
    sc = random_scenario(8, 3, seed=3)
    A, B = double_integrator(1.0)
    for v in sc.vehicles:
        np.testing.assert_array_equal(v.A, A)
        np.testing.assert_array_equal(v.B, B)
    A, B = double_integrator(0.5)
    assert A[0, 2] == 0.5 and A[1, 3] == 0.5
    assert B[0, 0] == 0.125 and B[2, 0] == 0.5


def test_random_scenario_separation_and_clearance():
    sc = random_scenario(8, 3, seed=5)
    pts = [v.x0_mean[:2] for v in sc.vehicles] + [v.goal.center for v in sc.vehicles]
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            assert np.linalg.norm(pts[a] - pts[b]) >= 2 * 0.1
        for ob in sc.obstacles:
            assert not ob.contains(pts[a])
        assert sc.world_bounds.contains(pts[a])


def test_single_vehicle_start_differs_from_goal():
    v = random_scenario(1, 0, seed=9).vehicles[0]
    assert not np.allclose(v.x0_mean[:2], v.goal.center)


def test_regular_obstacle_layout():
    sc = random_scenario(2, 3, seed=0)
    assert len(sc.obstacles) == len(REGULAR_OBSTACLES)
    extra = random_scenario(2, 5, seed=0)
    assert len(extra.obstacles) == 5


def test_crowded_world_fails():
    with pytest.raises(ValueError):
        random_scenario(40, 3, seed=0, min_separation=3.0, max_attempts=200)


def test_validation_idempotent():
    sc = random_scenario(3, 3, seed=1)
    assert validate(validate(sc)) is sc


def test_named_fixtures_validate():
    assert head_on_scenario().N == 2
    sc = corridor_scenario(4)
    ys = [v.x0_mean[1] for v in sc.vehicles]
    assert ys == sorted(ys) and min(np.diff(ys)) > 2.0
    assert scenario_to_dict(sc)["horizon"] == 10
