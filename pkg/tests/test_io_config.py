import dataclasses
import json

import numpy as np
import pytest

from ldceval.config import config_hash, default_profile, load_mapping, load_profile
from ldceval.controller import ControllerParams, run_controlled
from ldceval.errors import SchemaError
from ldceval.features import DepartureEvent
from ldceval.io import read_csv, read_events, read_features, write_events, write_features, write_trajectory
from ldceval.vehicle import VehicleParams


def test_events_round_trip_exactly(tmp_path, noiseless_event):
    path = tmp_path / "ev.csv"
    left = dataclasses.replace(noiseless_event.mirrored(), event_id="other")
    write_events([noiseless_event, left], path, ["seed=1"])
    back = read_events(path)
    assert [e.side.value for e in back] == ["R", "L"]
    np.testing.assert_array_equal(back[0].y, noiseless_event.y)
    np.testing.assert_array_equal(back[1].c, -noiseless_event.c)


def test_reader_resamples_nonuniform_grid(tmp_path):
    t = np.array([0.0, 0.1, 0.25, 0.3])
    path = tmp_path / "ev.csv"
    write_events([DepartureEvent(t, t, np.full(4, 10.0), np.zeros(4), "R", "a")], path)
    ev = read_events(path)[0]
    assert ev.spacing == pytest.approx(0.1)
    with pytest.raises(Exception, match="non-uniform"):
        read_events(path, resample=False)[0].spacing


def test_missing_column_reports_names(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("event_id,side,t,y\n")
    with pytest.raises(SchemaError, match="missing column"):
        read_events(path)


def test_bad_number_reports_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("event_id,side,t,y,v,c\na,R,0.0,0,10,0\na,R,0.1,x,10,0\n")
    with pytest.raises(SchemaError, match=r"row 3, column 'y'"):
        read_events(path)


def test_wrong_schema_tag(tmp_path, noiseless_event):
    path = tmp_path / "f.csv"
    write_events([noiseless_event], path)
    text = path.read_text().replace("ldceval.events/1", "ldceval.events/9")
    path.write_text(text)
    with pytest.raises(SchemaError, match="schema"):
        read_events(path)


def test_features_round_trip(tmp_path):
    X = np.random.default_rng(0).normal(size=(3, 8))
    path = tmp_path / "f.csv"
    write_features(["a", "b", "c"], ["R", "L", "R"], X, path)
    ids, sides, back = read_features(path)
    assert ids == ["a", "b", "c"] and sides == ["R", "L", "R"]
    np.testing.assert_array_equal(back, X)


def test_trajectory_file(tmp_path, noiseless_event):
    traj = run_controlled(noiseless_event)
    path = tmp_path / "tr.csv"
    write_trajectory(traj, path)
    rows, comments = read_csv(path, ("t", "e_y", "delta", "triggered"))
    assert len(rows) == len(traj.t) and "schema=ldceval.trajectory/1" in comments
    assert float(rows[-1]["e_y"]) == traj.e_y[-1]


def test_default_profile_values():
    vehicle, ctrl, sim = load_profile()
    assert vehicle == VehicleParams() and ctrl == ControllerParams()
    assert sim["T_s"] == 0.05
    assert set(default_profile()) == {"vehicle", "controller", "simulation"}


def test_profile_overrides_and_validation(tmp_path):
    path = tmp_path / "p.toml"
    path.write_text("[vehicle]\nM = 1500.0\n[controller]\nT_lp = 1.0\n")
    vehicle, ctrl, _ = load_profile(path)
    assert vehicle.M == 1500.0 and vehicle.I_z == 3344.0 and ctrl.T_lp == 1.0
    path.write_text("[vehicle]\nmass = 1.0\n")
    with pytest.raises(ValueError, match="unknown"):
        load_profile(path)
    path.write_text("[controller]\nw_l = 1.0\n")
    with pytest.raises(ValueError, match="lane width"):
        load_profile(path)


def test_load_mapping_formats(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"seed": 3}))
    (tmp_path / "a.toml").write_text("seed = 3\n")
    assert load_mapping(tmp_path / "a.json") == load_mapping(tmp_path / "a.toml") == {"seed": 3}
    (tmp_path / "a.yaml").write_text("seed: 3\n")
    with pytest.raises(ValueError):
        load_mapping(tmp_path / "a.yaml")


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
