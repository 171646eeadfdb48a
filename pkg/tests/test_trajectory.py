import numpy as np
import pytest

from gesture_sindy.errors import DataFormatError
from gesture_sindy.trajectory import Trajectory, read_trajectory_csv, write_trajectory_csv


def make_traj(n=10, with_a=True):
    t = np.arange(n) * 0.01
    x = np.sin(t)
    v = np.cos(t)
    a = -np.sin(t) if with_a else None
    return Trajectory(t=t, x=x, v=v, a=a)


def test_basic_properties():
    tr = make_traj(11)
    assert len(tr) == 11
    assert tr.dt == pytest.approx(0.01)
    assert tr.duration == pytest.approx(0.1)


def test_arrays_are_read_only_copies():
    t = np.arange(5) * 0.1
    x = np.zeros(5)
    tr = Trajectory(t=t, x=x, v=x.copy())
    x[0] = 99.0  # caller mutation must not leak in
    assert tr.x[0] == 0.0
    with pytest.raises(ValueError):
        tr.x[0] = 1.0


def test_validation():
    t = np.arange(4) * 0.1
    ok = np.zeros(4)
    with pytest.raises(ValueError):
        Trajectory(t=t[:1], x=ok[:1], v=ok[:1])  # too short
    with pytest.raises(ValueError):
        Trajectory(t=t[::-1], x=ok, v=ok)  # decreasing
    with pytest.raises(ValueError):
        Trajectory(t=np.array([0.0, 0.1, 0.15, 0.2]), x=ok, v=ok)  # non-uniform
    with pytest.raises(ValueError):
        Trajectory(t=t, x=np.array([0, 1, np.nan, 3.0]), v=ok)
    with pytest.raises(ValueError):
        Trajectory(t=t, x=ok, v=ok[:3])


def test_csv_round_trip_is_bit_exact(tmp_path):
    tr = make_traj(50)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, tr)
    back = read_trajectory_csv(path)
    assert np.array_equal(back.t, tr.t)
    assert np.array_equal(back.x, tr.x)
    assert np.array_equal(back.v, tr.v)
    assert np.array_equal(back.a, tr.a)


def test_csv_round_trip_without_acceleration(tmp_path):
    tr = make_traj(8, with_a=False)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, tr)
    back = read_trajectory_csv(path)
    assert back.a is None
    assert np.array_equal(back.x, tr.x)


def test_read_reports_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,pos,vel\n0,1,2\n0.1,1,2\n")
    with pytest.raises(DataFormatError) as err:
        read_trajectory_csv(path)
    assert "bad.csv" in str(err.value)


def test_read_reports_line_number_on_bad_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x,v\n0.0,1.0,2.0\n0.1,oops,2.0\n")
    with pytest.raises(DataFormatError) as err:
        read_trajectory_csv(path)
    assert ":3" in str(err.value)


def test_read_rejects_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x,v\n0.0,1.0,2.0\n0.1,1.0\n")
    with pytest.raises(DataFormatError):
        read_trajectory_csv(path)


def test_read_requires_two_samples(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("t,x,v\n0.0,1.0,2.0\n")
    with pytest.raises(DataFormatError):
        read_trajectory_csv(path)
