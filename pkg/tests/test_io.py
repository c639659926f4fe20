import numpy as np
import pytest

from dpo_sim import __version__, analytic, io
from dpo_sim.params import DpoParams


def test_header_carries_toolkit_version():
    line = io.header_line({"kappa": 0.8, "seed": 3, "grid": [0.1, 0.2]})
    assert line == f"kappa=0.8; seed=3; grid=[0.1,0.2]; toolkit=dpo_sim {__version__}"


def test_roundtrip(tmp_path):
    path = io.write_csv(tmp_path / "sub" / "t.csv", ["a", "b"], [(1, 0.1), (2, np.float64(1 / 3))], {"x": 1.5})
    comments, cols, rows = io.read_csv(path)
    assert comments == [f"x=1.5; toolkit=dpo_sim {__version__}"]
    assert cols == ["a", "b"]
    assert rows == [[1.0, 0.1], [2.0, 1 / 3]]


def test_numpy_and_builtin_floats_written_alike(tmp_path):
    a = io.write_csv(tmp_path / "a.csv", ["v"], [(np.float64(0.1),), (np.int64(3),)])
    b = io.write_csv(tmp_path / "b.csv", ["v"], [(0.1,), (3,)])
    assert a.read_bytes() == b.read_bytes()


def test_multiline_header(tmp_path):
    path = io.write_csv(tmp_path / "m.csv", ["v"], [], "one\ntwo")
    assert path.read_text().splitlines()[:2] == ["# one", "# two"]


def test_spectrum_csv(tmp_path):
    curve = analytic.squeezing_spectrum_out(DpoParams(0.8, 0.2, 0.0), [0.0, 1.0])
    _, cols, rows = io.read_csv(io.spectrum_to_csv(curve, tmp_path / "s.csv"))
    assert cols == ["omega", "value"]
    assert rows[0] == [0.0, pytest.approx(1 / 9, abs=1e-15)]
