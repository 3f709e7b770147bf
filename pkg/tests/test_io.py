import json

import numpy as np
import pytest

from coagss import io
from coagss.discretization import SampledFunction
from coagss.errors import DomainError
from coagss.kernels import KernelSpec
from coagss.solver import Profile


def test_csv_round_trip_bitwise(tmp_path, constant_solution):
    p, _ = constant_solution
    path = tmp_path / "p.csv"
    io.write_profile_csv(path, p, 1.0)
    back = io.read_profile_csv(path, p.kernel)
    assert np.array_equal(back.f.values, p.f.values)
    assert np.array_equal(back.grid.nodes, p.grid.nodes)


def test_csv_format(tmp_path, oracle):
    path = tmp_path / "p.csv"
    io.write_profile_csv(path, oracle, 1.0)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "x,f,a,u" and lines[-1] == ""
    assert len(lines) == oracle.grid.size + 2
    row = lines[5].split(",")
    assert [float(c) for c in row][:2] == [oracle.grid.nodes[4], oracle.f.values[4]]


def test_u_column_without_astar(tmp_path, oracle):
    path = tmp_path / "p.csv"
    io.write_profile_csv(path, oracle, None)
    assert path.read_text().split("\n")[1].endswith(",nan")


@pytest.mark.parametrize("text", [
    "a,b,c,d\n1,2,3,4\n",
    "x,f,a,u\n1,2,3,4\n2,oops,3,4\n3,1,1,1\n",
    "x,f,a,u\n1,1,1,1\n",
    "x,f,a,u\n1,1,1,1\n0.5,1,1,1\n0.2,1,1,1\n",
])
def test_malformed_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DomainError):
        io.read_profile_csv(path, KernelSpec.constant())


def test_negative_value_rejected(tmp_path, oracle):
    path = tmp_path / "p.csv"
    io.write_profile_csv(path, oracle, 1.0)
    lines = path.read_text().split("\n")
    cells = lines[3].split(",")
    cells[1] = "-1"
    lines[3] = ",".join(cells)
    path.write_text("\n".join(lines))
    with pytest.raises(DomainError):
        io.read_profile_csv(path, KernelSpec.constant())


def test_report_schema_and_cleaning(tmp_path):
    path = tmp_path / "r.json"
    io.write_report(path, {"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": (True,)})
    text = path.read_text()
    assert text.endswith("\n")
    data = json.loads(text)
    assert data == {"schema": 1, "a": [2, None], "b": 1.5, "c": [True]}
    assert io.read_report(path) == data
