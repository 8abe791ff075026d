"""File-format checks: grid CSV round trips, witness/classification dumps,
problem JSON loading and its schema errors."""

import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from heisvisc import rng
from heisvisc.cones import ConeSpec
from heisvisc.envelopes import upper_envelope
from heisvisc.fields import Domain, GridField, parse_field, sample
from heisvisc.gridio import (
    classification_csv_text,
    grid_csv_text,
    load_problem,
    problem_from_json,
    read_grid_csv,
    residuals_csv_text,
    witness_csv_text,
    write_grid_csv,
)
from heisvisc.operators import OperatorSpec
from heisvisc.perron import bracket_from_boundary, solve
from heisvisc.viscosity import TAG_NAMES, classify_grid

BOX1 = np.array([[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]])


def random_grid(seed=7, res=(6, 5, 4)):
    g = rng.stream(seed)
    values = g.standard_normal(res)
    return GridField(1, BOX1.copy(), values)


def test_grid_csv_round_trip_is_exact(tmp_path):
    g = random_grid()
    p = tmp_path / "g.csv"
    write_grid_csv(g, p)
    back = read_grid_csv(p)
    assert back.n == g.n
    assert back.res == g.res
    assert_array_equal(back.box, g.box)
    assert_array_equal(back.values, g.values)


def test_grid_csv_is_byte_stable(tmp_path):
    g = random_grid(seed=11)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_grid_csv(g, a)
    write_grid_csv(g, b)
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()


def test_grid_csv_headers_and_columns():
    g = random_grid(res=(3, 3, 3))
    lines = grid_csv_text(g).splitlines()
    assert lines[0] == "# n=1"
    assert lines[1].startswith("# box=-1.0..1.0,")
    assert lines[2] == "# res=3,3,3"
    assert lines[3] == "i,j,k,x,y,t,value"
    assert len(lines) == 4 + 27
    first = lines[4].split(",")
    assert first[:3] == ["0", "0", "0"]
    assert float(first[3]) == -1.0


def test_grid_csv_preserves_awkward_floats(tmp_path):
    values = np.array([0.1 + 0.2, 1e-17, -3.0, np.pi, 2.0 / 3.0, 1e300, -1e-300, 0.0]).reshape(
        2, 2, 2
    )
    box = np.array([[0.0, 1.0], [0.0, 1.0], [-1.0, 1.0]])
    g = GridField(1, box, values)
    p = tmp_path / "g.csv"
    write_grid_csv(g, p)
    assert_array_equal(read_grid_csv(p).values, values)


def test_grid_csv_n2_round_trip(tmp_path):
    box = np.array([[-1.0, 1.0]] * 5)
    vals = rng.stream(3).standard_normal((3, 3, 3, 3, 3))
    g = GridField(2, box, vals)
    p = tmp_path / "g5.csv"
    write_grid_csv(g, p)
    lines = p.read_text().splitlines()
    assert lines[3] == "i1,i2,i3,i4,i5,x1,x2,y1,y2,t,value"
    back = read_grid_csv(p)
    assert back.n == 2
    assert_array_equal(back.values, vals)


def test_grid_csv_rejects_malformed(tmp_path):
    g = random_grid(res=(3, 3, 3))
    text = grid_csv_text(g)
    p = tmp_path / "bad.csv"

    p.write_text(text.replace("# n=1\n", ""))
    with pytest.raises(ValueError, match="missing"):
        read_grid_csv(p)

    p.write_text(text.replace("i,j,k", "a,b,c"))
    with pytest.raises(ValueError, match="header"):
        read_grid_csv(p)

    p.write_text("\n".join(text.splitlines()[:-4]) + "\n")
    with pytest.raises(ValueError, match="rows"):
        read_grid_csv(p)


def test_witness_csv_matches_envelope():
    v = sample(parse_field("x1*x1 - y1", 1), Domain(BOX1), (5, 5, 5))
    r = upper_envelope(v, 0.5)
    lines = witness_csv_text(r).splitlines()
    assert lines[0] == "# res=5,5,5"
    assert lines[1] == "# eps=0.5"
    assert lines[2] == "# mode=upper"
    assert lines[3] == "node,witness"
    assert len(lines) == 4 + 125
    node, wit = lines[4].split(",")
    assert int(node) == 0
    assert int(wit) == r.witness.ravel()[0]


def test_classification_csv_layout():
    g = sample(parse_field("x1*x1 + y1*y1", 1), Domain(BOX1), (5, 5, 5))
    c = classify_grid(g, OperatorSpec(0.0, 0.0, 0.0), ConeSpec("trace"), side="sub")
    lines = classification_csv_text(c).splitlines()
    assert lines[0] == "# side=sub"
    assert lines[1] == "# res=5,5,5"
    assert lines[2] == "node,tag,margin"
    assert len(lines) == 3 + 125
    tags = {ln.split(",")[1] for ln in lines[3:]}
    assert tags <= set(TAG_NAMES)
    assert "SubOK" in tags and "Untestable" in tags


def test_residuals_csv_layout():
    lines = residuals_csv_text([0.5, 0.25]).splitlines()
    assert lines == ["sweep,residual", "1,0.5", "2,0.25"]


def base_problem_json():
    return {
        "domain": {"n": 1, "box": [[-1.0, 1.0]] * 3},
        "resolution": [7, 7, 7],
        "operator": {"alpha": 0.0, "beta": 0.0, "gamma": 0.0, "m": 2.0},
        "cone": {"family": "trace"},
        "boundary": "x1",
        "bracket": {"scale": 0.3},
    }


def test_problem_json_bracket_recipe(tmp_path):
    p = tmp_path / "prob.json"
    p.write_text(json.dumps(base_problem_json()))
    prob = load_problem(p)
    assert prob.spec.is_constant
    assert prob.cone.family == "trace"
    assert prob.res == (7, 7, 7)
    res = solve(prob)
    assert res.converged


def test_problem_json_explicit_grids(tmp_path):
    data = base_problem_json()
    g = parse_field("x1", 1)
    v, w = bracket_from_boundary(g, Domain(BOX1), (7, 7, 7), 0.3)
    write_grid_csv(v, tmp_path / "v.csv")
    write_grid_csv(w, tmp_path / "w.csv")
    del data["bracket"]
    data["sub"] = "v.csv"
    data["sup"] = "w.csv"
    p = tmp_path / "prob.json"
    p.write_text(json.dumps(data))
    prob = load_problem(p)
    assert_array_equal(prob.sub.values, v.values)
    assert_array_equal(prob.sup.values, w.values)


@pytest.mark.parametrize(
    "drop, path",
    [
        ("cone", "cone"),
        ("operator", "operator"),
        ("boundary", "boundary"),
        ("resolution", "resolution"),
        ("domain", "domain"),
        ("bracket", "'sub'/'sup' or 'bracket'"),
    ],
)
def test_problem_json_missing_field_names_path(drop, path):
    data = base_problem_json()
    del data[drop]
    with pytest.raises(ValueError, match="missing required field") as exc:
        problem_from_json(data)
    assert path in str(exc.value)


def test_problem_json_nested_missing_field():
    data = base_problem_json()
    del data["domain"]["n"]
    with pytest.raises(ValueError, match="domain.n"):
        problem_from_json(data)
    data = base_problem_json()
    del data["cone"]["family"]
    with pytest.raises(ValueError, match="cone.family"):
        problem_from_json(data)


def test_problem_json_rejects_expression_operator():
    data = base_problem_json()
    data["operator"]["alpha"] = "s"
    with pytest.raises(ValueError, match="constant"):
        problem_from_json(data)


def test_problem_json_rejects_bad_file(tmp_path):
    p = tmp_path / "prob.json"
    p.write_text("{not json")
    with pytest.raises(ValueError, match="not valid JSON"):
        load_problem(p)
