import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psc.errors import ConfigError
from psc.working_model import (TabulatedWeight, UniformWeight, WorkingModelSpec, basis_eval,
                               basis_gradient)


def test_basis_examples():
    assert basis_eval(WorkingModelSpec.parse("1"), 0.3, -2.0).tolist() == [1.0]
    assert basis_eval(WorkingModelSpec.parse("1,s1,s0"), 2.0, -1.0).tolist() == [1.0, 2.0, -1.0]
    poly = WorkingModelSpec.parse("1, s1, s1^2, s0, s0^2")
    assert basis_eval(poly, 1.0, 1.0).tolist() == [1.0] * 5
    assert poly.names == ["1", "s1", "s1^2", "s0", "s0^2"]


def test_grammar():
    spec = WorkingModelSpec.parse("s1^2*s0^3,s0*s1,1")
    assert spec.terms == ((2, 3), (1, 1), (0, 0))
    assert spec.basis_string == "s1^2*s0^3,s1*s0,1"
    assert WorkingModelSpec.parse(spec.basis_string) == spec


@pytest.mark.parametrize("bad", ["", "1,1", "s2", "s1*s1", "s1^x", "x1", "s1,s1^1"])
def test_bad_basis(bad):
    with pytest.raises(ConfigError):
        WorkingModelSpec.parse(bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_matches_finite_differences(a, b):
    spec = WorkingModelSpec.parse("1,s1,s0,s1*s0,s1^3,s0^2*s1^2")
    d1, d0 = basis_gradient(spec, a, b)
    h = 1e-6
    f1 = (basis_eval(spec, a + h, b) - basis_eval(spec, a - h, b)) / (2 * h)
    f0 = (basis_eval(spec, a, b + h) - basis_eval(spec, a, b - h)) / (2 * h)
    np.testing.assert_allclose(d1, f1, atol=1e-6 * (1 + np.abs(f1).max()))
    np.testing.assert_allclose(d0, f0, atol=1e-6 * (1 + np.abs(f0).max()))


def test_uniform_weight():
    w = UniformWeight()
    assert w(np.zeros((2, 3)), 1.0).shape == (2, 3)
    assert np.all(w.gradient(np.zeros(4), np.zeros(4))[0] == 0)
    assert WorkingModelSpec.parse("1", "uniform").weight == w


def _table(tmp_path, values):
    rows = ["s1,s0,w"]
    for i, a in enumerate((-1.0, 0.0, 2.0)):
        for j, b in enumerate((-1.0, 1.0)):
            rows.append(f"{a},{b},{values[i][j]}")
    path = tmp_path / "w.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_tabulated_weight(tmp_path):
    vals = [[0.0, 1.0], [2.0, 3.0], [4.0, 0.5]]
    w = TabulatedWeight.from_csv(_table(tmp_path, vals))
    # nodes reproduce the table
    assert w(0.0, 1.0) == pytest.approx(3.0)
    # bilinear in a cell
    assert w(-0.5, 0.0) == pytest.approx(0.25 * (0 + 1 + 2 + 3))
    # edge extension keeps the weight continuous
    assert w(5.0, 0.0) == pytest.approx(w(2.0, 0.0))
    assert w(-1.0 - 1e-12, -1.0) == pytest.approx(0.0)
    d1, d0 = w.gradient(np.array([-0.5, 5.0]), np.array([0.0, 0.0]))
    assert d1[0] == pytest.approx(2.0) and d1[1] == 0.0
    assert d0[0] == pytest.approx(0.5)
    spec = WorkingModelSpec.parse("1,s1", str(_table(tmp_path, vals)))
    assert isinstance(spec.weight, TabulatedWeight)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.99, 1.99), st.floats(-0.99, 0.99))
def test_tabulated_gradient_finite_differences(a, b):
    s1 = np.array([-1.0, 0.0, 2.0])
    s0 = np.array([-1.0, 1.0])
    w = TabulatedWeight(s1, s0, np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 0.5]]))
    if abs(a) < 1e-5:
        return
    h = 1e-7
    d1, d0 = w.gradient(a, b)
    assert d1 == pytest.approx((w(a + h, b) - w(a - h, b)) / (2 * h), abs=1e-5)
    assert d0 == pytest.approx((w(a, b + h) - w(a, b - h)) / (2 * h), abs=1e-5)


@pytest.mark.parametrize("text", ["s1,s0,w\n0,0,1\n", "s1,s0,w\n0,0,1\n1,0,1\n0,1,1\n",
                                  "s1,s0,w\n0,0,-1\n1,0,1\n0,1,1\n1,1,1\n", "a,b\n1,2\n"])
def test_bad_tables(tmp_path, text):
    path = tmp_path / "w.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        TabulatedWeight.from_csv(path)
