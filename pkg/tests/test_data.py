import numpy as np
import pytest

from psc.data import Dataset, parse_dataset, write_dataset
from psc.errors import InsufficientDataError, NoOverlapError, SchemaError, ValidationError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_three_rows(tmp_path):
    f = _write(tmp_path / "d.csv", "z,s,y,x1\n1,0.5,1.0,0.1\n0,-0.2,0.3,2\n1,1e-3,-4,0\n")
    d = parse_dataset(f)
    assert d.n == 3 and d.d == 1
    np.testing.assert_array_equal(d.z, [1, 0, 1])
    with pytest.raises(InsufficientDataError):
        d.validate()


def test_missing_column_named(tmp_path):
    f = _write(tmp_path / "d.csv", "z,s,x1\n1,0.5,0.1\n")
    with pytest.raises(SchemaError, match="'y'"):
        parse_dataset(f)


def test_nonbinary_z_cites_row(tmp_path):
    rows = "".join(f"{2 if i == 7 else i % 2},0.1,0.2\n" for i in range(1, 10))
    f = _write(tmp_path / "d.csv", "z,s,y\n" + rows)
    with pytest.raises(ValidationError, match=r"\[7\]"):
        parse_dataset(f)


def test_unparseable_cell(tmp_path):
    f = _write(tmp_path / "d.csv", "z,s,y\n1,0.1,0.2\n0,abc,0.3\n")
    with pytest.raises(ValidationError, match=r"row 2, column 's'"):
        parse_dataset(f)


@pytest.mark.parametrize("text", ["", "z,s,y,x2\n1,0,0,0\n", "z,s,y\n1,0\n"])
def test_schema_errors(tmp_path, text):
    with pytest.raises(SchemaError):
        parse_dataset(_write(tmp_path / "d.csv", text))


def test_missing_values_rejected(tmp_path):
    with pytest.raises(ValidationError):
        parse_dataset(_write(tmp_path / "d.csv", "z,s,y\n1,,0.2\n"))


def test_covariate_order_and_extra_columns(tmp_path):
    f = _write(tmp_path / "d.csv", "id,x2,y,z,x1,s\n9,20,1,1,10,0.5\n8,21,2,0,11,0.6\n")
    d = parse_dataset(f)
    np.testing.assert_array_equal(d.x, [[10, 20], [11, 21]])
    np.testing.assert_array_equal(d.y, [1, 2])


def test_single_arm_is_no_overlap():
    d = Dataset(np.ones(30, int), np.zeros(30), np.zeros(30), np.zeros((30, 1)))
    with pytest.raises(NoOverlapError):
        d.validate()


def test_write_read_roundtrip_is_exact(tmp_path, small_data):
    path = tmp_path / "rt.csv"
    write_dataset(small_data, path)
    back = parse_dataset(path)
    for name in ("z", "s", "y", "x"):
        np.testing.assert_array_equal(getattr(back, name), getattr(small_data, name))
