import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ijforest.data import DataError, Dataset, SplitRule, load_csv, save_csv


def test_load_three_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(path, "y")
    assert (d.n, d.p) == (3, 2)
    assert d.column_names == ("x1", "x2")
    np.testing.assert_array_equal(d.response, [3, 6, 9])
    np.testing.assert_array_equal(d.features[:, 1], [2, 5, 8])


def test_response_column_can_be_anywhere(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,a,b\n1,2,3\n4,5,6\n")
    d = load_csv(path, "y")
    assert d.column_names == ("a", "b")
    np.testing.assert_array_equal(d.response, [1, 4])


@pytest.mark.parametrize("cell", ["NaN", "inf", "abc", ""])
def test_bad_cell_names_row_and_column(tmp_path, cell):
    path = tmp_path / "d.csv"
    path.write_text(f"x1,x2,y\n1,2,3\n4,{cell},6\n")
    with pytest.raises(DataError, match=r"row 2, column 'x2'"):
        load_csv(path, "y")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv", "y")


def test_missing_response_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,x2\n1,2\n3,4\n")
    with pytest.raises(DataError, match="response column"):
        load_csv(path, "y")


def test_too_few_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y\n1,2\n")
    with pytest.raises(DataError, match="at least 2"):
        load_csv(path, "y")


def test_save_format(tmp_path):
    d = Dataset(np.array([[0.5], [2.0]]), np.array([1.0, 3.0]), ("x1",))
    path = tmp_path / "out.csv"
    save_csv(d, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,y"
    assert [float(v) for v in lines[1].split(",")] == [0.5, 1.0]


def test_save_to_missing_directory(tmp_path):
    d = Dataset(np.zeros((2, 1)), np.zeros(2), ("x1",))
    with pytest.raises(OSError):
        save_csv(d, tmp_path / "no_such_dir" / "out.csv")


def test_invariants_enforced():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(2), ("a", "b"))
    with pytest.raises(DataError):
        Dataset(np.zeros((1, 2)), np.zeros(1), ("a", "b"))
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan], [1.0]]), np.zeros(2), ("a",))


def test_split_rule_semantics():
    rule = SplitRule(1, 2.5)
    assert rule.goes_left([9.0, 2.5])
    assert not rule.goes_left([0.0, 2.50001])


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=finite),
    st.data(),
)
def test_round_trip_is_exact(tmp_path_factory, X, data):
    y = data.draw(arrays(np.float64, X.shape[0], elements=finite))
    names = tuple(f"c{j}" for j in range(X.shape[1]))
    d = Dataset(X, y, names, "resp")
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(d, path)
    back = load_csv(path, "resp")
    assert back == d
    assert back.column_names == names
