import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from difftopo.drivers import IterationRecord, RunHistory
from difftopo.io import (density_to_pixels, pixels_to_density, read_csv, read_pgm, write_csv,
                         write_pgm)


def test_uniform_density_pixels():
    assert np.all(density_to_pixels(np.full((2, 3), 0.3)) == 179)
    assert np.all(density_to_pixels(np.ones((2, 3))) == 0)
    assert np.all(density_to_pixels(np.zeros((2, 3))) == 255)


def test_pgm_header_and_size(tmp_path):
    p = tmp_path / "d.pgm"
    write_pgm(np.full((24, 48), 0.5), p)
    data = p.read_bytes()
    head = b"P5\n48 24\n255\n"
    assert data.startswith(head)
    assert len(data) == len(head) + 1152


def test_pgm_row_zero_is_top(tmp_path):
    x = np.zeros((3, 4))
    x[0, 1] = 1.0
    write_pgm(x, tmp_path / "t.pgm")
    pix = read_pgm(tmp_path / "t.pgm")
    assert pix[0, 1] == 0 and pix[2, 1] == 255


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1)))
def test_pgm_round_trip(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("pgm") / "x.pgm"
    write_pgm(x, p)
    pix = read_pgm(p)
    assert np.array_equal(pix, density_to_pixels(x))
    assert np.max(np.abs(pixels_to_density(pix) - x)) <= 0.5 / 255 + 1e-12


def test_pgm_rejects_bad_density(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(np.array([[1.2]]), tmp_path / "a.pgm")
    with pytest.raises(ValueError):
        write_pgm(np.ones(3), tmp_path / "a.pgm")


def test_pgm_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_pgm(np.zeros((2, 2)), tmp_path / "missing" / "a.pgm")


def _history(n):
    return RunHistory([IterationRecord(i, 100.0 / (i + 1), 0.3 + 1e-10 * i, 0.01 * (i + 1))
                       for i in range(n)])


def test_csv_rows_and_header(tmp_path):
    p = tmp_path / "h.csv"
    write_csv(_history(100), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,objective,volfrac,seconds"
    assert len(lines) == 101


def test_csv_empty_history(tmp_path):
    p = tmp_path / "h.csv"
    write_csv(RunHistory(), p)
    assert p.read_text() == "iter,objective,volfrac,seconds\n"


def test_csv_precision_round_trip(tmp_path):
    h = _history(5)
    p = tmp_path / "h.csv"
    write_csv(h, p)
    rows = read_csv(p)
    for r, rec in zip(rows, h.records):
        assert r["objective"] == pytest.approx(rec.objective, rel=1e-11)
        assert r["volfrac"] == pytest.approx(rec.volfrac, rel=1e-11)
        assert r["seconds"] >= 0


def test_csv_without_timing(tmp_path):
    p = tmp_path / "h.csv"
    write_csv(_history(3), p, timing=False)
    assert all(r["seconds"] == 0.0 for r in read_csv(p))
