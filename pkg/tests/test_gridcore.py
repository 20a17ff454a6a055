import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fnx.gridcore import (
    GridError,
    GridFunction,
    MultiIndex,
    SupportOverflowWarning,
    UnderResolvedError,
    centered_grid,
    convolve,
    convolve_direct,
    dyadic_dilate,
    export_csv,
    moment,
    multi_indices,
    read_grid,
    sample,
    write_grid,
)


def test_sample_constant_and_cell_centres():
    one = sample(lambda x: np.ones_like(x), [(0, 1)], 4)
    assert np.all(one.values == 1) and one.spacing == 0.25
    ident = sample(lambda x: x, [(0, 1)], 4)
    assert np.allclose(ident.values, [0.125, 0.375, 0.625, 0.875])


def test_non_square_cells_are_rejected():
    with pytest.raises(GridError):
        sample(lambda x, y: x, [(0, 1), (0, 2)], (4, 4))


def test_convolution_with_scaled_unit_cell_reproduces_the_function():
    h = 2.0 / 64
    g = sample(lambda x: np.exp(-80 * x**2), [(-1, 1)], 64)
    delta = np.zeros(5)
    delta[2] = 1 / h
    out = convolve(g, centered_grid(delta, h))
    assert np.abs(out.values - g.values).max() <= 1e-10 * g.sup()


def test_box_convolution_is_a_triangle():
    cells = 512
    box = sample(lambda x: (np.abs(x) < 0.5).astype(float), [(-1, 1)], cells)
    kernel = centered_grid(np.ones(cells // 2 + 1), 2.0 / cells)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupportOverflowWarning)
        hat = convolve(box, kernel)
    x = hat.axis(0)
    triangle = np.clip(1 - np.abs(x), 0, None)
    assert np.abs(hat.values - triangle).max() < 2 * hat.spacing
    assert hat.values.max() == pytest.approx(1.0, abs=2 * hat.spacing)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (12, 10), elements=st.floats(-3, 3)), arrays(float, (5, 3), elements=st.floats(-3, 3)))
def test_fft_convolution_matches_direct_sum(a, b):
    f = GridFunction(a, (-0.6, -0.5), 0.1)
    g = centered_grid(b, 0.1)
    fast = convolve(f, g, check_overflow=False)
    slow = convolve_direct(f, g)
    scale = max(1.0, np.abs(a).sum() * np.abs(b).max())
    assert np.abs(fast.values - slow.values).max() <= 1e-12 * scale


def test_overflow_is_reported():
    f = sample(lambda x: np.ones_like(x), [(-1, 1)], 32)
    with pytest.warns(SupportOverflowWarning):
        convolve(f, centered_grid(np.ones(5), f.spacing))


def test_moments():
    gauss = sample(lambda x: np.exp(-x**2 / 2) / np.sqrt(2 * np.pi), [(-8, 8)], 1024)
    assert abs(moment(gauss, 1)) < 1e-12
    assert moment(gauss, 0) == pytest.approx(1.0, abs=1e-12)
    ind = sample(lambda x: ((x >= 0) & (x <= 1)).astype(float), [(-1, 2)], 1024)
    assert moment(ind, 1) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(ValueError):
        moment(gauss, MultiIndex((13,)))


def test_multi_indices_are_graded():
    idx = multi_indices(2, 3)
    assert [b.order for b in idx] == [0, 1, 1, 2, 2, 2]
    assert len(set(idx)) == len(idx)


def test_dyadic_dilation():
    def bump(x):
        return np.maximum(0, 1 - x**2) ** 4

    k = sample(bump, [(-2, 2)], 256)
    assert dyadic_dilate(k, 0) is k
    k1 = dyadic_dilate(k, 1)
    assert k1.integral() == pytest.approx(k.integral(), rel=1e-6)
    exact = 2 * bump(2 * k.axis(0))
    assert np.abs(k1.values - exact).max() < 1e-3
    with pytest.raises(UnderResolvedError):
        dyadic_dilate(k, 7)


def test_grid_file_round_trip(tmp_path):
    f = sample(lambda x, y: np.sin(3 * x) * y, [(-1, 1)] * 2, 16)
    write_grid(tmp_path / "f.fnxg", f)
    g = read_grid(tmp_path / "f.fnxg")
    assert g.same_grid(f) and np.array_equal(g.values, f.values)
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(GridError):
        read_grid(tmp_path / "bad")


def test_csv_export(tmp_path):
    f = sample(lambda x: x, [(0, 1)], 4)
    export_csv(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,value" and len(lines) == 5


def test_grid_rejects_non_finite_values():
    with pytest.raises(GridError):
        GridFunction(np.array([1.0, np.nan]), (0.0,), 0.5)
