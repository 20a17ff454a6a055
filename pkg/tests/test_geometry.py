import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fnx.geometry import (
    Cone,
    DomainError,
    contains,
    cone_contains,
    make_domain,
    reflect,
    restrict,
    zero_extend,
)
from fnx.gridcore import sample


@pytest.fixture(scope="module")
def half_plane():
    return make_domain("0", 1.0, 2)


@pytest.fixture(scope="module")
def vee():
    return make_domain("abs(x1)", 1.0, 2)


def test_half_plane_membership(half_plane):
    assert contains(half_plane, (0.3, 0.1))
    assert not contains(half_plane, (0.3, 0.0))


def test_vee_membership(vee):
    assert contains(vee, (0.0, 1.0))
    assert not contains(vee, (0.0, -1.0))
    assert not contains(vee, (1.0, 1.0))
    assert contains(vee, (1.0, 1.5))


def test_steep_boundary_is_rejected():
    with pytest.raises(DomainError):
        make_domain("2*abs(x1)", 1.0, 2)


def test_cone_membership():
    up = Cone(1.0, 2)
    assert cone_contains(up, (0.0, 1.0))
    assert not cone_contains(up, (2.0, 1.0))
    assert cone_contains(up.reflected(), (0.0, -1.0))
    assert not cone_contains(up, (0.0, 0.0))
    assert cone_contains(up, (0.0, 0.0), closed=True)


def test_reflection_examples(half_plane, vee):
    assert np.allclose(reflect(half_plane, (0.5, -0.3)), (0.5, 0.3))
    assert np.allclose(reflect(vee, (1.0, 0.0)), (1.0, 2.0))
    assert np.allclose(reflect(vee, (0.4, 0.4)), (0.4, 0.4))


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-1.4, 1.4))
def test_reflection_is_an_involution_swapping_sides(x1, x2):
    d = make_domain("0.1+0.2*sin(2*x1)", 1.0, 2)
    x = np.array([x1, x2])
    y = reflect(d, x)
    assert np.allclose(reflect(d, y), x, atol=1e-12)
    on_graph = abs(x2 - d.boundary(np.array([x1]))) < 1e-12
    if not on_graph:
        assert contains(d, x) != contains(d, y)


def test_zero_extension_of_constant_is_upper_indicator(half_plane):
    box = [(-1, 1)] * 2
    one = sample(lambda x, y: np.ones_like(x), box, 16)
    ext = zero_extend(one, half_plane)
    expected = (one.mesh()[1] > 0).astype(float)
    assert np.array_equal(ext.values, expected)
    zero = sample(lambda x, y: np.zeros_like(x), box, 16)
    assert not zero_extend(zero, half_plane).values.any()


def test_restriction_is_idempotent(domain):
    g = sample(lambda x, y: np.cos(x) + y, [(-1.5, 1.5)] * 2, 64)
    once = restrict(g, domain)
    assert np.array_equal(restrict(once, domain).values, once.values)


def test_one_dimensional_domain_needs_constant_boundary():
    d = make_domain("0.2", 1.0, 1)
    assert contains(d, (0.3,)) and not contains(d, (0.1,))
    with pytest.raises(DomainError):
        make_domain("x1", 1.0, 1)
