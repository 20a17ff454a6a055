import numpy as np
import pytest

from fnx.expdsl import parse_scalar_field
from fnx.weights import WeightError, WeightSequence, certify_admissible, weight_from_function, weight_from_smoothness


def field(src, dim=1):
    return parse_scalar_field(src, dim)


def test_zero_smoothness_gives_unit_weights():
    w = weight_from_smoothness(field("0"), jmax=8)
    assert (w.alpha, w.alpha1, w.alpha2, w.Cw) == (0.0, 0.0, 0.0, 1.0)
    assert np.all(w(5, np.linspace(-1, 1, 7)) == 1.0)


def test_constant_smoothness():
    w = weight_from_smoothness(field("1.5"), jmax=8)
    assert w.alpha == 0.0 and w.alpha1 == w.alpha2 == 1.5 and w.Cw == 1.0
    assert w(4, 0.3) == pytest.approx(2.0**6)


def test_variable_smoothness_alpha_is_stable_under_refinement():
    s = field("1 + 1/(1+x1^2)")
    coarse = weight_from_smoothness(s, jmax=8, samples=33)
    fine = weight_from_smoothness(s, jmax=8, samples=65)
    assert coarse.alpha2 == pytest.approx(2.0)
    assert coarse.alpha1 == pytest.approx(1 + 1 / (1 + 1.5**2))
    assert 0 < coarse.alpha == fine.alpha
    assert np.isfinite(coarse.Cw)


def brute_force_cw(w, alpha, pts, jmax):
    # pair enumeration oracle for max_{x,y,j} w_j(x) / (w_j(y) (1 + 2^j |x-y|)^alpha)
    best = 0.0
    for j in range(jmax + 1):
        v = w(j, pts)
        d = np.abs(pts[:, None] - pts[None, :])
        best = max(best, float((v[:, None] / v[None, :] / (1 + 2.0**j * d) ** alpha).max()))
    return best


def test_certificate_constant_matches_pair_enumeration():
    w = weight_from_function(lambda j, x: 2.0**j * (1 + np.abs(x)), 1, jmax=8)
    assert w.alpha1 == pytest.approx(1.0) and w.alpha2 == pytest.approx(1.0)
    cert = certify_admissible(w, [(-1.5, 1.5)], 33, dim=1)
    assert cert.passed and cert.condition2
    pts = np.linspace(-1.5, 1.5, 33)
    assert cert.Cw == pytest.approx(brute_force_cw(w, cert.alpha, pts, 8), rel=1e-9)


def test_constant_smoothness_certificate():
    w = weight_from_smoothness(field("0.7", 2), jmax=6)
    cert = certify_admissible(w, dim=2)
    assert cert.passed and cert.Cw == 1.0


def test_level_growth_violation_is_reported_with_witness():
    def evaluator(j, x):
        v = 2.0 ** (j * np.ones_like(x))
        return np.where((j == 1) & (np.abs(x) < 0.2), 0.5, v)

    w = WeightSequence(4, evaluator, 0.0, 1.0, 1.0, 1.0)
    cert = certify_admissible(w, [(-1, 1)], 33, dim=1)
    assert not cert.passed and not cert.condition2
    point, level = cert.witness
    assert level == 0 and abs(point[0]) < 0.2


def test_unbounded_smoothness_is_rejected():
    with pytest.raises(WeightError):
        weight_from_smoothness(field("1e9*x1"), jmax=4)
