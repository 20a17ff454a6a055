import numpy as np
import pytest

from fnx.analysis import AnalysisParams, HypothesisError
from fnx.expdsl import parse_scalar_field
from fnx.extension import (
    bands_overlap,
    boundedness_study,
    check_extension_hypotheses,
    envelope,
    estimate_constants,
    extend,
    restriction_residuals,
    uniformity_study,
)
from fnx.gridcore import sample
from fnx.suites import CALDERON_FLOOR, EXACT_INTERIOR_TOL
from fnx.varspaces import FunctionSequence, MixedNormSpec
from fnx.weights import weight_from_smoothness

BOX = [(-1.5, 1.5)] * 2


def test_envelope_of_constant_is_itself():
    g = sample(lambda x: np.full_like(x, 2.5), [(-1, 1)], 128)
    env = envelope(FunctionSequence([g, g]), 3.0)
    for G in env.levels:
        assert np.allclose(G.values, 2.5)


def test_envelope_dominates_and_decays_like_a_spike():
    vals = np.zeros(2049)
    vals[1024] = 1.0
    g = sample(lambda x: np.zeros_like(x), [(-1, 1)], 2049).with_values(vals)
    rough = g.with_values(np.random.default_rng(0).standard_normal(2049))
    a = 2.5
    for j, G in enumerate(envelope(FunctionSequence([g, g, g]), a).levels):
        dist = np.abs(g.axis(0) - g.axis(0)[1024])
        far = dist > 0.05
        slope = np.polyfit(np.log(1 + 2.0**j * dist[far]), np.log(G.values[far]), 1)[0]
        assert slope == pytest.approx(-a, rel=0.05)
    R = envelope(FunctionSequence([rough]), a).levels[0]
    assert np.all(R.values >= np.abs(rough.values))


def test_extension_of_zero_is_zero(context, system, domain):
    assert not extend(context.blank(), domain, system, 8).values.any()


def test_extension_is_linear(system, domain, family):
    f, g = family[0], family[5]
    lhs = extend(f + 2.0 * g, domain, system, 8).values
    rhs = extend(f, domain, system, 8).values + 2.0 * extend(g, domain, system, 8).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


def test_extension_reads_only_the_domain(system, domain, family):
    f = family[4]
    noisy = f.with_values(np.where(domain.mask(f), f.values, 99.0))
    assert np.array_equal(extend(noisy, domain, system, 8).values, extend(f, domain, system, 8).values)


def test_restriction_reproduces_f_on_the_domain(system, domain, family):
    for f in family[:6]:
        res = restriction_residuals(f, domain, system, 8)
        assert res["interior"] <= CALDERON_FLOOR
        assert res["exact_interior"] <= EXACT_INTERIOR_TOL


def test_boundedness_ratios_are_homogeneous(context, system, domain, family):
    prm, spec, w = context.params(), context.spec, context.weight
    one = boundedness_study(family[:2], domain, system, spec, w, prm)
    two = boundedness_study([f * 2.0 for f in family[:2]], domain, system, spec, w, prm)
    for a, b in zip(one, two):
        assert np.isfinite(a.norm_ratio) and a.norm_ratio > 0
        assert b.norm_ratio == pytest.approx(a.norm_ratio, rel=1e-9)


def test_hypothesis_guard_reports_required_moment_order(context, system):
    spec, w = context.spec, context.weight
    with pytest.raises(HypothesisError) as info:
        check_extension_hypotheses(system, spec, w, AnalysisParams(a=7.0, space="F"), context.blank())
    assert info.value.required["L_psi"] == pytest.approx(7.0 - w.alpha1)


def test_out_of_reach_configuration_is_flagged_not_run(context, system, domain, family):
    spec = context.spec
    w = weight_from_smoothness(parse_scalar_field("0.5", 2), jmax=8, box=BOX)
    configs = [("too-steep", spec, w, AnalysisParams(a=7.0, space="F")),
               ("classical", spec, w, AnalysisParams(a=3.0, space="F"))]
    rows = uniformity_study(configs, [system], family[:2], domain)
    assert not rows[0].accepted and rows[0].band is None and rows[0].ratios == []
    assert rows[1].accepted and rows[1].band[0] <= rows[1].band[1]


def test_band_overlap():
    assert bands_overlap([(1.0, 2.0), (2.2, 3.0)])
    assert not bands_overlap([(1.0, 1.1), (3.0, 3.1)])
    assert not bands_overlap([None])


def test_proof_estimate_constants_are_finite(context, system):
    cs = estimate_constants(system, context.weight, 3.0, context.blank(), sequences=2, points=50)
    assert all(np.isfinite(c) and c > 0 for c in cs)
