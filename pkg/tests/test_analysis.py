import numpy as np
import pytest

from fnx.analysis import (
    AnalysisParams,
    HypothesisError,
    check_hypotheses,
    dyadic_multiplier,
    intrinsic_norm_localmeans,
    intrinsic_norm_peetre,
    littlewood_paley_pieces,
    norm_fourier_rn,
    norm_localmeans_rn,
    peetre_maximal_domain,
    peetre_maximal_rn,
    rtrick_ratios,
)
from fnx.analysis import _domain_piece
from fnx.expdsl import parse_scalar_field
from fnx.extension import extend
from fnx.geometry import reflect, zero_extend
from fnx.gridcore import convolve, sample
from fnx.kernels import build_system
from fnx.maximal import peetre_at_points
from fnx.varspaces import MixedNormSpec
from fnx.weights import weight_from_smoothness

BOX = [(-1.5, 1.5)] * 2


@pytest.fixture(scope="module")
def setup(context):
    return context.params(), context.spec, context.weight


def smooth_line_function(cells):
    return sample(lambda x: np.exp(-4 * x**2) * np.cos(3 * x), [(-1.5, 1.5)], cells)


def test_peetre_dominates_and_is_monotone_in_a(system, family):
    f = family[1]
    for k in (0, 1, 2):
        base = np.abs(convolve(f, system.phi_level(k), check_overflow=False).values)
        low = peetre_maximal_rn(f, system, k, 2.0).values
        high = peetre_maximal_rn(f, system, k, 4.0).values
        assert np.all(low >= base) and np.all(high <= low)


def test_large_a_peetre_converges_under_refinement_and_shrinks_with_a():
    gaps = {}
    for cells in (2048, 4096, 8192):
        S = build_system(dim=1, spacing=3.0 / cells, depth=3, jmax=3)
        f = smooth_line_function(cells)
        g = np.abs(convolve(f, S.phi_level(1), check_overflow=False).values)
        gaps[cells] = [(peetre_maximal_rn(f, S, 1, a).values - g).max() / g.max() for a in (50, 200, 800)]
    # the grid value converges to the continuum gap, which shrinks as a grows
    assert abs(gaps[8192][0] - gaps[4096][0]) <= 0.05 * gaps[8192][0]
    assert gaps[8192][0] > gaps[8192][1] > gaps[8192][2]
    assert gaps[8192][2] < 0.01


def test_domain_supremum_is_bounded_by_any_extension(system, domain, family):
    f = family[2]
    mask = domain.mask(f)
    for k in (0, 1, 2):
        inner = peetre_maximal_domain(f, system, k, 3.0, domain).values
        outer = peetre_maximal_rn(f, system, k, 3.0).values
        assert np.all(inner[mask] <= outer[mask] * (1 + 1e-12) + 1e-300)


def test_domain_version_matches_whole_space_for_interior_support(system, domain):
    f = sample(lambda x, y: np.exp(1 - 1 / np.clip(1 - (x**2 + (y - 0.9) ** 2) / 0.09, 1e-12, None))
               * ((x**2 + (y - 0.9) ** 2) < 0.09), BOX, 256)
    ext = zero_extend(f, domain)
    mask = domain.mask(f)
    for k in (0, 1, 2):
        inner = peetre_maximal_domain(f, system, k, 3.0, domain).values
        whole = peetre_maximal_rn(ext, system, k, 3.0).values
        assert np.abs(inner - whole)[mask].max() <= 1e-10 * whole.max()


def test_reflection_constant_is_stable(system, domain, family):
    f = family[0]
    pts = f.points()
    below = ~domain.mask(f).ravel() & (np.abs(pts[:, 0]) < 1.0) & (pts[:, 1] > -1.0)
    for j in (0, 1, 2):
        everywhere = peetre_maximal_domain(f, system, j, 3.0, domain, everywhere=True).values.ravel()
        piece = _domain_piece(f, domain, system, j)
        worst = []
        for seed in (0, 1):
            idx = np.random.default_rng(seed).choice(np.flatnonzero(below), 200, replace=False)
            ratio = everywhere[idx] / peetre_at_points(piece, reflect(domain, pts[idx]), 2.0**j, 3.0)
            worst.append(ratio.max())
        assert max(worst) <= (1 + 2 * domain.lipschitz_A) ** 3
        assert abs(worst[0] - worst[1]) <= 0.10 * max(worst)


def test_littlewood_paley_pieces_resolve_the_identity(family):
    f = family[0]
    total = sum(p.values for p in littlewood_paley_pieces(f, 8))
    assert np.abs(total - f.values).max() <= 1e-6 * f.sup()
    radius = np.linspace(0, 200, 4001)
    assert np.allclose(sum(dyadic_multiplier(radius, j) for j in range(9)), 1.0)


def test_zero_function_has_zero_norms(context, system, domain, setup):
    prm, spec, w = setup
    zero = context.blank()
    assert norm_fourier_rn(zero, spec, w, prm).value == 0
    assert norm_localmeans_rn(zero, system, spec, w, prm).value == 0
    assert intrinsic_norm_peetre(zero, domain, system, spec, w, prm).value == 0
    assert intrinsic_norm_localmeans(zero, domain, system, spec, w, prm).value == 0


@pytest.mark.parametrize("c", [-2.0, 0.3, 7.5])
def test_norms_are_homogeneous(system, domain, family, setup, c):
    prm, spec, w = setup
    f = family[3]
    for fn in (lambda g: norm_fourier_rn(g, spec, w, prm),
               lambda g: norm_localmeans_rn(g, system, spec, w, prm),
               lambda g: intrinsic_norm_peetre(g, domain, system, spec, w, prm),
               lambda g: intrinsic_norm_localmeans(g, domain, system, spec, w, prm)):
        assert fn(f * c).value == pytest.approx(abs(c) * fn(f).value, rel=1e-9)


def test_plancherel_band_for_the_classical_case(system, family):
    spec = MixedNormSpec(parse_scalar_field("2", 2), parse_scalar_field("2", 2))
    w = weight_from_smoothness(parse_scalar_field("0", 2), jmax=8, box=BOX)
    prm = AnalysisParams(a=3.0, space="F", jmax=8)
    ratios = []
    for f in family[:10]:
        l2 = np.sqrt((f.values**2).sum() * f.cell_volume)
        ratios.append(norm_fourier_rn(f, spec, w, prm).value / l2)
    assert max(ratios) / min(ratios) < 1.1


def test_pointwise_dominations(system, domain, family, setup):
    prm, spec, w = setup
    for f in family[:3]:
        lm = norm_localmeans_rn(f, system, spec, w, prm)
        assert lm.peetre >= lm.value
        peetre = intrinsic_norm_peetre(f, domain, system, spec, w, prm).value
        assert intrinsic_norm_localmeans(f, domain, system, spec, w, prm).value <= peetre
        ext = norm_localmeans_rn(extend(f, domain, system, 8), system, spec, w, prm).value
        assert peetre <= ext


def test_small_a_is_refused_with_the_required_minimum(context, setup):
    _, spec, w = setup
    with pytest.raises(HypothesisError) as info:
        check_hypotheses(AnalysisParams(a=0.8, space="F"), spec, w, context.blank())
    assert info.value.required["a"] == pytest.approx(2 / 2)


def test_besov_bound_uses_the_regularity_of_q(context):
    spec = MixedNormSpec(parse_scalar_field("2", 2), parse_scalar_field("2+0.5*sin(x1)", 2))
    w = weight_from_smoothness(parse_scalar_field("0.5", 2), jmax=8, box=BOX)
    consts = check_hypotheses(AnalysisParams(a=3.0, space="B"), spec, w, context.blank())
    assert consts["clog_inv_q"] > 0
    assert consts["required_a"] == pytest.approx((2 + consts["clog_inv_q"]) / 2)


def test_rtrick_ratios_are_bounded(system, domain, family):
    ratios = [v for _, v in rtrick_ratios(family[0], domain, system, 3.0, 0.5, points_per_level=20)]
    assert ratios and max(ratios) < 10 and min(ratios) > 0
