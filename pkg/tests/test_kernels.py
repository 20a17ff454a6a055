import dataclasses

import numpy as np
import pytest

from fnx.geometry import Cone
from fnx.gridcore import moment, multi_indices, sample
from fnx.kernels import (
    KernelError,
    build_system,
    calderon_residual,
    construct_phi0,
    construct_psi,
    decay_slopes,
    derive_phi,
    gram_kernel,
    interaction_integrals,
    moment_residuals,
    read_bundle,
    support_violation,
    tauberian_check,
    universal_system,
    verified_moment_order,
    well_resolved_depth,
    write_bundle,
)
from fnx.suites import CALDERON_FLOOR

H = 3.0 / 256
CONE = Cone(1.0, 2, -1)


@pytest.fixture(scope="module")
def line_system():
    return build_system(dim=1, spacing=3.0 / 4096)


def raw_moments(kernel, below):
    return {b.components: moment(kernel, b) for b in multi_indices(kernel.ndim, below)}


def test_start_function_with_one_moment_is_normalised():
    phi0 = construct_phi0(CONE, 1, 0.25, H)
    assert moment(phi0.grid, (0, 0)) == pytest.approx(1.0, abs=1e-8)


def test_start_function_first_moments_vanish():
    m = raw_moments(construct_phi0(CONE, 2, 0.25, H).grid, 2)
    assert m[(0, 0)] == pytest.approx(1.0, abs=1e-8)
    assert abs(m[(1, 0)]) < 1e-8 and abs(m[(0, 1)]) < 1e-8


def test_start_function_moments_and_cone_support():
    phi0 = construct_phi0(CONE, 4, 0.25, H)
    m = raw_moments(phi0.grid, 4)
    assert max(abs(v) for b, v in m.items() if sum(b) >= 1) < 1e-7
    assert support_violation(phi0.grid, 0.25, 1.0) == 0.0
    # cells outside -K carry exactly zero
    x, y = phi0.grid.mesh()
    assert not phi0.grid.values[np.abs(x) > -y].any()


def test_start_function_needs_the_reflected_cone():
    with pytest.raises(KernelError):
        construct_phi0(Cone(1.0, 2, 1), 2, 0.25, H)


def test_generator_moments():
    phi = derive_phi(construct_phi0(CONE, 3, 0.25, H))
    m = raw_moments(phi, 3)
    assert abs(m[(0, 0)]) < 1e-10
    assert max(abs(v) for v in m.values()) < 1e-7


def test_dual_generator_has_the_requested_moments():
    phi0 = construct_phi0(CONE, 4, 0.25, H)
    psi0, psi = construct_psi(phi0, derive_phi(phi0), 6)
    assert psi0.integral() == pytest.approx(1.0, abs=1e-8)
    assert verified_moment_order(psi, 2 * 3 * 0.25, skip_zeroth=False) >= 6


def test_default_system(system):
    assert system.L_phi >= system.L_phi_target and system.L_psi >= system.L_psi_target
    for label, kernel, radius in (("phi", system.phi_generator, 2 * system.radius),
                                  ("psi", system.psi_generator, 2 * system.multiplier_degree * system.radius)):
        res = moment_residuals(kernel, getattr(system, f"L_{label}_target"), radius)
        assert max(res.values()) < 1e-7, label
    assert system.tauber_epsilon > 0


def test_telescoping_matches_direct_level_kernel():
    top = 5
    h = 3.0 / 4096
    S = build_system(dim=1, spacing=h, jmax=top, depth=top)
    size = max(k.dims[0] for k in S.phi_levels)
    total = np.zeros(size)
    for k in S.phi_levels:
        pad = (size - k.dims[0]) // 2
        total[pad:pad + k.dims[0]] += k.values
    ref = gram_kernel(h, 0.25 * 2.0**-top, 1.0, 4, 1).grid.values
    pad = (size - ref.shape[0]) // 2
    assert np.abs(total[pad:pad + ref.shape[0]] - ref).max() < 1e-6 * np.abs(ref).max()
    assert np.abs(np.delete(total, np.s_[pad:pad + ref.shape[0]])).max() < 1e-12 * np.abs(ref).max()


def test_tauberian_radius_is_stable_under_refinement():
    eps = [build_system(dim=1, spacing=3.0 / c).tauber_epsilon for c in (4096, 8192)]
    assert eps[0] > 0
    assert abs(eps[1] - eps[0]) <= 0.10 * eps[0]


def test_tauberian_check_rejects_a_mean_zero_start_function(line_system):
    broken = dataclasses.replace(line_system, phi_levels=(line_system.phi_generator,) + line_system.phi_levels[1:])
    with pytest.raises(KernelError):
        tauberian_check(broken)


def test_calderon_reproduces_a_gaussian(system):
    f = sample(lambda x, y: np.exp(-8 * (x**2 + (y - 0.1) ** 2)), [(-1.5, 1.5)] * 2, 256)
    assert calderon_residual(system, f, 8) <= 1e-3


def test_calderon_residual_decreases_for_a_wavelet_bump(line_system):
    f = sample(lambda x: (1 - 20 * x**2) * np.exp(-10 * x**2), [(-1.5, 1.5)], 4096)
    res = [calderon_residual(line_system, f, J) for J in range(2, 9)]
    # strictly decreasing until the rounding floor, then staying below it
    assert all(b < a or max(a, b) <= CALDERON_FLOOR for a, b in zip(res, res[1:]))
    assert res[-1] <= CALDERON_FLOOR


def test_calderon_reproduces_constants(system):
    one = sample(lambda x, y: np.ones_like(x), [(-1.5, 1.5)] * 2, 256)
    assert calderon_residual(system, one, 8) <= 1e-3


def test_calderon_needs_a_nonzero_function(line_system):
    zero = sample(lambda x: np.zeros_like(x), [(-1.5, 1.5)], 4096)
    with pytest.raises(ValueError):
        calderon_residual(line_system, zero, 8)


def test_universal_family_passes_its_own_moment_checks():
    systems = universal_system(3, dim=1, spacing=3.0 / 4096)
    assert len(systems) == 3
    for L, S in enumerate(systems, start=1):
        assert S.L_phi >= L and S.L_psi >= L


def test_depth_caps_levels_and_enters_the_hash():
    full = build_system(dim=1, spacing=3.0 / 4096)
    capped = build_system(dim=1, spacing=3.0 / 4096, depth=2)
    assert capped.resolved_levels == 2 and capped.config_hash != full.config_hash
    assert well_resolved_depth(3.0 / 256, 0.25) == 0
    assert well_resolved_depth(3.0 / 4096, 0.25) == 4


def test_interaction_integrals_decay_off_the_diagonal(line_system):
    I = interaction_integrals(line_system, 3.0)
    fit = decay_slopes(line_system, I, 3.0)
    assert fit["psi_side"]["fitted"] < 0 and fit["phi_side"]["fitted"] < 0


def test_bundle_round_trip(line_system, tmp_path):
    write_bundle(line_system, tmp_path / "bundle")
    back = read_bundle(tmp_path / "bundle")
    assert back.config_hash == line_system.config_hash
    for a, b in zip(back.psi_levels, line_system.psi_levels):
        assert np.array_equal(a.values, b.values)
