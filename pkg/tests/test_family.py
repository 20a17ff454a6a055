import numpy as np

from fnx.family import sample_family, standard_family


def test_family_is_reproducible_and_varied():
    a = standard_family(2, 20)
    b = standard_family(2, 20)
    assert a == b
    assert {m.kind for m in a} == {"gaussian", "modulated", "bump", "ramp"}
    assert len({m.name for m in a}) == 20


def test_members_are_compactly_supported_inside_the_box(domain):
    grids = sample_family(standard_family(2, 20), (-1.5, 1.5), 128)
    straddling = 0
    for g in grids:
        edge = np.concatenate([g.values[0], g.values[-1], g.values[:, 0], g.values[:, -1]])
        assert not edge.any()
        mask = domain.mask(g)
        assert np.abs(g.values[mask]).max() > 0
        straddling += bool(np.abs(g.values[~mask]).max() > 0)
    assert straddling == 19
