import numpy as np
import pytest

from layercal import attenuation as att
from layercal.attenuation import AttenuationProfile
from layercal.model import AcousticMaterial, ConfigError, GridSpec, PhysicsKind, build_layout
from layercal.staggered import CENTER, FACE, Discretization

GRID1 = GridSpec((14,), (0.1,), ((0, 10),), sublayer_count=5)


def _disc(grid):
    return Discretization.build(PhysicsKind.ACOUSTIC, AcousticMaterial(1.0, 1.0), grid, (False,) * grid.dim)


def test_polynomial_evaluation():
    p = AttenuationProfile("polynomial", GRID1, order=0, values=[5.0])
    assert p.controls().lower[0] == -np.inf
    assert att.eval_af(p, 0, 0.9) == 5.0
    assert att.eval_af(p, 0, 0.2) == 0.0  # interest region
    q = AttenuationProfile("polynomial", GRID1, order=2, values=[0.0, 0.0, 1.0])
    assert att.eval_af(q, 0, 0.9) == pytest.approx(0.25)  # g = 0.5 at the layer midpoint
    assert att.eval_af(q, 0, 1.4) == pytest.approx(1.0)


def test_piecewise_bins_half_open():
    p = AttenuationProfile("piecewise", GRID1, bins=2, values=[1.0, 2.0])
    assert att.eval_af(p, 0, 0.45) == 1.0
    assert att.eval_af(p, 0, 0.9) == 2.0  # g = 0.5 starts the second bin
    assert att.eval_af(p, 0, 1.4) == 2.0  # last bin closed


def test_rasterize_cell_centres():
    grid = GridSpec((6,), (1.0,), ((0, 4),), sublayer_count=2)
    disc = _disc(grid)
    p = AttenuationProfile("piecewise", grid, bins=2, values=[3.0, 7.0])
    sig = att.rasterize(p, disc, build_layout(grid))
    np.testing.assert_array_equal(sig.axis[0][CENTER], [0, 0, 3, 3, 7, 7])
    # faces on a jump carry the mean of both sides
    np.testing.assert_array_equal(sig.axis[0][FACE], [0, 0, 1.5, 3, 5, 7, 7])


def test_polynomial_samples_match_pointwise_evaluation():
    grid = GridSpec((20,), (0.01,), ((0, 10),))
    disc = _disc(grid)
    p = AttenuationProfile("polynomial", grid, order=2, values=[10.0, -3.0, 40.0])
    sig = att.rasterize(p, disc, build_layout(grid))
    for s in (CENTER, FACE):
        x = disc.positions(0, s)
        np.testing.assert_allclose(sig.axis[0][s], att.eval_af(p, 0, x), rtol=1e-13, atol=1e-13)


def test_zero_controls_give_zero_fields():
    grid = GridSpec((20, 20), (0.01, 0.01), ((5, 5), (5, 5)), sublayer_count=5)
    disc = _disc(grid)
    for kind in ("piecewise", "polynomial", "cml"):
        p = AttenuationProfile(kind, grid, bins=5, order=3)
        sig = att.rasterize(p, disc, build_layout(grid))
        arrays = sig.cell.values() if kind == "cml" else [a for pair in sig.axis for a in pair]
        assert all(np.all(a == 0) for a in arrays)


def test_jacobian_matches_central_differences():
    grid = GridSpec((24, 24), (0.01, 0.01), ((4, 6), (6, 4)), sublayer_count=2)
    disc = _disc(grid)
    lay = build_layout(grid)
    rng = np.random.default_rng(3)
    for kind, kw in [("piecewise", dict(bins=3, tie_to_axes=False)), ("polynomial", dict(order=3)),
                     ("cml", dict(bins=2))]:
        base = AttenuationProfile(kind, grid, **kw)
        u = rng.uniform(10, 100, base.size)
        jac = att.sigma_jacobian(base, disc, lay)
        h = 1e-3
        for k in range(base.size):
            e = np.zeros(base.size)
            e[k] = h
            plus = att.rasterize(base.with_values(u + e), disc, lay)
            minus = att.rasterize(base.with_values(u - e), disc, lay)
            if kind == "cml":
                for st in jac.cell:
                    fd = (plus.cell[st] - minus.cell[st]) / (2 * h)
                    np.testing.assert_allclose(fd, jac.cell[st][k], atol=1e-10)
            else:
                for a in range(2):
                    for s in (CENTER, FACE):
                        fd = (plus.axis[a][s] - minus.axis[a][s]) / (2 * h)
                        np.testing.assert_allclose(fd, jac.axis[a][s][k], atol=1e-10)


def test_piecewise_jacobian_indicator_at_centres():
    p = AttenuationProfile("piecewise", GRID1, bins=5)
    jac = att.sigma_jacobian(p, _disc(GRID1), build_layout(GRID1))
    centres = jac.axis[0][CENTER]
    assert np.all(centres[:, 4:].sum(axis=0) == 1)
    assert set(np.unique(centres)) <= {0.0, 1.0}


def test_cml_lookup():
    lay = build_layout(GRID1)
    p = AttenuationProfile("cml", GRID1, bins=5, values=[1, 2, 7, 8, 9])
    assert att.eval_cml(p, lay, 0) == 0.0
    assert att.eval_cml(p, lay, 8) == 7.0
    same = AttenuationProfile("cml", GRID1, bins=5, values=[4.0] * 5)
    assert {att.eval_cml(same, lay, i) for i in range(4, 14)} == {4.0}


def test_profile_validation():
    with pytest.raises(ConfigError):
        AttenuationProfile("piecewise", GRID1, bins=2, values=[-1.0, 1.0])
    with pytest.raises(ConfigError):
        AttenuationProfile("cml", GRID1, bins=3)
    with pytest.raises(ConfigError):
        AttenuationProfile("spline", GRID1)


def test_untied_controls_per_side():
    grid = GridSpec((20, 20), (0.01, 0.01), ((5, 5), (0, 5)))
    p = AttenuationProfile("piecewise", grid, bins=2, tie_to_axes=False)
    assert p.size == 6
    assert p.controls().labels[0] == "axis0-lo:c0"
