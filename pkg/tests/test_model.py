import numpy as np
import pytest

from layercal import model
from layercal.model import (
    AcousticMaterial, ConfigError, ElasticMaterial, ElectromagneticMaterial, GridSpec, PhysicsKind,
)


def test_acoustic_flux_matrix_1d():
    mat = AcousticMaterial(rho=2.0, K=8.0)
    A = model.flux_matrix(PhysicsKind.ACOUSTIC, mat, 0, 1)
    np.testing.assert_array_equal(A, [[0, 0.5], [8.0, 0]])
    assert mat.speed == pytest.approx(2.0)


def test_flux_eigenvalues_are_wave_speeds():
    el = ElasticMaterial(rho=2500.0, v_l=5830.95, v_t=3464.10)
    A = model.flux_matrix(PhysicsKind.ELASTODYNAMIC, el, 0, 2)
    ev = np.sort(np.abs(np.linalg.eigvals(A).real))
    np.testing.assert_allclose(ev[-2:], [el.v_l, el.v_l], rtol=1e-10)
    np.testing.assert_allclose(ev[1:3], [el.v_t, el.v_t], rtol=1e-10)
    em = ElectromagneticMaterial(mu=2.0, eps=0.5)
    for axis in (0, 1):
        A = model.flux_matrix(PhysicsKind.ELECTROMAGNETIC, em, axis, 2)
        assert np.max(np.abs(np.linalg.eigvals(A))) == pytest.approx(1.0)


def test_q_times_flux_is_symmetric():
    # symmetric hyperbolic form: Q A_i symmetric for every axis
    cases = [
        (PhysicsKind.ACOUSTIC, AcousticMaterial(1.3, 1e5), 3),
        (PhysicsKind.ELASTODYNAMIC, ElasticMaterial(2500.0, 5830.95, 3464.10), 2),
        (PhysicsKind.ELECTROMAGNETIC, ElectromagneticMaterial(1.5, 2.5), 2),
    ]
    for physics, mat, dim in cases:
        Q = model.q_matrix(physics, mat, dim)
        for a in range(dim):
            QA = Q @ model.flux_matrix(physics, mat, a, dim)
            np.testing.assert_allclose(QA, QA.T, rtol=1e-12, atol=1e-12 * np.abs(QA).max())


def test_material_validation():
    with pytest.raises(ConfigError):
        AcousticMaterial(rho=-1.0, K=1.0)
    with pytest.raises(ConfigError):
        ElasticMaterial(rho=1.0, v_l=1.0, v_t=2.0)


def test_unsupported_dimension():
    with pytest.raises(ConfigError):
        model.components(PhysicsKind.ELASTODYNAMIC, 3)


def test_layout_box_1d_piecewise_sublayers():
    grid = GridSpec((50,), (0.01,), ((0, 10),), sublayer_count=5)
    lay = model.build_layout(grid)
    assert lay.interest[:40].all() and not lay.interest[40:].any()
    np.testing.assert_array_equal(lay.cml_layer[40:], np.repeat(np.arange(1, 6), 2))
    assert model.validate_layout(grid, lay) == []


def test_layout_2d_corners_take_outer_shell():
    grid = GridSpec((12, 12), (1.0, 1.0), ((4, 4), (4, 4)), sublayer_count=2)
    lay = model.build_layout(grid)
    assert lay.cml_layer[0, 0] == 2
    assert lay.cml_layer[3, 3] == 1
    assert lay.cml_layer[6, 6] == 0
    assert model.validate_layout(grid, lay) == []


def test_sublayer_count_must_divide_width():
    grid = GridSpec((20,), (1.0,), ((0, 10),), sublayer_count=3)
    with pytest.raises(ConfigError, match="grid.sublayer_count"):
        grid.check_divisible()


def test_masked_layout_uses_hop_distance():
    mask = np.zeros((12, 12), bool)
    mask[4:8, 4:7] = True
    mask[4, 7] = True
    grid = GridSpec((12, 12), (1.0, 1.0), ((0, 0), (0, 0)), sublayer_count=3, interest_mask=mask)
    lay = model.build_layout(grid)
    assert lay.cml_layer[4, 8] == 1 and lay.cml_layer[3, 4] == 1
    assert lay.cml_layer[0, 0] == 3
    assert model.validate_layout(grid, lay) == []


def test_cfl_limit():
    grid = GridSpec((10, 10), (0.01, 0.02), ((0, 2), (0, 2)))
    assert model.cfl_limit(grid, 100.0) == pytest.approx(0.01 / (100 * np.sqrt(2)))
