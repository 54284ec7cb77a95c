import numpy as np
import pytest
from hypothesis import given, strategies as st

from layercal.energy import reduction_db, total_energy
from layercal.model import AcousticMaterial, ConfigError, ElectromagneticMaterial, GridSpec, PhysicsKind
from layercal.solver import BoundarySpec, Simulation, SimulationConfig, SourceSpec, TimeGrid


def _sim(physics, mat, dim):
    n = 4
    grid = GridSpec((n,) * dim, (1.0 / n,) * dim, ((0, 0),) * dim)
    bnd = BoundarySpec((("periodic", "periodic"),) * dim)
    dt = 0.1 * grid.h_min / mat.max_speed
    return Simulation(SimulationConfig(physics, mat, grid, bnd, SourceSpec(kind="none"), TimeGrid(dt, 1), "none"))


def test_zero_state_zero_energy():
    sim = _sim(PhysicsKind.ACOUSTIC, AcousticMaterial(1.0, 1.0), 2)
    assert total_energy(sim.initial_state(), sim) == 0.0


def test_constant_pressure_unit_volume():
    sim = _sim(PhysicsKind.ACOUSTIC, AcousticMaterial(1.0, 1.0), 2)
    st_ = sim.initial_state({"p": 1.0})
    assert total_energy(st_, sim) == pytest.approx(0.5, rel=1e-14)


def test_constant_electric_field_unit_volume():
    sim = _sim(PhysicsKind.ELECTROMAGNETIC, ElectromagneticMaterial(mu=1.0, eps=2.0), 2)
    st_ = sim.initial_state({"Ez": 1.0})
    assert total_energy(st_, sim) == pytest.approx(1.0, rel=1e-14)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_energy_is_quadratic(alpha):
    sim = _sim(PhysicsKind.ACOUSTIC, AcousticMaterial(1.3, 2.0), 1)
    rng = np.random.default_rng(0)
    fields = {"p": rng.standard_normal(4), "v1": rng.standard_normal(4)}
    e1 = total_energy(sim.initial_state(fields), sim)
    e2 = total_energy(sim.initial_state({k: alpha * v for k, v in fields.items()}), sim)
    assert e2 == pytest.approx(alpha**2 * e1, rel=1e-12, abs=1e-300)


def test_reduction_db():
    assert reduction_db(2.0, 2.0) == 0.0
    assert reduction_db(1e-4, 1.0) == pytest.approx(-40.0)
    assert reduction_db(0.0, 1.0) == float("-inf")
    with pytest.raises(ConfigError):
        reduction_db(1.0, 0.0)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.floats(1e-3, 1e3))
def test_reduction_db_log_identity(e1, e2, eb):
    lhs = reduction_db(e1 * e2 / eb, eb)
    rhs = reduction_db(e1, eb) + reduction_db(e2, eb) - reduction_db(eb, eb)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)) * 100)
