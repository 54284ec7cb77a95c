import types

import numpy as np
import pytest

from layercal import scenarios as S
from layercal.adjoint import Objective
from layercal.calibrate import (
    CalibrationConfig, OptimizerSettings, auto_calibration_time, baseline_energy, run_calibration,
    sweep_constant,
)
from layercal.energy import reduction_db
from layercal.model import ConfigError, GridSpec
from layercal.solver import Simulation, SourceSpec


def test_auto_time_1d():
    cfg = S.acoustic_1d(40, 10)
    v = cfg.material.min_speed
    assert v == pytest.approx(282.11, abs=0.1)
    t = auto_calibration_time(cfg.grid, cfg.material, cfg.source)
    assert t == pytest.approx(cfg.source.peak_time + 2.5 * 0.4 / v, rel=1e-12)


def test_auto_time_elastic():
    cfg = S.elastic_square(20, 10)
    t = auto_calibration_time(cfg.grid, cfg.material, cfg.source)
    assert t == pytest.approx(2e-6 + 0.012 * np.sqrt(2) / 3464.10, rel=1e-5)


def test_auto_time_needs_a_layer():
    g = GridSpec((20,), (0.01,), ((0, 0),))
    with pytest.raises(ConfigError):
        auto_calibration_time(g, S.AIR, SourceSpec(kind="port", t0=1e-3, tau=1e-4))


def test_auto_time_zero_extent():
    grid = types.SimpleNamespace(
        dim=2, widths=((3, 3), (3, 3)), spacing=(0.01, 0.01),
        has_layers=lambda a: True, interest_length=lambda a: 0.0,
    )
    t = auto_calibration_time(grid, S.AIR, SourceSpec(kind="port", t0=1e-3, tau=1e-4))
    assert t == pytest.approx(1e-3 + 0.03 / S.AIR.min_speed)


def test_zero_source_baseline_is_invalid():
    cfg = S.acoustic_1d(30, 5)
    cfg = cfg.__class__(**{**cfg.__dict__, "source": SourceSpec(kind="none")})
    assert baseline_energy(cfg, 50) == 0.0
    with pytest.raises(ConfigError):
        run_calibration(CalibrationConfig(cfg, S.profile_for(cfg, "piecewise", bins=1)))


def test_zero_controls_give_zero_db():
    cfg = S.acoustic_1d(30, 5, steps=150)
    prof = S.profile_for(cfg, "piecewise", bins=5)
    E = Objective(Simulation(cfg), prof).value(np.zeros(5))
    assert reduction_db(E, baseline_energy(cfg)) == 0.0


def test_optimal_start_converges_fast():
    cfg = S.acoustic_1d(30, 5)
    prof = S.profile_for(cfg, "piecewise", bins=1)
    first = run_calibration(CalibrationConfig(cfg, prof))
    again = run_calibration(CalibrationConfig(cfg, prof.with_values(first.controls)))
    assert again.optimizer.converged and again.optimizer.iterations <= 2
    assert again.energy <= first.energy * (1 + 1e-9)


def test_sweep_first_row_is_baseline():
    cfg = S.acoustic_1d(30, 5)
    cal = CalibrationConfig(cfg, S.profile_for(cfg, "piecewise", bins=1))
    rows = sweep_constant(cal, [0.0, 5000.0])
    assert rows[0][2] == 0.0
    assert rows[1][2] < -10


def test_return_path_time():
    cfg = S.acoustic_1d(30, 5)
    prof = S.profile_for(cfg, "piecewise", bins=1)
    res = run_calibration(CalibrationConfig(cfg, prof, return_path=True, optimizer=OptimizerSettings(max_iter=3)))
    assert res.t_e == pytest.approx(res.t_c + 2 * 0.05 / cfg.material.min_speed)
    assert res.steps_e > res.steps_c
    assert np.isfinite(res.delta_db_e)
