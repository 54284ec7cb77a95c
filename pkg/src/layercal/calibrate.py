"""End-to-end calibration of the attenuation controls.

Extend the domain with layers, start the controls at zero, drive the
calibration source, pick the calibration time, minimise the residual
energy with the adjoint gradient and report the reduction at the
calibration and evaluation times.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .adjoint import Objective
from .attenuation import RESTART_INTERVALS, AttenuationProfile
from .energy import reduction_db
from .model import ConfigError, GridSpec
from .optimize import OptProblem, OptResult, minimize, multistart
from .solver import DivergenceError, Simulation, SimulationConfig, SourceSpec


@dataclass(frozen=True)
class OptimizerSettings:
    memory: int = 10
    pgtol: float | None = None
    max_iter: int = 200
    restarts: int = 0
    control_scale: float | None = None  # None -> v_max / h_min


@dataclass(frozen=True)
class CalibrationConfig:
    sim: SimulationConfig
    profile: AttenuationProfile
    t_c: float | None = None  # None -> automatic rule
    t_e: float | None = None  # None -> T_c, unless return_path
    return_path: bool = False
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.t_c is not None and not self.t_c > 0:
            raise ConfigError("calibration.t_c must be > 0")
        if self.t_e is not None and not self.t_e > 0:
            raise ConfigError("calibration.t_e must be > 0")


@dataclass
class CalibrationResult:
    controls: np.ndarray
    labels: tuple
    t_c: float
    t_e: float
    steps_c: int
    steps_e: int
    baseline: float
    energy: float
    delta_db: float
    baseline_e: float
    energy_e: float
    delta_db_e: float
    optimizer: OptResult
    restarts: list = field(default_factory=list)
    wall_clock: float = 0.0

    def history_rows(self):
        for k, (x, J, pg) in enumerate(self.optimizer.history):
            yield [k, J, reduction_db(J, self.baseline), pg, *list(x)]

    def as_dict(self) -> dict:
        opt = self.optimizer
        out = {
            "controls": list(map(float, self.controls)),
            "labels": list(self.labels),
            "t_c": self.t_c,
            "t_e": self.t_e,
            "steps_c": self.steps_c,
            "steps_e": self.steps_e,
            "baseline": self.baseline,
            "energy": self.energy,
            "delta_db": self.delta_db,
            "baseline_e": self.baseline_e,
            "energy_e": self.energy_e,
            "delta_db_e": self.delta_db_e,
            "optimizer": {
                "iterations": opt.iterations,
                "reason": opt.reason,
                "pgtol": opt.pgtol,
                "evaluations": opt.evaluations,
            },
        }
        if self.restarts:
            out["restarts"] = [
                {"index": i, "J": r.fun, "delta_db": _safe_db(r.fun, self.baseline), "reason": r.reason,
                 "controls": list(map(float, r.x))}
                for i, r in enumerate(self.restarts)
            ]
        return out


def _safe_db(E, Ebar):
    if not np.isfinite(E):
        return float("nan")
    return reduction_db(E, Ebar)


# --------------------------------------------------------------------------
# calibration time
# --------------------------------------------------------------------------


def auto_calibration_time(grid: GridSpec, material, source: SourceSpec) -> float:
    """Time for the pulse peak to cross the interest region and the layers."""
    t0 = source.peak_time
    layered = [a for a in range(grid.dim) if grid.has_layers(a)]
    if not layered:
        raise ConfigError("calibration: the damping region has zero width")
    v = material.min_speed
    w_max = max(max(grid.widths[a]) * grid.spacing[a] for a in layered)
    if grid.dim == 1 or len(layered) == 1:
        L = grid.interest_length(layered[0])
        return t0 + (2.5 * L / v if L > 0 else w_max / v)
    extent = max(grid.interest_length(a) for a in range(grid.dim))
    if extent == 0:
        return t0 + w_max / v
    return t0 + extent * np.sqrt(2) / v


def return_path_time(grid: GridSpec, material) -> float:
    """Extra time for waves to cross the layers and come back."""
    layered = [a for a in range(grid.dim) if grid.has_layers(a)]
    w = max(max(grid.widths[a]) * grid.spacing[a] for a in layered)
    return 2 * w / material.min_speed


def steps_for(t: float, dt: float) -> int:
    return max(1, int(round(t / dt)))


# --------------------------------------------------------------------------
# baseline
# --------------------------------------------------------------------------

_BASELINE_CACHE: dict = {}


def _key(config: SimulationConfig):
    g = config.grid
    mask = None if g.interest_mask is None else (g.interest_mask.shape, g.interest_mask.tobytes())
    return (
        config.physics, repr(config.material), g.cells, g.spacing, g.widths, mask,
        config.boundaries, config.source, config.time, config.integrator,
    )


def baseline_energy(config: SimulationConfig, steps: int | None = None) -> float:
    """Energy at the final step with all attenuation switched off (cached)."""
    if steps is not None:
        config = config.with_steps(steps)
    key = _key(config)
    if key not in _BASELINE_CACHE:
        traj = Simulation(config.with_layers("none")).run()
        _BASELINE_CACHE[key] = float(traj.energies[-1])
    return _BASELINE_CACHE[key]


def clear_baseline_cache() -> None:
    _BASELINE_CACHE.clear()


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


def calibration_times(config: CalibrationConfig) -> tuple[float, float]:
    sc = config.sim
    t_c = config.t_c if config.t_c is not None else auto_calibration_time(sc.grid, sc.material, sc.source)
    if config.t_e is not None:
        t_e = config.t_e
    elif config.return_path:
        t_e = t_c + return_path_time(sc.grid, sc.material)
    else:
        t_e = t_c
    return t_c, t_e


def _scaled_problem(obj: Objective, profile: AttenuationProfile, settings: OptimizerSettings, x0=None,
                    baseline=None):
    cv = profile.controls()
    pgtol = settings.pgtol
    if pgtol is None and baseline is not None:
        pgtol = 1e-9 * baseline  # relative to the undamped energy, not to J at the start
    scale = control_scale(obj.sim.config, settings)

    def fun(z):
        J, g = obj(z * scale)
        return J, g * scale

    start = (cv.values if x0 is None else np.asarray(x0, float)) / scale
    return OptProblem(fun, start, cv.lower / scale, cv.upper / scale, memory=settings.memory,
                      pgtol=pgtol, max_iter=settings.max_iter)


def _unscale(res: OptResult, scale: float) -> OptResult:
    hist = [(x * scale, J, pg / scale) for x, J, pg in res.history]
    return replace(res, x=res.x * scale, history=hist)


def control_scale(sim_config: SimulationConfig, settings: OptimizerSettings) -> float:
    """Unit in which the optimizer sees the controls (default: one cell per wave transit)."""
    if settings.control_scale is not None:
        return float(settings.control_scale)
    return sim_config.material.max_speed / sim_config.grid.h_min


def run_calibration(config: CalibrationConfig) -> CalibrationResult:
    start = time.perf_counter()
    t_c, t_e = calibration_times(config)
    sc = config.sim
    dt = sc.time.dt
    steps_c, steps_e = steps_for(t_c, dt), steps_for(t_e, dt)
    sim = Simulation(sc.with_steps(steps_c))
    profile = config.profile
    if sim.layout is not None and profile.kind == "cml" and sc.layers != "cml":
        raise ConfigError("cml profiles need layers.kind = 'cml'")
    Ebar = baseline_energy(sc, steps_c)
    if not Ebar > 0:
        raise ConfigError("baseline energy is zero; the source does not excite the domain")
    obj = Objective(sim, profile)
    settings = config.optimizer
    problem = _scaled_problem(obj, profile, settings, baseline=Ebar)
    scale = control_scale(sc, settings)
    restarts = []
    if settings.restarts > 0:
        lo, hi = RESTART_INTERVALS[profile.kind]
        n = profile.size

        def sampler(rng):
            return rng.uniform(lo, hi, n) / scale

        runs = multistart(problem, sampler, settings.restarts + 1, seed=config.seed, threads=config.threads)
        restarts = [_unscale(r, scale) for r in runs]
        ok = [r for r in restarts if np.isfinite(r.fun)]
        if not ok:
            raise DivergenceError(-1, "every restart failed")
        best = min(ok, key=lambda r: r.fun)
    else:
        best = _unscale(minimize(problem), scale)
    u = best.x
    J = best.fun
    if steps_e == steps_c:
        Ebar_e, E_e = Ebar, J
    else:
        Ebar_e = baseline_energy(sc, steps_e)
        sim_e = Simulation(sc.with_steps(steps_e))
        E_e = Objective(sim_e, profile).value(u)
    return CalibrationResult(
        controls=u, labels=profile.controls().labels, t_c=t_c, t_e=t_e,
        steps_c=steps_c, steps_e=steps_e, baseline=Ebar, energy=J, delta_db=reduction_db(J, Ebar),
        baseline_e=Ebar_e, energy_e=E_e, delta_db_e=reduction_db(E_e, Ebar_e),
        optimizer=best, restarts=restarts, wall_clock=time.perf_counter() - start,
    )


def sweep_constant(config: CalibrationConfig, c_grid) -> list[tuple[float, float, float]]:
    """Brute-force table ``(c, J, dB)`` for a single-control profile."""
    if config.profile.size != 1:
        raise ConfigError("sweep_constant needs a single-control attenuation profile")
    t_c, _ = calibration_times(config)
    sc = config.sim
    steps = steps_for(t_c, sc.time.dt)
    sim = Simulation(sc.with_steps(steps))
    Ebar = baseline_energy(sc, steps)
    obj = Objective(sim, config.profile)
    rows = []
    for c in np.asarray(c_grid, dtype=float):
        try:
            J = obj.value(np.array([c]))
            rows.append((float(c), J, reduction_db(J, Ebar)))
        except DivergenceError:
            rows.append((float(c), float("nan"), float("nan")))
    return rows
