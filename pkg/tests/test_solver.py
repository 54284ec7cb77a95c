from dataclasses import replace

import numpy as np
import pytest

from layercal import scenarios as S
from layercal.attenuation import rasterize
from layercal.model import AcousticMaterial, ConfigError, GridSpec, PhysicsKind
from layercal.solver import (
    BoundarySpec, DivergenceError, Simulation, SimulationConfig, SourceSpec, TimeGrid, cfl_timestep,
    local_update, local_update_T,
)


def _box(n=40, integrator="leapfrog", source=None, steps=100):
    grid = GridSpec((n,), (0.01,), ((0, 0),))
    dt = cfl_timestep(grid, S.AIR)
    src = source or SourceSpec(kind="gaussian", component="p", position=(n * 0.005,), width=0.05,
                               t0=40 * dt, tau=10 * dt, amplitude=1e5)
    return SimulationConfig(PhysicsKind.ACOUSTIC, S.AIR, grid, BoundarySpec.walls(1), src,
                            TimeGrid(dt, steps), "none", integrator)


def test_zero_source_keeps_zero_state():
    cfg = _box(source=SourceSpec(kind="none"))
    traj = Simulation(cfg).run()
    assert np.all(traj.energies == 0.0)
    assert all(np.all(x == 0) for x in traj.final.q)


def test_cfl_violation_rejected():
    cfg = _box()
    with pytest.raises(ConfigError, match="CFL"):
        replace(cfg, time=TimeGrid(cfg.time.dt * 1.2, 10))


def test_source_must_sit_in_interest_region():
    cfg = S.acoustic_1d(40, 10)
    bad = replace(cfg, source=SourceSpec(kind="point", component="p", position=(0.45,), t0=1e-3, tau=1e-4))
    with pytest.raises(ConfigError, match="interest"):
        Simulation(bad)


def test_periodic_faces_come_in_pairs():
    with pytest.raises(ConfigError):
        BoundarySpec((("periodic", "reflecting_fixed"),))


def test_divergence_is_reported_with_step():
    cfg = _box(source=SourceSpec(kind="gaussian", component="p", position=(0.2,), width=0.05,
                                 t0=0.0, tau=1.0, amplitude=1e20))
    with pytest.raises(DivergenceError) as info:
        Simulation(cfg).run()
    assert info.value.step >= 1


@pytest.mark.parametrize("nsig", [0, 1, 2, 3])
def test_local_update_transpose(nsig):
    rng = np.random.default_rng(nsig)
    shape = (5, 4)
    q0, r0, s0, f = (rng.standard_normal(shape) for _ in range(4))
    D = [rng.standard_normal(shape) for _ in range(max(nsig, 2))]
    sig = None if nsig == 0 else [rng.uniform(0, 3, shape) for _ in range(nsig)]
    if nsig == 1:
        D = D[:2]
    r0 = r0 if nsig >= 2 else None
    s0 = s0 if nsig == 3 else None
    tau = 0.3
    out = local_update(q0, r0, s0, D, f, sig, tau)
    lam = [None if o is None else rng.standard_normal(shape) for o in out]
    lq0, lr0, ls0, lD, lsig = local_update_T(q0, r0, s0, D, f, sig, tau, *lam)

    def J(q0, r0, s0, D, sig):
        o = local_update(q0, r0, s0, D, f, sig, tau)
        return sum(np.sum(a * b) for a, b in zip(o, lam) if a is not None)

    # the update is affine in (q0, r0, s0, D): check directional derivatives exactly
    dq = rng.standard_normal(shape)
    base = J(q0, r0, s0, D, sig)
    assert J(q0 + dq, r0, s0, D, sig) - base == pytest.approx(np.sum(lq0 * dq), rel=1e-10)
    for i in range(len(D)):
        Dp = list(D)
        Dp[i] = D[i] + dq
        assert J(q0, r0, s0, Dp, sig) - base == pytest.approx(np.sum(lD[i] * dq), rel=1e-10)
    if r0 is not None:
        assert J(q0, r0 + dq, s0, D, sig) - base == pytest.approx(np.sum(lr0 * dq), rel=1e-10)
    if s0 is not None:
        assert J(q0, r0, s0 + dq, D, sig) - base == pytest.approx(np.sum(ls0 * dq), rel=1e-10)
    if sig is not None:
        h = 1e-6
        for j in range(len(sig)):
            sp = list(sig)
            sm = list(sig)
            sp[j] = sig[j] + h * dq
            sm[j] = sig[j] - h * dq
            fd = (J(q0, r0, s0, D, sp) - J(q0, r0, s0, D, sm)) / (2 * h)
            assert fd == pytest.approx(np.sum(lsig[j] * dq), rel=1e-7)


def test_auxiliary_fields_vanish_in_interest_region():
    cfg = S.acoustic_2d(12, 6, sublayers=2)
    sim = Simulation(cfg)
    prof = S.profile_for(cfg, "piecewise", bins=2, values=[3000.0, 9000.0])
    traj = sim.run(rasterize(prof, sim.disc, sim.layout))
    for c, comp in enumerate(sim.disc.comps):
        inside = sim.disc.cell_to_samples(sim.layout.interest.astype(int), comp.stagger, np.minimum) == 1
        assert np.all(traj.final.r[c][inside] == 0.0)
    assert any(np.any(r != 0) for r in traj.final.r)


def test_periodic_pipe_reproduces_1d_pipe():
    one = S.acoustic_1d(30, 10, sublayers=2, steps=150)
    two = S.acoustic_2d(30, 10, sublayers=2, periodic_y=True, ny=4, steps=150)
    one = replace(one, time=two.time, source=two.source)
    u = [2000.0, 6000.0]
    s1, s2 = Simulation(one), Simulation(two)
    t1 = s1.run(rasterize(S.profile_for(one, "piecewise", bins=2, values=u), s1.disc, s1.layout))
    t2 = s2.run(rasterize(S.profile_for(two, "piecewise", bins=2, values=u), s2.disc, s2.layout))
    p1, p2 = t1.final.q[1], t2.final.q[2]
    assert np.max(np.abs(p2 - p1[:, None])) <= 1e-14 * np.max(np.abs(p1))
    assert np.all(t2.final.q[1] == 0.0)


def test_trapezoidal_and_leapfrog_agree_to_second_order():
    errs = []
    for n in (40, 80):
        grid = GridSpec((n,), (0.4 / n,), ((0, 0),))
        dt = cfl_timestep(grid, S.AIR, 0.5)
        src = SourceSpec(kind="gaussian", component="p", position=(0.2,), width=0.04,
                         t0=4e-4, tau=1e-4, amplitude=1e5)
        steps = int(round(1.5e-3 / dt))
        e = []
        for integ in ("leapfrog", "trapezoidal"):
            cfg = SimulationConfig("acoustic", S.AIR, grid, BoundarySpec.walls(1), src,
                                   TimeGrid(dt, steps, 0.5), "none", integ)
            e.append(Simulation(cfg).run().final.q[1])
        errs.append(np.max(np.abs(e[0] - e[1])) / np.max(np.abs(e[1])))
    assert errs[1] < errs[0] / 3


def test_energy_decays_with_damping_trapezoidal():
    cfg = S.acoustic_1d(40, 10, integrator="trapezoidal", steps=400)
    sim = Simulation(cfg)
    prof = S.profile_for(cfg, "piecewise", bins=1, values=[5000.0])
    traj = sim.run(rasterize(prof, sim.disc, sim.layout))
    after = traj.energies[int(2.5 * 100):]
    assert np.all(np.diff(after) <= 1e-15 * after[0])


def test_energy_csv(tmp_path):
    from layercal.solver import write_energy_csv

    traj = Simulation(_box(steps=3)).run()
    path = tmp_path / "e.csv"
    write_energy_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,time,energy" and len(lines) == 5
