"""Discrete adjoint of the time-stepping schemes and gradient assembly.

The objective is the energy of the final stored state, ``J = E(q_M)``.
The reverse sweep transposes the exact update recurrence that produced the
forward trajectory, so the gradient is exact up to round-off. Adjoint
fields follow the sign convention ``lambda_M = -dJ/dq_M``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attenuation import SigmaFields, contract, sigma_jacobian, zero_fields
from .energy import energy_gradient
from .model import ConfigError
from .solver import DivergenceError, Simulation, Trajectory, WaveState, _accumulate_sens

# the forward trajectory is kept in full; it is the checkpoint store
CheckpointStore = Trajectory


class SchemeMismatch(RuntimeError):
    pass


@dataclass
class AdjointTrajectory:
    """Adjoint states (optional) plus the accumulated sigma sensitivity."""

    scheme: str
    sens: SigmaFields | None
    states: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)


def seed_terminal(q_M: WaveState, sim: Simulation) -> WaveState:
    """Terminal adjoint ``-W Q q_M`` (W holds the quadrature weights)."""
    g = energy_gradient(q_M, sim)
    lam = WaveState(
        [-x for x in g],
        None if q_M.r is None else [np.zeros_like(x) for x in q_M.r],
        None if q_M.s is None else [np.zeros_like(x) for x in q_M.s],
        q_M.step,
    )
    return lam


def _neg(state: WaveState) -> WaveState:
    neg = lambda xs: None if xs is None else [-x for x in xs]
    return WaveState(neg(state.q), neg(state.r), neg(state.s), state.step)


def reverse_sweep(store: CheckpointStore, seed: WaveState, scheme: str | None = None,
                  keep: bool = False) -> AdjointTrajectory:
    """March the transposed recurrence from ``seed`` back to step 0."""
    sim = store.sim
    if scheme is not None and scheme != store.scheme:
        raise SchemeMismatch(f"store was produced by {store.scheme!r}, sweep asked for {scheme!r}")
    if store.scheme != sim.config.integrator:
        raise SchemeMismatch("store scheme differs from the simulation's integrator")
    if len(store.states) < 1 or store.states[-1].step != len(store.states) - 1:
        raise ConfigError("checkpoint store is incomplete")
    if store.scheme == "trapezoidal":
        return _reverse_trapezoidal(store, seed, keep)
    return _reverse_leapfrog(store, seed, keep)


def _reverse_leapfrog(store, seed, keep):
    sim = store.sim
    sigma = store.sigma
    sens = None if sigma is None else zero_fields(sim.disc, sigma.mode)
    mu = _neg(seed)
    out = AdjointTrajectory("leapfrog", sens)
    if keep:
        out.states.append(_neg(mu))
    dt = sim.dt
    for n in range(len(store.states) - 2, -1, -1):
        x = store.states[n]
        a, b, _ = sim.leapfrog_substates(x, sigma)
        t0, half, t1 = n * dt, (n + 0.5) * dt, (n + 1) * dt
        mu = sim.stage_T(b, sigma, 0, 0.5 * dt, t1, mu, sens)
        mu = sim.stage_T(a, sigma, 1, dt, half, mu, sens)
        mu = sim.stage_T(x, sigma, 0, 0.5 * dt, t0, mu, sens)
        mu.step = n
        if keep:
            out.states.append(_neg(mu))
    if keep:
        out.states.reverse()
    return out


def _reverse_trapezoidal(store, seed, keep):
    sim = store.sim
    sigma = store.sigma
    tr = sim.trapezoidal()
    tr.prepare(sigma)
    free = tr.free
    xs = [tr.flat(st.q)[free] for st in store.states]
    mu = -tr.flat(seed.q)[free]
    sdiag = np.zeros(len(free))
    out = AdjointTrajectory("trapezoidal", None)
    lams = [mu]
    nus = []
    for n in range(len(xs) - 2, -1, -1):
        nu = tr.lu_T.solve(mu)
        sdiag -= nu * 0.5 * (xs[n] + xs[n + 1])
        mu = tr.M_minus.T @ nu
        nus.append(nu)
        lams.append(mu)
    if sigma is not None:
        sens = zero_fields(sim.disc, sigma.mode)
        full = np.zeros(int(tr.offsets[-1]))
        full[free] = sdiag
        for c, comp in enumerate(sim.disc.comps):
            part = full[tr.offsets[c]: tr.offsets[c + 1]].reshape(sim.disc.comp_shape(c))
            _accumulate_sens(sens, comp.stagger, [part])
        out.sens = sens
    if keep:
        for lam in reversed(lams):
            q = [np.zeros(int(np.prod(sim.disc.comp_shape(c)))) for c in range(sim.ncomp)]
            full = np.zeros(int(tr.offsets[-1]))
            full[free] = -lam
            out.states.append(WaveState([p.copy() for p in tr._unflat(full)], None, None))
        # nus[k] is the multiplier of step M-1-k; store in forward order 1..M
        out.multipliers = list(reversed(nus))
    for k, st in enumerate(out.states):
        st.step = k
    return out


def accumulate_gradient(store: CheckpointStore, adjoint: AdjointTrajectory, jac: SigmaFields) -> np.ndarray:
    """``g_k = sum_n (d c_n / d sigma)(d sigma / d u_k)`` from the swept sensitivity."""
    if adjoint.sens is None:
        return np.zeros(_jac_size(jac))
    return contract(jac, adjoint.sens)


def _jac_size(jac: SigmaFields) -> int:
    if jac.mode == "cml":
        return next(iter(jac.cell.values())).shape[0]
    return jac.axis[0][0].shape[0]


# --------------------------------------------------------------------------
# objective and gradient for a configured problem
# --------------------------------------------------------------------------


class Objective:
    """``u -> (E(T), dE/du)`` for a simulation and an attenuation template."""

    def __init__(self, sim: Simulation, profile, steps: int | None = None):
        self.sim = sim
        self.profile = profile
        self.steps = sim.config.time.steps if steps is None else steps
        self.jac = sigma_jacobian(profile, sim.disc, sim.layout)
        self.evaluations = 0

    def sigma(self, u) -> SigmaFields:
        u = np.asarray(u, dtype=float)
        j = self.jac
        if j.mode == "cml":
            return SigmaFields("cml", j.dim, cell={k: np.tensordot(u, v, axes=1) for k, v in j.cell.items()})
        return SigmaFields("pml", j.dim, axis=[[u @ m for m in pair] for pair in j.axis])

    def forward(self, u) -> Trajectory:
        self.evaluations += 1
        return self.sim.run(self.sigma(u), steps=self.steps)

    def value(self, u) -> float:
        return float(self.forward(u).energies[-1])

    def value_and_grad(self, u):
        traj = self.forward(u)
        seed = seed_terminal(traj.final, self.sim)
        adj = reverse_sweep(traj, seed)
        return float(traj.energies[-1]), accumulate_gradient(traj, adj, self.jac)

    __call__ = value_and_grad


def objective_and_gradient(sim: Simulation, profile, u=None):
    obj = Objective(sim, profile)
    return obj.value_and_grad(profile.values if u is None else u)


@dataclass
class GradientReport:
    g: np.ndarray
    g_fd: np.ndarray
    steps: np.ndarray

    @property
    def rel_err(self) -> np.ndarray:
        return np.abs(self.g - self.g_fd) / np.maximum(np.abs(self.g), 1e-12)

    @property
    def max_rel_err(self) -> float:
        return float(np.max(self.rel_err)) if len(self.g) else 0.0

    def as_dict(self) -> dict:
        entries = [
            {"k": k, "g": float(self.g[k]), "g_fd": float(self.g_fd[k]), "rel_err": float(self.rel_err[k])}
            for k in range(len(self.g))
        ]
        return {"entries": entries, "max_rel_err": self.max_rel_err}


def fd_step(u) -> np.ndarray:
    return 1e-3 * np.maximum(1.0, np.abs(np.asarray(u, float)))


def gradient_check(objective, u, h=None, threads: int = 1) -> GradientReport:
    """Adjoint gradient against central differences for every control."""
    u = np.asarray(u, dtype=float)
    if u.size > 50:
        raise ConfigError("gradient_check is limited to 50 controls")
    h = fd_step(u) if h is None else np.broadcast_to(np.asarray(h, float), u.shape)
    J0, g = objective.value_and_grad(u)

    def probe(k):
        e = np.zeros_like(u)
        e[k] = h[k]
        jp = objective.value(u + e)
        jm = objective.value(u - e)
        if not (np.isfinite(jp) and np.isfinite(jm)):
            raise DivergenceError(-1, "non-finite objective during finite differencing")
        return (jp - jm) / (2 * h[k])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            g_fd = list(pool.map(probe, range(u.size)))
    else:
        g_fd = [probe(k) for k in range(u.size)]
    return GradientReport(np.asarray(g), np.asarray(g_fd), np.asarray(h))
