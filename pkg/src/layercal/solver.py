"""Explicit staggered-grid time stepping of the damped wave systems.

Every unknown ``q`` obeys

    dq/dt + sum_i D_i + e1 q + r = f
    dr/dt = e2 q + sum_i a_i D_i + s
    ds/dt = e3 q + sum_i b_i D_i

where ``D_i`` is the flux derivative along axis ``i`` evaluated at the
unknown's location, ``e1, e2, e3`` are the elementary symmetric polynomials
of the attenuation functions, ``a_i`` the sum and ``b_i`` the product of the
*other* attenuation functions. ``r`` exists in 2D/3D PMLs and ``s`` in 3D.
CMLs and 1D PMLs use the first line only.

The default integrator is kick-drift-kick leapfrog: half step of the
velocity-like group, full step of the other group, half step of the
velocity-like group. Within each sub-step the local terms (damping and the
auxiliary fields) are integrated with the trapezoidal rule, which keeps the
explicit CFL limit independent of the damping strength. A fully implicit
trapezoidal integrator is available in 1D.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csc_matrix, identity
from scipy.sparse.linalg import splu

from . import model
from .attenuation import SigmaFields
from .model import ConfigError, GridSpec, PhysicsKind
from .staggered import FACE, Discretization

DIVERGENCE_LIMIT = 1e12
LAYER_KINDS = ("none", "pml", "cml")
INTEGRATORS = ("leapfrog", "trapezoidal")
FACE_KINDS = ("reflecting_fixed", "periodic", "port")


class DivergenceError(RuntimeError):
    def __init__(self, step: int, message: str = "field values diverged"):
        super().__init__(f"{message} at step {step}")
        self.step = step


# --------------------------------------------------------------------------
# configuration records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """Excitation: a driven boundary port, a point source or a Gaussian blob.

    The temporal signal is ``amplitude * exp(-((t - t0) / tau)**2)`` for
    ``shape="gaussian"`` and ``amplitude * sin(omega * t)`` for ``"sine"``.
    Body sources add the signal to the rate of ``component``.
    """

    kind: str = "point"
    component: str | None = None
    axis: int = 0
    side: int = 0
    position: tuple[float, ...] | None = None
    width: float = 0.0
    amplitude: float = 1.0
    shape: str = "gaussian"
    t0: float = 0.0
    tau: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in ("port", "point", "gaussian", "none"):
            raise ConfigError(f"source.kind {self.kind!r} not understood")
        if self.shape not in ("gaussian", "sine"):
            raise ConfigError(f"source.shape {self.shape!r} not understood")
        if self.kind == "gaussian" and not self.width > 0:
            raise ConfigError("source.width must be > 0 for gaussian sources")
        if self.shape == "gaussian" and not self.tau > 0:
            raise ConfigError("source.tau must be > 0")
        if self.position is not None:
            object.__setattr__(self, "position", tuple(float(x) for x in self.position))

    def signal(self, t: float) -> float:
        if self.kind == "none" or self.amplitude == 0.0:
            return 0.0
        if self.shape == "gaussian":
            return self.amplitude * float(np.exp(-(((t - self.t0) / self.tau) ** 2)))
        return self.amplitude * float(np.sin(self.omega * t))

    @property
    def peak_time(self) -> float:
        return self.t0 if self.shape == "gaussian" else 0.0


@dataclass(frozen=True)
class BoundarySpec:
    """Per axis ``(low face, high face)`` kinds."""

    faces: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "faces", tuple((str(a), str(b)) for a, b in self.faces))
        for a, pair in enumerate(self.faces):
            for kind in pair:
                if kind not in FACE_KINDS:
                    raise ConfigError(f"boundaries.faces[{a}]: unknown kind {kind!r}")
            if ("periodic" in pair) and pair != ("periodic", "periodic"):
                raise ConfigError(f"boundaries.faces[{a}]: periodic faces must come in pairs")

    @property
    def periodic(self) -> tuple[bool, ...]:
        return tuple(pair[0] == "periodic" for pair in self.faces)

    @classmethod
    def walls(cls, dim: int) -> "BoundarySpec":
        return cls((("reflecting_fixed", "reflecting_fixed"),) * dim)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int
    cfl: float = 0.9

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("time.dt must be > 0")
        if self.steps < 0:
            raise ConfigError("time.steps must be >= 0")
        if not 0 < self.cfl <= 1:
            raise ConfigError("time.cfl must lie in (0, 1]")

    @property
    def final_time(self) -> float:
        return self.steps * self.dt


@dataclass(frozen=True)
class SimulationConfig:
    physics: PhysicsKind
    material: object
    grid: GridSpec
    boundaries: BoundarySpec
    source: SourceSpec
    time: TimeGrid
    layers: str = "pml"
    integrator: str = "leapfrog"

    def __post_init__(self):
        object.__setattr__(self, "physics", PhysicsKind(self.physics))
        if self.layers not in LAYER_KINDS:
            raise ConfigError(f"layers.kind must be one of {LAYER_KINDS}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"time.integrator must be one of {INTEGRATORS}")
        if self.integrator == "trapezoidal" and self.grid.dim != 1:
            raise ConfigError("the trapezoidal integrator is implemented for 1D only")
        if len(self.boundaries.faces) != self.grid.dim:
            raise ConfigError("boundaries.faces needs one pair per axis")
        limit = model.cfl_limit(self.grid, self.material.max_speed)
        if self.time.dt > self.time.cfl * limit * (1 + 1e-12):
            raise ConfigError(
                f"time.dt={self.time.dt:g} violates the CFL bound {self.time.cfl * limit:g}"
            )
        for a, periodic in enumerate(self.boundaries.periodic):
            if periodic and self.grid.has_layers(a):
                raise ConfigError(f"grid.absorbing: periodic axis {a} cannot carry layers")
        if self.layers == "cml" and self.grid.interest_mask is None:
            self.grid.check_divisible()

    def with_steps(self, steps: int) -> "SimulationConfig":
        return _replace(self, time=TimeGrid(self.time.dt, int(steps), self.time.cfl))

    def with_layers(self, layers: str) -> "SimulationConfig":
        return _replace(self, layers=layers)


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


def cfl_timestep(grid: GridSpec, material, cfl: float = 0.9) -> float:
    return cfl * model.cfl_limit(grid, material.max_speed)


# --------------------------------------------------------------------------
# states and trajectories
# --------------------------------------------------------------------------


@dataclass
class WaveState:
    q: list
    r: list | None = None
    s: list | None = None
    step: int = 0

    def copy(self) -> "WaveState":
        cp = lambda xs: None if xs is None else [x.copy() for x in xs]
        return WaveState(cp(self.q), cp(self.r), cp(self.s), self.step)

    def max_abs(self) -> float:
        m = 0.0
        for group in (self.q, self.r, self.s):
            if group is None:
                continue
            for x in group:
                if x.size:
                    m = max(m, float(np.max(np.abs(x))))
        return m

    def flat(self) -> np.ndarray:
        parts = [x.ravel() for x in self.q]
        for group in (self.r, self.s):
            if group is not None:
                parts += [x.ravel() for x in group]
        return np.concatenate(parts)


@dataclass
class Trajectory:
    """Store-all record of a forward run (doubles as the checkpoint store)."""

    states: list
    energies: np.ndarray
    times: np.ndarray
    sigma: SigmaFields | None
    scheme: str
    sim: "Simulation" = field(repr=False, default=None)

    @property
    def final(self) -> WaveState:
        return self.states[-1]


# --------------------------------------------------------------------------
# local (pointwise) update and its transpose
# --------------------------------------------------------------------------


def _sym(sig):
    """Elementary symmetric polynomials and the per-axis 'others' terms."""
    n = len(sig)
    if n == 2:
        s1, s2 = sig
        return s1 + s2, s1 * s2, None, [s2, s1], None
    s1, s2, s3 = sig
    e1 = s1 + s2 + s3
    e2 = s1 * s2 + s1 * s3 + s2 * s3
    e3 = s1 * s2 * s3
    return e1, e2, e3, [s2 + s3, s1 + s3, s1 + s2], [s2 * s3, s1 * s3, s1 * s2]


def local_update(q0, r0, s0, D, f, sig, tau):
    """Advance one unknown by ``tau`` with frozen flux derivatives ``D``.

    ``sig`` is None (undamped), a single sigma (CML or 1D PML), or one sigma
    per axis (2D/3D PML, with auxiliary fields ``r0``/``s0``).
    """
    Dsum = sum(D)
    ht = 0.5 * tau
    if sig is None:
        B = q0 + ht * (f - Dsum)
        return 2 * B - q0, None, None
    if len(sig) == 1:
        den = 1 + ht * sig[0]
        B = q0 + ht * (f - Dsum)
        qb = B / den
        return 2 * qb - q0, None, None
    e1, e2, e3, a, b = _sym(sig)
    Sr = sum(ai * Di for ai, Di in zip(a, D))
    if e3 is None:
        den = 1 + ht * e1 + ht * ht * e2
        B = q0 + ht * (f - Dsum - r0 - ht * Sr)
        qb = B / den
        rb = r0 + ht * (e2 * qb + Sr)
        return 2 * qb - q0, 2 * rb - r0, None
    Ss = sum(bi * Di for bi, Di in zip(b, D))
    den = 1 + ht * e1 + ht * ht * e2 + ht * ht * ht * e3
    B = q0 + ht * (f - Dsum - r0 - ht * Sr - ht * s0 - ht * ht * Ss)
    qb = B / den
    sb = s0 + ht * (e3 * qb + Ss)
    rb = r0 + ht * (e2 * qb + Sr + sb)
    return 2 * qb - q0, 2 * rb - r0, 2 * sb - s0


def local_update_T(q0, r0, s0, D, f, sig, tau, lq1, lr1, ls1):
    """Transpose of :func:`local_update` for the output adjoints ``l*1``.

    Returns ``(lq0, lr0, ls0, lD, lsig)``; ``lsig`` holds d/dsigma_j of
    ``<l_out, out>`` as full-shape arrays (None when undamped).
    """
    ht = 0.5 * tau
    nd = len(D)
    if sig is None:
        lB = 2 * lq1
        return lB - lq1, None, None, [-ht * lB] * nd, None
    if len(sig) == 1:
        den = 1 + ht * sig[0]
        B = q0 + ht * (f - sum(D))
        qb = B / den
        lqb = 2 * lq1
        lB = lqb / den
        lden = -lqb * qb / den
        lDsum = -ht * lB
        return lB - lq1, None, None, [lDsum] * nd, [ht * lden]

    e1, e2, e3, a, b = _sym(sig)
    Dsum = sum(D)
    Sr = sum(ai * Di for ai, Di in zip(a, D))
    three = e3 is not None
    if three:
        Ss = sum(bi * Di for bi, Di in zip(b, D))
        den = 1 + ht * e1 + ht * ht * e2 + ht * ht * ht * e3
        B = q0 + ht * (f - Dsum - r0 - ht * Sr - ht * s0 - ht * ht * Ss)
    else:
        den = 1 + ht * e1 + ht * ht * e2
        B = q0 + ht * (f - Dsum - r0 - ht * Sr)
    qb = B / den

    lqb = 2 * lq1
    lq0 = -lq1
    lrb = 2 * lr1
    lr0 = lrb - lr1
    # rb = r0 + ht * (e2 qb + Sr [+ sb])
    lqb = lqb + ht * e2 * lrb
    le2 = ht * qb * lrb
    lSr = ht * lrb
    if three:
        lsb = 2 * ls1 + ht * lrb
        ls0 = lsb - ls1
        # sb = s0 + ht * (e3 qb + Ss)
        lqb = lqb + ht * e3 * lsb
        le3 = ht * qb * lsb
        lSs = ht * lsb
    lB = lqb / den
    lden = -lqb * qb / den
    le1 = ht * lden
    le2 = le2 + ht * ht * lden
    lq0 = lq0 + lB
    lDsum = -ht * lB
    lr0 = lr0 - ht * lB
    lSr = lSr - ht * ht * lB
    if three:
        le3 = le3 + ht * ht * ht * lden
        ls0 = ls0 - ht * ht * lB
        lSs = lSs - ht * ht * ht * lB

    lD = [lDsum + ai * lSr for ai in a]
    la = [Di * lSr for Di in D]
    if three:
        lD = [lDi + bi * lSs for lDi, bi in zip(lD, b)]
        lb = [Di * lSs for Di in D]
    # chain to sigma_j
    lsig = []
    for j in range(nd):
        g = le1 + a[j] * le2 + sum(la[i] for i in range(nd) if i != j)
        if three:
            g = g + b[j] * le3
            for i in range(nd):
                if i == j:
                    continue
                m = 3 - i - j
                g = g + lb[i] * sig[m]
        lsig.append(g)
    return lq0, lr0, (ls0 if three else None), lD, lsig


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


class Simulation:
    """A configured forward problem: discretisation, layout, source, stepping."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.mat = config.material
        self.grid = config.grid
        self.dt = config.time.dt
        self.disc = Discretization.build(
            config.physics, config.material, config.grid, config.boundaries.periodic
        )
        self.layout = model.build_layout(config.grid)
        self.Q = model.q_matrix(config.physics, config.material, self.grid.dim)
        self.weights = [self.disc.interior_weight(c) * self.grid.cell_volume for c in range(self.ncomp)]
        self.walls = [self.disc.wall_mask(c) for c in range(self.ncomp)]
        self._setup_source(config.source)
        self.aux = 0
        if config.layers == "pml":
            self.aux = min(self.grid.dim - 1, 2)
        self._trap = None

    @property
    def ncomp(self) -> int:
        return len(self.disc.comps)

    def comp_index(self, name: str) -> int:
        for c, comp in enumerate(self.disc.comps):
            if comp.name == name:
                return c
        raise ConfigError(f"source.component: no component {name!r} for {self.config.physics.value}")

    # ------------------------------------------------------------------
    def _setup_source(self, src: SourceSpec):
        self.source = src
        self.src_comp = None
        self.src_weight = None
        self.port = None
        if src.kind == "none":
            return
        if src.kind == "port":
            axis, side = src.axis, src.side
            if axis >= self.grid.dim or side not in (0, 1):
                raise ConfigError("source.axis/side out of range")
            if self.config.boundaries.faces[axis][side] != "port":
                raise ConfigError("source: port source needs a 'port' boundary face")
            if self.grid.widths[axis][side]:
                raise ConfigError("source: the port face must border the interest region")
            cands = [
                c for c, comp in enumerate(self.disc.comps)
                if comp.group == 0 and comp.stagger[axis] == FACE
            ]
            c = cands[0]
            idx = [slice(None)] * self.grid.dim
            idx[axis] = 0 if side == 0 else -1
            self.port = (c, tuple(idx))
            return
        name = src.component or self.disc.comps[-1].name
        c = self.comp_index(name)
        stag = self.disc.comps[c].stagger
        shape = self.disc.comp_shape(c)
        pos = src.position
        if pos is None or len(pos) != self.grid.dim:
            raise ConfigError("source.position needs one coordinate per axis")
        weight = np.ones(shape)
        if src.kind == "point":
            weight = np.zeros(shape)
            idx = tuple(
                int(np.argmin(np.abs(self.disc.positions(a, s) - pos[a]))) for a, s in enumerate(stag)
            )
            weight[idx] = 1.0
        else:
            r2 = 0.0
            for a, s in enumerate(stag):
                x = self.disc.positions(a, s) - pos[a]
                bshape = [1] * self.grid.dim
                bshape[a] = -1
                r2 = r2 + (x.reshape(bshape) / src.width) ** 2
            weight = weight * np.exp(-r2)
            weight[weight < 1e-16] = 0.0
        interest = self.disc.cell_to_samples(self.layout.interest.astype(int), stag, np.minimum)
        if np.any((weight != 0) & (interest == 0)):
            raise ConfigError("source: spatial support must lie inside the interest region")
        self.src_comp = c
        self.src_weight = weight

    def source_term(self, c: int, t: float):
        if c != self.src_comp:
            return 0.0
        return self.source.signal(t) * self.src_weight

    def port_value(self, t: float) -> float:
        return self.source.signal(t)

    # ------------------------------------------------------------------
    def initial_state(self, fields: dict | None = None) -> WaveState:
        q = [np.zeros(self.disc.comp_shape(c)) for c in range(self.ncomp)]
        if fields:
            for name, value in fields.items():
                c = self.comp_index(name)
                q[c] = np.array(np.broadcast_to(value, q[c].shape), dtype=float)
                if self.walls[c] is not None:
                    q[c][self.walls[c]] = 0.0
        r = [np.zeros_like(x) for x in q] if self.aux >= 1 else None
        s = [np.zeros_like(x) for x in q] if self.aux >= 2 else None
        state = WaveState(q, r, s, 0)
        self._apply_port(state.q, 0.0)
        return state

    def _apply_port(self, q, t):
        if self.port is not None:
            c, idx = self.port
            q[c][idx] = self.port_value(t)

    def _sig(self, sigma: SigmaFields | None, c: int):
        if sigma is None:
            return None
        return sigma.for_component(self.disc.comps[c].stagger)

    # ------------------------------------------------------------------
    # leapfrog stages
    # ------------------------------------------------------------------
    def stage(self, state: WaveState, sigma, group: int, tau: float, t_src: float, t_port: float | None):
        q = list(state.q)
        r = None if state.r is None else list(state.r)
        s = None if state.s is None else list(state.s)
        for c, comp in enumerate(self.disc.comps):
            if comp.group != group:
                continue
            D = self.disc.flux_derivatives(state.q, c)
            f = self.source_term(c, t_src)
            q1, r1, s1 = local_update(
                state.q[c],
                None if state.r is None else state.r[c],
                None if state.s is None else state.s[c],
                D, f, self._sig(sigma, c), tau,
            )
            wall = self.walls[c]
            if wall is not None:
                q1[wall] = 0.0
                if r1 is not None:
                    r1[wall] = 0.0
                if s1 is not None:
                    s1[wall] = 0.0
            q[c] = q1
            if r is not None:
                r[c] = r1 if r1 is not None else state.r[c]
            if s is not None:
                s[c] = s1 if s1 is not None else state.s[c]
        if t_port is not None:
            self._apply_port(q, t_port)
        return WaveState(q, r, s, state.step)

    def stage_T(self, state: WaveState, sigma, group: int, tau: float, t_src: float, lam: WaveState, sens):
        """Transpose of :meth:`stage` at input ``state`` applied to ``lam``."""
        lq = list(lam.q)
        lr = None if lam.r is None else list(lam.r)
        ls = None if lam.s is None else list(lam.s)
        for c, comp in enumerate(self.disc.comps):
            if comp.group != group:
                continue
            wall = self.walls[c]
            lq1 = lam.q[c]
            lr1 = None if lam.r is None else lam.r[c]
            ls1 = None if lam.s is None else lam.s[c]
            if wall is not None:
                lq1 = np.where(wall, 0.0, lq1)
                lr1 = None if lr1 is None else np.where(wall, 0.0, lr1)
                ls1 = None if ls1 is None else np.where(wall, 0.0, ls1)
            if self.port is not None and self.port[0] == c:
                lq1 = lq1.copy()
                lq1[self.port[1]] = 0.0
            D = self.disc.flux_derivatives(state.q, c)
            f = self.source_term(c, t_src)
            sig = self._sig(sigma, c)
            lq0, lr0, ls0, lD, lsig = local_update_T(
                state.q[c],
                None if state.r is None else state.r[c],
                None if state.s is None else state.s[c],
                D, f, sig, tau, lq1, lr1, ls1,
            )
            lq[c] = lq0
            if lr is not None:
                lr[c] = lr0 if lr0 is not None else lr1
            if ls is not None:
                ls[c] = ls0 if ls0 is not None else ls1
            self.disc.flux_derivatives_T(lD, c, lq)
            if lsig is not None and sens is not None:
                _accumulate_sens(sens, comp.stagger, lsig)
        return WaveState(lq, lr, ls, lam.step)

    def leapfrog_substates(self, state: WaveState, sigma):
        n = state.step
        t0 = n * self.dt
        half = t0 + 0.5 * self.dt
        t1 = (n + 1) * self.dt
        a = self.stage(state, sigma, 0, 0.5 * self.dt, t0, half)
        b = self.stage(a, sigma, 1, self.dt, half, None)
        c = self.stage(b, sigma, 0, 0.5 * self.dt, t1, t1)
        c.step = n + 1
        return a, b, c

    def step(self, state: WaveState, sigma) -> WaveState:
        if self.config.integrator == "trapezoidal":
            return self.trapezoidal().step(state, sigma)
        return self.leapfrog_substates(state, sigma)[2]

    def trapezoidal(self) -> "TrapezoidalStepper":
        if self._trap is None:
            self._trap = TrapezoidalStepper(self)
        return self._trap

    # ------------------------------------------------------------------
    def energy(self, state: WaveState) -> float:
        from .energy import total_energy

        return total_energy(state, self)

    def run(self, sigma=None, steps: int | None = None, initial: dict | None = None) -> Trajectory:
        steps = self.config.time.steps if steps is None else steps
        if sigma is not None and self.config.layers == "none":
            sigma = None
        if self.config.integrator == "trapezoidal":
            self.trapezoidal().prepare(sigma)
        state = self.initial_state(initial)
        states = [state]
        energies = [self.energy(state)]
        for n in range(steps):
            state = self.step(state, sigma)
            m = state.max_abs()
            if not np.isfinite(m) or m > DIVERGENCE_LIMIT:
                raise DivergenceError(n + 1)
            states.append(state)
            energies.append(self.energy(state))
        times = self.dt * np.arange(steps + 1)
        return Trajectory(states, np.asarray(energies), times, sigma, self.config.integrator, self)


def _accumulate_sens(sens: SigmaFields, stagger, lsig):
    if sens.mode == "cml":
        sens.cell[tuple(stagger)] += lsig[0]
        return
    for j, g in enumerate(lsig):
        g = np.asarray(g)
        axes = tuple(a for a in range(g.ndim) if a != j)
        red = g.sum(axis=axes) if axes else g
        sens.axis[j][stagger[j]] += np.broadcast_to(red, sens.axis[j][stagger[j]].shape)


# --------------------------------------------------------------------------
# implicit trapezoidal rule (1D reference)
# --------------------------------------------------------------------------


class TrapezoidalStepper:
    """``(x1 - x0)/dt + (A + S)(x1 + x0)/2 = (f0 + f1)/2`` on the evolving samples."""

    def __init__(self, sim: Simulation):
        self.sim = sim
        disc = sim.disc
        sizes = [int(np.prod(disc.comp_shape(c))) for c in range(sim.ncomp)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        n = int(self.offsets[-1])
        # assemble the flux operator column by column
        A = np.zeros((n, n))
        for j in range(n):
            e = self._unflat(np.eye(1, n, j)[0])
            col = []
            for c in range(sim.ncomp):
                col.append(np.asarray(sum(disc.flux_derivatives(e, c)) * np.ones(disc.comp_shape(c))).ravel())
            A[:, j] = np.concatenate(col)
        wall = np.concatenate(
            [
                (np.zeros(sizes[c], bool) if sim.walls[c] is None else sim.walls[c].ravel())
                for c in range(sim.ncomp)
            ]
        )
        self.free = np.nonzero(~wall)[0]
        self.fixed = np.nonzero(wall)[0]
        self.A = A
        self.A_ff = A[np.ix_(self.free, self.free)]
        self.A_fw = A[np.ix_(self.free, self.fixed)]
        self.sig_diag = None
        self.lu = None

    def _unflat(self, x):
        return [
            x[self.offsets[c] : self.offsets[c + 1]].reshape(self.sim.disc.comp_shape(c))
            for c in range(self.sim.ncomp)
        ]

    def flat(self, q) -> np.ndarray:
        return np.concatenate([x.ravel() for x in q])

    def sigma_diag(self, sigma) -> np.ndarray:
        n = int(self.offsets[-1])
        if sigma is None:
            return np.zeros(n)
        parts = []
        for c, comp in enumerate(self.sim.disc.comps):
            sig = sigma.for_component(comp.stagger)
            parts.append(np.broadcast_to(sig[0], self.sim.disc.comp_shape(c)).ravel())
        return np.concatenate(parts)

    def prepare(self, sigma):
        dt = self.sim.dt
        s = self.sigma_diag(sigma)[self.free]
        self.sig_diag = s
        eye = identity(len(self.free), format="csc")
        K = csc_matrix(self.A_ff) + csc_matrix(np.diag(s))
        self.M_plus = (eye / dt + 0.5 * K).tocsc()
        self.M_minus = (eye / dt - 0.5 * K).tocsc()
        self.lu = splu(self.M_plus)
        self.lu_T = splu(self.M_plus.T.tocsc())
        self._sigma_ref = sigma

    def forcing(self, t: float) -> np.ndarray:
        sim = self.sim
        q = [np.asarray(sim.source_term(c, t) * np.ones(sim.disc.comp_shape(c))) for c in range(sim.ncomp)]
        b = self.flat(q)[self.free]
        if sim.port is not None:
            w = [np.zeros(sim.disc.comp_shape(c)) for c in range(sim.ncomp)]
            c, idx = sim.port
            w[c][idx] = sim.port_value(t)
            b = b - self.A_fw @ self.flat(w)[self.fixed]
        return b

    def step(self, state: WaveState, sigma) -> WaveState:
        if self.lu is None or sigma is not self._sigma_ref:
            self.prepare(sigma)
        dt = self.sim.dt
        n = state.step
        x0 = self.flat(state.q)
        rhs = self.M_minus @ x0[self.free] + 0.5 * (self.forcing(n * dt) + self.forcing((n + 1) * dt))
        x1 = np.zeros_like(x0)
        x1[self.free] = self.lu.solve(rhs)
        q = [part.copy() for part in self._unflat(x1)]
        self.sim._apply_port(q, (n + 1) * dt)
        return WaveState(q, None, None, n + 1)

    def step_homogeneous(self, x: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        """One unforced step on the evolving samples, plus an optional source."""
        rhs = self.M_minus @ x
        if source is not None:
            rhs = rhs + source
        return self.lu.solve(rhs)


# --------------------------------------------------------------------------
# named steppers
# --------------------------------------------------------------------------


def _check_aux(sim: Simulation, sigma, dim):
    if sim.grid.dim != dim:
        raise ConfigError(f"stepper expects a {dim}D simulation")


def step_1d(sim: Simulation, state: WaveState, sigma) -> WaveState:
    """One step of ``q' + F_1,1 + sigma_1 q = f`` (no auxiliary fields)."""
    _check_aux(sim, sigma, 1)
    return sim.step(state, sigma)


def step_2d_pml(sim: Simulation, state: WaveState, sigma) -> WaveState:
    _check_aux(sim, sigma, 2)
    if sigma is not None and sigma.mode != "pml":
        raise ConfigError("step_2d_pml needs per-axis sigma fields")
    return sim.step(state, sigma)


def step_3d_pml(sim: Simulation, state: WaveState, sigma) -> WaveState:
    _check_aux(sim, sigma, 3)
    if sigma is not None and sigma.mode != "pml":
        raise ConfigError("step_3d_pml needs per-axis sigma fields")
    return sim.step(state, sigma)


def step_cml(sim: Simulation, state: WaveState, sigma) -> WaveState:
    if sigma is not None and sigma.mode != "cml":
        raise ConfigError("step_cml needs a scalar sigma field")
    return sim.step(state, sigma)


def run_forward(config: SimulationConfig, profile=None, initial: dict | None = None) -> Trajectory:
    """Run ``config`` with the attenuation ``profile`` (None: no damping)."""
    from .attenuation import rasterize

    sim = Simulation(config)
    sigma = None
    if profile is not None and config.layers != "none":
        sigma = rasterize(profile, sim.disc, sim.layout)
        if (sigma.mode == "cml") != (config.layers == "cml"):
            raise ConfigError("attenuation.kind does not match layers.kind")
    return sim.run(sigma, initial=initial)


def write_energy_csv(traj: Trajectory, path) -> None:
    from .io import fmt

    with open(path, "w", newline="") as fh:
        fh.write("step,time,energy\n")
        for n, (t, e) in enumerate(zip(traj.times, traj.energies)):
            fh.write(f"{n},{fmt(t)},{fmt(e)}\n")
