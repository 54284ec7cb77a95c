"""Ready-made problem set-ups used by the tests, the CLI and the docs."""
from __future__ import annotations

import numpy as np

from .attenuation import AttenuationProfile
from .model import AcousticMaterial, ElasticMaterial, GridSpec, PhysicsKind
from .solver import BoundarySpec, SimulationConfig, SourceSpec, TimeGrid, cfl_timestep

AIR = AcousticMaterial(rho=1.269, K=101000.0)
STEEL_LIKE = ElasticMaterial(rho=2500.0, v_l=5830.95, v_t=3464.10)


def acoustic_1d(
    interest_cells: int = 40,
    layer_cells: int = 10,
    h: float = 0.01,
    sublayers: int = 1,
    steps: int | None = None,
    cfl: float = 0.9,
    integrator: str = "leapfrog",
    layers: str = "pml",
    t0_steps: float = 100.0,
) -> SimulationConfig:
    """Pipe driven by a Gaussian velocity pulse at the left, layer on the right."""
    n = interest_cells + layer_cells
    grid = GridSpec((n,), (h,), ((0, layer_cells),), sublayer_count=sublayers)
    dt = cfl_timestep(grid, AIR, cfl)
    t0 = t0_steps * dt
    src = SourceSpec(kind="port", axis=0, side=0, t0=t0, tau=t0 / 4)
    if steps is None:
        steps = int(round((t0 + 2.5 * interest_cells * h / AIR.speed) / dt))
    bnd = BoundarySpec((("port", "reflecting_fixed"),))
    return SimulationConfig(
        PhysicsKind.ACOUSTIC, AIR, grid, bnd, src, TimeGrid(dt, steps, cfl), layers, integrator
    )


def acoustic_2d(
    interest_cells: int = 12,
    layer_cells: int = 10,
    h: float = 0.01,
    sublayers: int = 1,
    steps: int | None = None,
    cfl: float = 0.9,
    layers: str = "pml",
    periodic_y: bool = False,
    ny: int | None = None,
) -> SimulationConfig:
    """Square interest region with layers on every side and a centred Gaussian blob source.

    With ``periodic_y`` the problem is a 2D pipe: layers only along x, a
    periodic y axis of ``ny`` cells and a port on the left face.
    """
    if periodic_y:
        nx = interest_cells + layer_cells
        ny = ny or 4
        grid = GridSpec((nx, ny), (h, h), ((0, layer_cells), (0, 0)), sublayer_count=sublayers)
        dt = cfl_timestep(grid, AIR, cfl)
        t0 = 100 * dt
        src = SourceSpec(kind="port", axis=0, side=0, t0=t0, tau=t0 / 4)
        if steps is None:
            steps = int(round((t0 + 2.5 * interest_cells * h / AIR.speed) / dt))
        bnd = BoundarySpec((("port", "reflecting_fixed"), ("periodic", "periodic")))
    else:
        n = interest_cells + 2 * layer_cells
        w = (layer_cells, layer_cells)
        grid = GridSpec((n, n), (h, h), (w, w), sublayer_count=sublayers)
        dt = cfl_timestep(grid, AIR, cfl)
        mid = 0.5 * n * h
        width = interest_cells * h / 14
        t0 = 4 * width / AIR.speed
        tau = width / AIR.speed
        # pressure peak of the order of rho * c * (1 m/s), as in the 1D pipe
        amp = AIR.rho * AIR.speed / tau
        src = SourceSpec(kind="gaussian", component="p", position=(mid, mid), width=width,
                         t0=t0, tau=tau, amplitude=amp)
        if steps is None:
            steps = int(round((t0 + interest_cells * h * np.sqrt(2) / AIR.speed) / dt))
        bnd = BoundarySpec.walls(2)
    return SimulationConfig(PhysicsKind.ACOUSTIC, AIR, grid, bnd, src, TimeGrid(dt, steps, cfl), layers)


def elastic_square(
    interest_cells: int = 20,
    layer_cells: int = 10,
    h: float = 0.6e-3,
    sublayers: int = 5,
    steps: int | None = None,
    cfl: float = 0.9,
    layers: str = "pml",
) -> SimulationConfig:
    """2D plane-strain square with a horizontal point force in the middle."""
    n = interest_cells + 2 * layer_cells
    w = (layer_cells, layer_cells)
    grid = GridSpec((n, n), (h, h), (w, w), sublayer_count=sublayers)
    dt = cfl_timestep(grid, STEEL_LIKE, cfl)
    mid = 0.5 * n * h
    t0 = 2e-6
    src = SourceSpec(kind="gaussian", component="v1", position=(mid, mid), width=h,
                     t0=t0, tau=5e-7, amplitude=1.0 / 5e-7)
    if steps is None:
        steps = int(round((t0 + interest_cells * h * np.sqrt(2) / STEEL_LIKE.v_t) / dt))
    return SimulationConfig(
        PhysicsKind.ELASTODYNAMIC, STEEL_LIKE, grid, BoundarySpec.walls(2), src,
        TimeGrid(dt, steps, cfl), layers,
    )


def profile_for(config: SimulationConfig, kind: str = "piecewise", bins: int = 1, order: int = 0,
                values=None, tie_to_axes: bool = True) -> AttenuationProfile:
    if kind == "cml":
        bins = config.grid.sublayer_count
    return AttenuationProfile(kind, config.grid, order=order, bins=bins, tie_to_axes=tie_to_axes, values=values)
