"""Physics kinds, materials, grid geometry and domain layouts.

State ordering per physics (``dim`` is the spatial dimension):

* acoustic: ``(v1, ..., vd, p)``
* elastodynamic (2D plane strain): ``(v1, v2, T11, T22, T12)``
* electromagnetic (2D TM): ``(Hx, Hy, Ez)``

The flux matrices ``A_i`` act on these states so that the governing system
reads ``dq/dt + sum_i A_i dq/dx_i + damping = f``.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage


class ConfigError(ValueError):
    """Invalid configuration or geometry."""


class LayoutError(ConfigError):
    """A domain layout violates its invariants."""


class PhysicsKind(str, enum.Enum):
    ACOUSTIC = "acoustic"
    ELASTODYNAMIC = "elastodynamic"
    ELECTROMAGNETIC = "electromagnetic"


SUPPORTED_DIMS = {
    PhysicsKind.ACOUSTIC: (1, 2, 3),
    PhysicsKind.ELASTODYNAMIC: (2,),
    PhysicsKind.ELECTROMAGNETIC: (2,),
}


@dataclass(frozen=True)
class Component:
    """One unknown field of the state vector.

    ``group`` 0 holds velocity-like unknowns (v, H) and group 1 the
    pressure/stress/E unknowns; the leapfrog scheme alternates between them.
    ``stagger[a]`` is 1 when the unknown sits on cell faces normal to axis
    ``a`` and 0 when it sits at cell centres along that axis.
    """

    name: str
    group: int
    stagger: tuple[int, ...]


def components(physics: PhysicsKind, dim: int) -> tuple[Component, ...]:
    physics = PhysicsKind(physics)
    if dim not in SUPPORTED_DIMS[physics]:
        raise ConfigError(f"{physics.value} is not supported in {dim}D")
    if physics is PhysicsKind.ACOUSTIC:
        vel = tuple(
            Component(f"v{a + 1}", 0, tuple(int(b == a) for b in range(dim)))
            for a in range(dim)
        )
        return vel + (Component("p", 1, (0,) * dim),)
    if physics is PhysicsKind.ELASTODYNAMIC:
        return (
            Component("v1", 0, (1, 0)),
            Component("v2", 0, (0, 1)),
            Component("T11", 1, (0, 0)),
            Component("T22", 1, (0, 0)),
            Component("T12", 1, (1, 1)),
        )
    return (
        Component("Hx", 0, (0, 1)),
        Component("Hy", 0, (1, 0)),
        Component("Ez", 1, (0, 0)),
    )


def state_size(physics: PhysicsKind, dim: int) -> int:
    return len(components(physics, dim))


@dataclass(frozen=True)
class AcousticMaterial:
    rho: float
    K: float

    physics = PhysicsKind.ACOUSTIC

    def __post_init__(self):
        _positive(rho=self.rho, K=self.K)

    @property
    def speed(self) -> float:
        return float(np.sqrt(self.K / self.rho))

    max_speed = speed
    min_speed = speed


@dataclass(frozen=True)
class ElasticMaterial:
    """Isotropic solid given by density and longitudinal/transverse speeds."""

    rho: float
    v_l: float
    v_t: float

    physics = PhysicsKind.ELASTODYNAMIC

    def __post_init__(self):
        _positive(rho=self.rho, v_l=self.v_l, v_t=self.v_t)
        if not self.v_l > self.v_t:
            raise ConfigError("elastic material requires v_l > v_t")

    @property
    def lame(self) -> tuple[float, float]:
        mu = self.rho * self.v_t**2
        lam = self.rho * (self.v_l**2 - 2.0 * self.v_t**2)
        return lam, mu

    def stiffness(self) -> np.ndarray:
        """Plane-strain Voigt stiffness acting on (e11, e22, 2 e12)."""
        lam, mu = self.lame
        return np.array(
            [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
        )

    @property
    def max_speed(self) -> float:
        return self.v_l

    @property
    def min_speed(self) -> float:
        return self.v_t


@dataclass(frozen=True)
class ElectromagneticMaterial:
    mu: float
    eps: float

    physics = PhysicsKind.ELECTROMAGNETIC

    def __post_init__(self):
        _positive(mu=self.mu, eps=self.eps)

    @property
    def speed(self) -> float:
        return float(1.0 / np.sqrt(self.mu * self.eps))

    max_speed = speed
    min_speed = speed


MaterialParams = AcousticMaterial | ElasticMaterial | ElectromagneticMaterial


def _positive(**values):
    for name, value in values.items():
        if not (np.isfinite(value) and value > 0):
            raise ConfigError(f"material parameter {name} must be > 0, got {value}")


def _check_material(physics: PhysicsKind, mat) -> None:
    if PhysicsKind(physics) is not mat.physics:
        raise ConfigError(
            f"material {type(mat).__name__} does not match physics {physics}"
        )


def flux_matrix(physics: PhysicsKind, mat, axis: int, dim: int) -> np.ndarray:
    """Dense ``A_axis`` for the reduced state of ``physics`` in ``dim`` D."""
    physics = PhysicsKind(physics)
    _check_material(physics, mat)
    if not 0 <= axis < dim:
        raise ConfigError(f"axis {axis} out of range for {dim}D")
    n = state_size(physics, dim)
    A = np.zeros((n, n))
    if physics is PhysicsKind.ACOUSTIC:
        p = dim
        A[axis, p] = 1.0 / mat.rho
        A[p, axis] = mat.K
    elif physics is PhysicsKind.ELECTROMAGNETIC:
        hx, hy, ez = 0, 1, 2
        if axis == 0:
            A[hy, ez] = -1.0 / mat.mu
            A[ez, hy] = -1.0 / mat.eps
        else:
            A[hx, ez] = 1.0 / mat.mu
            A[ez, hx] = 1.0 / mat.eps
    else:
        v1, v2, t11, t22, t12 = range(5)
        C = mat.stiffness()
        if axis == 0:
            A[v1, t11] = -1.0 / mat.rho
            A[v2, t12] = -1.0 / mat.rho
            A[t11, v1] = -C[0, 0]
            A[t22, v1] = -C[1, 0]
            A[t12, v2] = -C[2, 2]
        else:
            A[v1, t12] = -1.0 / mat.rho
            A[v2, t22] = -1.0 / mat.rho
            A[t11, v2] = -C[0, 1]
            A[t22, v2] = -C[1, 1]
            A[t12, v1] = -C[2, 2]
    return A


def flux_apply(physics: PhysicsKind, mat, axis: int, q, dim: int | None = None):
    """Return ``A_axis @ q``; ``dim`` defaults to the one implied by ``len(q)``."""
    q = np.asarray(q, dtype=float)
    if dim is None:
        dim = _dim_from_size(PhysicsKind(physics), q.shape[0])
    if q.shape[0] != state_size(physics, dim):
        raise ConfigError(f"state of length {q.shape[0]} does not fit {physics} {dim}D")
    return flux_matrix(physics, mat, axis, dim) @ q


def _dim_from_size(physics: PhysicsKind, n: int) -> int:
    for d in SUPPORTED_DIMS[physics]:
        if state_size(physics, d) == n:
            return d
    raise ConfigError(f"no {physics.value} state has length {n}")


def q_matrix(physics: PhysicsKind, mat, dim: int) -> np.ndarray:
    """Energy weight ``Q`` with ``E = 1/2 <Q q, q>``."""
    physics = PhysicsKind(physics)
    _check_material(physics, mat)
    n = state_size(physics, dim)
    Q = np.zeros((n, n))
    if physics is PhysicsKind.ACOUSTIC:
        Q[np.arange(dim), np.arange(dim)] = mat.rho
        Q[dim, dim] = 1.0 / mat.K
    elif physics is PhysicsKind.ELECTROMAGNETIC:
        Q[0, 0] = Q[1, 1] = mat.mu
        Q[2, 2] = mat.eps
    else:
        Q[0, 0] = Q[1, 1] = mat.rho
        Q[2:, 2:] = np.linalg.inv(mat.stiffness())
    return Q


# --------------------------------------------------------------------------
# grid and layout
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Structured grid of ``cells`` with absorbing slabs ``widths[a] = (lo, hi)``.

    ``interest_mask`` optionally replaces the rectangular interest box by an
    arbitrary rasterised region (CML only); the widths are then ignored for
    tagging and ``sublayer_count`` one-cell layers wrap the region.
    """

    cells: tuple[int, ...]
    spacing: tuple[float, ...]
    widths: tuple[tuple[int, int], ...]
    sublayer_count: int = 1
    interest_mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(
            self, "widths", tuple((int(lo), int(hi)) for lo, hi in self.widths)
        )
        d = len(self.cells)
        if d not in (1, 2, 3):
            raise ConfigError("grid dimension must be 1, 2 or 3")
        if len(self.spacing) != d or len(self.widths) != d:
            raise ConfigError("grid.spacing and grid.absorbing must match grid.cells")
        if any(c < 4 for c in self.cells):
            raise ConfigError("grid.cells: every axis needs at least 4 cells")
        if any(not h > 0 for h in self.spacing):
            raise ConfigError("grid.spacing must be positive")
        if self.sublayer_count < 1:
            raise ConfigError("grid.sublayer_count must be >= 1")
        for a, (lo, hi) in enumerate(self.widths):
            if lo < 0 or hi < 0:
                raise ConfigError("grid.absorbing widths must be >= 0")
            if lo + hi >= self.cells[a] and self.interest_mask is None:
                raise ConfigError(f"grid.absorbing leaves no interest cells on axis {a}")
        if self.interest_mask is not None:
            mask = np.asarray(self.interest_mask, dtype=bool)
            if mask.shape != self.cells:
                raise ConfigError("grid.interest_mask shape must equal grid.cells")
            object.__setattr__(self, "interest_mask", mask)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def interest_extent(self, axis: int) -> tuple[int, int]:
        lo, hi = self.widths[axis]
        return lo, self.cells[axis] - hi

    def interest_length(self, axis: int) -> float:
        a, b = self.interest_extent(axis)
        return (b - a) * self.spacing[axis]

    def has_layers(self, axis: int) -> bool:
        return sum(self.widths[axis]) > 0

    def check_divisible(self) -> None:
        n = self.sublayer_count
        for a, pair in enumerate(self.widths):
            for w in pair:
                if w % n:
                    raise ConfigError(
                        f"grid.sublayer_count={n} does not divide absorbing width {w} on axis {a}"
                    )


@dataclass(frozen=True)
class DomainLayout:
    """Per-cell region tags.

    ``interest`` marks the domain of interest. ``depth[a]`` is the number of
    cells (1-based) a cell lies into the low/high slab of axis ``a`` (0 when
    outside the slabs). ``cml_layer`` holds 0 in the interest region and the
    layer index 1..N elsewhere.
    """

    interest: np.ndarray
    depth: tuple[np.ndarray, ...]
    cml_layer: np.ndarray
    sublayer_count: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.interest.shape


def build_layout(grid: GridSpec) -> DomainLayout:
    """Tag every cell of ``grid``.

    Rectangular layouts layer the absorbing region in concentric shells
    (Chebyshev depth); masked layouts use the 4-neighbourhood hop distance
    from the interest region, saturating at ``sublayer_count``.
    """
    shape = grid.cells
    N = grid.sublayer_count
    if grid.interest_mask is not None:
        interest = grid.interest_mask.copy()
        hops = hop_distance(interest)
        layer = np.minimum(hops, N)
        depth = tuple(np.zeros(shape, dtype=int) for _ in shape)
        return DomainLayout(interest, depth, layer.astype(int), N)

    grid.check_divisible()
    depth = []
    frac = np.zeros(shape)
    for a, (lo, hi) in enumerate(grid.widths):
        idx = np.arange(shape[a])
        dep = np.zeros(shape[a], dtype=int)
        dep[:lo] = lo - idx[:lo]
        if hi:
            dep[shape[a] - hi :] = idx[shape[a] - hi :] - (shape[a] - hi) + 1
        width = np.where(idx < lo, lo, hi)
        rel = np.where(dep > 0, dep / np.maximum(width, 1), 0.0)
        bshape = [1] * len(shape)
        bshape[a] = shape[a]
        depth.append(np.broadcast_to(dep.reshape(bshape), shape).copy())
        frac = np.maximum(frac, rel.reshape(bshape))
    interest = np.all([dd == 0 for dd in depth], axis=0)
    layer = np.where(interest, 0, np.ceil(frac * N - 1e-9)).astype(int)
    return DomainLayout(interest, tuple(depth), layer, N)


def hop_distance(interest: np.ndarray) -> np.ndarray:
    """Breadth-first 4-neighbourhood hop distance from the interest region."""
    interest = np.asarray(interest, dtype=bool)
    dist = np.full(interest.shape, -1, dtype=int)
    queue = deque()
    for idx in zip(*np.nonzero(interest)):
        dist[idx] = 0
        queue.append(idx)
    while queue:
        idx = queue.popleft()
        for a in range(interest.ndim):
            for step in (-1, 1):
                nb = list(idx)
                nb[a] += step
                if 0 <= nb[a] < interest.shape[a]:
                    nb = tuple(nb)
                    if dist[nb] < 0:
                        dist[nb] = dist[idx] + 1
                        queue.append(nb)
    return dist


def validate_layout(grid: GridSpec, layout: DomainLayout) -> list[str]:
    """Return a list of violations (empty when the layout is consistent)."""
    problems: list[str] = []
    N = layout.sublayer_count
    if layout.shape != grid.cells:
        return [f"layout shape {layout.shape} != grid {grid.cells}"]
    if grid.interest_mask is None:
        for a, pair in enumerate(grid.widths):
            for w in pair:
                if w % N:
                    problems.append(
                        f"grid.sublayer_count={N} does not divide width {w} on axis {a}"
                    )
    layer = layout.cml_layer
    interest = layout.interest
    if not interest.any():
        problems.append("empty interest region")
    bad = np.argwhere(interest & (layer != 0))
    if bad.size:
        problems.append(f"cell {tuple(bad[0])} tagged both interest and layer")
    bad = np.argwhere(~interest & ((layer < 1) | (layer > N)))
    if bad.size:
        problems.append(f"cell {tuple(bad[0])} is untagged")
    # each connected piece of layer j must touch layer j-1 (0 = interest)
    full = ndimage.generate_binary_structure(layer.ndim, layer.ndim)
    for j in range(1, N + 1):
        labels, count = ndimage.label(layer == j, structure=full)
        if not count:
            continue
        near = ndimage.binary_dilation(layer == j - 1, structure=full)
        touching = set(np.unique(labels[near & (labels > 0)]))
        for piece in range(1, count + 1):
            if piece not in touching:
                cell = tuple(np.argwhere(labels == piece)[0])
                problems.append(f"layer {j} not contiguous at cell {cell}")
                break
    return problems


def cfl_limit(grid: GridSpec, max_speed: float) -> float:
    return grid.h_min / (max_speed * np.sqrt(grid.dim))


def material_from_dict(physics: PhysicsKind, data: dict):
    physics = PhysicsKind(physics)
    cls = {
        PhysicsKind.ACOUSTIC: AcousticMaterial,
        PhysicsKind.ELASTODYNAMIC: ElasticMaterial,
        PhysicsKind.ELECTROMAGNETIC: ElectromagneticMaterial,
    }[physics]
    return cls(**data)


def axis_names(dim: int) -> Sequence[str]:
    return ("x", "y", "z")[:dim]
