"""Attenuation functions (AFs) and their control parameterisation.

Three families are supported:

``polynomial``
    ``sigma(x) = sum_j c_j g(x)**j`` inside a slab, where ``g`` is the affine
    map with ``g = 0`` on the interface to the interest region and ``g = 1``
    on the exterior boundary.
``piecewise``
    ``N`` constants per slab on the bins ``[j/N, (j+1)/N)`` of ``g`` (the last
    bin is closed).
``cml``
    One constant per consecutive layer, shared by all directions.

The controls are always linear in sigma, so the Jacobian returned by
:func:`sigma_jacobian` does not depend on the control values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import ConfigError, DomainLayout, GridSpec
from .staggered import CENTER, FACE, Discretization

KINDS = ("polynomial", "piecewise", "cml")

#: sampling intervals used for random restarts, per profile kind
RESTART_INTERVALS = {"piecewise": (0.0, 7000.0), "cml": (0.0, 7000.0), "polynomial": (-500.0, 500.0)}


@dataclass(frozen=True)
class AttenuationProfile:
    kind: str
    grid: GridSpec
    order: int = 0
    bins: int = 1
    tie_to_axes: bool = True
    values: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"attenuation.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "polynomial" and self.order < 0:
            raise ConfigError("attenuation.order must be >= 0")
        if self.kind != "polynomial" and self.bins < 1:
            raise ConfigError("attenuation.bins must be >= 1")
        if self.kind == "cml" and self.bins != self.grid.sublayer_count:
            raise ConfigError("cml profiles need attenuation.bins == grid.sublayer_count")
        if self.kind != "cml" and self.grid.interest_mask is not None:
            raise ConfigError("irregular interest regions support cml profiles only")
        if not self.sides:
            raise ConfigError("grid has no absorbing region")
        vals = np.zeros(self.size) if self.values is None else np.asarray(self.values, float)
        if vals.shape != (self.size,):
            raise ConfigError(f"expected {self.size} control values, got {vals.shape}")
        object.__setattr__(self, "values", vals)
        if self.kind != "polynomial" and np.any(vals < 0):
            raise ConfigError("piecewise/cml attenuation values must be non-negative")

    @property
    def sides(self) -> tuple[tuple[int, int], ...]:
        """(axis, side) pairs carrying a slab; side 0 = low, 1 = high."""
        if self.grid.interest_mask is not None:
            return ((0, 0),)
        return tuple(
            (a, s) for a, pair in enumerate(self.grid.widths) for s in (0, 1) if pair[s] > 0
        )

    @property
    def per_set(self) -> int:
        return self.order + 1 if self.kind == "polynomial" else self.bins

    @property
    def n_sets(self) -> int:
        if self.kind == "cml" or self.tie_to_axes:
            return 1
        return len(self.sides)

    @property
    def size(self) -> int:
        return self.per_set * self.n_sets

    def set_index(self, axis: int, side: int) -> int:
        if self.n_sets == 1:
            return 0
        return self.sides.index((axis, side))

    def coefficients(self, axis: int, side: int) -> np.ndarray:
        k = self.set_index(axis, side)
        return self.values[k * self.per_set : (k + 1) * self.per_set]

    def with_values(self, values) -> "AttenuationProfile":
        return replace(self, values=np.asarray(values, dtype=float).copy())

    def zero(self) -> "AttenuationProfile":
        return self.with_values(np.zeros(self.size))

    def controls(self) -> "ControlVector":
        lower = np.full(self.size, -np.inf if self.kind == "polynomial" else 0.0)
        upper = np.full(self.size, np.inf)
        labels = []
        for k in range(self.n_sets):
            where = "all" if self.n_sets == 1 else "axis{}-{}".format(
                self.sides[k][0], "lo" if self.sides[k][1] == 0 else "hi"
            )
            for j in range(self.per_set):
                labels.append(f"{where}:c{j}")
        return ControlVector(self.values.copy(), lower, upper, tuple(labels))


@dataclass(frozen=True)
class ControlVector:
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        n = len(self.values)
        if not (len(self.lower) == len(self.upper) == len(self.labels) == n):
            raise ValueError("control vector arrays must have equal length")

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))


# --------------------------------------------------------------------------
# pointwise evaluation
# --------------------------------------------------------------------------


def _slab_coordinate(grid: GridSpec, axis: int, half_pos):
    """Return (side, numerator, denominator) with g = numerator / denominator.

    ``side`` is -1 outside both slabs. Everything is in half-cell units.
    """
    half_pos = np.asarray(half_pos)
    lo, hi = grid.widths[axis]
    n = grid.cells[axis]
    side = np.full(half_pos.shape, -1)
    num = np.zeros(half_pos.shape, dtype=half_pos.dtype)
    den = np.ones(half_pos.shape, dtype=half_pos.dtype)
    if lo:
        m = half_pos <= 2 * lo
        side[m] = 0
        num[m] = 2 * lo - half_pos[m]
        den[m] = 2 * lo
    if hi:
        m = half_pos >= 2 * (n - hi)
        side[m] = 1
        num[m] = half_pos[m] - 2 * (n - hi)
        den[m] = 2 * hi
    return side, num, den


def _basis(profile: AttenuationProfile, num, den, edge_mean: bool = False) -> np.ndarray:
    """Per-slot basis values, shape (per_set, len(num)).

    With ``edge_mean`` a sample sitting exactly on a jump of a piecewise
    profile takes the mean of the two one-sided values (the interface point
    counts the interest side as zero).
    """
    if profile.kind == "polynomial":
        g = num / den
        return np.stack([g**j for j in range(profile.order + 1)])
    N = profile.bins
    t = num * N
    b = np.minimum(np.floor_divide(t, den), N - 1).astype(int)
    out = np.stack([(b == j).astype(float) for j in range(N)])
    if edge_mean:
        on_edge = (t % den == 0) & (num < den)
        k = np.floor_divide(t, den).astype(int)
        for j in range(N):
            out[j, on_edge & (k == j)] = 0.5  # bin above the edge
            out[j, on_edge & (k == j + 1)] = 0.5  # bin below
    return out


def _axis_jacobian(profile: AttenuationProfile, axis: int, half_pos, edge_mean: bool = False) -> np.ndarray:
    """d sigma_axis(half_pos) / d u, shape (size, len(half_pos))."""
    half_pos = np.atleast_1d(half_pos)
    jac = np.zeros((profile.size, half_pos.size))
    side, num, den = _slab_coordinate(profile.grid, axis, half_pos)
    for s in (0, 1):
        m = side == s
        if not m.any():
            continue
        k = profile.set_index(axis, s)
        rows = slice(k * profile.per_set, (k + 1) * profile.per_set)
        jac[rows, m] += _basis(profile, num[m], den[m], edge_mean)
    return jac


def eval_af(profile: AttenuationProfile, axis: int, x) -> np.ndarray | float:
    """sigma along ``axis`` at coordinate(s) ``x`` in metres (grid origin at 0)."""
    if profile.kind == "cml":
        raise ConfigError("cml profiles are evaluated per cell, see eval_cml")
    scalar = np.ndim(x) == 0
    half = np.atleast_1d(np.asarray(x, dtype=float)) * (2.0 / profile.grid.spacing[axis])
    # snap to exact half-cell positions so bin edges match the rasteriser
    snapped = np.round(half)
    half = np.where(np.abs(half - snapped) < 1e-9, snapped, half)
    out = profile.values @ _axis_jacobian(profile, axis, half)
    return float(out[0]) if scalar else out


def eval_cml(profile: AttenuationProfile, layout: DomainLayout, cell) -> float:
    if profile.kind != "cml":
        raise ConfigError("eval_cml needs a cml profile")
    j = int(layout.cml_layer[tuple(np.atleast_1d(cell))])
    return 0.0 if j == 0 else float(profile.values[j - 1])


# --------------------------------------------------------------------------
# rasterisation on the staggered grid
# --------------------------------------------------------------------------


@dataclass
class SigmaFields:
    """Sampled damping coefficients.

    ``mode == "pml"``: ``axis[a][stag]`` is sigma_a sampled along axis ``a``
    at centres (stag 0) or faces (stag 1); it is constant across the other
    axes. ``mode == "cml"``: ``cell[stagger]`` is the full scalar field at
    the samples of every staggering in use. A leading control axis is present
    when the object holds a Jacobian.
    """

    mode: str
    dim: int
    axis: list | None = None
    cell: dict | None = None

    def for_component(self, stagger) -> list[np.ndarray]:
        if self.mode == "cml":
            return [self.cell[tuple(stagger)]]
        out = []
        for a, s in enumerate(stagger):
            shape = [1] * self.dim
            shape[a] = -1
            out.append(self.axis[a][s].reshape(shape))
        return out


def _staggerings(disc: Discretization):
    return sorted({c.stagger for c in disc.comps})


def rasterize(profile: AttenuationProfile, disc: Discretization, layout: DomainLayout) -> SigmaFields:
    jac = sigma_jacobian(profile, disc, layout)
    u = profile.values
    if jac.mode == "cml":
        return SigmaFields("cml", disc.dim, cell={k: np.tensordot(u, v, axes=1) for k, v in jac.cell.items()})
    return SigmaFields("pml", disc.dim, axis=[[u @ m for m in pair] for pair in jac.axis])


def sigma_jacobian(profile: AttenuationProfile, disc: Discretization, layout: DomainLayout) -> SigmaFields:
    if profile.grid is not disc.grid and profile.grid != disc.grid:
        raise ConfigError("profile and discretisation use different grids")
    if profile.kind == "cml":
        cells = {}
        for st in _staggerings(disc):
            cells[st] = np.stack(
                [disc.cell_to_samples((layout.cml_layer == j + 1).astype(float), st, _mean) for j in range(profile.bins)]
            )
        return SigmaFields("cml", disc.dim, cell=cells)
    axis = []
    for a in range(disc.dim):
        axis.append(
            [_axis_jacobian(profile, a, disc.half_positions(a, s), edge_mean=True) for s in (CENTER, FACE)]
        )
    return SigmaFields("pml", disc.dim, axis=axis)


def _mean(a, b):
    return 0.5 * (a + b)


def zero_fields(disc: Discretization, mode: str) -> SigmaFields:
    if mode == "cml":
        return SigmaFields("cml", disc.dim, cell={st: np.zeros(disc.shape(st)) for st in _staggerings(disc)})
    return SigmaFields(
        "pml", disc.dim, axis=[[np.zeros(disc.axis_len(a, s)) for s in (CENTER, FACE)] for a in range(disc.dim)]
    )


def contract(jac: SigmaFields, sens: SigmaFields) -> np.ndarray:
    """Chain a sigma-sensitivity through the Jacobian: ``g_k = <J_k, sens>``."""
    if jac.mode != sens.mode:
        raise ValueError("Jacobian and sensitivity modes differ")
    if jac.mode == "cml":
        g = 0.0
        for st, block in jac.cell.items():
            g = g + block.reshape(block.shape[0], -1) @ sens.cell[st].ravel()
        return np.asarray(g)
    g = 0.0
    for a in range(jac.dim):
        for s in (CENTER, FACE):
            g = g + jac.axis[a][s] @ sens.axis[a][s]
    return np.asarray(g)
