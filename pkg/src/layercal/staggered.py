"""Staggered-grid bookkeeping: array shapes, unknown positions, differences.

Along an axis with ``n`` cells a centred unknown has ``n`` samples. A face
unknown has ``n + 1`` samples between walls (the two wall faces are held
fixed) and ``n`` samples on a periodic axis (face ``j`` is the low face of
cell ``j``). Positions are kept in integer half-cell units so that layer
membership never depends on floating-point ties.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Component, GridSpec, PhysicsKind, components, flux_matrix

CENTER, FACE = 0, 1


@dataclass(frozen=True)
class Discretization:
    physics: PhysicsKind
    grid: GridSpec
    periodic: tuple[bool, ...]
    comps: tuple[Component, ...]
    # couplings[c][a] -> list of (k, coefficient) with A_a[c, k] != 0
    couplings: tuple[tuple[tuple[tuple[int, float], ...], ...], ...]

    @classmethod
    def build(cls, physics, mat, grid: GridSpec, periodic) -> "Discretization":
        physics = PhysicsKind(physics)
        d = grid.dim
        comps = components(physics, d)
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != d:
            raise ValueError("one periodic flag per axis expected")
        mats = [flux_matrix(physics, mat, a, d) for a in range(d)]
        couplings = []
        for c, comp in enumerate(comps):
            per_axis = []
            for a in range(d):
                row = []
                for k in np.nonzero(mats[a][c])[0]:
                    other = comps[k].stagger
                    ok = other[a] != comp.stagger[a] and all(
                        other[b] == comp.stagger[b] for b in range(d) if b != a
                    )
                    if not ok:
                        raise AssertionError(f"incompatible staggering {comp.name}<-{comps[k].name}")
                    row.append((int(k), float(mats[a][c, k])))
                per_axis.append(tuple(row))
            couplings.append(tuple(per_axis))
        return cls(physics, grid, periodic, comps, tuple(couplings))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def axis_len(self, axis: int, stag: int) -> int:
        n = self.grid.cells[axis]
        return n + 1 if stag == FACE and not self.periodic[axis] else n

    def shape(self, stagger) -> tuple[int, ...]:
        return tuple(self.axis_len(a, s) for a, s in enumerate(stagger))

    def comp_shape(self, c: int) -> tuple[int, ...]:
        return self.shape(self.comps[c].stagger)

    def half_positions(self, axis: int, stag: int) -> np.ndarray:
        """Positions of the samples along ``axis`` in half-cell units."""
        m = self.axis_len(axis, stag)
        return 2 * np.arange(m) + (1 if stag == CENTER else 0)

    def positions(self, axis: int, stag: int) -> np.ndarray:
        return self.half_positions(axis, stag) * (0.5 * self.grid.spacing[axis])

    def wall_mask(self, c: int) -> np.ndarray | None:
        """Boolean mask of samples sitting on a wall (held fixed), or None."""
        comp = self.comps[c]
        mask = None
        for a, s in enumerate(comp.stagger):
            if s == FACE and not self.periodic[a]:
                if mask is None:
                    mask = np.zeros(self.comp_shape(c), dtype=bool)
                idx = [slice(None)] * self.dim
                idx[a] = 0
                mask[tuple(idx)] = True
                idx[a] = -1
                mask[tuple(idx)] = True
        return mask

    def interior_weight(self, c: int) -> np.ndarray:
        """1 on evolving samples, 0 on wall samples."""
        mask = self.wall_mask(c)
        w = np.ones(self.comp_shape(c))
        if mask is not None:
            w[mask] = 0.0
        return w

    # ------------------------------------------------------------------
    # differences along one axis
    # ------------------------------------------------------------------
    def diff(self, arr: np.ndarray, axis: int, src_stag: int) -> np.ndarray:
        """Difference quotient of ``arr`` along ``axis`` onto the dual staggering."""
        h = self.grid.spacing[axis]
        if self.periodic[axis]:
            if src_stag == CENTER:
                return (arr - np.roll(arr, 1, axis=axis)) / h
            return (np.roll(arr, -1, axis=axis) - arr) / h
        if src_stag == CENTER:
            pad = [(0, 0)] * arr.ndim
            pad[axis] = (1, 1)
            out = np.pad(np.diff(arr, axis=axis) / h, pad)
            return out
        return np.diff(arr, axis=axis) / h

    def diff_T(self, lam: np.ndarray, axis: int, src_stag: int) -> np.ndarray:
        """Transpose of :meth:`diff` (maps dual-staggered adjoints back)."""
        h = self.grid.spacing[axis]
        if self.periodic[axis]:
            if src_stag == CENTER:
                return (lam - np.roll(lam, -1, axis=axis)) / h
            return (np.roll(lam, 1, axis=axis) - lam) / h
        if src_stag == CENTER:
            inner = _slice(lam, axis, 1, -1)
            pad_lo = [(0, 0)] * lam.ndim
            pad_lo[axis] = (1, 0)
            pad_hi = [(0, 0)] * lam.ndim
            pad_hi[axis] = (0, 1)
            return (np.pad(inner, pad_lo) - np.pad(inner, pad_hi)) / h
        pad_lo = [(0, 0)] * lam.ndim
        pad_lo[axis] = (1, 0)
        pad_hi = [(0, 0)] * lam.ndim
        pad_hi[axis] = (0, 1)
        return (np.pad(lam, pad_lo) - np.pad(lam, pad_hi)) / h

    def flux_derivatives(self, q, c: int) -> list:
        """Per-axis terms ``sum_k A_a[c, k] d_a q_k`` at the samples of ``c``."""
        out = []
        for a in range(self.dim):
            term = 0.0
            for k, coef in self.couplings[c][a]:
                term = term + coef * self.diff(q[k], a, self.comps[k].stagger[a])
            out.append(term)
        return out

    def flux_derivatives_T(self, lam_D, c: int, lam_q) -> None:
        """Accumulate the transpose of :meth:`flux_derivatives` into ``lam_q``."""
        for a in range(self.dim):
            if isinstance(lam_D[a], float):
                continue
            for k, coef in self.couplings[c][a]:
                lam_q[k] += coef * self.diff_T(lam_D[a], a, self.comps[k].stagger[a])

    # ------------------------------------------------------------------
    # sampling cell data at staggered locations
    # ------------------------------------------------------------------
    def cell_to_samples(self, cell: np.ndarray, stagger, reduce=np.maximum) -> np.ndarray:
        """Combine the cells adjacent to each sample with ``reduce``.

        Wall faces only see their one interior cell.
        """
        out = np.asarray(cell)
        for a, s in enumerate(stagger):
            if s != FACE:
                continue
            if self.periodic[a]:
                out = reduce(out, np.roll(out, 1, axis=a))
            else:
                first = _slice(out, a, 0, 1)
                last = _slice(out, a, -1, None)
                lo = np.concatenate([first, out], axis=a)
                hi = np.concatenate([out, last], axis=a)
                out = reduce(lo, hi)
        return out


def _slice(arr, axis, start, stop):
    idx = [slice(None)] * arr.ndim
    idx[axis] = slice(start, stop)
    return arr[tuple(idx)]
