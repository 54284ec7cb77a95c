"""Bound-constrained limited-memory BFGS with projected backtracking.

The active set is read off the projected gradient, the two-loop recursion
acts on the free variables only, and trial points are projected onto the
box before the Armijo test.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

REASONS = ("converged", "max_iter", "line_search_failure", "failed")


class OptimizerError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class OptProblem:
    fun: Callable  # u -> (J, grad)
    x0: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    memory: int = 10
    pgtol: float | None = None
    max_iter: int = 200
    c1: float = 1e-4
    max_backtracks: int = 30

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("x0 outside the bounds")
        if self.pgtol is not None and not self.pgtol > 0:
            raise ValueError("pgtol must be > 0")

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    iterations: int
    reason: str
    pgtol: float
    history: list = field(default_factory=list)  # (x, J, |pg|_inf)
    evaluations: int = 0
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def projected_gradient(x, g, lower, upper):
    """``P(x - g) - x``; zero entries mark a KKT-satisfied bound."""
    return np.clip(x - g, lower, upper) - x


def _two_loop(g, S, Y, free):
    q = np.where(free, g, 0.0)
    alphas = []
    rhos = []
    for s, y in zip(reversed(S), reversed(Y)):
        s, y = s * free, y * free
        sy = s @ y
        if sy <= 0:
            alphas.append(0.0)
            rhos.append(0.0)
            continue
        rho = 1.0 / sy
        a = rho * (s @ q)
        q = q - a * y
        alphas.append(a)
        rhos.append(rho)
    gamma = 1.0
    if S:
        s, y = S[-1] * free, Y[-1] * free
        if y @ y > 0 and s @ y > 0:
            gamma = (s @ y) / (y @ y)
    r = gamma * q
    for (s, y), a, rho in zip(zip(S, Y), reversed(alphas), reversed(rhos)):
        if rho == 0.0:
            continue
        s, y = s * free, y * free
        b = rho * (y @ r)
        r = r + s * (a - b)
    return -r


def minimize(problem: OptProblem, callback=None) -> OptResult:
    p = problem
    x = p.project(p.x0)
    f, g = p.fun(x)
    g = np.asarray(g, dtype=float)
    nfev = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise OptimizerError("objective not finite at the initial point")
    pgtol = p.pgtol if p.pgtol is not None else 1e-9 * abs(f) if f != 0 else 1e-12
    pg = projected_gradient(x, g, p.lower, p.upper)
    pg_inf = float(np.max(np.abs(pg))) if pg.size else 0.0
    history = [(x.copy(), float(f), pg_inf)]
    if callback:
        callback(*history[-1])
    S, Y = [], []
    reason = "max_iter"
    it = 0
    while True:
        if pg_inf <= pgtol:
            reason = "converged"
            break
        if it >= p.max_iter:
            break
        at_lo = (x <= p.lower) & (g > 0)
        at_hi = (x >= p.upper) & (g < 0)
        free = ~(at_lo | at_hi)
        d = _two_loop(g, S, Y, free.astype(float))
        if not g @ d < 0:
            d = -np.where(free, g, 0.0)
            S, Y = [], []
        step = 1.0
        if not S:
            step = min(1.0, 1.0 / float(np.linalg.norm(d)))
        accepted = False
        for _ in range(p.max_backtracks + 1):
            xt = p.project(x + step * d)
            if np.array_equal(xt, x):
                break
            try:
                ft, gt = p.fun(xt)
                nfev += 1
                ok = np.isfinite(ft) and np.all(np.isfinite(gt))
            except (FloatingPointError, ArithmeticError, RuntimeError):
                ok = False
                nfev += 1
            if ok and ft <= f + p.c1 * (g @ (xt - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            reason = "line_search_failure"
            break
        gt = np.asarray(gt, dtype=float)
        s, y = xt - x, gt - g
        if s @ y > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > p.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g = xt, float(ft), gt
        it += 1
        pg = projected_gradient(x, g, p.lower, p.upper)
        pg_inf = float(np.max(np.abs(pg)))
        history.append((x.copy(), f, pg_inf))
        if callback:
            callback(*history[-1])
    return OptResult(x, float(f), it, reason, float(pgtol), history, nfev)


def multistart(problem: OptProblem, sampler, count: int, seed: int = 0, threads: int = 1) -> list:
    """Index 0 starts from ``problem.x0``; the others from ``sampler(rng)``.

    Starts are drawn up front in index order, so results depend on ``seed``
    only and never on the thread count.
    """
    from dataclasses import replace

    rng = np.random.default_rng(seed)
    starts = [problem.x0.copy()]
    for _ in range(1, count):
        starts.append(problem.project(np.asarray(sampler(rng), dtype=float)))

    def run(x0):
        try:
            return minimize(replace(problem, x0=x0))
        except Exception as exc:  # one failing start must not sink the others
            return OptResult(x0, float("nan"), 0, "failed", float("nan"), [], 0, repr(exc))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, starts))
    return [run(x0) for x0 in starts]
