"""Finite-horizon optimal control by single shooting.

The decision variable is the control sequence; states come from rolling the
dynamics forward and the exact cost gradient from one adjoint sweep.  Box
constraints on the controls are enforced by projection inside a
limited-memory quasi-Newton loop with Armijo backtracking.  State and mixed
predicates are monitored by the caller, not enforced here.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Dynamics:
    """Discrete dynamics with exact first derivatives."""
    f: Callable
    jacobians: Callable  # (x, u) -> (df/dx, df/du)


@dataclass(frozen=True)
class Lagrangian:
    value: Callable
    grad: Callable  # (x, u) -> (dl/dx, dl/du)


@dataclass(frozen=True)
class TerminalCost:
    value: Callable
    grad: Callable  # x -> dVf/dx


def quadratic_lagrangian(Q: np.ndarray, R: np.ndarray) -> Lagrangian:
    """l(x, u) = (x'Qx + u'Ru)/2."""
    return Lagrangian(
        value=lambda x, u: 0.5 * (x @ Q @ x + u @ R @ u),
        grad=lambda x, u: (Q @ x, R @ u),
    )


def quadratic_terminal(Pf: np.ndarray) -> TerminalCost:
    """Vf(x) = x'Pf x / 2."""
    return TerminalCost(value=lambda x: 0.5 * x @ Pf @ x, grad=lambda x: Pf @ x)


def linear_dynamics(F: np.ndarray, G: np.ndarray) -> Dynamics:
    return Dynamics(f=lambda x, u: F @ x + G @ u, jacobians=lambda x, u: (F, G))


class RolloutError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass
class OCPProblem:
    dynamics: Dynamics
    lagrangian: Lagrangian
    terminal: TerminalCost
    N: int
    x0: np.ndarray
    u_max: np.ndarray  # per-channel bound, box is [-u_max, u_max]
    state_predicate: Callable | None = None
    mixed_predicate: Callable | None = None
    grad_tol: float = 1e-6
    max_iter: int = 400
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    memory: int = 10

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.u_max = np.asarray(self.u_max, dtype=float)
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if np.any(self.u_max <= 0):
            raise ValueError("control bounds must be positive")

    def project(self, u_seq: np.ndarray) -> np.ndarray:
        return np.clip(u_seq, -self.u_max, self.u_max)


@dataclass
class OCPSolution:
    u_seq: np.ndarray
    x_seq: np.ndarray
    cost: float
    status: str  # converged | iteration-cap | line-search-failure
    iterations: int
    grad_norm: float


def rollout(problem: OCPProblem, u_seq: np.ndarray) -> tuple[np.ndarray, float]:
    """Forward pass; raises RolloutError at the first non-finite state.
    Overflow on the way to the non-finite check is expected and silenced."""
    f = problem.dynamics.f
    lag = problem.lagrangian.value
    x = problem.x0
    xs = np.empty((problem.N + 1, x.size))
    xs[0] = x
    cost = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(problem.N):
            u = u_seq[k]
            cost += lag(x, u)
            x = f(x, u)
            if not np.all(np.isfinite(x)):
                raise RolloutError(k + 1)
            xs[k + 1] = x
        cost += problem.terminal.value(x)
    if not np.isfinite(cost):
        raise RolloutError(problem.N)
    return xs, float(cost)


def cost_gradient(problem: OCPProblem, u_seq: np.ndarray,
                  x_seq: np.ndarray | None = None) -> np.ndarray:
    """Exact gradient of the shooting objective by one backward sweep."""
    if x_seq is None:
        x_seq, _ = rollout(problem, u_seq)
    jac = problem.dynamics.jacobians
    lgrad = problem.lagrangian.grad
    lam = problem.terminal.grad(x_seq[problem.N])
    g = np.empty_like(u_seq)
    for k in range(problem.N - 1, -1, -1):
        x, u = x_seq[k], u_seq[k]
        fx, fu = jac(x, u)
        lx, lu = lgrad(x, u)
        g[k] = lu + fu.T @ lam
        lam = lx + fx.T @ lam
    return g


def _two_loop(g_flat: np.ndarray, hist: deque) -> np.ndarray:
    """Standard L-BFGS two-loop recursion; falls back to -g on empty history."""
    q = g_flat.copy()
    alphas = []
    for s, y, rho in reversed(hist):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if hist:
        s, y, _ = hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(hist, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def solve(problem: OCPProblem, u_init: np.ndarray) -> OCPSolution:
    """Projected limited-memory quasi-Newton descent from ``u_init``.

    Returns a box-feasible local minimizer candidate; the cost never exceeds
    the (projected) warm start's.
    """
    shape = (problem.N, problem.u_max.size)
    u = problem.project(np.asarray(u_init, dtype=float).reshape(shape))
    xs, cost = rollout(problem, u)
    g = cost_gradient(problem, u, xs)
    tol = problem.grad_tol
    hist: deque = deque(maxlen=problem.memory)
    status = "iteration-cap"
    it = 0
    pg_norm = np.inf
    for it in range(1, problem.max_iter + 1):
        pg = u - problem.project(u - g)
        pg_norm = float(np.max(np.abs(pg)))
        if pg_norm <= tol * (1.0 + abs(cost)):
            status = "converged"
            break

        accepted = False
        for direction in (_two_loop(g.ravel(), hist).reshape(shape), -g):
            alpha = 1.0
            for _ in range(40):
                u_new = problem.project(u + alpha * direction)
                step = u_new - u
                slope = float(np.sum(g * step))
                if slope < 0.0:
                    try:
                        xs_new, cost_new = rollout(problem, u_new)
                    except RolloutError:
                        alpha *= problem.backtrack
                        continue
                    if cost_new <= cost + problem.armijo_c * slope:
                        accepted = True
                        break
                alpha *= problem.backtrack
            if accepted:
                break
            hist.clear()  # quasi-Newton direction failed; retry with steepest descent
        if not accepted:
            status = "line-search-failure"
            break

        g_new = cost_gradient(problem, u_new, xs_new)
        s = (u_new - u).ravel()
        y = (g_new - g).ravel()
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            hist.append((s, y, 1.0 / sy))
        u, xs, cost, g = u_new, xs_new, cost_new, g_new

    xs, cost = rollout(problem, u)  # recompute so returned fields agree exactly
    return OCPSolution(u_seq=u, x_seq=xs, cost=cost, status=status,
                       iterations=it, grad_norm=pg_norm)
