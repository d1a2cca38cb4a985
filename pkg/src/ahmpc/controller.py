"""Adaptive-horizon MPC.

Each step solves the horizon-N problem at the current state, extends the
predicted trajectory M more steps under the terminal feedback, and checks
feasibility and Lyapunov-decrease conditions along the extension.  A pass
means the predicted endpoint is presumed inside the (never computed) region
where the terminal pair stabilizes: the first control is applied and the
horizon shrinks by one.  A failure grows the horizon by L and re-solves at
the same state, up to a retry cap; after the last failed retry the most
recent first control is applied anyway and the grown horizon is carried to
the next step.  At N = 0 the terminal feedback is applied directly, with the
same check deciding when optimization must be re-entered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ocp import OCPProblem, OCPSolution, Dynamics, Lagrangian, TerminalCost, solve

CONDITION_IDS = ("cf", "sf", "scf", "L1", "L2")


def default_alpha(s: float) -> float:
    """Class-K comparison function used by the experiments."""
    return s * s / 10.0


@dataclass(frozen=True)
class TerminalPair:
    """Terminal cost/feedback pair; cost is nonnegative by construction
    (quadratic LQR cost or a sum-of-squares completion).  ``K`` is the linear
    part of the feedback, used to stabilize warm-start rollouts."""
    v: Callable
    v_grad: Callable
    kappa: Callable
    degree: int
    K: np.ndarray | None = None

    def terminal_cost(self) -> TerminalCost:
        return TerminalCost(value=self.v, grad=self.v_grad)


@dataclass(frozen=True)
class ControllerConfig:
    N_init: int = 50
    M: int = 5
    L: int = 5
    retry_cap: int = 3
    decrement: int = 1
    alpha: Callable = default_alpha
    u_max: float = 5.0
    N_min: int = 0

    def __post_init__(self):
        if min(self.N_init, self.M, self.L, self.retry_cap, self.decrement) < 1:
            raise ValueError("design constants must be positive")
        if self.N_min < 0:
            raise ValueError("N_min must be nonnegative")
        grid = [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0]
        values = [self.alpha(s) for s in grid]
        if values[0] != 0.0 or any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("alpha must vanish at 0 and be strictly increasing")


@dataclass(frozen=True)
class Violation:
    kind: str  # one of CONDITION_IDS
    k: int     # absolute trajectory index where the condition first failed


@dataclass
class StepReport:
    u: np.ndarray
    horizon: int              # horizon whose solution produced u (0 = terminal feedback)
    resolves: int             # solves beyond the first within this step
    outcome: str              # "pass" or the violated condition id
    violation_k: int | None
    vf_trace: list[float]     # V_f along the checked extension
    solver_status: str        # "" when no solve happened
    alpha_margin_failures: int  # extension points with alpha(|x|) >= l(x, kappa(x))/2


@dataclass
class ControllerState:
    """Single-owner mutable controller memory (horizon, warm start, events).
    ``warm`` holds the previous solution (controls, predicted states); it is
    shifted by one step when the next solve is seeded."""
    config: ControllerConfig
    N: int
    warm: tuple[np.ndarray, np.ndarray] | None = None
    events: list = field(default_factory=list)

    @classmethod
    def fresh(cls, config: ControllerConfig) -> "ControllerState":
        return cls(config=config, N=config.N_init)


def extend_trajectory(x_N, kappa_f, M: int, f) -> np.ndarray:
    """Closed-loop rollout x(k+1) = f(x(k), kappa_f(x(k))) for M steps;
    returns the M+1 states starting at x_N.  Propagation stops early on
    non-finite states (the condition check then fails there)."""
    x = np.asarray(x_N, dtype=float)
    out = [x]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(M):
            if not np.all(np.isfinite(x)):
                break
            x = np.asarray(f(x, kappa_f(x)), dtype=float)
            out.append(x)
    return np.array(out)


def check_conditions(extension, kappa_f, v_f, alpha, u_max,
                     state_predicate=None, mixed_predicate=None,
                     k0: int = 0) -> Violation | None:
    """First violated condition along the extension, or None.

    For each k: control box (cf), state membership of the successor (sf),
    mixed membership (scf), V_f(x) >= alpha(|x|) (L1) and the decrease
    V_f(x_k) - V_f(x_{k+1}) >= alpha(|x_k|) (L2).  Comparisons involving
    non-finite values fail, so blow-ups are rejected naturally.
    """
    M = len(extension) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(M):
            k = k0 + i
            x = extension[i]
            x_next = extension[i + 1]
            u = np.asarray(kappa_f(x))
            if not (np.all(np.isfinite(u)) and np.max(np.abs(u)) <= u_max):
                return Violation("cf", k)
            if not np.all(np.isfinite(x_next)) or \
                    (state_predicate is not None and not state_predicate(x_next)):
                return Violation("sf", k)
            if mixed_predicate is not None and not mixed_predicate(x, u):
                return Violation("scf", k)
            a = alpha(float(np.linalg.norm(x)))
            vk = v_f(x)
            if not vk >= a:
                return Violation("L1", k)
            if not vk - v_f(x_next) >= a:
                return Violation("L2", k)
    return None


def _fit_warm(x, warm, N: int, kappa_f, f, u_max: float, K=None) -> np.ndarray:
    """Assemble a horizon-N warm start from the previous solution.

    The previous controls are shifted by one step and re-rolled from the new
    state; when the linear feedback gain ``K`` is available, each control is
    corrected by K times the deviation from the previously predicted state,
    which keeps the rollout in the previous solution's basin (a plainly
    shifted open-loop sequence diverges over long horizons on an unstable
    plant).  Missing steps at the end come from the terminal feedback.
    Everything is clipped into the box.
    """
    m = np.atleast_1d(np.asarray(kappa_f(np.asarray(x, dtype=float)))).size
    u: list[np.ndarray] = []
    xk = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if warm is not None:
            prev_u, prev_x = warm
            for k in range(1, len(prev_u)):
                if len(u) == N:
                    break
                uk = np.atleast_1d(np.asarray(prev_u[k], dtype=float))
                if K is not None and prev_x is not None:
                    uk = uk + K @ (xk - prev_x[k])
                uk = np.clip(np.nan_to_num(uk), -u_max, u_max)
                u.append(uk)
                xk = np.asarray(f(xk, uk), dtype=float)
                if not np.all(np.isfinite(xk)):
                    u.extend([np.zeros(m)] * (N - len(u)))
                    return np.array(u[:N])
        while len(u) < N:
            uk = np.clip(np.nan_to_num(np.atleast_1d(np.asarray(kappa_f(xk), dtype=float))),
                         -u_max, u_max)
            u.append(uk)
            xk = np.asarray(f(xk, uk), dtype=float)
            if not np.all(np.isfinite(xk)):
                u.extend([np.zeros(m)] * (N - len(u)))
                break
    return np.array(u[:N])


def controller_step(x, state: ControllerState, solve_fn, pair: TerminalPair, f,
                    state_predicate=None, mixed_predicate=None,
                    lagrangian: Lagrangian | None = None):
    """One decision of the adaptive-horizon controller.

    ``solve_fn(x0, N, u_init) -> OCPSolution`` is injected so protocol tests
    can run against stubs.  Returns (applied control, state, StepReport);
    ``state`` is updated in place (single owner).
    """
    cfg = state.config
    x = np.asarray(x, dtype=float)

    def run_check(x_start, k0):
        ext = extend_trajectory(x_start, pair.kappa, cfg.M, f)
        violation = check_conditions(ext, pair.kappa, pair.v, cfg.alpha, cfg.u_max,
                                     state_predicate, mixed_predicate, k0=k0)
        with np.errstate(over="ignore", invalid="ignore"):
            vf_trace = [float(pair.v(xi)) for xi in ext]
            margin_failures = 0
            if lagrangian is not None:
                for xi in ext[:-1]:
                    ui = np.asarray(pair.kappa(xi))
                    if not cfg.alpha(float(np.linalg.norm(xi))) < abs(lagrangian.value(xi, ui)) / 2.0:
                        margin_failures += 1
        return violation, vf_trace, margin_failures

    if state.N == 0 and cfg.N_min == 0:
        violation, vf_trace, warn = run_check(x, 0)
        if violation is None:
            u = np.clip(np.asarray(pair.kappa(x), dtype=float), -cfg.u_max, cfg.u_max)
            return u, state, StepReport(u=u, horizon=0, resolves=0, outcome="pass",
                                        violation_k=None, vf_trace=vf_trace,
                                        solver_status="", alpha_margin_failures=warn)
        # noise has pushed the state out of the certified region: re-enter
        state.events.append(f"reenter N=0->{cfg.L} ({violation.kind}@{violation.k})")
        state.N = cfg.L
        state.warm = None

    N = state.N
    u_init = _fit_warm(x, state.warm, N, pair.kappa, f, cfg.u_max, K=pair.K)
    resolves = 0
    while True:
        # a solver exception counts as a failed condition check: grow the
        # horizon and retry, exactly like a failed extension
        try:
            sol = solve_fn(x, N, u_init)
        except Exception as exc:  # noqa: BLE001 - any solver breakdown
            sol = None
            violation, vf_trace, warn = Violation("sf", N), [], 0
            state.events.append(f"solver failure at N={N}: {exc}")
        else:
            violation, vf_trace, warn = run_check(sol.x_seq[-1], N)
        if violation is None or resolves >= cfg.retry_cap:
            break
        resolves += 1
        state.events.append(f"grow N={N}->{N + cfg.L} ({violation.kind}@{violation.k})")
        if sol is not None:
            u_init = np.vstack([sol.u_seq,
                                _fit_warm(sol.x_seq[-1], None, cfg.L, pair.kappa, f, cfg.u_max)])
        else:
            u_init = _fit_warm(x, None, N + cfg.L, pair.kappa, f, cfg.u_max)
        N += cfg.L

    if sol is not None:
        u = sol.u_seq[0].copy()
        solver_status = sol.status
        state.warm = (sol.u_seq, sol.x_seq)
    else:
        u = np.clip(np.asarray(pair.kappa(x), dtype=float), -cfg.u_max, cfg.u_max)
        solver_status = "solver-error"
        state.warm = None
    if violation is None:
        next_N = max(N - cfg.decrement, cfg.N_min)
        outcome, vk = "pass", None
        state.events.append(f"pass N={N}->{next_N}")
    else:
        next_N = N + cfg.L
        outcome, vk = violation.kind, violation.k
        state.events.append(f"commit N={N}->{next_N} ({violation.kind}@{violation.k})")
    state.N = next_N
    return u, state, StepReport(u=u, horizon=N, resolves=resolves, outcome=outcome,
                                violation_k=vk, vf_trace=vf_trace,
                                solver_status=solver_status, alpha_margin_failures=warn)


@dataclass
class SimulationLog:
    states: np.ndarray     # (steps, n) state at the start of each step
    controls: np.ndarray   # (steps, m)
    horizons: np.ndarray   # (steps,) horizon used for the applied control
    reports: list
    events: list

    def max_horizon(self) -> int:
        return int(self.horizons.max()) if len(self.horizons) else 0

    def kappa_only_steps(self) -> int:
        return int(np.sum(self.horizons == 0))

    def stabilized_step(self, band: float = 0.1) -> int | None:
        """First step after which the angle sup-norm stays below ``band``."""
        ang = np.max(np.abs(self.states[:, :2]), axis=1)
        bad = np.nonzero(ang >= band)[0]
        t = 0 if len(bad) == 0 else int(bad[-1]) + 1
        return t if t < len(self.states) else None


def run_simulation(config: ControllerConfig, dynamics: Dynamics,
                   lagrangian: Lagrangian, pair: TerminalPair, x0,
                   steps: int, noise=None, solver_options: dict | None = None,
                   state_predicate=None, mixed_predicate=None) -> SimulationLog:
    """Closed-loop run of the adaptive-horizon controller.

    ``noise`` is either None or a callable(x, rng) applied after each
    advancing step together with a seeded generator, as (callable, seed).
    Deterministic for a fixed seed.
    """
    opts = solver_options or {}
    u_max_vec = np.full(np.atleast_1d(pair.kappa(np.asarray(x0, float))).size,
                        config.u_max, dtype=float)

    def solve_fn(x, N, u_init):
        problem = OCPProblem(dynamics=dynamics, lagrangian=lagrangian,
                             terminal=pair.terminal_cost(), N=N, x0=x,
                             u_max=u_max_vec, **opts)
        return solve(problem, u_init)

    rng = None
    noise_fn = None
    if noise is not None:
        noise_fn, seed = noise
        rng = np.random.default_rng(seed)

    state = ControllerState.fresh(config)
    x = np.asarray(x0, dtype=float)
    states, controls, horizons, reports = [], [], [], []
    for _ in range(steps):
        states.append(x.copy())
        u, state, report = controller_step(
            x, state, solve_fn, pair, dynamics.f,
            state_predicate=state_predicate, mixed_predicate=mixed_predicate,
            lagrangian=lagrangian)
        controls.append(u)
        horizons.append(report.horizon)
        reports.append(report)
        x = np.asarray(dynamics.f(x, u), dtype=float)
        if noise_fn is not None:
            x = noise_fn(x, rng)
    return SimulationLog(states=np.array(states) if states else np.zeros((0, len(x))),
                         controls=np.array(controls) if controls else np.zeros((0, 0)),
                         horizons=np.array(horizons, dtype=int),
                         reports=reports, events=state.events)
