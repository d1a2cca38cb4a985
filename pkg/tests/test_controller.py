import numpy as np
import pytest

from ahmpc import controller, ocp
from ahmpc.controller import (
    ControllerConfig,
    ControllerState,
    TerminalPair,
    Violation,
    check_conditions,
    controller_step,
    default_alpha,
    extend_trajectory,
    run_simulation,
)


def quadratic_pair(P=None, K=None, n=1):
    P = np.eye(n) if P is None else P
    K = -0.5 * np.eye(n) if K is None else K
    return TerminalPair(v=lambda x: 0.5 * x @ P @ x, v_grad=lambda x: P @ x,
                        kappa=lambda x: K @ x, degree=1, K=K)


class TestExtendTrajectory:
    def test_origin_stays(self):
        pair = quadratic_pair()
        ext = extend_trajectory(np.zeros(1), pair.kappa, 4, lambda x, u: 0.5 * x)
        np.testing.assert_array_equal(ext, np.zeros((5, 1)))

    def test_scalar_halving(self):
        ext = extend_trajectory(np.array([1.0]), lambda x: np.zeros(1), 3,
                                lambda x, u: 0.5 * x)
        np.testing.assert_allclose(ext.ravel(), [1.0, 0.5, 0.25, 0.125])

    def test_stops_on_nonfinite(self):
        ext = extend_trajectory(np.array([1.0]), lambda x: np.zeros(1), 5,
                                lambda x, u: x * np.inf)
        assert len(ext) <= 6


class TestCheckConditions:
    def setup_method(self):
        self.pair = quadratic_pair()
        self.alpha = default_alpha

    def test_all_zero_extension_passes(self):
        ext = np.zeros((6, 1))
        assert check_conditions(ext, self.pair.kappa, self.pair.v, self.alpha, 5.0) is None

    def test_vf_increase_flags_L2_at_first_index(self):
        ext = np.array([[0.1], [0.2], [0.05], [0.02], [0.01], [0.005]])
        v = check_conditions(ext, lambda x: np.zeros(1), self.pair.v, self.alpha, 5.0, k0=50)
        assert v == Violation("L2", 50)

    def test_control_box_violation(self):
        ext = np.ones((6, 1))
        v = check_conditions(ext, lambda x: np.array([5.1]), self.pair.v, self.alpha,
                             5.0, k0=7)
        assert v == Violation("cf", 7)

    def test_L1_violation(self):
        # V_f tiny relative to alpha
        ext = np.full((6, 1), 2.0)
        v = check_conditions(ext, lambda x: np.zeros(1), lambda x: 1e-6, self.alpha, 5.0)
        assert v == Violation("L1", 0)

    def test_state_predicate(self):
        ext = np.array([[0.5], [0.4], [0.3], [0.2], [0.1], [0.05]])
        v = check_conditions(ext, lambda x: np.zeros(1), self.pair.v, lambda s: 0.0,
                             5.0, state_predicate=lambda x: bool(x[0] > 0.35), k0=3)
        assert v == Violation("sf", 4)  # successor 0.3 fails at the second index

    def test_mixed_predicate(self):
        ext = np.full((6, 1), 0.1)
        v = check_conditions(ext, lambda x: np.zeros(1), self.pair.v, lambda s: 0.0,
                             5.0, mixed_predicate=lambda x, u: False)
        assert v == Violation("scf", 0)

    def test_nonfinite_extension_rejected(self):
        ext = np.array([[0.1], [np.nan], [0.1], [0.1], [0.1], [0.1]])
        v = check_conditions(ext, lambda x: np.zeros(1), self.pair.v, lambda s: 0.0, 5.0)
        assert v is not None and v.k == 0


def make_stub_solver(responses=None):
    """Fake solver: returns zero controls, states decaying from x0; records
    every (N, x0) it is asked to solve."""
    calls = []

    def solve_fn(x, N, u_init):
        calls.append((int(N), np.asarray(x, dtype=float).copy()))
        m = 1
        u = np.zeros((N, m))
        xs = np.array([x * 0.5**k for k in range(N + 1)])
        return ocp.OCPSolution(u_seq=u, x_seq=xs, cost=float(x @ x), status="converged",
                               iterations=1, grad_norm=0.0)

    return solve_fn, calls


class TestControllerStepBookkeeping:
    """Protocol invariants exercised against stubs, no real solver."""

    def setup_method(self):
        self.cfg = ControllerConfig(N_init=50)
        self.f = lambda x, u: 0.5 * x

    def test_pass_decrements_by_one(self):
        pair = quadratic_pair()
        solve_fn, calls = make_stub_solver()
        state = ControllerState.fresh(self.cfg)
        u, state, rep = controller_step(np.array([0.01]), state, solve_fn, pair, self.f)
        assert rep.outcome == "pass"
        assert rep.horizon == 50
        assert rep.resolves == 0
        assert state.N == 49
        assert [c[0] for c in calls] == [50]

    def test_three_failures_grow_by_L_then_commit(self):
        # always-failing conditions: kappa output outside the box
        pair = TerminalPair(v=lambda x: float(x @ x), v_grad=lambda x: 2 * x,
                            kappa=lambda x: np.array([99.0]), degree=1)
        solve_fn, calls = make_stub_solver()
        state = ControllerState.fresh(self.cfg)
        u, state, rep = controller_step(np.array([1.0]), state, solve_fn, pair, self.f)
        # solves at 50, 55, 60, 65: applied control from the 65 solve,
        # next step starts at 70
        assert [c[0] for c in calls] == [50, 55, 60, 65]
        assert rep.horizon == 65
        assert rep.resolves == 3
        assert rep.outcome == "cf"
        assert state.N == 70

    def test_horizon_never_below_floor(self):
        cfg = ControllerConfig(N_init=2, N_min=2)
        pair = quadratic_pair()
        solve_fn, _ = make_stub_solver()
        state = ControllerState.fresh(cfg)
        for _ in range(4):
            _, state, rep = controller_step(np.array([0.01]), state, solve_fn, pair, self.f)
            assert rep.outcome == "pass"
            assert state.N == 2

    def test_zero_state_zero_horizon_applies_zero_control(self):
        pair = quadratic_pair()
        state = ControllerState(config=self.cfg, N=0)

        def no_solver(x, N, u_init):
            raise AssertionError("terminal-feedback mode must not solve")

        u, state, rep = controller_step(np.zeros(1), state, no_solver, pair, self.f)
        assert u[0] == 0.0
        assert rep.horizon == 0
        assert rep.outcome == "pass"
        assert state.N == 0

    def test_reentry_from_zero_solves_at_L(self):
        # state far from origin: the kappa-mode check fails (cf), so the
        # controller re-enters optimization at N = L
        pair = TerminalPair(v=lambda x: float(x @ x), v_grad=lambda x: 2 * x,
                            kappa=lambda x: 10.0 * x, degree=1)
        solve_fn, calls = make_stub_solver()
        state = ControllerState(config=self.cfg, N=0)
        u, state, rep = controller_step(np.array([2.0]), state, solve_fn, pair, self.f)
        assert calls[0][0] == self.cfg.L
        assert rep.horizon >= self.cfg.L

    def test_horizon_growth_is_multiples_of_L(self):
        pair = TerminalPair(v=lambda x: float(x @ x), v_grad=lambda x: 2 * x,
                            kappa=lambda x: np.array([99.0]), degree=1)
        solve_fn, calls = make_stub_solver()
        state = ControllerState.fresh(self.cfg)
        controller_step(np.array([1.0]), state, solve_fn, pair, self.f)
        horizons = [c[0] for c in calls]
        assert all((b - a) == self.cfg.L for a, b in zip(horizons, horizons[1:]))
        assert len(horizons) == 1 + self.cfg.retry_cap

    def test_alpha_margin_diagnostic_is_counted(self):
        # alpha(|x|) = x^2/10 vs l/2 = (|x|^2 + |u|^2)/4 with u = 0: the
        # margin guidance fails at every extension point, and the report
        # says so without rejecting the step
        pair = quadratic_pair(P=10 * np.eye(1), K=np.zeros((1, 1)))
        lag = ocp.quadratic_lagrangian(np.eye(1) * 0.2, np.eye(1))
        solve_fn, _ = make_stub_solver()
        state = ControllerState.fresh(self.cfg)
        _, _, rep = controller_step(np.array([0.5]), state, solve_fn, pair, self.f,
                                    lagrangian=lag)
        assert rep.outcome == "pass"
        assert rep.alpha_margin_failures == self.cfg.M


class TestRunSimulation:
    def test_origin_start_is_absorbing(self):
        pair = quadratic_pair(n=2)
        dyn = ocp.linear_dynamics(0.5 * np.eye(2), np.eye(2))
        lag = ocp.quadratic_lagrangian(np.eye(2), np.eye(2))
        cfg = ControllerConfig(N_init=5, u_max=5.0)
        log = run_simulation(cfg, dyn, lag, pair, np.zeros(2), steps=12)
        np.testing.assert_allclose(log.states, 0.0, atol=1e-12)
        np.testing.assert_allclose(log.controls, 0.0, atol=1e-9)
        # horizon decays one per step down to zero, then stays
        want = [max(5 - t, 0) for t in range(12)]
        np.testing.assert_array_equal(log.horizons, want)
        assert log.kappa_only_steps() == 12 - 5

    def test_deterministic_given_seed(self):
        pair = quadratic_pair(n=2)
        dyn = ocp.linear_dynamics(np.eye(2) * 0.9, np.eye(2))
        lag = ocp.quadratic_lagrangian(np.eye(2), np.eye(2))
        cfg = ControllerConfig(N_init=3)
        noise = (lambda x, rng: x + rng.normal(0, 0.01, x.shape), 42)
        log1 = run_simulation(cfg, dyn, lag, pair, np.array([0.1, 0.0]), 8, noise=noise)
        log2 = run_simulation(cfg, dyn, lag, pair, np.array([0.1, 0.0]), 8, noise=noise)
        np.testing.assert_array_equal(log1.states, log2.states)
        np.testing.assert_array_equal(log1.controls, log2.controls)
        np.testing.assert_array_equal(log1.horizons, log2.horizons)

    def test_stabilized_step_metric(self):
        pair = quadratic_pair(n=2)
        log = controller.SimulationLog(
            states=np.array([[1.0, 0], [0.5, 0], [0.05, 0], [0.01, 0]]),
            controls=np.zeros((4, 1)), horizons=np.array([2, 1, 0, 0]),
            reports=[], events=[])
        assert log.stabilized_step(band=0.1) == 2
        assert log.max_horizon() == 2
        assert log.kappa_only_steps() == 2
