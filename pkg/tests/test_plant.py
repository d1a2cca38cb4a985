import dataclasses

import numpy as np
import pytest

from ahmpc import plant
from ahmpc.plant import PendulumParams


PARAMS = PendulumParams()


class TestEquilibria:
    def test_upright(self):
        xdot = plant.continuous_dynamics(np.zeros(4), np.zeros(2), PARAMS)
        np.testing.assert_allclose(xdot, 0.0, atol=1e-14)

    def test_hanging(self):
        x = np.array([np.pi, np.pi, 0.0, 0.0])
        xdot = plant.continuous_dynamics(x, np.zeros(2), PARAMS)
        np.testing.assert_allclose(xdot, 0.0, atol=1e-12)

    def test_discrete_fixed_point(self):
        np.testing.assert_allclose(plant.discrete_dynamics(np.zeros(4), np.zeros(2), PARAMS),
                                   0.0, atol=1e-14)

    def test_angles_frozen_at_zero_rates(self):
        x = np.array([0.4, -0.7, 0.0, 0.0])
        x_next = plant.discrete_dynamics(x, np.array([1.0, -2.0]), PARAMS)
        np.testing.assert_allclose(x_next[:2], x[:2], atol=0.0)


class TestSymmetryAndEnergy:
    def test_odd_vector_field(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.uniform(-2, 2, 4)
            u = rng.uniform(-4, 4, 2)
            left = plant.discrete_dynamics(-x, -u, PARAMS)
            right = -plant.discrete_dynamics(x, u, PARAMS)
            np.testing.assert_allclose(left, right, atol=1e-12)

    def test_energy_conserved_without_damping(self):
        p = dataclasses.replace(PARAMS, c1=1e-12, c2=1e-12)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.uniform(-2, 2, 4)
            xdot = plant.continuous_dynamics(x, np.zeros(2), p)
            eps = 1e-7
            dE = (plant.energy(x + eps * xdot, p) - plant.energy(x - eps * xdot, p)) / (2 * eps)
            assert abs(dE) <= 1e-8 * max(1.0, plant.energy(x, p))

    @pytest.mark.parametrize("relative", [False, True])
    def test_damping_dissipates(self, relative):
        p = dataclasses.replace(PARAMS, relative_damping=relative)
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.uniform(-2, 2, 4)
            xdot = plant.continuous_dynamics(x, np.zeros(2), p)
            eps = 1e-7
            dE = (plant.energy(x + eps * xdot, p) - plant.energy(x - eps * xdot, p)) / (2 * eps)
            om1, om2 = x[2], x[3]
            if relative:
                want = -p.c1 * om1**2 - p.c2 * (om2 - om1) ** 2
            else:
                want = -p.c1 * om1**2 - p.c2 * om2**2
            assert dE == pytest.approx(want, rel=1e-6, abs=1e-8)
            assert dE <= 1e-12


class TestJacobians:
    @pytest.mark.parametrize("relative", [False, True])
    def test_match_finite_differences(self, relative):
        p = dataclasses.replace(PARAMS, relative_damping=relative)
        rng = np.random.default_rng(3)
        for _ in range(8):
            x = rng.uniform(-1.5, 1.5, 4)
            u = rng.uniform(-4, 4, 2)
            A, B = plant.discrete_jacobians(x, u, p)
            eps = 1e-6
            Afd = np.zeros((4, 4))
            Bfd = np.zeros((4, 2))
            for i in range(4):
                d = np.zeros(4)
                d[i] = eps
                Afd[:, i] = (plant.discrete_dynamics(x + d, u, p)
                             - plant.discrete_dynamics(x - d, u, p)) / (2 * eps)
            for i in range(2):
                d = np.zeros(2)
                d[i] = eps
                Bfd[:, i] = (plant.discrete_dynamics(x, u + d, p)
                             - plant.discrete_dynamics(x, u - d, p)) / (2 * eps)
            scale = max(1.0, np.max(np.abs(Afd)))
            assert np.max(np.abs(A - Afd)) / scale < 1e-5
            assert np.max(np.abs(B - Bfd)) / max(1.0, np.max(np.abs(Bfd))) < 1e-5

    def test_upright_linearization_is_unstable(self):
        F, _ = plant.linearization(PARAMS)
        assert max(abs(np.linalg.eigvals(F))) > 1.0


class TestTaylor:
    def test_degree1_equals_linearization(self):
        tm = plant.taylor_dynamics(1, PARAMS)
        F, G = plant.linearization(PARAMS)
        FG = np.array([r.coeffs_of_degree(1) for r in tm.rows])
        np.testing.assert_allclose(FG[:, :4], F, atol=1e-10)
        np.testing.assert_allclose(FG[:, 4:], G, atol=1e-10)

    def test_degree5_remainder_small(self):
        tm = plant.taylor_dynamics(5, PARAMS)
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(40):
            w = rng.uniform(-1e-2, 1e-2, 6)
            err = np.max(np.abs(tm.eval(w) - plant.discrete_dynamics(w[:4], w[4:], PARAMS)))
            worst = max(worst, err)
        assert worst < 1e-10

    def test_even_degrees_vanish(self):
        # the vector field is odd under (x, u) -> (-x, -u)
        tm = plant.taylor_dynamics(5, PARAMS)
        for row in tm.rows:
            for deg in (2, 4):
                assert np.max(np.abs(row.coeffs_of_degree(deg))) < 1e-12

    def test_extended_precision_matches_float64(self):
        tm64 = plant.taylor_dynamics(3, PARAMS)
        tmld = plant.taylor_dynamics(3, PARAMS, dtype=np.longdouble)
        for r64, rld in zip(tm64.rows, tmld.rows):
            for deg in (1, 2, 3):
                np.testing.assert_allclose(rld.coeffs_of_degree(deg).astype(float),
                                           r64.coeffs_of_degree(deg), rtol=1e-13, atol=1e-15)


class TestNoise:
    def test_none_generator_is_identity(self):
        x = np.array([1.0, -2.0, 3.0, -4.0])
        assert plant.add_noise(x, None) is not x  # fresh array
        np.testing.assert_array_equal(plant.add_noise(x, None), x)

    def test_same_seed_reproduces(self):
        x = np.zeros(4)
        a = [plant.add_noise(x, np.random.default_rng(7)) for _ in range(1)]
        b = [plant.add_noise(x, np.random.default_rng(7)) for _ in range(1)]
        np.testing.assert_array_equal(a, b)

    def test_sample_variance(self):
        rng = np.random.default_rng(8)
        draws = np.array([plant.add_noise(np.zeros(4), rng) for _ in range(100_000)])
        var = draws.var(axis=0)
        assert np.all(var > 0.0004 * 0.95)
        assert np.all(var < 0.0004 * 1.05)


class TestParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            PendulumParams(l1=0.0)
        with pytest.raises(ValueError):
            PendulumParams(h=-0.1)
