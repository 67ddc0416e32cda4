import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from etcsim.errors import ConfigurationError, DivergenceError, PreconditionError
from etcsim.model import (
    JordanPlant,
    ScalarPlant,
    SimState,
    TriggerConfig,
    apply_jump,
    block_matexp,
    control_input,
    error_transition,
    propagate,
    trigger_value,
)


def integrate_error(blocks, z0, h):
    """Independent oracle: fine-tolerance numerical integration of zdot = A z."""
    A = JordanPlant(blocks=blocks, B=np.zeros((sum(p for _, p in blocks), 1)),
                    K=np.zeros((1, sum(p for _, p in blocks)))).a_matrix()
    sol = solve_ivp(lambda t, z: A @ z, (0.0, h), z0, rtol=1e-12, atol=1e-14,
                    method="DOP853")
    return sol.y[:, -1]


class TestPlants:
    def test_scalar_requires_positive_growth(self):
        with pytest.raises(ConfigurationError):
            ScalarPlant(A=-1.0, B=1.0, K=1.0)
        with pytest.raises(ConfigurationError):
            ScalarPlant(A=1.0, B=1.0, K=1.0, L=0.0)

    def test_jordan_dimensions(self):
        plant = JordanPlant(blocks=((1.0, 2), (2.0, 1)), B=np.eye(3), K=np.zeros((3, 3)))
        assert plant.n == 3
        assert plant.trace == pytest.approx(1.0 * 2 + 2.0)
        A = plant.a_matrix()
        assert A[0, 1] == 1.0 and A[1, 2] == 0.0 and A[2, 2] == 2.0

    def test_jordan_rejects_bad_shapes(self):
        with pytest.raises(ConfigurationError):
            JordanPlant(blocks=((1.0, 2),), B=np.eye(3), K=np.zeros((3, 3)))
        with pytest.raises(ConfigurationError):
            JordanPlant(blocks=((-1.0, 1),), B=np.eye(1), K=np.eye(1))

    def test_scalar_as_jordan_round_trip(self):
        plant = ScalarPlant(A=2.4, B=1.0, K=8.0, L=3.0)
        jp = plant.as_jordan()
        assert jp.blocks == ((2.4, 1),)
        assert jp.closed_loop_matrix()[0, 0] == pytest.approx(2.4 - 8.0)


class TestTriggerConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            TriggerConfig(v0=1.0, sigma=0.0, rho0=0.5, gamma=0.1)
        with pytest.raises(ConfigurationError):
            TriggerConfig(v0=1.0, sigma=1.0, rho0=1.0, gamma=0.1)
        with pytest.raises(ConfigurationError):
            TriggerConfig(v0=1.0, sigma=1.0, rho0=0.5, gamma=-0.1)
        with pytest.raises(ConfigurationError):
            TriggerConfig(v0=1.0, sigma=1.0, rho0=0.5, gamma=0.1, b=1.0)

    def test_ladder_must_end_at_rho0(self):
        with pytest.raises(ConfigurationError):
            TriggerConfig(v0=((1.0, 1.0),), sigma=1.0, rho0=0.5, gamma=0.1,
                          rho_ladders=((0.2, 0.4),))
        cfg = TriggerConfig(v0=((1.0, 1.0),), sigma=1.0, rho0=0.5, gamma=0.1,
                            rho_ladders=((0.25, 0.5),))
        assert cfg.rho_flat(((1.0, 2),)) == (0.25, 0.5)

    def test_default_ladder(self):
        cfg = TriggerConfig(v0=((1.0, 1.0, 1.0),), sigma=1.0, rho0=0.6, gamma=0.1)
        assert cfg.rho_flat(((1.0, 3),)) == (pytest.approx(0.2), pytest.approx(0.4), 0.6)


class TestTriggerValue:
    def test_reported_initial_value(self):
        cfg = TriggerConfig(v0=0.2671, sigma=0.1, rho0=0.1, gamma=1.2)
        assert trigger_value(cfg, 0, 0.0) == pytest.approx(0.2671, abs=1e-12)

    def test_halving_time(self):
        cfg = TriggerConfig(v0=1.0, sigma=1.0, rho0=0.1, gamma=0.0)
        assert trigger_value(cfg, 0, math.log(2.0)) == pytest.approx(0.5, rel=1e-12)

    def test_monotone_decay(self):
        cfg = TriggerConfig(v0=0.7, sigma=0.3, rho0=0.1, gamma=0.0)
        vals = [trigger_value(cfg, 0, t) for t in np.linspace(0, 50, 200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-6

    def test_negative_time_rejected(self):
        cfg = TriggerConfig(v0=1.0, sigma=1.0, rho0=0.1, gamma=0.0)
        with pytest.raises(PreconditionError):
            trigger_value(cfg, 0, -0.1)


class TestPropagate:
    def test_pure_exponential_growth(self):
        # A=1, B=0, x=1, xhat=0, h=ln2 doubles the state
        plant = ScalarPlant(A=1.0, B=0.0, K=0.0)
        state = SimState(0.0, np.array([1.0]), np.array([0.0]))
        out = propagate(state, plant, math.log(2.0))
        assert out.x[0] == pytest.approx(2.0, rel=1e-12)
        assert out.xhat[0] == 0.0
        assert out.z[0] == pytest.approx(2.0, rel=1e-12)

    def test_zero_error_stays_zero(self):
        plant = ScalarPlant(A=1.0, B=0.5, K=2.0)
        state = SimState(0.0, np.array([0.7]), np.array([0.7]))
        out = propagate(state, plant, 1.3)
        assert abs(out.z[0]) < 1e-14

    def test_jordan_coupled_block_closed_form(self):
        # z = (0, 1) on a second-order block: z1(h) = h*e^{lam h}, z2(h) = e^{lam h}
        blocks = ((1.0, 2),)
        plant = JordanPlant(blocks=blocks, B=np.zeros((2, 1)), K=np.zeros((1, 2)))
        state = SimState(0.0, np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        out = propagate(state, plant, 1.0)
        oracle = integrate_error(blocks, np.array([0.0, 1.0]), 1.0)
        assert out.z == pytest.approx([math.e, math.e], rel=1e-12)
        assert out.z == pytest.approx(oracle, rel=1e-9)

    def test_error_transition_matches_integration(self):
        rng = np.random.default_rng(11)
        blocks = ((0.8, 3), (1.7, 1))
        plant = JordanPlant(blocks=blocks, B=np.zeros((4, 1)), K=np.zeros((1, 4)))
        for _ in range(10):
            z0 = rng.normal(size=4)
            h = float(rng.uniform(0.05, 1.5))
            state = SimState(0.0, z0, np.zeros(4))
            out = propagate(state, plant, h)
            oracle = integrate_error(blocks, z0, h)
            np.testing.assert_allclose(out.z, oracle, rtol=1e-9, atol=1e-13)

    def test_additive_in_time(self):
        plant = ScalarPlant(A=1.3, B=0.4, K=5.0)
        rng = np.random.default_rng(3)
        for _ in range(20):
            x0, xh0 = rng.normal(size=2)
            h1, h2 = rng.uniform(0.01, 1.0, size=2)
            s = SimState(0.0, np.array([x0]), np.array([xh0]))
            once = propagate(s, plant, h1 + h2)
            twice = propagate(propagate(s, plant, h1), plant, h2)
            np.testing.assert_allclose(once.x, twice.x, rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(once.xhat, twice.xhat, rtol=1e-12, atol=1e-15)

    def test_euler_step_first_order(self):
        plant = ScalarPlant(A=1.0, B=0.2, K=8.0)
        s = SimState(0.0, np.array([0.2]), np.array([0.1]))
        h = 1e-4
        exact = propagate(s, plant, h)
        euler = propagate(s, plant, h, method="euler")
        np.testing.assert_allclose(euler.x, exact.x, atol=1e-7)

    def test_rejects_bad_step(self):
        plant = ScalarPlant(A=1.0, B=0.0, K=0.0)
        s = SimState(0.0, np.array([1.0]), np.array([0.0]))
        with pytest.raises(PreconditionError):
            propagate(s, plant, 0.0)
        with pytest.raises(PreconditionError):
            propagate(s, plant, 0.1, method="trapezoid")

    def test_overflow_raises_divergence(self):
        plant = ScalarPlant(A=1.0, B=0.0, K=0.0)
        s = SimState(0.0, np.array([1e11]), np.array([0.0]))
        with pytest.raises(DivergenceError):
            propagate(s, plant, 10.0)


class TestBlockMatexp:
    def test_against_scipy_expm(self):
        import scipy.linalg

        for lam, p in ((0.5, 1), (1.0, 2), (2.0, 4)):
            plant = JordanPlant(blocks=((lam, p),), B=np.zeros((p, 1)), K=np.zeros((1, p)))
            for h in (0.01, 0.3, 2.0):
                closed = block_matexp(lam, p, h)
                pade = scipy.linalg.expm(plant.a_matrix() * h)
                np.testing.assert_allclose(closed, pade, rtol=1e-12, atol=1e-14)

    def test_block_diagonal_assembly(self):
        M = error_transition(((1.0, 2), (2.0, 1)), 0.5)
        assert M.shape == (3, 3)
        assert M[2, 2] == pytest.approx(math.exp(1.0))
        assert M[0, 2] == 0.0 and M[2, 0] == 0.0


class TestApplyJump:
    def test_perfect_estimate(self):
        s = SimState(1.0, np.array([1.0]), np.array([0.4]))
        out = apply_jump(s, 0, 0.6)
        assert out.xhat[0] == pytest.approx(1.0)
        assert out.z[0] == pytest.approx(0.0, abs=1e-15)

    def test_zero_jump_is_identity(self):
        s = SimState(1.0, np.array([0.3, -0.2]), np.array([0.1, 0.0]))
        out = apply_jump(s, 1, 0.0)
        np.testing.assert_array_equal(out.x, s.x)
        np.testing.assert_array_equal(out.xhat, s.xhat)

    def test_residual_arithmetic(self):
        s = SimState(0.0, np.array([0.2]), np.array([0.1]))
        out = apply_jump(s, 0, 0.095)
        assert out.z[0] == pytest.approx(0.005, abs=1e-15)

    def test_never_modifies_state(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            x, xh = rng.normal(size=(2, 3))
            s = SimState(0.0, x.copy(), xh.copy())
            out = apply_jump(s, int(rng.integers(0, 3)), float(rng.normal()))
            np.testing.assert_array_equal(out.x, x)

    def test_control_input(self):
        plant = ScalarPlant(A=1.0, B=0.2, K=8.0)
        s = SimState(0.0, np.array([0.5]), np.array([0.25]))
        assert control_input(s, plant)[0] == pytest.approx(-2.0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            SimState(0.0, np.zeros(2), np.zeros(3))
