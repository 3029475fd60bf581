import numpy as np
import pytest
from scipy.optimize import check_grad

from irobd.algorithms import run_irobd, run_robd, run_stay
from irobd.core import HittingCost, Instance, evaluate_total
from irobd.delta import LinearDelta, LinearSineDelta, soco
from irobd.errors import InvalidArgument, Unsupported
from irobd.instances import gen_drone, gen_random, gen_remark1, gen_remark2, gen_theorem3
from irobd.offline import (GridSpec, MULTISTART_NOTE, auto_grid, objective_grad, offline_optimum,
                           solve_offline_convex, solve_offline_dp, solve_offline_multistart, stationarity)


def cost(inst, traj):
    return evaluate_total(inst, traj).total


class TestConvex:
    def test_free_optimum(self):
        inst = Instance(tuple(HittingCost.isotropic_cost(1.0, [0.0, 0.0]) for _ in range(4)),
                        LinearDelta(np.eye(2)[None] * 1.3))
        assert np.all(np.abs(solve_offline_convex(inst).points) < 1e-15)

    def test_two_step_hand_solution(self):
        # minimize 1/2 (y1-1)^2 + 1/2 (y2-1)^2 + 1/2 y1^2 + 1/2 (y2-y1)^2
        inst = Instance((HittingCost.isotropic_cost(1.0, [1.0]),) * 2, soco(1))
        Y = solve_offline_convex(inst).points[:, 0]
        H = np.array([[3.0, -1.0], [-1.0, 2.0]])
        assert np.allclose(Y, np.linalg.solve(H, [1.0, 1.0]), atol=1e-14)
        dp = solve_offline_dp(inst, GridSpec(-1, 2, 3001))
        assert cost(inst, dp) - cost(inst, Y[:, None]) <= 1e-6

    def test_exponential_instance_below_adversary(self):
        inst = gen_theorem3(1.0, 2.0, 4)
        assert cost(inst, solve_offline_convex(inst)) <= 0.5

    def test_stationary(self):
        inst = gen_random(8, T=40, d=3, p=3, alpha=1.4)
        assert stationarity(inst, solve_offline_convex(inst).points) <= 1e-10 * np.sqrt(120)

    def test_nonlinear_refused(self):
        with pytest.raises(Unsupported):
            solve_offline_convex(gen_drone(T=3))


class TestGradient:
    @pytest.mark.parametrize("kind,p", [("linear", 2), ("linear_sine", 3), ("drone", 1)])
    def test_matches_finite_difference(self, kind, p):
        inst = gen_random(4, T=6, d=2, p=p, delta_kind=kind, prehistory_scale=1.0)
        f = lambda x: objective_grad(inst, x)[0]  # noqa: E731
        g = lambda x: objective_grad(inst, x)[1].ravel()  # noqa: E731
        x0 = np.random.default_rng(0).standard_normal(12)
        assert check_grad(f, g, x0) <= 1e-5 * max(1.0, np.linalg.norm(g(x0)))


class TestDP:
    def test_zero_minimizers(self):
        inst = Instance((HittingCost.isotropic_cost(1.0, [0.0]),) * 5, soco(1))
        traj = solve_offline_dp(inst, GridSpec(-1.0, 1.3, 100))
        assert np.all(traj.points == 0) and cost(inst, traj) == 0

    def test_early_departure_instance(self):
        eps, gamma, n = 0.1, 0.01, 5
        inst, _ = gen_remark2(eps, gamma, n)
        traj = solve_offline_dp(inst, GridSpec(-0.2, n * eps + 2 * gamma * eps, 4001))
        assert 2 * cost(inst, traj) <= 3 * gamma * eps ** 2 + 1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_agrees_with_convex(self, seed):
        inst = gen_random(seed, T=5, d=1, p=1, alpha=1.0)
        inst = Instance(inst.costs, soco(1))
        dp = solve_offline_dp(inst, GridSpec(-5, 5, 4001))
        cv = solve_offline_convex(inst)
        assert abs(cost(inst, dp) - cost(inst, cv)) <= 1e-4

    def test_second_order_memory(self):
        inst = gen_random(5, T=6, d=1, p=2, alpha=1.2)
        dp = solve_offline_dp(inst, auto_grid(inst, 301))
        cv = solve_offline_convex(inst)
        assert 0 <= cost(inst, dp) - cost(inst, cv) <= 1e-2

    def test_refusals(self):
        with pytest.raises(Unsupported):
            solve_offline_dp(gen_random(0, T=3, d=2))
        with pytest.raises(Unsupported):
            solve_offline_dp(gen_random(0, T=3, p=3))
        with pytest.raises(Unsupported, match="MiB"):
            solve_offline_dp(gen_random(0, T=50, p=2), GridSpec(-1, 1, 5001))

    def test_grid_validation(self):
        with pytest.raises(InvalidArgument):
            GridSpec(1.0, 1.0)
        with pytest.raises(InvalidArgument):
            GridSpec(0.0, 1.0, 2)

    def test_auto_grid(self):
        g = auto_grid(Instance((HittingCost.isotropic_cost(1.0, [2.0]),) * 2, soco(1), 0, [[2.0]]), 10)
        assert (g.lo, g.hi, g.cells) == (-1.0, 5.0, 11)


class TestMultistart:
    def test_matches_convex_on_linear(self):
        inst = gen_random(9, T=15, d=2, p=2, alpha=0.8)
        ms = solve_offline_multistart(inst, restarts=4)
        assert abs(cost(inst, ms) - cost(inst, solve_offline_convex(inst))) <= 1e-6

    def test_matches_dp_on_scalar_nonlinear(self):
        inst = gen_remark1(1.0, 0.6, T=15, seed=2, nonlinear=True)
        ms = solve_offline_multistart(inst, restarts=8)
        dp = solve_offline_dp(inst, auto_grid(inst, 2001))
        assert cost(inst, ms) <= cost(inst, dp) + 1e-4

    def test_zero_cost_rollout(self):
        sw = LinearSineDelta([[[1.0]]], [[[0.5]]])
        ys, y = [], np.array([0.3])
        for _ in range(6):
            y = sw(y[None])
            ys.append(y.copy())
        inst = Instance(tuple(HittingCost.isotropic_cost(1.0, v) for v in ys), sw, 0, [[0.3]])
        assert cost(inst, solve_offline_multistart(inst, restarts=2)) <= 1e-20

    def test_never_worse_than_seed(self):
        inst = gen_drone(0.1, 0.01, T=8, speed_profile="random", seed=3)
        seed = run_robd(inst, 1.0).points
        ms = solve_offline_multistart(inst, restarts=1, seeds=[seed])
        assert cost(inst, ms) <= cost(inst, seed)

    def test_restarts_validated(self):
        with pytest.raises(InvalidArgument):
            solve_offline_multistart(gen_random(0, T=2), restarts=0)


class TestDispatcher:
    def test_methods(self):
        assert offline_optimum(gen_random(0, T=5)).method == "convex"
        assert offline_optimum(gen_drone(T=5)).method == "dp"
        res = offline_optimum(gen_random(0, T=4, d=2, delta_kind="drone"), restarts=3)
        assert res.method == "multistart" and res.note == MULTISTART_NOTE

    def test_two_step_memory_fits_budget(self):
        inst = gen_random(1, T=20, d=1, p=2, delta_kind="linear_sine")
        assert offline_optimum(inst, cells=2001).method == "dp"

    def test_falls_back_when_dp_refuses(self, monkeypatch):
        def refuse(*a, **k):
            raise Unsupported("DP refused: too big")

        monkeypatch.setattr("irobd.offline.solve_offline_dp", refuse)
        res = offline_optimum(gen_drone(T=4), restarts=2)
        assert res.method == "multistart" and "too big" in res.note

    def test_hover_is_not_free(self):
        inst = gen_drone(0.1, 0.01, T=10, k=0, speed_profile="hover")
        assert offline_optimum(inst).cost > 0

    def test_dominates_algorithms(self):
        for seed in range(5):
            inst = gen_remark1(2.0, 0.5, T=20, seed=seed, nonlinear=bool(seed % 2))
            trajs = [run_robd(inst, 0.5), run_irobd(inst, 0.5)[0], run_stay(inst)]
            opt = offline_optimum(inst, seeds=[t.points for t in trajs])
            assert all(opt.cost <= cost(inst, t) + 1e-8 for t in trajs)
