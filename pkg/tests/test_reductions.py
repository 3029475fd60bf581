import numpy as np
import pytest

from irobd.algorithms import IROBD, run_irobd
from irobd.core import evaluate_total
from irobd.errors import InvalidArgument, VerificationFailure
from irobd.instances import gen_drone
from irobd.reductions import (LinearControlLoop, LinearControlSystem, NonlinearControlSystem, accumulate_r,
                              canonical_indices, extract_Ci, q_bracket, reduce_linear, reduce_nonlinear,
                              roundtrip_verify, system_from_dict)

EXAMPLE_A = [[0.0, 1.0], [-1.0, 2.0]]
EXAMPLE_B = [[0.0], [1.0]]


def random_canonical(rng, n, ks):
    """Random canonical pair with input rows at the 1-based indices ``ks``."""
    A = np.zeros((n, n))
    B = np.zeros((n, len(ks)))
    for r in range(1, n + 1):
        if r in ks:
            A[r - 1] = rng.uniform(-0.6, 0.6, n)
            B[r - 1, ks.index(r)] = 1.0
        else:
            A[r - 1, r] = 1.0
    return A, B


def random_linear_system(seed, T=12):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    d = int(rng.integers(1, n + 1))
    ks = sorted(rng.choice(np.arange(1, n), size=d - 1, replace=False).tolist()) + [n]
    A, B = random_canonical(rng, n, ks)
    return LinearControlSystem(A, B, rng.standard_normal((T, n)), rng.uniform(0.5, 2.0, T)), rng


class TestCanonical:
    def test_worked_example(self):
        idx = canonical_indices(EXAMPLE_A, EXAMPLE_B)
        assert idx.k == (2,) and idx.p_i == (2,) and idx.p == 2
        assert np.array_equal(extract_Ci(EXAMPLE_A, idx)[:, 0, 0], [2.0, -1.0])

    def test_scalar(self):
        idx = canonical_indices([[0.0]], [[1.0]])
        assert idx.k == (1,) and idx.p == 1
        assert extract_Ci([[0.7]], canonical_indices([[0.7]], [[1.0]]))[0, 0, 0] == 0.7

    def test_two_inputs(self):
        A = np.array([[0.1, 0.2, 0.3], [0.0, 0.0, 1.0], [0.4, 0.5, 0.6]])
        B = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        idx = canonical_indices(A, B)
        assert idx.k == (1, 3) and idx.p_i == (1, 2) and idx.p == 2
        C = extract_Ci(A, idx)
        assert C[0, 0, 0] == A[0, 0] and C[0, 1, 1] == A[2, 2]
        assert np.array_equal(C[1][:, 1], A[[0, 2], 1]) and np.all(C[1][:, 0] == 0)
        assert np.array_equal(idx.psi([7.0, 8.0, 9.0]), [7.0, 9.0])

    def test_rejects_non_unit_b(self):
        with pytest.raises(InvalidArgument, match="row 2"):
            canonical_indices(EXAMPLE_A, [[0.0], [2.0]])

    def test_rejects_bad_shift_row(self):
        with pytest.raises(InvalidArgument, match="row 1"):
            canonical_indices([[0.5, 1.0], [-1.0, 2.0]], EXAMPLE_B)

    def test_rejects_last_row_without_input(self):
        with pytest.raises(InvalidArgument):
            canonical_indices([[0.0, 0.0], [0.0, 1.0]], [[1.0], [0.0]])


class TestAccumulation:
    def test_first_lag_vanishes(self):
        idx = canonical_indices(EXAMPLE_A, EXAMPLE_B)
        assert accumulate_r(np.ones((5, 2)), 3, 1, 1, idx) == 0.0

    def test_worked_example_single_term(self):
        idx = canonical_indices(EXAMPLE_A, EXAMPLE_B)
        w = np.arange(10.0).reshape(5, 2)
        for t in range(1, 5):
            assert accumulate_r(w, t, 1, 2, idx) == w[t - 1, 0]

    def test_zero_disturbance(self):
        idx = canonical_indices(*random_canonical(np.random.default_rng(0), 4, [2, 4]))
        assert all(accumulate_r(np.zeros((6, 4)), t, i, j, idx) == 0
                   for t in range(1, 6) for i in (1, 2) for j in (1, 2))

    def test_out_of_range(self):
        idx = canonical_indices(EXAMPLE_A, EXAMPLE_B)
        with pytest.raises(InvalidArgument):
            accumulate_r(np.zeros((2, 2)), 5, 1, 2, idx)

    @pytest.mark.parametrize("seed", range(10))
    def test_decomposition_identity(self, seed):
        sys, rng = random_linear_system(seed)
        idx = canonical_indices(sys.A, sys.B)
        xs = sys.simulate(rng.standard_normal((sys.T, sys.d)))
        for i in range(1, idx.d + 1):
            for j in range(1, idx.p_i[i - 1] + 1):
                for t in range(j, sys.T + 1):
                    lhs = xs[t][idx.k[i - 1] - j]
                    rhs = idx.psi(xs[t - j + 1])[i - 1] + accumulate_r(sys.w, t, i, j, idx)
                    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))


class TestLinearReduction:
    def test_worked_example_instance(self):
        sys = LinearControlSystem(EXAMPLE_A, EXAMPLE_B, np.zeros((200, 2)), np.ones(200))
        inst, rec = reduce_linear(sys)
        assert inst.k == 2 and inst.p == 2
        assert np.array_equal(inst.switching.C[:, 0, 0], [2.0, -1.0])
        assert all(c.Q[0, 0] == 2.0 for c in inst.costs[:-1]) and inst.costs[-1].Q[0, 0] == 1.0
        assert np.all(inst.minimizers == 0) and np.all(rec.state.zeta == 0) and rec.state.offset == 0
        assert inst.switching([[3.0], [2.0]])[0] == 4.0  # 2 * 3 - 2

    @pytest.mark.parametrize("seed", range(20))
    def test_cost_equivalence(self, seed):
        sys, rng = random_linear_system(seed)
        rep = roundtrip_verify(sys, rng.standard_normal((sys.T, sys.d)))
        assert rep.relative <= 1e-8 and rep.state_gap <= 1e-10

    def test_recovery_inverse(self):
        sys, rng = random_linear_system(3)
        _, rec = reduce_linear(sys)
        us = rng.standard_normal((sys.T, sys.d))
        assert np.allclose(rec.inputs(rec.decisions(us)), us, atol=1e-13)

    def test_delay_provenance(self):
        sys, rng = random_linear_system(5, T=10)
        inst, _ = reduce_linear(sys)
        p = inst.p
        for s in range(sys.T):
            w = sys.w.copy()
            w[s + p:] += rng.standard_normal(w[s + p:].shape)
            other, _ = reduce_linear(LinearControlSystem(sys.A, sys.B, w, sys.q))
            assert np.array_equal(other.costs[s].v, inst.costs[s].v)
            assert np.array_equal(other.costs[s].Q, inst.costs[s].Q)

    def test_curvature_bracket(self):
        for seed in range(5):
            sys, _ = random_linear_system(seed)
            lo, hi = q_bracket(sys)
            inst, _ = reduce_linear(sys)
            eig = np.concatenate([np.diag(c.Q) for c in inst.costs])
            assert lo <= eig.min() and eig.max() <= hi

    def test_mismatched_weights(self):
        with pytest.raises(InvalidArgument):
            LinearControlSystem(EXAMPLE_A, EXAMPLE_B, np.zeros((4, 2)), np.ones(6))
        with pytest.raises(InvalidArgument):
            LinearControlSystem(EXAMPLE_A, EXAMPLE_B, np.zeros((4, 2)), np.ones(4), x0=[1.0, 0.0])

    def test_control_loop_matches_offline_reduction(self):
        sys, _ = random_linear_system(7, T=15)
        inst, rec = reduce_linear(sys)
        us, xs = LinearControlLoop(sys).run(IROBD(0.8))
        ys, _ = run_irobd(inst, 0.8)
        assert np.allclose(rec.decisions(us), ys.points, atol=1e-10)
        assert sys.cost(us) == pytest.approx(evaluate_total(inst, ys).total + rec.state.offset, rel=1e-10)


class TestNonlinearReduction:
    def test_identity_dynamics_is_soco(self):
        sys = NonlinearControlSystem(np.eye(2), ("sine", {"G": np.zeros((2, 2))}), np.ones(3), np.ones((3, 2)))
        inst, _ = reduce_nonlinear(sys)
        assert np.allclose(inst.switching([[0.3, -0.2]]), [0.3, -0.2])

    def test_drone_matches_generator(self):
        ref = gen_drone(0.1, 0.01, T=6, k=1, speed_profile="sine")
        sys = NonlinearControlSystem(np.eye(1), ("drag", {"C1": 0.1, "C2": 0.01}),
                                     np.ones(6), ref.minimizers, k=1, radius=ref.switching.radius)
        inst, _ = reduce_nonlinear(sys)
        assert np.array_equal(inst.minimizers, ref.minimizers) and inst.k == ref.k
        probe = np.linspace(-3, 3, 13)[:, None, None]
        assert np.array_equal(inst.switching.batch(probe), ref.switching.batch(probe))

    @pytest.mark.parametrize("seed", range(10))
    def test_cost_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        n, T = int(rng.integers(1, 4)), 10
        A = rng.uniform(-0.5, 0.5, (n, n))
        sys = NonlinearControlSystem(A, ("sine", {"G": 0.3 * np.eye(n)}), rng.uniform(0.5, 2.0, T),
                                     rng.standard_normal((T, n)), k=2, x0=rng.standard_normal(n))
        rep = roundtrip_verify(sys, rng.standard_normal((T, n)))
        assert rep.relative <= 1e-8

    def test_callable_needs_lipschitz(self):
        sys = NonlinearControlSystem(np.eye(1), lambda x: 0.1 * np.tanh(x), np.ones(2), np.zeros((2, 1)))
        with pytest.raises(InvalidArgument):
            sys.delta()


def test_roundtrip_reports_first_bad_step(monkeypatch):
    sys, rng = random_linear_system(1)
    orig = LinearControlSystem.simulate

    def corrupted(self, us):
        xs = orig(self, us)
        xs[4:] += 1.0
        return xs

    monkeypatch.setattr(LinearControlSystem, "simulate", corrupted)
    with pytest.raises(VerificationFailure) as err:
        roundtrip_verify(sys, rng.standard_normal((sys.T, sys.d)))
    assert err.value.step == 4  # x_4 is the state after round 4


def test_system_from_dict():
    lin = system_from_dict({"A": EXAMPLE_A, "B": EXAMPLE_B, "w": [[0, 0]] * 3, "q": [1, 1, 1]})
    assert isinstance(lin, LinearControlSystem) and lin.T == 3
    non = system_from_dict({"kind": "nonlinear", "A": [[1.0]], "g": {"kind": "drag", "params": {"C1": 0.1, "C2": 0.0}},
                            "Q": [1, 1], "v": [[0], [1]]})
    assert isinstance(non, NonlinearControlSystem)
    with pytest.raises(InvalidArgument):
        system_from_dict({"kind": "hybrid"})
