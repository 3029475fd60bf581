"""Randomized properties over generated instances and bound parameters."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from irobd.algorithms import run_irobd, run_robd
from irobd.bounds import bound_cor1_opt, lower_bound_thm3, robd_linear_ratio_prior
from irobd.core import dump_instance, evaluate_total, load_instance
from irobd.instances import gen_random
from irobd.offline import solve_offline_convex, stationarity
from irobd.prox import prox_closed_form

seeds = st.integers(0, 2 ** 31 - 1)
small = dict(max_examples=30, deadline=None)


@settings(**small)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(0, 4))
def test_json_roundtrip_is_exact(seed, d, p, k):
    inst = gen_random(seed, T=5, d=d, p=p, k=k, prehistory_scale=1.0)
    back = load_instance(dump_instance(inst))
    ys = np.random.default_rng(seed).standard_normal((5, d))
    assert evaluate_total(back, ys).total == evaluate_total(inst, ys).total
    assert dump_instance(back) == dump_instance(inst)


@settings(**small)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_no_delay_irobd_is_robd(seed, d, p):
    inst = gen_random(seed, T=10, d=d, p=p, delta_kind="linear_sine")
    gap = np.max(np.abs(run_irobd(inst, 0.6)[0].points - run_robd(inst, 0.6).points))
    assert gap <= 2e-10


@settings(**small)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(0, 3))
def test_convex_oracle_is_stationary_and_dominates(seed, d, p, k):
    inst = gen_random(seed, T=8, d=d, p=p, k=k, alpha=1.2)
    opt = solve_offline_convex(inst)
    assert stationarity(inst, opt.points) <= 1e-9
    alg = run_irobd(inst, 0.7)[0]
    assert evaluate_total(inst, opt).total <= evaluate_total(inst, alg).total + 1e-8


@settings(**small)
@given(seeds, st.floats(0.0, 5.0))
def test_prox_stationarity(seed, lam):
    rng = np.random.default_rng(seed)
    inst = gen_random(seed, T=1, d=3, m=0.3, l=4.0)
    f, target = inst.costs[0], rng.standard_normal(3)
    y = prox_closed_form(f, target, lam)
    g = f.Q @ (y - f.v) + lam * (y - target)
    assert np.linalg.norm(g) <= 1e-10 * max(1.0, np.linalg.norm(f.Q @ f.v) + lam * np.linalg.norm(target))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.0, 3.0))
def test_matching_bound_identity(m, L):
    assert abs(bound_cor1_opt(m, L)[1] - robd_linear_ratio_prior(m, 1 + L)) <= 1e-12 * max(1.0, bound_cor1_opt(m, L)[1])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(1.0001, 3.0), st.integers(1, 8))
def test_lower_bound_grows_with_delay(m, alpha, k):
    assert lower_bound_thm3(m, alpha, k + 1) > lower_bound_thm3(m, alpha, k)
