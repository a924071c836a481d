import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relayopt.model import NetworkConfig, Permutation, check_feasibility, sum_rate
from relayopt.oracle import GridSpec, GridTooLarge, grid_search, inner_rate_assignment, oracle_search
from relayopt.schemes import solve_cf, solve_df_ml


# -- inner assignment ----------------------------------------------------------

def test_inner_assignment_example():
    r, total = inner_rate_assignment([1.0, 2.0], [2.5, 1.5])
    assert np.allclose(r, [1.0, 1.5]) and total == pytest.approx(2.5)


def test_inner_assignment_unconstrained_and_zero():
    r, total = inner_rate_assignment([1.0, 2.0, 0.5], [1e9, 1e9, 1e9])
    assert np.allclose(r, [1.0, 2.0, 0.5]) and total == pytest.approx(3.5)
    r, total = inner_rate_assignment([1.0, 2.0], [0.0, 1.0])
    assert total == 0.0 and np.all(r == 0)


def test_inner_assignment_nonmonotone_limits():
    # a larger limit on the longer suffix cannot be used past the shorter one
    r, total = inner_rate_assignment([0.0, 5.0], [1.0, 3.0])
    assert total == pytest.approx(1.0)
    assert np.all(r >= 0)


def brute_force(caps, D, h):
    axes = [np.arange(0.0, c + h / 2, h) for c in caps]
    best = 0.0
    for r in itertools.product(*axes):
        suffix = np.cumsum(r[::-1])[::-1]
        if np.all(suffix <= np.asarray(D) + 1e-12):
            best = max(best, float(np.sum(r)))
    return best


def test_inner_assignment_matches_grid_on_500_cases():
    rng = np.random.default_rng(3)
    h = 0.1
    for _ in range(500):
        m = int(rng.integers(1, 4))
        caps = np.round(rng.uniform(0, 2, m), 1)
        D = np.round(rng.uniform(0, 3, m), 1)
        r, total = inner_rate_assignment(caps, D)
        assert np.all(r >= -1e-12) and np.all(r <= caps + 1e-12)
        assert np.all(np.cumsum(r[::-1])[::-1] <= D + 1e-12)
        grid = brute_force(caps, D, h)
        # every value here sits on the 0.1 lattice, so the lattice optimum is exact
        assert total == pytest.approx(grid, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3).flatmap(lambda m: st.tuples(
    st.lists(st.floats(0, 3), min_size=m, max_size=m),
    st.lists(st.floats(0, 5), min_size=m, max_size=m))))
def test_inner_assignment_feasible_and_not_improvable(case):
    caps, D = map(np.asarray, case)
    r, total = inner_rate_assignment(caps, D)
    suffix = np.cumsum(r[::-1])[::-1]
    assert np.all(r >= 0) and np.all(r <= caps + 1e-12)
    assert np.all(suffix <= D + 1e-12)
    assert total == pytest.approx(r.sum(), abs=1e-12)
    # cut bound: caps on a prefix plus the suffix limit right after it
    bound = min([caps[:k].sum() + D[k] for k in range(len(caps))] + [caps.sum()])
    assert total == pytest.approx(bound, abs=1e-9)


# -- grid search ---------------------------------------------------------------

def test_single_relay_beta_only_grid():
    cfg = NetworkConfig([10.0], [2.0], 1.0)
    sol = grid_search(cfg, Permutation.identity(1), GridSpec(100, fixed_powers=(0.0, 1.0)))
    assert sol.sum_rate == pytest.approx(np.log2(22 / 7), abs=0.01)
    assert sol.sum_rate <= np.log2(22 / 7) + 1e-12


def test_symmetric_pair_near_best_closed_form():
    cfg = NetworkConfig([10.0, 10.0], [2.0, 2.0], 1.0)
    sol = oracle_search(cfg, GridSpec(50))
    best = max(solve_cf(cfg).sum_rate, solve_df_ml(cfg).sum_rate)
    assert abs(sol.sum_rate - best) <= 0.02


def test_zero_backhaul_oracle():
    sol = oracle_search(NetworkConfig([10.0, 10.0], [0.0, 0.0], 1.0), GridSpec(20))
    assert sol.sum_rate == 0.0


def test_grid_value_matches_recovered_allocation():
    cfg = NetworkConfig([2.0, 8.0], [1.5, 2.5], 1.5)
    sol = oracle_search(cfg, GridSpec(20))
    assert sol.diagnostics["grid_value"] == pytest.approx(sol.sum_rate, abs=1e-9)
    assert sol.sum_rate == pytest.approx(sum_rate(cfg, sol.allocation), abs=1e-12)


def test_refinement_is_monotone():
    cfg = NetworkConfig([1.0, 10.0], [2.0, 2.0], 1.0)
    rates = [oracle_search(cfg, GridSpec(n)).sum_rate for n in (10, 20, 40)]
    assert rates[0] <= rates[1] + 1e-12 <= rates[2] + 2e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2).flatmap(lambda m: st.tuples(
    st.lists(st.floats(-10, 20), min_size=m, max_size=m),
    st.lists(st.floats(0, 10), min_size=m, max_size=m),
    st.floats(-5, 10))))
def test_oracle_allocations_feasible_and_refining(case):
    g, c, p = case
    cfg = NetworkConfig.from_db(g, c, p)
    prev = -np.inf
    for n in (10, 20, 40):
        sol = oracle_search(cfg, GridSpec(n))
        rep = check_feasibility(cfg, sol.permutation, sol.allocation, tol=1e-9)
        assert rep.feasible, rep.slacks
        assert sol.sum_rate >= prev - 1e-12
        prev = sol.sum_rate


def test_grid_guard():
    spec = GridSpec(100)
    assert spec.size(2) == 101 ** 4
    with pytest.raises(GridTooLarge):
        GridSpec(100).check(3)
    with pytest.raises(GridTooLarge):
        oracle_search(NetworkConfig([1.0, 2.0, 3.0], [1, 1, 1], 1.0), GridSpec(100))
    GridSpec(100, fixed_powers=(0, 0, 0, 1.0)).check(3)
    with pytest.raises(ValueError):
        GridSpec(1)


def test_fixed_powers_shape_checked():
    cfg = NetworkConfig([10.0], [2.0], 1.0)
    with pytest.raises(ValueError):
        grid_search(cfg, Permutation.identity(1), GridSpec(10, fixed_powers=(1.0,)))


def test_grid_nodes_are_nested():
    a, b = GridSpec(10).nodes, GridSpec(20).nodes
    assert np.allclose(a, b[::2])
