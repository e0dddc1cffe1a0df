import csv
import math
from collections import Counter

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from lrswap.params import ModelParams
from lrswap.process import (
    Configuration,
    OracleCapacityError,
    UniformStream,
    block_configuration,
    estimate_shift_rate,
    exact_resolution_distribution,
    resolve_collision,
    sample_final_configurations,
    simulate,
    transition_rate,
    write_trajectory_csv,
)


def stream(seed=0):
    return UniformStream(np.random.default_rng(seed))


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration((0, 0), (1, 1))
    with pytest.raises(ValueError):
        Configuration((0, 1), (1,))


def test_stronger_particle_jumps_over():
    p = ModelParams(2, ("1/3", "2/5"))
    out = resolve_collision(Configuration((0, 1), (1, 2)), 0, 1, p, stream())
    assert out == Configuration((1, 2), (2, 1))


def test_weaker_particle_swaps():
    p = ModelParams(2, ("1/3", "2/5"))
    out = resolve_collision(Configuration((0, 1), (2, 1)), 0, 1, p, stream())
    assert out == Configuration((0, 1), (1, 2))


def test_drop_push_limit_double_jump():
    p = ModelParams(1, (1,))
    out = resolve_collision(block_configuration((1, 1, 1)), 0, 1, p, stream())
    assert out.positions == (1, 2, 3)


def test_exact_distribution_three_same_species():
    dist = exact_resolution_distribution(block_configuration((1, 1, 1)), 0, 1, ModelParams(1, ("1/2",)))
    assert dist == {block_configuration((1, 1, 1), 1): mpq(1, 3), block_configuration((1, 1, 1)): mpq(2, 3)}


def test_exact_distribution_pair_then_weaker():
    p = ModelParams(2, ("1/3", "2/5"))
    dist = exact_resolution_distribution(block_configuration((1, 1, 2)), 0, 1, p)
    assert dist[block_configuration((1, 2, 1), 1)] == mpq(1, 3)
    assert dist[block_configuration((1, 1, 2))] == mpq(2, 3)


def test_exact_distribution_single_particle():
    dist = exact_resolution_distribution(Configuration((4,), (1,)), 0, -1, ModelParams(1, ("1/2",)))
    assert dist == {Configuration((3,), (1,)): 1}


def test_leftward_same_species_rate():
    p = ModelParams(1, ("1/3",))
    dist = exact_resolution_distribution(block_configuration((1, 1, 1)), 2, -1, p)
    lam = mpq(2, 3)
    assert dist[block_configuration((1, 1, 1), -1)] == lam**2 / (1 - lam * (1 - lam))


def test_oracle_capacity_error():
    p = ModelParams(1, ("1/2",))
    with pytest.raises(OracleCapacityError):
        exact_resolution_distribution(block_configuration((1,) * 6), 0, 1, p, max_states=2)


def test_context_independence_of_bystanders():
    p = ModelParams(4, ("1/3", "2/5", "1/7", "3/4"), "5/6")
    pairs = [
        (block_configuration((2, 2, 4, 3, 2, 2)), block_configuration((2, 4, 3, 2, 2, 2), 1)),
        (block_configuration((2, 2, 2, 2)), block_configuration((2, 2, 2, 2), 1)),
        (block_configuration((2, 2, 4, 3, 2, 2, 1)), block_configuration((1, 2, 4, 3, 2, 2, 2))),
    ]
    rates = {transition_rate(a, b, p) for a, b in pairs}
    assert rates == {mpq(5, 6) * mpq(2, 5) ** 3 / (mpq(8, 125) + mpq(12, 125) + mpq(18, 125) + mpq(27, 125))}


BATTERY = [
    (block_configuration((1, 1, 1)), 0, 1),
    (block_configuration((2, 1, 2)), 0, 1),
    (block_configuration((1, 1, 2, 1)), 3, -1),
    (Configuration((0, 1, 3), (3, 3, 1)), 1, -1),
    (block_configuration((2, 2, 2, 1)), 0, 1),
]


@pytest.mark.parametrize("cfg, k, d", BATTERY)
def test_sampled_resolution_matches_exact_law(cfg, k, d):
    p = ModelParams(3, ("1/3", "3/5", "1/4"))
    exact = exact_resolution_distribution(cfg, k, d, p)
    u = stream(17)
    draws = 200_000
    counts = Counter(resolve_collision(cfg, k, d, p, u) for _ in range(draws))
    assert set(counts) <= set(exact)
    for out, prob in exact.items():
        pr = float(prob)
        sigma = math.sqrt(pr * (1 - pr) / draws)
        assert abs(counts[out] / draws - pr) <= 4 * sigma + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=1, max_size=5),
    st.lists(st.integers(1, 3), min_size=5, max_size=5),
    st.data(),
)
def test_resolution_preserves_species_and_admissibility(word, gaps, data):
    positions = np.cumsum(gaps[: len(word)]).tolist()
    cfg = Configuration(tuple(positions), tuple(word))
    k = data.draw(st.integers(0, len(word) - 1))
    d = data.draw(st.sampled_from([1, -1]))
    p = ModelParams(3, ("1/3", "1/2", "4/5"))
    out = resolve_collision(cfg, k, d, p, stream(k))
    assert sorted(out.word) == sorted(cfg.word)
    assert all(a < b for a, b in zip(out.positions, out.positions[1:]))
    dist = exact_resolution_distribution(cfg, k, d, p)
    assert sum(dist.values()) == 1
    assert out in dist


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=5), st.tuples(*(st.sampled_from([0, 1]),) * 3), st.data())
def test_binary_regime_is_deterministic(word, mu, data):
    p = ModelParams(3, mu)
    cfg = block_configuration(word)
    k = data.draw(st.integers(0, len(word) - 1))
    d = data.draw(st.sampled_from([1, -1]))
    outs = {resolve_collision(cfg, k, d, p, stream(s)) for s in range(5)}
    assert len(outs) == 1
    assert len(exact_resolution_distribution(cfg, k, d, p)) == 1


def test_simulation_is_reproducible():
    p = ModelParams(2, ("1/3", "2/5"), "2/3")
    a = simulate(block_configuration((1, 2, 1)), 5.0, p, 42)
    b = simulate(block_configuration((1, 2, 1)), 5.0, p, 42)
    assert a.events == b.events and a.final == b.final
    times = [e.time for e in a.events]
    assert all(s < t for s, t in zip(times, times[1:]))


def test_no_leftward_events_when_p_is_one():
    traj = simulate(block_configuration((1, 2, 1)), 20.0, ModelParams(2, ("1/3", "2/5")), 3)
    assert traj.events and all(e.direction == 1 for e in traj.events)


def test_single_particle_displacement_is_poisson():
    p = ModelParams(1, ("1/2",))
    t, runs = 3.0, 100_000
    rng = np.random.default_rng(8)
    seeds = rng.integers(0, 2**63, runs)
    disp = np.array([simulate(Configuration((0,), (1,)), t, p, int(s), record=False).final.positions[0] for s in seeds[:20_000]])
    assert abs(disp.mean() - t) <= 3 * math.sqrt(t / len(disp))
    # the fast sampler gives the same law
    counts = sample_final_configurations(Configuration((0,), (1,)), t, p, runs, 9)
    mean = sum(c.positions[0] * v for c, v in counts.items()) / runs
    assert abs(mean - t) <= 3 * math.sqrt(t / runs)


def test_trajectory_csv(tmp_path):
    traj = simulate(block_configuration((1, 2)), 2.0, ModelParams(2, ("1/3", "2/5"), "1/2"), 1)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time", "particle", "direction", "positions", "word"]
    assert len(rows) == len(traj.events) + 2


@pytest.mark.parametrize("n, mu, target", [(2, 0.3, 0.3), (3, 0.5, 1 / 3)])
def test_shift_estimate_brackets_target(n, mu, target):
    est = estimate_shift_rate(n, 1, ModelParams(1, (mu,)), 100_000, seed=4)
    assert est.brackets(target)


def test_drop_push_shift_has_zero_variance():
    est = estimate_shift_rate(4, 1, ModelParams(1, (1,)), 10_000, seed=4)
    assert est.estimate == 1.0 and est.ci_low == est.ci_high == 1.0


def test_parallel_and_sequential_aggregates_agree():
    p = ModelParams(1, ("1/2",))
    a = estimate_shift_rate(3, 1, p, 60_000, seed=5, workers=1, chunk=10_000)
    b = estimate_shift_rate(3, 1, p, 60_000, seed=5, workers=3, chunk=10_000)
    assert a == b
