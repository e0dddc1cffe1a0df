"""Acceptance gate: one test per criterion, each timed against its budget.

A pass/fail line per criterion is printed in the terminal summary.
"""
import itertools
import time
from contextlib import contextmanager

import numpy as np
from gmpy2 import mpq

from lrswap.algebra import sector_blocks, sector_basis
from lrswap.local_ops import verify_structure_lemmas
from lrswap.master import (
    build_generator_bethe,
    build_generator_from_rules,
    compare_generators,
    empirical_distribution,
    evolve_with_window,
    total_variation,
)
from lrswap.params import ModelParams
from lrswap.process import block_configuration, estimate_shift_rate, sample_final_configurations, transition_rate
from lrswap.reduction import (
    binary_chain_inverse,
    chain,
    check_block_form,
    effective_shift_rate,
    eliminate_block,
    sector_invertibility_scan,
    transition_coefficient,
)
from lrswap.scattering import verify_ybe_batch

from conftest import random_mu

SEED = 20260418


@contextmanager
def criterion(log, number, title, budget):
    start = time.perf_counter()
    status, note = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed < budget:
            status = "PASS"
        else:
            note = " (over budget)"
    finally:
        elapsed = time.perf_counter() - start
        log.append(f"criterion {number} [{title}]: {status} in {elapsed:.1f}s, budget {budget:.0f}s{note}")
    assert elapsed < budget, f"criterion {number} took {elapsed:.1f}s, budget {budget}s"


def test_criterion_1_operator_identities(acceptance_log):
    rng = np.random.default_rng(SEED)
    with criterion(acceptance_log, 1, "local operator identities", 10):
        for _ in range(20):
            for N in (1, 2, 3):
                report = verify_structure_lemmas(ModelParams(N, random_mu(rng, N)))
                assert report["passed"], [c["claim"] for c in report["checks"] if not c["passed"]]


def test_criterion_2_binary_regime(acceptance_log):
    with criterion(acceptance_log, 2, "binary regime", 30):
        for N in (1, 2, 3):
            for mu in itertools.product((0, 1), repeat=N):
                params = ModelParams(N, mu)
                for n in (3, 4):
                    ch = chain(n, n - 2, params)
                    assert ch.fully_invertible
                    assert binary_chain_inverse(ch)["passed"]
                    for ms in sector_blocks(n, N).blocks:
                        assert sector_invertibility_scan(ms, params, radii=False).all_invertible


def test_criterion_3_verified_sectors(acceptance_log):
    rng = np.random.default_rng(SEED + 3)
    with criterion(acceptance_log, 3, "verified sector invertibility and block form", 60):
        for _ in range(4):
            params = ModelParams(5, random_mu(rng, 5))
            for n in (3, 4, 5):
                sectors = []
                for i in range(1, 6):
                    sectors.append((i,) * n)
                    for j in range(1, 6):
                        if j != i:
                            sectors.append((j,) + (i,) * (n - 1))
                sectors.append(tuple(range(1, n + 1)))
                sectors.append(tuple(range(5, 5 - n, -1)))
                for ms in sectors:
                    assert sector_invertibility_scan(ms, params, radii=False).all_invertible, ms
            two = ModelParams(2, params.mu[:2])
            for n in (3, 4, 5):
                for k in range(1, n - 1):
                    assert check_block_form(k, n, two)["passed"], (n, k)


def test_criterion_4_spectral_radius_below_one(acceptance_log):
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    with criterion(acceptance_log, 4, "spectral radius below one, N = n = 4", 300):
        for _ in range(100):
            params = ModelParams(4, tuple(rng.uniform(0.0, 1.0, 4)), exact=False)
            for ms in sector_blocks(4, 4).blocks:
                for row in sector_invertibility_scan(ms, params).rows:
                    worst = max(worst, row["spectral_radius"])
        assert worst < 1 - 1e-6, worst


def test_criterion_5_yang_baxter(acceptance_log):
    rng = np.random.default_rng(SEED + 5)
    configs = [(0, 1, mpq(1, 2)), (0, 0, 0), (1, 1, 1), (1, 0, mpq(1, 3)), (mpq(1, 3), mpq(1, 2), mpq(4, 5))]
    configs += [random_mu(rng, 3) for _ in range(6)]
    with criterion(acceptance_log, 5, "Yang-Baxter identity", 120):
        for k, mu in enumerate(configs):
            rep = verify_ybe_batch(ModelParams(3, mu), 50, seed=SEED + k)
            assert rep.sample_size >= 50
            assert rep.passed, mu


def test_criterion_6_rate_formulas(acceptance_log):
    rng = np.random.default_rng(SEED + 6)
    with criterion(acceptance_log, 6, "rate formulas", 30):
        for _ in range(5):
            params = ModelParams(3, random_mu(rng, 3), mpq(int(rng.integers(1, 8)), 8))
            p = params.p
            for i in (1, 2, 3):
                mu, lam = params.mu_of(i), params.lam_of(i)
                assert transition_coefficient((i, i, i), (i, i, i), 3, params) == p * mu**2 / (1 - mu * lam)
                for j in range(i + 1, 4):
                    assert transition_coefficient((i, j, i), (i, i, j), 3, params) == p * mu
                for n in (2, 3, 4, 5):
                    word = (i,) * n
                    res = eliminate_block(n - 1, 1, n, params, basis=sector_basis(word))
                    assert effective_shift_rate(n, i, params) == p * res.L[n - 1].entry(word, word)
            # bystanders of other species leave the rate unchanged
            fig = ModelParams(4, params.mu + (mpq(1, 2),), params.p)
            scenarios = [
                (block_configuration((2, 2, 4, 3, 2, 2)), block_configuration((2, 4, 3, 2, 2, 2), 1)),
                (block_configuration((2, 2, 2, 2)), block_configuration((2, 2, 2, 2), 1)),
                (block_configuration((2, 2, 4, 3, 2, 2, 1)), block_configuration((1, 2, 4, 3, 2, 2, 2))),
            ]
            want = effective_shift_rate(4, 2, fig)
            assert all(transition_rate(a, b, fig) == want for a, b in scenarios)
            assert transition_coefficient((2, 4, 3, 2, 2, 2), (2, 2, 4, 3, 2, 2), 6, fig) == want


def test_criterion_7_simulator_matches_closed_form(acceptance_log):
    cases = [(2, "3/10", mpq(3, 10)), (3, "1/2", mpq(1, 3)), (4, "1/2", mpq(1, 4))]
    with criterion(acceptance_log, 7, "simulated shift frequency", 120):
        for n, mu, target in cases:
            params = ModelParams(1, (mu,))
            assert effective_shift_rate(n, 1, params) == target
            est = estimate_shift_rate(n, 1, params, 10**6, seed=SEED + n)
            assert est.brackets(target), (n, est.estimate, est.ci_low, est.ci_high)


def test_criterion_8_two_particle_reducibility(acceptance_log):
    rng = np.random.default_rng(SEED + 8)
    with criterion(acceptance_log, 8, "generator equivalence and forward equation", 300):
        for _ in range(20):
            N = int(rng.integers(1, 4))
            params = ModelParams(N, random_mu(rng, N), mpq(int(rng.integers(0, 9)), 8))
            for n in (2, 3):
                window = (0, n + 3)
                rules = build_generator_from_rules(n, window, params)
                bx = build_generator_bethe(n, window, params, route="X")
                assert compare_generators(rules, bx)["equal"]
                if n == 3:
                    assert compare_generators(bx, build_generator_bethe(n, window, params, route="Y"))["equal"]
        runs = [
            (block_configuration((1, 2)), ModelParams(2, (0.3, 0.7), 0.7, exact=False)),
            (block_configuration((1, 1, 2)), ModelParams(2, (0.5, 0.25), 0.6, exact=False)),
        ]
        for k, (init, params) in enumerate(runs):
            _, dist = evolve_with_window(init, 1.0, params)
            assert dist.leaked < 1e-8
            counts = sample_final_configurations(init, 1.0, params, 10**6, SEED + k)
            tv = total_variation(dist, empirical_distribution(counts))
            assert tv < 0.01, tv
