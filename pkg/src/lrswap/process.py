"""Continuous-time simulation of the long-range swap process.

A clock ring moves one particle one step; the encounter that follows is
resolved locally by passing an active token along the line.  A token of
species ``a`` moving in direction ``d`` that meets a resident ``b``:

* jumps over it if ``a < b``,
* swaps with it if ``a > b``: ``a`` settles and ``b`` becomes the token,
  moving in direction ``-d`` from the neighbouring site,
* for ``a == b`` jumps with probability ``mu_a`` when moving right and
  ``lambda_a`` when moving left, and swaps otherwise.

The token settles on the first empty site it reaches.
"""
from __future__ import annotations

import csv
import math
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from gmpy2 import mpq

from .algebra import exact_solve
from .params import ModelParams

__all__ = [
    "Configuration",
    "OracleCapacityError",
    "ResolutionLimitError",
    "ShiftEstimate",
    "Trajectory",
    "TrajectoryEvent",
    "UniformStream",
    "block_configuration",
    "chunk_seeds",
    "estimate_shift_rate",
    "exact_resolution_distribution",
    "resolve_collision",
    "sample_final_configurations",
    "simulate",
    "transition_rate",
    "write_trajectory_csv",
]

MAX_RESOLUTION_STEPS = 10**6
DEFAULT_CHUNK = 20_000


class ResolutionLimitError(RuntimeError):
    pass


class OracleCapacityError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class Configuration:
    positions: tuple
    word: tuple

    def __post_init__(self):
        pos, word = tuple(int(x) for x in self.positions), tuple(int(x) for x in self.word)
        if len(pos) != len(word):
            raise ValueError("positions and word must have the same length")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError(f"positions {pos} are not strictly increasing")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "word", word)

    @property
    def n(self) -> int:
        return len(self.positions)

    @classmethod
    def from_occupancy(cls, occ: dict) -> "Configuration":
        sites = sorted(occ)
        return cls(tuple(sites), tuple(occ[s] for s in sites))

    def occupancy(self) -> dict:
        return dict(zip(self.positions, self.word))

    def shifted(self, dx: int) -> "Configuration":
        return Configuration(tuple(x + dx for x in self.positions), self.word)

    def normalized(self) -> tuple:
        """Translation class: ``(gaps, word)`` with the first particle at 0."""
        x0 = self.positions[0] if self.positions else 0
        return tuple(x - x0 for x in self.positions), self.word

    def render(self) -> tuple:
        return " ".join(map(str, self.positions)), "".join(map(str, self.word))


def block_configuration(word, start: int = 0) -> Configuration:
    """Particles of ``word`` on consecutive sites starting at ``start``."""
    return Configuration(tuple(range(start, start + len(word))), tuple(word))


class UniformStream:
    """Buffered uniforms from a numpy generator; per-call draws are slow."""

    def __init__(self, rng: np.random.Generator, size: int = 8192):
        self.rng = rng
        self.size = size
        self._buf = rng.random(size)
        self._i = 0

    def random(self) -> float:
        if self._i == self.size:
            self._buf = self.rng.random(self.size)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return float(u)


def _jump_probability(a: int, d: int, mu, lam):
    return mu[a - 1] if d > 0 else lam[a - 1]


def _resolve(occ: dict, x: int, d: int, mu, lam, rng) -> dict:
    """Run the resolution loop in place on ``occ``."""
    a = occ.pop(x)
    s = x + d
    for _ in range(MAX_RESOLUTION_STEPS):
        b = occ.get(s)
        if b is None:
            occ[s] = a
            return occ
        if a < b:
            jump = True
        elif a > b:
            jump = False
        else:
            prob = _jump_probability(a, d, mu, lam)
            jump = prob >= 1 or (prob > 0 and rng.random() < prob)
        if jump:
            s += d
        else:
            occ[s] = a
            a = b
            d = -d
            s += d
    raise ResolutionLimitError(f"resolution did not settle within {MAX_RESOLUTION_STEPS} steps")


def resolve_collision(config: Configuration, k: int, direction: int, params: ModelParams, rng) -> Configuration:
    """Move particle ``k`` (0-based, left to right) one step and resolve the encounter."""
    if not 0 <= k < config.n:
        raise IndexError(f"no particle {k} in a configuration of {config.n}")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    mu = [float(m) for m in params.mu]
    lam = [1 - m for m in mu]
    occ = _resolve(config.occupancy(), config.positions[k], direction, mu, lam, rng)
    return Configuration.from_occupancy(occ)


# ---------------------------------------------------------------- exact oracle


def exact_resolution_distribution(
    config: Configuration, k: int, direction: int, params: ModelParams, *, max_states: int = 10**4
) -> dict:
    """Exact outcome law of one resolution, from the absorbing hidden-state chain.

    Hidden states are ``(occupancy, token species, token site, direction)``;
    deterministic moves are followed inline so that only random branch points
    become unknowns of the linear system.
    """
    if not params.exact:
        params = ModelParams(params.N, params.mu, params.p, exact=True)
    mu = list(params.mu)
    lam = [1 - m for m in mu]
    one = mpq(1)

    def settle(occ, a, s, d):
        """Follow deterministic moves; return ('done', cfg) or ('branch', state)."""
        for _ in range(MAX_RESOLUTION_STEPS):
            b = occ.get(s)
            if b is None:
                out = dict(occ)
                out[s] = a
                return "done", Configuration.from_occupancy(out)
            if a == b:
                prob = _jump_probability(a, d, mu, lam)
                if 0 < prob < 1:
                    return "branch", (frozenset(occ.items()), a, s, d)
                jump = prob == 1
            else:
                jump = a < b
            if jump:
                s += d
            else:
                occ = dict(occ)
                occ[s] = a
                a, d = b, -d
                s += d
        raise ResolutionLimitError("deterministic resolution did not settle")

    occ = config.occupancy()
    a = occ.pop(config.positions[k])
    kind, val = settle(occ, a, config.positions[k] + direction, direction)
    if kind == "done":
        return {val: one}

    index = {val: 0}
    order = [val]
    edges = []  # per state: list of (prob, kind, target)
    queue = deque([val])
    while queue:
        state = queue.popleft()
        occ_items, a, s, d = state
        occ = dict(occ_items)
        prob = _jump_probability(a, d, mu, lam)
        out = []
        # jump over
        out.append((prob,) + settle(occ, a, s + d, d))
        # swap
        swapped = dict(occ)
        b = swapped[s]
        swapped[s] = a
        out.append((1 - prob,) + settle(swapped, b, s - d, -d))
        for _, kind, target in out:
            if kind == "branch" and target not in index:
                if len(index) >= max_states:
                    raise OracleCapacityError(f"hidden-state graph exceeds {max_states} states")
                index[target] = len(order)
                order.append(target)
                queue.append(target)
        edges.append(out)

    outcomes = {}
    for out in edges:
        for _, kind, target in out:
            if kind == "done" and target not in outcomes:
                outcomes[target] = len(outcomes)
    T, O = len(order), len(outcomes)
    a_mat = np.full((T, T), mpq(0), dtype=object)
    b_mat = np.full((T, O), mpq(0), dtype=object)
    for i, out in enumerate(edges):
        a_mat[i, i] += one
        for prob, kind, target in out:
            if kind == "branch":
                a_mat[i, index[target]] -= prob
            else:
                b_mat[i, outcomes[target]] += prob
    sol = exact_solve(a_mat, b_mat)
    dist = {cfg: sol[0, j] for cfg, j in outcomes.items() if sol[0, j] != 0}
    return dict(sorted(dist.items()))


# ------------------------------------------------------------------ simulation


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    particle: int
    direction: int
    pre: Configuration
    post: Configuration


@dataclass
class Trajectory:
    initial: Configuration
    final: Configuration
    events: list
    seed: int
    t_max: float


def simulate(initial: Configuration, t_max: float, params: ModelParams, seed: int, *, record: bool = True) -> Trajectory:
    """Gillespie run: every particle carries total rate 1, split ``p`` right and ``q`` left."""
    rng = np.random.default_rng(seed)
    uni = UniformStream(rng)
    mu = [float(m) for m in params.mu]
    lam = [1 - m for m in mu]
    p = float(params.p)
    n = initial.n
    config = initial
    events = []
    t = 0.0
    if n == 0:
        return Trajectory(initial, initial, events, seed, t_max)
    while True:
        t += -math.log1p(-uni.random()) / n
        if t > t_max:
            break
        k = min(int(uni.random() * n), n - 1)
        direction = 1 if uni.random() < p else -1
        occ = _resolve(config.occupancy(), config.positions[k], direction, mu, lam, uni)
        post = Configuration.from_occupancy(occ)
        if record:
            events.append(TrajectoryEvent(t, k, direction, config, post))
        config = post
    return Trajectory(initial, config, events, seed, t_max)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "particle", "direction", "positions", "word"])
        pos, word = traj.initial.render()
        w.writerow([repr(0.0), "", "", pos, word])
        for ev in traj.events:
            pos, word = ev.post.render()
            w.writerow([repr(ev.time), ev.particle, ev.direction, pos, word])


def chunk_seeds(seed: int, trials: int, chunk: int = DEFAULT_CHUNK) -> list:
    """``(seed_sequence, size)`` per chunk; the split depends only on ``seed`` and ``trials``."""
    sizes = [chunk] * (trials // chunk)
    if trials % chunk:
        sizes.append(trials % chunk)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return list(zip(children, sizes))


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass(frozen=True)
class ShiftEstimate:
    n: int
    species: int
    direction: int
    trials: int
    successes: int
    estimate: float
    sigma: float
    ci_low: float
    ci_high: float
    seed: int

    def brackets(self, value) -> bool:
        return self.ci_low <= float(value) <= self.ci_high

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _shift_chunk(job):
    ss, size, n, species, direction, mu, lam = job
    uni = UniformStream(np.random.default_rng(ss))
    word = [species] * n
    start = tuple(range(n))
    target = tuple(x + direction for x in start)
    x = 0 if direction > 0 else n - 1
    hits = 0
    for _ in range(size):
        occ = _resolve(dict(zip(start, word)), x, direction, mu, lam, uni)
        if tuple(sorted(occ)) == target:
            hits += 1
    return hits


def estimate_shift_rate(
    n: int,
    i: int,
    params: ModelParams,
    trials: int,
    seed: int,
    *,
    direction: int = 1,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> ShiftEstimate:
    """Monte Carlo rate of a full shift of ``n`` adjacent species-``i`` particles.

    The end particle facing the move is activated ``trials`` times; the
    success frequency times the clock rate is returned with a Wald interval
    of three standard errors.  Aggregates do not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    mu = [float(m) for m in params.mu]
    lam = [1 - m for m in mu]
    jobs = [(ss, size, n, i, direction, mu, lam) for ss, size in chunk_seeds(seed, trials, chunk)]
    hits = sum(_map(_shift_chunk, jobs, workers))
    rate = float(params.p if direction > 0 else params.q)
    phat = hits / trials
    sigma = rate * math.sqrt(phat * (1 - phat) / trials)
    est = rate * phat
    return ShiftEstimate(n, i, direction, trials, hits, est, sigma, est - 3 * sigma, est + 3 * sigma, seed)


def _final_chunk(job):
    ss, size, positions, word, t, p, mu, lam = job
    rng = np.random.default_rng(ss)
    uni = UniformStream(rng)
    n = len(word)
    counts = Counter()
    events = rng.poisson(n * t, size)
    start = dict(zip(positions, word))
    for m in events:
        occ = dict(start)
        for _ in range(int(m)):
            sites = sorted(occ)
            k = min(int(uni.random() * n), n - 1)
            d = 1 if uni.random() < p else -1
            _resolve(occ, sites[k], d, mu, lam, uni)
        sites = sorted(occ)
        counts[(tuple(sites), tuple(occ[s] for s in sites))] += 1
    return counts


def sample_final_configurations(
    initial: Configuration, t: float, params: ModelParams, samples: int, seed: int, *, workers: int = 1, chunk: int = DEFAULT_CHUNK
) -> Counter:
    """Empirical law of the configuration at time ``t``.

    The total event rate is the constant ``n``, so the number of events up to
    ``t`` is Poisson(``n t``) and the events themselves are independent
    uniform picks; waiting times need not be drawn.
    """
    mu = [float(m) for m in params.mu]
    lam = [1 - m for m in mu]
    jobs = [
        (ss, size, initial.positions, initial.word, t, float(params.p), mu, lam)
        for ss, size in chunk_seeds(seed, samples, chunk)
    ]
    total = Counter()
    for c in _map(_final_chunk, jobs, workers):
        total.update(c)
    return Counter({Configuration(pos, word): v for (pos, word), v in total.items()})


def transition_rate(source: Configuration, target: Configuration, params: ModelParams):
    """Exact rate ``source -> target`` summed over every particle and direction."""
    if not params.exact:
        params = ModelParams(params.N, params.mu, params.p, exact=True)
    total = mpq(0)
    for d, rate in ((1, params.p), (-1, params.q)):
        if not rate:
            continue
        for k in range(source.n):
            total += rate * exact_resolution_distribution(source, k, d, params).get(target, 0)
    return total
