"""Finite-window generators and forward integration of the master equation.

Two independent constructions of the same rate matrix are provided:

* from the microscopic rules, with every clock ring split over the exact
  outcome law of its resolution;
* from the free evolution of non-interacting walkers, with every term that
  puts two particles on one site rewritten through the pair boundary relation
  ``U(x, x) = B U(x-1, x) + B' U(x, x+1)``.

The rate matrix is indexed ``Q[source, target]``.  Transitions to a
configuration outside the window are not stored; their rate shows up as a
row-sum deficit, the leak.  Resolutions that return the starting state are
folded into the diagonal by both builders.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .algebra import all_words, embed, identity, sector_basis
from .local_ops import build_local_pair, closed_inverse_I_minus_X, closed_inverse_I_minus_Y
from .params import ModelParams, render_scalar
from .process import Configuration, exact_resolution_distribution

__all__ = [
    "DistributionGrid",
    "GeneratorSystem",
    "IntegrationError",
    "build_generator_bethe",
    "build_generator_from_rules",
    "build_generator_pair_direct",
    "compare_generators",
    "empirical_distribution",
    "evolve_with_window",
    "integrate",
    "point_mass",
    "poisson_check",
    "total_variation",
    "window_states",
    "write_distribution_csv",
]


class IntegrationError(RuntimeError):
    pass


def window_states(n: int, window: tuple, words) -> list:
    lo, hi = window
    if hi - lo + 1 < n:
        raise ValueError(f"window {window} cannot hold {n} particles")
    return [Configuration(pos, w) for pos in itertools.combinations(range(lo, hi + 1), n) for w in words]


@dataclass
class GeneratorSystem:
    states: list
    window: tuple
    params: ModelParams
    offdiag: dict = field(default_factory=dict)  # (src, tgt) -> rate
    diag: list = field(default_factory=list)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.states)}
        if not self.diag:
            self.diag = [self.params.zero] * len(self.states)

    @property
    def size(self) -> int:
        return len(self.states)

    def add(self, src: int, tgt: int, rate):
        if not rate:
            return
        if src == tgt:
            self.diag[src] += rate
        else:
            self.offdiag[(src, tgt)] = self.offdiag.get((src, tgt), self.params.zero) + rate

    def leak_rates(self) -> list:
        out = [-d for d in self.diag]
        for (i, _), r in self.offdiag.items():
            out[i] -= r
        return out

    def check_invariants(self) -> None:
        if any(r < 0 for r in self.offdiag.values()):
            raise ValueError("negative off-diagonal rate")
        if any(x < 0 for x in self.leak_rates()):
            raise ValueError("positive row sum")

    def to_csr(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for (i, j), r in self.offdiag.items():
            if r:
                rows.append(i)
                cols.append(j)
                vals.append(float(r))
        for i, d in enumerate(self.diag):
            rows.append(i)
            cols.append(i)
            vals.append(float(d))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def norm_inf(self) -> float:
        return float(abs(self.to_csr()).sum(axis=1).max()) if self.size else 0.0


def _words_for(n: int, params: ModelParams, multiset) -> list:
    return sector_basis(multiset) if multiset is not None else all_words(n, params.N)


# ----------------------------------------------------------------- rule-based


def build_generator_from_rules(n: int, window: tuple, params: ModelParams, *, multiset=None) -> GeneratorSystem:
    """Rates ``p``/``q`` per particle, split over exact resolution outcomes."""
    if n > 3:
        raise ValueError("generators are built for n <= 3")
    exact = params if params.exact else ModelParams(params.N, params.mu, params.p, exact=True)
    words = _words_for(n, params, multiset)
    gen = GeneratorSystem(window_states(n, window, words), window, params)
    cache = {}
    rates = ((1, exact.p), (-1, exact.q))
    for src, cfg in enumerate(gen.states):
        gen.diag[src] += -n * params.one
        gaps, word = cfg.normalized()
        x0 = cfg.positions[0]
        for k in range(n):
            for d, rate in rates:
                if not rate:
                    continue
                key = (gaps, word, k, d)
                if key not in cache:
                    cache[key] = exact_resolution_distribution(Configuration(gaps, word), k, d, exact)
                for out, prob in cache[key].items():
                    tgt = gen.index.get(out.shifted(x0))
                    val = rate * prob
                    val = val if params.exact else float(val)
                    if tgt is not None:
                        gen.add(src, tgt, val)
    return gen


# ------------------------------------------------------------------ Bethe side


class _Eliminator:
    """Rewrites coordinate tuples with a coincidence into admissible ones."""

    def __init__(self, n: int, params: ModelParams, basis, route: str):
        if route not in ("X", "Y"):
            raise ValueError("route must be 'X' or 'Y'")
        self.n = n
        self.route = route
        pair = build_local_pair(params)
        N = params.N
        self.eye = identity(basis, N, exact=params.exact)
        self.B = [None] + [embed(pair.B, j, n, basis=basis) for j in range(1, n)]
        self.Bp = [None] + [embed(pair.Bprime, j, n, basis=basis) for j in range(1, n)]
        if n == 3:
            words = list(basis)
            self.inv_x = closed_inverse_I_minus_X(params).restrict(words)
            self.inv_y = closed_inverse_I_minus_Y(params).restrict(words)
        self.cache = {}

    def expand(self, pos: tuple) -> dict:
        """``U(pos) = sum_Y C_Y U(Y)`` over admissible ``Y``."""
        x0 = pos[0]
        rel = tuple(x - x0 for x in pos)
        if rel not in self.cache:
            self.cache[rel] = self._expand(rel)
        return {tuple(y + x0 for y in Y): op for Y, op in self.cache[rel].items()}

    def _expand(self, pos: tuple) -> dict:
        if all(a < b for a, b in zip(pos, pos[1:])):
            return {pos: self.eye}
        if self.n == 2:
            x, y = pos
            if x != y:
                raise ValueError(f"unexpected coordinates {pos}")
            return {(x - 1, x): self.B[1], (x, x + 1): self.Bp[1]}
        x1, x2, x3 = pos
        B1, B2, Bp1, Bp2 = self.B[1], self.B[2], self.Bp[1], self.Bp[2]
        if x1 == x2 and x3 > x2 + 1:
            return {(x1 - 1, x1, x3): B1, (x1, x1 + 1, x3): Bp1}
        if x2 == x3 and x1 < x2 - 1:
            return {(x1, x2 - 1, x2): B2, (x1, x2, x2 + 1): Bp2}
        if x1 == x2 and x3 == x2 + 1:
            v1, _ = self._triple(x1)
            return v1
        if x2 == x3 and x1 == x2 - 1:
            _, v2 = self._triple(x1)
            return v2
        raise ValueError(f"unexpected coordinates {pos}")

    def _triple(self, y: int) -> tuple:
        """``U(y, y, y+1)`` and ``U(y, y+1, y+1)`` through one of the two eliminations."""
        left, right = (y - 1, y, y + 1), (y, y + 1, y + 2)
        B1, B2, Bp1, Bp2 = self.B[1], self.B[2], self.Bp[1], self.Bp[2]
        if self.route == "X":
            v2 = {left: self.inv_x @ B2 @ B1, right: self.inv_x @ Bp2}
            v1 = {left: B1 + Bp1 @ v2[left], right: Bp1 @ v2[right]}
        else:
            v1 = {left: self.inv_y @ B1, right: self.inv_y @ Bp1 @ Bp2}
            v2 = {left: B2 @ v1[left], right: B2 @ v1[right] + Bp2}
        return v1, v2


def build_generator_bethe(
    n: int, window: tuple, params: ModelParams, *, route: str = "X", multiset=None
) -> GeneratorSystem:
    """Free walkers plus boundary elimination, on the same states as the rule builder."""
    if n not in (1, 2, 3):
        raise ValueError("the boundary elimination builder covers n <= 3")
    words = _words_for(n, params, multiset)
    gen = GeneratorSystem(window_states(n, window, words), window, params)
    elim = _Eliminator(n, params, words, route) if n > 1 else None
    shifts = [(-1, params.p), (1, params.q)]
    for tgt_pos in sorted({s.positions for s in gen.states}):
        terms = {}
        for i in range(n):
            for dx, c in shifts:
                if not c:
                    continue
                pos = list(tgt_pos)
                pos[i] += dx
                pos = tuple(pos)
                expansion = {pos: None} if elim is None else elim.expand(pos)
                for src_pos, op in expansion.items():
                    terms.setdefault(src_pos, []).append((c, op))
        for src_pos, pieces in terms.items():
            for c, op in pieces:
                if op is None:
                    for w in words:
                        s = gen.index.get(Configuration(src_pos, w))
                        if s is not None:
                            gen.add(s, gen.index[Configuration(tgt_pos, w)], c)
                    continue
                for (pi, nu, val) in op.nonzeros():
                    s = gen.index.get(Configuration(src_pos, nu))
                    if s is not None:
                        gen.add(s, gen.index[Configuration(tgt_pos, pi)], c * val)
    for i in range(gen.size):
        gen.diag[i] += -n * params.one
    return gen


def build_generator_pair_direct(window: tuple, params: ModelParams, *, multiset=None) -> GeneratorSystem:
    """Two-particle generator from the adjacent-pair equation written out directly.

    Uses the separate rightward and leftward interaction matrices with the
    identification ``M^r = N^l = B`` and ``N^r = M^l = B'``, without any
    coinciding coordinates.
    """
    words = _words_for(2, params, multiset)
    gen = GeneratorSystem(window_states(2, window, words), window, params)
    pair = build_local_pair(params)
    Mr, Nr = embed(pair.B, 1, 2, basis=words), embed(pair.Bprime, 1, 2, basis=words)
    Ml, Nl = Nr, Mr
    p, q = params.p, params.q

    def add_op(src_pos, tgt_pos, c, op):
        for pi, nu, val in op.nonzeros():
            s = gen.index.get(Configuration(src_pos, nu))
            if s is not None:
                gen.add(s, gen.index[Configuration(tgt_pos, pi)], c * val)

    def add_free(src_pos, tgt_pos, c):
        for w in words:
            s = gen.index.get(Configuration(src_pos, w))
            if s is not None:
                gen.add(s, gen.index[Configuration(tgt_pos, w)], c)

    for tgt_pos in sorted({s.positions for s in gen.states}):
        x1, x2 = tgt_pos
        if x2 > x1 + 1:
            for src, c in (((x1 - 1, x2), p), ((x1, x2 - 1), p), ((x1 + 1, x2), q), ((x1, x2 + 1), q)):
                add_free(src, tgt_pos, c)
        else:
            x = x1
            add_free((x - 1, x + 1), tgt_pos, p)
            add_op((x - 1, x), tgt_pos, p, Mr)
            add_op((x, x + 1), tgt_pos, p, Nr)
            add_free((x, x + 2), tgt_pos, q)
            add_op((x + 1, x + 2), tgt_pos, q, Ml)
            add_op((x, x + 1), tgt_pos, q, Nl)
    for i in range(gen.size):
        gen.diag[i] += -2 * params.one
    return gen


def compare_generators(a: GeneratorSystem, b: GeneratorSystem, *, limit: int = 20) -> dict:
    """Entrywise comparison, exact for rational generators."""
    if a.states != b.states:
        return {"equal": False, "reason": "state lists differ", "mismatches": []}
    mismatches = []
    zero = a.params.zero
    for key in sorted(set(a.offdiag) | set(b.offdiag)):
        va, vb = a.offdiag.get(key, zero), b.offdiag.get(key, zero)
        if va != vb:
            mismatches.append(_mismatch(a, key, va, vb))
    for i, (va, vb) in enumerate(zip(a.diag, b.diag)):
        if va != vb:
            mismatches.append(_mismatch(a, (i, i), va, vb))
    return {"equal": not mismatches, "states": a.size, "mismatch_count": len(mismatches), "mismatches": mismatches[:limit]}


def _mismatch(gen, key, va, vb) -> dict:
    s, t = key
    return {
        "source": list(gen.states[s].render()),
        "target": list(gen.states[t].render()),
        "a": render_scalar(va),
        "b": render_scalar(vb),
    }


# ------------------------------------------------------------------ integration


@dataclass
class DistributionGrid:
    states: list
    mass: np.ndarray
    t: float = 0.0
    leaked: float = 0.0

    @property
    def total(self) -> float:
        return float(self.mass.sum()) + self.leaked

    def as_dict(self) -> dict:
        return {s: float(m) for s, m in zip(self.states, self.mass) if m}


def point_mass(gen: GeneratorSystem, config: Configuration) -> DistributionGrid:
    mass = np.zeros(gen.size)
    mass[gen.index[config]] = 1.0
    return DistributionGrid(gen.states, mass)


def integrate(
    gen: GeneratorSystem, initial: DistributionGrid, t: float, dt: float | None = None, *, tol: float = 1e-9
) -> DistributionGrid:
    """Classical RK4 for ``dP/dt = P Q`` together with the leaked mass."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return DistributionGrid(initial.states, initial.mass.copy(), initial.t, initial.leaked)
    qt = gen.to_csr().T.tocsr()
    leak = np.array([float(x) for x in gen.leak_rates()])
    bound = 0.01 / max(gen.norm_inf(), 1e-300)
    dt = bound if dt is None else dt
    if dt > bound * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability bound {bound}")
    steps = max(1, math.ceil(t / dt - 1e-12))
    h = t / steps

    def f(pv):
        return qt @ pv

    p_vec = initial.mass.astype(float).copy()
    leaked = initial.leaked
    for _ in range(steps):
        k1 = f(p_vec)
        k2 = f(p_vec + 0.5 * h * k1)
        k3 = f(p_vec + 0.5 * h * k2)
        k4 = f(p_vec + h * k3)
        # leak obeys dL/dt = P . leak, integrated with the same stages
        leaked += h / 6 * (leak @ p_vec + 2 * leak @ (p_vec + 0.5 * h * k1) + 2 * leak @ (p_vec + 0.5 * h * k2) + leak @ (p_vec + h * k3))
        p_vec = p_vec + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = DistributionGrid(initial.states, p_vec, initial.t + t, leaked)
    if abs(out.total - initial.total) > tol:
        raise IntegrationError(f"mass not conserved: total drifted by {out.total - initial.total:.3e}")
    return out


def poisson_check(t: float = 1.0, half_width: int = 30, params: ModelParams | None = None) -> dict:
    """Single walker with ``p = 1``: the displacement law is Poisson(``t``)."""
    params = params or ModelParams(1, (0.5,), 1.0, exact=False)
    gen = build_generator_from_rules(1, (-half_width, half_width), params)
    start = Configuration((0,), (1,))
    dist = integrate(gen, point_mass(gen, start), t)
    err = 0.0
    for s, m in zip(dist.states, dist.mass):
        k = s.positions[0]
        want = poisson.pmf(k, t) if k >= 0 else 0.0
        err = max(err, abs(m - want))
    return {"t": t, "max_error": err, "leaked": dist.leaked}


# ------------------------------------------------------------------ comparison


def empirical_distribution(counts) -> dict:
    total = sum(counts.values())
    return {cfg: c / total for cfg, c in counts.items()}


def total_variation(ode: DistributionGrid, empirical: dict) -> float:
    """Half the L1 distance; leaked ODE mass counts as a separate outcome."""
    ode_mass = ode.as_dict()
    inside = set(ode.states)
    tv = 0.0
    for cfg in inside:
        tv += abs(ode_mass.get(cfg, 0.0) - empirical.get(cfg, 0.0))
    outside = sum(v for c, v in empirical.items() if c not in inside)
    tv += abs(ode.leaked - outside)
    return 0.5 * tv


def write_distribution_csv(dist: DistributionGrid, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "positions", "word", "mass"])
        for i, (s, m) in enumerate(zip(dist.states, dist.mass)):
            pos, word = s.render()
            w.writerow([i, pos, word, repr(float(m))])



def evolve_with_window(
    initial: Configuration,
    t: float,
    params: ModelParams,
    *,
    margin: int = 8,
    max_leak: float = 1e-8,
    builder: str = "rules",
    max_margin: int = 60,
) -> tuple:
    """Integrate from a point mass, widening the window until the leak is below ``max_leak``.

    Only the species sector of the initial word is kept.  Returns the
    generator and the distribution at time ``t``.
    """
    fparams = params.to_float() if params.exact else params
    multiset = tuple(sorted(initial.word))
    while True:
        window = (initial.positions[0] - margin, initial.positions[-1] + margin)
        if builder == "rules":
            gen = build_generator_from_rules(initial.n, window, fparams, multiset=multiset)
        else:
            gen = build_generator_bethe(initial.n, window, fparams, multiset=multiset)
        dist = integrate(gen, point_mass(gen, initial), t)
        if dist.leaked < max_leak:
            return gen, dist
        if margin >= max_margin:
            raise IntegrationError(f"leak {dist.leaked:.2e} still above {max_leak} with margin {margin}")
        margin += 4
