"""Two-particle scattering matrix and the Yang-Baxter check.

``build_R(N, xa, xb, params)`` is the matrix usually written ``R_{ba}``: the
diagonal entry for ``ii`` is

    -(mu_i + lam_i xa xb - xa) xb / ((mu_i + lam_i xa xb - xb) xa)

and for ``i < j`` the only other nonzeros are ``(ij, ji) = xb`` and
``(ji, ij) = 1 / xa``.  The identity is tested by exact evaluation at many
random rational points; both sides are rational functions of bounded degree,
so agreement on a large sample is strong evidence of the identity itself.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq

from .algebra import SpeciesOperator, all_words, identity, kron, sector_blocks
from .params import ModelParams, rational, render_scalar

__all__ = [
    "PoleError",
    "SpectralPoint",
    "YBEReport",
    "build_R",
    "pole_denominator",
    "sample_spectral_points",
    "verify_ybe",
    "verify_ybe_batch",
]

log = logging.getLogger(__name__)


class PoleError(ZeroDivisionError):
    """A spectral point hits a pole of the scattering matrix."""

    def __init__(self, species: int, xa, xb, value):
        self.species = species
        self.value = value
        super().__init__(
            f"pole for species {species} at (xi_a, xi_b) = ({xa}, {xb}): "
            f"mu + lam*xi_a*xi_b - xi_b = {value}"
        )


def pole_denominator(species: int, xa, xb, params: ModelParams):
    return params.mu_of(species) + params.lam_of(species) * xa * xb - xb


def _guard(xa, xb, params: ModelParams):
    if xa == 0 or xb == 0:
        raise PoleError(0, xa, xb, 0)
    for i in range(1, params.N + 1):
        d = pole_denominator(i, xa, xb, params)
        if d == 0:
            raise PoleError(i, xa, xb, d)


@dataclass(frozen=True)
class SpectralPoint:
    xi_alpha: object
    xi_beta: object
    xi_gamma: object

    def __post_init__(self):
        vals = tuple(rational(v) for v in (self.xi_alpha, self.xi_beta, self.xi_gamma))
        if any(v == 0 for v in vals):
            raise ValueError("spectral parameters must be nonzero")
        if len(set(vals)) != 3:
            raise ValueError("spectral parameters must be pairwise distinct")
        for name, v in zip(("xi_alpha", "xi_beta", "xi_gamma"), vals):
            object.__setattr__(self, name, v)

    def values(self) -> tuple:
        return self.xi_alpha, self.xi_beta, self.xi_gamma

    def check_poles(self, params: ModelParams, *, all_pairs: bool = False):
        """Raise :class:`PoleError` if a needed ``R`` is undefined.

        By default only the ordered pairs ``(alpha, beta)``, ``(alpha, gamma)``
        and ``(beta, gamma)`` entering the identity are checked; ``all_pairs``
        also checks the reversed ones.
        """
        a, b, c = self.values()
        pairs = [(a, b), (a, c), (b, c)]
        if all_pairs:
            pairs += [(b, a), (c, a), (c, b)]
        for x, y in pairs:
            _guard(x, y, params)

    def as_list(self) -> list:
        return [str(v) for v in self.values()]


def build_R(N: int, xi_a, xi_b, params: ModelParams) -> SpeciesOperator:
    if N != params.N:
        raise ValueError(f"N={N} does not match params.N={params.N}")
    if not params.exact:
        raise ValueError("the scattering matrix is built in exact mode only")
    xa, xb = rational(xi_a), rational(xi_b)
    _guard(xa, xb, params)
    words = all_words(2, N)
    index = {w: k for k, w in enumerate(words)}
    mat = np.full((N * N, N * N), mpq(0), dtype=object)
    for i in range(1, N + 1):
        mu, lam = params.mu_of(i), params.lam_of(i)
        num = (mu + lam * xa * xb - xa) * xb
        den = (mu + lam * xa * xb - xb) * xa
        k = index[(i, i)]
        mat[k, k] = -num / den
        for j in range(i + 1, N + 1):
            mat[index[(i, j)], index[(j, i)]] = xb
            mat[index[(j, i)], index[(i, j)]] = 1 / xa
    return SpeciesOperator(mat, words, N, _trusted=True)


def _ybe_sides(params: ModelParams, pt: SpectralPoint) -> tuple:
    a, b, c = pt.values()
    N = params.N
    eye = identity(1, N)
    r_ba = build_R(N, a, b, params)
    r_ca = build_R(N, a, c, params)
    r_cb = build_R(N, b, c, params)
    lhs = kron(r_cb, eye) @ kron(eye, r_ca) @ kron(r_ba, eye)
    rhs = kron(eye, r_ba) @ kron(r_ca, eye) @ kron(eye, r_cb)
    return lhs, rhs


def verify_ybe(params: ModelParams, pt: SpectralPoint, *, blockwise: bool = True) -> dict:
    """Compare both sides of the three-site Yang-Baxter identity at one point.

    Returns the full-matrix maximal deviation and, with ``blockwise``, the
    deviation on every species sector together with a flag telling whether
    each side maps the sector into itself.
    """
    pt.check_poles(params)
    lhs, rhs = _ybe_sides(params, pt)
    dev = lhs.max_abs_difference(rhs)
    out = {"point": pt.as_list(), "deviation": render_scalar(dev), "exact_zero": dev == 0}
    if blockwise:
        blocks = []
        sectors = sector_blocks(3, params.N)
        for ms in sectors.blocks:
            words = sectors.words(ms)
            invariant = not lhs.leaks_outside(words) and not rhs.leaks_outside(words)
            d = lhs.restrict(words).max_abs_difference(rhs.restrict(words))
            blocks.append({"multiset": list(ms), "invariant": invariant, "deviation": render_scalar(d), "exact_zero": d == 0})
        out["blocks"] = blocks
        out["blocks_agree"] = all(bk["exact_zero"] and bk["invariant"] for bk in blocks) == (dev == 0)
    return out


def _random_rational(rng: np.random.Generator, max_num: int, max_den: int):
    num = int(rng.integers(-max_num, max_num + 1))
    den = int(rng.integers(1, max_den + 1))
    return mpq(num, den)


def sample_spectral_points(
    params: ModelParams, count: int, seed: int, *, max_num: int = 12, max_den: int = 6, forced=None
) -> tuple:
    """Draw ``count`` admissible spectral points from small-integer rationals.

    Candidates that are zero, coincide, or hit a pole are rejected and the
    rejection is recorded.  ``forced`` candidates are tried before random ones.
    Returns ``(points, rejections)``.
    """
    rng = np.random.default_rng(seed)
    points, rejections = [], []
    queue = list(forced or [])
    attempts = 0
    while len(points) < count:
        attempts += 1
        if attempts > 100 * count + 1000:
            raise RuntimeError("could not find enough admissible spectral points")
        raw = queue.pop(0) if queue else tuple(_random_rational(rng, max_num, max_den) for _ in range(3))
        try:
            pt = SpectralPoint(*raw)
            pt.check_poles(params)
        except (ValueError, PoleError) as exc:
            rejections.append({"candidate": [str(rational(v)) for v in raw], "reason": str(exc)})
            log.info("rejected spectral point %s: %s", raw, exc)
            continue
        if pt in points:
            continue
        points.append(pt)
    return points, rejections


def _verify_job(args):
    params, pt, blockwise = args
    return verify_ybe(params, pt, blockwise=blockwise)


@dataclass
class YBEReport:
    params: dict
    seed: int
    sample_size: int
    results: list
    rejections: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["exact_zero"] and r.get("blocks_agree", True) for r in self.results)

    def as_dict(self) -> dict:
        return {
            "params": self.params,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "passed": self.passed,
            "rejections": self.rejections,
            "results": self.results,
        }


def verify_ybe_batch(
    params: ModelParams, count: int = 50, seed: int = 0, *, blockwise: bool = True, workers: int = 1, forced=None
) -> YBEReport:
    points, rejections = sample_spectral_points(params, count, seed, forced=forced)
    jobs = [(params, pt, blockwise) for pt in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_verify_job, jobs))
    else:
        results = [_verify_job(j) for j in jobs]
    return YBEReport(params.as_dict(), seed, len(points), results, rejections)
