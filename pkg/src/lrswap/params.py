"""Model parameters and scalar coercion helpers."""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Rational

from gmpy2 import mpq

__all__ = ["MPQ", "ModelParams", "rational", "render_scalar"]

MPQ = type(mpq(0))


def rational(x) -> mpq:
    """Coerce ``x`` to an exact rational.

    Strings such as ``"1/3"`` or ``"0.3"`` are parsed literally, and floats are
    read through their shortest decimal repr, so ``0.3`` becomes ``3/10``.
    """
    if isinstance(x, MPQ):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not accepted as rationals")
    if isinstance(x, int):
        return mpq(x)
    if isinstance(x, Rational):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, float):
        return mpq(repr(x))
    if isinstance(x, str):
        return mpq(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _as_float(x) -> float:
    return x if isinstance(x, float) else float(rational(x))


def render_scalar(x) -> str:
    """Render a scalar for CSV/JSON output: ``a/b`` for rationals, repr for floats."""
    if isinstance(x, MPQ):
        return str(x)
    return repr(float(x))


@dataclass(frozen=True)
class ModelParams:
    """Species count, per-species interpolation parameters and rightward rate.

    ``mu[i - 1]`` is the probability that a rightward same-species encounter of
    species ``i`` resolves as a jump-over.  ``p`` is the rightward clock rate and
    ``q = 1 - p`` the leftward one.  With ``exact=True`` every scalar is stored
    as an ``mpq``; otherwise as a Python float.
    """

    N: int
    mu: tuple
    p: object = 1
    exact: bool = True

    def __post_init__(self):
        if not isinstance(self.N, int) or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        mu = tuple(self.mu)
        if len(mu) != self.N:
            raise ValueError(f"expected {self.N} interpolation parameters, got {len(mu)}")
        conv = rational if self.exact else _as_float
        try:
            mu = tuple(conv(m) for m in mu)
            p = conv(self.p)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"invalid parameter value: {exc}") from exc
        for i, m in enumerate(mu, start=1):
            if not 0 <= m <= 1:
                raise ValueError(f"mu_{i} = {m} lies outside [0, 1]")
        if not 0 <= p <= 1:
            raise ValueError(f"p = {p} lies outside [0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "p", p)

    @property
    def lam(self) -> tuple:
        return tuple(1 - m for m in self.mu)

    @property
    def q(self):
        return 1 - self.p

    @property
    def one(self):
        return mpq(1) if self.exact else 1.0

    @property
    def zero(self):
        return mpq(0) if self.exact else 0.0

    def mu_of(self, species: int):
        return self.mu[species - 1]

    def lam_of(self, species: int):
        return 1 - self.mu[species - 1]

    def alpha_of(self, species: int):
        m = self.mu[species - 1]
        return m * (1 - m)

    def is_binary(self) -> bool:
        return all(m == 0 or m == 1 for m in self.mu)

    def to_float(self) -> "ModelParams":
        return ModelParams(self.N, tuple(float(m) for m in self.mu), float(self.p), exact=False)

    def with_species(self, N: int, mu) -> "ModelParams":
        return ModelParams(N, tuple(mu), self.p, exact=self.exact)

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "mu": [render_scalar(m) for m in self.mu],
            "p": render_scalar(self.p),
            "mode": "exact" if self.exact else "float",
        }
