"""Boundary elimination for blocks of adjacent particles.

A block of ``m`` consecutive particles starting at slot ``j`` of an
``n``-particle word carries the embedded factors ``Bc[i] = embed(B, j+i-1)`` and
``Bpc[i] = embed(B', j+i-1)`` for ``i = 1..m``.  Eliminating the repeated-pair
terms from the left (the rightward, ``p``-side sweep) produces the operators

    A_0 = I,    A_k = I - Bc[k+1] A_{k-1}^{-1} Bpc[k]

and eliminating from the right (the ``q``-side sweep) the mirror sequence

    A_0 = I,    A_k = I - Bpc[m-k] A_{k-1}^{-1} Bc[m-k+1].

``Xk`` denotes the subtracted term, so ``A_k = I - Xk``.  A singular ``A_k``
is data, not an error: the chain stops there and reports the index.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    SingularMatrixError,
    SpeciesOperator,
    all_words,
    case_b_basis,
    embed,
    exact_inverse,
    identity,
    sector_basis,
    sector_blocks,
    spectral_radius,
    zeros,
)
from .local_ops import LocalPair, build_local_pair
from .params import ModelParams, render_scalar

__all__ = [
    "EliminationError",
    "EliminationResult",
    "ReductionChain",
    "ScalarSector",
    "SectorScan",
    "binary_chain_inverse",
    "chain",
    "check_block_form",
    "classify_multiset",
    "effective_shift_rate",
    "eliminate_block",
    "scalar_sector",
    "sector_invertibility_scan",
    "shift_sum",
    "transition_coefficient",
]

RIGHT, LEFT = "right", "left"


class EliminationError(ArithmeticError):
    """Block elimination needs an inverse that does not exist."""

    def __init__(self, k: int):
        self.k = k
        super().__init__(f"elimination undefined: A_{k} is singular")


@dataclass
class ReductionChain:
    n: int
    params: ModelParams
    direction: str
    position: int
    length: int
    basis: tuple
    Bc: list  # Bc[i] for i = 1..m, Bc[0] unused
    Bpc: list
    A: list = field(default_factory=list)  # A[0..]
    A_inv: list = field(default_factory=list)
    X: list = field(default_factory=list)  # X[0] is None
    invertible: list = field(default_factory=list)
    failed_at: int | None = None
    spectral_radii: list = field(default_factory=list)  # index k >= 1; entry 0 is None

    @property
    def K(self) -> int:
        """Deepest ``k`` with ``A_k`` computed."""
        return len(self.A) - 1

    @property
    def fully_invertible(self) -> bool:
        return self.failed_at is None

    def factor_indices(self, k: int) -> tuple:
        """Indices ``(a, b)`` of the factors in ``Xk = F[a] A_{k-1}^-1 G[b]``."""
        if self.direction == RIGHT:
            return k + 1, k
        m = self.length
        return m - k, m - k + 1

    def summary(self) -> list:
        rows = []
        for k in range(1, self.K + 1):
            rows.append(
                {
                    "k": k,
                    "invertible": self.invertible[k],
                    "spectral_radius": self.spectral_radii[k] if k < len(self.spectral_radii) else None,
                }
            )
        return rows


def _block_factors(pair: LocalPair, n: int, position: int, m: int, basis) -> tuple:
    Bc = [None] + [embed(pair.B, position + i - 1, n, basis=basis) for i in range(1, m + 1)]
    Bpc = [None] + [embed(pair.Bprime, position + i - 1, n, basis=basis) for i in range(1, m + 1)]
    return Bc, Bpc


def _inverse(op: SpeciesOperator) -> SpeciesOperator | None:
    if op.exact:
        try:
            return exact_inverse(op)
        except SingularMatrixError:
            return None
    try:
        inv = np.linalg.inv(op.matrix)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(inv)):
        return None
    return SpeciesOperator(inv, op.basis, op.N)


def _run_chain(ch: ReductionChain, K: int, radii: bool) -> ReductionChain:
    eye = identity(ch.basis, ch.params.N, exact=ch.params.exact)
    ch.A = [eye]
    ch.A_inv = [eye]
    ch.X = [None]
    ch.invertible = [True]
    ch.spectral_radii = [None]
    if ch.direction == RIGHT:
        left, right = ch.Bc, ch.Bpc
    else:
        left, right = ch.Bpc, ch.Bc
    for k in range(1, K + 1):
        a, b = ch.factor_indices(k)
        xk = left[a] @ ch.A_inv[k - 1] @ right[b]
        ak = eye - xk
        ch.X.append(xk)
        ch.A.append(ak)
        if radii or not ch.params.exact:
            ch.spectral_radii.append(spectral_radius(xk))
        inv = _inverse(ak)
        ch.invertible.append(inv is not None)
        if inv is None:
            ch.failed_at = k
            break
        ch.A_inv.append(inv)
    return ch


def _assemble(parts: list, full_basis, N: int, exact: bool) -> SpeciesOperator:
    """Block-diagonal operator on the full basis from per-sector pieces."""
    out = zeros(full_basis, N, exact=exact)
    mat = out.matrix.copy()
    index = {w: i for i, w in enumerate(full_basis)}
    for op in parts:
        idx = [index[w] for w in op.basis]
        mat[np.ix_(idx, idx)] = op.matrix
    return SpeciesOperator(mat, full_basis, N, _trusted=True)


def chain(
    n: int,
    K: int | None,
    params: ModelParams,
    *,
    direction: str = RIGHT,
    position: int = 1,
    length: int | None = None,
    basis=None,
    by_sector: bool = True,
    radii: bool = False,
    pair: LocalPair | None = None,
) -> ReductionChain:
    """Compute ``A_0 .. A_K`` for a block of ``length`` particles at slot ``position``.

    The default block spans all ``n`` particles (``length = n - 1`` pair slots),
    so ``K`` can reach ``n - 2``.  With ``basis`` the chain is computed on that
    invariant sub-basis.  Without it and with ``by_sector`` the chain is
    computed sector by sector and the full block-diagonal operators are
    assembled from the pieces, which is far cheaper than working on ``N**n``
    dimensions directly.
    """
    if direction not in (RIGHT, LEFT):
        raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
    m = n - position if length is None else length
    if m < 1 or position < 1 or position + m > n:
        raise ValueError(f"block of length {m} at slot {position} does not fit in {n} sites")
    K = m - 1 if K is None else K
    if not 0 <= K <= m - 1:
        raise ValueError(f"depth K={K} outside 0..{m - 1} for a block of length {m}")
    pair = pair or build_local_pair(params)

    if basis is not None or not by_sector:
        words = all_words(n, params.N) if basis is None else [tuple(w) for w in basis]
        Bc, Bpc = _block_factors(pair, n, position, m, words)
        ch = ReductionChain(n, params, direction, position, m, tuple(words), Bc, Bpc)
        return _run_chain(ch, K, radii)

    sectors = sector_blocks(n, params.N)
    pieces = [
        chain(n, K, params, direction=direction, position=position, length=m, basis=sectors.words(ms), radii=radii, pair=pair)
        for ms in sectors.blocks
    ]
    full = all_words(n, params.N)
    Bc, Bpc = _block_factors(pair, n, position, m, full)
    ch = ReductionChain(n, params, direction, position, m, tuple(full), Bc, Bpc)
    failures = [p.failed_at for p in pieces if p.failed_at is not None]
    ch.failed_at = min(failures) if failures else None
    depth = K if ch.failed_at is None else ch.failed_at
    exact = params.exact
    ch.A = [_assemble([p.A[k] for p in pieces], full, params.N, exact) for k in range(depth + 1)]
    ch.X = [None] + [_assemble([p.X[k] for p in pieces], full, params.N, exact) for k in range(1, depth + 1)]
    n_inv = depth + 1 if ch.failed_at is None else depth
    ch.A_inv = [_assemble([p.A_inv[k] for p in pieces], full, params.N, exact) for k in range(n_inv)]
    ch.invertible = [True] * n_inv + ([False] if ch.failed_at is not None else [])
    if radii or not exact:
        ch.spectral_radii = [None] + [max(p.spectral_radii[k] for p in pieces) for k in range(1, depth + 1)]
    else:
        ch.spectral_radii = [None] * (depth + 1)
    return ch


def binary_chain_inverse(ch: ReductionChain) -> dict:
    """Check ``Xk^2 = 0`` and ``A_k^-1 = I + Xk`` for every computed ``k``."""
    if not ch.params.is_binary():
        raise ValueError("binary_chain_inverse requires every mu_i in {0, 1}")
    eye = identity(ch.basis, ch.params.N, exact=ch.params.exact)
    rows = []
    for k in range(1, ch.K + 1):
        xk = ch.X[k]
        claimed = eye + xk
        row = {
            "k": k,
            "X_squared_zero": (xk @ xk).is_zero(),
            "A_times_claimed_is_identity": ch.A[k] @ claimed == eye and claimed @ ch.A[k] == eye,
            "matches_eliminated_inverse": k < len(ch.A_inv) and ch.A_inv[k] == claimed,
        }
        if not row["X_squared_zero"]:
            bad = (xk @ xk).nonzeros()[0]
            row["offending_entry"] = ["".join(map(str, bad[0])), "".join(map(str, bad[1])), render_scalar(bad[2])]
        row["passed"] = row["X_squared_zero"] and row["A_times_claimed_is_identity"] and row["matches_eliminated_inverse"]
        rows.append(row)
    return {"n": ch.n, "params": ch.params.as_dict(), "rows": rows, "passed": all(r["passed"] for r in rows)}


# ------------------------------------------------------------ scalar sector


def shift_sum(mu, k: int):
    """``S_k = sum_{r=0}^k mu^(k-r) lambda^r``, always in summation form."""
    lam = 1 - mu
    return sum(mu ** (k - r) * lam**r for r in range(k + 1))


@dataclass
class ScalarSector:
    species: int
    alpha: object
    a: list
    S: list
    r: float
    c: list  # c[0] unused
    bounded_below: bool
    ratio_matches: bool


def _at_least_root(a, alpha) -> bool:
    """Exact test of ``a >= (1 + sqrt(1 - 4 alpha)) / 2``."""
    lhs = 2 * a - 1
    return lhs >= 0 and lhs * lhs >= 1 - 4 * alpha


def scalar_sector(i: int, K: int, params: ModelParams) -> ScalarSector:
    """The scalars ``a_k``, ``S_k`` and ``c_k`` on the one-dimensional sector ``|i...i>``."""
    mu = params.mu_of(i)
    alpha = params.alpha_of(i)
    a = [params.one]
    for _ in range(K):
        a.append(1 - alpha / a[-1])
    S = [shift_sum(mu, k) for k in range(K + 2)]
    ratio_matches = all(a[k] == S[k + 1] / S[k] for k in range(K + 1))
    r = (1 + math.sqrt(max(0.0, 1 - 4 * float(alpha)))) / 2
    if params.exact:
        bounded = all(_at_least_root(x, alpha) for x in a)
    else:
        bounded = all(x >= r - 1e-12 for x in a)
    c = [None] + [alpha / a[k - 1] for k in range(1, K + 1)]
    return ScalarSector(i, alpha, a, S, r, c, bounded, ratio_matches)


# ----------------------------------------------------------------- elimination


@dataclass
class EliminationResult:
    m: int
    j: int
    n: int
    basis: tuple
    Bc: list
    Bpc: list
    L: list  # L[0] = I, L[1..m], L[m+1] = 0
    Lp: list  # Lp[0] = 0, Lp[1..m], Lp[m+1] = I
    chain: ReductionChain

    def residuals(self) -> list:
        """Max abs deviation of ``W_i = Bc_i W_{i-1} + Bpc_i W_{i+1}`` for both coefficients."""
        out = []
        for i in range(1, self.m + 1):
            for coeffs in (self.L, self.Lp):
                rhs = self.Bc[i] @ coeffs[i - 1] + self.Bpc[i] @ coeffs[i + 1]
                out.append(coeffs[i].max_abs_difference(rhs))
        return out

    def lemma_product(self) -> SpeciesOperator:
        """``A_{m-1}^-1 Bc_m A_{m-2}^-1 Bc_{m-1} ... A_1^-1 Bc_2 Bc_1`` from the chain."""
        prod = self.Bc[1]
        for i in range(2, self.m + 1):
            prod = self.chain.A_inv[i - 1] @ self.Bc[i] @ prod
        return prod


def eliminate_block(
    m: int,
    j: int,
    n: int,
    params: ModelParams,
    *,
    basis=None,
    method: str = "forward",
    pair: LocalPair | None = None,
) -> EliminationResult:
    """Express every repeated-pair term ``W_{m,i}`` through the block's two admissible neighbours.

    ``method="forward"`` sweeps left to right with the ``p``-side chain;
    ``"backward"`` sweeps right to left with the mirrored chain.  Both give the
    same coefficients whenever both chains are invertible.
    """
    pair = pair or build_local_pair(params)
    words = all_words(n, params.N) if basis is None else [tuple(w) for w in basis]
    direction = RIGHT if method == "forward" else LEFT
    if method not in ("forward", "backward"):
        raise ValueError(f"unknown method {method!r}")
    ch = chain(n, m - 1, params, direction=direction, position=j, length=m, basis=words, pair=pair)
    if ch.failed_at is not None:
        raise EliminationError(ch.failed_at)
    eye = identity(words, params.N, exact=params.exact)
    zero = zeros(words, params.N, exact=params.exact)
    Bc, Bpc = ch.Bc, ch.Bpc
    L = [eye] + [None] * m + [zero]
    Lp = [zero] + [None] * m + [eye]
    if method == "forward":
        # W_i = P_i W_{i+1} + Q_i W_0
        P, Q = [None] * (m + 1), [None] * (m + 1)
        Q_prev = eye
        for i in range(1, m + 1):
            inv = ch.A_inv[i - 1]
            P[i] = inv @ Bpc[i]
            Q[i] = inv @ Bc[i] @ Q_prev
            Q_prev = Q[i]
        L[m], Lp[m] = Q[m], P[m]
        for i in range(m - 1, 0, -1):
            L[i] = P[i] @ L[i + 1] + Q[i]
            Lp[i] = P[i] @ Lp[i + 1]
    else:
        # W_i = R_i W_{i-1} + T_i W_{m+1}
        R, T = [None] * (m + 2), [None] * (m + 2)
        T_next = eye
        for i in range(m, 0, -1):
            inv = ch.A_inv[m - i]
            R[i] = inv @ Bc[i]
            T[i] = inv @ Bpc[i] @ T_next
            T_next = T[i]
        L[1], Lp[1] = R[1], T[1]
        for i in range(2, m + 1):
            L[i] = R[i] @ L[i - 1]
            Lp[i] = R[i] @ Lp[i - 1] + T[i]
    return EliminationResult(m, j, n, tuple(words), Bc, Bpc, L, Lp, ch)


def transition_coefficient(pi, nu, n: int, params: ModelParams, *, direction: str = RIGHT):
    """Rate of the full-block shift ``(x-1, .., x+n-2; nu) -> (x, .., x+n-1; pi)``.

    For ``direction="left"`` the mirrored shift ``(x+1, .., x+n; nu) -> (x, ..,
    x+n-1; pi)``.  Computed on the species sector of ``nu`` only.
    """
    pi, nu = tuple(pi), tuple(nu)
    if len(pi) != n or len(nu) != n:
        raise ValueError("words must have length n")
    if n < 2:
        raise ValueError("a block shift needs at least two particles")
    if sorted(pi) != sorted(nu):
        return params.zero
    res = eliminate_block(n - 1, 1, n, params, basis=sector_basis(nu), method="forward" if direction == RIGHT else "backward")
    if direction == RIGHT:
        return params.p * res.L[n - 1].entry(pi, nu)
    return params.q * res.Lp[1].entry(pi, nu)


def effective_shift_rate(n: int, i: int, params: ModelParams, *, direction: str = RIGHT):
    """Closed-form rate for ``n`` adjacent species-``i`` particles to shift by one site."""
    mu = params.mu_of(i)
    S = shift_sum(mu, n - 1)
    if direction == RIGHT:
        return params.p * mu ** (n - 1) / S
    return params.q * (1 - mu) ** (n - 1) / S


# ----------------------------------------------------------- sector analysis


def classify_multiset(M) -> str:
    counts = Counter(M)
    if len(counts) == 1:
        return "a"
    if len(counts) == len(M):
        return "c"
    if len(counts) == 2 and 1 in counts.values():
        return "b"
    return "general"


CASE_LABELS = {
    "a": "single species",
    "b": "one particle of a different species",
    "c": "all species distinct",
    "general": "unproven general case",
}


@dataclass
class SectorScan:
    multiset: tuple
    case: str
    rows: list
    failed_at: int | None
    scalars: list | None = None

    @property
    def all_invertible(self) -> bool:
        return self.failed_at is None and all(r["invertible"] for r in self.rows)


def sector_invertibility_scan(M, params: ModelParams, *, direction: str = RIGHT, radii: bool = True) -> SectorScan:
    """Exact invertibility of ``A_k`` restricted to the sector of ``M``, ``k = 1..n-2``."""
    M = tuple(sorted(M))
    n = len(M)
    if max(M) > params.N or min(M) < 1:
        raise ValueError(f"multiset {M} uses labels outside 1..{params.N}")
    case = classify_multiset(M)
    if n < 3:
        return SectorScan(M, case, [], None)
    ch = chain(n, n - 2, params, direction=direction, basis=sector_basis(M), radii=radii)
    rows = ch.summary()
    scalars = None
    if case == "a":
        scalars = [render_scalar(x) for x in scalar_sector(M[0], n - 2, params).a]
    return SectorScan(M, case, rows, ch.failed_at, scalars)


def check_block_form(k: int, n: int, params: ModelParams) -> dict:
    """Block structure of ``Xk`` on the sector ``[2, 1, ..., 1]`` in the basis ``e_r``.

    Verifies that ``Xk`` is block diagonal over ``(e_0..e_{k-1} | e_k, e_{k+1} |
    e_{k+2}..e_{n-1})`` with diagonal outer blocks and a strictly upper
    triangular middle block, and that ``X_{k+1}`` acts on ``span(e_0..e_k)``
    as the scalar ``c_k = alpha_1 / a_{k-1,1}`` whenever ``X_{k+1}`` exists.
    """
    if params.N < 2:
        raise ValueError("the sector [2, 1, ..., 1] needs N >= 2")
    if not 1 <= k <= n - 2:
        raise ValueError(f"k={k} outside 1..{n - 2}")
    basis = case_b_basis(n)
    depth = min(k + 1, n - 2)
    ch = chain(n, depth, params, basis=basis)
    if ch.failed_at is not None and ch.failed_at <= depth:
        return {"k": k, "n": n, "passed": False, "error": f"A_{ch.failed_at} singular"}
    xk = ch.X[k].matrix
    zero = params.zero
    mid = {k, k + 1}
    checks = []

    off_pattern = []
    for r in range(n):
        for c in range(n):
            v = xk[r, c]
            if not v:
                continue
            allowed = (r == c and r not in mid) or (r == k and c == k + 1)
            if not allowed:
                off_pattern.append({"row": f"e{r}", "col": f"e{c}", "value": render_scalar(v)})
    checks.append({"claim": "block diagonal with diagonal outer blocks and nilpotent middle", "passed": not off_pattern, "mismatches": off_pattern})

    star = xk[k, k + 1]
    outer = [xk[r, r] for r in range(n) if r not in mid]
    in_range = all(zero <= d < 1 for d in outer)
    checks.append({"claim": "outer diagonal entries lie in [0, 1)", "passed": in_range, "values": [render_scalar(d) for d in outer]})

    sc = scalar_sector(1, n - 2, params)
    ck = sc.c[k]
    if k + 1 <= n - 2:
        x_next = ch.X[k + 1].matrix
        bad = []
        for c in range(k + 1):
            for r in range(n):
                want = ck if r == c else zero
                if x_next[r, c] != want:
                    bad.append({"row": f"e{r}", "col": f"e{c}", "value": render_scalar(x_next[r, c]), "expected": render_scalar(want)})
        checks.append({"claim": f"X_{k + 1} acts on span(e_0..e_{k}) as c_{k}", "passed": not bad, "mismatches": bad})
    else:
        checks.append({"claim": f"X_{k + 1} acts on span(e_0..e_{k}) as c_{k}", "passed": True, "note": f"X_{k + 1} is not defined for n={n}"})

    ones = tuple([1] * n)
    single = chain(n, k, params, basis=[ones])
    checks.append(
        {
            "claim": f"c_{k} is the eigenvalue of X_{k} on |1...1>",
            "passed": single.X[k].matrix[0, 0] == ck,
            "value": render_scalar(single.X[k].matrix[0, 0]),
        }
    )
    return {
        "k": k,
        "n": n,
        "params": params.as_dict(),
        "c_k": render_scalar(ck),
        "middle_star": render_scalar(star),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
