"""Two-site interaction matrices and their three-site compositions.

``B`` encodes a rightward jump-over (equivalently a leftward swap), ``B'`` a
rightward swap (equivalently a leftward jump-over).  Column ``nu`` of ``B`` is
the outcome of resolving the hidden state of the word ``nu``:

* ``nu = ii``          -> ``mu_i |ii>``  in ``B``, ``lambda_i |ii>`` in ``B'``
* ``nu_1 < nu_2``      -> ``|nu_2 nu_1>`` in ``B``, nothing in ``B'``
* ``nu_1 > nu_2``      -> nothing in ``B``, ``|nu_2 nu_1>`` in ``B'``

The three-site operators are ``X = (I x B)(B' x I)``, ``Y = (B' x I)(I x B)``
and ``X0 = (I x B)(B x I)``, composed in matrix-product order: the right factor
acts first.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from gmpy2 import mpq

from .algebra import SpeciesOperator, all_words, embed, exact_inverse, identity
from .params import ModelParams, render_scalar

__all__ = [
    "LocalPair",
    "ThreeSite",
    "build_local_pair",
    "build_three_site",
    "closed_inverse_I_minus_X",
    "closed_inverse_I_minus_Y",
    "projector_sum",
    "tampered_pair",
    "verify_structure_lemmas",
    "x_case_action",
    "y_case_action",
]


@dataclass(frozen=True)
class LocalPair:
    B: SpeciesOperator
    Bprime: SpeciesOperator


@dataclass(frozen=True)
class ThreeSite:
    X: SpeciesOperator
    Y: SpeciesOperator
    X0: SpeciesOperator

    def __iter__(self):
        return iter((self.X, self.Y, self.X0))


def _blank(d: int, exact: bool) -> np.ndarray:
    return np.full((d, d), mpq(0), dtype=object) if exact else np.zeros((d, d))


def build_local_pair(params: ModelParams) -> LocalPair:
    N = params.N
    words = all_words(2, N)
    index = {w: i for i, w in enumerate(words)}
    b = _blank(N * N, params.exact)
    bp = _blank(N * N, params.exact)
    one = params.one
    for nu in words:
        c = index[nu]
        n1, n2 = nu
        if n1 == n2:
            b[c, c] = params.mu_of(n1)
            bp[c, c] = params.lam_of(n1)
        elif n1 < n2:
            b[index[(n2, n1)], c] = one
        else:
            bp[index[(n2, n1)], c] = one
    return LocalPair(SpeciesOperator(b, words, N, _trusted=True), SpeciesOperator(bp, words, N, _trusted=True))


def build_three_site(params: ModelParams, pair: LocalPair | None = None) -> ThreeSite:
    pair = pair or build_local_pair(params)
    N = params.N
    b1 = embed(pair.B, 1, 3, N)
    b2 = embed(pair.B, 2, 3, N)
    bp1 = embed(pair.Bprime, 1, 3, N)
    return ThreeSite(X=b2 @ bp1, Y=bp1 @ b2, X0=b2 @ b1)


def projector_sum(weights, n: int, N: int, *, exact: bool = True) -> SpeciesOperator:
    """``sum_i weights[i-1] |i...i><i...i|`` on ``n`` sites."""
    words = all_words(n, N)
    mat = _blank(len(words), exact)
    for i in range(1, N + 1):
        idx = sum((i - 1) * N**e for e in range(n))
        mat[idx, idx] = weights[i - 1]
    return SpeciesOperator(mat, words, N, _trusted=True)


def closed_inverse_I_minus_X(params: ModelParams, three: ThreeSite | None = None) -> SpeciesOperator:
    """``I + X + sum_i (mu_i lambda_i)^2 / (1 - mu_i lambda_i) E_i``."""
    three = three or build_three_site(params)
    N = params.N
    corr = [params.alpha_of(i) ** 2 / (1 - params.alpha_of(i)) for i in range(1, N + 1)]
    return identity(3, N, exact=params.exact) + three.X + projector_sum(corr, 3, N, exact=params.exact)


def closed_inverse_I_minus_Y(params: ModelParams, three: ThreeSite | None = None) -> SpeciesOperator:
    three = three or build_three_site(params)
    N = params.N
    corr = [params.alpha_of(i) ** 2 / (1 - params.alpha_of(i)) for i in range(1, N + 1)]
    return identity(3, N, exact=params.exact) + three.Y + projector_sum(corr, 3, N, exact=params.exact)


# Case tables, written independently of the matrix products so they can be
# checked against them.


def x_case_action(word, params: ModelParams) -> dict:
    """``X|nu>`` from the five-case table."""
    n1, n2, n3 = word
    if n1 == n2 == n3:
        return {word: params.alpha_of(n1)}
    if n1 == n2 < n3:
        return {(n1, n3, n1): params.lam_of(n1)}
    if n1 > n2 and n1 == n3:
        return {(n2, n1, n1): params.mu_of(n1)}
    if n3 > n1 > n2:
        return {(n2, n3, n1): params.one}
    return {}


def y_case_action(word, params: ModelParams) -> dict:
    """``Y|nu>`` from the five-case table."""
    n1, n2, n3 = word
    if n1 == n2 == n3:
        return {word: params.alpha_of(n1)}
    if n1 > n2 == n3:
        return {(n2, n1, n2): params.mu_of(n2)}
    if n1 == n3 > n2:
        return {(n1, n1, n2): params.lam_of(n1)}
    if n1 > n3 > n2:
        return {(n3, n1, n2): params.one}
    return {}


def _action_mismatches(op: SpeciesOperator, table, params) -> list:
    bad = []
    for nu in op.basis:
        got = op.column(nu)
        want = {w: c for w, c in table(nu, params).items() if c}
        if got != want:
            bad.append({"word": list(nu), "operator": _render_vec(got), "table": _render_vec(want)})
    return bad


def _render_vec(vec: dict) -> dict:
    return {"".join(map(str, w)): render_scalar(c) for w, c in vec.items()}


def _entry_mismatches(lhs: SpeciesOperator, rhs: SpeciesOperator) -> list:
    bad = []
    rows, cols = np.nonzero(lhs.matrix != rhs.matrix)
    for r, c in zip(rows, cols):
        bad.append(
            {
                "row": "".join(map(str, lhs.basis[r])),
                "col": "".join(map(str, lhs.basis[c])),
                "lhs": render_scalar(lhs.matrix[r, c]),
                "rhs": render_scalar(rhs.matrix[r, c]),
            }
        )
    return bad


def _check(name: str, mismatches: list) -> dict:
    return {"claim": name, "passed": not mismatches, "mismatches": mismatches[:10]}


def verify_structure_lemmas(params: ModelParams, pair: LocalPair | None = None) -> dict:
    """Exhaustive exact check of the local operator identities.

    Returns a JSON-ready report with one entry per claim.  ``pair`` lets a
    caller inject (possibly tampered) local matrices as a negative control.
    """
    if not params.exact:
        raise ValueError("structure lemmas are verified in exact mode only")
    N = params.N
    pair = pair or build_local_pair(params)
    three = build_three_site(params, pair)
    X, Y, X0 = three
    eye = identity(3, N)
    alphas = [params.alpha_of(i) for i in range(1, N + 1)]
    checks = []

    checks.append(_check("local pair column completeness", _completeness_mismatches(pair, params)))
    checks.append(_check("X action table", _action_mismatches(X, x_case_action, params)))
    for k in (2, 3):
        rhs = projector_sum([a**k for a in alphas], 3, N)
        checks.append(_check(f"X^{k} = sum (mu lambda)^{k} E", _entry_mismatches(X**k, rhs)))
    checks.append(_check("Y action table", _action_mismatches(Y, y_case_action, params)))
    for k in (2, 3):
        rhs = projector_sum([a**k for a in alphas], 3, N)
        checks.append(_check(f"Y^{k} = sum (mu lambda)^{k} E", _entry_mismatches(Y**k, rhs)))

    comp = [w for w in X.basis if len(set(w)) > 1]
    x_off = X.restrict(comp)
    checks.append(
        _check(
            "X^2 = 0 off the single-species words",
            [] if not X.leaks_outside(comp) and (x_off @ x_off).is_zero() else [{"detail": "nonzero"}],
        )
    )

    rhs = projector_sum([params.mu_of(i) ** 3 * params.lam_of(i) for i in range(1, N + 1)], 3, N)
    checks.append(_check("X X0 = sum mu^3 lambda E", _entry_mismatches(X @ X0, rhs)))

    inv_x = closed_inverse_I_minus_X(params, three)
    checks.append(_check("closed (I-X)^-1 times (I-X) = I", _entry_mismatches(inv_x @ (eye - X), eye)))
    checks.append(_check("closed (I-X)^-1 equals eliminated inverse", _entry_mismatches(inv_x, exact_inverse(eye - X))))
    inv_y = closed_inverse_I_minus_Y(params, three)
    checks.append(_check("closed (I-Y)^-1 times (I-Y) = I", _entry_mismatches(inv_y @ (eye - Y), eye)))
    checks.append(_check("closed (I-Y)^-1 equals eliminated inverse", _entry_mismatches(inv_y, exact_inverse(eye - Y))))

    return {
        "params": params.as_dict(),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }


def _completeness_mismatches(pair: LocalPair, params: ModelParams) -> list:
    bad = []
    total = pair.B + pair.Bprime
    for nu in total.basis:
        col = total.column(nu)
        if nu[0] == nu[1]:
            ok = col == {nu: params.one}
        else:
            # exactly one unit entry, at the swapped word
            ok = col == {(nu[1], nu[0]): params.one}
        if not ok:
            bad.append({"word": list(nu), "column": _render_vec(col)})
    return bad


def tampered_pair(params: ModelParams) -> LocalPair:
    """A deliberately wrong ``B`` (the first jump-over entry doubled); negative control."""
    pair = build_local_pair(params)
    mat = pair.B.matrix.copy()
    for (r, c) in product(range(mat.shape[0]), repeat=2):
        if mat[r, c]:
            mat[r, c] = mat[r, c] * 2 + 1
            break
    else:
        mat[0, 0] = params.one
    return LocalPair(SpeciesOperator(mat, pair.B.basis, params.N, _trusted=True), pair.Bprime)
