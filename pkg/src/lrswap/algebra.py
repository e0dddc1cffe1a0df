"""Word-indexed tensor-product linear algebra over exact rationals or floats.

Operators act on the span of words ``pi = pi_1 ... pi_n`` with letters in
``1..N``.  The basis is ordered lexicographically, species 1 smallest, so the
word ``11...1`` has index 0.  An operator may also live on a *sub-basis*: any
list of words closed under the operators in play, typically one species
sector.  Dense storage throughout; dimensions stay small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np
from gmpy2 import mpq

from .params import rational

__all__ = [
    "SectorDecomposition",
    "SingularMatrixError",
    "SpectralEstimationError",
    "SpeciesOperator",
    "all_words",
    "case_b_basis",
    "embed",
    "exact_inverse",
    "exact_solve",
    "identity",
    "index_word",
    "kron",
    "matrix_unit",
    "sector_basis",
    "sector_blocks",
    "spectral_radius",
    "word_index",
]

Word = tuple


class SingularMatrixError(ArithmeticError):
    """Raised by exact elimination when no pivot exists in some column."""

    def __init__(self, pivot_row: int, dim: int):
        self.pivot_row = pivot_row
        self.dim = dim
        super().__init__(f"matrix is singular: rank deficiency detected at pivot row {pivot_row} of {dim}")


class SpectralEstimationError(RuntimeError):
    """The eigensolver failed; says nothing about the model itself."""


# --------------------------------------------------------------------------- words


def word_index(word, N: int) -> int:
    """Lexicographic rank (0-based) of ``word`` among all words over ``1..N``."""
    idx = 0
    for letter in word:
        if not 1 <= letter <= N:
            raise ValueError(f"letter {letter} of word {tuple(word)} outside 1..{N}")
        idx = idx * N + (letter - 1)
    return idx


def index_word(index: int, n: int, N: int) -> Word:
    if not 0 <= index < N**n:
        raise ValueError(f"index {index} outside [0, {N**n - 1}]")
    letters = []
    for _ in range(n):
        index, r = divmod(index, N)
        letters.append(r + 1)
    return tuple(reversed(letters))


def all_words(n: int, N: int) -> list:
    return list(product(range(1, N + 1), repeat=n))


def sector_basis(multiset) -> list:
    """Words that are permutations of ``multiset``, in lexicographic order."""
    return sorted(set(permutations(tuple(multiset))))


def case_b_basis(n: int, heavy: int = 2, light: int = 1) -> list:
    """The basis ``e_r = |light^r heavy light^(n-r-1)>`` for ``r = 0..n-1``."""
    return [(light,) * r + (heavy,) + (light,) * (n - r - 1) for r in range(n)]


@dataclass(frozen=True)
class SectorDecomposition:
    """Partition of the ``N**n`` basis indices by species multiset."""

    n: int
    N: int
    blocks: dict

    def words(self, multiset) -> list:
        return [index_word(i, self.n, self.N) for i in self.blocks[tuple(sorted(multiset))]]

    def sizes(self) -> list:
        return [len(v) for v in self.blocks.values()]


def sector_blocks(n: int, N: int) -> SectorDecomposition:
    if n < 1 or N < 1:
        raise ValueError("n and N must be at least 1")
    blocks: dict = {}
    for idx, w in enumerate(all_words(n, N)):
        blocks.setdefault(tuple(sorted(w)), []).append(idx)
    return SectorDecomposition(n, N, dict(sorted(blocks.items())))


# ----------------------------------------------------------------------- operators


def _as_exact_array(matrix) -> np.ndarray:
    arr = np.asarray(matrix, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i, x in enumerate(flat_in):
        flat_out[i] = rational(x)
    return out


class SpeciesOperator:
    """A square matrix whose rows and columns are labelled by words.

    ``matrix`` is either an object array of ``mpq`` (exact mode) or a float64
    array.  ``basis`` lists the words labelling rows/columns in order; for the
    full space it is every word of length ``n`` in lexicographic order.
    """

    __slots__ = ("matrix", "basis", "N", "_index")

    def __init__(self, matrix, basis, N: int, *, _trusted: bool = False):
        basis = tuple(tuple(w) for w in basis)
        if _trusted:
            mat = matrix
        elif np.asarray(matrix).dtype == object:
            mat = _as_exact_array(matrix)
        else:
            mat = np.array(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"operator must be square, got shape {mat.shape}")
        if mat.shape[0] != len(basis):
            raise ValueError(f"basis has {len(basis)} words but matrix dimension is {mat.shape[0]}")
        mat.flags.writeable = False
        self.matrix = mat
        self.basis = basis
        self.N = N
        self._index = None

    # -- construction helpers
    @classmethod
    def full(cls, matrix, n: int, N: int) -> "SpeciesOperator":
        return cls(matrix, all_words(n, N), N)

    @property
    def exact(self) -> bool:
        return self.matrix.dtype == object

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return len(self.basis[0]) if self.basis else 0

    @property
    def index(self) -> dict:
        if self._index is None:
            self._index = {w: i for i, w in enumerate(self.basis)}
        return self._index

    def is_full_basis(self) -> bool:
        return self.dim == self.N**self.n and all(word_index(w, self.N) == i for i, w in enumerate(self.basis))

    def entry(self, row_word, col_word):
        return self.matrix[self.index[tuple(row_word)], self.index[tuple(col_word)]]

    def column(self, word) -> dict:
        """Action on a basis vector: ``{row word: coefficient}`` over nonzeros."""
        col = self.matrix[:, self.index[tuple(word)]]
        return {self.basis[i]: col[i] for i in range(self.dim) if col[i]}

    def _wrap(self, mat) -> "SpeciesOperator":
        return SpeciesOperator(mat, self.basis, self.N, _trusted=True)

    def _check_compatible(self, other: "SpeciesOperator"):
        if self.basis != other.basis:
            raise ValueError("operators live on different bases")
        if self.exact != other.exact:
            raise TypeError("cannot mix exact and float operators")

    # -- arithmetic
    def __matmul__(self, other: "SpeciesOperator") -> "SpeciesOperator":
        self._check_compatible(other)
        if self.exact:
            return self._wrap(_exact_matmul(self.matrix, other.matrix))
        return self._wrap(self.matrix @ other.matrix)

    def __add__(self, other):
        self._check_compatible(other)
        return self._wrap(self.matrix + other.matrix)

    def __sub__(self, other):
        self._check_compatible(other)
        return self._wrap(self.matrix - other.matrix)

    def __neg__(self):
        return self._wrap(-self.matrix)

    def __mul__(self, scalar):
        s = rational(scalar) if self.exact else float(scalar)
        return self._wrap(self.matrix * s)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "SpeciesOperator":
        if k < 0:
            raise ValueError("negative powers are not supported; use exact_inverse")
        result = identity(self.basis, self.N, exact=self.exact)
        base = self
        while k:
            if k & 1:
                result = result @ base
            base = base @ base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, SpeciesOperator):
            return NotImplemented
        return (
            self.basis == other.basis
            and self.exact == other.exact
            and bool(np.all(self.matrix == other.matrix))
        )

    __hash__ = None

    def __repr__(self):
        kind = "exact" if self.exact else "float"
        return f"SpeciesOperator(dim={self.dim}, n={self.n}, N={self.N}, {kind})"

    # -- inspection
    def is_zero(self) -> bool:
        return not np.any(self.matrix != 0)

    def nonzeros(self) -> list:
        """List of ``(row word, col word, value)`` for every nonzero entry."""
        rows, cols = np.nonzero(self.matrix != 0)
        return [(self.basis[r], self.basis[c], self.matrix[r, c]) for r, c in zip(rows, cols)]

    def max_abs_difference(self, other: "SpeciesOperator"):
        self._check_compatible(other)
        diff = self.matrix - other.matrix
        if diff.size == 0:
            return mpq(0) if self.exact else 0.0
        return max(abs(x) for x in diff.ravel())

    def to_float(self) -> "SpeciesOperator":
        if not self.exact:
            return self
        return SpeciesOperator(self.matrix.astype(np.float64), self.basis, self.N)

    def restrict(self, words) -> "SpeciesOperator":
        """Restriction to the span of ``words``, re-indexed densely in the given order.

        The caller is responsible for the span being invariant; use
        :meth:`leaks_outside` to check.
        """
        idx = [self.index[tuple(w)] for w in words]
        sub = self.matrix[np.ix_(idx, idx)].copy()
        return SpeciesOperator(sub, words, self.N, _trusted=True)

    def leaks_outside(self, words) -> bool:
        idx = [self.index[tuple(w)] for w in words]
        mask = np.ones(self.dim, dtype=bool)
        mask[idx] = False
        return bool(np.any(self.matrix[np.ix_(mask, idx)] != 0))


def _exact_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sparse-aware product of two object matrices of rationals."""
    m, k = a.shape
    cols = b.shape[1]
    b_rows = [[(j, v) for j, v in enumerate(b[r]) if v] for r in range(k)]
    zero = mpq(0)
    out = np.full((m, cols), zero, dtype=object)
    for i in range(m):
        acc: dict = {}
        for r, av in enumerate(a[i]):
            if not av:
                continue
            for j, bv in b_rows[r]:
                acc[j] = acc.get(j, zero) + av * bv
        row = out[i]
        for j, v in acc.items():
            row[j] = v
    return out


def identity(basis_or_n, N: int, *, exact: bool = True) -> SpeciesOperator:
    """Identity on a basis (list of words) or on the full space of ``n``-letter words."""
    basis = all_words(basis_or_n, N) if isinstance(basis_or_n, int) else list(basis_or_n)
    d = len(basis)
    if exact:
        mat = np.full((d, d), mpq(0), dtype=object)
        for i in range(d):
            mat[i, i] = mpq(1)
    else:
        mat = np.eye(d)
    return SpeciesOperator(mat, basis, N, _trusted=True)


def zeros(basis, N: int, *, exact: bool = True) -> SpeciesOperator:
    d = len(basis)
    mat = np.full((d, d), mpq(0), dtype=object) if exact else np.zeros((d, d))
    return SpeciesOperator(mat, basis, N, _trusted=True)


def matrix_unit(row_word, col_word, n: int, N: int, *, exact: bool = True) -> SpeciesOperator:
    op = zeros(all_words(n, N), N, exact=exact)
    mat = op.matrix.copy()
    mat[word_index(row_word, N), word_index(col_word, N)] = mpq(1) if exact else 1.0
    return SpeciesOperator(mat, op.basis, N, _trusted=True)


def kron(a: SpeciesOperator, b: SpeciesOperator) -> SpeciesOperator:
    """Tensor product; row/column words are concatenations ``(u, v)``."""
    if a.exact != b.exact:
        raise TypeError("cannot mix exact and float operators")
    if a.N != b.N:
        raise ValueError("operators use different species counts")
    mat = np.kron(a.matrix, b.matrix)
    basis = [u + v for u in a.basis for v in b.basis]
    if a.exact:
        mat = mat.astype(object)
    return SpeciesOperator(mat, basis, a.N, _trusted=True)


def embed(op: SpeciesOperator, j: int, n: int, N: int | None = None, basis=None) -> SpeciesOperator:
    """Act with the two-site ``op`` on slots ``(j, j+1)`` (1-based) of ``n``-letter words.

    Equal to ``I^(j-1) (x) op (x) I^(n-j-1)`` on the full space.  With ``basis``
    the operator is built directly on that sub-basis, which must be closed
    under the action.
    """
    N = op.N if N is None else N
    if op.n != 2 or op.dim != N * N:
        raise ValueError("embed expects an operator on two sites over the full N^2 basis")
    if not 1 <= j <= n - 1:
        raise ValueError(f"site index j={j} outside 1..{n - 1}")
    words = all_words(n, N) if basis is None else [tuple(w) for w in basis]
    index = {w: i for i, w in enumerate(words)}
    d = len(words)
    if op.exact:
        mat = np.full((d, d), mpq(0), dtype=object)
    else:
        mat = np.zeros((d, d))
    local_cols = {w: op.column(w) for w in op.basis}
    for c, w in enumerate(words):
        for pair, coef in local_cols[w[j - 1 : j + 1]].items():
            target = w[: j - 1] + pair + w[j + 1 :]
            try:
                r = index[target]
            except KeyError:
                raise ValueError(f"basis is not closed: {w} maps to {target}") from None
            mat[r, c] = mat[r, c] + coef
    return SpeciesOperator(mat, words, N, _trusted=True)


# ------------------------------------------------------------- exact elimination


def _fraction_free_reduce(rows: list, n: int) -> list:
    """Fraction-free Gauss-Jordan on an integer augmented matrix, in place.

    On return the left ``n x n`` part is ``d * I`` with ``d`` the last pivot.
    Every division is exact (Bareiss); intermediate entries are minors of the
    input, so their size stays polynomial.
    """
    width = len(rows[0])
    prev = 1
    for k in range(n):
        pivot = next((r for r in range(k, n) if rows[r][k] != 0), None)
        if pivot is None:
            raise SingularMatrixError(k, n)
        if pivot != k:
            rows[k], rows[pivot] = rows[pivot], rows[k]
        rk = rows[k]
        pk = rk[k]
        for i in range(n):
            if i == k:
                continue
            ri = rows[i]
            mik = ri[k]
            if mik:
                rows[i] = [(pk * ri[c] - mik * rk[c]) // prev for c in range(width)]
            elif pk != prev:
                rows[i] = [(pk * x) // prev for x in ri]
        prev = pk
    return rows


def _integer_rows(a_rows, b_rows) -> list:
    out = []
    for ar, br in zip(a_rows, b_rows):
        row = [rational(x) for x in ar] + [rational(x) for x in br]
        den = 1
        for x in row:
            den = math.lcm(den, int(x.denominator))
        out.append([int(x.numerator) * (den // int(x.denominator)) for x in row])
    return out


def exact_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` exactly; ``a`` square, ``b`` a matrix of right-hand sides."""
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    if b.ndim == 1:
        return exact_solve(a, b.reshape(-1, 1))[:, 0]
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if n == 0:
        return np.empty((0, b.shape[1]), dtype=object)
    rows = _fraction_free_reduce(_integer_rows(a, b), n)
    out = np.empty((n, b.shape[1]), dtype=object)
    for i in range(n):
        d = rows[i][i]
        for j in range(b.shape[1]):
            out[i, j] = mpq(rows[i][n + j], d)
    return out


def exact_inverse(a: SpeciesOperator) -> SpeciesOperator:
    """Exact inverse by fraction-free elimination.

    Raises :class:`SingularMatrixError` carrying the pivot row at which rank
    deficiency showed up.
    """
    if not a.exact:
        raise TypeError("exact_inverse requires an exact (rational) operator")
    eye = identity(a.basis, a.N).matrix
    return SpeciesOperator(exact_solve(a.matrix, eye), a.basis, a.N, _trusted=True)


def is_invertible(a: SpeciesOperator) -> bool:
    try:
        exact_inverse(a)
    except SingularMatrixError:
        return False
    return True


# ---------------------------------------------------------------------- spectra


def spectral_radius(a) -> float:
    """Largest eigenvalue modulus, from a full LAPACK eigensolve.

    Accepts a :class:`SpeciesOperator` (exact ones are converted to float) or
    an array.  Nilpotent parts are computed with error of order ``eps**(1/k)``
    for Jordan blocks of size ``k``; callers interested in radii well away from
    zero are unaffected.
    """
    mat = a.to_float().matrix if isinstance(a, SpeciesOperator) else np.asarray(a, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    if mat.size == 0:
        return 0.0
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise SpectralEstimationError(str(exc)) from exc
    return float(np.max(np.abs(eig)))
