"""Integer lattice helpers: Smith normal form with transforms and Bezout coefficients."""
import logging
from math import gcd, lcm
from typing import List, Optional, Sequence, Tuple

from sympy import Matrix, Rational

logger = logging.getLogger(__name__)


def bezout(values: Sequence[int]) -> Tuple[int, List[int]]:
    """Return (g, coeffs) with sum(c * v) == g == gcd(values) and g >= 0"""
    g, coeffs = 0, [0] * len(values)
    for idx, value in enumerate(values):
        # extended Euclid on (g, value), folding the running coefficients
        old_r, r = g, int(value)
        old_s, s = 1, 0
        old_t, t = 0, 1
        while r != 0:
            q = old_r // r
            old_r, r = r, old_r - q * r
            old_s, s = s, old_s - q * s
            old_t, t = t, old_t - q * t
        if old_r < 0:
            old_r, old_s, old_t = -old_r, -old_s, -old_t
        coeffs = [c * old_s for c in coeffs]
        coeffs[idx] = old_t
        g = old_r
    return g, coeffs


def _move_smallest_to_pivot(M: Matrix, L: Matrix, R: Matrix, s: int) -> bool:
    rows, cols = M.shape
    pos, best = None, None
    for i in range(s, rows):
        for j in range(s, cols):
            if M[i, j] != 0 and (best is None or abs(M[i, j]) < best):
                pos, best = (i, j), abs(M[i, j])
    if pos is None:
        return False
    if pos[0] != s:
        M.row_swap(s, pos[0])
        L.row_swap(s, pos[0])
    if pos[1] != s:
        M.col_swap(s, pos[1])
        R.col_swap(s, pos[1])
    return True


def _reduce_edges(M: Matrix, L: Matrix, R: Matrix, s: int) -> bool:
    """Reduce column s and row s modulo the pivot; True when both are cleared"""
    rows, cols = M.shape
    pivot = M[s, s]
    for i in range(s + 1, rows):
        q = M[i, s] // pivot
        if q:
            M.row_op(i, lambda val, col: val - q * M[s, col])
            L.row_op(i, lambda val, col: val - q * L[s, col])
    for j in range(s + 1, cols):
        q = M[s, j] // pivot
        if q:
            M.col_op(j, lambda val, row: val - q * M[row, s])
            R.col_op(j, lambda val, row: val - q * R[row, s])
    return M[s + 1:, s].is_zero_matrix and M[s, s + 1:].is_zero_matrix


def _first_non_multiple(M: Matrix, s: int) -> Optional[int]:
    rows, cols = M.shape
    for i in range(s + 1, rows):
        for j in range(s + 1, cols):
            if M[i, j] % M[s, s] != 0:
                return i
    return None


def smith_form(A) -> Tuple[Matrix, Matrix, Matrix, int]:
    """Smith normal form D = L * A * R with unimodular L, R.

    Diagonal entries are nonnegative and each divides the next; returns
    (D, L, R, rank).
    """
    M = Matrix(A).applyfunc(int)
    rows, cols = M.shape
    L, R = Matrix.eye(rows), Matrix.eye(cols)

    rank = 0
    for s in range(min(rows, cols)):
        while True:
            if not _move_smallest_to_pivot(M, L, R, s):
                return M, L, R, rank
            if not _reduce_edges(M, L, R, s):
                continue
            i = _first_non_multiple(M, s)
            if i is None:
                break
            M.row_op(s, lambda val, col: val + M[i, col])
            L.row_op(s, lambda val, col: val + L[i, col])
        if M[s, s] < 0:
            M.row_op(s, lambda val, col: -val)
            L.row_op(s, lambda val, col: -val)
        rank = s + 1
    return M, L, R, rank


class TGroup:
    """Set of u = t/2π (mod 1) admitting some v with A @ (u, v) integral.

    Rows of A are (W, -l) for the cycle congruences t*W - theta*l in 2πZ.
    """

    def __init__(self, rows: Sequence[Tuple[int, int]]):
        self.rows = [tuple(int(x) for x in row) for row in rows]
        if self.rows:
            D, _, R, rank = smith_form(Matrix(self.rows))
        else:
            D, R, rank = Matrix.zeros(0, 2), Matrix.eye(2), 0
        self.R = R
        self.rank = rank
        self.invariant_factors = [int(D[i, i]) for i in range(rank)]
        self.first_row = [int(R[0, i]) for i in range(2)]
        self.continuum = any(self.first_row[i] != 0 for i in range(rank, 2))
        self.order = 0 if self.continuum else int(lcm(*[
            d // gcd(d, w) for d, w in zip(self.invariant_factors, self.first_row)
        ]))
        logger.debug(f"Cycle lattice factors {self.invariant_factors}, t-group order {self.order}")

    @property
    def trivial(self) -> bool:
        return not self.continuum and self.order == 1

    def witness(self) -> Optional[Tuple[Rational, Rational]]:
        """(u, v) with u as close to 1/2 as the group allows; None if trivial"""
        if self.trivial:
            return None
        z = [Rational(0)] * 2
        if self.continuum:
            j = next(i for i in range(self.rank, 2) if self.first_row[i] != 0)
            z[j] = Rational(1, 2) / self.first_row[j]
        else:
            g = self.order
            # generators w_i/d_i scaled by g are integers; together with g their gcd is 1
            scaled = [w * g // d for d, w in zip(self.invariant_factors, self.first_row)]
            one, coeffs = bezout(scaled + [g])
            assert one == 1
            half = g // 2
            for i, d in enumerate(self.invariant_factors):
                z[i] = Rational(coeffs[i] * half, d)
        uv = self.R * Matrix(z)
        u = uv[0] - (uv[0] // 1)
        v = uv[1] - (uv[1] // 1)
        return u, v
