"""Exact linear algebra over the rationals."""

from __future__ import annotations

from fractions import Fraction
from math import lcm
from typing import Sequence


def integer_row(row: Sequence[Fraction]) -> list[int]:
    """Scale a rational row by the lcm of its denominators."""
    den = 1
    for x in row:
        den = lcm(den, Fraction(x).denominator)
    return [int(Fraction(x) * den) for x in row]


def bareiss_rank(rows: Sequence[Sequence]) -> int:
    """Rank by fraction-free Gaussian elimination.

    Rational rows are first scaled to integers; every intermediate entry then
    stays an integer (each division below is exact by Sylvester's identity).
    """
    m = [integer_row(r) for r in rows]
    if not m:
        return 0
    ncols = len(m[0])
    nrows = len(m)
    rank = 0
    prev = 1
    for col in range(ncols):
        if rank == nrows:
            break
        pivot = next((r for r in range(rank, nrows) if m[r][col] != 0), None)
        if pivot is None:
            continue
        if pivot != rank:
            m[rank], m[pivot] = m[pivot], m[rank]
        p = m[rank][col]
        for r in range(rank + 1, nrows):
            row = m[r]
            f = row[col]
            top = m[rank]
            for c in range(col + 1, ncols):
                row[c] = (p * row[c] - f * top[c]) // prev
            row[col] = 0
        prev = p
        rank += 1
    return rank


def matrix_rank(rows: Sequence[Sequence]) -> int:
    return bareiss_rank(rows)


def transpose(rows: Sequence[Sequence]) -> list[list]:
    return [list(col) for col in zip(*rows)]


def solve_left(rows: Sequence[Sequence], target: Sequence) -> list[Fraction] | None:
    """Find c with sum_r c[r] * rows[r] == target, or None if target is not in the row space."""
    nr = len(rows)
    if nr == 0:
        return None if any(t != 0 for t in target) else []
    # Columns of the system are the rows; solve M c = target with M = rows^T.
    ncols = len(target)
    aug = [[Fraction(rows[r][c]) for r in range(nr)] + [Fraction(target[c])] for c in range(ncols)]
    pivots = []
    prow = 0
    for col in range(nr):
        piv = next((i for i in range(prow, ncols) if aug[i][col] != 0), None)
        if piv is None:
            continue
        aug[prow], aug[piv] = aug[piv], aug[prow]
        inv = 1 / aug[prow][col]
        aug[prow] = [x * inv for x in aug[prow]]
        for i in range(ncols):
            if i != prow and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[prow])]
        pivots.append(col)
        prow += 1
        if prow == ncols:
            break
    for i in range(prow, ncols):
        if aug[i][nr] != 0:
            return None
    sol = [Fraction(0)] * nr
    for i, col in enumerate(pivots):
        sol[col] = aug[i][nr]
    return sol
