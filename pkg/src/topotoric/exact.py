"""Exact linear algebra over Q and Q(i), integer Smith form, exact LP feasibility."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Sequence

__all__ = [
    "GaussianRational",
    "rref",
    "rank",
    "inverse",
    "transpose",
    "matmul",
    "smith_diagonal",
    "lp_feasible",
    "LPResult",
]


@dataclass(frozen=True, slots=True)
class GaussianRational:
    """An element ``re + i im`` of Q(i)."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @staticmethod
    def _lift(x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        return GaussianRational(Fraction(x), Fraction(0))

    def __add__(self, other):
        o = self._lift(other)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __mul__(self, other):
        o = self._lift(other)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero in Q(i)")
        return GaussianRational(
            (self.re * o.re + self.im * o.im) / den, (self.im * o.re - self.re * o.im) / den
        )

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"({self.re}+{self.im}i)"


def rref(rows: Sequence[Sequence], ncols: int | None = None):
    """Reduced row echelon form of a matrix over a field.

    Returns ``(reduced_rows, pivot_columns)``; zero rows are dropped.
    """
    m = [list(r) for r in rows]
    if ncols is None:
        ncols = len(m[0]) if m else 0
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][col]
        m[r] = [x / p for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][col] != 0:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
        if r == len(m):
            break
    return [tuple(row) for row in m[:r]], pivots


def rank(rows: Sequence[Sequence]) -> int:
    if not rows:
        return 0
    return len(rref(rows)[1])


def transpose(m):
    return [list(col) for col in zip(*m)]


def matmul(a, b):
    bt = transpose(b)
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in bt] for row in a]


def inverse(m: Sequence[Sequence]) -> list[list]:
    """Exact inverse of a square matrix over a field; raises on singular input."""
    n = len(m)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    red, piv = rref(aug, 2 * n)
    if piv[:n] != list(range(n)) or len(red) < n:
        raise ZeroDivisionError("matrix is singular")
    return [list(row[n:]) for row in red]


def smith_diagonal(m: Sequence[Sequence[int]]) -> list[int]:
    """Elementary divisors of an integer matrix (nonnegative, divisibility chain)."""
    a = [[int(x) for x in row] for row in m]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    diag = []
    t = 0
    while t < min(rows, cols):
        nz = [(abs(a[i][j]), i, j) for i in range(t, rows) for j in range(t, cols) if a[i][j]]
        if not nz:
            break
        _, i0, j0 = min(nz)
        a[t], a[i0] = a[i0], a[t]
        for row in a:
            row[t], row[j0] = row[j0], row[t]
        while True:
            p = a[t][t]
            bad = False
            for i in range(t + 1, rows):
                q = a[i][t] // p
                if q:
                    a[i] = [x - q * y for x, y in zip(a[i], a[t])]
                if a[i][t]:
                    bad = True
            for j in range(t + 1, cols):
                q = a[t][j] // p
                if q:
                    for row in a:
                        row[j] -= q * row[t]
                if a[t][j]:
                    bad = True
            if bad:
                nz = [(abs(a[i][t]), i, t) for i in range(t + 1, rows) if a[i][t]]
                nz += [(abs(a[t][j]), t, j) for j in range(t + 1, cols) if a[t][j]]
                _, i1, j1 = min(nz)
                if j1 == t:
                    a[t], a[i1] = a[i1], a[t]
                else:
                    for row in a:
                        row[t], row[j1] = row[j1], row[t]
                continue
            # divisibility: fold in any remaining entry not divisible by the pivot
            off = next(
                ((i, j) for i in range(t + 1, rows) for j in range(t + 1, cols) if a[i][j] % p),
                None,
            )
            if off is None:
                break
            a[t] = [x + y for x, y in zip(a[t], a[off[0]])]
        diag.append(abs(a[t][t]))
        t += 1
    return diag


@dataclass
class LPResult:
    feasible: bool
    point: list[Fraction] | None


def lp_feasible(a: Sequence[Sequence], b: Sequence) -> LPResult:
    """Decide ``{x >= 0 : A x = b}`` exactly by Phase-1 simplex with Bland's rule."""
    a = [[Fraction(x) for x in row] for row in a]
    b = [Fraction(x) for x in b]
    m = len(a)
    n = len(a[0]) if m else 0
    for i in range(m):
        if b[i] < 0:
            a[i] = [-x for x in a[i]]
            b[i] = -b[i]
    # tableau columns: n originals, m artificials, rhs
    tab = [a[i] + [Fraction(int(i == j)) for j in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]
    width = n + m
    cost = [Fraction(0)] * n + [Fraction(1)] * m

    def reduced(j):
        return cost[j] - sum((cost[basis[i]] * tab[i][j] for i in range(m)), Fraction(0))

    while True:
        enter = next((j for j in range(width) if reduced(j) < 0), None)
        if enter is None:
            break
        ratios = [
            (tab[i][-1] / tab[i][enter], basis[i], i) for i in range(m) if tab[i][enter] > 0
        ]
        if not ratios:  # unbounded below cannot happen for phase 1
            raise RuntimeError("phase-1 objective unbounded")
        _, _, leave = min(ratios)
        p = tab[leave][enter]
        tab[leave] = [x / p for x in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter] != 0:
                f = tab[i][enter]
                tab[i] = [x - f * y for x, y in zip(tab[i], tab[leave])]
        basis[leave] = enter
    x = [Fraction(0)] * width
    for i, j in enumerate(basis):
        x[j] = tab[i][-1]
    if any(x[n + i] != 0 for i in range(m)):
        return LPResult(False, None)
    return LPResult(True, x[:n])


def primitive(vec: Sequence[int]) -> bool:
    g = 0
    for x in vec:
        g = gcd(g, int(x))
    return g == 1
