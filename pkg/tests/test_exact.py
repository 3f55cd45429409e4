from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog
from sympy.matrices.normalforms import smith_normal_form

from topotoric.exact import GaussianRational, inverse, lp_feasible, rank, rref, smith_diagonal

small = st.integers(-4, 4)


@settings(max_examples=60)
@given(st.lists(st.lists(small, min_size=4, max_size=4), min_size=1, max_size=4))
def test_rref_matches_sympy(rows):
    red, piv = rref([[Fraction(x) for x in r] for r in rows])
    ref, ref_piv = sp.Matrix(rows).rref()
    assert tuple(piv) == tuple(ref_piv)
    nz = [tuple(Fraction(str(x)) for x in ref.row(i)) for i in range(len(ref_piv))]
    assert red == nz


@settings(max_examples=60)
@given(st.lists(st.lists(st.integers(-6, 6), min_size=3, max_size=3), min_size=3, max_size=3))
def test_smith_matches_sympy(m):
    ours = smith_diagonal(m)
    snf = smith_normal_form(sp.Matrix(m), domain=sp.ZZ)
    ref = [abs(int(snf[i, i])) for i in range(3) if snf[i, i] != 0]
    assert ours == ref


def test_smith_examples():
    assert smith_diagonal([[1, 0], [0, 1]]) == [1, 1]
    assert smith_diagonal([[1, 1], [1, -1]]) == [1, 2]
    assert smith_diagonal([[2]]) == [2]


def test_inverse_roundtrip(rng):
    for _ in range(20):
        m = [[Fraction(int(x)) for x in row] for row in rng.integers(-5, 6, size=(3, 3))]
        if rank(m) < 3:
            with pytest.raises(ZeroDivisionError):
                inverse(m)
            continue
        inv = inverse(m)
        prod = [[sum(m[i][k] * inv[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
        assert prod == [[int(i == j) for j in range(3)] for i in range(3)]


def test_gaussian_field():
    z = GaussianRational(Fraction(1, 2), 3)
    w = GaussianRational(-1, Fraction(2, 3))
    assert z * w / w == z
    assert complex(z * w) == pytest.approx(complex(z) * complex(w))
    red, piv = rref([[z, w], [z * 2, w * 2]])
    assert len(red) == 1 and piv == [0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(small, min_size=4, max_size=4), min_size=2, max_size=3),
       st.lists(small, min_size=3, max_size=3))
def test_lp_matches_scipy(a, b):
    b = b[: len(a)]
    res = lp_feasible(a, b)
    ref = linprog(np.zeros(4), A_eq=np.array(a, float), b_eq=np.array(b, float),
                  bounds=[(0, None)] * 4, method="highs")
    assert res.feasible == (ref.status == 0)
    if res.feasible:
        x = res.point
        assert all(xi >= 0 for xi in x)
        assert all(sum(Fraction(r[j]) * x[j] for j in range(4)) == bi for r, bi in zip(a, b))
