"""Generalized exponents: the ring R = C x Z, characters and cocharacters.

An element ``(b + i c, v)`` of R acts as an exponent on ``g in C*`` through

    g ** (b + i c, v) = |g| ** (b + i c) * (g / |g|) ** v

Multiplication is transported from the ring of lower-triangular matrices
``[[b, 0], [c, v]]`` so that ``matrix_embed`` is a ring homomorphism.  With
this convention the power law reads ``pow(pow(g, m1), m2) == pow(g, m2 * m1)``
and ``char_eval(a, cochar_eval(b, g)) == pow(g, bracket(a, b))``.

Exact parts (b, c rational, v integer) are kept as ``fractions.Fraction`` and
``int``; numeric evaluation uses double precision complex.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "RScalar",
    "RVector",
    "TorusPoint",
    "ONE",
    "ZERO",
    "r_add",
    "r_mul",
    "matrix_embed",
    "bracket",
    "rpow",
    "char_eval",
    "cochar_eval",
    "ge_s",
    "parse_fraction",
]


def parse_fraction(value) -> Fraction:
    """Coerce ``"p/q"`` strings, ints and Fractions to ``Fraction``.

    Floats are refused: exact data must stay exact.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot read {value!r} as an exact rational")


@dataclass(frozen=True, slots=True)
class RScalar:
    """An element ``(b + i c, v)`` of R."""

    b: Fraction = Fraction(0)
    c: Fraction = Fraction(0)
    v: int = 0

    def __post_init__(self):
        object.__setattr__(self, "b", parse_fraction(self.b))
        object.__setattr__(self, "c", parse_fraction(self.c))
        if isinstance(self.v, Fraction):
            if self.v.denominator != 1:
                raise ValueError(f"winding part must be an integer, got {self.v}")
            object.__setattr__(self, "v", int(self.v))
        elif not isinstance(self.v, (int, np.integer)) or isinstance(self.v, bool):
            raise TypeError(f"winding part must be an integer, got {self.v!r}")
        else:
            object.__setattr__(self, "v", int(self.v))

    @classmethod
    def integer(cls, k: int) -> "RScalar":
        """The image of ``k`` under Z -> R, i.e. ``(k + 0i, k)``."""
        return cls(Fraction(k), Fraction(0), k)

    def __add__(self, other: "RScalar") -> "RScalar":
        return r_add(self, other)

    def __sub__(self, other: "RScalar") -> "RScalar":
        return RScalar(self.b - other.b, self.c - other.c, self.v - other.v)

    def __neg__(self) -> "RScalar":
        return RScalar(-self.b, -self.c, -self.v)

    def __mul__(self, other: "RScalar") -> "RScalar":
        return r_mul(self, other)

    def is_zero(self) -> bool:
        return self.b == 0 and self.c == 0 and self.v == 0

    def conj(self) -> "RScalar":
        """Exponent of the complex conjugate character: ``conj(g**m) == g**m.conj()``."""
        return RScalar(self.b, -self.c, -self.v)

    def to_json(self) -> dict:
        return {"b": _frac_str(self.b), "c": _frac_str(self.c), "v": self.v}

    @classmethod
    def from_json(cls, obj) -> "RScalar":
        if isinstance(obj, RScalar):
            return obj
        if not isinstance(obj, dict) or set(obj) - {"b", "c", "v"}:
            raise ValueError(f"malformed RScalar {obj!r}")
        return cls(parse_fraction(obj.get("b", 0)), parse_fraction(obj.get("c", 0)), obj.get("v", 0))

    def __str__(self) -> str:
        c = self.c
        sign = "-" if c < 0 else "+"
        return f"({_frac_str(self.b)}{sign}{_frac_str(abs(c))}i,{self.v})"

    __repr__ = __str__


def _frac_str(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


ZERO = RScalar(0, 0, 0)
ONE = RScalar(1, 0, 1)


def r_add(x: RScalar, y: RScalar) -> RScalar:
    return RScalar(x.b + y.b, x.c + y.c, x.v + y.v)


def r_mul(x: RScalar, y: RScalar) -> RScalar:
    """Product in R; ``matrix_embed(r_mul(x, y)) == matrix_embed(x) @ matrix_embed(y)``.

    Not commutative: the imaginary part is ``c_x b_y + v_x c_y``.
    """
    return RScalar(x.b * y.b, x.c * y.b + x.v * y.c, x.v * y.v)


def matrix_embed(x: RScalar) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
    """The matrix ``[[b, 0], [c, v]]`` as nested tuples of Fractions."""
    return ((x.b, Fraction(0)), (x.c, Fraction(x.v)))


class RVector:
    """A fixed-length tuple of RScalars (an exponent vector in R^n)."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Iterable[RScalar]):
        entries = tuple(entries)
        for e in entries:
            if not isinstance(e, RScalar):
                raise TypeError(f"RVector entries must be RScalar, got {type(e).__name__}")
        self._entries = entries

    @classmethod
    def zero(cls, n: int) -> "RVector":
        return cls([ZERO] * n)

    @classmethod
    def unit(cls, n: int, k: int, value: RScalar = ONE) -> "RVector":
        """``value`` in slot ``k`` (0-based), zero elsewhere."""
        return cls([value if i == k else ZERO for i in range(n)])

    @classmethod
    def from_parts(cls, b: Sequence, c: Sequence, v: Sequence[int]) -> "RVector":
        if not len(b) == len(c) == len(v):
            raise ValueError("part lengths differ")
        return cls(RScalar(bb, cc, vv) for bb, cc, vv in zip(b, c, v))

    @classmethod
    def integral(cls, v: Sequence[int]) -> "RVector":
        """Classical exponent: ``b = v``, ``c = 0``."""
        return cls(RScalar.integer(int(k)) for k in v)

    @classmethod
    def from_json(cls, obj) -> "RVector":
        if isinstance(obj, RVector):
            return obj
        if not isinstance(obj, list):
            raise ValueError(f"RVector must be a list, got {obj!r}")
        return cls(RScalar.from_json(e) for e in obj)

    def to_json(self) -> list:
        return [e.to_json() for e in self._entries]

    @property
    def entries(self) -> tuple[RScalar, ...]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[RScalar]:
        return iter(self._entries)

    def __getitem__(self, k):
        return self._entries[k]

    def __eq__(self, other) -> bool:
        return isinstance(other, RVector) and self._entries == other._entries

    def __hash__(self) -> int:
        return hash(self._entries)

    def _check_len(self, other: "RVector") -> None:
        if len(self) != len(other):
            raise ValueError(f"length mismatch: {len(self)} vs {len(other)}")

    def __add__(self, other: "RVector") -> "RVector":
        self._check_len(other)
        return RVector(x + y for x, y in zip(self, other))

    def __sub__(self, other: "RVector") -> "RVector":
        self._check_len(other)
        return RVector(x - y for x, y in zip(self, other))

    def __neg__(self) -> "RVector":
        return RVector(-x for x in self)

    def lmul(self, t: RScalar) -> "RVector":
        """Componentwise left multiplication ``t * a^k``."""
        return RVector(r_mul(t, x) for x in self)

    def conj(self) -> "RVector":
        return RVector(x.conj() for x in self)

    def is_zero(self) -> bool:
        return all(x.is_zero() for x in self)

    @property
    def b(self) -> np.ndarray:
        return np.array([float(x.b) for x in self], dtype=float)

    @property
    def c(self) -> np.ndarray:
        return np.array([float(x.c) for x in self], dtype=float)

    @property
    def v(self) -> np.ndarray:
        return np.array([x.v for x in self], dtype=np.int64)

    def __repr__(self) -> str:
        return "RVector[" + ", ".join(str(x) for x in self) + "]"


def bracket(a: RVector, b: RVector) -> RScalar:
    """``<a, b> = sum_k a^k b^k``; in general ``<a, b> != <b, a>``."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    acc = ZERO
    for x, y in zip(a, b):
        acc = r_add(acc, r_mul(x, y))
    return acc


class TorusPoint:
    """A point ``t = r * exp(i theta)`` of (C*)^n.

    ``coords`` may carry leading batch axes; the last axis has length n.
    """

    __slots__ = ("coords",)

    def __init__(self, coords):
        coords = np.asarray(coords, dtype=complex)
        if coords.ndim == 0:
            coords = coords.reshape(1)
        if np.any(coords == 0):
            raise ValueError("torus coordinates must be nonzero")
        self.coords = coords

    @classmethod
    def from_polar(cls, r, theta) -> "TorusPoint":
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("moduli must be positive")
        return cls(r * np.exp(1j * np.asarray(theta, dtype=float)))

    @property
    def n(self) -> int:
        return self.coords.shape[-1]

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.coords)

    @property
    def argument(self) -> np.ndarray:
        return np.angle(self.coords)

    def __mul__(self, other: "TorusPoint") -> "TorusPoint":
        return TorusPoint(self.coords * other.coords)

    def inverse(self) -> "TorusPoint":
        return TorusPoint(1.0 / self.coords)

    def __repr__(self) -> str:
        return f"TorusPoint({self.coords!r})"


def rpow(g, mu: RScalar):
    """``g ** mu = exp((b + i c) log|g|) * (g / |g|) ** v`` with the real logarithm.

    ``g == 0`` is allowed only for ``mu == ONE`` (result 0) and ``mu == ZERO``
    (result 1).  Accepts scalars or arrays.
    """
    g_arr = np.asarray(g, dtype=complex)
    zero = g_arr == 0
    if np.any(zero):
        if mu == ONE:
            pass
        elif mu.is_zero():
            pass
        else:
            raise ZeroDivisionError(f"0 ** {mu} is undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _rpow_nonzero(np.where(zero, 1.0, g_arr), float(mu.b), float(mu.c), mu.v)
    if np.any(zero):
        out = np.where(zero, 0.0 if mu == ONE else 1.0, out)
    if np.ndim(g) == 0:
        return complex(out)
    return out


def _rpow_nonzero(g: np.ndarray, b: float, c: float, v: int) -> np.ndarray:
    mod = np.abs(g)
    log_mod = np.log(mod)
    phase = np.angle(g)
    return np.exp(b * log_mod) * np.exp(1j * (c * log_mod + v * phase))


def _as_coords(t) -> np.ndarray:
    if isinstance(t, TorusPoint):
        return t.coords
    coords = np.asarray(t, dtype=complex)
    if np.any(coords == 0):
        raise ValueError("torus coordinates must be nonzero")
    return coords


def char_eval(alpha: RVector, t):
    """``chi^alpha(t) = prod_k t_k ** alpha^k``; batched over leading axes of ``t``."""
    coords = _as_coords(t)
    if coords.shape[-1] != len(alpha):
        raise ValueError(f"length mismatch: {len(alpha)} vs {coords.shape[-1]}")
    log_mod = np.log(np.abs(coords))
    phase = np.angle(coords)
    expo = log_mod @ (alpha.b + 1j * alpha.c) + 1j * (phase @ alpha.v.astype(float))
    out = np.exp(expo)
    return complex(out) if np.ndim(out) == 0 else out


def cochar_eval(beta: RVector, g) -> TorusPoint:
    """``lambda_beta(g) = (g ** beta^1, ..., g ** beta^n)``."""
    g_arr = np.asarray(g, dtype=complex)
    if np.any(g_arr == 0):
        raise ZeroDivisionError("cocharacters are defined on C*")
    return TorusPoint(np.stack([np.asarray(rpow(g_arr, mu)) for mu in beta], axis=-1))


def ge_s(x: RScalar, y: RScalar) -> bool:
    """The partial order: ``x - y`` has c = 0, b in N and b +/- v in 2N."""
    d = x - y
    if d.c != 0 or d.b.denominator != 1:
        return False
    b = d.b.numerator
    return b >= 0 and b + d.v >= 0 and b - d.v >= 0 and (b + d.v) % 2 == 0
