"""Klyachko filtration data: exact subspaces, per-cone compatibility, certificates.

A compatible cone I comes with a grading ``E = sum_t G(t)`` over tuples ``t``
of jump values (one per ray of I) such that for every ray i in I and every
jump mu::

    E^i(mu) = sum of G(t) over t with t_i >= mu

Compatibility is decided by a dimension ledger: with ``W(t) = cap_i E^i(t_i)``
and ``D(t) = sum_{t' > t} W(t')`` the cone is compatible iff
``sum_t dim W(t) - dim D(t) == rank``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .exact import GaussianRational, rref
from .fan import Fan, dual_family, load_fan
from .rring import ZERO, RScalar, RVector, bracket, ge_s

__all__ = [
    "Subspace",
    "KlyachkoData",
    "KlyachkoFormatError",
    "GradingCertificate",
    "Incompatible",
    "CompatibilityReport",
    "check_cone",
    "check_all",
    "char_rep",
    "check_morphism",
    "verify_certificate",
    "coarsen",
    "load_klyachko",
]

Order = Callable[[RScalar, RScalar], bool]


class KlyachkoFormatError(ValueError):
    pass


class Subspace:
    """A subspace of ``F^r`` stored by its canonical reduced row echelon basis."""

    __slots__ = ("ambient", "basis", "field")

    def __init__(self, ambient: int, rows: Sequence[Sequence] = (), field: str = "Q"):
        self.ambient = ambient
        self.field = field
        conv = _converter(field)
        mat = [[conv(x) for x in row] for row in rows]
        for row in mat:
            if len(row) != ambient:
                raise ValueError(f"vector of length {len(row)} in ambient dimension {ambient}")
        self.basis = tuple(rref(mat, ambient)[0]) if mat else ()

    @classmethod
    def full(cls, ambient: int, field: str = "Q") -> "Subspace":
        return cls(ambient, [[int(i == j) for j in range(ambient)] for i in range(ambient)], field)

    @classmethod
    def zero(cls, ambient: int, field: str = "Q") -> "Subspace":
        return cls(ambient, (), field)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def _compat(self, other: "Subspace") -> None:
        if self.ambient != other.ambient:
            raise ValueError(f"ambient dimensions differ: {self.ambient} vs {other.ambient}")

    def __add__(self, other: "Subspace") -> "Subspace":
        self._compat(other)
        return Subspace(self.ambient, self.basis + other.basis, self.field)

    def __and__(self, other: "Subspace") -> "Subspace":
        return intersect(self, other)

    def __le__(self, other: "Subspace") -> bool:
        self._compat(other)
        return (self + other).dim == other.dim

    def __eq__(self, other) -> bool:
        return isinstance(other, Subspace) and self.ambient == other.ambient and self.basis == other.basis

    def __hash__(self) -> int:
        return hash((self.ambient, self.basis))

    def contains(self, vec: Sequence) -> bool:
        return Subspace(self.ambient, self.basis + (tuple(vec),), self.field).dim == self.dim

    def image(self, matrix: Sequence[Sequence], target_dim: int) -> "Subspace":
        rows = [[sum((row[j] * vec[j] for j in range(self.ambient)), Fraction(0)) for row in matrix]
                for vec in self.basis]
        return Subspace(target_dim, rows, self.field)

    def to_json(self) -> list:
        return [[_entry_json(x) for x in row] for row in self.basis]

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient={self.ambient})"


def intersect(s: Subspace, t: Subspace) -> Subspace:
    """Zassenhaus: reduce ``[[s, s], [t, 0]]``; rows with zero left half span the meet."""
    s._compat(t)
    r = s.ambient
    if not s.basis or not t.basis:
        return Subspace.zero(r, s.field)
    zero = [Fraction(0)] * r
    rows = [list(v) + list(v) for v in s.basis] + [list(v) + zero for v in t.basis]
    red, _ = rref(rows, 2 * r)
    meet = [row[r:] for row in red if all(x == 0 for x in row[:r])]
    return Subspace(r, meet, s.field)


def complement_in(s: Subspace, d: Subspace) -> Subspace:
    """A direct complement of ``d`` inside ``s`` (requires ``d <= s``)."""
    if not d <= s:
        raise ValueError("complement_in needs d to be contained in s")
    picked = []
    cur = d
    for v in s.basis:
        nxt = Subspace(s.ambient, cur.basis + (v,), s.field)
        if nxt.dim > cur.dim:
            picked.append(v)
            cur = nxt
    return Subspace(s.ambient, picked, s.field)


def span_sum(spaces, ambient: int, field: str = "Q") -> Subspace:
    rows = []
    for sp in spaces:
        rows.extend(sp.basis)
    return Subspace(ambient, rows, field)


def _converter(field: str):
    if field == "Q":
        return _to_fraction
    if field == "Q(i)":
        return _to_gaussian
    raise ValueError(f"unknown field {field!r}; use 'Q' or 'Q(i)'")


def _to_fraction(x) -> Fraction:
    if isinstance(x, GaussianRational):
        if x.im != 0:
            raise ValueError("non-real entry over Q; use field 'Q(i)'")
        return x.re
    if isinstance(x, float):
        raise TypeError("floating point entries are not exact")
    if isinstance(x, (list, tuple)):
        raise ValueError("complex entry over Q; use field 'Q(i)'")
    return Fraction(x) if not isinstance(x, str) else Fraction(x.strip())


def _to_gaussian(x) -> GaussianRational:
    if isinstance(x, GaussianRational):
        return x
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ValueError(f"Gaussian rational needs [re, im], got {x!r}")
        return GaussianRational(_to_fraction(x[0]), _to_fraction(x[1]))
    return GaussianRational(_to_fraction(x), Fraction(0))


def _entry_json(x):
    if isinstance(x, GaussianRational):
        return [_frac(x.re), _frac(x.im)]
    return _frac(Fraction(x))


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# filtration data


@dataclass
class Filtration:
    """Jumps of one ray, strictly decreasing in the order; the last one is the full space."""

    jumps: list  # list of (RScalar, Subspace)

    def values(self) -> list[RScalar]:
        return [mu for mu, _ in self.jumps]

    def at(self, mu: RScalar, order: Order, ambient: int, field: str) -> Subspace:
        """``E(mu)``: sum of listed subspaces at jumps ``nu >= mu``."""
        return span_sum((s for nu, s in self.jumps if order(nu, mu)), ambient, field)


@dataclass
class KlyachkoData:
    fan: Fan
    rank: int
    filtrations: dict  # ray -> Filtration
    field: str = "Q"
    order: Order = ge_s

    def __post_init__(self):
        for i in range(1, self.fan.m + 1):
            if i not in self.filtrations:
                self.filtrations[i] = Filtration([(ZERO, Subspace.full(self.rank, self.field))])
        for i, filt in self.filtrations.items():
            if not 1 <= i <= self.fan.m:
                raise KlyachkoFormatError(f"filtration given for unknown ray {i}")
            self._check_filtration(i, filt)

    def _check_filtration(self, ray: int, filt: Filtration) -> None:
        if not filt.jumps:
            raise KlyachkoFormatError(f"ray {ray}: empty filtration")
        for mu, s in filt.jumps:
            if s.ambient != self.rank:
                raise KlyachkoFormatError(f"ray {ray}: subspace ambient {s.ambient} != rank {self.rank}")
        vals = filt.values()
        for a in range(len(vals)):
            for b in range(a + 1, len(vals)):
                x, y = vals[a], vals[b]
                if x == y:
                    raise KlyachkoFormatError(f"ray {ray}: jump {x} listed twice")
                if not (self.order(x, y) or self.order(y, x)):
                    raise KlyachkoFormatError(
                        f"ray {ray}: jumps {x} and {y} are incomparable; "
                        "each ray's jumps must form a chain"
                    )
        # sort decreasing
        jumps = sorted(filt.jumps, key=lambda js: sum(1 for mu in vals if self.order(js[0], mu)),
                       reverse=True)
        filt.jumps = jumps
        for (mu1, s1), (mu2, s2) in zip(jumps, jumps[1:]):
            if not s1 <= s2:
                raise KlyachkoFormatError(f"ray {ray}: E({mu1}) is not contained in E({mu2})")
        if jumps[-1][1].dim != self.rank:
            raise KlyachkoFormatError(f"ray {ray}: lowest jump {jumps[-1][0]} is not the full space")

    def E(self, ray: int, mu: RScalar) -> Subspace:
        return self.filtrations[ray].at(mu, self.order, self.rank, self.field)

    def jumps(self, ray: int) -> list[RScalar]:
        return self.filtrations[ray].values()

    @classmethod
    def from_json(cls, obj: Mapping, base: Path | None = None, field: str | None = None) -> "KlyachkoData":
        try:
            fan_doc = obj["fan"]
            rank = int(obj["rank"])
            filts = obj["filtrations"]
        except (KeyError, TypeError) as exc:
            raise KlyachkoFormatError(f"malformed Klyachko document: {exc}") from exc
        field = field or obj.get("field", "Q")
        if isinstance(fan_doc, str):
            path = Path(fan_doc)
            if not path.is_absolute() and base is not None:
                path = base / path
            fan = load_fan(path)
        else:
            fan = Fan.from_json(fan_doc)
        out = {}
        try:
            for key, jumps in filts.items():
                ray = int(key)
                out[ray] = Filtration(
                    [(RScalar.from_json(j["mu"]), Subspace(rank, j["basis"], field)) for j in jumps]
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise KlyachkoFormatError(f"malformed filtration: {exc}") from exc
        return cls(fan, rank, out, field)

    def to_json(self) -> dict:
        return {
            "fan": self.fan.to_json(),
            "rank": self.rank,
            "field": self.field,
            "filtrations": {
                str(i): [{"mu": mu.to_json(), "basis": s.to_json()} for mu, s in f.jumps]
                for i, f in sorted(self.filtrations.items())
            },
        }


def load_klyachko(path, field: str | None = None) -> KlyachkoData:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise KlyachkoFormatError(f"{path}: {exc}") from exc
    return KlyachkoData.from_json(doc, base=path.parent, field=field)


# ---------------------------------------------------------------------------
# compatibility


def char_rep(t: Mapping[int, RScalar], cone, fan: Fan) -> RVector:
    """``chi = sum_i t_i (.) alpha_i^I``, so that ``<chi, beta_i> = t_i`` on the cone."""
    cone = frozenset(cone)
    fam = dual_family(fan, cone)
    chi = RVector.zero(fan.n)
    for i in sorted(cone):
        chi = chi + fam[i].lmul(t.get(i, ZERO))
    return chi


@dataclass
class Piece:
    t: dict  # ray -> RScalar
    space: Subspace
    chi: RVector

    def to_json(self) -> dict:
        return {
            "t": {str(i): mu.to_json() for i, mu in sorted(self.t.items())},
            "basis": self.space.to_json(),
            "chi": self.chi.to_json(),
        }


@dataclass
class GradingCertificate:
    cone: tuple[int, ...]
    pieces: list

    def to_json(self) -> dict:
        return {"cone": list(self.cone), "pieces": [p.to_json() for p in self.pieces]}


@dataclass
class Incompatible:
    cone: tuple[int, ...]
    ledger: list  # (t, dim W, dim D, m) rows with m > 0
    total: int
    rank: int

    def to_json(self) -> dict:
        return {
            "cone": list(self.cone),
            "total": self.total,
            "rank": self.rank,
            "ledger": [
                {"t": {str(i): mu.to_json() for i, mu in sorted(t.items())},
                 "dim_W": w, "dim_D": d, "m": m}
                for t, w, d, m in self.ledger
            ],
        }

    def __str__(self) -> str:
        return f"cone {list(self.cone)}: ledger sum {self.total} != rank {self.rank}"


def _tuple_ge(a: Sequence[RScalar], b: Sequence[RScalar], order: Order) -> bool:
    return all(order(x, y) for x, y in zip(a, b))


def _ledger(data: KlyachkoData, rays: Sequence[int]):
    """Per tuple: (t, W, D). Tuples range over the product of jump sets."""
    order = data.order
    jump_sets = [data.jumps(i) for i in rays]
    tuples = list(product(*jump_sets))
    W = {}
    for t in tuples:
        space = Subspace.full(data.rank, data.field)
        for i, mu in zip(rays, t):
            space = intersect(space, data.E(i, mu))
        W[t] = space
    D = {}
    for t in tuples:
        above = [W[s] for s in tuples if s != t and _tuple_ge(s, t, order)]
        D[t] = span_sum(above, data.rank, data.field)
    return tuples, W, D


def _descending(tuples, data: KlyachkoData, rays):
    """A linear extension of the componentwise order, largest first."""
    depth = []
    for t in tuples:
        d = 0
        for i, mu in zip(rays, t):
            d += sum(1 for nu in data.jumps(i) if data.order(nu, mu) and nu != mu)
        depth.append((d, t))
    return [t for _, t in sorted(depth, key=lambda x: x[0])]


def check_cone(data: KlyachkoData, cone, *, shuffle_seed: int | None = None):
    """Decide compatibility on a cone; returns a certificate or an ``Incompatible`` witness.

    ``cone`` may be any cone of the fan; the grading characters are built from
    the dual family of a maximal cone containing it.
    """
    fan = data.fan
    cone = frozenset(cone)
    if cone not in fan.sigma:
        raise ValueError(f"{sorted(cone)} is not a cone of the fan")
    rays = sorted(cone)
    host = next((I for I in fan.maximal_cones if cone <= I), None)
    if host is None:
        raise ValueError(f"{sorted(cone)} lies in no maximal cone")
    if not rays:
        full = Subspace.full(data.rank, data.field)
        return GradingCertificate((), [Piece({}, full, RVector.zero(fan.n))])
    tuples, W, D = _ledger(data, rays)
    ledger = []
    total = 0
    for t in tuples:
        m = W[t].dim - D[t].dim
        total += m
        if m:
            ledger.append((dict(zip(rays, t)), W[t].dim, D[t].dim, m))
    if total != data.rank:
        return Incompatible(tuple(rays), ledger, total, data.rank)
    order_list = _descending(tuples, data, rays)
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(order_list)
    pieces = []
    for t in order_list:
        if W[t].dim == D[t].dim:
            continue
        g = complement_in(W[t], D[t])
        td = dict(zip(rays, t))
        pieces.append(Piece(td, g, char_rep(td, host, fan)))
    return GradingCertificate(tuple(rays), pieces)


def verify_certificate(data: KlyachkoData, cert: GradingCertificate) -> tuple[bool, str]:
    """Independent check of a grading certificate; returns ``(ok, reason)``."""
    fan = data.fan
    total = sum(p.space.dim for p in cert.pieces)
    joint = span_sum((p.space for p in cert.pieces), data.rank, data.field)
    if total != data.rank or joint.dim != data.rank:
        return False, f"pieces have total dimension {total}, span {joint.dim}, rank {data.rank}"
    for i in cert.cone:
        for mu in data.jumps(i):
            rebuilt = span_sum(
                (p.space for p in cert.pieces if data.order(p.t[i], mu)), data.rank, data.field
            )
            if rebuilt != data.E(i, mu):
                return False, f"ray {i}, jump {mu}: graded sum differs from E^i(mu)"
        for p in cert.pieces:
            if bracket(p.chi, fan.beta(i)) != p.t[i]:
                return False, f"piece {p.t}: <chi, beta_{i}> != t_{i}"
    return True, "ok"


def coarsen(cert: GradingCertificate, face) -> GradingCertificate:
    """Restrict a certificate to a face: tuples are truncated and equal ones merged."""
    face = tuple(sorted(face))
    if not set(face) <= set(cert.cone):
        raise ValueError("not a face of the certificate's cone")
    merged = {}
    for p in cert.pieces:
        key = tuple(p.t[i] for i in face)
        if key in merged:
            q = merged[key]
            merged[key] = Piece(q.t, q.space + p.space, q.chi)
        else:
            merged[key] = Piece({i: p.t[i] for i in face}, p.space, p.chi)
    return GradingCertificate(face, list(merged.values()))


@dataclass
class CompatibilityReport:
    results: dict = field(default_factory=dict)  # cone tuple -> certificate | Incompatible
    exhaustive: bool = False

    @property
    def compatible(self) -> bool:
        return all(isinstance(r, GradingCertificate) for r in self.results.values())

    @property
    def failing(self) -> list:
        return [c for c, r in self.results.items() if isinstance(r, Incompatible)]

    def to_json(self) -> dict:
        out = {"schema": "topotoric.klyachko/1", "compatible": self.compatible,
               "exhaustive": self.exhaustive, "cones": []}
        for c, r in self.results.items():
            entry = {"cone": list(c), "compatible": isinstance(r, GradingCertificate)}
            key = "certificate" if isinstance(r, GradingCertificate) else "witness"
            entry[key] = r.to_json()
            out["cones"].append(entry)
        return out

    def render(self) -> str:
        lines = []
        for c, r in self.results.items():
            name = "{" + ",".join(map(str, c)) + "}"
            if isinstance(r, GradingCertificate):
                dims = "+".join(str(p.space.dim) for p in r.pieces)
                lines.append(f"{name:<12} compatible   pieces {dims}")
            else:
                lines.append(f"{name:<12} INCOMPATIBLE ledger sum {r.total} != rank {r.rank}")
        lines.append("COMPATIBLE" if self.compatible else "INCOMPATIBLE")
        return "\n".join(lines)


def check_all(data: KlyachkoData, *, exhaustive: bool = False) -> CompatibilityReport:
    """Check maximal cones (faces inherit gradings by coarsening) or every cone."""
    fan = data.fan
    if exhaustive:
        cones = sorted(fan.sigma, key=lambda c: (len(c), sorted(c)))
    else:
        cones = list(fan.maximal_cones)
    rep = CompatibilityReport(exhaustive=exhaustive)
    for c in cones:
        rep.results[tuple(sorted(c))] = check_cone(data, c)
    return rep


@dataclass
class MorphismCheck:
    ok: bool
    witness: tuple | None = None  # (ray, mu)

    def __bool__(self) -> bool:
        return self.ok


def check_morphism(f: Sequence[Sequence], source: KlyachkoData, target: KlyachkoData) -> MorphismCheck:
    """``f(E^i(mu)) <= F^i(mu)`` at every listed jump of the source."""
    if len(f) != target.rank or any(len(row) != source.rank for row in f):
        raise ValueError(f"map must be {target.rank}x{source.rank}")
    if source.fan.m != target.fan.m:
        raise ValueError("source and target live over different fans")
    conv = _converter(target.field)
    mat = [[conv(x) for x in row] for row in f]
    for i in sorted(source.filtrations):
        for mu in source.jumps(i):
            img = source.E(i, mu).image(mat, target.rank)
            if not img <= target.E(i, mu):
                return MorphismCheck(False, (i, mu))
    return MorphismCheck(True)


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "data" / "klyachko" / f"{name}.json"


def direct_sum(a: KlyachkoData, b: KlyachkoData) -> KlyachkoData:
    """Filtrations of ``E + F`` built jump-by-jump from the two summands."""
    if a.fan is not b.fan and a.fan != b.fan:
        raise ValueError("summands must share a fan")
    r = a.rank + b.rank
    filts = {}
    for i in range(1, a.fan.m + 1):
        values = []
        for mu in a.jumps(i) + b.jumps(i):
            if mu not in values:
                values.append(mu)
        jumps = []
        for mu in values:
            rows = [list(v) + [0] * b.rank for v in a.E(i, mu).basis]
            rows += [[0] * a.rank + list(v) for v in b.E(i, mu).basis]
            jumps.append((mu, Subspace(r, rows, a.field)))
        filts[i] = Filtration(jumps)
    return KlyachkoData(a.fan, r, filts, a.field, a.order)


__all__ += ["intersect", "complement_in", "span_sum", "Filtration", "direct_sum", "bundled_path"]
