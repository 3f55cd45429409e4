"""Topological fans: data structure, validation, dual families, Ker(lambda) relations.

Rays are 1-indexed.  A cone is a ``frozenset`` of ray indices; ``Fan.sigma``
is the full augmented complex (the empty cone included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .exact import inverse, lp_feasible, matmul, primitive, rank, smith_diagonal, transpose
from .rring import ONE, ZERO, RScalar, RVector, bracket

__all__ = [
    "Fan",
    "FanFormatError",
    "Verdict",
    "ValidationReport",
    "DualFamily",
    "MonomialRelation",
    "validate",
    "dual_family",
    "kernel_relations",
    "closure",
    "load_fan",
]

Cone = frozenset


class FanFormatError(ValueError):
    """Malformed fan input (wrong lengths, duplicate rays, bad indices)."""


def closure(generators: Iterable[Iterable[int]]) -> frozenset:
    """All faces of the given cones, the empty cone included."""
    out = {frozenset()}
    for g in generators:
        g = tuple(sorted(set(g)))
        for k in range(len(g) + 1):
            out.update(frozenset(c) for c in combinations(g, k))
    return frozenset(out)


@dataclass(frozen=True)
class Fan:
    """A simplicial topological fan (Sigma, beta) of dimension n."""

    n: int
    rays: tuple[RVector, ...]
    sigma: frozenset = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise FanFormatError("dimension must be positive")
        for idx, ray in enumerate(self.rays, start=1):
            if len(ray) != self.n:
                raise FanFormatError(f"ray {idx} has length {len(ray)}, expected {self.n}")
        if len(set(self.rays)) != len(self.rays):
            seen = {}
            for idx, ray in enumerate(self.rays, start=1):
                if ray in seen:
                    raise FanFormatError(f"rays {seen[ray]} and {idx} coincide")
                seen[ray] = idx
        m = len(self.rays)
        for cone in self.sigma:
            if any(not 1 <= i <= m for i in cone):
                raise FanFormatError(f"cone {sorted(cone)} references an unknown ray")
        if frozenset() not in self.sigma:
            object.__setattr__(self, "sigma", self.sigma | {frozenset()})

    @classmethod
    def from_cones(cls, n: int, rays: Iterable[RVector], cones: Iterable[Iterable[int]]) -> "Fan":
        return cls(n, tuple(rays), closure(cones))

    @property
    def m(self) -> int:
        return len(self.rays)

    def beta(self, i: int) -> RVector:
        return self.rays[i - 1]

    @cached_property
    def maximal_cones(self) -> tuple[frozenset, ...]:
        """Cones of cardinality n, sorted."""
        return tuple(sorted((c for c in self.sigma if len(c) == self.n), key=sorted))

    @cached_property
    def facets(self) -> tuple[frozenset, ...]:
        """Inclusion-maximal cones."""
        out = [c for c in self.sigma if not any(c < d for d in self.sigma)]
        return tuple(sorted(out, key=lambda c: (len(c), sorted(c))))

    def cones_of_size(self, k: int) -> list[frozenset]:
        return sorted((c for c in self.sigma if len(c) == k), key=sorted)

    def b_matrix(self, cone) -> list[list[Fraction]]:
        return [[x.b for x in self.beta(i)] for i in sorted(cone)]

    def c_matrix(self, cone) -> list[list[Fraction]]:
        return [[x.c for x in self.beta(i)] for i in sorted(cone)]

    def v_matrix(self, cone) -> list[list[int]]:
        return [[x.v for x in self.beta(i)] for i in sorted(cone)]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "rays": [r.to_json() for r in self.rays],
            "cones": [sorted(c) for c in self.facets if c],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Fan":
        try:
            n = int(obj["n"])
            rays = [RVector.from_json(r) for r in obj["rays"]]
            cones = obj["cones"]
        except (KeyError, TypeError) as exc:
            raise FanFormatError(f"malformed fan document: {exc}") from exc
        except ValueError as exc:
            raise FanFormatError(str(exc)) from exc
        if not isinstance(cones, list) or not all(isinstance(c, list) for c in cones):
            raise FanFormatError("cones must be a list of lists of ray indices")
        for c in cones:
            if len(set(c)) != len(c):
                raise FanFormatError(f"cone {c} repeats a ray")
            if not all(isinstance(i, int) and not isinstance(i, bool) for i in c):
                raise FanFormatError(f"cone {c} must list integer ray indices")
        return cls.from_cones(n, rays, cones)


def load_fan(path) -> Fan:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FanFormatError(f"{path}: {exc}") from exc
    return Fan.from_json(doc)


# ---------------------------------------------------------------------------
# validation


@dataclass
class Verdict:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"passed": self.passed, "witness": _jsonable(self.witness), "detail": self.detail}


def _jsonable(x):
    if isinstance(x, frozenset):
        return sorted(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return x


CHECKS = (
    "simplicial_closure",
    "independence",
    "primitivity",
    "cone_intersection",
    "nonsingularity",
    "completeness",
)


@dataclass
class ValidationReport:
    verdicts: dict[str, Verdict]
    sampling: dict = field(default_factory=dict)
    require_complete: bool = True

    @property
    def accepted(self) -> bool:
        return all(
            v.passed
            for name, v in self.verdicts.items()
            if name != "completeness" or self.require_complete
        )

    def failures(self) -> list[str]:
        return [
            name
            for name, v in self.verdicts.items()
            if not v.passed and (name != "completeness" or self.require_complete)
        ]

    def to_json(self) -> dict:
        return {
            "schema": "topotoric.validation/1",
            "accepted": self.accepted,
            "require_complete": self.require_complete,
            "checks": {k: v.to_json() for k, v in self.verdicts.items()},
            "completeness_sampling": self.sampling,
        }

    def render(self) -> str:
        lines = []
        for name in CHECKS:
            v = self.verdicts[name]
            mark = "ok" if v.passed else "FAIL"
            extra = ""
            if not v.passed:
                extra = f"  witness={_jsonable(v.witness)}"
                if v.detail:
                    extra += f"  ({v.detail})"
            lines.append(f"{name:<20} {mark}{extra}")
        if self.sampling:
            s = self.sampling
            lines.append(
                f"{'sampled coverage':<20} {s['covered']}/{s['samples']} (advisory, seed {s['seed']})"
            )
        lines.append("ACCEPTED" if self.accepted else "REJECTED")
        return "\n".join(lines)


def _check_closure(fan: Fan) -> Verdict:
    for cone in fan.sigma:
        for k in range(len(cone)):
            for face in combinations(sorted(cone), k):
                if frozenset(face) not in fan.sigma:
                    return Verdict("simplicial_closure", False, [sorted(cone), list(face)],
                                   "face missing from Sigma")
    sizes = [len(c) for c in fan.sigma]
    if max(sizes) != fan.n:
        return Verdict("simplicial_closure", False, max(sizes),
                       f"largest cone has {max(sizes)} rays, dimension is {fan.n}")
    return Verdict("simplicial_closure", True)


def _check_independence(fan: Fan) -> Verdict:
    for cone in sorted(fan.facets, key=sorted):
        if not cone:
            continue
        if rank(fan.b_matrix(cone)) < len(cone):
            return Verdict("independence", False, sorted(cone), "b-vectors dependent")
        if rank([[Fraction(x) for x in row] for row in fan.v_matrix(cone)]) < len(cone):
            return Verdict("independence", False, sorted(cone), "v-vectors dependent")
    return Verdict("independence", True)


def _check_primitivity(fan: Fan) -> Verdict:
    for i in range(1, fan.m + 1):
        if not primitive([x.v for x in fan.beta(i)]):
            return Verdict("primitivity", False, i, "v-vector is not primitive")
    return Verdict("primitivity", True)


def cones_overlap(fan: Fan, I: frozenset, J: frozenset):
    """Return a point of ``cone(b_I) & cone(b_J)`` outside ``cone(b_{I & J})``, or None.

    Solves ``sum l_i b_i - sum u_j b_j = 0`` with ``l, u >= 0`` and unit mass
    on the rays outside ``I & J``.
    """
    shared = I & J
    I_s, J_s = sorted(I), sorted(J)
    cols = [fan.beta(i).entries for i in I_s] + [fan.beta(j).entries for j in J_s]
    signs = [1] * len(I_s) + [-1] * len(J_s)
    a = [[s * col[k].b for col, s in zip(cols, signs)] for k in range(fan.n)]
    outside = [int(i not in shared) for i in I_s] + [int(j not in shared) for j in J_s]
    a.append([Fraction(o) for o in outside])
    rhs = [Fraction(0)] * fan.n + [Fraction(1)]
    res = lp_feasible(a, rhs)
    if not res.feasible:
        return None
    lam = res.point[: len(I_s)]
    return [sum((l * fan.beta(i)[k].b for l, i in zip(lam, I_s)), Fraction(0)) for k in range(fan.n)]


def _check_cone_intersection(fan: Fan) -> Verdict:
    facets = [c for c in fan.facets if c]
    for I, J in combinations(facets, 2):
        if rank(fan.b_matrix(I)) < len(I) or rank(fan.b_matrix(J)) < len(J):
            continue
        pt = cones_overlap(fan, I, J)
        if pt is not None:
            return Verdict("cone_intersection", False, [sorted(I), sorted(J)],
                           f"common point {[str(x) for x in pt]} outside the shared face")
    return Verdict("cone_intersection", True)


def _check_nonsingularity(fan: Fan) -> Verdict:
    for cone in sorted(fan.facets, key=sorted):
        if not cone:
            continue
        divisors = smith_diagonal(fan.v_matrix(cone))
        if len(divisors) < len(cone) or any(d != 1 for d in divisors):
            return Verdict("nonsingularity", False, sorted(cone),
                           f"elementary divisors {divisors}")
    return Verdict("nonsingularity", True)


def _check_completeness(fan: Fan) -> Verdict:
    n = fan.n
    for cone in fan.facets:
        if len(cone) != n:
            return Verdict("completeness", False, sorted(cone), "cone not contained in an n-cone")
    tops = fan.maximal_cones
    for ridge in fan.cones_of_size(n - 1):
        count = sum(1 for c in tops if ridge < c)
        if count != 2:
            return Verdict("completeness", False, sorted(ridge),
                           f"ridge lies in {count} maximal cone(s), expected 2")
    # dual graph connectivity
    if tops:
        seen = {tops[0]}
        stack = [tops[0]]
        while stack:
            c = stack.pop()
            for d in tops:
                if d not in seen and len(c & d) == n - 1:
                    seen.add(d)
                    stack.append(d)
        if len(seen) != len(tops):
            missing = sorted(sorted(c) for c in tops if c not in seen)
            return Verdict("completeness", False, missing, "adjacency graph disconnected")
    return Verdict("completeness", True)


def sample_coverage(fan: Fan, samples: int = 256, seed: int = 0, tol: float = 1e-9) -> dict:
    """Advisory check: fraction of random unit vectors lying in some maximal b-cone."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(samples, fan.n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    covered = np.zeros(samples, dtype=bool)
    for cone in fan.maximal_cones:
        B = np.array([[float(x) for x in row] for row in fan.b_matrix(cone)])
        try:
            coeffs = np.linalg.solve(B.T, pts.T).T
        except np.linalg.LinAlgError:
            continue
        covered |= np.all(coeffs >= -tol, axis=1)
    return {"samples": samples, "covered": int(covered.sum()), "seed": seed,
            "agrees_complete": bool(covered.all())}


def validate(fan: Fan, *, require_complete: bool = True, seed: int = 0,
             samples: int = 256) -> ValidationReport:
    """Check every fan axiom; completeness is decided by the facet criterion."""
    verdicts = {}
    verdicts["simplicial_closure"] = _check_closure(fan)
    verdicts["independence"] = _check_independence(fan)
    verdicts["primitivity"] = _check_primitivity(fan)
    verdicts["cone_intersection"] = _check_cone_intersection(fan)
    verdicts["nonsingularity"] = _check_nonsingularity(fan)
    verdicts["completeness"] = _check_completeness(fan)
    sampling = sample_coverage(fan, samples=samples, seed=seed) if samples else {}
    return ValidationReport(verdicts, sampling, require_complete)


# ---------------------------------------------------------------------------
# dual families and kernel relations


@dataclass(frozen=True)
class DualFamily:
    cone: frozenset
    alphas: dict  # ray index -> RVector

    def __getitem__(self, i: int) -> RVector:
        return self.alphas[i]

    def to_json(self) -> dict:
        return {
            "cone": sorted(self.cone),
            "alphas": {str(i): self.alphas[i].to_json() for i in sorted(self.alphas)},
        }


_DUAL_CACHE: dict = {}


def dual_family(fan: Fan, cone) -> DualFamily:
    """The family ``alpha_i`` with ``<alpha_i, beta_j> = delta_ij * ONE`` on a maximal cone.

    Writing rays row-wise as B + iC, V and the unknown duals as A + iA', U, the
    bracket conditions split into ``A B^T = Id``, ``U V^T = Id`` and
    ``A' B^T + U C^T = 0``.
    """
    cone = frozenset(cone)
    key = (id(fan), cone)
    hit = _DUAL_CACHE.get(key)
    if hit is not None and hit[0] is fan:
        return hit[1]
    if cone not in fan.sigma or len(cone) != fan.n:
        raise ValueError(f"{sorted(cone)} is not a maximal cone of the fan")
    B = fan.b_matrix(cone)
    C = fan.c_matrix(cone)
    V = [[Fraction(x) for x in row] for row in fan.v_matrix(cone)]
    try:
        Bt_inv = inverse(transpose(B))
    except ZeroDivisionError:
        raise ValueError(f"b-vectors of {sorted(cone)} are dependent") from None
    if smith_diagonal(fan.v_matrix(cone)) != [1] * fan.n:
        raise ValueError(f"v-vectors of {sorted(cone)} are not a Z-basis")
    U = inverse(transpose(V))
    A_im = [[-x for x in row] for row in matmul(matmul(U, transpose(C)), Bt_inv)]
    alphas = {}
    for row, i in enumerate(sorted(cone)):
        alphas[i] = RVector(
            RScalar(Bt_inv[row][k], A_im[row][k], int(U[row][k])) for k in range(fan.n)
        )
    fam = DualFamily(cone, alphas)
    for i in cone:
        for j in cone:
            if bracket(alphas[i], fan.beta(j)) != (ONE if i == j else ZERO):
                raise AssertionError("dual family failed its defining identity")
    _DUAL_CACHE[key] = (fan, fam)
    return fam


@dataclass(frozen=True)
class MonomialRelation:
    """``prod_k h_k ** exponents[k] == 1`` over rays k (missing rays have exponent 0)."""

    ray: int
    exponents: dict

    def evaluate(self, h) -> np.ndarray:
        """Evaluate the monomial on points ``h`` of (C*)^m (last axis indexed by ray - 1)."""
        from .rring import rpow

        h = np.asarray(h, dtype=complex)
        out = np.ones(h.shape[:-1], dtype=complex)
        for k, mu in self.exponents.items():
            out = out * rpow(h[..., k - 1], mu)
        return out


def kernel_relations(fan: Fan, cone) -> list[MonomialRelation]:
    """Relations ``h_i prod_{k not in I} h_k ** <alpha_i, beta_k> = 1`` presenting Ker(lambda)."""
    fam = dual_family(fan, cone)
    rels = []
    for i in sorted(fam.cone):
        exps = {i: ONE}
        for k in range(1, fan.m + 1):
            if k in fam.cone:
                continue
            mu = bracket(fam[i], fan.beta(k))
            if not mu.is_zero():
                exps[k] = mu
        rels.append(MonomialRelation(i, exps))
    return rels


def sample_kernel(fan: Fan, cone, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random elements of Ker(lambda): free coordinates off the cone, solved on it."""
    from .rring import char_eval, cochar_eval

    fam = dual_family(fan, cone)
    h = np.empty((size, fan.m), dtype=complex)
    y = np.ones((size, fan.n), dtype=complex)
    for k in range(1, fan.m + 1):
        if k in fam.cone:
            continue
        hk = np.exp(rng.uniform(-0.7, 0.7, size) + 1j * rng.uniform(-np.pi, np.pi, size))
        h[:, k - 1] = hk
        y = y * cochar_eval(fan.beta(k), hk).coords
    # prod_{i in I} lambda_{beta_i}(h_i) must equal y^{-1}; invert with the dual characters
    for i in sorted(fam.cone):
        h[:, i - 1] = char_eval(fam[i], 1.0 / y)
    return h


def lam(fan: Fan, h) -> np.ndarray:
    """``lambda(h) = prod_k lambda_{beta_k}(h_k)``."""
    from .rring import cochar_eval

    h = np.asarray(h, dtype=complex)
    out = np.ones(h.shape[:-1] + (fan.n,), dtype=complex)
    for k in range(1, fan.m + 1):
        out = out * cochar_eval(fan.beta(k), h[..., k - 1]).coords
    return out


def load_bundled_fan(name: str) -> Fan:
    return load_fan(Path(__file__).parent / "data" / "fans" / f"{name}.json")
