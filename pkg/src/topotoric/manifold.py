"""Charts, transition maps, the torus action in chart coordinates, and orbits of X(Delta)."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .fan import Fan, dual_family
from .rring import ONE, ZERO, RScalar, bracket, char_eval, r_add, r_mul, rpow

__all__ = [
    "ChartPoint",
    "TransitionMap",
    "OrbitDescriptor",
    "transition",
    "transition_eval",
    "action_eval",
    "orbit_of",
    "orbit_poset",
    "distinguished_point",
    "compose_exponents",
    "overlap_points",
    "cocycle_residual",
]


def _key(cone) -> tuple[int, ...]:
    return tuple(sorted(cone))


@dataclass(frozen=True)
class ChartPoint:
    """Coordinates ``w_i`` (i in the maximal cone ``chart``, increasing order).

    ``coords`` may be batched: shape ``(..., n)``.
    """

    chart: tuple[int, ...]
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "chart", _key(self.chart))
        coords = np.asarray(self.coords, dtype=complex)
        if coords.shape[-1] != len(self.chart):
            raise ValueError(f"chart {self.chart} needs {len(self.chart)} coordinates")
        object.__setattr__(self, "coords", coords)

    def coord(self, i: int) -> np.ndarray:
        return self.coords[..., self.chart.index(i)]


@dataclass(frozen=True)
class TransitionMap:
    """Exponents of ``phi_J phi_I^{-1}``: entry (j, i) is ``<alpha_j^J, beta_i>``."""

    source: tuple[int, ...]
    target: tuple[int, ...]
    exponents: tuple[tuple[RScalar, ...], ...]

    def to_json(self) -> dict:
        return {
            "source": list(self.source),
            "target": list(self.target),
            "exponents": [[e.to_json() for e in row] for row in self.exponents],
        }


def transition(fan: Fan, I, J) -> TransitionMap:
    I, J = _key(I), _key(J)
    dual_family(fan, I)  # validates I
    fam_J = dual_family(fan, J)
    rows = tuple(tuple(bracket(fam_J[j], fan.beta(i)) for i in I) for j in J)
    return TransitionMap(I, J, rows)


def transition_eval(tmap: TransitionMap, p: ChartPoint) -> ChartPoint:
    if p.chart != tmap.source:
        raise ValueError(f"point lives in chart {p.chart}, map starts at {tmap.source}")
    w = p.coords
    out = []
    for row in tmap.exponents:
        acc = np.ones(w.shape[:-1], dtype=complex)
        for col, mu in enumerate(row):
            if mu.is_zero():
                continue
            wi = w[..., col]
            if mu != ONE and np.any(wi == 0):
                raise ZeroDivisionError(
                    f"coordinate w_{tmap.source[col]} vanishes: point is outside the overlap"
                )
            acc = acc * rpow(wi, mu)
        out.append(acc)
    return ChartPoint(tmap.target, np.stack(out, axis=-1))


def compose_exponents(second: TransitionMap, first: TransitionMap) -> TransitionMap:
    """Exact exponents of ``second o first`` (ring matrix product ``E2 E1``)."""
    if first.target != second.source:
        raise ValueError("maps do not compose")
    rows = []
    for row2 in second.exponents:
        out_row = []
        for col in range(len(first.source)):
            acc = ZERO
            for mid, e2 in enumerate(row2):
                acc = r_add(acc, r_mul(e2, first.exponents[mid][col]))
            out_row.append(acc)
        rows.append(tuple(out_row))
    return TransitionMap(first.source, second.target, tuple(rows))


def action_eval(fan: Fan, I, t, p: ChartPoint) -> ChartPoint:
    """``t . w``: each ``w_i`` scales by ``chi^{alpha_i^I}(t)``."""
    I = _key(I)
    if p.chart != I:
        raise ValueError(f"point lives in chart {p.chart}, not {I}")
    fam = dual_family(fan, I)
    t = np.asarray(getattr(t, "coords", t), dtype=complex)
    scale = np.stack([np.asarray(char_eval(fam[i], t)) for i in I], axis=-1)
    return ChartPoint(I, scale * p.coords)


def orbit_of(p: ChartPoint, tol: float = 1e-12) -> frozenset:
    """The cone J whose orbit contains ``p``: coordinates below ``tol`` (relative) vanish."""
    w = np.abs(np.asarray(p.coords))
    if w.ndim != 1:
        raise ValueError("orbit_of takes a single point")
    scale = max(1.0, float(w.max(initial=0.0)))
    return frozenset(i for i, x in zip(p.chart, w) if x <= tol * scale)


def distinguished_point(fan: Fan, J, I) -> ChartPoint:
    """``gamma_J`` in chart I (J a face of I): 0 on J, 1 elsewhere."""
    J, I = frozenset(J), _key(I)
    if not J <= frozenset(I):
        raise ValueError(f"{sorted(J)} is not a face of {list(I)}")
    return ChartPoint(I, np.array([0.0 if i in J else 1.0 for i in I], dtype=complex))


@dataclass
class OrbitDescriptor:
    cone: tuple[int, ...]
    dim: int
    closure: list  # cones K >= J, i.e. orbits inside V(J)
    distinguished: dict  # maximal cone -> chart coordinates of gamma_J

    def to_json(self) -> dict:
        return {
            "cone": list(self.cone),
            "dim": self.dim,
            "closure": [list(c) for c in self.closure],
            "distinguished": {
                ",".join(map(str, k)): [[z.real, z.imag] for z in v]
                for k, v in self.distinguished.items()
            },
        }


@dataclass
class OrbitPoset:
    nodes: dict  # cone tuple -> OrbitDescriptor
    edges: list  # covering relations (J, K) with J < K, |K| = |J| + 1
    charts: dict  # maximal cone -> list of cones J <= I

    def to_json(self) -> dict:
        return {
            "schema": "topotoric.orbits/1",
            "nodes": [self.nodes[c].to_json() for c in sorted(self.nodes, key=lambda c: (len(c), c))],
            "edges": [[list(a), list(b)] for a, b in self.edges],
            "charts": {",".join(map(str, k)): [list(c) for c in v] for k, v in self.charts.items()},
        }

    def render(self) -> str:
        lines = [f"{'cone':<14}{'dim':>4}  closure V(J)"]
        for c in sorted(self.nodes, key=lambda c: (len(c), c)):
            d = self.nodes[c]
            name = "{" + ",".join(map(str, c)) + "}"
            clos = " ".join("{" + ",".join(map(str, k)) + "}" for k in d.closure)
            lines.append(f"{name:<14}{d.dim:>4}  {clos}")
        lines.append(f"{len(self.nodes)} orbits")
        return "\n".join(lines)


def orbit_poset(fan: Fan) -> OrbitPoset:
    cones = sorted((_key(c) for c in fan.sigma), key=lambda c: (len(c), c))
    tops = [_key(c) for c in fan.maximal_cones]
    nodes = {}
    for J in cones:
        Js = frozenset(J)
        closure_list = [K for K in cones if Js <= frozenset(K)]
        dist = {
            I: distinguished_point(fan, Js, I).coords for I in tops if Js <= frozenset(I)
        }
        nodes[J] = OrbitDescriptor(J, fan.n - len(J), closure_list, dist)
    edges = [
        (J, K)
        for J in cones
        for K in cones
        if len(K) == len(J) + 1 and frozenset(J) < frozenset(K)
    ]
    charts = {
        I: [tuple(s) for k in range(len(I) + 1) for s in combinations(I, k)] for I in tops
    }
    return OrbitPoset(nodes, edges, charts)


def overlap_points(fan: Fan, I, size: int, rng) -> ChartPoint:
    """Random chart-I points with ``|w_i|`` in ``[0.5, 2]``: inside every overlap, clear of overflow."""
    I = _key(I)
    mod = np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=(size, len(I))))
    return ChartPoint(I, mod * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(size, len(I)))))


def cocycle_residual(fan: Fan, samples: int = 100, seed: int = 0) -> float:
    """Worst relative ``|phi_K phi_J^{-1} phi_J phi_I^{-1}(w) - phi_K phi_I^{-1}(w)|`` over triples."""
    rng = np.random.default_rng(seed)
    tops = [_key(c) for c in fan.maximal_cones]
    maps = {(I, J): transition(fan, I, J) for I in tops for J in tops}
    worst = 0.0
    for I in tops:
        p = overlap_points(fan, I, samples, rng)
        for J in tops:
            q = transition_eval(maps[(I, J)], p)
            for K in tops:
                a = transition_eval(maps[(J, K)], q).coords
                b = transition_eval(maps[(I, K)], p).coords
                worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    return worst
