"""Random Klyachko instances for cross-checking against the brute-force splitting search."""

from fractions import Fraction

import numpy as np

from oracles import _span_dim
from topotoric.fan import load_bundled_fan
from topotoric.klyachko import Filtration, KlyachkoData, Subspace
from topotoric.rring import ZERO, RScalar


def _jump(k):
    return RScalar(Fraction(k), Fraction(0), k)


def random_flag(r, rng, pool):
    """Nested spans of a basis drawn from a small vector pool, so coincidences are common."""
    while True:
        vecs = [pool[j] for j in rng.choice(len(pool), size=r, replace=True)]
        if _span_dim(vecs) == r:
            break
    cuts = []
    if r > 1:
        cuts = sorted(rng.choice(np.arange(1, r), size=rng.integers(0, min(2, r - 1) + 1), replace=False))
    levels = sorted(rng.choice(np.arange(1, 4), size=len(cuts), replace=False), reverse=True)
    jumps = [(_jump(int(lv)), Subspace(r, vecs[:c])) for lv, c in zip(levels, cuts)]
    jumps.append((ZERO, Subspace.full(r)))
    return Filtration(jumps)


def random_klyachko_instances(count, seed, fans=("cp1", "cp2", "octant3", "cp3")):
    """Instances with rank r <= 3 over fans of dimension n <= 3."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        fan = load_bundled_fan(fans[rng.integers(len(fans))])
        r = int(rng.integers(1, 4))
        pool = [[int(x) for x in v] for v in np.eye(r, dtype=int)] + [[1] * r]
        pool += [[int(x) for x in rng.integers(-1, 2, size=r)] for _ in range(2)]
        filts = {i: random_flag(r, rng, pool) for i in range(1, fan.m + 1)}
        yield KlyachkoData(fan, r, filts)
