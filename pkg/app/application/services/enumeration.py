from __future__ import annotations

import logging
from collections import Counter
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed

from app.application.consts import L_MAX
from app.application.errors import CapacityError, DomainError
from app.application.models import STEP_ORDER, STEP_VECTORS, CountTable, LatticePath
from app.application.services.lattice import RangeIndex, ray_hits_quadrant

log = logging.getLogger(__name__)

PathVisitor = Callable[[str], None]


def _check_capacity(L: int, L_max: Optional[int]):
    L_max = L_MAX if L_max is None else L_max
    if L < 1:
        raise DomainError(f"Path length must be at least 1, got {L}")
    if L > L_max:
        raise CapacityError(
            "Enumeration request exceeds capacity",
            L=L,
            advice=f"(L_max={L_max}; raise it with PRUDENT_L_MAX or --L-max)",
        )


def _walk(
    index: RangeIndex,
    steps: list[str],
    L: int,
    allowed: Callable[[RangeIndex, list[str], str], bool],
    accept: Callable[[RangeIndex, list[str]], bool],
    on_path: Callable[[RangeIndex, list[str]], None],
):
    """Depth-first extension of ``steps`` in E < N < W < S order."""
    if len(steps) == L:
        if accept(index, steps):
            on_path(index, steps)
        return
    for s in STEP_ORDER:
        if index.ray_hits(s) or not allowed(index, steps, s):
            continue
        steps.append(s)
        index.step(s)
        _walk(index, steps, L, allowed, accept, on_path)
        index.pop()
        steps.pop()


def _reduced_rule(index: RangeIndex, steps: list[str], s: str) -> bool:
    if not steps:
        return s == "E"
    if s == "S" and "N" not in steps:
        return False
    return True


def _any_rule(index: RangeIndex, steps: list[str], s: str) -> bool:
    return True


def _two_sided_rule(index: RangeIndex, steps: list[str], s: str) -> bool:
    if not steps and s != "E":
        return False
    return not ray_hits_quadrant(index.x, index.y, s)


def _always(index: RangeIndex, steps: list[str]) -> bool:
    return True


class _Tally:
    def __init__(self, histogram: bool, visitor: Optional[PathVisitor]):
        self.count = 0
        self.endpoints: Optional[Counter] = Counter() if histogram else None
        self.visitor = visitor

    def __call__(self, index: RangeIndex, steps: list[str]):
        self.count += 1
        if self.endpoints is not None:
            self.endpoints[(index.x, index.y)] += 1
        if self.visitor is not None:
            self.visitor("".join(steps))


def _subtree(prefix: str, L: int, family: str, histogram: bool) -> tuple[int, Optional[Counter]]:
    allowed, accept = _RULES[family]
    index = RangeIndex()
    steps = []
    for s in prefix:
        steps.append(s)
        index.step(s)
    tally = _Tally(histogram, None)
    _walk(index, steps, L, allowed, accept, tally)
    return tally.count, tally.endpoints


def _top_right(index: RangeIndex, steps: list[str]) -> bool:
    x, y = index.x, index.y
    return all(v <= x for v in index.row_max.values()) and all(v <= y for v in index.col_max.values())


_RULES = {
    "omega": (_any_rule, _always),
    "omega_reduced": (_reduced_rule, _always),
    "omega_plus": (_two_sided_rule, _top_right),
}


def _prefixes(L: int, family: str) -> list[str]:
    """Admissible prefixes of length min(L, 2) in enumeration order."""
    allowed, _ = _RULES[family]
    out = []
    _walk(RangeIndex(), [], min(L, 2), allowed, _always, lambda index, steps: out.append("".join(steps)))
    return out


def _enumerate(
    family: str,
    L: int,
    visitor: Optional[PathVisitor],
    histogram: bool,
    workers: int,
    L_max: Optional[int],
) -> CountTable:
    _check_capacity(L, L_max)
    if visitor is not None or workers <= 1:
        allowed, accept = _RULES[family]
        tally = _Tally(histogram, visitor)
        _walk(RangeIndex(), [], L, allowed, accept, tally)
        count, endpoints = tally.count, tally.endpoints
    else:
        prefixes = _prefixes(L, family)
        log.info(f"Enumerating {family} at L={L} over {len(prefixes)} prefixes with {workers} workers")
        parts = Parallel(n_jobs=workers)(
            delayed(_subtree)(prefix, L, family, histogram) for prefix in prefixes
        )
        count = sum(c for c, _ in parts)
        endpoints = None
        if histogram:
            endpoints = Counter()
            for _, part in parts:
                endpoints.update(part)
    return CountTable(
        family=family,
        length=L,
        count=count,
        endpoint_histogram=dict(sorted(endpoints.items())) if endpoints is not None else None,
    )


def enumerate_prudent(
    L: int,
    reduced: bool = False,
    visitor: Optional[PathVisitor] = None,
    histogram: bool = False,
    workers: int = 1,
    L_max: Optional[int] = None,
) -> CountTable:
    """Enumerate the prudent paths of length L.

    Args:
        L (int): Path length, 1 <= L <= L_max.
        reduced (bool): Restrict to paths starting east whose first vertical step is north.
        visitor (Optional[Callable[[str], None]]): Called once per path with its step
            string, in lexicographic E < N < W < S order. Forces a single worker.
        histogram (bool): Also tally endpoints.
        workers (int): Number of joblib workers; the count does not depend on it.
        L_max (Optional[int]): Capacity override.

    Returns:
        CountTable: Exact count, and the endpoint histogram if requested.

    Raises:
        CapacityError: If L exceeds L_max.
    """
    family = "omega_reduced" if reduced else "omega"
    return _enumerate(family, L, visitor, histogram, workers, L_max)


def enumerate_two_sided_plus(
    L: int,
    visitor: Optional[PathVisitor] = None,
    histogram: bool = False,
    workers: int = 1,
    L_max: Optional[int] = None,
) -> CountTable:
    """Enumerate two-sided prudent paths of length L (see ``enumerate_prudent`` for arguments)."""
    return _enumerate("omega_plus", L, visitor, histogram, workers, L_max)


@lru_cache(maxsize=None)
def _stretch_count(remaining: int, level: int) -> int:
    # Tuples (l_1..l_n) with n + sum|l_i| = remaining, partial sums staying >= 0
    # from ``level`` and ending at 0.
    if remaining == 0:
        return 1 if level == 0 else 0
    total = 0
    for u in range(-min(level, remaining - 1), remaining):
        total += _stretch_count(remaining - 1 - abs(u), level + u)
    return total


def _stretch_tuples(remaining: int, level: int, prefix: list[int], visitor: Callable[[tuple[int, ...]], None]):
    if remaining == 0:
        if level == 0:
            visitor(tuple(prefix))
        return
    for u in range(-min(level, remaining - 1), remaining):
        if _stretch_count(remaining - 1 - abs(u), level + u) == 0:
            continue
        prefix.append(u)
        _stretch_tuples(remaining - 1 - abs(u), level + u, prefix, visitor)
        prefix.pop()


def count_excursion_set(
    t: int,
    visitor: Optional[Callable[[tuple[int, ...]], None]] = None,
    method: str = "stretches",
) -> int:
    """Number of flipped excursions of length t.

    ``method='stretches'`` counts tuples of vertical stretches (l_1..l_n) with
    n + sum|l_i| = t whose partial sums stay nonnegative and end at 0; the visitor
    receives each tuple. ``method='lattice'`` counts lattice paths directly with a
    prudent DFS below the x-axis.
    """
    if t < 1:
        raise DomainError(f"Excursion length must be at least 1, got {t}")
    if method == "stretches":
        if visitor is not None:
            _stretch_tuples(t, 0, [], visitor)
        return _stretch_count(t, 0)
    if method == "lattice":
        return _lattice_excursion_count(t)
    raise DomainError(f"Invalid method: {method}. Available methods: ['lattice', 'stretches']")


def _lattice_excursion_count(t: int) -> int:
    # Two-sided paths whose only excursion is horizontal: they stay at y <= 0
    # and end back on the x-axis.
    def allowed(index: RangeIndex, steps: list[str], s: str) -> bool:
        if not _two_sided_rule(index, steps, s):
            return False
        return index.y + STEP_VECTORS[s][1] <= 0

    tally = _Tally(False, None)
    _walk(RangeIndex(), [], t, allowed, lambda index, steps: index.y == 0, tally)
    return tally.count


def excursion_counts(t_max: int) -> list[int]:
    """Exact |I_t| for t = 0..t_max (entry 0 is 0) by a lattice-step DP in Python integers.

    The state is (level, mode) with mode 'h' after an extension step, 'p' inside an
    up-stretch and 'm' inside a down-stretch; stretches never reverse.
    """
    if t_max < 0:
        raise DomainError(f"t_max must be nonnegative, got {t_max}")
    counts = [0] * (t_max + 1)
    if t_max == 0:
        return counts
    # state[v] = [h, p, m]
    state = [[1, 0, 0]]
    counts[1] = 1
    for t in range(2, t_max + 1):
        nxt = [[0, 0, 0] for _ in range(len(state) + 1)]
        for v, (h, p, m) in enumerate(state):
            nxt[v][0] += h + p + m
            nxt[v + 1][1] += h + p
            if v >= 1:
                nxt[v - 1][2] += h + m
        while len(nxt) > 1 and nxt[-1] == [0, 0, 0]:
            nxt.pop()
        state = nxt
        counts[t] = state[0][0] + state[0][2]
    return counts


def two_sided_count(L: int) -> int:
    """|Omega_L^+| from the excursion counts by the renewal recursion u_L = sum_t |I_t| u_{L-t}."""
    if L < 0:
        raise DomainError(f"Path length must be nonnegative, got {L}")
    counts = excursion_counts(L)
    u = [1] + [0] * L
    for n in range(1, L + 1):
        u[n] = sum(counts[t] * u[n - t] for t in range(1, n + 1))
    return u[L]


@lru_cache(maxsize=8)
def _family_paths(family: str, L: int, L_max: Optional[int]) -> tuple[str, ...]:
    out: list[str] = []
    _enumerate(family, L, out.append, False, 1, L_max)
    return tuple(out)


class ExactUniformSampler:
    """Uniform sampler on a small path family, by indexing its enumeration."""

    def __init__(self, family: str, L: int, L_max: Optional[int] = None):
        if family not in SAMPLE_FAMILIES:
            raise DomainError(
                f"Invalid family: {family}. Available families: {sorted(SAMPLE_FAMILIES)}"
            )
        self.family = family
        self.L = L
        self.paths = _family_paths(self.family, L, L_max)

    def __len__(self) -> int:
        return len(self.paths)

    def sample(self, rng: np.random.Generator) -> LatticePath:
        return LatticePath(self.paths[int(rng.integers(len(self.paths)))])


def exact_uniform_sample(
    family: str, L: int, rng: np.random.Generator, L_max: Optional[int] = None
) -> LatticePath:
    return ExactUniformSampler(family, L, L_max).sample(rng)


SAMPLE_FAMILIES = ("omega", "omega_plus", "omega_reduced")

FAMILIES = {
    "omega": lambda L, workers, L_max: enumerate_prudent(L, workers=workers, L_max=L_max),
    "omega_reduced": lambda L, workers, L_max: enumerate_prudent(
        L, reduced=True, workers=workers, L_max=L_max
    ),
    "omega_plus": lambda L, workers, L_max: enumerate_two_sided_plus(L, workers=workers, L_max=L_max),
    "excursions": lambda L, workers, L_max: CountTable("excursions", L, count_excursion_set(L)),
}


class CountService:
    def count(self, family: str, L: int, workers: int = 1, L_max: Optional[int] = None) -> CountTable:
        """Exact size of a path family."""
        if family not in FAMILIES:
            raise ValueError(
                f"Invalid family: {family}. Available families: {FAMILIES.keys()}"
            )
        table = FAMILIES[family](L, workers, L_max)
        log.info(f"{family} at L={L}: {table.count}")
        return table
