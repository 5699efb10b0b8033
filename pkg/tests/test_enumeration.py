import math
from collections import Counter
from itertools import product

import numpy as np
import pytest

from app.application.errors import CapacityError, DomainError
from app.application.models import LatticePath
from app.application.services.effective_walk import K_exact, kstar_table, laplace_pmf
from app.application.services.enumeration import (
    CountService,
    ExactUniformSampler,
    count_excursion_set,
    enumerate_prudent,
    enumerate_two_sided_plus,
    excursion_counts,
    two_sided_count,
)
from app.application.services.lattice import is_prudent, is_two_sided_plus
from app.application.services.montecarlo import draw_stream


@pytest.mark.parametrize("L, expected", [(1, 4), (2, 12), (3, 36), (4, 100), (5, 276), (6, 748)])
def test_prudent_counts(L, expected):
    assert enumerate_prudent(L).count == expected


def _ray_prudent(steps: str) -> bool:
    moves = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}
    x, y = 0, 0
    visited = {(0, 0)}
    reach = len(steps) + 1
    for letter in steps:
        dx, dy = moves[letter]
        if any((x + k * dx, y + k * dy) in visited for k in range(1, reach + 1)):
            return False
        x, y = x + dx, y + dy
        visited.add((x, y))
    return True


@pytest.mark.parametrize("L", range(1, 7))
def test_enumeration_matches_ray_oracle(L):
    brute = {"".join(word) for word in product("ENWS", repeat=L) if _ray_prudent("".join(word))}
    listed: list[str] = []
    enumerate_prudent(L, visitor=listed.append)
    assert set(listed) == brute
    assert len(listed) == len(brute)
    assert all(is_prudent(LatticePath(p)) for p in brute)


def test_excursion_counts():
    counts = excursion_counts(10)
    assert counts[:5] == [0, 1, 1, 1, 2]
    for t in range(1, 11):
        assert count_excursion_set(t) == counts[t]
    for t in range(1, 8):
        assert count_excursion_set(t, method="lattice") == counts[t]


def test_stretch_visitor_lists_every_tuple():
    tuples = []
    count = count_excursion_set(6, visitor=tuples.append)
    assert len(tuples) == count == len(set(tuples))
    for stretches in tuples:
        assert len(stretches) + sum(abs(u) for u in stretches) == 6
        assert np.all(np.cumsum(stretches) >= 0) and sum(stretches) == 0


@pytest.mark.parametrize("L", range(1, 9))
def test_two_sided_count_matches_enumeration(L):
    assert two_sided_count(L) == enumerate_two_sided_plus(L).count


def test_visitor_order_and_membership():
    paths = []
    table = enumerate_two_sided_plus(5, visitor=paths.append)
    assert len(paths) == table.count
    assert paths == sorted(paths, key=lambda s: ["ENWS".index(c) for c in s])
    assert all(is_two_sided_plus(LatticePath(p)) for p in paths)


def test_workers_do_not_change_counts():
    serial = enumerate_prudent(6, histogram=True)
    parallel = enumerate_prudent(6, histogram=True, workers=2)
    assert serial.count == parallel.count
    assert serial.endpoint_histogram == parallel.endpoint_histogram


def test_endpoint_histogram_is_rotation_invariant():
    histogram = enumerate_prudent(5, histogram=True).endpoint_histogram
    rotated = Counter({(-y, x): n for (x, y), n in histogram.items()})
    assert rotated == Counter(histogram)
    assert sum(histogram.values()) == 276


def test_capacity_error_names_the_length():
    with pytest.raises(CapacityError) as err:
        enumerate_prudent(9, L_max=8)
    assert err.value.L == 9
    with pytest.raises(DomainError):
        enumerate_prudent(0)


def test_exact_uniform_sampler_draws_family_members():
    sampler = ExactUniformSampler("omega", 4)
    assert len(sampler) == 100
    rng = draw_stream(0, 0, 0)
    for _ in range(20):
        path = sampler.sample(rng)
        assert path.length == 4 and is_prudent(path)
    with pytest.raises(DomainError):
        ExactUniformSampler("excursions", 4)


def test_count_service():
    table = CountService().count("omega", 3)
    assert table.to_dict() == {"family": "omega", "L": 3, "count": "36"}
    assert CountService().count("excursions", 4).count == 2
    with pytest.raises(ValueError):
        CountService().count("polygons", 3)


def _upto(t_fast: int, t_max: int) -> list:
    return [t if t <= t_fast else pytest.param(t, marks=pytest.mark.slow) for t in range(1, t_max + 1)]


def test_kernel_dp_matches_excursion_counts():
    counts = excursion_counts(18)
    series = kstar_table(0.0, 18)
    for t in range(1, 19):
        assert series[t] == pytest.approx(counts[t] / 2**t, rel=1e-12)
        assert count_excursion_set(t) == counts[t]


@pytest.mark.parametrize("t", _upto(12, 18))
def test_lattice_excursions_match_counts(t):
    assert count_excursion_set(t, method="lattice") == excursion_counts(t)[t]


@pytest.mark.parametrize("t", _upto(14, 18))
def test_stretch_weights_sum_to_kernel(t):
    weights: list[float] = []
    count_excursion_set(
        t, visitor=lambda s: weights.append(math.prod(laplace_pmf(u) for u in s) * 1.5 ** len(s))
    )
    assert math.fsum(weights) == pytest.approx(K_exact(t), rel=1e-12)
