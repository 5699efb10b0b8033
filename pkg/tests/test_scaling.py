import math

import numpy as np
import pytest

from app.application.models import LatticePath, RenewalDraw
from app.application.services.enumeration import enumerate_two_sided_plus
from app.application.services.lattice import decompose_general
from app.application.services.scaling import (
    build_report,
    clt_report,
    concentration_report,
    crossing_events,
    crossing_report,
    diagonal_deviation,
    exact_crossing_report,
    exact_quadrant_distribution,
    quadrant_distribution,
    renewal_endpoint_mean,
    speed_c,
)
from app.infrastructure.datasets.writer import dumps_json


def test_diagonal_deviation_picks_the_closest_diagonal():
    times = np.array([0.0, 0.5, 1.0])
    points = np.array([[0.0, 0.0], [-0.1, 0.1], [-0.2, 0.2]])
    assert diagonal_deviation(times, points, 0.2) == pytest.approx(0.0, abs=1e-15)
    assert diagonal_deviation(times, points, 0.1) == pytest.approx(0.1 * math.sqrt(2))


def test_renewal_draw_boundaries():
    draw = RenewalDraw(T=np.array([3, 1, 4]), N=np.array([1, 1, 2]))
    times, points = draw.boundary_points()
    assert times.tolist() == [0, 3, 4, 8]
    assert points.tolist() == [[0, 0], [1, 0], [1, 1], [3, 1]]
    assert draw.endpoint == (3, 1) and draw.length == 8


def test_exact_quadrants_are_symmetric():
    freq = exact_quadrant_distribution(1)
    assert freq == [1.0, 0.0, 0.0, 0.0, 0.0]
    freq = exact_quadrant_distribution(6)
    assert sum(freq) == pytest.approx(1.0)
    assert freq[1] == freq[2] == freq[3] == freq[4]


def test_crossing_events_of_a_straight_path():
    L = 64
    events = crossing_events(decompose_general(LatticePath("E" * L)), L)
    assert events["first_crossing"]
    assert events["gamma"] == 1 and events["max_T"] == L
    assert events["theta"] is None
    assert not (events["late_crossing"] or events["long_prefix"] or events["long_tail"])
    assert events["good"]


def test_crossing_events_of_a_staircase():
    L = 64
    events = crossing_events(decompose_general(LatticePath("EN" * (L // 2))), L)
    assert events["gamma"] == L
    # Every excursion after the first is one extension step in a wider slab.
    assert not events["late_crossing"]
    assert not events["long_prefix"] and not events["long_tail"] and events["good"]
    assert events["theta"] is not None


def test_exact_crossing_report():
    report = exact_crossing_report(8)
    assert report["first_crossing"] == 1.0
    assert sum(report["theta"].values()) <= 1.0 + 1e-12
    for name in ("late_crossing", "long_prefix", "long_tail", "good"):
        assert 0.0 <= report[name] <= 1.0


def test_crossing_report_first_excursion_always_crosses():
    report = crossing_report("uniform-is", 256, 200, seed=4)
    assert report["first_crossing"] == 1.0
    assert report["ess"] > 0
    assert report["renewal"]["inverse_mean_T"] > 0
    with pytest.raises(ValueError):
        crossing_report("two-sided-renewal", 256, 10)


def test_two_sided_paths_concentrate():
    report = concentration_report("two-sided-renewal", 2000, 0.3, 200, seed=2)
    assert report["freq"] >= 0.9
    assert report["ess"] == pytest.approx(200.0)


def test_quadrant_distribution_of_exact_law():
    report = quadrant_distribution("uniform-exact", 6, 4000, seed=9)
    exact = exact_quadrant_distribution(6)
    for estimate, stderr, p in zip(report["freq"], report["stderr"], exact):
        assert abs(estimate - p) <= 5 * stderr + 1e-12


def test_clt_report_shape():
    report = clt_report("two-sided-renewal", 1000, [0.5, 1.0], 300, seed=1)
    assert np.array(report["covariance"]).shape == (2, 2, 2, 2)
    assert set(report["relative_errors"]) == {"0.5,0.5", "0.5,1", "1,0.5", "1,1"}
    assert report["max_relative_error"] == max(report["relative_errors"].values())


def test_report_is_deterministic():
    first = build_report(120, 60, seed=3).to_dict()
    second = build_report(120, 60, seed=3).to_dict()
    assert dumps_json(first) == dumps_json(second)
    assert first["c"] == pytest.approx(speed_c())
    assert len(first["quadrants"]) == 5
    assert set(first["concentration"]) == {"L", "eps", "freq"}


@pytest.mark.slow
def test_uniform_quadrants_balance():
    report = quadrant_distribution("uniform-is", 1000, 20_000, seed=0)
    assert all(0.23 <= f <= 0.27 for f in report["freq"][1:])
    assert report["freq"][0] < 0.04


@pytest.mark.slow
def test_uniform_weighted_paths_concentrate():
    report = concentration_report("uniform-is", 1000, 0.1, 2000, seed=0)
    assert report["freq"] >= 0.95


@pytest.mark.parametrize("L", [1, 4, 7])
def test_renewal_endpoint_mean_matches_enumeration(L):
    endpoints: list[tuple[int, int]] = []
    enumerate_two_sided_plus(L, visitor=lambda steps: endpoints.append(LatticePath(steps).endpoint))
    exact = np.mean(np.array(endpoints, dtype=float), axis=0) / L
    np.testing.assert_allclose(renewal_endpoint_mean(L), exact, atol=1e-7)


def test_renewal_endpoint_mean_leans_horizontal():
    mean = renewal_endpoint_mean(400)
    assert mean[0] > mean[1]
    assert mean == pytest.approx([speed_c()] * 2, abs=0.05)
