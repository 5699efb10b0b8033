import pytest

from app.application.consts import DRAWS_PER_BLOCK
from app.application.errors import DomainError
from app.application.services.montecarlo import draw_stream, run_draws


def _uniform(rng):
    return float(rng.random())


def _double(value):
    return 2.0 * value


def test_streams_are_keyed():
    assert draw_stream(7, 0, 3).random() == draw_stream(7, 0, 3).random()
    assert draw_stream(7, 0, 3).random() != draw_stream(7, 0, 4).random()
    assert draw_stream(7, 0, 3).random() != draw_stream(7, 1, 3).random()
    assert draw_stream(7, 0, 3).random() != draw_stream(8, 0, 3).random()


def test_draws_do_not_depend_on_workers():
    n = 2 * DRAWS_PER_BLOCK + 17
    serial = run_draws(_uniform, n, seed=11)
    parallel = run_draws(_uniform, n, seed=11, workers=3)
    assert len(serial) == n
    assert serial == parallel


def test_draw_keys_follow_blocks():
    draws = run_draws(_uniform, DRAWS_PER_BLOCK + 1, seed=3)
    assert draws[0] == draw_stream(3, 0, 0).random()
    assert draws[DRAWS_PER_BLOCK] == draw_stream(3, 1, DRAWS_PER_BLOCK).random()


def test_summaries_are_applied_per_draw():
    plain = run_draws(_uniform, 10, seed=1)
    doubled = run_draws(_uniform, 10, seed=1, summarize=_double)
    assert doubled == [2.0 * v for v in plain]


def test_bad_arguments():
    assert run_draws(_uniform, 0, seed=0) == []
    with pytest.raises(DomainError):
        run_draws(_uniform, -1, seed=0)
    with pytest.raises(DomainError):
        run_draws(_uniform, 5, seed=-2)
