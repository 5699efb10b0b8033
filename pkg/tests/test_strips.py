import pytest

from app.application.errors import CapacityError, DomainError, PreconditionError, UnsupportedCaseError
from app.application.models import EffectiveExcursion
from app.application.services.strips import (
    continuation_table,
    fold_H,
    fold_split_points,
    lemma_folding_check,
    lemma_reflection_check,
    overshoot_factor,
    reflect_G,
    reflection_case,
    sample_slab_walk,
    strip_tables,
    strip_tables_star,
    strip_walks,
    tail_factor,
)


def test_continuation_mass_is_one_at_lambda_star(params):
    assert continuation_table(params.lambda_star).total_mass() == pytest.approx(1.0, abs=1e-8)


def test_overshoot_factor(params):
    y = params.y_star
    assert 1.0 + overshoot_factor(0, params) == pytest.approx((1.0 - y) / y, rel=1e-8)
    for R in range(6):
        assert 0.0 < overshoot_factor(R, params) < 1.0
    with pytest.raises(DomainError):
        overshoot_factor(-1, params)


def test_flat_strip_law_is_normalized(params):
    tables = strip_tables_star(0, 120, params)
    assert tables.L_star.sum() == pytest.approx(1.0, abs=1e-8)
    assert tables.L_star[:, :, 0].sum() == 0.0
    for t in range(1, 6):
        assert tables.L_star[t, t, 1] > 0 and tables.L_star[t, :t, 1].sum() == 0.0


@pytest.mark.parametrize("R", [2, 4])
def test_truncated_law_is_subprobability(R, params):
    short = strip_tables_star(R, 40, params).L_star.sum()
    long = strip_tables_star(R, 80, params).L_star.sum()
    assert 0.5 < short <= long <= 1.0 + 1e-8


def test_strip_walks_match_table_counts(params):
    R, t = 3, 7
    y = params.y_star
    tables = strip_tables(R, t, params)
    complete = sum(1 for _ in strip_walks(R, t, end=0))
    crossing = sum(1 for _ in strip_walks(R, t, end=R))
    inside = sum(1 for V in strip_walks(R, t) if 0 < V[-1] < R)
    assert tables.L_t(t, 0) == pytest.approx(complete * y**t, rel=1e-12)
    assert tables.L_t(t, 1) == pytest.approx(crossing * y**t, rel=1e-12)
    assert tables.L_hat_t(t) == pytest.approx(inside * y**t, rel=1e-12)


def test_strip_walks_have_lattice_length():
    for V in strip_walks(2, 6):
        assert EffectiveExcursion(V).T == 6
        assert 0 <= min(V) and max(V) <= 2


def test_strip_table_capacity():
    with pytest.raises(CapacityError) as err:
        strip_tables(10**6, 100)
    assert (err.value.R, err.value.t) == (10**6, 100)


def test_reflection_examples():
    assert reflect_G((0, 1, 2), 2).values == (0, 1, 0)
    assert reflection_case((0, 1, 2), 2) == 1
    assert reflect_G((0, 2), 2).values == (0, 0, 0, 0)
    assert reflection_case((0, 2), 2) == 2
    with pytest.raises(UnsupportedCaseError):
        reflect_G((0, 1, 2, 3), 3)
    with pytest.raises(PreconditionError):
        reflect_G((0, 1), 2)


@pytest.mark.parametrize("R", [2, 4, 6])
def test_reflection_keeps_length_and_strip(R):
    for t in range(1, 11):
        for V in strip_walks(R, t, end=R):
            image = reflect_G(V, R)
            assert image.T == t
            assert image.values[-1] == 0
            assert 0 <= min(image.values) and max(image.values) <= R


@pytest.mark.parametrize("R, x", [(4, 2), (6, 2), (6, 4)])
def test_folding_adds_two_steps(R, x):
    for t in range(1, 11):
        for V in strip_walks(R, t, end=x):
            sigma, sigma_t = fold_split_points(V, x)
            assert V[sigma] < x // 2 <= V[sigma + 1] and V[sigma_t] >= x
            image = fold_H(V, R, x)
            assert image.T == t + 2
            assert image.values[-1] == 0
            assert 0 <= min(image.values) and max(image.values) <= R


def test_folding_rejects_odd_end():
    with pytest.raises(UnsupportedCaseError):
        fold_H((0, 1, 3), 4, 3)
    with pytest.raises(DomainError):
        fold_H((0, 2), 2, 2)


def test_lemma_bounds(params):
    for R in (2, 4, 6):
        assert lemma_reflection_check(R, 20, params)["ok"]
        assert lemma_folding_check(R, 20, params)["ok"]


def test_tail_factor(params, rng):
    assert tail_factor(5, 0, params) == 1.0
    assert tail_factor(0, 3, params) == 0.0
    assert tail_factor(4, 6, params) > 0.0
    assert tail_factor(50, 6, params) == tail_factor(6, 6, params)
    with pytest.raises(DomainError):
        tail_factor(3, -1, params)


def test_slab_walk_ends_inside(rng):
    for _ in range(30):
        levels = sample_slab_walk(4, 9, rng)
        V = EffectiveExcursion(tuple(levels))
        assert V.T == 9
        assert 0 < levels[-1] < 4 and max(levels) <= 4
    with pytest.raises(PreconditionError):
        sample_slab_walk(1, 5, rng)
