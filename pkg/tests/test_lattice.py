import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.application.errors import DomainError, InconsistentExcursionsError, PreconditionError
from app.application.models import EffectiveExcursion, LatticePath
from app.application.services.enumeration import enumerate_prudent, enumerate_two_sided_plus
from app.application.services.lattice import (
    build_lattice_from_excursions,
    build_lattice_from_records,
    decompose_general,
    decompose_two_sided,
    flipped_excursion_steps,
    is_prudent,
    is_reduced,
    is_two_sided_plus,
    quadrant_of,
    range_dims,
    reduce_path,
    rescale_path,
    transform_path,
)
from app.application.services.montecarlo import draw_stream
from app.application.services.samplers import sample_kinetic
from tests.conftest import reduced_paths

prudent_paths = st.builds(
    lambda L, seed: sample_kinetic(L, draw_stream(seed, 0, 0)),
    st.integers(min_value=0, max_value=40),
    st.integers(min_value=0, max_value=2**32),
)


def test_prudence_of_small_paths():
    assert is_prudent(LatticePath("ENW"))
    assert is_prudent(LatticePath("ENWN"))
    assert not is_prudent(LatticePath("EW"))
    assert not is_prudent(LatticePath("ENWS"))


def test_invalid_letters_rejected():
    with pytest.raises(DomainError):
        LatticePath("ENX")


def test_vertices_round_trip():
    path = LatticePath("EENWWN")
    assert LatticePath.from_vertices(path.vertices.tolist()) == path
    assert path.endpoint == (0, 2)
    with pytest.raises(DomainError):
        LatticePath.from_vertices([(0, 0), (2, 0)])


@given(prudent_paths, st.integers(min_value=0, max_value=7))
@settings(max_examples=60, deadline=None)
def test_symmetries_preserve_prudence(path, element):
    image = transform_path(path, element)
    assert is_prudent(image)
    assert image.length == path.length


@given(prudent_paths)
@settings(max_examples=60, deadline=None)
def test_quarter_turn_rotates_endpoint_and_quadrant(path):
    x, y = path.endpoint
    rotated = transform_path(path, 1)
    assert rotated.endpoint == (-y, x)
    q = quadrant_of(x, y)
    assert quadrant_of(*rotated.endpoint) == (0 if q == 0 else q % 4 + 1)


@given(prudent_paths)
@settings(max_examples=60, deadline=None)
def test_reduce_path_lands_in_reduced_family(path):
    image, element = reduce_path(path)
    assert is_reduced(image)
    assert transform_path(path, element) == image


def test_transform_rejects_unknown_element():
    with pytest.raises(DomainError):
        transform_path(LatticePath("E"), 8)


@pytest.mark.parametrize("L", range(1, 7))
def test_reduced_family_covers_all_paths(L):
    # Straight paths have 4 images, all others 8.
    assert 8 * enumerate_prudent(L, reduced=True).count - 4 == enumerate_prudent(L).count


def test_range_dims():
    path = LatticePath("ENWN")
    assert range_dims(path, 0) == (1, 1)
    assert range_dims(path, 2) == (2, 2)
    assert range_dims(path, 4) == (2, 3)
    with pytest.raises(DomainError):
        range_dims(path, 5)


def test_rescale_path_interpolates():
    rescaled = rescale_path(LatticePath("EN"), [0.0, 0.25, 1.0])
    assert rescaled.values.tolist() == [[0.0, 0.0], [0.25, 0.0], [0.5, 0.5]]
    with pytest.raises(DomainError):
        rescale_path(LatticePath("EN"), [1.5])


@pytest.mark.parametrize("L", [1, 4, 7])
def test_two_sided_decomposition_round_trip(L):
    paths: list[str] = []
    enumerate_two_sided_plus(L, visitor=paths.append)
    for steps in paths:
        path = LatticePath(steps)
        excursions = decompose_two_sided(path)
        assert [e.horizontal for e in excursions] == [k % 2 == 0 for k in range(len(excursions))]
        assert build_lattice_from_excursions(excursions) == path


def test_two_sided_decomposition_rejects_other_paths():
    with pytest.raises(PreconditionError):
        decompose_two_sided(LatticePath("NE"))


def test_builder_rejects_broken_excursions():
    with pytest.raises(InconsistentExcursionsError):
        build_lattice_from_excursions([EffectiveExcursion((0, 1))])


def test_built_excursions_are_two_sided():
    excursions = [EffectiveExcursion((0, 0)), EffectiveExcursion((0, 1, 0)), EffectiveExcursion((0, 2, 0, 0))]
    path = build_lattice_from_excursions(excursions)
    assert path.length == sum(e.T for e in excursions)
    assert is_two_sided_plus(path)


def test_flipped_excursion_representative():
    assert flipped_excursion_steps(EffectiveExcursion((0, 2, 0))).steps == "ENNESS"


@pytest.mark.parametrize("L", [1, 3, 5, 7])
def test_general_decomposition_round_trip(L):
    for steps in reduced_paths(L):
        path = LatticePath(steps)
        d = decompose_general(path)
        assert sum(r.T for r in d.records) + d.tail_length == L
        assert d.records[0].eps == 1 and d.records[0].R == 0
        tail = d.tail.levels if d.tail is not None else None
        rebuilt = build_lattice_from_records([r.levels for r in d.records], [r.R for r in d.records], tail)
        assert rebuilt == path


def test_general_decomposition_needs_reduced_path():
    with pytest.raises(PreconditionError):
        decompose_general(LatticePath("EEWN"))
    with pytest.raises(PreconditionError):
        decompose_general(LatticePath("ES"))


@pytest.mark.parametrize("L", range(1, 11))
def test_decompositions_agree_on_quadrant_paths(L):
    paths: list[str] = []
    enumerate_two_sided_plus(L, visitor=paths.append)
    for steps in paths:
        path = LatticePath(steps)
        if path.vertices.min() < 0:
            continue
        two = decompose_two_sided(path)
        general = decompose_general(path)
        assert general.tail is None
        assert general.boundaries == (0,) + tuple(e.end for e in two)
        assert [r.horizontal for r in general.records] == [e.horizontal for e in two]


def test_decompositions_differ_below_the_axis():
    # The horizontal excursion dips under the range, which the general
    # decomposition counts as growth.
    path = LatticePath("ENESSENNN")
    assert is_two_sided_plus(path)
    assert [e.end for e in decompose_two_sided(path)] == [1, 2, 8, 9]
    assert decompose_general(path).boundaries == (0, 1, 2, 4, 5, 8, 9)


@pytest.mark.parametrize("L", range(1, 9))
def test_range_sequence_grows(L):
    for steps in reduced_paths(L):
        d = decompose_general(LatticePath(steps))
        assert all(R >= (i - 1) / 2 for i, R in enumerate(d.R_sequence))
        if d.records:
            assert d.records[0].eps == 1
