from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np

from app.application.errors import (
    DomainError,
    InconsistentExcursionsError,
    PreconditionError,
)
from app.application.models import (
    STEP_ORDER,
    STEP_VECTORS,
    EffectiveExcursion,
    ExcursionRecord,
    GeneralDecomposition,
    LatticePath,
    RescaledPath,
    TwoSidedExcursion,
)

log = logging.getLogger(__name__)

# Quarter turn counter-clockwise, and reflection across the x-axis.
_ROTATE = {"E": "N", "N": "W", "W": "S", "S": "E"}
_REFLECT = {"E": "E", "N": "S", "W": "W", "S": "N"}


class RangeIndex:
    """Occupied sites of a growing path, indexed by row and by column.

    A ray fired from the current site hits the range iff the extreme occupied
    coordinate of its row (or column) lies ahead of it, so every prudence check
    is a dictionary lookup. ``push``/``pop`` make the index usable in a DFS.
    """

    def __init__(self):
        self.row_min: dict[int, int] = {}
        self.row_max: dict[int, int] = {}
        self.col_min: dict[int, int] = {}
        self.col_max: dict[int, int] = {}
        self._undo: list[tuple] = []
        self.x = 0
        self.y = 0
        self.push(0, 0)

    def push(self, x: int, y: int):
        undo = (
            self.x,
            self.y,
            x,
            y,
            self.row_min.get(y),
            self.row_max.get(y),
            self.col_min.get(x),
            self.col_max.get(x),
        )
        self._undo.append(undo)
        self.row_min[y] = x if undo[4] is None else min(undo[4], x)
        self.row_max[y] = x if undo[5] is None else max(undo[5], x)
        self.col_min[x] = y if undo[6] is None else min(undo[6], y)
        self.col_max[x] = y if undo[7] is None else max(undo[7], y)
        self.x, self.y = x, y

    def pop(self):
        px, py, x, y, rmin, rmax, cmin, cmax = self._undo.pop()
        for table, key, value in (
            (self.row_min, y, rmin),
            (self.row_max, y, rmax),
            (self.col_min, x, cmin),
            (self.col_max, x, cmax),
        ):
            if value is None:
                del table[key]
            else:
                table[key] = value
        self.x, self.y = px, py

    def ray_hits(self, step: str) -> bool:
        """True iff the half-line from the current site in direction ``step`` meets the range."""
        x, y = self.x, self.y
        if step == "E":
            return self.row_max[y] > x if y in self.row_max else False
        if step == "W":
            return self.row_min[y] < x if y in self.row_min else False
        if step == "N":
            return self.col_max[x] > y if x in self.col_max else False
        return self.col_min[x] < y if x in self.col_min else False

    def admissible(self) -> list[str]:
        return [s for s in STEP_ORDER if not self.ray_hits(s)]

    def step(self, step: str):
        dx, dy = STEP_VECTORS[step]
        self.push(self.x + dx, self.y + dy)


def ray_hits_quadrant(x: int, y: int, step: str) -> bool:
    """True iff the half-line from (x, y) in direction ``step`` meets (-inf, 0]^2."""
    if step == "W":
        return y <= 0
    if step == "S":
        return x <= 0
    if step == "E":
        return x <= -1 and y <= 0
    return x <= 0 and y <= -1


def is_prudent(path: LatticePath) -> bool:
    index = RangeIndex()
    for step in path.steps:
        if index.ray_hits(step):
            return False
        index.step(step)
    return True


def is_two_sided_plus(path: LatticePath) -> bool:
    if path.length == 0 or path.steps[0] != "E":
        return False
    index = RangeIndex()
    for step in path.steps:
        if index.ray_hits(step) or ray_hits_quadrant(index.x, index.y, step):
            return False
        index.step(step)
    verts = path.vertices
    x, y = path.endpoint
    return x == int(verts[:, 0].max()) and y == int(verts[:, 1].max())


def rescale_path(path: LatticePath, grid: Sequence[float]) -> RescaledPath:
    """Rescaled and linearly interpolated path t -> pi_{tL}/L on the given grid."""
    L = path.length
    if L < 1:
        raise PreconditionError("Rescaling needs a path with at least one step")
    grid = np.asarray(grid, dtype=float)
    if np.any((grid < 0.0) | (grid > 1.0)) or np.any(np.isnan(grid)):
        raise DomainError(f"Grid values must lie in [0, 1], got {grid[(grid < 0) | (grid > 1)]}")
    verts = path.vertices.astype(float)
    scaled = grid * L
    idx = np.minimum(np.floor(scaled).astype(np.int64), L - 1)
    frac = (scaled - idx)[:, None]
    values = (verts[idx] + frac * (verts[idx + 1] - verts[idx])) / L
    return RescaledPath(grid=grid, values=values)


def quadrant_of(x: int, y: int) -> int:
    """Open quadrant 1..4 of (x, y), counter-clockwise from the positive one; 0 on an axis."""
    if x == 0 or y == 0:
        return 0
    if x > 0:
        return 1 if y > 0 else 4
    return 2 if y > 0 else 3


def quadrant_statistic(path: LatticePath) -> int:
    return quadrant_of(*path.endpoint)


def range_dims(path: LatticePath, t: int) -> tuple[int, int]:
    if not 0 <= t <= path.length:
        raise DomainError(f"Time index {t} outside [0, {path.length}]")
    prefix = path.vertices[: t + 1]
    width = int(prefix[:, 0].max() - prefix[:, 0].min()) + 1
    height = int(prefix[:, 1].max() - prefix[:, 1].min()) + 1
    return width, height


def transform_path(path: LatticePath, element: int) -> LatticePath:
    """Apply an element of the dihedral group of the square.

    Elements 0..3 are rotations by that many quarter turns; 4..7 reflect across
    the x-axis first, then rotate.
    """
    if not 0 <= element < 8:
        raise DomainError(f"Dihedral element must be in 0..7, got {element}")
    steps = path.steps
    if element >= 4:
        steps = "".join(_REFLECT[s] for s in steps)
    for _ in range(element % 4):
        steps = "".join(_ROTATE[s] for s in steps)
    return LatticePath(steps)


def is_reduced(path: LatticePath) -> bool:
    """First step east and first vertical step (if any) north."""
    if path.length == 0:
        return True
    if path.steps[0] != "E":
        return False
    for s in path.steps:
        if s in "NS":
            return s == "N"
    return True


def reduce_path(path: LatticePath) -> tuple[LatticePath, int]:
    """The image of ``path`` in the reduced family, and the first dihedral element giving it."""
    for element in range(8):
        image = transform_path(path, element)
        if is_reduced(image):
            return image, element
    raise PreconditionError(f"Path '{path.steps}' has no reduced image")


def _effective_levels(segment: str, main: str, away: str) -> tuple[int, ...]:
    """Levels of the effective walk of one excursion segment.

    ``main`` is the extension step; a stretch step equal to ``away`` raises the
    level by one, its reverse lowers it.
    """
    values = [0]
    for s in segment:
        if s == main:
            values.append(values[-1])
        elif s == away:
            values[-1] += 1
        else:
            values[-1] -= 1
    return tuple(values)


def decompose_two_sided(path: LatticePath) -> list[TwoSidedExcursion]:
    """Split a two-sided path into alternating horizontal and vertical excursions.

    Raises:
        PreconditionError: If the path is not a two-sided (north-east) prudent path.
    """
    if not is_two_sided_plus(path):
        raise PreconditionError(f"Path '{path.steps}' is not a two-sided prudent path")

    verts = path.vertices
    L = path.length
    out = []
    start = 0
    horizontal = True
    while True:
        axis = 1 if horizontal else 0
        ahead = np.nonzero(verts[start + 1 :, axis] > verts[start, axis])[0]
        end = L if ahead.size == 0 else start + int(ahead[0])
        segment = path.steps[start:end]
        levels = (
            _effective_levels(segment, "E", "S")
            if horizontal
            else _effective_levels(segment, "N", "W")
        )
        out.append(
            TwoSidedExcursion(
                start=start,
                end=end,
                horizontal=horizontal,
                excursion=EffectiveExcursion(levels),
            )
        )
        if end == L:
            return out
        start = end
        horizontal = not horizontal


def _stretch_letters(u: int, up: str, down: str) -> str:
    return (up if u > 0 else down) * abs(u)


def build_lattice_from_excursions(
    excursions: Sequence[Union[EffectiveExcursion, TwoSidedExcursion]],
    start: str = "horizontal",
) -> LatticePath:
    """Concatenate effective excursions into a two-sided lattice path.

    Horizontal excursions go east with depth measured downwards from the top of
    the range; vertical ones go north with depth measured westwards.

    Args:
        excursions: Effective excursions, or decomposed two-sided excursions whose
            orientation is checked against the alternation.
        start: Orientation of the first excursion, 'horizontal' or 'vertical'.

    Raises:
        InconsistentExcursionsError: If an excursion is not a nonnegative bridge or
            the orientations do not alternate.
    """
    if start not in ("horizontal", "vertical"):
        raise DomainError(f"Unknown start orientation '{start}'")
    horizontal = start == "horizontal"
    letters = []
    for k, item in enumerate(excursions):
        if isinstance(item, TwoSidedExcursion):
            if item.horizontal != horizontal:
                raise InconsistentExcursionsError(
                    f"Excursion {k + 1} is {'horizontal' if item.horizontal else 'vertical'}, "
                    f"expected {'horizontal' if horizontal else 'vertical'}"
                )
            item = item.excursion
        if not item.is_nonnegative_bridge:
            raise InconsistentExcursionsError(
                f"Excursion {k + 1} with levels {item.values} is not a nonnegative bridge"
            )
        main, away, back = ("E", "S", "N") if horizontal else ("N", "W", "E")
        for u in item.increments:
            letters.append(main)
            letters.append(_stretch_letters(u, away, back))
        horizontal = not horizontal
    return LatticePath("".join(letters))


def flipped_excursion_steps(excursion: EffectiveExcursion) -> LatticePath:
    """The representative of an effective excursion in the set of flipped excursions above the x-axis."""
    return LatticePath(
        "".join("E" + _stretch_letters(u, "N", "S") for u in excursion.increments)
    )


def decompose_general(path: LatticePath) -> GeneralDecomposition:
    """Split a reduced prudent path into excursions inside its range.

    A horizontal excursion ends just before the height of the range grows, a
    vertical one just before the width grows. The final partial excursion
    counts as complete when it sits on a side of the box it can leave in one step.

    Raises:
        PreconditionError: If the path is not prudent, or not in the reduced family.
    """
    if not is_prudent(path):
        raise PreconditionError(f"Path '{path.steps}' is not prudent")
    if not is_reduced(path):
        raise PreconditionError(
            f"Path '{path.steps}' must start east with a north first vertical step"
        )

    verts = path.vertices
    L = path.length
    xmin = xmax = ymin = ymax = 0
    R_seq = [0]
    R_before_last = 0
    records: list[ExcursionRecord] = []
    boundaries = [0]
    start = 0
    horizontal = True

    def close(end: int, box: tuple[int, int, int, int], complete: bool) -> ExcursionRecord:
        bx0, bx1, by0, by1 = box
        x0, y0 = (int(v) for v in verts[start])
        x1, y1 = (int(v) for v in verts[end])
        segment = path.steps[start:end]
        if horizontal:
            R = by1 - by0
            sign = 1 if y0 == by0 else -1
            away, main = ("N" if sign == 1 else "S"), ("E" if x1 >= x0 else "W")
            crossing = R == 0 or abs(y1 - y0) == R
        else:
            R = bx1 - bx0
            sign = 1 if x0 == bx0 else -1
            away, main = ("E" if sign == 1 else "W"), ("N" if y1 >= y0 else "S")
            crossing = R == 0 or abs(x1 - x0) == R
        levels = (0,) * (segment.count(main) + 1) if R == 0 else _effective_levels(segment, main, away)
        return ExcursionRecord(
            T=end - start,
            N=segment.count(main),
            eps=int(crossing and complete),
            orientation=("N" if y1 == by1 else "S") + ("E" if x1 == bx1 else "W"),
            horizontal=horizontal,
            start=start,
            end=end,
            R=R,
            levels=levels,
        )

    for t in range(1, L + 1):
        x, y = int(verts[t, 0]), int(verts[t, 1])
        grew_x = x > xmax or x < xmin
        grew_y = y > ymax or y < ymin
        if (horizontal and grew_y) or (not horizontal and grew_x):
            record = close(t - 1, (xmin, xmax, ymin, ymax), complete=True)
            records.append(record)
            boundaries.append(t - 1)
            R_new = R_before_last + record.N
            R_before_last = R_seq[-1]
            R_seq.append(R_new)
            start = t - 1
            horizontal = not horizontal
        xmin, xmax = min(xmin, x), max(xmax, x)
        ymin, ymax = min(ymin, y), max(ymax, y)

    tail = None
    tail_length = 0
    if start < L:
        xL, yL = path.endpoint
        complete = yL in (ymin, ymax) if horizontal else xL in (xmin, xmax)
        record = close(L, (xmin, xmax, ymin, ymax), complete=complete)
        if complete:
            records.append(record)
            boundaries.append(L)
            R_seq.append(R_before_last + record.N)
        else:
            tail = record
            tail_length = L - start

    return GeneralDecomposition(
        records=tuple(records),
        boundaries=tuple(boundaries),
        R_sequence=tuple(R_seq),
        gamma_L=len(records),
        tail_length=tail_length,
        tail=tail,
    )


def build_lattice_from_records(
    levels_sequence: Sequence[Sequence[int]],
    slabs: Sequence[int],
    tail: Optional[Sequence[int]] = None,
) -> LatticePath:
    """Assemble a reduced prudent path from effective walks confined to their slabs.

    ``levels_sequence[i]`` is the effective walk of excursion i+1, measured from the
    side of the slab it starts on, and ``slabs[i]`` the slab width R_i it lives in.
    The optional ``tail`` is an incomplete last excursion in the slab following
    the last complete one.

    Raises:
        InconsistentExcursionsError: If a walk leaves its slab, does not end on a
            side of it, or the slab widths disagree with the range the path builds.
    """
    hx, vy = 1, 1
    letters = []
    R_seq = [0, 0]
    pieces = list(zip(levels_sequence, slabs, [True] * len(slabs)))
    if tail is not None:
        pieces.append((tail, None, False))
    for k, (levels, R, complete) in enumerate(pieces):
        horizontal = k % 2 == 0
        expected = R_seq[-1]
        if R is not None and R != expected:
            raise InconsistentExcursionsError(
                f"Excursion {k + 1} declares slab {R}, the range gives {expected}"
            )
        R = expected
        if not levels or levels[0] != 0 or min(levels) < 0 or max(levels) > R:
            raise InconsistentExcursionsError(
                f"Excursion {k + 1} with levels {tuple(levels)} leaves the slab [0, {R}]"
            )
        end = levels[-1]
        if complete and end not in (0, R):
            raise InconsistentExcursionsError(
                f"Excursion {k + 1} ends at level {end}, not on a side of [0, {R}]"
            )
        if horizontal:
            main = "E" if hx == 1 else "W"
            away, back = ("S", "N") if vy == 1 else ("N", "S")
        else:
            main = "N" if vy == 1 else "S"
            away, back = ("W", "E") if hx == 1 else ("E", "W")
        for a, b in zip(levels[:-1], levels[1:]):
            letters.append(main)
            letters.append(_stretch_letters(b - a, away, back))
        if not complete:
            break
        crossing = R == 0 or end == R
        if horizontal:
            if R == 0:
                vy = 1
            elif crossing:
                vy = -vy
        elif crossing:
            hx = -hx
        R_seq.append(R_seq[-2] + len(levels) - 1)
    return LatticePath("".join(letters))
