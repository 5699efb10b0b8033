from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from app.application.consts import SLAB_SERIES_BUDGET, STRIP_TABLE_BUDGET
from app.application.errors import (
    CapacityError,
    DomainError,
    PreconditionError,
    UnsupportedCaseError,
)
from app.application.models import EffectiveExcursion, StripTables, TiltParams
from app.application.services.effective_walk import (
    H,
    M,
    P,
    advance,
    backward_table,
    lambda_star_solve,
    step_weight,
    walk_down,
)

log = logging.getLogger(__name__)

# Levels kept above the highest level of interest when solving the continuation
# system; masses there are below double precision.
CONTINUATION_PADDING = 400
CONTINUATION_MAX_SWEEPS = 200_000

Levels = Union[EffectiveExcursion, Sequence[int]]


def _values(V: Levels) -> tuple[int, ...]:
    return V.values if isinstance(V, EffectiveExcursion) else tuple(int(v) for v in V)


class ContinuationTable:
    """Total tilted mass Z[mode, v] of the ways an excursion in state (v, mode) can
    still end at level 0, including ending right away.

    Solved by fixed-point sweeps of the one-step relation on a finite ladder of
    levels; the ladder is grown when a higher level is requested.
    """

    def __init__(self, y: float, levels: int = 64):
        self.y = y
        self.z = np.zeros((3, 0))
        self._solve(levels)

    def _solve(self, levels: int):
        size = levels + CONTINUATION_PADDING
        y = self.y
        base = np.zeros((3, size))
        base[H, 0] = 1.0
        base[M, 0] = 1.0
        z = base.copy()
        for sweep in range(CONTINUATION_MAX_SWEEPS):
            up = np.zeros(size)
            up[:-1] = z[P, 1:]
            down = np.zeros(size)
            down[1:] = z[M, :-1]
            nxt = np.empty_like(z)
            nxt[H] = base[H] + y * (z[H] + up + down)
            nxt[P] = y * (z[H] + up)
            nxt[M] = base[M] + y * (z[H] + down)
            if np.array_equal(nxt, z):
                break
            z = nxt
        else:
            log.warning(f"Continuation sweeps did not settle after {CONTINUATION_MAX_SWEEPS} rounds")
        log.info(f"Continuation table solved on {size} levels after {sweep} sweeps")
        self.z = z[:, : levels + 1]

    def ensure(self, level: int):
        if level >= self.z.shape[1]:
            self._solve(max(level + 1, 2 * self.z.shape[1]))

    def phi(self, R: int) -> float:
        """Overshoot factor: mass of the continuations of a prefix stopped at level R
        whose next step climbs to R+1."""
        if R < 0:
            raise DomainError(f"Strip width must be nonnegative, got {R}")
        self.ensure(R + 1)
        return float(self.y * self.z[P, R + 1])

    def total_mass(self) -> float:
        """Mass of all excursions, y * Z[h, 0]; equals 1 at lambda*."""
        return float(self.y * self.z[H, 0])


@lru_cache(maxsize=4)
def continuation_table(lambda_star: float) -> ContinuationTable:
    return ContinuationTable(step_weight(lambda_star))


def overshoot_factor(R: int, params: Optional[TiltParams] = None) -> float:
    params = params or lambda_star_solve()
    return continuation_table(params.lambda_star).phi(R)


def _guard(R: int, t_max: int, budget: int = STRIP_TABLE_BUDGET):
    if R < 0:
        raise DomainError(f"Strip width must be nonnegative, got {R}")
    if t_max < 1:
        raise DomainError(f"t_max must be at least 1, got {t_max}")
    if (R + 1) * t_max * t_max > budget:
        raise CapacityError(
            "Strip table exceeds the memory budget",
            R=R,
            t=t_max,
            advice=f"((R+1)*t_max^2 must stay below {budget})",
        )


def _strip_dp(R: int, t_max: int, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Confined walks on levels 0..R by (t, n): complete and incomplete endings."""
    L = np.zeros((t_max + 1, t_max + 1, 2))
    L_hat = np.zeros((t_max + 1, t_max + 1))
    # w[mode, v, n]
    w = np.zeros((3, R + 1, t_max + 1))
    w[H, 0, 1] = y
    for t in range(1, t_max + 1):
        if t > 1:
            nxt = np.zeros_like(w)
            nxt[H, :, 1:] = w.sum(axis=0)[:, :-1]
            nxt[P, 1:] = (w[H] + w[P])[:-1]
            nxt[M, :-1] = (w[H] + w[M])[1:]
            w = y * nxt
        if R == 0:
            L[t, :, 1] = w[H, 0]
            continue
        L[t, :, 0] = w[H, 0] + w[M, 0]
        L[t, :, 1] = w[H, R] + w[P, R]
        L_hat[t] = w[:, 1:R].sum(axis=(0, 1))
    return L, L_hat


def strip_tables(R: int, t_max: int, params: Optional[TiltParams] = None) -> StripTables:
    """L_R(t, n, eps) and L^_R(t, n) at the tilt lambda*.

    Raises:
        CapacityError: If (R+1) * t_max^2 exceeds the table budget.
    """
    _guard(R, t_max)
    params = params or lambda_star_solve()
    L, L_hat = _strip_dp(R, t_max, params.y_star)
    return StripTables(R=R, t_max=t_max, lambda_star=params.lambda_star, L=L, L_hat=L_hat)


def strip_tables_star(R: int, t_max: int, params: Optional[TiltParams] = None) -> StripTables:
    """Strip tables together with the truncated law L*_R(t, n, eps).

    Every prefix that stands at level R after a complete stretch is absorbed
    with the overshoot mass of its continuations above R. For R = 0 the prefix
    also counts as a complete flat excursion, so all mass sits on eps = 1, t = n.
    """
    params = params or lambda_star_solve()
    tables = strip_tables(R, t_max, params)
    phi = overshoot_factor(R, params)
    L_star = np.zeros_like(tables.L)
    if R == 0:
        L_star[:, :, 1] = tables.L[:, :, 1] * (1.0 + phi)
    else:
        L_star[:, :, 0] = tables.L[:, :, 0]
        L_star[:, :, 1] = tables.L[:, :, 1] * phi
    tables.L_star = L_star
    return tables


def _slab_state(R: int, s: int, y: float) -> np.ndarray:
    """Weights w[mode, v] of confined walks of s lattice steps on levels 0..R."""
    w = np.zeros((1, 3, R + 1))
    w[0, H, 0] = y
    for _ in range(s - 1):
        w = advance(w, y)
    return w[0]


@lru_cache(maxsize=4096)
def _tail_factor(R: int, s: int, lambda_star: float) -> float:
    y = step_weight(lambda_star)
    w = _slab_state(R, s, y)
    meander = float(w[:, 1:R].sum()) if R >= 2 else 0.0
    table = continuation_table(lambda_star)
    table.ensure(R + 1)
    z = table.z[:, : R + 1]
    onward = z.copy()
    onward[H, 0] -= 1.0
    onward[M, 0] -= 1.0
    survival = float((w * onward).sum())
    survival -= float(w[H, R] + w[P, R]) * table.phi(R)
    if survival <= 0.0:
        return 0.0
    return meander / survival


def tail_factor(R: int, s: int, params: Optional[TiltParams] = None) -> float:
    """L^_R(s) / P*_R(T > s): target mass of an incomplete last excursion of length s
    in a strip of width R over the truncated-law probability of outlasting s.

    Only levels up to s matter, so the strip is capped at width s. Returns 1 for s = 0.
    """
    if s < 0:
        raise DomainError(f"Tail length must be nonnegative, got {s}")
    if s == 0:
        return 1.0
    params = params or lambda_star_solve()
    R_eff = min(R, s)
    if (R_eff + 1) * s > SLAB_SERIES_BUDGET:
        raise CapacityError("Slab series exceeds the budget", R=R, t=s)
    return _tail_factor(R_eff, s, params.lambda_star)


@lru_cache(maxsize=256)
def _slab_backward(R: int, s: int) -> np.ndarray:
    terminal = np.zeros((R + 1, 3))
    terminal[1:R] = 1.0
    return backward_table(s, R + 1, terminal)


def sample_slab_walk(R: int, s: int, rng: np.random.Generator) -> list[int]:
    """Uniform confined walk of s lattice steps on levels 0..R ending strictly inside."""
    R_eff = min(R, s)
    table = _slab_backward(R_eff, s)
    if table[s - 1, 0, H] <= 0.0:
        raise PreconditionError(f"No incomplete excursion of length {s} fits a strip of width {R}")
    return walk_down(table, s, rng)


def strip_walks(R: int, t: int, end: Optional[int] = None) -> Iterator[tuple[int, ...]]:
    """Effective walks on levels 0..R with n + sum|U| = t, optionally ending at ``end``."""
    if R < 0 or t < 1:
        raise DomainError(f"Need R >= 0 and t >= 1, got R={R}, t={t}")

    def extend(levels: list[int], remaining: int):
        if remaining == 0:
            if end is None or levels[-1] == end:
                yield tuple(levels)
            return
        v = levels[-1]
        for target in range(max(0, v - remaining + 1), min(R, v + remaining - 1) + 1):
            levels.append(target)
            yield from extend(levels, remaining - 1 - abs(target - v))
            levels.pop()

    yield from extend([0], t)


def _check_strip_member(values: tuple[int, ...], R: int, end: int):
    if min(values) < 0 or max(values) > R or values[0] != 0 or values[-1] != end or len(values) < 2:
        raise PreconditionError(f"Levels {values} are not a walk in [0, {R}] from 0 to {end}")


def reflection_case(V: Levels, R: int) -> int:
    """1 if the walk hits R/2 exactly at its first passage over it, 2 if it jumps over."""
    values = _values(V)
    tau = next(i for i, v in enumerate(values) if v >= R // 2)
    return 1 if values[tau] == R // 2 else 2


def reflect_G(V: Levels, R: int) -> EffectiveExcursion:
    """Map a strip walk ending at R to one ending at 0 with the same lattice length.

    The part after the first passage over R/2 is reflected across R/2. When that
    passage jumps over R/2, the jump is split around an extra step at R/2 - 1 and a
    flat step is appended, which keeps n + sum|U| unchanged.

    Raises:
        UnsupportedCaseError: If R is odd.
        PreconditionError: If V is not a walk in [0, R] from 0 to R.
    """
    if R % 2:
        raise UnsupportedCaseError(f"Reflection is only defined for even R, got {R}")
    if R < 2:
        raise DomainError(f"Reflection needs R >= 2, got {R}")
    values = _values(V)
    _check_strip_member(values, R, R)
    half = R // 2
    tau = next(i for i, v in enumerate(values) if v >= half)
    if values[tau] == half:
        return EffectiveExcursion(values[: tau + 1] + tuple(R - v for v in values[tau + 1 :]))
    out = values[:tau] + (half - 1,) + tuple(R - v for v in values[tau:]) + (0,)
    return EffectiveExcursion(out)


def fold_split_points(V: Levels, x: int) -> tuple[int, int]:
    """sigma = last index below x/2, sigma~ = first index after sigma at or above x."""
    values = _values(V)
    half = x // 2
    sigma = max(i for i, v in enumerate(values) if v < half)
    sigma_t = next(i for i in range(sigma + 1, len(values)) if values[i] >= x)
    return sigma, sigma_t


def fold_H(V: Levels, R: int, x: int) -> EffectiveExcursion:
    """Map a strip walk ending at x (0 < x < R) to one ending at 0 with two more steps.

    The stretch from sigma~ to the end is lowered by x/2 and moved right after a
    step to x/2; the stretch between sigma and sigma~ is reflected to x - V and
    appended, followed by a final step to 0.

    Raises:
        UnsupportedCaseError: If x is odd.
        PreconditionError: If V is not a walk in [0, R] from 0 to x.
    """
    if x % 2:
        raise UnsupportedCaseError(f"Folding is only defined for even x, got {x}")
    if not 0 < x < R:
        raise DomainError(f"Folding needs 0 < x < R, got x={x}, R={R}")
    values = _values(V)
    _check_strip_member(values, R, x)
    half = x // 2
    sigma, sigma_t = fold_split_points(values, x)
    out = (
        values[: sigma + 1]
        + (half,)
        + tuple(v - half for v in values[sigma_t:])
        + tuple(x - v for v in values[sigma + 1 : sigma_t])
        + (0,)
    )
    return EffectiveExcursion(out)


def lemma_reflection_check(R: int, t_max: int, params: Optional[TiltParams] = None) -> dict:
    """Largest ratio L_R(t, 1) / (2t L_R(t, 0)) over t <= t_max; at most 1 when the bound holds."""
    tables = strip_tables(R, t_max, params)
    worst = 0.0
    for t in range(1, t_max + 1):
        crossing = tables.L_t(t, 1)
        if crossing == 0.0:
            continue
        ratio = crossing / (2 * t * tables.L_t(t, 0))
        worst = max(worst, ratio)
    return {"R": R, "t_max": t_max, "max_ratio": worst, "ok": worst <= 1.0}


def folding_constant(params: Optional[TiltParams] = None) -> float:
    params = params or lambda_star_solve()
    return 4.0 * 9.0 * math.exp(-2.0 * math.log(1.5) + 2.0 * params.lambda_star)


def lemma_folding_check(R: int, t_max: int, params: Optional[TiltParams] = None) -> dict:
    """Largest ratio L^_R(t) / (C R t^2 L_R(t+2, 0)) over t <= t_max, and the largest
    L^_R(t) / sum_{t < j <= t_max + 2} L_R(j, 0)."""
    params = params or lambda_star_solve()
    tables = strip_tables(R, t_max + 2, params)
    C = folding_constant(params)
    worst = 0.0
    worst_tail = 0.0
    complete = np.array([tables.L_t(j, 0) for j in range(t_max + 3)])
    for t in range(1, t_max + 1):
        incomplete = tables.L_hat_t(t)
        if incomplete == 0.0:
            continue
        worst = max(worst, incomplete / (C * R * t * t * complete[t + 2]))
        worst_tail = max(worst_tail, incomplete / complete[t + 1 :].sum())
    return {
        "R": R,
        "t_max": t_max,
        "max_ratio": worst,
        "max_tail_ratio": worst_tail,
        "ok": worst <= 1.0 and math.isfinite(worst_tail),
    }
