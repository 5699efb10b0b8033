from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Union

import numpy as np

from app.application.consts import RESTART_CAP
from app.application.errors import DomainError, SamplerStallError
from app.application.models import (
    EffectiveExcursion,
    ExcursionRecord,
    GeneralDecomposition,
    LatticePath,
    RenewalDraw,
    TiltParams,
    WeightedPath,
)
from app.application.services.effective_walk import ExcursionLaw, excursion_law, truncate
from app.application.services.enumeration import ExactUniformSampler
from app.application.services.lattice import (
    RangeIndex,
    build_lattice_from_excursions,
    build_lattice_from_records,
    decompose_general,
    is_prudent,
    range_dims,
    transform_path,
)
from app.application.services.montecarlo import run_draws
from app.application.services.strips import overshoot_factor, sample_slab_walk, tail_factor

log = logging.getLogger(__name__)

Draw = Union[WeightedPath, RenewalDraw]


def kinetic_probability(path: LatticePath) -> float:
    """Probability that the kinetic prudent walk produces ``path``.

    The first step has 4 choices; afterwards a step has 3 choices right after the
    range grew and 2 otherwise, so only the range dimensions before the last step
    matter.
    """
    L = path.length
    if L == 0:
        return 1.0
    if not is_prudent(path):
        return 0.0
    width, height = range_dims(path, L - 1)
    grown = (width - 1) + (height - 1)
    return 0.25 * 0.5 ** (L - 1 - grown) * (1.0 / 3.0) ** grown


def sample_kinetic(L: int, rng: np.random.Generator) -> LatticePath:
    """Walk of L steps choosing uniformly among the admissible steps at each time."""
    if L < 0:
        raise DomainError(f"Path length must be nonnegative, got {L}")
    index = RangeIndex()
    letters = []
    for _ in range(L):
        options = index.admissible()
        step = options[int(rng.integers(len(options)))]
        letters.append(step)
        index.step(step)
    return LatticePath("".join(letters))


class TwoSidedSampler:
    """Uniform two-sided prudent paths by pinning a renewal of tilted excursions.

    Lengths are drawn from K* until their sum reaches L; the draw is accepted iff
    the sum equals L, and restarted otherwise. Given their lengths the excursions
    are independent and uniform.
    """

    def __init__(self, law: Optional[ExcursionLaw] = None, restart_cap: int = RESTART_CAP):
        self.law = law or excursion_law()
        self.restart_cap = restart_cap
        self.attempts = 0
        self.accepted = 0

    def sample_lengths(self, L: int, rng: np.random.Generator) -> np.ndarray:
        """Excursion lengths of one accepted renewal pinned at L.

        Raises:
            SamplerStallError: If no renewal hits L within the restart cap.
        """
        if L < 1:
            raise DomainError(f"Path length must be at least 1, got {L}")
        batch = int(L / self.law.mean_T * 1.25) + 16
        for attempt in range(1, self.restart_cap + 1):
            lengths = self.law.sample_T_array(batch, rng)
            cum = np.cumsum(lengths)
            while cum[-1] < L:
                more = self.law.sample_T_array(batch, rng)
                lengths = np.concatenate((lengths, more))
                cum = np.concatenate((cum, cum[-1] + np.cumsum(more)))
            k = int(np.searchsorted(cum, L))
            if cum[k] == L:
                self.attempts += attempt
                self.accepted += 1
                return lengths[: k + 1]
        raise SamplerStallError(
            f"No renewal of excursion lengths hit L={L} in {self.restart_cap} attempts"
        )

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    def sample(self, L: int, rng: np.random.Generator) -> LatticePath:
        lengths = self.sample_lengths(L, rng)
        excursions = [EffectiveExcursion(tuple(self.law.sample_levels(int(T), rng))) for T in lengths]
        return build_lattice_from_excursions(excursions)

    def sample_renewal(self, L: int, rng: np.random.Generator) -> RenewalDraw:
        """(T, N) of every excursion of a uniform two-sided path, without drawing its steps."""
        lengths = self.sample_lengths(L, rng)
        return RenewalDraw(T=lengths, N=self.law.sample_N_array(lengths, rng))


def sample_two_sided_uniform(
    L: int, rng: np.random.Generator, restart_cap: int = RESTART_CAP
) -> LatticePath:
    return TwoSidedSampler(restart_cap=restart_cap).sample(L, rng)


def _corner(hx: int, vy: int) -> str:
    return ("N" if vy == 1 else "S") + ("E" if hx == 1 else "W")


class ImportanceSampler:
    """Weighted samples of uniform reduced prudent paths.

    Excursions are drawn from P*, truncated to the slab the range gives them,
    until the next one would overshoot L; the remaining steps form a uniform
    incomplete excursion. The weight corrects the truncation at each crossing
    excursion and the law of the tail. The first excursion contributes the same
    constant to every draw and is left out of the weight.
    """

    def __init__(self, law: Optional[ExcursionLaw] = None):
        self.law = law or excursion_law()
        self.params: TiltParams = self.law.params

    def _excursion(self, R: int, realize: bool, rng: np.random.Generator) -> tuple[int, int, int, tuple[int, ...]]:
        T = self.law.sample_T(rng)
        # An excursion of T steps stays at levels <= (T - 2)/2, so it is never truncated
        # in a slab that wide.
        if not realize and T <= 2 * R + 2:
            return T, self.law.sample_N_given_T(T, rng), int(R == 0), ()
        V = truncate(self.law.sample_levels(T, rng), R)
        eps = 1 if R == 0 or V.values[-1] == R else 0
        return V.T, V.N, eps, V.values

    def sample(
        self,
        L: int,
        rng: np.random.Generator,
        realize: bool = True,
        symmetrize: bool = False,
    ) -> WeightedPath:
        """One weighted draw.

        Args:
            L (int): Path length.
            rng (np.random.Generator): Random stream of this draw.
            realize (bool): Build the lattice path; otherwise only the excursion
                records are returned.
            symmetrize (bool): Apply a uniform symmetry of the square, turning the
                draw into a weighted sample of all prudent paths.

        Returns:
            WeightedPath: The path (None when not realized or of weight 0), its weight
                and its decomposition.
        """
        if L < 1:
            raise DomainError(f"Path length must be at least 1, got {L}")
        R_seq = [0, 0]
        hx, vy = 1, 1
        total = 0
        weight = 1.0
        records: list[ExcursionRecord] = []
        levels_sequence: list[tuple[int, ...]] = []
        while True:
            R = R_seq[-1]
            horizontal = len(records) % 2 == 0
            T, N, eps, levels = self._excursion(R, realize, rng)
            if total + T > L:
                break
            if eps and R >= 1:
                weight /= overshoot_factor(R, self.params)
            if horizontal:
                vy = 1 if R == 0 else (-vy if eps else vy)
            elif eps:
                hx = -hx
            records.append(
                ExcursionRecord(
                    T=T,
                    N=N,
                    eps=eps,
                    orientation=_corner(hx, vy),
                    horizontal=horizontal,
                    start=total,
                    end=total + T,
                    R=R,
                    levels=levels,
                )
            )
            levels_sequence.append(levels)
            total += T
            R_seq.append(R_seq[-2] + N)

        s = L - total
        weight *= tail_factor(R_seq[-1], s, self.params)
        decomposition = GeneralDecomposition(
            records=tuple(records),
            boundaries=(0,) + tuple(r.end for r in records),
            R_sequence=tuple(R_seq[1:]),
            gamma_L=len(records),
            tail_length=s,
        )
        if weight == 0.0 or not realize:
            return WeightedPath(path=None, weight=weight, decomposition=decomposition)

        tail = sample_slab_walk(R_seq[-1], s, rng) if s > 0 else None
        path = build_lattice_from_records(levels_sequence, R_seq[1:-1], tail)
        element = 0
        if symmetrize:
            element = int(rng.integers(8))
            if set(path.steps) == {"E"}:
                # The straight path is its own image under half of the symmetries.
                weight *= 0.5
            path = transform_path(path, element)
            return WeightedPath(path=path, weight=weight, decomposition=decomposition, element=element)
        return WeightedPath(path=path, weight=weight, decomposition=decompose_general(path))


def sample_uniform_is(
    L: int,
    rng: np.random.Generator,
    realize: bool = True,
    symmetrize: bool = False,
) -> WeightedPath:
    return ImportanceSampler().sample(L, rng, realize=realize, symmetrize=symmetrize)


class PathSampler:
    """Callable drawing one sample of a named law, suitable for the Monte Carlo runner."""

    def __init__(
        self,
        law: str,
        L: int,
        realize: bool = True,
        symmetrize: bool = False,
        family: str = "omega",
        L_max: Optional[int] = None,
        restart_cap: int = RESTART_CAP,
    ):
        if law not in LAWS:
            raise ValueError(f"Invalid law: {law}. Available laws: {LAWS.keys()}")
        self.law = law
        self.L = L
        self.realize = realize
        self.symmetrize = symmetrize
        self.family = family
        self.L_max = L_max
        self.restart_cap = restart_cap
        self._exact: Optional[ExactUniformSampler] = None
        self._two_sided: Optional[TwoSidedSampler] = None
        self._importance: Optional[ImportanceSampler] = None

    @property
    def exact(self) -> ExactUniformSampler:
        if self._exact is None:
            self._exact = ExactUniformSampler(self.family, self.L, self.L_max)
        return self._exact

    @property
    def two_sided(self) -> TwoSidedSampler:
        if self._two_sided is None:
            self._two_sided = TwoSidedSampler(restart_cap=self.restart_cap)
        return self._two_sided

    @property
    def importance(self) -> ImportanceSampler:
        if self._importance is None:
            self._importance = ImportanceSampler()
        return self._importance

    def __call__(self, rng: np.random.Generator) -> Draw:
        return LAWS[self.law](self, rng)


def _draw_kinetic(sampler: PathSampler, rng: np.random.Generator) -> WeightedPath:
    return WeightedPath(path=sample_kinetic(sampler.L, rng), weight=1.0)


def _draw_two_sided(sampler: PathSampler, rng: np.random.Generator) -> WeightedPath:
    return WeightedPath(path=sampler.two_sided.sample(sampler.L, rng), weight=1.0)


def _draw_two_sided_renewal(sampler: PathSampler, rng: np.random.Generator) -> RenewalDraw:
    return sampler.two_sided.sample_renewal(sampler.L, rng)


def _draw_uniform_is(sampler: PathSampler, rng: np.random.Generator) -> WeightedPath:
    return sampler.importance.sample(
        sampler.L, rng, realize=sampler.realize, symmetrize=sampler.symmetrize
    )


def _draw_uniform_exact(sampler: PathSampler, rng: np.random.Generator) -> WeightedPath:
    return WeightedPath(path=sampler.exact.sample(rng), weight=1.0)


LAWS: dict[str, Callable[[PathSampler, np.random.Generator], Draw]] = {
    "kinetic": _draw_kinetic,
    "two-sided": _draw_two_sided,
    "two-sided-renewal": _draw_two_sided_renewal,
    "uniform-is": _draw_uniform_is,
    "uniform-exact": _draw_uniform_exact,
}

# Laws whose draws carry lattice steps.
PATH_LAWS = ("kinetic", "two-sided", "uniform-exact", "uniform-is")


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2; 0 when every weight vanishes."""
    weights = np.asarray(weights, dtype=float)
    denom = float(np.dot(weights, weights))
    if denom == 0.0:
        return 0.0
    return float(weights.sum()) ** 2 / denom


def weighted_frequency(indicator: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Self-normalized estimate of P(indicator) and its standard error."""
    indicator = np.asarray(indicator, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = float(weights.sum())
    if total == 0.0:
        return math.nan, math.nan
    # p is exactly 1 when every draw has the property.
    p = float(weights[indicator != 0].sum()) / total
    var = float(np.dot(weights**2, (indicator - p) ** 2)) / total**2
    return p, math.sqrt(var)


SAMPLE_COLUMNS = ("sample_id", "steps", "weight")


class SampleService:
    def sample(
        self,
        law: str,
        L: int,
        n_draws: int,
        seed: int = 0,
        workers: int = 1,
        symmetrize: bool = False,
        L_max: Optional[int] = None,
    ) -> list[dict]:
        """Draw ``n_draws`` paths of one law; one row per draw with its step string and weight."""
        if law not in PATH_LAWS:
            raise ValueError(f"Invalid law: {law}. Available laws: {PATH_LAWS}")
        sampler = PathSampler(law, L, symmetrize=symmetrize, L_max=L_max)
        draws = run_draws(sampler, n_draws, seed, workers, summarize=_sample_row)
        log.info(f"Drew {n_draws} {law} paths of length {L}")
        return [{"sample_id": i, "steps": steps, "weight": weight} for i, (steps, weight) in enumerate(draws)]


def _sample_row(draw: WeightedPath) -> tuple[str, float]:
    return draw.steps, float(draw.weight)
