from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from app.application.errors import DomainError

# Unit vector of each step letter.
STEP_VECTORS = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}
VECTOR_STEPS = {v: k for k, v in STEP_VECTORS.items()}
# Enumeration order.
STEP_ORDER = "ENWS"


@dataclass(frozen=True)
class LatticePath:
    steps: str
    """ Compact step string over the alphabet {E, N, W, S} """

    def __post_init__(self):
        bad = set(self.steps) - set(STEP_ORDER)
        if bad:
            raise DomainError(f"Invalid step letters {sorted(bad)} in path '{self.steps}'")

    @classmethod
    def from_vertices(cls, vertices: Sequence[Sequence[int]]) -> LatticePath:
        """Rebuild a path from its vertex sequence, which must start at the origin."""
        if len(vertices) == 0 or tuple(vertices[0]) != (0, 0):
            raise DomainError("Vertex sequence must start at (0, 0)")
        letters = []
        for a, b in zip(vertices[:-1], vertices[1:]):
            delta = (int(b[0]) - int(a[0]), int(b[1]) - int(a[1]))
            if delta not in VECTOR_STEPS:
                raise DomainError(f"Vertices {tuple(a)} and {tuple(b)} are not lattice neighbours")
            letters.append(VECTOR_STEPS[delta])
        return cls("".join(letters))

    @property
    def length(self) -> int:
        return len(self.steps)

    @cached_property
    def vertices(self) -> np.ndarray:
        """(L+1, 2) integer array of visited sites, starting at the origin."""
        out = np.zeros((self.length + 1, 2), dtype=np.int64)
        if self.length:
            moves = np.array([STEP_VECTORS[s] for s in self.steps], dtype=np.int64)
            out[1:] = np.cumsum(moves, axis=0)
        return out

    @property
    def endpoint(self) -> tuple[int, int]:
        x, y = self.vertices[-1]
        return int(x), int(y)

    def __len__(self) -> int:
        return self.length


@dataclass(frozen=True)
class EffectiveExcursion:
    values: tuple[int, ...]
    """ Levels V_0..V_N of the effective walk, V_0 = 0 """

    def __post_init__(self):
        if not self.values or self.values[0] != 0:
            raise DomainError(f"Effective walk must start at level 0, got {self.values[:1]}")

    @property
    def increments(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.values[:-1], self.values[1:]))

    @property
    def N(self) -> int:
        return len(self.values) - 1

    @property
    def T(self) -> int:
        return self.N + sum(abs(u) for u in self.increments)

    @property
    def is_nonnegative_bridge(self) -> bool:
        return self.N >= 1 and min(self.values) >= 0 and self.values[-1] == 0


@dataclass(frozen=True)
class TwoSidedExcursion:
    start: int
    """ Time tau_{k-1} at which the excursion starts """

    end: int
    """ Time tau_k at which it ends """

    horizontal: bool
    """ Odd excursions are horizontal, even ones vertical """

    excursion: EffectiveExcursion
    """ The flipped 1D image of the excursion """


@dataclass(frozen=True)
class ExcursionRecord:
    T: int
    """ Total step count """

    N: int
    """ Extension steps (horizontal steps of a horizontal excursion, vertical of a vertical one) """

    eps: int
    """ 1 if the excursion crosses its slab """

    orientation: str
    """ Bounding-box corner at which the excursion ends, e.g. 'NE' """

    horizontal: bool
    start: int
    end: int

    R: int
    """ Slab width (extent of the range across the excursion) before it starts """

    levels: tuple[int, ...] = ()
    """ Levels of the effective walk, measured from the starting side of the slab """


@dataclass(frozen=True)
class GeneralDecomposition:
    records: tuple[ExcursionRecord, ...]
    boundaries: tuple[int, ...]
    """ Excursion boundary times 0 = rho_0 < rho_1 < upsilon_1 < ... """

    R_sequence: tuple[int, ...]
    """ R_0, R_1, ..., R_gamma """

    gamma_L: int
    tail_length: int
    tail: Optional[ExcursionRecord] = None
    """ The incomplete last excursion, if any """


@dataclass(frozen=True)
class RescaledPath:
    grid: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class CountTable:
    family: str
    length: int
    count: int
    endpoint_histogram: Optional[dict[tuple[int, int], int]] = None

    def to_dict(self) -> dict:
        return {"family": self.family, "L": self.length, "count": str(self.count)}


@dataclass(frozen=True)
class TiltParams:
    lambda_star: float
    lambda_hat: float
    lambda_double_star: float
    tolerance: float

    @property
    def alpha_star(self) -> float:
        return math.log(1.5) - self.lambda_star

    @property
    def y_star(self) -> float:
        """Tilted weight e^{-lambda*}/2 of one lattice step."""
        return math.exp(-self.lambda_star) / 2.0

    @property
    def growth_constant(self) -> float:
        """Connective constant 2e^{lambda*} of two-sided paths."""
        return 2.0 * math.exp(self.lambda_star)


@dataclass
class StripTables:
    R: int
    t_max: int
    lambda_star: float
    L: np.ndarray
    """ L_R(t, n, eps), shape (t_max+1, t_max+1, 2) """

    L_hat: np.ndarray
    """ L^_R(t, n), shape (t_max+1, t_max+1) """

    L_star: Optional[np.ndarray] = None
    """ L*_R(t, n, eps), shape (t_max+1, t_max+1, 2) """

    def L_t(self, t: int, eps: int) -> float:
        return float(self.L[t, :, eps].sum())

    def L_hat_t(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.L_hat[t].sum())


@dataclass(frozen=True)
class WeightedPath:
    path: Optional[LatticePath]
    """ The reduced-family lattice path, or None when the draw was not realized or has weight 0 """

    weight: float
    decomposition: Optional[GeneralDecomposition] = None
    element: int = 0
    """ Dihedral element applied by the symmetrized sampler """

    @property
    def steps(self) -> str:
        return self.path.steps if self.path is not None else ""


@dataclass(frozen=True)
class RenewalDraw:
    """Excursion statistics of a two-sided path whose lattice steps were not drawn."""

    T: np.ndarray
    N: np.ndarray
    weight: float = 1.0

    @property
    def length(self) -> int:
        return int(self.T.sum())

    def boundary_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and positions at the excursion boundaries, starting at (0, (0, 0))."""
        times = np.concatenate(([0], np.cumsum(self.T)))
        points = np.zeros((len(self.T) + 1, 2), dtype=np.int64)
        points[1:, 0] = np.cumsum(np.where(np.arange(len(self.N)) % 2 == 0, self.N, 0))
        points[1:, 1] = np.cumsum(np.where(np.arange(len(self.N)) % 2 == 1, self.N, 0))
        return times, points

    @property
    def endpoint(self) -> tuple[int, int]:
        _, points = self.boundary_points()
        return int(points[-1, 0]), int(points[-1, 1])


@dataclass(frozen=True)
class ExcursionMoments:
    mean_T: float
    mean_N: float
    mean_T2: float
    mean_N2: float
    mean_NT: float
    tail_bound: float = 0.0
    """ Bound on the mass of K* beyond the series horizon """


@dataclass
class ScalingReport:
    lambda_star: float
    c: float
    sigma: np.ndarray
    growth_constant: float = 0.0
    concentration: dict = field(default_factory=dict)
    quadrants: list[float] = field(default_factory=list)
    crossings: dict = field(default_factory=dict)
    ess: float = 0.0

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "c": self.c,
            "growth_constant": self.growth_constant,
            "sigma": [[float(v) for v in row] for row in self.sigma],
            "concentration": self.concentration,
            "quadrants": [float(q) for q in self.quadrants],
            "crossings": self.crossings,
            "ess": float(self.ess),
        }


@dataclass
class RunConfig:
    command: str
    L: Optional[int] = None
    n_draws: int = 0
    seed: int = 0
    workers: int = 1
    tolerance: float = 1e-10
    t_max: int = 1500
    L_max: int = 14
    out: Optional[str] = None
