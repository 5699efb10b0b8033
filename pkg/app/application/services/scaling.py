from __future__ import annotations

import logging
import math
from functools import partial
from typing import Optional, Sequence

import numpy as np

from app.application.consts import ALPHA, DELTA, KAPPA
from app.application.errors import DomainError
from app.application.models import (
    ExcursionMoments,
    GeneralDecomposition,
    LatticePath,
    RenewalDraw,
    ScalingReport,
    WeightedPath,
)
from app.application.services.effective_walk import ExcursionLaw, excursion_law, lambda_star_solve, moments
from app.application.services.enumeration import enumerate_prudent
from app.application.services.lattice import (
    decompose_general,
    quadrant_of,
    reduce_path,
    rescale_path,
)
from app.application.services.montecarlo import run_draws
from app.application.services.samplers import (
    Draw,
    PATH_LAWS,
    PathSampler,
    effective_sample_size,
    weighted_frequency,
)

log = logging.getLogger(__name__)

DIAGONALS = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
CORNERS = ("NE", "NW", "SW", "SE")


def speed_c(moments_: Optional[ExcursionMoments] = None) -> float:
    """Ballistic speed E*[N] / (2 E*[T]) along the diagonal."""
    moments_ = moments_ or moments()
    return moments_.mean_N / (2.0 * moments_.mean_T)


def covariance_B(moments_: Optional[ExcursionMoments] = None) -> np.ndarray:
    """Covariance per unit time of the two-sided path around c t (1, 1).

    A horizontal and a vertical excursion form one renewal block; index 0 is the x
    coordinate, fed by horizontal excursions, index 1 the y coordinate.
    """
    m = moments_ or moments()
    c = speed_c(m)
    block_T2 = 2.0 * m.mean_T2 + 2.0 * m.mean_T**2
    cross = m.mean_NT + m.mean_N * m.mean_T
    diagonal = (m.mean_N2 - 2.0 * c * cross + c * c * block_T2) / (2.0 * m.mean_T)
    off_diagonal = (m.mean_N**2 - 2.0 * c * cross + c * c * block_T2) / (2.0 * m.mean_T)
    return np.array([[diagonal, off_diagonal], [off_diagonal, diagonal]])


def renewal_endpoint_mean(L: int, law: Optional[ExcursionLaw] = None) -> np.ndarray:
    """Exact E[x_L, y_L] / L of a uniform two-sided path of length L.

    Renewal recursion over excursion lengths drawn from K*, pinned at L. Excursions
    alternate horizontal and vertical starting horizontally, so the first one puts
    x ahead of y by O(1) steps.
    """
    if L < 1:
        raise DomainError(f"Path length must be at least 1, got {L}")
    law = law or excursion_law()
    k = law.pmf / law.mass
    k_N = law.pmf_N / law.mass
    t_max = min(law.t_max, L)
    # u[p, n]: mass of a renewal at n after an excursion count of parity p;
    # a[q, p, n]: the same mass weighted by the extension of coordinate q.
    u = np.zeros((2, L + 1))
    a = np.zeros((2, 2, L + 1))
    u[0, 0] = 1.0
    for n in range(1, L + 1):
        t = np.arange(1, min(t_max, n) + 1)
        prev = n - t
        for parity in (0, 1):
            before = 1 - parity
            # The excursion just added is horizontal iff an even number preceded it.
            q = 0 if before == 0 else 1
            u[parity, n] = np.dot(k[t], u[before, prev])
            a[:, parity, n] = a[:, before, prev] @ k[t]
            a[q, parity, n] += np.dot(k_N[t], u[before, prev])
    return a[:, :, L].sum(axis=1) / u[:, L].sum() / L


def _weight(draw: Draw) -> float:
    if isinstance(draw, WeightedPath) and draw.path is None:
        return 0.0
    return float(draw.weight)


def _trajectory(draw: Draw) -> tuple[np.ndarray, np.ndarray, int]:
    """Rescaled times and positions on which the path is known, and the largest
    number of steps hidden between two of them."""
    if isinstance(draw, RenewalDraw):
        times, points = draw.boundary_points()
        L = times[-1]
        return times / L, points / L, int(draw.T.max())
    L = draw.path.length
    return np.arange(L + 1) / L, draw.path.vertices / L, 0


def _endpoint(draw: Draw) -> tuple[int, int]:
    return draw.endpoint if isinstance(draw, RenewalDraw) else draw.path.endpoint


def _length(draw: Draw) -> int:
    return draw.length if isinstance(draw, RenewalDraw) else draw.path.length


def diagonal_deviation(times: np.ndarray, points: np.ndarray, c: float) -> float:
    """min over the four diagonals e of max_t |x_t - c t e|."""
    diffs = points[None, :, :] - c * times[None, :, None] * DIAGONALS[:, None, :]
    return float(np.hypot(diffs[..., 0], diffs[..., 1]).max(axis=1).min())


def _concentration_summary(draw: Draw, c: float) -> tuple[float, float]:
    weight = _weight(draw)
    if weight == 0.0:
        return 0.0, math.inf
    times, points, hidden = _trajectory(draw)
    L = _length(draw)
    bound = 1.0 + c * math.sqrt(2.0)
    deviation = diagonal_deviation(times, points, c) + hidden * bound / L
    return weight, min(deviation, bound)


def concentration_report(
    law: str,
    L: int,
    eps: float,
    n_draws: int,
    seed: int = 0,
    workers: int = 1,
    c: Optional[float] = None,
) -> dict:
    """Weighted frequency of paths staying within eps of c t e for one diagonal e.

    For draws that only carry excursion statistics the deviation between boundary
    times is bounded by the longest excursion, which can only lower the frequency.
    """
    c = speed_c() if c is None else c
    sampler = PathSampler(law, L)
    rows = run_draws(sampler, n_draws, seed, workers, summarize=partial(_concentration_summary, c=c))
    weights = np.array([w for w, _ in rows])
    deviations = np.array([d for _, d in rows])
    freq, stderr = weighted_frequency(deviations <= eps, weights)
    log.info(f"Concentration of {law} at L={L}, eps={eps}: {freq:.4f} +- {stderr:.4f}")
    return {
        "law": law,
        "L": L,
        "eps": eps,
        "freq": freq,
        "stderr": stderr,
        "ess": effective_sample_size(weights),
        "n_draws": n_draws,
    }


def _fluctuation_summary(draw: Draw, c: float, grid: np.ndarray) -> tuple[float, np.ndarray]:
    weight = _weight(draw)
    fluctuation = np.zeros((len(grid), 2))
    if weight == 0.0:
        return 0.0, fluctuation
    x, y = _endpoint(draw)
    direction = np.array([np.sign(x), np.sign(y)], dtype=float)
    if not direction.all():
        return 0.0, fluctuation
    L = _length(draw)
    if isinstance(draw, RenewalDraw):
        times, points, _ = _trajectory(draw)
        values = np.column_stack([np.interp(grid, times, points[:, 0]), np.interp(grid, times, points[:, 1])])
    else:
        values = rescale_path(draw.path, grid).values
    fluctuation = math.sqrt(L) * (values - c * grid[:, None] * direction[None, :])
    return weight, fluctuation


def clt_report(
    law: str,
    L: int,
    grid: Sequence[float],
    n_draws: int,
    seed: int = 0,
    workers: int = 1,
) -> dict:
    """Empirical covariance function of sqrt(L)(x_t - c t e_sigma) on a time grid.

    Returns the weighted covariance Cov(t_i, t_j) for every pair of grid times, and
    its largest relative (Frobenius) distance to min(t_i, t_j) Sigma.
    """
    m = moments()
    c = speed_c(m)
    sigma = covariance_B(m)
    grid = np.asarray(grid, dtype=float)
    sampler = PathSampler(law, L, symmetrize=True)
    rows = run_draws(
        sampler, n_draws, seed, workers, summarize=partial(_fluctuation_summary, c=c, grid=grid)
    )
    weights = np.array([w for w, _ in rows])
    F = np.array([f for _, f in rows])
    total = weights.sum()
    p = weights / total if total > 0 else weights
    centered = F - np.einsum("k,kia->ia", p, F)[None]
    cov = np.einsum("k,kia,kjb->ijab", p, centered, centered)

    worst = 0.0
    errors = {}
    for i, t in enumerate(grid):
        for j, s in enumerate(grid):
            target = min(t, s) * sigma
            if min(t, s) <= 0:
                continue
            error = float(np.linalg.norm(cov[i, j] - target) / np.linalg.norm(target))
            errors[f"{t:g},{s:g}"] = error
            worst = max(worst, error)
    log.info(f"CLT check of {law} at L={L}: worst relative error {worst:.4f}")
    return {
        "law": law,
        "L": L,
        "grid": [float(t) for t in grid],
        "covariance": cov.tolist(),
        "sigma": sigma.tolist(),
        "relative_errors": errors,
        "max_relative_error": worst,
        "ess": effective_sample_size(weights),
        "n_draws": n_draws,
    }


def _quadrant_summary(draw: Draw) -> tuple[float, int]:
    weight = _weight(draw)
    if weight == 0.0:
        return 0.0, 0
    return weight, quadrant_of(*_endpoint(draw))


def quadrant_distribution(
    law: str,
    L: int,
    n_draws: int,
    seed: int = 0,
    workers: int = 1,
) -> dict:
    """Weighted frequencies of the endpoint quadrant (0 on an axis, 1..4 counter-clockwise)."""
    sampler = PathSampler(law, L, symmetrize=True)
    rows = run_draws(sampler, n_draws, seed, workers, summarize=_quadrant_summary)
    weights = np.array([w for w, _ in rows])
    quadrants = np.array([q for _, q in rows])
    estimates = [weighted_frequency(quadrants == k, weights) for k in range(5)]
    return {
        "law": law,
        "L": L,
        "freq": [p for p, _ in estimates],
        "stderr": [s for _, s in estimates],
        "ess": effective_sample_size(weights),
        "n_draws": n_draws,
    }


def exact_quadrant_distribution(L: int, L_max: Optional[int] = None, workers: int = 1) -> list[float]:
    """Exact quadrant frequencies of the uniform law on all prudent paths of length L."""
    table = enumerate_prudent(L, histogram=True, workers=workers, L_max=L_max)
    mass = [0] * 5
    for (x, y), count in table.endpoint_histogram.items():
        mass[quadrant_of(x, y)] += count
    return [m / table.count for m in mass]


def crossing_events(
    decomposition: GeneralDecomposition,
    L: int,
    delta: float = DELTA,
    kappa: float = KAPPA,
    alpha: float = ALPHA,
) -> dict:
    """Indicators of the events controlling the excursion structure of one path.

    late_crossing: some excursion with index in [k, gamma_L] crosses its slab,
    k = ceil(delta log L); long_prefix: the first k excursions take at least
    kappa (log L)^2 steps; long_tail: the incomplete tail has at least alpha log L steps.
    """
    log_L = math.log(L)
    k = max(1, math.ceil(delta * log_L))
    records = decomposition.records
    late = any(r.eps for r in records[k - 1 :])
    prefix = sum(r.T for r in records[:k]) >= kappa * log_L**2
    tail = decomposition.tail_length >= alpha * log_L
    return {
        "late_crossing": late,
        "long_prefix": prefix,
        "long_tail": tail,
        "good": not (late or prefix or tail),
        "first_crossing": bool(records and records[0].eps),
        "theta": records[k - 1].orientation if len(records) >= k else None,
        "gamma": decomposition.gamma_L,
        "max_T": max((r.T for r in records), default=0),
    }


def _decomposition(draw: WeightedPath) -> GeneralDecomposition:
    if draw.decomposition is not None:
        return draw.decomposition
    reduced, _ = reduce_path(draw.path)
    return decompose_general(reduced)


def _crossing_summary(draw: WeightedPath, L: int, delta: float, kappa: float, alpha: float) -> tuple[float, dict]:
    if draw.weight == 0.0 or (draw.path is None and draw.decomposition is None):
        return 0.0, {}
    return float(draw.weight), crossing_events(_decomposition(draw), L, delta, kappa, alpha)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    if cum.size == 0 or cum[-1] == 0:
        return math.nan
    return float(values[order][np.searchsorted(cum, 0.5 * cum[-1])])


def _crossing_statistics(rows: list[tuple[float, dict]], L: int, delta: float, kappa: float, alpha: float) -> dict:
    kept = [(w, e) for w, e in rows if w > 0.0]
    weights = np.array([w for w, _ in kept], dtype=float)
    out = {"L": L, "k": max(1, math.ceil(delta * math.log(L))), "delta": delta, "kappa": kappa, "alpha": alpha}
    stderr = {}
    for name in ("late_crossing", "long_prefix", "long_tail", "good", "first_crossing"):
        out[name], stderr[name] = weighted_frequency(np.array([e[name] for _, e in kept], dtype=float), weights)
    thetas = [e["theta"] for _, e in kept]
    out["theta"] = {
        corner: weighted_frequency(np.array([t == corner for t in thetas], dtype=float), weights)[0]
        for corner in CORNERS
    }
    out["stderr"] = stderr
    out["ess"] = effective_sample_size(weights)
    gamma = np.array([e["gamma"] for _, e in kept], dtype=float)
    max_T = np.array([e["max_T"] for _, e in kept], dtype=float)
    out["renewal"] = {
        "gamma_over_L": float(np.dot(weights, gamma) / weights.sum() / L) if kept else math.nan,
        "inverse_mean_T": 1.0 / excursion_law().mean_T,
        "median_max_T_over_sqrt_L": _weighted_median(max_T, weights) / math.sqrt(L),
    }
    return out


def crossing_report(
    law: str,
    L: int,
    n_draws: int,
    seed: int = 0,
    workers: int = 1,
    delta: float = DELTA,
    kappa: float = KAPPA,
    alpha: float = ALPHA,
) -> dict:
    """Weighted frequencies of the crossing events, the corner reached after the k-th
    excursion, and renewal statistics of the decomposition."""
    if law not in PATH_LAWS:
        raise ValueError(f"Invalid law: {law}. Available laws: {PATH_LAWS}")
    sampler = PathSampler(law, L, realize=False)
    rows = run_draws(
        sampler,
        n_draws,
        seed,
        workers,
        summarize=partial(_crossing_summary, L=L, delta=delta, kappa=kappa, alpha=alpha),
    )
    out = _crossing_statistics(rows, L, delta, kappa, alpha)
    out["law"] = law
    out["n_draws"] = n_draws
    log.info(f"Crossing events of {law} at L={L}: late {out['late_crossing']:.4f}, good {out['good']:.4f}")
    return out


def exact_crossing_report(
    L: int,
    delta: float = DELTA,
    kappa: float = KAPPA,
    alpha: float = ALPHA,
    L_max: Optional[int] = None,
) -> dict:
    """Crossing statistics of the uniform law on reduced paths, by enumeration."""
    rows: list[tuple[float, dict]] = []

    def visit(steps: str):
        decomposition = decompose_general(LatticePath(steps))
        rows.append((1.0, crossing_events(decomposition, L, delta, kappa, alpha)))

    enumerate_prudent(L, reduced=True, visitor=visit, L_max=L_max)
    return _crossing_statistics(rows, L, delta, kappa, alpha)


def build_report(
    L: int,
    n_draws: int,
    seed: int = 0,
    workers: int = 1,
    eps: float = 0.05,
) -> ScalingReport:
    """Speed, covariance and Monte Carlo statistics at one path length.

    Concentration is measured on the two-sided law, quadrants and crossings on
    the weighted uniform law.
    """
    params = lambda_star_solve()
    m = moments(params)
    c = speed_c(m)
    concentration = concentration_report("two-sided-renewal", L, eps, n_draws, seed, workers, c=c)
    quadrants = quadrant_distribution("uniform-is", L, n_draws, seed, workers)
    crossings = crossing_report("uniform-is", L, n_draws, seed, workers)
    return ScalingReport(
        lambda_star=params.lambda_star,
        c=c,
        sigma=covariance_B(m),
        growth_constant=params.growth_constant,
        concentration={"L": L, "eps": eps, "freq": concentration["freq"]},
        quadrants=quadrants["freq"],
        crossings=crossings,
        ess=quadrants["ess"],
    )
