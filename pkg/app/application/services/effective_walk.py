from __future__ import annotations

import logging
import math
from functools import cached_property, lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from app.application.consts import T_JOINT, TOLERANCE
from app.application.errors import DivergenceError, DomainError, SolverError
from app.application.models import EffectiveExcursion, ExcursionMoments, TiltParams
from app.application.services.enumeration import excursion_counts
from app.application.settings import series_horizon

log = logging.getLogger(__name__)

# Lattice-step modes of a flipped excursion: after an extension step, inside an
# up-stretch, inside a down-stretch.
H, P, M = 0, 1, 2

ALPHA_0 = math.log(1.5)
# Root of log E[exp(-lambda |U|)] = lambda - log(3/2); e^{-lambda}/2 = sqrt(2) - 1 there.
LAMBDA_HAT = -math.log(2.0 * (math.sqrt(2.0) - 1.0))
# Distance from lambda-hat inside which the kernel is evaluated at its branch point.
BRANCH_SLACK = 1e-9


def step_weight(lam: float) -> float:
    """Weight e^{-lambda}/2 carried by every lattice step of a tilted excursion."""
    return math.exp(-lam) / 2.0


def laplace_pmf(x: int) -> float:
    return 2.0 ** (-abs(int(x))) / 3.0


def laplace_mgf_abs(lam: float) -> float:
    """E[exp(-lambda |U|)] for the discrete Laplace increment U."""
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    q = step_weight(lam)
    return (1.0 + q) / (3.0 * (1.0 - q))


def martingale_residual(lam: float = LAMBDA_HAT) -> float:
    """E[exp(alpha - lambda |U|)] - 1 with alpha = log(3/2) - lambda; zero at lambda-hat."""
    return math.exp(ALPHA_0 - lam) * laplace_mgf_abs(lam) - 1.0


def advance(w: np.ndarray, y: float) -> np.ndarray:
    """One lattice step of the excursion DP.

    ``w`` has shape (k, 3, levels): layer 0 holds weights, layers 1 and 2 (when
    present) the weighted first and second moments of the extension-step count.
    Moves leaving the top level are dropped.
    """
    out = np.zeros_like(w)
    tot = w.sum(axis=1)
    out[0, H] = tot[0]
    if w.shape[0] > 1:
        out[1, H] = tot[1] + tot[0]
        out[2, H] = tot[2] + 2.0 * tot[1] + tot[0]
    up = w[:, H] + w[:, P]
    out[:, P, 1:] = up[:, :-1]
    down = w[:, H] + w[:, M]
    out[:, M, :-1] = down[:, 1:]
    out *= y
    return out


def _series(y: float, t_max: int, prime: bool = False, with_moments: bool = False) -> np.ndarray:
    """Per-length excursion masses sum_{|pi| = t} y^t for t = 0..t_max.

    With ``prime`` only excursions that do not revisit level 0 before their end are
    counted. With ``with_moments`` the result has shape (3, t_max+1): mass, N-weighted
    and N^2-weighted mass.
    """
    layers = 3 if with_moments else 1
    size = t_max // 2 + 2
    w = np.zeros((layers, 3, size))
    w[0, H, 0] = y
    if with_moments:
        w[1, H, 0] = y
        w[2, H, 0] = y
    out = np.zeros((layers, t_max + 1))
    out[:, 1] = w[:, H, 0]
    if prime:
        w[:, H, 0] = 0.0
        w[0, P, 1] = y * y
        if with_moments:
            w[1:, P, 1] = y * y
        if t_max >= 2:
            out[:, 2] = 0.0
        start = 3
    else:
        start = 2
    for t in range(start, t_max + 1):
        w = advance(w, y)
        if prime:
            out[:, t] = w[:, M, 0]
            w[:, M, 0] = 0.0
            w[:, H, 0] = 0.0
        else:
            out[:, t] = w[:, H, 0] + w[:, M, 0]
    return out if with_moments else out[0]


def _tail_bound(terms: np.ndarray, lam: float) -> float:
    """Geometric bound on the mass beyond the last term, at ratio e^{lambda-hat - lambda}."""
    t = len(terms) - 1
    last = float(terms[-1])
    rho = math.exp(LAMBDA_HAT - lam)
    if rho >= 1.0 - 1e-3:
        return 2.0 * t * last
    return min(last * rho / (1.0 - rho), 2.0 * t * last)


def _check_convergence(terms: np.ndarray, lam: float):
    if lam < LAMBDA_HAT - BRANCH_SLACK:
        raise DivergenceError(
            f"Excursion series diverges at lambda={lam} below lambda-hat={LAMBDA_HAT}", lam=lam
        )
    tail = terms[-4:]
    if len(terms) > 64 and tail[-1] > 0 and tail[-1] >= tail[-2] >= tail[-3]:
        raise DivergenceError(f"Excursion series terms do not decay at lambda={lam}", lam=lam)


@lru_cache(maxsize=4)
def kernel_table(t_max: int) -> np.ndarray:
    """K(t) = 2^{-t}|I_t| for t = 0..t_max (entry 0 is 0), rounded once from exact integers."""
    counts = excursion_counts(t_max)
    return np.array([c / 2**t for t, c in enumerate(counts)])


def K_exact(t: int) -> float:
    if t < 1:
        raise DomainError(f"Excursion length must be at least 1, got {t}")
    return float(kernel_table(max(t, 32))[t])


def K_hat(lam: float, t_max: Optional[int] = None) -> tuple[float, float]:
    """Laplace transform sum_t K(t) e^{-lambda t}, truncated at t_max.

    Returns:
        tuple[float, float]: The partial sum (compensated) and a bound on the rest.

    Raises:
        DivergenceError: If lambda lies below the convergence threshold.
    """
    terms = _series(step_weight(lam), t_max or series_horizon())
    _check_convergence(terms, lam)
    return math.fsum(terms), _tail_bound(terms, lam)


def kernel_G(lam: float) -> float:
    """G from the closed form of the excursion generating function.

    With y = e^{-lambda}/2, the generating function s0 of excursions solves
    y s^2 - (1 - y + y^2 + y^3) s + y = 0 on (y, 1], and K-hat = (s0 - y)/y.
    The discriminant vanishes at lambda-hat, where s0 = 1 and G = 1 - y = 2 - sqrt(2);
    within BRANCH_SLACK of it the double root is taken.
    """
    if lam < LAMBDA_HAT - BRANCH_SLACK:
        raise DivergenceError(f"Kernel has no admissible root at lambda={lam}", lam=lam)
    if abs(lam - LAMBDA_HAT) <= BRANCH_SLACK:
        return 2.0 - math.sqrt(2.0)
    y = step_weight(lam)
    b = 1.0 - y + y * y + y**3
    # b - 2y = (1 - y)(2 - (1 + y)^2), exact zero at y = sqrt(2) - 1
    disc = max((1.0 - y) * (2.0 - (1.0 + y) ** 2) * (b + 2.0 * y), 0.0)
    s0 = (b - math.sqrt(disc)) / (2.0 * y)
    k_hat = (s0 - y) / y
    return k_hat / (1.0 + k_hat)


def G_of_lambda(lam: float, route: str = "dp", t_max: Optional[int] = None) -> float:
    """Generating function G of prime excursions (first return to level 0).

    Routes: 'dp' sums the prime-excursion DP directly, 'series' uses
    G = K-hat/(1 + K-hat), 'kernel' the closed form of the generating function.
    """
    if route not in G_ROUTES:
        raise ValueError(f"Invalid route: {route}. Available routes: {G_ROUTES.keys()}")
    return G_ROUTES[route](lam, t_max or series_horizon())


def _G_dp(lam: float, t_max: int) -> float:
    terms = _series(step_weight(lam), t_max, prime=True)
    _check_convergence(terms, lam)
    return math.fsum(terms)


def _G_series(lam: float, t_max: int) -> float:
    value, _ = K_hat(lam, t_max)
    return value / (1.0 + value)


G_ROUTES = {
    "dp": _G_dp,
    "series": _G_series,
    "kernel": lambda lam, t_max: kernel_G(lam),
}


def solve_lambda_hat(tolerance: float = TOLERANCE) -> float:
    """Root of log E[exp(-lambda |U|)] = lambda - log(3/2) by bracketed search."""

    def f(lam: float) -> float:
        return math.log(laplace_mgf_abs(lam)) - lam + ALPHA_0

    return _brentq(f, (1e-6, 5.0), tolerance, "lambda-hat")


def _brentq(f, bracket: tuple[float, float], tolerance: float, name: str) -> float:
    lo, hi = bracket
    f_lo, f_hi = f(lo), f(hi)
    log.info(f"Solving for {name} on [{lo}, {hi}], values ({f_lo:.3e}, {f_hi:.3e})")
    if f_lo * f_hi > 0:
        raise SolverError(f"No sign change for {name}", bracket=bracket, values=(f_lo, f_hi))
    try:
        return optimize.brentq(f, lo, hi, xtol=tolerance, rtol=4 * np.finfo(float).eps)
    except (RuntimeError, ValueError) as e:
        raise SolverError(f"Root search for {name} failed: {e}", bracket=bracket, values=(f_lo, f_hi))


def lambda_star_solve(tolerance: float = TOLERANCE, t_max: Optional[int] = None) -> TiltParams:
    """Tilt constants of the excursion renewal.

    lambda* is the root of G(lambda) = 1/2 on the prime-excursion DP route,
    lambda-hat the root of the increment identity, and lambda** the exponential
    growth rate of K(t) at the truncation horizon (PRUDENT_T_MAX by default).

    Raises:
        DomainError: If tolerance is not positive.
        SolverError: If a bracket fails or the constants come out of order.
    """
    if tolerance <= 0:
        raise DomainError(f"Tolerance must be positive, got {tolerance}")
    return _solve_tilts(tolerance, t_max or series_horizon())


@lru_cache(maxsize=8)
def _solve_tilts(tolerance: float, t_max: int) -> TiltParams:
    lam_hat = solve_lambda_hat(tolerance)
    lam_star = _brentq(lambda lam: _G_dp(lam, t_max) - 0.5, (LAMBDA_HAT, 2.0), tolerance, "lambda*")

    terms = _series(step_weight(lam_star), t_max)
    lam_2star = lam_star + math.log(terms[-1] / terms[-2])

    if not lam_2star < lam_hat < lam_star:
        raise SolverError(
            f"Tilt constants out of order: lambda**={lam_2star}, lambda-hat={lam_hat}, lambda*={lam_star}",
            bracket=(lam_hat, 2.0),
            values=(lam_2star, lam_star),
        )
    log.info(f"lambda*={lam_star:.12f} lambda-hat={lam_hat:.12f} lambda**={lam_2star:.12f}")
    return TiltParams(
        lambda_star=lam_star,
        lambda_hat=lam_hat,
        lambda_double_star=lam_2star,
        tolerance=tolerance,
    )


def lambda_double_star_doubling(t_max: Optional[int] = None, tolerance: float = 1e-8) -> float:
    """Divergence threshold of K-hat seen at a finite horizon, by doubling it.

    The series counts as divergent at lambda when its terms over (t_max, 2 t_max]
    add up to at least those over (t_max/2, t_max].
    """
    t_max = t_max or series_horizon()

    def excess(lam: float) -> float:
        terms = _series(step_weight(lam), 2 * t_max)
        return math.fsum(terms[t_max + 1 :]) - math.fsum(terms[t_max // 2 + 1 : t_max + 1])

    return _brentq(excess, (LAMBDA_HAT - 0.05, LAMBDA_HAT + 0.5), tolerance, "lambda** by doubling")


def kstar_table(lambda_star: float, t_max: Optional[int] = None) -> np.ndarray:
    return _kstar_table(lambda_star, t_max or series_horizon())


@lru_cache(maxsize=4)
def _kstar_table(lambda_star: float, t_max: int) -> np.ndarray:
    return _series(step_weight(lambda_star), t_max)


def K_star_pmf(t: int, params: Optional[TiltParams] = None) -> float:
    params = params or lambda_star_solve()
    if t < 1:
        return 0.0
    table = kstar_table(params.lambda_star)
    if t >= len(table):
        return float(K_exact(t) * math.exp(-params.lambda_star * t))
    return float(table[t])


def moments(params: Optional[TiltParams] = None, t_max: Optional[int] = None) -> ExcursionMoments:
    """First and second moments of (T, N) under the tilted excursion law."""
    t_max = t_max or series_horizon()
    params = params or lambda_star_solve(t_max=t_max)
    table = _series(params.y_star, t_max, with_moments=True)
    t = np.arange(t_max + 1, dtype=float)
    mass, n1, n2 = table
    tail = _tail_bound(mass, params.lambda_star)
    return ExcursionMoments(
        mean_T=math.fsum(t * mass),
        mean_N=math.fsum(n1),
        mean_T2=math.fsum(t * t * mass),
        mean_N2=math.fsum(n2),
        mean_NT=math.fsum(t * n1),
        tail_bound=tail,
    )


def backward_table(r_max: int, levels: int, terminal: np.ndarray, scale: float = 0.5) -> np.ndarray:
    """Completion weights B[r, v, mode] of walks with r steps left.

    ``terminal`` (levels, 3) marks the states a walk may end in. Moves above the
    top level are not allowed. Each step is scaled by ``scale``.
    """
    table = np.zeros((r_max + 1, levels, 3))
    table[0] = terminal
    for r in range(1, r_max + 1):
        prev = table[r - 1]
        up = np.zeros(levels)
        up[:-1] = prev[1:, P]
        down = np.zeros(levels)
        down[1:] = prev[:-1, M]
        table[r, :, H] = prev[:, H] + up + down
        table[r, :, P] = prev[:, H] + up
        table[r, :, M] = prev[:, H] + down
        table[r] *= scale
    return table


def walk_down(table: np.ndarray, T: int, rng: np.random.Generator) -> list[int]:
    """Draw a walk of T lattice steps (the first one an extension step at level 0)
    proportionally to the completion weights; returns its effective levels V_0..V_N."""
    levels = [0, 0]
    v, mode = 0, H
    top = table.shape[1] - 1
    for rem in range(T - 1, 0, -1):
        nxt = table[rem - 1]
        w_e = nxt[v, H]
        w_n = nxt[v + 1, P] if mode != M and v < top else 0.0
        w_s = nxt[v - 1, M] if mode != P and v >= 1 else 0.0
        u = rng.random() * (w_e + w_n + w_s)
        if u < w_e:
            levels.append(v)
            mode = H
        elif u < w_e + w_n:
            v += 1
            levels[-1] = v
            mode = P
        else:
            v -= 1
            levels[-1] = v
            mode = M
    return levels


def _joint_table(t_joint: int) -> np.ndarray:
    """Untilted weights of excursions by (T, N), shape (t_joint+1, t_joint+1)."""
    size = t_joint // 2 + 2
    w = np.zeros((3, size, t_joint + 1))
    w[H, 0, 1] = 0.5
    out = np.zeros((t_joint + 1, t_joint + 1))
    out[1] = w[H, 0]
    for t in range(2, t_joint + 1):
        nxt = np.zeros_like(w)
        nxt[H, :, 1:] = w.sum(axis=0)[:, :-1]
        nxt[P, 1:] = (w[H] + w[P])[:-1]
        nxt[M, :-1] = (w[H] + w[M])[1:]
        w = 0.5 * nxt
        out[t] = w[H, 0] + w[M, 0]
    return out


class ExcursionLaw:
    """The tilted excursion law P*.

    Lengths are drawn from K*, and given its length an excursion is uniform, so
    the path is drawn from an untilted backward table grown on demand.
    """

    def __init__(self, params: Optional[TiltParams] = None, t_max: Optional[int] = None, t_joint: int = T_JOINT):
        t_max = t_max or series_horizon()
        self.params = params or lambda_star_solve(t_max=t_max)
        self.y = self.params.y_star
        self.t_max = t_max
        self.pmf = kstar_table(self.params.lambda_star, t_max)
        cdf = np.cumsum(self.pmf)
        self.mass = float(cdf[-1])
        self.cdf = cdf / cdf[-1]
        self.t_joint = min(t_joint, t_max)
        joint = _joint_table(self.t_joint)
        row_sums = joint.sum(axis=1, keepdims=True)
        row_sums[row_sums == 0] = 1.0
        self.joint_cdf = np.cumsum(joint / row_sums, axis=1)
        self._table = np.zeros((0, 0, 3))

    def _terminal(self, levels: int) -> np.ndarray:
        terminal = np.zeros((levels, 3))
        terminal[0, H] = 1.0
        terminal[0, M] = 1.0
        return terminal

    def table(self, T: int) -> np.ndarray:
        if self._table.shape[0] < T:
            r_max = max(T, 2 * self._table.shape[0], 64)
            levels = r_max // 2 + 2
            log.info(f"Growing the excursion backward table to {r_max} steps")
            self._table = backward_table(r_max, levels, self._terminal(levels))
        return self._table

    def sample_T(self, rng: np.random.Generator) -> int:
        return max(int(np.searchsorted(self.cdf, rng.random(), side="right")), 1)

    def sample_T_array(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.maximum(np.searchsorted(self.cdf, rng.random(size), side="right"), 1)

    @property
    def mean_T(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf)) / self.mass

    @cached_property
    def pmf_N(self) -> np.ndarray:
        """N-weighted masses: sum of N y^t over excursions of length t, for t = 0..t_max."""
        return _series(self.y, self.t_max, with_moments=True)[1]

    def sample_N_given_T(self, T: int, rng: np.random.Generator) -> int:
        if T > self.t_joint:
            return EffectiveExcursion(tuple(self.sample_levels(T, rng))).N
        row = self.joint_cdf[T]
        return int(np.searchsorted(row, rng.random() * row[-1], side="right"))

    def sample_N_array(self, T: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Vectorized N given T; lengths above the joint horizon fall back to path sampling."""
        T = np.asarray(T, dtype=np.int64)
        out = np.zeros(len(T), dtype=np.int64)
        small = T <= self.t_joint
        rows = self.joint_cdf[T[small]]
        u = rng.random(int(small.sum()))[:, None] * rows[:, -1:]
        out[small] = (rows <= u).sum(axis=1)
        for i in np.nonzero(~small)[0]:
            out[i] = self.sample_N_given_T(int(T[i]), rng)
        return out

    def sample_levels(self, T: int, rng: np.random.Generator) -> list[int]:
        return walk_down(self.table(T), T, rng)

    def sample(self, rng: np.random.Generator) -> EffectiveExcursion:
        return EffectiveExcursion(tuple(self.sample_levels(self.sample_T(rng), rng)))


@lru_cache(maxsize=1)
def excursion_law(t_max: Optional[int] = None) -> ExcursionLaw:
    """The shared tilted excursion law at the given series horizon."""
    return _excursion_law(t_max or series_horizon())


@lru_cache(maxsize=4)
def _excursion_law(t_max: int) -> ExcursionLaw:
    return ExcursionLaw(t_max=t_max)


def sample_excursion_pstar(rng: np.random.Generator, law: Optional[ExcursionLaw] = None) -> EffectiveExcursion:
    return (law or excursion_law()).sample(rng)


def truncate(V: Union[EffectiveExcursion, Sequence[int]], R: int) -> EffectiveExcursion:
    """Cut an excursion at its first level above R and pin the last level to R."""
    if R < 0:
        raise DomainError(f"Strip width must be nonnegative, got {R}")
    values = V.values if isinstance(V, EffectiveExcursion) else tuple(V)
    for i, v in enumerate(values):
        if v > R:
            return EffectiveExcursion(values[:i] + (R,))
    return EffectiveExcursion(values)


def excursion_stats(V: EffectiveExcursion, R: int) -> tuple[int, int, int]:
    """(T, N, eps) of an excursion confined to the strip [0, R]; eps = 1 iff it ends at R (always for R = 0)."""
    eps = 1 if R == 0 or V.values[-1] == R else 0
    return V.T, V.N, eps
