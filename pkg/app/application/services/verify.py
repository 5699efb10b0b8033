from __future__ import annotations

import json
import logging
import math
from collections import Counter
from functools import partial
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import stats

from app.application.consts import LAMBDA_STAR_PIN, LAMBDA_STAR_PIN_TOLERANCE
from app.application.models import LatticePath, WeightedPath
from app.application.services.effective_walk import (
    K_hat,
    excursion_law,
    kernel_G,
    kernel_table,
    lambda_star_solve,
    moments,
    sample_excursion_pstar,
)
from app.application.services.enumeration import (
    count_excursion_set,
    enumerate_prudent,
    enumerate_two_sided_plus,
    excursion_counts,
)
from app.application.services.lattice import is_two_sided_plus
from app.application.services.montecarlo import run_draws
from app.application.services.samplers import PathSampler, kinetic_probability
from app.application.services.scaling import (
    build_report,
    clt_report,
    concentration_report,
    crossing_report,
    quadrant_distribution,
    renewal_endpoint_mean,
    speed_c,
)
from app.application.services.strips import (
    fold_H,
    lemma_folding_check,
    lemma_reflection_check,
    reflect_G,
    reflection_case,
    strip_walks,
)

log = logging.getLogger(__name__)

# Sizes of every check at the two scales. 'full' holds the acceptance sizes.
SCALES = {
    "quick": {
        "identity_L": 8,
        "kinetic_norm_L": 6,
        "kinetic_draws": 20_000,
        "two_sided_L": 6,
        "two_sided_draws": 20_000,
        "is_L": 6,
        "is_draws": 20_000,
        "lemma_R": 6,
        "lemma_t": 20,
        "map_R": 4,
        "map_t": 10,
        "fold_t": 8,
        "moment_draws": 5_000,
        "ballistic_L": 1_000,
        "ballistic_draws": 2_000,
        "ballistic_eps": 0.15,
        "is_concentration_L": 300,
        "is_concentration_draws": 500,
        "is_concentration_eps": 0.2,
        "clt_L": 2_000,
        "clt_draws": 5_000,
        "clt_tolerance": (0.15, 0.25),
        "quadrant_L": 200,
        "quadrant_draws": 2_000,
        "quadrant_band": (0.2, 0.3, 0.08),
        "crossing_L": (2**8, 2**10),
        "crossing_draws": 500,
        "report_L": 200,
        "report_draws": 200,
    },
    "full": {
        "identity_L": 10,
        "kinetic_norm_L": 8,
        "kinetic_draws": 100_000,
        "two_sided_L": 10,
        "two_sided_draws": 100_000,
        "is_L": 8,
        "is_draws": 100_000,
        "lemma_R": 10,
        "lemma_t": 30,
        "map_R": 6,
        "map_t": 14,
        "fold_t": 12,
        "moment_draws": 50_000,
        "ballistic_L": 10_000,
        "ballistic_draws": 10_000,
        "ballistic_eps": 0.05,
        "is_concentration_L": 1_000,
        "is_concentration_draws": 2_000,
        "is_concentration_eps": 0.1,
        "clt_L": 10_000,
        "clt_draws": 100_000,
        "clt_tolerance": (0.05, 0.10),
        "quadrant_L": 1_000,
        "quadrant_draws": 20_000,
        "quadrant_band": (0.23, 0.27, 0.04),
        "crossing_L": (2**8, 2**10, 2**12, 2**14),
        "crossing_draws": 5_000,
        "report_L": 1_000,
        "report_draws": 1_000,
    },
}


def _chisquare(observed: Iterable[int], probabilities: Iterable[float]) -> float:
    observed = np.asarray(list(observed), dtype=float)
    probabilities = np.asarray(list(probabilities), dtype=float)
    expected = probabilities / probabilities.sum() * observed.sum()
    return float(stats.chisquare(observed, expected).pvalue)


def _steps(draw: WeightedPath) -> str:
    return draw.path.steps


def check_oracle_identities(scale: dict, seed: int, workers: int) -> dict:
    counts = [enumerate_prudent(L, workers=workers).count for L in (1, 2, 3)]
    excursions = excursion_counts(4)
    lattice = [count_excursion_set(t, method="lattice") for t in (1, 2, 4)]
    K = kernel_table(scale["identity_L"])
    worst = 0.0
    for L in range(1, scale["identity_L"] + 1):
        u = [1.0] + [0.0] * L
        for n in range(1, L + 1):
            u[n] = math.fsum(K[t] * u[n - t] for t in range(1, n + 1))
        exact = enumerate_two_sided_plus(L).count / 2**L
        worst = max(worst, abs(u[L] - exact))
    passed = (
        counts == [4, 12, 36]
        and [excursions[1], excursions[2], excursions[4]] == [1, 1, 2]
        and lattice == [1, 1, 2]
        and worst <= 1e-10
    )
    return {"passed": passed, "omega": counts, "excursions": lattice, "renewal_residual": worst}


def check_tilt_solver(scale: dict, seed: int, workers: int) -> dict:
    params = lambda_star_solve()
    k_hat, tail = K_hat(params.lambda_star)
    identity = kernel_G(params.lambda_hat) - (0.5 + math.exp(-2.0 * params.lambda_hat) / 8.0)
    ordered = params.lambda_double_star < params.lambda_hat < params.lambda_star
    pinned = abs(params.lambda_star - LAMBDA_STAR_PIN) <= LAMBDA_STAR_PIN_TOLERANCE
    return {
        "passed": abs(k_hat - 1.0) <= 1e-8 and abs(identity) <= 1e-10 and ordered and pinned,
        "lambda_star": params.lambda_star,
        "lambda_hat": params.lambda_hat,
        "lambda_double_star": params.lambda_double_star,
        "K_hat_residual": k_hat - 1.0,
        "K_hat_tail": tail,
        "G_identity_residual": identity,
    }


def check_kinetic_law(scale: dict, seed: int, workers: int) -> dict:
    sums = {}
    for L in range(1, scale["kinetic_norm_L"] + 1):
        probabilities: list[float] = []
        enumerate_prudent(L, visitor=lambda steps: probabilities.append(kinetic_probability(LatticePath(steps))))
        sums[L] = math.fsum(probabilities)
    paths: list[str] = []
    enumerate_prudent(5, visitor=paths.append)
    draws = run_draws(PathSampler("kinetic", 5), scale["kinetic_draws"], seed, workers, summarize=_steps)
    observed = Counter(draws)
    pvalue = _chisquare(
        (observed[p] for p in paths), (kinetic_probability(LatticePath(p)) for p in paths)
    )
    normalized = all(abs(s - 1.0) <= 1e-12 for s in sums.values())
    return {
        "passed": normalized and pvalue > 0.01 and set(observed) <= set(paths),
        "normalization": {str(L): s for L, s in sums.items()},
        "pvalue": pvalue,
    }


def check_two_sided_uniformity(scale: dict, seed: int, workers: int) -> dict:
    L = scale["two_sided_L"]
    family: list[str] = []
    enumerate_two_sided_plus(L, visitor=family.append)
    draws = run_draws(PathSampler("two-sided", L), scale["two_sided_draws"], seed, workers, summarize=_steps)
    observed = Counter(draws)
    members = set(family)
    outside = [p for p in observed if p not in members]
    pvalue = _chisquare((observed[p] for p in family), [1.0] * len(family))
    valid = all(is_two_sided_plus(LatticePath(p)) for p in observed)
    return {
        "passed": pvalue > 0.01 and not outside and valid,
        "L": L,
        "family_size": len(family),
        "pvalue": pvalue,
        "outside": outside[:10],
    }


def _is_summary(draw: WeightedPath) -> tuple[float, Optional[tuple[int, int]], bool]:
    if draw.path is None:
        return 0.0, None, False
    decomposition = draw.decomposition
    plain = decomposition.tail_length == 0 and not any(r.eps for r in decomposition.records[1:])
    return float(draw.weight), draw.path.endpoint, plain


def check_importance_sampler(scale: dict, seed: int, workers: int) -> dict:
    L = scale["is_L"]
    exact = enumerate_prudent(L, histogram=True, workers=workers)
    sampler = PathSampler("uniform-is", L, symmetrize=True)
    rows = run_draws(sampler, scale["is_draws"], seed, workers, summarize=_is_summary)
    weights = np.array([w for w, _, _ in rows])
    total = weights.sum()
    endpoints = exact.endpoint_histogram
    # Family-wise 3 sigma over all endpoints.
    threshold = float(stats.norm.isf(0.00135 / len(endpoints)))
    mass: Counter = Counter()
    for w, point, _ in rows:
        mass[point] += w
    worst = 0.0
    sum_sq = float(np.dot(weights, weights))
    for point, count in endpoints.items():
        p = count / exact.count
        estimate = mass[point] / total
        sigma = math.sqrt(p * (1.0 - p) * sum_sq) / total
        worst = max(worst, abs(estimate - p) / sigma if sigma > 0 else 0.0)
    plain_weights = {w for w, _, plain in rows if plain}
    unit = plain_weights <= {1.0, 0.5}
    return {
        "passed": worst <= threshold and unit,
        "L": L,
        "max_z": worst,
        "z_threshold": threshold,
        "unit_weight_on_plain_draws": unit,
    }


def _excursion_summary(V) -> tuple[int, int]:
    return V.T, V.N


def check_excursion_moments(scale: dict, seed: int, workers: int) -> dict:
    m = moments()
    law = excursion_law()
    draws = run_draws(
        partial(sample_excursion_pstar, law=law),
        scale["moment_draws"],
        seed,
        workers,
        summarize=_excursion_summary,
    )
    T = np.array([t for t, _ in draws], dtype=float)
    N = np.array([n for _, n in draws], dtype=float)
    z_T = abs(T.mean() - m.mean_T) / (T.std(ddof=1) / math.sqrt(len(T)))
    z_N = abs(N.mean() - m.mean_N) / (N.std(ddof=1) / math.sqrt(len(N)))
    return {
        "passed": z_T <= 3.0 and z_N <= 3.0 and m.mean_N <= m.mean_T,
        "mean_T": m.mean_T,
        "mean_N": m.mean_N,
        "z_T": z_T,
        "z_N": z_N,
    }


def check_strip_lemmas(scale: dict, seed: int, workers: int) -> dict:
    even_R = range(2, scale["lemma_R"] + 1, 2)
    reflection = [lemma_reflection_check(R, scale["lemma_t"]) for R in even_R]
    folding = [lemma_folding_check(R, scale["lemma_t"]) for R in even_R]

    maps_ok = True
    worst_reflect = 0.0
    worst_fold = 0.0
    for R in range(2, scale["map_R"] + 1, 2):
        for t in range(1, scale["map_t"] + 1):
            images: Counter = Counter()
            case_one: Counter = Counter()
            for values in strip_walks(R, t, end=R):
                image = reflect_G(values, R)
                maps_ok &= image.T == t and image.values[-1] == 0 and 0 <= min(image.values) and max(image.values) <= R
                images[image] += 1
                if reflection_case(values, R) == 1:
                    case_one[image] += 1
            for image, count in images.items():
                worst_reflect = max(worst_reflect, count / image.N)
            maps_ok &= all(count <= 1 for count in case_one.values())
        for x in range(2, R, 2):
            for t in range(1, scale["fold_t"] + 1):
                images = Counter()
                for values in strip_walks(R, t, end=x):
                    image = fold_H(values, R, x)
                    maps_ok &= image.T == t + 2 and image.values[-1] == 0 and 0 <= min(image.values) and max(image.values) <= R
                    images[image] += 1
                for image, count in images.items():
                    worst_fold = max(worst_fold, count / image.N**2)
    passed = (
        all(r["ok"] for r in reflection)
        and all(r["ok"] for r in folding)
        and maps_ok
        and worst_reflect <= 1.0
        and worst_fold <= 1.0
    )
    return {
        "passed": passed,
        "reflection_max_ratio": max(r["max_ratio"] for r in reflection),
        "folding_max_ratio": max(r["max_ratio"] for r in folding),
        "reflect_multiplicity_ratio": worst_reflect,
        "fold_multiplicity_ratio": worst_fold,
        "maps_ok": maps_ok,
    }


def _endpoint_summary(draw) -> tuple[int, int]:
    return draw.endpoint


def check_ballisticity(scale: dict, seed: int, workers: int) -> dict:
    L = scale["ballistic_L"]
    c = speed_c()
    endpoints = np.array(
        run_draws(PathSampler("two-sided-renewal", L), scale["ballistic_draws"], seed, workers, summarize=_endpoint_summary),
        dtype=float,
    ) / L
    # Centered on the exact finite-L mean: the first excursion is horizontal.
    expected = renewal_endpoint_mean(L)
    z = np.abs(endpoints.mean(axis=0) - expected) / (endpoints.std(axis=0, ddof=1) / math.sqrt(len(endpoints)))
    two_sided = concentration_report(
        "two-sided-renewal", L, scale["ballistic_eps"], scale["ballistic_draws"], seed, workers, c=c
    )
    uniform = concentration_report(
        "uniform-is",
        scale["is_concentration_L"],
        scale["is_concentration_eps"],
        scale["is_concentration_draws"],
        seed,
        workers,
        c=c,
    )
    return {
        "passed": bool(z.max() <= 3.0) and two_sided["freq"] >= 0.99 and uniform["freq"] >= 0.95,
        "c": c,
        "expected_endpoint": expected.tolist(),
        "endpoint_z": z.tolist(),
        "two_sided": two_sided,
        "uniform": uniform,
    }


def check_clt(scale: dict, seed: int, workers: int) -> dict:
    report = clt_report("two-sided-renewal", scale["clt_L"], [0.5, 1.0], scale["clt_draws"], seed, workers)
    at_one, at_half = scale["clt_tolerance"]
    errors = report["relative_errors"]
    return {
        "passed": errors["1,1"] <= at_one and errors["0.5,1"] <= at_half,
        "relative_errors": errors,
        "sigma": report["sigma"],
    }


def check_quadrants(scale: dict, seed: int, workers: int) -> dict:
    report = quadrant_distribution("uniform-is", scale["quadrant_L"], scale["quadrant_draws"], seed, workers)
    low, high, axis = scale["quadrant_band"]
    freq = report["freq"]
    return {
        "passed": all(low <= f <= high for f in freq[1:]) and freq[0] < axis,
        "freq": freq,
        "ess": report["ess"],
    }


def check_crossings(scale: dict, seed: int, workers: int) -> dict:
    reports = [crossing_report("uniform-is", L, scale["crossing_draws"], seed, workers) for L in scale["crossing_L"]]
    monotone = True
    for prev, nxt in zip(reports[:-1], reports[1:]):
        for name in ("late_crossing", "long_prefix", "long_tail"):
            slack = 2.0 * math.hypot(prev["stderr"][name], nxt["stderr"][name])
            monotone &= nxt[name] <= prev[name] + slack
    medians = [r["renewal"]["median_max_T_over_sqrt_L"] for r in reports]
    first = all(r["first_crossing"] == 1.0 for r in reports)
    return {
        "passed": monotone and first and medians[-1] < medians[0],
        "L": list(scale["crossing_L"]),
        "late_crossing": [r["late_crossing"] for r in reports],
        "long_prefix": [r["long_prefix"] for r in reports],
        "long_tail": [r["long_tail"] for r in reports],
        "median_max_T_over_sqrt_L": medians,
    }


def check_determinism(scale: dict, seed: int, workers: int) -> dict:
    first = build_report(scale["report_L"], scale["report_draws"], seed, 1).to_dict()
    second = build_report(scale["report_L"], scale["report_draws"], seed, max(2, workers)).to_dict()
    return {"passed": json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)}


CHECKS: dict[str, Callable[[dict, int, int], dict]] = {
    "oracle_identities": check_oracle_identities,
    "tilt_solver": check_tilt_solver,
    "kinetic_law": check_kinetic_law,
    "two_sided_uniformity": check_two_sided_uniformity,
    "importance_sampler": check_importance_sampler,
    "excursion_moments": check_excursion_moments,
    "strip_lemmas": check_strip_lemmas,
    "ballisticity": check_ballisticity,
    "clt": check_clt,
    "quadrants": check_quadrants,
    "crossings": check_crossings,
    "determinism": check_determinism,
}


class VerifyService:
    def run(
        self,
        checks: Optional[Iterable[str]] = None,
        scale: str = "full",
        seed: int = 0,
        workers: int = 1,
    ) -> dict:
        """Run the named acceptance checks (all by default) and collect pass/fail results."""
        if scale not in SCALES:
            raise ValueError(f"Invalid scale: {scale}. Available scales: {SCALES.keys()}")
        names = list(checks) if checks else list(CHECKS)
        for name in names:
            if name not in CHECKS:
                raise ValueError(f"Invalid check: {name}. Available checks: {CHECKS.keys()}")
        results = {}
        for name in names:
            log.info(f"Running check {name} at {scale} scale")
            results[name] = CHECKS[name](SCALES[scale], seed, workers)
            log.info(f"Check {name}: {'passed' if results[name]['passed'] else 'FAILED'}")
        return {
            "scale": scale,
            "seed": seed,
            "passed": all(r["passed"] for r in results.values()),
            "checks": results,
        }
