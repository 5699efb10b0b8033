from __future__ import annotations

import logging
import math
from typing import Any, Optional

from app.application.consts import TOLERANCE
from app.application.errors import DomainError
from app.application.services.effective_walk import (
    K_hat,
    kernel_G,
    kstar_table,
    lambda_double_star_doubling,
    lambda_star_solve,
    moments,
)
from app.application.services.enumeration import excursion_counts
from app.application.services.scaling import covariance_B, speed_c
from app.application.settings import series_horizon
from app.infrastructure.cache.table_cache import TableCache

log = logging.getLogger(__name__)

EXCURSION_COLUMNS = ("t", "count", "K", "K_star")
STRIP_COLUMNS = ("t", "L_complete", "L_crossing", "L_incomplete", "L_star_complete", "L_star_crossing")


class TableService:
    def tilt_summary(self, tolerance: float = TOLERANCE, t_max: Optional[int] = None) -> dict[str, Any]:
        """Tilt constants, identity residuals and the derived scaling constants."""
        t_max = t_max or series_horizon()
        params = lambda_star_solve(tolerance, t_max)
        k_hat, tail = K_hat(params.lambda_star, t_max)
        m = moments(params, t_max)
        return {
            "lambda_star": params.lambda_star,
            "lambda_hat": params.lambda_hat,
            "lambda_double_star": params.lambda_double_star,
            "lambda_double_star_doubling": lambda_double_star_doubling(t_max),
            "alpha_star": params.alpha_star,
            "growth_constant": params.growth_constant,
            "G_lambda_hat_residual": kernel_G(params.lambda_hat)
            - (0.5 + math.exp(-2.0 * params.lambda_hat) / 8.0),
            "K_hat_residual": k_hat - 1.0,
            "K_hat_tail_bound": tail,
            "c": speed_c(m),
            "sigma": covariance_B(m),
            "tolerance": tolerance,
        }

    def excursion_table(self, t_max: int) -> list[dict[str, Any]]:
        """Exact |I_t|, K(t) = 2^-t |I_t| and K*(t) for t = 1..t_max."""
        if t_max < 1:
            raise DomainError(f"t_max must be at least 1, got {t_max}")
        counts = excursion_counts(t_max)
        params = lambda_star_solve()
        kstar = kstar_table(params.lambda_star, max(t_max, 2))
        return [
            {"t": t, "count": counts[t], "K": counts[t] / 2**t, "K_star": float(kstar[t])}
            for t in range(1, t_max + 1)
        ]

    def strip_table(self, R: int, t_max: int, cache_dir: Optional[str] = None) -> list[dict[str, Any]]:
        """Per-length marginals of the strip tables for one width, through the table cache."""
        tables = TableCache(cache_dir).get_or_build(R, t_max)
        return [
            {
                "t": t,
                "L_complete": tables.L_t(t, 0),
                "L_crossing": tables.L_t(t, 1),
                "L_incomplete": tables.L_hat_t(t),
                "L_star_complete": float(tables.L_star[t, :, 0].sum()),
                "L_star_crossing": float(tables.L_star[t, :, 1].sum()),
            }
            for t in range(1, t_max + 1)
        ]
