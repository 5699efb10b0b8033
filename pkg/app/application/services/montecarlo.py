from __future__ import annotations

import logging
import math
from typing import Any, Callable, Optional

import numpy as np
from joblib import Parallel, delayed

from app.application.consts import DRAWS_PER_BLOCK
from app.application.errors import DomainError

log = logging.getLogger(__name__)


def draw_stream(seed: int, block: int, draw: int) -> np.random.Generator:
    """Independent stream of one draw, keyed by (seed, block, draw index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block, draw])))


def _identity(draw: Any) -> Any:
    return draw


def _run_block(
    sampler: Callable[[np.random.Generator], Any],
    summarize: Callable[[Any], Any],
    seed: int,
    block: int,
    start: int,
    stop: int,
) -> list:
    return [summarize(sampler(draw_stream(seed, block, i))) for i in range(start, stop)]


def run_draws(
    sampler: Callable[[np.random.Generator], Any],
    n_draws: int,
    seed: int,
    workers: int = 1,
    summarize: Optional[Callable[[Any], Any]] = None,
) -> list:
    """Run ``n_draws`` independent draws and return their summaries in draw order.

    Draws are grouped in fixed blocks of DRAWS_PER_BLOCK; every draw gets its own
    stream, so the output depends on the seed only and not on ``workers``.

    Args:
        sampler (Callable): Maps a generator to one draw. Must be picklable when
            workers > 1.
        n_draws (int): Number of draws.
        seed (int): Nonnegative master seed.
        workers (int): Number of joblib workers.
        summarize (Optional[Callable]): Applied to each draw inside the worker, to
            keep only what the statistic needs.

    Raises:
        DomainError: If n_draws or seed is negative.
    """
    if n_draws < 0:
        raise DomainError(f"Number of draws must be nonnegative, got {n_draws}")
    if seed < 0:
        raise DomainError(f"Seed must be nonnegative, got {seed}")
    summarize = summarize or _identity
    blocks = [
        (b, b * DRAWS_PER_BLOCK, min((b + 1) * DRAWS_PER_BLOCK, n_draws))
        for b in range(math.ceil(n_draws / DRAWS_PER_BLOCK))
    ]
    if workers <= 1 or len(blocks) <= 1:
        parts = [_run_block(sampler, summarize, seed, *block) for block in blocks]
    else:
        log.info(f"Running {n_draws} draws in {len(blocks)} blocks on {workers} workers")
        parts = Parallel(n_jobs=workers)(
            delayed(_run_block)(sampler, summarize, seed, *block) for block in blocks
        )
    return [item for part in parts for item in part]
