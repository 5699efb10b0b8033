from __future__ import annotations

import json
import logging
import os
from typing import Optional

import numpy as np

from app.application.consts import TABLE_FORMAT_VERSION, TOLERANCE
from app.application.models import StripTables, TiltParams
from app.application.services.effective_walk import lambda_star_solve
from app.application.services.strips import strip_tables_star
from app.application.settings import cache_dir as configured_cache_dir

log = logging.getLogger(__name__)
FilePathType = str

DTYPE = "<f8"


class TableCache:
    """Strip tables persisted as one file per (R, t_max).

    A file holds a JSON header line followed by the raw little-endian arrays
    L, L^ and L*. Files written for another format version or another lambda*
    are rebuilt; unreadable files are rebuilt with a warning.
    """

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir or configured_cache_dir()
        self.builds = 0

        os.makedirs(self.cache_dir, exist_ok=True)

    def filepath(self, R: int, t_max: int) -> FilePathType:
        return os.path.join(self.cache_dir, f"strip_R{R}_t{t_max}.bin")

    def get_or_build(self, R: int, t_max: int, params: Optional[TiltParams] = None) -> StripTables:
        """Cached strip tables with the truncated law, built on a miss.

        Args:
            R (int): Strip width.
            t_max (int): Largest excursion length.
            params (Optional[TiltParams]): Tilt constants; solved when omitted.

        Returns:
            StripTables: L, L^ and L* at lambda*.

        Raises:
            CapacityError: If the tables exceed the memory budget.
        """
        params = params or lambda_star_solve()
        filepath = self.filepath(R, t_max)
        if os.path.exists(filepath):
            tables = self._load(filepath, R, t_max, params)
            if tables is not None:
                return tables
        return self._build(filepath, R, t_max, params)

    def _load(self, filepath: FilePathType, R: int, t_max: int, params: TiltParams) -> Optional[StripTables]:
        size = (t_max + 1) ** 2
        try:
            with open(filepath, "rb") as file:
                header = json.loads(file.readline().decode("utf-8"))
                payload = file.read()
            arrays = np.frombuffer(payload, dtype=DTYPE)
            if arrays.size != 5 * size:
                raise ValueError(f"payload holds {arrays.size} values, expected {5 * size}")
        except (OSError, ValueError, UnicodeDecodeError) as err:
            log.warning(f"Corrupt table cache file {filepath} ({err}); rebuilding")
            return None

        expected = {"format_version": TABLE_FORMAT_VERSION, "R": R, "t_max": t_max}
        if any(header.get(k) != v for k, v in expected.items()):
            log.info(f"Table cache header {header} does not match {expected}; rebuilding")
            return None
        if abs(float(header.get("lambda_star", float("nan"))) - params.lambda_star) > TOLERANCE:
            log.info(f"Table cache built for lambda*={header.get('lambda_star')}; rebuilding")
            return None

        shape = (t_max + 1, t_max + 1)
        L = arrays[: 2 * size].reshape(shape + (2,)).copy()
        L_hat = arrays[2 * size : 3 * size].reshape(shape).copy()
        L_star = arrays[3 * size :].reshape(shape + (2,)).copy()
        log.info(f"Loaded strip tables R={R}, t_max={t_max} from {filepath}")
        return StripTables(R=R, t_max=t_max, lambda_star=params.lambda_star, L=L, L_hat=L_hat, L_star=L_star)

    def _build(self, filepath: FilePathType, R: int, t_max: int, params: TiltParams) -> StripTables:
        log.info(f"Building strip tables R={R}, t_max={t_max}")
        tables = strip_tables_star(R, t_max, params)
        self.builds += 1
        header = {
            "format_version": TABLE_FORMAT_VERSION,
            "R": R,
            "t_max": t_max,
            "lambda_star": params.lambda_star,
        }
        tmp = filepath + ".tmp"
        try:
            with open(tmp, "wb") as file:
                file.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
                for array in (tables.L, tables.L_hat, tables.L_star):
                    file.write(np.ascontiguousarray(array, dtype=DTYPE).tobytes())
            os.replace(tmp, filepath)
        except OSError as err:
            log.error(f"Could not write table cache {filepath}: {err}")
            raise
        return tables
