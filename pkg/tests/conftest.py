import numpy as np
import pytest

from app.application import settings
from app.application.services.effective_walk import excursion_law, lambda_star_solve
from app.application.services.montecarlo import draw_stream


@pytest.fixture(scope="session")
def params():
    return lambda_star_solve()


@pytest.fixture(scope="session")
def law():
    return excursion_law()


@pytest.fixture
def rng() -> np.random.Generator:
    return draw_stream(2024, 0, 0)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setitem(settings.config, "PRUDENT_CACHE_DIR", str(path))
    return str(path)


def reduced_paths(L: int) -> list[str]:
    from app.application.services.enumeration import enumerate_prudent

    out: list[str] = []
    enumerate_prudent(L, reduced=True, visitor=out.append)
    return out
