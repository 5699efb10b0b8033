import pytest

from app.application.errors import DomainError
from app.application.services.tables import TableService


def test_tilt_summary():
    summary = TableService().tilt_summary()
    assert summary["lambda_star"] == pytest.approx(0.215593, abs=1e-5)
    assert summary["growth_constant"] == pytest.approx(2.4812, abs=1e-3)
    assert summary["lambda_double_star"] < summary["lambda_hat"] < summary["lambda_star"]
    assert abs(summary["K_hat_residual"]) <= 1e-8
    assert abs(summary["G_lambda_hat_residual"]) <= 1e-10
    assert 0.0 < summary["c"] < 1.0
    assert len(summary["sigma"]) == 2


def test_excursion_table():
    rows = TableService().excursion_table(5)
    assert [row["count"] for row in rows[:4]] == [1, 1, 1, 2]
    assert rows[3]["K"] == 2 / 16
    assert all(0.0 < row["K_star"] < 1.0 for row in rows)


def test_excursion_table_rejects_empty():
    with pytest.raises(DomainError):
        TableService().excursion_table(0)


def test_strip_table(cache_dir):
    rows = TableService().strip_table(2, 6, cache_dir)
    assert len(rows) == 6
    assert all(row["L_crossing"] >= 0.0 for row in rows)
