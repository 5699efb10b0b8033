from app.application import settings
from app.application.consts import DATA_CACHE_DIR, L_MAX, T_MAX
from app.application.services.effective_walk import excursion_law, moments
from app.application.settings import cache_dir, get_run_config


def test_defaults(monkeypatch):
    for name in ("PRUDENT_WORKERS", "PRUDENT_T_MAX", "PRUDENT_L_MAX", "PRUDENT_CACHE_DIR"):
        monkeypatch.delitem(settings.config, name, raising=False)
    config = get_run_config("count")
    assert config.workers == 1
    assert config.t_max == T_MAX
    assert config.L_max == L_MAX
    assert cache_dir() == DATA_CACHE_DIR


def test_environment_then_flags(monkeypatch):
    monkeypatch.setitem(settings.config, "PRUDENT_WORKERS", "4")
    monkeypatch.setitem(settings.config, "PRUDENT_L_MAX", "16")
    config = get_run_config("count", L=5, workers=None, L_max=12)
    assert config.workers == 4
    assert config.L_max == 12
    assert config.L == 5


def test_bad_integer_falls_back(monkeypatch, caplog):
    monkeypatch.setitem(settings.config, "PRUDENT_T_MAX", "many")
    assert get_run_config("tilt").t_max == T_MAX
    assert "PRUDENT_T_MAX" in caplog.text


def test_series_horizon_reaches_the_tables(monkeypatch):
    monkeypatch.setitem(settings.config, "PRUDENT_T_MAX", "600")
    law = excursion_law()
    assert law.t_max == 600
    assert len(law.pmf) == 601
    assert moments().mean_T == moments(t_max=600).mean_T
    assert get_run_config("sample").t_max == 600
