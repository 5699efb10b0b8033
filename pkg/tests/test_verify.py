import pytest

from app.application.services.verify import SCALES, VerifyService


def test_quick_oracle_and_tilt():
    result = VerifyService().run(["oracle_identities", "tilt_solver"], scale="quick")
    assert result["passed"]
    assert result["checks"]["oracle_identities"]["omega"] == [4, 12, 36]


def test_quick_strip_lemmas():
    result = VerifyService().run(["strip_lemmas"], scale="quick")
    assert result["checks"]["strip_lemmas"]["maps_ok"]
    assert result["passed"]


def test_rejects_unknown_names():
    with pytest.raises(ValueError):
        VerifyService().run(["nonsense"], scale="quick")
    with pytest.raises(ValueError):
        VerifyService().run(scale="huge")


def test_crossing_grids_start_past_the_transient():
    for scale in SCALES.values():
        assert min(scale["crossing_L"]) >= 2**8
        assert list(scale["crossing_L"]) == sorted(scale["crossing_L"])


@pytest.mark.slow
def test_quick_scale_passes():
    assert VerifyService().run(scale="quick", seed=3)["passed"]
