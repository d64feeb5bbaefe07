import pytest

from bcslab.suites import TOLERANCES, run_samples, run_suite
from bcslab.utils.errors import InvalidArgumentError
from bcslab.utils.rng import make_rng


def test_samples_are_reproducible_across_pool_sizes():
    def sample(rng):
        return float(rng.standard_normal())

    serial = run_samples(sample, 16, seed=5, desc="t", quiet=True, max_workers=1)
    pooled = run_samples(sample, 16, seed=5, desc="t", quiet=True, max_workers=4)
    assert serial == pooled


def test_argmin_points_at_the_worst_sample():
    values = run_samples(lambda rng: float(rng.uniform()), 8, seed=1, desc="t", quiet=True)
    draws = [float(make_rng(1, i).uniform()) for i in range(8)]
    assert values["argmin_seed"] == draws.index(min(draws))
    assert values["min_slack"] == min(draws)


def test_samples_report_through_shared_progress(monkeypatch):
    calls = []

    def recording_progress(iterable, total, desc, quiet=False):
        calls.append((total, desc, quiet))
        return iterable

    monkeypatch.setattr("bcslab.suites.progress", recording_progress)
    values = run_samples(lambda rng: 1.0, 5, seed=0, desc="entropy", quiet=True)
    assert calls == [(5, "entropy", True)]
    assert values["min_slack"] == 1.0


@pytest.mark.parametrize("suite", ["scalar", "entropy", "identity", "klein", "block-trace", "hs-chain"])
def test_inequality_suites_pass(suite):
    report = run_suite(suite, samples=20, dim=3, seed=0, quiet=True)
    assert report.passed, report.model_dump()
    assert report.tolerance == TOLERANCES[suite]
    assert report.inequality_id == suite


def test_scalar_grid_size():
    report = run_suite("scalar")
    assert report.samples == 99 * 99
    assert 0 < report.extra["argmin_x"] < 1


def test_matsubara_suite():
    report = run_suite("matsubara", seed=2)
    assert report.passed, report.extra
    assert report.extra["xcoth_tail_slack"] >= 0


def test_decomp_suite():
    report = run_suite("decomp", samples=5, seed=0, quiet=True)
    assert report.passed, report.extra
    assert report.extra["round_trip_defect"] <= 1e-10


def test_projection_is_diagnostic():
    report = run_suite("projection", samples=5, dim=3, seed=0, quiet=True)
    assert report.extra["diagnostic"] is True


def test_same_seed_same_report():
    first = run_suite("klein", samples=10, dim=2, seed=9, quiet=True)
    second = run_suite("klein", samples=10, dim=2, seed=9, quiet=True)
    assert first.min_slack == second.min_slack
    assert first.argmin_seed == second.argmin_seed


def test_unknown_suite():
    with pytest.raises(InvalidArgumentError):
        run_suite("triangle", samples=2)
