import pytest

from quadrep import taylor
from quadrep.verify import format_report, hermite_quadrature_oracle, run_verify


def test_fast_battery_passes_with_one_line_per_check():
    results = run_verify("fast", seed=0)
    assert all(r.passed for r in results), format_report(results)
    report = format_report(results).splitlines()
    assert len(report) == len(results) + 2
    assert all(len(line.split(" | ")) == 5 for line in report[1:-1])
    assert sum(r.seconds for r in results) < 60


@pytest.mark.parametrize("seed", [1, 2])
def test_fast_battery_other_seeds(seed):
    assert all(r.passed for r in run_verify("fast", seed=seed))


def test_mutated_hessian_fails_only_hessian_checks(monkeypatch):
    real = taylor._hessian_terms
    monkeypatch.setattr(taylor, "_hessian_terms", lambda *a: (real(*a)[0], -real(*a)[1]))
    failed = {r.name for r in run_verify("fast") if not r.passed}
    assert "hessian_form_vs_second_differences" in failed
    assert "gradient_vs_central_differences" not in failed


def test_quadrature_oracle_known_values():
    assert hermite_quadrature_oracle(0) == pytest.approx(0.5, abs=1e-14)
    assert hermite_quadrature_oracle(1) == pytest.approx(0.3989422804014327, abs=1e-14)
    assert hermite_quadrature_oracle(2) == pytest.approx(0.0, abs=1e-14)


def test_level_validation():
    with pytest.raises(ValueError):
        run_verify("medium")
