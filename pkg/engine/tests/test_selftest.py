# tests/test_selftest.py
from unittest.mock import patch

import pytest
from stainreg import selftest
from stainreg.errors import SelfTestFailure
from stainreg.selftest import CheckOutcome, SuiteReport, format_report, require_passed, run_selftest
from stainreg.similarity.regularizers import Regularization, curv


def skewed_curv(grid):
    """curv with a 1% gradient error, as a broken implementation would produce."""
    value, gradient = curv(grid)
    return Regularization(value, 1.01 * gradient)


def passing_suite(report: SuiteReport, seed: int) -> None:
    report.check("always", True, f"seed {seed}")


# --- Suites ---


@pytest.mark.parametrize("suite", ["gradient", "oracle", "determinism"])
def test_suite_passes_on_a_clean_build(suite):
    (report,) = run_selftest([suite])

    assert report.passed, format_report([report])
    assert report.checks


def test_injected_gradient_bug_is_named():
    with patch("stainreg.selftest.curv", side_effect=skewed_curv):
        reports = run_selftest(["gradient"])

    failed = [c.name for c in reports[0].checks if not c.passed]
    assert failed == ["curv_gradient"]
    with pytest.raises(SelfTestFailure, match="gradient/curv_gradient"):
        require_passed(reports)


def test_crashing_suite_is_recorded_as_a_failure():
    def crashing(report, seed):
        raise ZeroDivisionError("division by zero")

    with patch.dict(selftest.SUITES, {"oracle": crashing}):
        (report,) = run_selftest(["oracle"])

    assert not report.passed
    assert report.checks[-1].name == "completed"
    assert "ZeroDivisionError" in report.checks[-1].detail


# --- Report ---


def test_report_table_lists_every_check():
    reports = [
        SuiteReport("gradient", [CheckOutcome("ngf_affine_gradient", True, "worst relative error 1.00e-07")]),
        SuiteReport("oracle", [CheckOutcome("bh_step_up", False, "worst deviation 1.00e-03")]),
    ]

    lines = format_report(reports).splitlines()

    assert lines[0].split() == ["suite", "check", "result", "detail"]
    assert lines[1].split()[:3] == ["gradient", "ngf_affine_gradient", "ok"]
    assert lines[2].split()[:3] == ["oracle", "bh_step_up", "FAIL"]
    assert lines[1].index("ok") == lines[2].index("FAIL")


def test_require_passed_accepts_green_reports():
    require_passed([SuiteReport("oracle", [CheckOutcome("percentile_fixture", True)])])


# --- Command ---


def test_selftest_command_prints_the_table(cli, capsys):
    with patch.dict(selftest.SUITES, {"gradient": passing_suite}):
        code = cli(["selftest", "--suite", "gradient", "--seed", "4"])

    assert code == 0
    assert "always" in capsys.readouterr().out


def test_selftest_command_exits_one_on_failure(cli, capsys):
    with patch("stainreg.selftest.curv", side_effect=skewed_curv):
        code = cli(["selftest", "--suite", "gradient"])

    assert code == 1
    assert "FAIL" in capsys.readouterr().out
