"""Acceptance criteria 1-11 at their stated tolerances and time limits.

Each test prints one PASS/FAIL line straight to the terminal, bypassing
pytest's output capture.
"""

import subprocess
import sys

import pytest

from fomlb import checks


@pytest.fixture
def say(capsys):
    def emit(line):
        with capsys.disabled():
            print("\n" + line)

    return emit


def _report(result, say):
    say(result.line())
    assert result.passed, f"{result.line()}\n{result.details}"


def test_criterion_01_spectrum(say):
    _report(checks.check_spectrum(), say)


def test_criterion_02_gradients(say):
    _report(checks.check_gradients(), say)


def test_criterion_03_prox(say):
    _report(checks.check_prox(), say)


def test_criterion_04_supports(say):
    _report(checks.check_supports(), say)


def test_criterion_05_certificate(say):
    _report(checks.check_certificate(), say)


def test_criterion_06_front_rate_class1(say):
    _report(checks.check_front_rate_class1(), say)


def test_criterion_07_front_rate_class2(say):
    _report(checks.check_front_rate_class2(), say)


def test_criterion_08_scaling(say):
    _report(checks.check_scaling(), say)


def test_criterion_09_transfer(say):
    res = checks.check_transfer()
    assert res.details["P_premise_points"] > 0 and res.details["SP_premise_points"] > 0
    _report(res, say)


def test_criterion_10_ratio(say):
    _report(checks.check_ratio(), say)


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "fomlb", *args], capture_output=True, text=True, timeout=600)


def test_criterion_11_cli_contract(tmp_path, say):
    verify = _cli("verify", "--out", str(tmp_path))
    lines = [ln for ln in verify.stdout.splitlines() if ln.startswith("criterion")]
    all_pass = len(lines) == 10 and all(" PASS " in ln for ln in lines)
    verify_ok = verify.returncode == (0 if all_pass else 1)
    first = _cli("bounds")
    second = _cli("bounds")
    bounds_ok = first.returncode == 0 and first.stdout == second.stdout and "threshold" in first.stdout
    ok = verify_ok and all_pass and bounds_ok
    say(f"criterion 11 {'PASS' if ok else 'FAIL'}  command line contract (verify exit {verify.returncode}, bounds identical: {first.stdout == second.stdout})")
    assert verify_ok, verify.stdout + verify.stderr
    assert all_pass, verify.stdout
    assert bounds_ok
