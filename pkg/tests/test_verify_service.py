import numpy as np
import pytest

from app import main
from services.verify_service import (
    SUITES, SuiteResult, check_closed_forms, check_xor, corrupted_xor_gadget, format_table, run_suites,
)
from utils.helpers import derive_rng


def test_xor_check_catches_a_corrupted_gadget():
    rng = derive_rng(1)
    assert check_xor(rng, quick=True)
    with pytest.raises(AssertionError):
        check_xor(derive_rng(1), quick=True, gadget=corrupted_xor_gadget())


def test_closed_form_suite_passes():
    assert check_closed_forms(np.random.default_rng(0), quick=True)


def test_format_table():
    results = [SuiteResult('xor', True, 'ok', 0.5), SuiteResult('closed_forms', False, 'boom', 1.25)]
    lines = format_table(results).splitlines()
    assert lines[0].split() == ['suite', 'result', 'seconds', 'detail']
    assert lines[1].split() == ['xor', 'pass', '0.50', 'ok']
    assert lines[2].split() == ['closed_forms', 'FAIL', '1.25', 'boom']


@pytest.mark.slow
def test_quick_run_passes_and_mutation_fails(capsys):
    results = run_suites(quick=True)
    assert [r.name for r in results] == [name for name, _ in SUITES]
    assert all(r.passed for r in results), format_table(results)
    mutated = {r.name: r.passed for r in run_suites(quick=True, mutate=True)}
    assert not mutated['xor'] and mutated['parity']
    assert main(['--quiet', 'verify', '--quick']) == 0
    assert main(['--quiet', 'verify', '--quick', '--mutate']) == 1
