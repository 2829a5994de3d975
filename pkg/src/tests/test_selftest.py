#!/usr/bin/env python3
"""
Test suite for the reduced oracle suite
"""

import os
import sys

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from src.core import bias_analytics as ba
from src.core import selftest


class TestChecks:
    """Individual oracle checks"""

    @pytest.mark.parametrize('check', [selftest.check_tables, selftest.check_blom_symmetry,
                                       selftest.check_gradients, selftest.check_chain_bias])
    def test_fast_checks_pass(self, check):
        passed, detail = check()
        assert passed, detail

    def test_mutation_check_restores_constant(self):
        original = ba.INV_SQRT_PI
        caught, _ = selftest.check_inv_sqrt_pi_mutation()
        assert caught
        assert ba.INV_SQRT_PI == original

    @pytest.mark.slow
    def test_full_suite(self):
        results = selftest.run_selftest()
        assert [r.name for r in results] == [name for name, _ in selftest.CHECKS]
        assert all(r.passed for r in results), [r.line() for r in results if not r.passed]


class TestRunner:
    """The runner turns exceptions into failed checks"""

    def test_raising_check_is_reported(self):
        def broken():
            raise RuntimeError('no luck')

        results = selftest.run_selftest([('ok', lambda: (True, 'fine')), ('broken', broken)])
        assert [r.passed for r in results] == [True, False]
        assert results[1].line() == 'FAIL  broken  raised no luck'
        assert results[0].line() == 'PASS  ok  fine'
        assert results[0].seconds >= 0.0
