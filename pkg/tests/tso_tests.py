import json
import logging
import unittest

from grid_model import load_case, to_per_unit
from milp_solver import MilpInfeasibleError
from tso_subproblem import (
    ISOLATED, LITERAL, RELAXED, STRICT, TsoBuildError, TsoMultiplierView,
    build_tso, solve_tso, solve_tso_surrogate, surrogate_value,
    tso_objective
)
from tests.case_documents import build_document, self_sufficient_changes


class TsoTestCase(unittest.TestCase):
    """Test case for the transmission unit-commitment subproblem"""

    def setUp(self):
        self.logger = logging.getLogger('tso-tests')
        self.case = to_per_unit(load_case(json.dumps(build_document())))

    def tearDown(self):
        pass

    def test_strict_with_fixed_exchanges(self):
        exchanges = {'DSO-1': (0.0, 110.0), 'DSO-2': (0.0, 110.0)}
        sol = solve_tso(self.case, STRICT, exchanges, logger=self.logger)
        self.assertTrue(sol.proven_optimal)
        self.assertEqual({'G1': 1, 'G2': 1}, sol.commit)
        self.assertAlmostEqual(65.0, sol.gen_p['G1'], places=3)
        self.assertAlmostEqual(15.0, sol.gen_p['G2'], places=3)
        self.assertAlmostEqual(75.0, sol.flow['1-2'], places=3)
        self.assertAlmostEqual(110.0, sol.tso_sell['DSO-1'], places=6)
        self.assertAlmostEqual(9000.0 - 16.0 * 65.0 - 6.0 * 15.0,
                               sol.objective, places=2)
        for bus_id, residual in sol.balance_violation.items():
            self.assertAlmostEqual(0.0, residual, places=4, msg=bus_id)

    def test_isolated_infeasible(self):
        with self.assertRaises(MilpInfeasibleError):
            solve_tso(self.case, ISOLATED, logger=self.logger)

        case = to_per_unit(load_case(json.dumps(
            build_document(self_sufficient_changes()))))
        sol = solve_tso(case, ISOLATED, logger=self.logger)
        self.assertEqual({}, sol.tso_sell)
        self.assertAlmostEqual(300.0, sum(sol.gen_p.values()), places=3)
        self.assertAlmostEqual(15.0, sol.gen_p['G2'], places=3)

    def test_surrogate_condition(self):
        view = TsoMultiplierView(lambdas={'1': 20.0, '2': 20.0})
        first = solve_tso_surrogate(self.case, view, logger=self.logger)
        self.assertAlmostEqual(75.0, first.gen_p['G1'], places=3)
        self.assertAlmostEqual(15.0, first.gen_p['G2'], places=3)
        self.assertFalse(first.surrogate_condition_unmet)
        self.assertAlmostEqual(
            first.surrogate_value,
            surrogate_value(self.case, first, view), places=4)
        # no DSO supply: both buses are short of load
        self.assertLess(first.balance_violation['1'] +
                        first.balance_violation['2'], 0.0)

        again = solve_tso_surrogate(
            self.case, TsoMultiplierView(lambdas={'1': 20.0, '2': 20.0},
                                         prev=first),
            logger=self.logger)
        self.assertTrue(again.surrogate_condition_unmet)
        self.assertAlmostEqual(first.surrogate_value, again.surrogate_value,
                               places=3)

    def test_low_price_decommits(self):
        """Below every offer the relaxed program shuts units down"""
        view = TsoMultiplierView(lambdas={'1': 1.0, '2': 1.0})
        sol = solve_tso_surrogate(self.case, view, logger=self.logger)
        self.assertEqual({'G1': 0, 'G2': 0}, sol.commit)
        self.assertAlmostEqual(0.0, sum(sol.gen_p.values()), places=4)

    def test_literal_pricing(self):
        gen_p = {'G1': 65.0, 'G2': 15.0}
        buy = {'DSO-1': 0.0, 'DSO-2': 0.0}
        sell = {'DSO-1': 110.0, 'DSO-2': 110.0}
        welfare = tso_objective(self.case, gen_p, buy, sell)
        literal = tso_objective(self.case, gen_p, buy, sell, LITERAL)
        offer = sum(self.case.dso(d).offer_price * sell[d] for d in sell)
        self.assertAlmostEqual(welfare - offer, literal)

    def test_build_errors(self):
        with self.assertRaises(TsoBuildError):
            build_tso(self.case, 'merged')
        with self.assertRaises(TsoBuildError):
            build_tso(self.case, RELAXED)
        with self.assertRaises(TsoBuildError):
            build_tso(self.case, STRICT, pricing_mode='market')
