import json
import unittest

from conic_solver import OPTIMAL
from dso_subproblem import (
    DsoBuildError, DsoMultiplierView, build_dso, check_soc_tightness,
    solve_dso
)
from grid_model import load_case, to_per_unit
from tests.case_documents import SYNTHETIC, build_document


class DsoTestCase(unittest.TestCase):
    """Test case for the distribution subproblem"""

    def setUp(self):
        self.case = to_per_unit(load_case(json.dumps(build_document())))

    def tearDown(self):
        pass

    def solve(self, dso_id, view=None, augmented=False, case=None):
        case = case or self.case
        return solve_dso(case.dso(dso_id), case.link_for(dso_id), view,
                         augmented, base_mva=case.base_mva)

    def test_sell_surplus(self):
        sol = self.solve('DSO-1', DsoMultiplierView(lambda_root=16.0))
        self.assertEqual(OPTIMAL, sol.status)
        self.assertAlmostEqual(120.0, sol.gen_p['G3'], places=3)
        self.assertAlmostEqual(110.0, sol.sell, places=3)
        self.assertAlmostEqual(0.0, sol.buy, places=6)
        self.assertAlmostEqual(110.0, sol.net_export, places=3)
        self.assertAlmostEqual(200.0, sol.tariff_revenue)
        self.assertAlmostEqual(720.0, sol.generation_cost, places=2)
        # tariff revenue - generation cost + price * export
        self.assertAlmostEqual(200.0 - 720.0 + 16.0 * 110.0, sol.objective,
                               places=2)

    def test_low_price_buys(self):
        """Below the incremental cost only the minimum output runs"""
        sol = self.solve('DSO-1', DsoMultiplierView(lambda_root=3.0))
        self.assertAlmostEqual(10.0, sol.gen_p['G3'], places=3)
        self.assertAlmostEqual(0.0, sol.sell, places=3)
        self.assertAlmostEqual(0.0, sol.buy, places=3)
        self.assertAlmostEqual(0.0, min(sol.sell, sol.buy))

    def test_penalty_pulls_towards_tso(self):
        view = DsoMultiplierView(lambda_root=16.0, penalty=10.0,
                                 tso_sell_prev=50.0, dso_sell_prev=0.0)
        sol = self.solve('DSO-1', view, augmented=True)
        self.assertAlmostEqual(50.0, sol.sell, places=2)
        self.assertAlmostEqual(60.0, sol.gen_p['G3'], places=2)

    def test_coupling_price(self):
        """A sell price on the coupling residual discourages selling"""
        view = DsoMultiplierView(lambda_root=16.0, psi_sell=12.0)
        sol = self.solve('DSO-1', view, augmented=True)
        self.assertAlmostEqual(10.0, sol.gen_p['G3'], places=3)
        self.assertAlmostEqual(0.0, sol.sell, places=3)

    def test_soc_tightness(self):
        sol = self.solve('DSO-2', DsoMultiplierView(lambda_root=16.0))
        for branch_id, residual, flagged in check_soc_tightness(sol):
            self.assertEqual('0-1', branch_id)
            self.assertAlmostEqual(0.0, residual, places=9)
            self.assertFalse(flagged)

        with open(SYNTHETIC, encoding='utf-8') as f:
            synthetic = to_per_unit(load_case(f.read()))
        sol = self.solve('FEEDER', DsoMultiplierView(lambda_root=30.0),
                         case=synthetic)
        report = check_soc_tightness(sol)
        self.assertEqual(3, len(report))
        for branch_id, residual, flagged in report:
            self.assertGreaterEqual(residual, -1e-6, branch_id)
            self.assertFalse(flagged, branch_id)
        # losses make the feeder export less than its surplus
        surplus = sum(sol.gen_p.values()) - 30.5
        self.assertLess(sol.net_export, surplus)

    def test_build_errors(self):
        ds = self.case.dso('DSO-1')
        with self.assertRaises(DsoBuildError):
            build_dso(ds, None)

        cyclic = to_per_unit(load_case(json.dumps(build_document({
            'distribution_systems': [{'id': 'DSO-1', 'branches': [{
                'id': '0-1b', 'sending_bus': '1', 'receiving_bus': '0',
                'resistance': 0, 'reactance': 0, 'apparent_limit': 200
            }]}]
        }))))
        with self.assertRaises(DsoBuildError):
            build_dso(cyclic.dso('DSO-1'), cyclic.link_for('DSO-1'))
