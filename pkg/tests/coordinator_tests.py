import json
import logging
import math
import unittest

import numpy as np

from coordinator import (
    DIRECTION_TOL, MAX_ITERS, SUBGRADIENT, ConfigError, SlrConfig,
    alpha_step, dual_function, initial_lambdas, run
)
from grid_model import load_case
from reference_baseline import run_subgradient, solve_monolithic
from tests.case_documents import build_document, self_sufficient_changes


class CoordinatorTestCase(unittest.TestCase):
    """Test case for surrogate Lagrangian coordination"""

    def setUp(self):
        self.logger = logging.getLogger('coordinator-tests')
        self.case = load_case(json.dumps(build_document()))

    def tearDown(self):
        pass

    def test_alpha_step(self):
        self.assertAlmostEqual(0.95, alpha_step(1, 20.0, 0.05))
        previous = 0.0
        for k in (2, 10, 100, 1000):
            value = alpha_step(k, 20.0, 0.05)
            self.assertLess(value, 1.0)
            self.assertGreater(value, previous)
            previous = value
        with self.assertRaises(ValueError):
            alpha_step(0, 20.0, 0.05)

    def test_initial_lambdas(self):
        self.assertEqual({'1': 8.0, '2': 8.0},
                         initial_lambdas(self.case, SlrConfig()))
        cfg = SlrConfig(lambda0={'2': 12.5})
        self.assertEqual({'1': 8.0, '2': 12.5},
                         initial_lambdas(self.case, cfg))

    def test_config_checks(self):
        input_tests = [
            {'s0': 0.0},
            {'c0': -1.0},
            {'beta': 1.0},
            {'big_m': 0.5},
            {'r_exp': 0.0},
            {'c_max': 0.5},
            {'max_iters': -1},
            {'direction_patience': 0},
            {'workers': 0},
            {'pricing_mode': 'market'},
            {'method': 'admm'}
        ]
        for values in input_tests:
            with self.assertRaises(ConfigError, msg=str(values)):
                SlrConfig(**values).check()
        SlrConfig(s0=0.0, method=SUBGRADIENT).check()

    def test_zero_iterations(self):
        trace = run(self.case, SlrConfig(max_iters=0), self.logger)
        self.assertEqual(MAX_ITERS, trace.terminal_status)
        self.assertEqual(1, len(trace.records))
        record = trace.records[0]
        self.assertEqual(0, record.k)
        self.assertEqual(0.0, record.stepsize)
        self.assertEqual(0.0, record.penalty)
        self.assertEqual({'1': 8.0, '2': 8.0}, record.lambdas)
        self.assertGreater(record.direction_norm, 0.0)
        # gap is estimated on the last record
        self.assertIsNotNone(record.gap)

    def test_multiplier_updates(self):
        """Recorded steps and residuals reproduce the next multipliers"""
        cfg = SlrConfig(max_iters=4, tol_direction_norm=1e-9,
                        unmet_stall=10)
        trace = run(self.case, cfg, self.logger)
        records = trace.records
        self.assertEqual(5, len(records))
        self.assertEqual(MAX_ITERS, trace.terminal_status)
        self.assertEqual(list(range(5)), [r.k for r in records])

        for prev, cur in zip(records, records[1:]):
            for bus_id, value in prev.lambdas.items():
                self.assertAlmostEqual(
                    prev.lambdas[bus_id] -
                    prev.stepsize * prev.violations[bus_id],
                    cur.lambdas[bus_id], places=9)
            for dso_id in prev.psi_buy:
                self.assertAlmostEqual(
                    prev.psi_buy[dso_id] +
                    prev.stepsize * prev.buy_residuals[dso_id],
                    cur.psi_buy[dso_id], places=9)
                self.assertAlmostEqual(
                    prev.psi_sell[dso_id] +
                    prev.stepsize * prev.sell_residuals[dso_id],
                    cur.psi_sell[dso_id], places=9)

        self.assertEqual(0.0, records[0].penalty)
        self.assertEqual(cfg.s0, records[0].stepsize)
        self.assertAlmostEqual(cfg.c0, records[1].penalty)
        for prev, cur in zip(records[1:], records[2:]):
            self.assertAlmostEqual(min(prev.penalty * cfg.beta, cfg.c_max),
                                   cur.penalty)
        for record in records[1:]:
            self.assertGreater(record.stepsize, 0.0)
        self.assertIsNotNone(trace.final_primal)

    def test_stepsize_schedule(self):
        """s0 moves the multipliers first, then steps shrink by alpha^(k-1)
        times the ratio of successive direction norms
        """
        cfg = SlrConfig(max_iters=6, tol_direction_norm=1e-9,
                        unmet_stall=10)
        records = run(self.case, cfg, self.logger).records
        self.assertEqual(cfg.s0, records[0].stepsize)
        checked = 0
        for prev, cur in zip(records, records[1:]):
            if cur.surrogate_unmet or prev.direction_norm <= 1e-9 or \
                    cur.direction_norm <= 1e-9:
                continue
            alpha = alpha_step(cur.k - 1, cfg.big_m, cfg.r_exp) \
                if cur.k > 1 else 1.0
            self.assertAlmostEqual(
                alpha * prev.stepsize * prev.direction_norm /
                cur.direction_norm, cur.stepsize, places=12)
            checked += 1
        self.assertGreater(checked, 0)

    def test_subgradient_steps(self):
        cfg = SlrConfig(s0=0.5, max_iters=3, tol_direction_norm=1e-9)
        trace = run_subgradient(self.case, cfg, self.logger)
        self.assertEqual(SUBGRADIENT, trace.method)
        self.assertEqual(MAX_ITERS, trace.terminal_status)
        for record in trace.records:
            self.assertEqual(0.0, record.penalty)
        for record in trace.records:
            self.assertAlmostEqual(0.5 / math.sqrt(record.k + 1),
                                   record.stepsize)
            self.assertFalse(record.surrogate_unmet)

    def test_decoupled_case(self):
        changes = self_sufficient_changes()
        changes['interfaces'] = [
            {'transmission_bus': '1', 'distribution_system': 'DSO-1',
             'exchange_limit': 0},
            {'transmission_bus': '2', 'distribution_system': 'DSO-2',
             'exchange_limit': 0}
        ]
        case = load_case(json.dumps(build_document(changes)))
        trace = run(case, SlrConfig(), self.logger)
        self.assertEqual(DIRECTION_TOL, trace.terminal_status)
        self.assertEqual(1, len(trace.records))
        self.assertEqual(0, trace.records[0].k)
        self.assertEqual(0.0, trace.records[0].direction_norm)
        self.assertEqual({}, trace.records[0].lambdas)

    def test_weak_duality(self):
        """The plain dual function bounds the coordinated optimum"""
        optimum = solve_monolithic(self.case, logger=self.logger).welfare
        rng = np.random.default_rng(5)
        for _ in range(5):
            lambdas = {b: float(rng.uniform(0.0, 40.0)) for b in ('1', '2')}
            psi_buy = {d: float(rng.uniform(-10.0, 10.0))
                       for d in ('DSO-1', 'DSO-2')}
            psi_sell = {d: float(rng.uniform(-10.0, 10.0))
                        for d in ('DSO-1', 'DSO-2')}
            value = dual_function(self.case, lambdas, psi_buy, psi_sell,
                                  logger=self.logger)
            self.assertGreaterEqual(value,
                                    optimum - 1e-6 * (1.0 + abs(optimum)))

    def test_parallel_workers(self):
        """Concurrent DSO solves give the same trace"""
        def signature(trace):
            return [(r.k, r.lambdas, r.psi_buy, r.psi_sell, r.stepsize,
                     r.penalty, r.direction_norm) for r in trace.records]

        serial = run(self.case, SlrConfig(max_iters=3), self.logger)
        parallel = run(self.case, SlrConfig(max_iters=3, workers=2),
                       self.logger)
        self.assertEqual(signature(serial), signature(parallel))
        self.assertEqual(serial.terminal_status, parallel.terminal_status)

    def test_illustrative_prices(self):
        """Default settings settle both bus prices at 16 within 500 steps"""
        trace = run(self.case, SlrConfig(max_iters=500), self.logger)
        self.assertLessEqual(len(trace.records), 501)
        for bus_id in ('1', '2'):
            self.assertAlmostEqual(16.0, trace.final_lambdas[bus_id],
                                   delta=0.16, msg=bus_id)

    def test_restored_welfare_below_monolithic(self):
        trace = run(self.case, SlrConfig(max_iters=200), self.logger)
        self.assertIsNotNone(trace.final_primal)
        optimum = solve_monolithic(self.case, logger=self.logger).welfare
        self.assertLessEqual(trace.final_primal['welfare'],
                             optimum + 1e-4 * (1.0 + abs(optimum)))

    def test_slr_against_subgradient(self):
        """After 400 steps SLR sits ten times closer to the prices"""
        cfg = SlrConfig(max_iters=400, tol_direction_norm=1e-9,
                        unmet_stall=400)
        slr = run(self.case, cfg, self.logger)
        baseline = run_subgradient(self.case, cfg, self.logger)
        self.assertEqual(401, len(slr.records))
        self.assertEqual(401, len(baseline.records))

        def distance(record):
            return max(abs(record.lambdas[b] - 16.0) for b in ('1', '2'))

        slr_tail = [distance(r) for r in slr.records[381:]]
        baseline_tail = [distance(r) for r in baseline.records[381:]]
        self.assertLess(10.0 * max(slr_tail), float(np.mean(baseline_tail)))

        def variation(records):
            return sum(abs(b.lambdas[bus] - a.lambdas[bus])
                       for a, b in zip(records, records[1:])
                       for bus in ('1', '2'))

        self.assertGreater(variation(baseline.records[300:]),
                           variation(slr.records[300:]))
