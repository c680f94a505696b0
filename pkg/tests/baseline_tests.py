import itertools
import json
import logging
import math
import unittest

import numpy as np
from scipy.optimize import linprog

from coordinator import SlrConfig
from dso_subproblem import DEFAULT_TIE_BREAK
from grid_model import ReplicationError, load_case, to_per_unit
from milp_solver import MilpInfeasibleError
from reference_baseline import (
    CaseMismatchError, UncoordinatedInfeasibleError, savings, scale_study,
    select_host_buses, solve_monolithic, uncoordinated_cost
)
from tests.case_documents import (
    SYNTHETIC, build_document, self_sufficient_changes
)


# MW and currency/MW of the two-bus case drawn by random_document
DSO_LOAD = 10.0
TARIFF = 20.0
BID = 30.0


def random_document(rng):
    """Illustrative case with drawn offers, capacities, loads and limits."""
    g1_min = float(rng.uniform(0, 20))
    g2_min = float(rng.uniform(0, 10))
    return build_document({
        "transmission": {
            "buses": [
                {"id": "1", "active_load": float(rng.uniform(40, 150))},
                {"id": "2", "active_load": float(rng.uniform(80, 220))}
            ],
            "lines": [
                {"id": "1-2", "flow_limit": float(rng.uniform(40, 160))}
            ],
            "generators": [
                {"id": "G1", "p_min": g1_min,
                 "p_max": g1_min + float(rng.uniform(20, 120)),
                 "offer_price": float(rng.uniform(2, 30))},
                {"id": "G2", "p_min": g2_min,
                 "p_max": g2_min + float(rng.uniform(10, 80)),
                 "offer_price": float(rng.uniform(2, 30))}
            ]
        },
        "distribution_systems": [
            {"id": dso_id, "generators": [{
                "id": gen_id, "p_max": float(rng.uniform(30, 140)),
                "incremental_cost": float(rng.uniform(2, 30))
            }]} for dso_id, gen_id in (("DSO-1", "G3"), ("DSO-2", "G4"))
        ],
        "interfaces": [
            {"transmission_bus": bus, "distribution_system": dso_id,
             "exchange_limit": float(rng.uniform(40, 140))}
            for bus, dso_id in (("1", "DSO-1"), ("2", "DSO-2"))
        ]
    })


def enumerated_optimum(doc, tie_break=DEFAULT_TIE_BREAK):
    """Best objective over every commitment of G1 and G2, None if no
    commitment is feasible.

    Variables are g1, g2, g3, g4, f, s1, b1, s2, b2 in MW, with the
    exchange tie-break charged on every MW bought or sold.
    """
    tso = doc["transmission"]
    loads = [b["active_load"] for b in tso["buses"]]
    g1, g2 = tso["generators"]
    g3, g4 = [ds["generators"][0] for ds in doc["distribution_systems"]]
    limits = [i["exchange_limit"] for i in doc["interfaces"]]
    flow_limit = tso["lines"][0]["flow_limit"]

    cost = [g1["offer_price"], g2["offer_price"], g3["incremental_cost"],
            g4["incremental_cost"], 0.0] + [tie_break] * 4
    a_eq = [
        [1, 0, 0, 0, -1, 1, -1, 0, 0],
        [0, 1, 0, 0, 1, 0, 0, 1, -1],
        [0, 0, 1, 0, 0, -1, 1, 0, 0],
        [0, 0, 0, 1, 0, 0, 0, -1, 1]
    ]
    b_eq = loads + [DSO_LOAD, DSO_LOAD]
    constant = BID * sum(loads) + TARIFF * 2 * DSO_LOAD

    best = None
    for u1, u2 in itertools.product((0, 1), repeat=2):
        bounds = [
            (g1["p_min"] * u1, g1["p_max"] * u1),
            (g2["p_min"] * u2, g2["p_max"] * u2),
            (g3["p_min"], g3["p_max"]), (g4["p_min"], g4["p_max"]),
            (-flow_limit, flow_limit),
            (0, limits[0]), (0, limits[0]), (0, limits[1]), (0, limits[1])
        ]
        res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                      method="highs")
        if res.status == 0 and (best is None or
                                constant - res.fun > best):
            best = constant - res.fun
    return best


class BaselineTestCase(unittest.TestCase):
    """Test case for the monolithic and separate-operation references"""

    def setUp(self):
        self.logger = logging.getLogger('baseline-tests')
        self.case = load_case(json.dumps(build_document()))
        with open(SYNTHETIC, encoding='utf-8') as f:
            self.synthetic = load_case(f.read())

    def tearDown(self):
        pass

    def test_monolithic(self):
        ref = solve_monolithic(self.case, logger=self.logger)
        self.assertTrue(ref.proven_optimal)
        self.assertEqual('welfare', ref.pricing_mode)
        self.assertAlmostEqual(65.0, ref.tso.gen_p['G1'], places=3)
        self.assertAlmostEqual(15.0, ref.tso.gen_p['G2'], places=3)
        self.assertAlmostEqual(120.0, ref.dsos['DSO-1'].gen_p['G3'], places=3)
        self.assertAlmostEqual(120.0, ref.dsos['DSO-2'].gen_p['G4'], places=3)
        self.assertAlmostEqual(75.0, ref.tso.flow['1-2'], places=3)
        for dso_id in ('DSO-1', 'DSO-2'):
            self.assertAlmostEqual(110.0, ref.dsos[dso_id].sell, places=3)
            self.assertAlmostEqual(110.0, ref.tso.tso_sell[dso_id], places=3)
        self.assertAlmostEqual(16.0, ref.lmps['1'], delta=1e-4)
        self.assertAlmostEqual(16.0, ref.lmps['2'], delta=1e-4)
        # bids + tariffs - generation costs
        self.assertAlmostEqual(9000.0 + 400.0 - 1040.0 - 90.0 - 1200.0,
                               ref.welfare, places=2)

    def test_uncoordinated(self):
        with self.assertRaises(UncoordinatedInfeasibleError) as cm:
            uncoordinated_cost(self.case, logger=self.logger)
        self.assertEqual('tso', cm.exception.subject)

        case = load_case(json.dumps(
            build_document(self_sufficient_changes())))
        separate = uncoordinated_cost(case, logger=self.logger)
        self.assertAlmostEqual(16.0 * 285.0 + 6.0 * 15.0, separate.tso_cost,
                               places=2)
        self.assertAlmostEqual(60.0, separate.dso_cost['DSO-1'], places=3)
        self.assertAlmostEqual(40.0, separate.dso_cost['DSO-2'], places=3)
        for sol in separate.dsos.values():
            self.assertAlmostEqual(0.0, sol.sell, places=4)
            self.assertAlmostEqual(0.0, sol.buy, places=4)

    def test_savings(self):
        case = load_case(json.dumps(
            build_document(self_sufficient_changes())))
        coordinated = solve_monolithic(case, logger=self.logger)
        separate = uncoordinated_cost(case, logger=self.logger)
        report = savings(coordinated, separate, to_per_unit(case),
                         self.logger)
        self.assertEqual(2, report.n_dsos)
        self.assertGreaterEqual(report.tso_savings_pct, -1e-4)
        self.assertGreater(report.dso_savings_pct, 0.0)
        self.assertAlmostEqual(100.0, report.uncoordinated_dso_cost,
                               places=3)

        other = uncoordinated_cost(self.synthetic, logger=self.logger)
        with self.assertRaises(CaseMismatchError):
            savings(coordinated, other, to_per_unit(case), self.logger)

    def test_select_host_buses(self):
        self.assertEqual(['B4', 'B8'], select_host_buses(self.synthetic, 2))
        self.assertEqual(['B4', 'B8', 'B2'],
                         select_host_buses(self.synthetic, 3))
        self.assertEqual([], select_host_buses(self.synthetic, 0))
        with self.assertRaises(ReplicationError):
            select_host_buses(self.synthetic, 12)

    def test_scale_study(self):
        reports = scale_study(self.synthetic, 'FEEDER', [1], 'monolithic',
                              logger=self.logger)
        self.assertEqual(1, len(reports))
        report = reports[0]
        self.assertEqual(2, report.n_dsos)
        self.assertEqual(('B4',), report.hosts)
        self.assertGreaterEqual(report.cpu_seconds, 0.0)
        coordinated = report.coordinated_tso_cost + \
            report.coordinated_dso_cost
        separate = report.uncoordinated_tso_cost + \
            report.uncoordinated_dso_cost
        self.assertLessEqual(coordinated, separate + 1.0)

        self.assertEqual([], scale_study(self.synthetic, 'FEEDER', [],
                                         'monolithic', logger=self.logger))

    def test_monolithic_matches_enumeration(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 20:
            doc = random_document(rng)
            best = enumerated_optimum(doc)
            if best is None:
                continue
            checked += 1
            ref = solve_monolithic(load_case(json.dumps(doc)),
                                   logger=self.logger)
            self.assertTrue(ref.proven_optimal)
            exchanged = sum(s.sell + s.buy for s in ref.dsos.values())
            self.assertAlmostEqual(
                best, ref.welfare - DEFAULT_TIE_BREAK * exchanged,
                delta=1e-4 * (1.0 + abs(best)), msg=json.dumps(doc))
            self.assert_price_slackness(doc, ref)

    def assert_price_slackness(self, doc, ref):
        """Bus prices against generator bounds and line congestion."""
        tso = doc['transmission']
        margin = 1e-2
        for gen in tso['generators']:
            p = ref.tso.gen_p[gen['id']]
            price = ref.lmps[gen['bus']]
            if p <= margin:
                continue
            if p < gen['p_max'] - margin and p > gen['p_min'] + margin:
                self.assertAlmostEqual(gen['offer_price'], price, delta=1e-3)
            elif p >= gen['p_max'] - margin:
                self.assertGreaterEqual(price, gen['offer_price'] - 1e-3)
        limit = tso['lines'][0]['flow_limit']
        if abs(ref.tso.flow['1-2']) < limit - margin:
            self.assertAlmostEqual(ref.lmps['1'], ref.lmps['2'], delta=1e-3)

    def test_no_feasible_commitment(self):
        doc = build_document({'transmission': {'buses': [
            {'id': '1', 'active_load': 600},
            {'id': '2', 'active_load': 600}
        ]}})
        self.assertIsNone(enumerated_optimum(doc))
        with self.assertRaises(MilpInfeasibleError):
            solve_monolithic(load_case(json.dumps(doc)), logger=self.logger)

    def test_scale_study_slr(self):
        cfg = SlrConfig(max_iters=25)
        reports = scale_study(self.synthetic, 'FEEDER', [1, 2], 'slr', cfg,
                              logger=self.logger)
        self.assertEqual([2, 3], [r.n_dsos for r in reports])
        self.assertEqual([('B4',), ('B4', 'B8')], [r.hosts for r in reports])
        for report in reports:
            self.assertGreaterEqual(report.cpu_seconds, 0.0)
            for value in (report.coordinated_tso_cost,
                          report.coordinated_dso_cost,
                          report.tso_savings_pct, report.dso_savings_pct):
                self.assertTrue(math.isfinite(value))
