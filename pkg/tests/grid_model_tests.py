import json
import unittest

from grid_model import (
    CaseParseError, CaseReferenceError, PerUnitError, ReplicationError,
    from_per_unit, load_case, render_case, replicate_dsos, to_per_unit,
    validate
)
from tests.case_documents import (
    SYNTHETIC, build_document, read_document, translator
)


class GridModelTestCase(unittest.TestCase):
    """Test case for case parsing, validation and replication"""

    def setUp(self):
        self.translator = translator('en')

    def tearDown(self):
        pass

    def build_case(self, merge_case={}):
        return load_case(json.dumps(build_document(merge_case)))

    def test_illustrative_case(self):
        case = self.build_case()
        self.assertTrue(validate(case).is_clean)
        self.assertEqual(['DSO-1', 'DSO-2'], case.dso_ids())
        self.assertEqual(['1', '2'], case.coupled_buses())
        self.assertEqual('DSO-1', case.bus('1').hosts_dso)
        self.assertAlmostEqual(320.0, case.total_active_load())
        ds = case.dso('DSO-1')
        self.assertEqual('0', ds.root.id)
        self.assertTrue(ds.branches[0].lossless)
        # child -> parent orientation
        self.assertEqual('0', ds.upstream_branch('1').receiving_bus)

    def test_branch_orientation(self):
        case = self.build_case({
            'distribution_systems': [{
                'id': 'DSO-1',
                'branches': [{'id': '0-1', 'sending_bus': '0',
                              'receiving_bus': '1'}]
            }]
        })
        branch = case.dso('DSO-1').branches[0]
        self.assertEqual('1', branch.sending_bus)
        self.assertEqual('0', branch.receiving_bus)

    def test_validation_findings(self):
        """Every broken invariant is reported with its code"""
        input_tests = [
            # [<code>, <subject>, <partial case>]
            ['negative_load', '1', {'transmission': {'buses': [
                {'id': '1', 'active_load': -5}]}}],
            ['reactance_not_positive', '1-2', {'transmission': {'lines': [
                {'id': '1-2', 'reactance': 0}]}}],
            ['limit_not_positive', '1-2', {'transmission': {'lines': [
                {'id': '1-2', 'flow_limit': 0}]}}],
            ['generator_limits', 'G1', {'transmission': {'generators': [
                {'id': 'G1', 'p_min': 80}]}}],
            ['transmission_disconnected', 'transmission', {
                'transmission': {'buses': [
                    {'id': '3', 'active_load': 0, 'load_bid_price': 30}]}}],
            ['exchange_limit_negative', 'DSO-1', {'interfaces': [
                {'transmission_bus': '1', 'distribution_system': 'DSO-1',
                 'exchange_limit': -1},
                {'transmission_bus': '2', 'distribution_system': 'DSO-2',
                 'exchange_limit': 120}]}],
            ['dso_link_count', 'DSO-2', {'interfaces': [
                {'transmission_bus': '1', 'distribution_system': 'DSO-1',
                 'exchange_limit': 120}]}],
            ['hosts_dso_mismatch', '1', {'transmission': {'buses': [
                {'id': '1', 'hosts_dso': 'DSO-2'}]}}],
            ['root_count', 'DSO-1', {'distribution_systems': [{
                'id': 'DSO-1', 'buses': [{'id': '1', 'is_root': True}]}]}],
            ['not_radial', 'DSO-1', {'distribution_systems': [{
                'id': 'DSO-1', 'branches': [{
                    'id': '0-1b', 'sending_bus': '1', 'receiving_bus': '0',
                    'resistance': 0, 'reactance': 0,
                    'apparent_limit': 200}]}]}],
            ['voltage_bounds', 'DSO-1/1', {'distribution_systems': [{
                'id': 'DSO-1', 'buses': [{'id': '1', 'v_sq_min': 1.3}]}]}],
            ['impedance_negative', 'DSO-2/0-1', {'distribution_systems': [{
                'id': 'DSO-2', 'branches': [
                    {'id': '0-1', 'resistance': -0.1}]}]}],
            ['negative_price', 'DSO-2', {'distribution_systems': [{
                'id': 'DSO-2', 'tariff': -1}]}]
        ]
        for code, subject, changes in input_tests:
            report = validate(self.build_case(changes))
            self.assertFalse(report.is_clean, code)
            self.assertIn(code, report.codes(), code)
            subjects = [f.subject for f in report.findings if f.code == code]
            self.assertIn(subject, subjects, code)
            for message in report.messages(self.translator):
                self.assertNotIn('validation.', message)

    def test_translated_findings(self):
        case = self.build_case({'transmission': {'lines': [
            {'id': '1-2', 'reactance': 0}]}})
        report = validate(case).as_dict(translator('de'))
        self.assertFalse(report['valid'])
        self.assertEqual('reactance_not_positive',
                         report['findings'][0]['code'])
        self.assertTrue(report['findings'][0]['message'].startswith('1-2'))
        self.assertEqual('Fallvalidierung gescheitert',
                         translator('de').tr('error.case_invalid'))
        self.assertEqual('Case validation failed',
                         translator('en').tr('error.case_invalid'))

    def test_parse_errors(self):
        doc = read_document()
        with self.assertRaises(CaseParseError):
            load_case('{"transmission": ')
        with self.assertRaises(CaseParseError):
            load_case(json.dumps(dict(doc, unknown_field=1)))
        with self.assertRaises(CaseParseError):
            load_case(json.dumps(build_document({'transmission': {
                'generators': [{'id': 'G3', 'bus': '1', 'p_min': 0,
                                'p_max': 1, 'offer_price': 1}]}})))
        with self.assertRaises(CaseReferenceError):
            load_case(json.dumps(build_document({'transmission': {
                'lines': [{'id': '1-2', 'to_bus': '9'}]}})))
        with self.assertRaises(CaseReferenceError):
            load_case(json.dumps(build_document({'interfaces': [
                {'transmission_bus': '1', 'distribution_system': 'DSO-9',
                 'exchange_limit': 1}]})))

    def test_render_case(self):
        case = self.build_case()
        self.assertEqual(case, load_case(render_case(case)))

    def test_per_unit(self):
        case = self.build_case()
        pu = to_per_unit(case)
        self.assertTrue(pu.per_unit)
        self.assertIs(pu, to_per_unit(pu))
        self.assertAlmostEqual(1.0, pu.bus('1').active_load)
        self.assertAlmostEqual(0.75, pu.generators[0].p_max)
        self.assertAlmostEqual(1.2, pu.interfaces[0].exchange_limit)
        # prices and impedances are not scaled
        self.assertEqual(16.0, pu.generators[0].offer_price)
        self.assertEqual(0.1, pu.lines[0].reactance)
        back = from_per_unit(pu)
        self.assertFalse(back.per_unit)
        self.assertAlmostEqual(75.0, back.generators[0].p_max)
        self.assertAlmostEqual(200.0, back.dso('DSO-1').branches[0]
                               .apparent_limit)

        with self.assertRaises(PerUnitError):
            to_per_unit(self.build_case({'base_mva': 0}))

    def test_replicate_dsos(self):
        with open(SYNTHETIC, encoding='utf-8') as f:
            case = load_case(f.read())
        study = replicate_dsos(case, 'FEEDER', ['B4', 'B8', 'B2'])
        self.assertEqual(4, len(study.distribution_systems))
        self.assertAlmostEqual(case.total_active_load(),
                               study.total_active_load(), delta=1e-9)
        self.assertEqual(0.0, study.bus('B4').active_load)
        self.assertEqual('FEEDER@B4', study.bus('B4').hosts_dso)
        self.assertEqual('B8', study.link_for('FEEDER@B8').transmission_bus)
        self.assertTrue(validate(study).is_clean)
        self.assertIs(case, replicate_dsos(case, 'FEEDER', []))

        with self.assertRaises(ReplicationError):
            replicate_dsos(case, 'FEEDER', ['B1'])
        with self.assertRaises(ReplicationError):
            replicate_dsos(case, 'MISSING', ['B2'])
        with self.assertRaises(ReplicationError):
            replicate_dsos(case, 'FEEDER', ['B2', 'B2'])
