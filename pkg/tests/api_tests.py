import unittest

from flask import Response, json
from flask.testing import FlaskClient

import server
from tests.case_documents import build_document


class ApiTestCase(unittest.TestCase):
    """Test case for server API"""

    def setUp(self):
        server.app.testing = True
        self.app = FlaskClient(server.app, Response)

    def tearDown(self):
        pass

    def get(self, url):
        """Send GET request and return status code and decoded JSON from
        response.
        """
        response = self.app.get(url)
        return response.status_code, json.loads(response.data)

    def post(self, url, json_data, headers=None):
        """Send POST request with JSON data and return status code and
        decoded JSON from response.
        """
        data = json.dumps(json_data)
        response = self.app.post(url, data=data, headers=headers or {},
                                 content_type='application/json')
        return response.status_code, json.loads(response.data)

    def test_health_endpoints(self):
        for url in ('/ready', '/healthz'):
            status, data = self.get(url)
            self.assertEqual(200, status, url)
            self.assertEqual('OK', data['status'])

    def test_validate(self):
        status, data = self.post('/validate', build_document())
        self.assertEqual(200, status)
        self.assertTrue(data['valid'])
        self.assertEqual([], data['findings'])

    def test_validate_findings(self):
        doc = build_document({'transmission': {'lines': [
            {'id': '1-2', 'reactance': 0}]}})
        status, data = self.post('/validate', doc)
        self.assertEqual(422, status)
        self.assertEqual('Case validation failed', data['message'])
        self.assertFalse(data['valid'])
        codes = [f['code'] for f in data['findings']]
        self.assertIn('reactance_not_positive', codes)

        status, data = self.post('/validate', doc,
                                 headers={'Accept-Language': 'de'})
        self.assertEqual(422, status)
        self.assertEqual('Fallvalidierung gescheitert', data['message'])

    def test_bad_requests(self):
        response = self.app.post('/validate', data='not json',
                                 content_type='text/plain')
        self.assertEqual(400, response.status_code)

        status, data = self.post('/validate', [1, 2])
        self.assertEqual(400, status)
        self.assertEqual('JSON is not an object', data['message'])

        status, data = self.post('/validate', {'transmission': {}})
        self.assertEqual(400, status)

        status, data = self.post('/solve?set=slr.beta=0.5', build_document())
        self.assertEqual(400, status)
        self.assertIn('slr/beta', data['message'])

    def test_solve(self):
        status, data = self.post('/solve', build_document())
        self.assertEqual(200, status)
        self.assertTrue(data['proven_optimal'])
        self.assertAlmostEqual(16.0, data['lmps']['1'], delta=1e-4)
        self.assertAlmostEqual(16.0, data['lmps']['2'], delta=1e-4)
        self.assertAlmostEqual(65.0, data['gen_p']['G1'], places=3)
        self.assertAlmostEqual(110.0, data['exchanges']['DSO-1']['sell'],
                               places=3)

    def test_coordinate(self):
        status, data = self.post('/coordinate?set=slr.max_iters=0',
                                 build_document())
        self.assertEqual(200, status)
        self.assertEqual('slr', data['method'])
        self.assertEqual('max_iters', data['status'])
        self.assertFalse(data['converged'])
        self.assertEqual(0, data['iterations'])
        self.assertEqual({'1': 8.0, '2': 8.0}, data['lambdas'])
