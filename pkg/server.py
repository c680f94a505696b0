import json

from flask import Flask, Request as RequestBase, request, jsonify
from flask_restx import Api, Resource, fields, reqparse
from werkzeug.exceptions import BadRequest

from qwc_services_core.translator import Translator
from coordinator import ConfigError
from coordination_service import CoordinationService
from run_config import resolve


class Request(RequestBase):
    """Custom Flask Request subclass"""
    def on_json_loading_failed(self, e):
        """Always return detailed JSON decode error, not only in debug mode"""
        raise BadRequest('Failed to decode JSON object: {0}'.format(e))


# Flask application
app = Flask(__name__)
# use custom Request subclass
app.request_class = Request
# Flask-RESTX Api
api = Api(app, version='1.0', title='TSO-DSO coordination API',
          description="""API for coordinated transmission and distribution
market clearing.

## General Information for all operations

Every operation takes a case document as JSON request body, see
`schemas/tdcoord-case.json`. Powers are in MW, prices in currency/MW.

Run settings are taken from `schemas/tdcoord-config.json` defaults and may
be overridden with repeated `set` query parameters of the form
`dotted.key=value`, e.g. `set=slr.max_iters=200`.
          """,
          default_label='Coordination operations', doc='/api/'
          )
# Omit X-Fields header in docs
app.config['RESTPLUS_MASK_SWAGGER'] = False
# disable verbose 404 error message
app.config['ERROR_404_HELP'] = False

coordination_service = CoordinationService(app.logger)


# Api models
finding_response = api.model('Finding', {
    'code': fields.String(required=True, description='Finding code',
                          example='not_radial'),
    'subject': fields.String(required=True, description='Element ID',
                             example='DSO-1'),
    'message': fields.String(required=True, description='Message')
})

validation_response = api.model('Validation', {
    'valid': fields.Boolean(required=True, description='Case is valid'),
    'findings': fields.List(fields.Nested(finding_response), required=True)
})

solve_response = api.model('Solution', {
    'welfare': fields.Float(required=True, description='Total welfare'),
    'proven_optimal': fields.Boolean(required=True),
    'pricing_mode': fields.String(required=True, example='welfare'),
    'lmps': fields.Raw(description='Bus price per transmission bus',
                       example={'1': 16.0, '2': 16.0}),
    'commit': fields.Raw(description='Commitment per generator'),
    'gen_p': fields.Raw(description='Output in MW per generator'),
    'flow': fields.Raw(description='Flow in MW per line'),
    'exchanges': fields.Raw(description='Exchange per DSO'),
    'cpu_seconds': fields.Float()
})

coordinate_response = api.model('Coordination', {
    'method': fields.String(required=True, example='slr'),
    'status': fields.String(required=True, example='direction_tol'),
    'converged': fields.Boolean(required=True),
    'iterations': fields.Integer(required=True),
    'direction_norm': fields.Float(description='Residual norm in MW'),
    'gap': fields.Float(description='Relative duality gap'),
    'lambdas': fields.Raw(description='Price per coupled bus'),
    'welfare': fields.Float(description='Welfare of the restored point'),
    'cpu_seconds': fields.Float()
})

# request parser
run_parser = reqparse.RequestParser(argument_class=reqparse.Argument)
run_parser.add_argument('set', action='append', default=[], location='args',
                        help='Configuration override `dotted.key=value`')


def case_text(translator):
    """Request body as case document, or abort."""
    if not request.is_json:
        api.abort(400, translator.tr("error.request_data_is_not_json"))
    # parse request data (NOTE: catches invalid JSON)
    doc = api.payload
    if not isinstance(doc, dict):
        api.abort(400, translator.tr("error.json_is_not_an_object"))
    return json.dumps(doc)


def run_config(command, translator):
    args = run_parser.parse_args()
    try:
        return resolve(command, overrides=args['set'])
    except ConfigError as e:
        api.abort(400, translator.tr("error.config_invalid") % e)


def abort_on_error(result):
    error_code = result.get('error_code') or 404
    error_details = result.get('error_details') or {}
    if not isinstance(error_details, dict):
        error_details = {'details': error_details}
    api.abort(error_code, result['error'], **error_details)


# routes
@api.route('/validate')
class Validate(Resource):
    @api.doc('validate')
    @api.response(400, 'Case document could not be parsed')
    @api.response(422, 'Case validation failed', validation_response)
    @api.marshal_with(validation_response)
    def post(self):
        """Validate a case

        Return the findings of all case invariant checks.
        """
        translator = Translator(app, request)
        result = coordination_service.validate(
            translator, case_text=case_text(translator))
        if 'error' in result:
            abort_on_error(result)
        return result


@api.route('/solve')
class Solve(Resource):
    @api.doc('solve')
    @api.response(400, 'Bad request')
    @api.response(422, 'Case invalid or infeasible')
    @api.response(500, 'Solver failure')
    @api.expect(run_parser)
    @api.marshal_with(solve_response)
    def post(self):
        """Solve monolithically

        Return dispatch, commitments and bus prices of the coordinated
        optimum.
        """
        translator = Translator(app, request)
        cfg = run_config('solve', translator)
        result = coordination_service.solve(
            translator, cfg, case_text=case_text(translator))
        if 'error' in result:
            abort_on_error(result)
        return result['summary']


@api.route('/coordinate')
class Coordinate(Resource):
    @api.doc('coordinate')
    @api.response(400, 'Bad request')
    @api.response(422, 'Case invalid')
    @api.response(500, 'Solver failure')
    @api.expect(run_parser)
    @api.marshal_with(coordinate_response)
    def post(self):
        """Coordinate TSO and DSOs

        Run surrogate Lagrangian coordination and return its final state.
        """
        translator = Translator(app, request)
        cfg = run_config('coordinate', translator)
        result = coordination_service.coordinate(
            translator, cfg, case_text=case_text(translator))
        if 'error' in result:
            abort_on_error(result)
        return result['summary']


""" readiness check endpoint """
@app.route("/ready", methods=['GET'])
def ready():
    return jsonify({"status": "OK"})


""" liveness check endpoint """
@app.route("/healthz", methods=['GET'])
def healthz():
    return jsonify({"status": "OK"})


# local webserver
if __name__ == '__main__':
    print("Starting coordination service...")
    app.run(host='localhost', port=5012, debug=True)
