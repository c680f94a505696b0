import os

from coordinator import (
    ConfigError, CoordinationError, DIRECTION_TOL, MULTIPLIER_TOL, run
)
from dso_subproblem import DsoBuildError, SubproblemError
from grid_model import (
    CaseParseError, CaseReferenceError, PerUnitError, ReplicationError,
    load_case, render_case, validate
)
from milp_solver import MilpInfeasibleError, MilpNumericalError, NodeLimitError
from reference_baseline import (
    CaseMismatchError, UncoordinatedInfeasibleError, run_subgradient,
    scale_study, solve_monolithic, uncoordinated_cost
)
from synthetic_case import generate_case
from tso_subproblem import TsoBuildError


ERROR_DETAILS_LOG_ONLY = os.environ.get(
    'ERROR_DETAILS_LOG_ONLY', 'False') == 'True'

CONVERGED = (DIRECTION_TOL, MULTIPLIER_TOL)


class CoordinationService():
    """CoordinationService class

    Load cases and run validation, monolithic solves, coordination,
    baselines and scale studies. Results are dicts; failures carry
    'error' and 'error_code'.
    """

    def __init__(self, logger):
        """Constructor

        :param Logger logger: Application logger
        """
        self.logger = logger

    def load(self, translator, case_path=None, case_text=None):
        """Parse a case from a file or a document string.

        Returns (case, None) or (None, error dict).

        :param object translator: Translator
        :param str case_path: Case file
        :param str case_text: Case document
        """
        if case_text is None:
            try:
                with open(case_path, encoding='utf-8') as f:
                    case_text = f.read()
            except (OSError, TypeError):
                return None, {
                    'error': translator.tr("error.case_not_found") %
                    case_path,
                    'error_code': 404
                }
        try:
            return load_case(case_text), None
        except CaseParseError as e:
            return None, {
                'error': translator.tr("error.case_parse_failed") % e,
                'error_code': 400
            }
        except CaseReferenceError as e:
            return None, {
                'error': translator.tr("error.case_references") % e,
                'error_code': 400
            }

    def validate(self, translator, case_path=None, case_text=None):
        """Validate a case and return its findings.

        :param object translator: Translator
        :param str case_path: Case file
        :param str case_text: Case document
        """
        case, error = self.load(translator, case_path, case_text)
        if error:
            return error
        report = validate(case)
        result = report.as_dict(translator)
        if not report.is_clean:
            self.logger.info("Case has %d findings" % len(report.findings))
            return {
                'error': translator.tr("error.case_invalid"),
                'error_details': result,
                'error_code': 422
            }
        result['case'] = case
        return result

    def checked_case(self, translator, case_path=None, case_text=None):
        """Load and validate; returns (case, None) or (None, error)."""
        result = self.validate(translator, case_path, case_text)
        if 'error' in result:
            return None, result
        return result['case'], None

    def solve(self, translator, cfg, case_path=None, case_text=None):
        """Monolithic solve of the coordinated problem.

        :param object translator: Translator
        :param RunConfig cfg: Run configuration
        """
        case, error = self.checked_case(translator, case_path, case_text)
        if error:
            return error
        try:
            slr = cfg.slr_config()
            solution = solve_monolithic(
                case, slr.pricing_mode, cfg.bnb_config(), cfg.tolerances(),
                slr.exchange_tie_break, self.logger)
        except Exception as e:
            return self.failure(translator, e)
        return {
            'case': case,
            'solution': solution,
            'summary': self.reference_summary(solution)
        }

    def coordinate(self, translator, cfg, case_path=None, case_text=None):
        """Surrogate Lagrangian coordination.

        :param object translator: Translator
        :param RunConfig cfg: Run configuration
        """
        case, error = self.checked_case(translator, case_path, case_text)
        if error:
            return error
        try:
            trace = run(case, cfg.slr_config(), self.logger,
                        cfg.bnb_config(), cfg.tolerances())
        except Exception as e:
            return self.failure(translator, e)
        return {
            'case': case,
            'trace': trace,
            'summary': self.trace_summary(trace)
        }

    def baseline(self, translator, cfg, case_path=None, case_text=None):
        """Subgradient coordination and separate operation.

        Separate operation may be infeasible; the subgradient trace is
        returned anyway with the reason in the summary.

        :param object translator: Translator
        :param RunConfig cfg: Run configuration
        """
        case, error = self.checked_case(translator, case_path, case_text)
        if error:
            return error
        try:
            trace = run_subgradient(case, cfg.subgradient_config(),
                                    self.logger, cfg.bnb_config(),
                                    cfg.tolerances())
        except Exception as e:
            return self.failure(translator, e)
        summary = self.trace_summary(trace)
        try:
            separate = uncoordinated_cost(case, cfg.bnb_config(),
                                          cfg.tolerances(), self.logger)
            summary['uncoordinated'] = {
                'tso_cost': separate.tso_cost,
                'dso_cost': dict(separate.dso_cost),
                'tso_welfare': separate.tso_welfare,
                'dso_welfare': dict(separate.dso_welfare)
            }
        except UncoordinatedInfeasibleError as e:
            self.logger.warning(str(e))
            summary['uncoordinated'] = {
                'error': translator.tr("error.uncoordinated_infeasible") %
                e.subject
            }
        return {'case': case, 'trace': trace, 'summary': summary}

    def scale_study(self, translator, cfg, case_path=None, case_text=None):
        """Savings of coordination for every configured DSO count.

        Rows computed before a failure are kept under 'reports'.

        :param object translator: Translator
        :param RunConfig cfg: Run configuration
        """
        case, error = self.checked_case(translator, case_path, case_text)
        if error:
            return error
        study = cfg.values['scale_study']
        template = study['template'] or (case.dso_ids() or [None])[0]
        if template is None or template not in case.dso_ids():
            return {
                'error': translator.tr("error.unknown_dso") % template,
                'error_code': 404
            }

        reports = []
        for n in study['counts']:
            try:
                reports += scale_study(
                    case, template, [n], study['method'], cfg.slr_config(),
                    cfg.bnb_config(), cfg.tolerances(), self.logger)
            except Exception as e:
                result = self.failure(translator, e)
                result['reports'] = reports
                return result
        return {'case': case, 'reports': reports}

    def generate(self, translator, cfg):
        """Render a seeded synthetic case document.

        :param object translator: Translator
        :param RunConfig cfg: Run configuration
        """
        synthetic = cfg.values['synthetic']
        try:
            case = generate_case(cfg.seed, synthetic['n_buses'],
                                 synthetic['feeder_buses'],
                                 synthetic['extra_lines'])
        except ValueError as e:
            return {
                'error': translator.tr("error.config_invalid") % e,
                'error_code': 400
            }
        return {'case': case, 'document': render_case(case)}

    def optimum(self, translator, cfg, case_path=None, case_text=None):
        """Monolithic welfare used as reference by trace comparisons."""
        result = self.solve(translator, cfg, case_path, case_text)
        if 'error' in result:
            return None, result
        return result['solution'].welfare, None

    def failure(self, translator, e):
        """Map a library exception to an error result.

        :param object translator: Translator
        :param Exception e: Raised exception
        """
        if isinstance(e, ConfigError):
            return {
                'error': translator.tr("error.config_invalid") % e,
                'error_code': 400
            }
        if isinstance(e, ReplicationError):
            return {
                'error': translator.tr("error.replication_failed") % e,
                'error_code': 422
            }
        if isinstance(e, MilpInfeasibleError):
            return {
                'error': translator.tr("error.milp_infeasible"),
                'error_code': 422
            }
        if isinstance(e, UncoordinatedInfeasibleError):
            return {
                'error': translator.tr("error.uncoordinated_infeasible") %
                e.subject,
                'error_code': 422
            }
        if isinstance(e, CaseMismatchError):
            return {
                'error': translator.tr("error.case_mismatch"),
                'error_code': 422
            }
        if isinstance(e, NodeLimitError):
            return self.error_response(
                translator.tr("error.node_limit"), str(e), 500)
        if isinstance(e, (CoordinationError, SubproblemError,
                          MilpNumericalError, DsoBuildError, TsoBuildError,
                          PerUnitError)):
            return self.error_response(
                translator.tr("error.solver_failed") % e, str(e), 500)
        raise e

    def error_response(self, error, details, code):
        self.logger.error("%s: %s", error, details)
        if ERROR_DETAILS_LOG_ONLY:
            error_details = 'see log for details'
        else:
            error_details = details
        return {
            'error': error,
            'error_details': error_details,
            'error_code': code
        }

    def not_converged(self, translator, trace):
        """Error result for a trace that stopped without convergence, or
        None."""
        if trace.terminal_status in CONVERGED:
            return None
        return {
            'error': translator.tr("error.not_converged") %
            trace.terminal_status,
            'error_code': 422
        }

    def reference_summary(self, solution):
        return {
            'welfare': solution.welfare,
            'proven_optimal': solution.proven_optimal,
            'pricing_mode': solution.pricing_mode,
            'lmps': dict(solution.lmps),
            'commit': dict(solution.tso.commit),
            'gen_p': dict(solution.tso.gen_p),
            'flow': dict(solution.tso.flow),
            'exchanges': {
                dso_id: {'sell': sol.sell, 'buy': sol.buy}
                for dso_id, sol in sorted(solution.dsos.items())
            },
            'cpu_seconds': solution.cpu_seconds
        }

    def trace_summary(self, trace):
        last = trace.records[-1]
        summary = {
            'method': trace.method,
            'status': trace.terminal_status,
            'converged': trace.terminal_status in CONVERGED,
            'iterations': last.k,
            'direction_norm': last.direction_norm,
            'gap': last.gap,
            'lambdas': dict(last.lambdas),
            'cpu_seconds': trace.cpu_seconds,
            'welfare': None
        }
        if trace.final_primal is not None:
            summary['welfare'] = trace.final_primal['welfare']
        return summary
