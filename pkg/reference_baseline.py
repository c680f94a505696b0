import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from conic_solver import (
    ProgramBuilder, ToleranceSet, extract_row_multiplier, solve_cone, OPTIMAL
)
from coordinator import (
    ConvergenceTrace, SlrConfig, SUBGRADIENT, primal_welfare, run
)
from dso_subproblem import (
    DsoMultiplierView, SubproblemError, build_dso, extract_dso_solution,
    solve_dso, DEFAULT_TIE_BREAK
)
from grid_model import ReplicationError, replicate_dsos, to_per_unit
from milp_solver import (
    BnBConfig, Incumbent, MilpInfeasibleError, MixedBinaryProgram, solve_milp
)
from tso_subproblem import (
    ISOLATED, STRICT, WELFARE, build_tso, extract_tso_solution, solve_tso
)


TSO_PREFIX = 'tso/'


class UncoordinatedInfeasibleError(Exception):
    """A subsystem cannot operate without exchange"""

    def __init__(self, message, subject=None):
        super().__init__(message)
        self.subject = subject


class CaseMismatchError(ValueError):
    """Results compared for savings come from different cases"""


@dataclass(eq=False)
class ReferenceSolution:
    tso: object
    dsos: dict
    lmps: dict
    welfare: float
    pricing_mode: str
    objective: float = math.nan
    proven_optimal: bool = True
    cpu_seconds: float = 0.0


@dataclass(eq=False)
class UncoordinatedResult:
    tso: object
    dsos: dict
    tso_welfare: float
    dso_welfare: dict
    tso_cost: float
    dso_cost: dict


@dataclass(frozen=True)
class SavingsReport:
    n_dsos: int
    tso_savings_pct: float
    dso_savings_pct: float
    cpu_seconds: float
    coordinated_tso_cost: float = 0.0
    coordinated_dso_cost: float = 0.0
    uncoordinated_tso_cost: float = 0.0
    uncoordinated_dso_cost: float = 0.0
    hosts: tuple = ()


def _dso_prefix(dso_id):
    return "dso:%s/" % dso_id


def build_monolithic(case, pricing_mode=WELFARE,
                     tie_break=DEFAULT_TIE_BREAK):
    """Combine every DSO program and the TSO program with hard coupling.

    :param CoordCase case: Case (per-unit)
    :param str pricing_mode: welfare or literal
    :param float tie_break: DSO exchange tie-break in currency/MW
    """
    pb = ProgramBuilder()
    for ds in sorted(case.distribution_systems, key=lambda d: d.id):
        prog = build_dso(ds, case.link_for(ds.id), DsoMultiplierView(),
                         False, case.base_mva, tie_break)
        pb.extend(prog, _dso_prefix(ds.id))
    tso = build_tso(case, STRICT, None, None, pricing_mode)
    offset = pb.extend(tso.base, TSO_PREFIX)
    for link in case.coupled_links():
        dso_id = link.distribution_system
        for side in ('buy', 'sell'):
            pb.add_equality("couple_%s:%s" % (side, dso_id), {
                pb.index("%s%s:%s" % (TSO_PREFIX, side, dso_id)): 1.0,
                pb.index("%s%s" % (_dso_prefix(dso_id), side)): -1.0
            }, 0.0)
    binaries = tuple(offset + j for j in tso.binaries)
    return MixedBinaryProgram(pb.build(), binaries)


def solve_monolithic(case, pricing_mode=WELFARE, cfg=None, tol=None,
                     tie_break=DEFAULT_TIE_BREAK, logger=None):
    """Solve the coordinated problem as one mixed-binary cone program.

    Bus prices come from re-solving with the commitments fixed.

    :param CoordCase case: Case
    :param str pricing_mode: welfare or literal
    :param BnBConfig cfg: Search configuration
    :param ToleranceSet tol: Solver tolerances
    :param Logger logger: Logger
    """
    logger = logger or logging.getLogger(__name__)
    started = time.process_time()
    case = to_per_unit(case)
    cfg = cfg or BnBConfig()
    tol = tol or cfg.tolerances
    prog = build_monolithic(case, pricing_mode, tie_break)
    incumbent = solve_milp(prog, cfg, logger)

    binaries = np.array(prog.binaries, dtype=int)
    pattern = np.round(incumbent.solution.primal[binaries])
    lower = prog.base.lower.copy()
    upper = prog.base.upper.copy()
    lower[binaries] = pattern
    upper[binaries] = pattern
    fixed = solve_cone(prog.base.with_bounds(lower, upper), tol, logger)
    if fixed.status != OPTIMAL:
        raise SubproblemError(
            "Fixed-commitment re-solve ended with status %s" % fixed.status,
            fixed.status, 'monolithic')

    lmps = {}
    for bus in case.buses:
        row = "%sbalance:%s" % (TSO_PREFIX, bus.id)
        if row in fixed.row_index:
            lmps[bus.id] = extract_row_multiplier(fixed, row, case.base_mva)

    dsos = {}
    for ds in case.distribution_systems:
        link = case.link_for(ds.id)
        price = lmps.get(link.transmission_bus, 0.0)
        # exchanges stay as coupled, no netting
        dsos[ds.id] = extract_dso_solution(
            ds, fixed.restrict(_dso_prefix(ds.id)),
            DsoMultiplierView(lambda_root=price), True, case.base_mva)
    tso = extract_tso_solution(
        case, Incumbent(fixed.restrict(TSO_PREFIX), fixed.objective,
                        incumbent.proven_optimal, incumbent.nodes_explored),
        None, pricing_mode)

    cpu = time.process_time() - started
    logger.info("Monolithic solve: welfare %.6f after %d nodes (%.2f s)" %
                (primal_welfare(dsos, tso), incumbent.nodes_explored, cpu))
    return ReferenceSolution(
        tso=tso, dsos=dsos, lmps=lmps, welfare=primal_welfare(dsos, tso),
        pricing_mode=pricing_mode, objective=fixed.objective,
        proven_optimal=incumbent.proven_optimal, cpu_seconds=cpu)


def run_subgradient(case, cfg=None, logger=None, bnb=None, tol=None):
    """Classical Lagrangian relaxation with a diminishing stepsize.

    No penalties, every subproblem solved to optimality, step s0/sqrt(k).

    :param CoordCase case: Case
    :param SlrConfig cfg: Settings; s0 and max_iters are used
    """
    cfg = replace(cfg or SlrConfig(), method=SUBGRADIENT, c0=0.0)
    return run(case, cfg, logger, bnb, tol)


def uncoordinated_cost(case, cfg=None, tol=None, logger=None):
    """Operate every subsystem alone, with no exchange.

    :param CoordCase case: Case
    :param BnBConfig cfg: Search configuration
    :param ToleranceSet tol: Solver tolerances
    :param Logger logger: Logger
    """
    logger = logger or logging.getLogger(__name__)
    case = to_per_unit(case)
    dsos = {}
    for ds in sorted(case.distribution_systems, key=lambda d: d.id):
        link = case.link_for(ds.id)
        closed = replace(link, exchange_limit=0.0)
        try:
            dsos[ds.id] = solve_dso(ds, closed, DsoMultiplierView(), False,
                                    tol or ToleranceSet(), case.base_mva,
                                    DEFAULT_TIE_BREAK, logger)
        except SubproblemError as e:
            raise UncoordinatedInfeasibleError(
                "DSO '%s' cannot balance alone: %s" % (ds.id, e), ds.id)
    try:
        tso = solve_tso(case, ISOLATED, None, cfg or BnBConfig(), WELFARE,
                        logger)
    except MilpInfeasibleError as e:
        raise UncoordinatedInfeasibleError(
            "Transmission system cannot balance alone: %s" % e, 'tso')

    return UncoordinatedResult(
        tso=tso, dsos=dsos, tso_welfare=tso.objective,
        dso_welfare={d: s.tariff_revenue - s.generation_cost
                     for d, s in dsos.items()},
        tso_cost=tso.generation_cost,
        dso_cost={d: s.generation_cost for d, s in dsos.items()})


def _coordinated_costs(coordinated, case):
    """TSO and aggregate DSO cost with exchanges settled at bus prices."""
    if isinstance(coordinated, ConvergenceTrace):
        restored = coordinated.final_primal
        if restored is None:
            raise CaseMismatchError("Coordination run has no primal point")
        tso, dsos = restored['tso'], restored['dsos']
        prices = coordinated.final_lambdas
        cpu = coordinated.cpu_seconds
    else:
        tso, dsos = coordinated.tso, coordinated.dsos
        prices = coordinated.lmps
        cpu = coordinated.cpu_seconds

    settlement = 0.0
    for link in case.coupled_links():
        dso = dsos[link.distribution_system]
        settlement += prices.get(link.transmission_bus, 0.0) * \
            (dso.sell - dso.buy)
    tso_cost = tso.generation_cost + settlement
    dso_cost = sum(s.generation_cost for s in dsos.values()) - settlement
    return tso_cost, dso_cost, dsos, cpu


def _pct(before, after):
    if before == 0.0:
        return 0.0
    return 100.0 * (before - after) / abs(before)


def savings(coordinated, uncoordinated, case, logger=None, hosts=()):
    """Relative cost reductions of coordination over separate operation.

    :param coordinated: ReferenceSolution or ConvergenceTrace
    :param UncoordinatedResult uncoordinated: Separate operation
    :param CoordCase case: Case both results were computed on
    """
    logger = logger or logging.getLogger(__name__)
    tso_cost, dso_cost, dsos, cpu = _coordinated_costs(coordinated, case)
    if set(dsos) != set(uncoordinated.dsos) or \
            set(uncoordinated.tso.gen_p) != {g.id for g in case.generators}:
        raise CaseMismatchError("Results belong to different cases")

    unc_tso = uncoordinated.tso_cost
    unc_dso = sum(uncoordinated.dso_cost.values())
    report = SavingsReport(
        n_dsos=len(dsos),
        tso_savings_pct=_pct(unc_tso, tso_cost),
        dso_savings_pct=_pct(unc_dso, dso_cost),
        cpu_seconds=cpu,
        coordinated_tso_cost=tso_cost, coordinated_dso_cost=dso_cost,
        uncoordinated_tso_cost=unc_tso, uncoordinated_dso_cost=unc_dso,
        hosts=tuple(hosts))
    if report.tso_savings_pct < 0 or report.dso_savings_pct < 0:
        logger.warning(
            "Negative savings: TSO %.4f%%, DSO %.4f%%" %
            (report.tso_savings_pct, report.dso_savings_pct))
    return report


def select_host_buses(case, n):
    """The n highest-load transmission buses that host no DSO.

    Ties keep bus order.
    """
    hosted = {l.transmission_bus for l in case.interfaces}
    free = [b for b in case.buses
            if b.id not in hosted and b.hosts_dso is None]
    if n > len(free):
        raise ReplicationError(
            "Requested %d DSO copies but only %d host buses are available" %
            (n, len(free)))
    ranked = sorted(enumerate(free), key=lambda p: (-p[1].active_load, p[0]))
    return [bus.id for _, bus in ranked[:n]]


def scale_study(case, template, counts, method='slr', slr=None, bnb=None,
                tol=None, logger=None):
    """Replicate a template DSO and compare coordination with separate
    operation for every count.

    :param CoordCase case: Case
    :param str template: Template DSO id
    :param list counts: Numbers of copies
    :param str method: slr or monolithic
    :param SlrConfig slr: Coordination settings
    """
    logger = logger or logging.getLogger(__name__)
    reports = []
    for n in counts:
        hosts = select_host_buses(case, n)
        study = replicate_dsos(case, template, hosts)
        logger.info("Scale study: %d copies of '%s' on %s" %
                    (n, template, ", ".join(hosts)))
        if method == 'monolithic':
            coordinated = solve_monolithic(
                study, (slr or SlrConfig()).pricing_mode, bnb, tol,
                logger=logger)
        else:
            coordinated = run(study, slr or SlrConfig(), logger, bnb, tol)
        separate = uncoordinated_cost(study, bnb, tol, logger)
        reports.append(savings(coordinated, separate, to_per_unit(study),
                               logger, hosts))
    return reports
