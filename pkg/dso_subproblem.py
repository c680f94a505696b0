import logging
import math
from dataclasses import dataclass, field

import networkx as nx

from conic_solver import ProgramBuilder, ToleranceSet, solve_cone, OPTIMAL


PENALTY_FLOOR = 1e-6
DEFAULT_TIE_BREAK = 1e-3
TIGHTNESS_THRESHOLD = 1e-4


class DsoBuildError(Exception):
    """Distribution system cannot be turned into a cone program"""


class SubproblemError(Exception):
    """Subproblem solve did not reach an optimal status"""

    def __init__(self, message, status=None, subject=None):
        super().__init__(message)
        self.status = status
        self.subject = subject


@dataclass(frozen=True)
class DsoMultiplierView:
    """Prices and previous exchanges seen by one DSO.

    Prices in currency/MW, exchanges in MW, penalty in currency/MW^2.
    """
    lambda_root: float = 0.0
    psi_buy: float = 0.0
    psi_sell: float = 0.0
    penalty: float = 0.0
    tso_buy_prev: float = 0.0
    tso_sell_prev: float = 0.0
    dso_buy_prev: float = 0.0
    dso_sell_prev: float = 0.0


@dataclass(eq=False)
class DsoSolution:
    dso_id: str
    status: str
    gen_p: dict
    gen_q: dict
    flow_p: dict
    flow_q: dict
    current_sq: dict
    volt_sq: dict
    sell: float
    buy: float
    objective: float
    program_objective: float
    generation_cost: float
    tariff_revenue: float
    soc_residuals: dict
    branch_sending: dict = field(default_factory=dict)
    base_mva: float = 1.0
    accuracy: str = 'strict'

    @property
    def net_export(self):
        return self.sell - self.buy


def _check_radial(ds, link):
    if link is None:
        raise DsoBuildError("DSO '%s' has no interface link" % ds.id)
    if ds.root is None:
        raise DsoBuildError("DSO '%s' needs exactly one root bus" % ds.id)
    if not nx.is_tree(ds.graph()):
        raise DsoBuildError("DSO '%s' is not radial" % ds.id)
    for bus in ds.buses:
        if bus.is_root:
            continue
        if ds.upstream_branch(bus.id) is None:
            raise DsoBuildError(
                "Bus '%s' of DSO '%s' has no upstream branch" %
                (bus.id, ds.id))


def build_dso(ds, link, view=None, augmented=False, base_mva=1.0,
              tie_break=DEFAULT_TIE_BREAK):
    """Assemble the social-welfare cone program of one DSO.

    Quantities of ds and link are in per-unit of base_mva; prices and
    view exchanges are in currency/MW and MW.

    :param DistributionSystem ds: Distribution system (per-unit)
    :param InterfaceLink link: Interface to the transmission bus
    :param DsoMultiplierView view: Prices and previous exchanges
    :param bool augmented: Add coupling prices and penalties
    :param float base_mva: System base
    :param float tie_break: Charge in currency/MW on sell + buy
    """
    _check_radial(ds, link)
    view = view or DsoMultiplierView()
    base = float(base_mva)
    pb = ProgramBuilder()

    bus_by_id = {b.id: b for b in ds.buses}
    root = ds.root

    pb.add_constant(ds.tariff * base * ds.total_active_load())

    gens_at = {}
    for gen in ds.generators:
        idx = pb.add_variable("gp:%s" % gen.id, gen.p_min, gen.p_max,
                              -gen.incremental_cost * base)
        qdx = pb.add_variable("gq:%s" % gen.id, gen.q_min, gen.q_max)
        gens_at.setdefault(gen.bus, []).append((idx, qdx))

    volt = {}
    for bus in ds.buses:
        volt[bus.id] = pb.add_variable("v:%s" % bus.id, bus.v_sq_min,
                                       bus.v_sq_max)

    fp, fq, cur = {}, {}, {}
    for branch in ds.branches:
        fp[branch.id] = pb.add_variable("fp:%s" % branch.id, -math.inf,
                                        math.inf)
        fq[branch.id] = pb.add_variable("fq:%s" % branch.id, -math.inf,
                                        math.inf)
        if not branch.lossless:
            v_min = bus_by_id[branch.sending_bus].v_sq_min
            cur[branch.id] = pb.add_variable(
                "a:%s" % branch.id, 0.0,
                branch.apparent_limit ** 2 / v_min)

    limit = link.exchange_limit
    sell = pb.add_variable("sell", 0.0, limit)
    buy = pb.add_variable("buy", 0.0, limit)
    pb.add_objective(sell, (view.lambda_root - tie_break) * base)
    pb.add_objective(buy, (-view.lambda_root - tie_break) * base)

    for branch in ds.branches:
        s, r = branch.sending_bus, branch.receiving_bus
        R, X = branch.resistance, branch.reactance
        p, q = fp[branch.id], fq[branch.id]
        # voltage drop along the branch
        drop = {volt[s]: 1.0, volt[r]: -1.0, p: -2.0 * R, q: -2.0 * X}
        if branch.id in cur:
            a = cur[branch.id]
            drop[a] = R * R + X * X
            pb.add_rotated_cone("current:%s" % branch.id, {a: 0.5},
                                {volt[s]: 1.0}, [{p: 1.0}, {q: 1.0}])
            pb.add_norm_cone(
                "limit_recv:%s" % branch.id,
                [({p: 1.0, a: -R}, 0.0), ({q: 1.0, a: -X}, 0.0)],
                branch.apparent_limit)
        pb.add_equality("drop:%s" % branch.id, drop, 0.0)
        pb.add_norm_cone("limit_send:%s" % branch.id,
                         [({p: 1.0}, 0.0), ({q: 1.0}, 0.0)],
                         branch.apparent_limit)

    children = {}
    for branch in ds.branches:
        children.setdefault(branch.receiving_bus, []).append(branch)

    for bus in ds.buses:
        active, reactive = {}, {}
        for child in children.get(bus.id, []):
            arrive_p = {fp[child.id]: 1.0}
            arrive_q = {fq[child.id]: 1.0}
            if child.id in cur:
                arrive_p[cur[child.id]] = -child.resistance
                arrive_q[cur[child.id]] = -child.reactance
            _accumulate(active, arrive_p, -1.0)
            _accumulate(reactive, arrive_q, -1.0)
        for idx, qdx in gens_at.get(bus.id, []):
            _accumulate(active, {idx: 1.0}, -1.0)
            _accumulate(reactive, {qdx: 1.0}, -1.0)

        if bus.id == root.id:
            # injections - withdrawals = 0 at the root
            _accumulate(active, {buy: 1.0, sell: -1.0}, -1.0)
            pb.add_equality("balance_p:%s" % bus.id, active, -bus.active_load)
            if reactive:
                pb.add_equality("balance_q:%s" % bus.id, reactive,
                                -bus.reactive_load)
            elif bus.reactive_load != 0.0:
                raise DsoBuildError(
                    "Root of DSO '%s' cannot supply reactive load" % ds.id)
            continue

        up = ds.upstream_branch(bus.id)
        _accumulate(active, {fp[up.id]: 1.0, volt[bus.id]: up.conductance},
                    1.0)
        _accumulate(reactive, {fq[up.id]: 1.0,
                               volt[bus.id]: -up.susceptance}, 1.0)
        pb.add_equality("balance_p:%s" % bus.id, active, -bus.active_load)
        pb.add_equality("balance_q:%s" % bus.id, reactive,
                        -bus.reactive_load)

    if augmented:
        _add_coupling_terms(pb, sell, buy, view, base)

    return pb.build()


def _accumulate(row, coeffs, sign):
    for j, v in coeffs.items():
        row[j] = row.get(j, 0.0) + sign * v


def _add_coupling_terms(pb, sell, buy, view, base):
    """Coupling prices and absolute-value penalties against the TSO side."""
    pb.add_objective(buy, -view.psi_buy * base)
    pb.add_objective(sell, -view.psi_sell * base)
    pb.add_constant(view.psi_buy * view.tso_buy_prev +
                    view.psi_sell * view.tso_sell_prev)
    if view.penalty <= 0.0:
        return
    for name, idx, dso_prev, tso_prev in (
            ('buy', buy, view.dso_buy_prev, view.tso_buy_prev),
            ('sell', sell, view.dso_sell_prev, view.tso_sell_prev)):
        scale = max(abs(dso_prev - tso_prev), PENALTY_FLOOR)
        weight = 0.5 * view.penalty * scale * base
        pb.add_abs_epigraph("penalty_%s" % name, {idx: 1.0},
                            -tso_prev / base, weight)


def solve_dso(ds, link, view=None, augmented=False, tol=None, base_mva=1.0,
              tie_break=DEFAULT_TIE_BREAK, logger=None):
    """Solve one DSO subproblem and report its dispatch in MW.

    :param DistributionSystem ds: Distribution system (per-unit)
    :param InterfaceLink link: Interface to the transmission bus
    :param DsoMultiplierView view: Prices and previous exchanges
    :param bool augmented: Add coupling prices and penalties
    :param ToleranceSet tol: Solver tolerances
    :param float base_mva: System base
    :param float tie_break: Charge in currency/MW on sell + buy
    :param Logger logger: Logger
    """
    logger = logger or logging.getLogger(__name__)
    view = view or DsoMultiplierView()
    prog = build_dso(ds, link, view, augmented, base_mva, tie_break)
    sol = solve_cone(prog, tol or ToleranceSet(), logger)
    if sol.status != OPTIMAL:
        raise SubproblemError(
            "DSO '%s' subproblem ended with status %s" % (ds.id, sol.status),
            sol.status, ds.id)
    return extract_dso_solution(ds, sol, view, augmented, base_mva)


def extract_dso_solution(ds, sol, view, augmented, base_mva):
    base = float(base_mva)
    gen_p = {g.id: sol.value("gp:%s" % g.id) * base for g in ds.generators}
    gen_q = {g.id: sol.value("gq:%s" % g.id) * base for g in ds.generators}
    volt = {b.id: sol.value("v:%s" % b.id) for b in ds.buses}

    flow_p, flow_q, current, residuals, sending = {}, {}, {}, {}, {}
    for branch in ds.branches:
        p = sol.value("fp:%s" % branch.id)
        q = sol.value("fq:%s" % branch.id)
        v_s = volt[branch.sending_bus]
        if branch.lossless:
            a = (p * p + q * q) / v_s
        else:
            a = sol.value("a:%s" % branch.id)
        flow_p[branch.id] = p * base
        flow_q[branch.id] = q * base
        current[branch.id] = a
        residuals[branch.id] = v_s * a - (p * p + q * q)
        sending[branch.id] = branch.sending_bus

    sell = sol.value("sell") * base
    buy = sol.value("buy") * base
    if not augmented:
        circulation = min(sell, buy)
        sell -= circulation
        buy -= circulation

    generation_cost = sum(
        g.incremental_cost * gen_p[g.id] for g in ds.generators)
    tariff_revenue = ds.tariff * ds.total_active_load() * base
    objective = tariff_revenue - generation_cost + \
        view.lambda_root * (sell - buy)

    return DsoSolution(
        dso_id=ds.id, status=sol.status, gen_p=gen_p, gen_q=gen_q,
        flow_p=flow_p, flow_q=flow_q, current_sq=current, volt_sq=volt,
        sell=sell, buy=buy, objective=objective,
        program_objective=sol.objective, generation_cost=generation_cost,
        tariff_revenue=tariff_revenue, soc_residuals=residuals,
        branch_sending=sending, base_mva=base, accuracy=sol.accuracy
    )


def check_soc_tightness(sol, threshold=TIGHTNESS_THRESHOLD):
    """Per-branch current relaxation residuals.

    Returns a list of (branch id, residual, flagged) where residual is
    v_s * a - (f_p^2 + f_q^2) in per-unit and flagged marks branches
    whose relaxation is not tight.

    :param DsoSolution sol: Solution of an optimal solve
    :param float threshold: Residual above which a branch is flagged
    """
    base = sol.base_mva
    report = []
    for branch_id in sorted(sol.current_sq):
        p = sol.flow_p[branch_id] / base
        q = sol.flow_q[branch_id] / base
        v_s = sol.volt_sq[sol.branch_sending[branch_id]]
        residual = v_s * sol.current_sq[branch_id] - (p * p + q * q)
        report.append((branch_id, residual, residual > threshold))
    return report
