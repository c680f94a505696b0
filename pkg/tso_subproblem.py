import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import networkx as nx

from conic_solver import ProgramBuilder
from milp_solver import BnBConfig, MixedBinaryProgram, solve_milp, solve_until


STRICT = 'strict'
RELAXED = 'relaxed'
ISOLATED = 'isolated'
MODES = (STRICT, RELAXED, ISOLATED)

WELFARE = 'welfare'
LITERAL = 'literal'
PRICING_MODES = (WELFARE, LITERAL)

PENALTY_FLOOR = 1e-6
IMPROVEMENT_TOL = 1e-9


class TsoBuildError(Exception):
    """Transmission system cannot be turned into a program"""


@dataclass(eq=False)
class TsoSolution:
    status: str
    commit: dict
    gen_p: dict
    flow: dict
    angle: dict
    tso_buy: dict
    tso_sell: dict
    objective: float
    surrogate_value: float
    balance_violation: dict
    generation_cost: float = 0.0
    proven_optimal: bool = True
    surrogate_condition_unmet: bool = False
    nodes_explored: int = 0


@dataclass(frozen=True)
class TsoMultiplierView:
    """Prices, DSO-side exchanges and previous violations seen by the TSO.

    lambdas is keyed by coupled bus; the other maps by DSO id. Prices in
    currency/MW, exchanges and residuals in MW.
    """
    lambdas: Mapping[str, float] = field(default_factory=dict)
    psi_buy: Mapping[str, float] = field(default_factory=dict)
    psi_sell: Mapping[str, float] = field(default_factory=dict)
    penalty: float = 0.0
    dso_buy_now: Mapping[str, float] = field(default_factory=dict)
    dso_sell_now: Mapping[str, float] = field(default_factory=dict)
    prev: Optional[TsoSolution] = None
    prev_balance: Mapping[str, float] = field(default_factory=dict)
    prev_buy_residual: Mapping[str, float] = field(default_factory=dict)
    prev_sell_residual: Mapping[str, float] = field(default_factory=dict)


def balance_residual(case, bus_id, gen_p, flow, sell=0.0, buy=0.0):
    """Injection surplus at a transmission bus in MW.

    Generation plus inflow minus outflow plus DSO export minus DSO import
    minus load.
    """
    injected = sum(gen_p[g.id] for g in case.generators if g.bus == bus_id)
    inflow = sum(flow[l.id] for l in case.lines if l.to_bus == bus_id)
    outflow = sum(flow[l.id] for l in case.lines if l.from_bus == bus_id)
    load = case.bus(bus_id).active_load * _mw_scale(case)
    return injected + inflow - outflow + sell - buy - load


def _mw_scale(case):
    return case.base_mva if case.per_unit else 1.0


def _penalty_weight(penalty, previous):
    return 0.5 * penalty * max(abs(previous), PENALTY_FLOOR)


def build_tso(case, mode=STRICT, view=None, exchanges=None,
              pricing_mode=WELFARE):
    """Assemble the TSO unit-commitment program.

    case must be per-unit. In strict mode, exchanges optionally fixes
    (buy, sell) in MW per DSO; otherwise exchanges are free within the
    interface limits. Relaxed mode replaces the coupled-bus balances and
    the coupling equalities by priced, penalized residuals from view; its
    exchange copies are settled by relaxed_exchange_copies and enter the
    program as a constant.
    Isolated mode drops every exchange.

    :param CoordCase case: Case (per-unit)
    :param str mode: strict, relaxed or isolated
    :param TsoMultiplierView view: Multipliers for relaxed mode
    :param dict exchanges: DSO id -> (buy, sell) in MW
    :param str pricing_mode: welfare or literal
    """
    if mode not in MODES:
        raise TsoBuildError("Unknown TSO mode '%s'" % mode)
    if pricing_mode not in PRICING_MODES:
        raise TsoBuildError("Unknown pricing mode '%s'" % pricing_mode)
    if mode == RELAXED and view is None:
        raise TsoBuildError("Relaxed TSO mode needs multipliers")
    if len(case.buses) > 1 and not nx.is_connected(case.transmission_graph()):
        raise TsoBuildError("Transmission network is disconnected")

    base = float(case.base_mva)
    pb = ProgramBuilder()
    exchanges = exchanges or {}

    pb.add_constant(sum(b.load_bid_price * b.active_load * base
                        for b in case.buses))

    binaries = []
    gen_var = {}
    for gen in case.generators:
        x = pb.add_variable("x:%s" % gen.id, 0.0, 1.0)
        g = pb.add_variable("g:%s" % gen.id, 0.0, gen.p_max,
                            -gen.offer_price * base)
        pb.add_range("commit_max:%s" % gen.id, {g: 1.0, x: -gen.p_max},
                     upper=0.0)
        pb.add_range("commit_min:%s" % gen.id, {g: 1.0, x: -gen.p_min},
                     lower=0.0)
        binaries.append(x)
        gen_var[gen.id] = g

    theta = {}
    for bus in case.buses:
        if bus.id == case.slack_bus:
            theta[bus.id] = pb.add_variable("theta:%s" % bus.id, 0.0, 0.0)
        else:
            theta[bus.id] = pb.add_variable("theta:%s" % bus.id,
                                            -math.inf, math.inf)

    flow = {}
    for line in case.lines:
        f = pb.add_variable("f:%s" % line.id, -line.flow_limit,
                            line.flow_limit)
        flow[line.id] = f
        pb.add_equality("flow:%s" % line.id, {
            f: 1.0,
            theta[line.from_bus]: -1.0 / line.reactance,
            theta[line.to_bus]: 1.0 / line.reactance
        }, 0.0)

    link_at = {}
    buy, sell = {}, {}
    if mode != ISOLATED:
        for link in case.coupled_links():
            dso_id = link.distribution_system
            link_at[link.transmission_bus] = link
            if mode == RELAXED:
                continue
            limit = link.exchange_limit
            if mode == STRICT and dso_id in exchanges:
                fixed_buy, fixed_sell = exchanges[dso_id]
                buy[dso_id] = pb.add_variable(
                    "buy:%s" % dso_id, fixed_buy / base, fixed_buy / base)
                sell[dso_id] = pb.add_variable(
                    "sell:%s" % dso_id, fixed_sell / base, fixed_sell / base)
            else:
                buy[dso_id] = pb.add_variable("buy:%s" % dso_id, 0.0, limit)
                sell[dso_id] = pb.add_variable("sell:%s" % dso_id, 0.0, limit)
            if pricing_mode == LITERAL:
                ds = case.dso(dso_id)
                pb.add_objective(buy[dso_id], ds.bid_price * base)
                pb.add_objective(sell[dso_id], -ds.offer_price * base)

    for bus in case.buses:
        # withdrawals - injections = -load
        row = {}
        for gen in case.generators:
            if gen.bus == bus.id:
                row[gen_var[gen.id]] = row.get(gen_var[gen.id], 0.0) - 1.0
        for line in case.lines:
            if line.to_bus == bus.id:
                row[flow[line.id]] = row.get(flow[line.id], 0.0) - 1.0
            if line.from_bus == bus.id:
                row[flow[line.id]] = row.get(flow[line.id], 0.0) + 1.0
        link = link_at.get(bus.id)

        if link is not None and mode == RELAXED:
            _add_relaxed_balance(pb, bus, link, row, view, base)
            continue

        if link is not None:
            dso_id = link.distribution_system
            row[sell[dso_id]] = -1.0
            row[buy[dso_id]] = 1.0
        row = {j: v for j, v in row.items() if v != 0.0}
        if not row:
            if bus.active_load != 0.0:
                raise TsoBuildError(
                    "Bus '%s' has load but nothing to serve it" % bus.id)
            continue
        pb.add_equality("balance:%s" % bus.id, row, -bus.active_load)

    if mode == RELAXED:
        pb.add_constant(relaxed_exchange_copies(case, view, pricing_mode)[2])

    return MixedBinaryProgram(pb.build(), tuple(binaries))


def _add_relaxed_balance(pb, bus, link, row, view, base):
    """Price and penalize the coupled-bus balance residual."""
    dso_id = link.distribution_system
    price = view.lambdas.get(bus.id, 0.0)
    # residual = -row + constant, with DSO-side exchanges as constants
    coeffs = {j: -v for j, v in row.items() if v != 0.0}
    constant = (view.dso_sell_now.get(dso_id, 0.0) -
                view.dso_buy_now.get(dso_id, 0.0)) / base - bus.active_load
    for j, v in coeffs.items():
        pb.add_objective(j, price * base * v)
    pb.add_constant(price * base * constant)
    if view.penalty > 0.0 and coeffs:
        weight = _penalty_weight(view.penalty,
                                 view.prev_balance.get(bus.id, 0.0)) * base
        pb.add_abs_epigraph("penalty_balance:%s" % bus.id, coeffs, constant,
                            weight)


def relaxed_exchange_copies(case, view, pricing_mode=WELFARE):
    """TSO-side exchanges that maximize the relaxed program.

    The copies only enter the priced and penalized coupling residuals,
    so each one solves max a*T - w*|T - now| over [0, limit] alone: it
    sits at a bound when the price a outweighs the penalty weight w and
    mirrors the DSO-side value otherwise.

    Returns buy and sell maps in MW and their objective contribution in
    currency.

    :param CoordCase case: Case (MW or per-unit)
    :param TsoMultiplierView view: Multipliers
    :param str pricing_mode: welfare or literal
    """
    buy, sell = {}, {}
    value = 0.0
    for link in case.coupled_links():
        dso_id = link.distribution_system
        ds = case.dso(dso_id)
        limit = link.exchange_limit * _mw_scale(case)
        literal = pricing_mode == LITERAL
        for copies, price, psi, now, prev in (
                (buy, ds.bid_price if literal else 0.0,
                 view.psi_buy.get(dso_id, 0.0),
                 view.dso_buy_now.get(dso_id, 0.0),
                 view.prev_buy_residual.get(dso_id, 0.0)),
                (sell, -ds.offer_price if literal else 0.0,
                 view.psi_sell.get(dso_id, 0.0),
                 view.dso_sell_now.get(dso_id, 0.0),
                 view.prev_sell_residual.get(dso_id, 0.0))):
            slope = price + psi
            weight = _penalty_weight(view.penalty, prev) \
                if view.penalty > 0.0 else 0.0
            if slope - weight > 0.0:
                copy = limit
            elif slope + weight < 0.0:
                copy = 0.0
            else:
                copy = min(max(now, 0.0), limit)
            copies[dso_id] = copy
            value += price * copy + psi * (copy - now) - \
                weight * abs(copy - now)
    return buy, sell, value


def tso_objective(case, gen_p, tso_buy, tso_sell, pricing_mode=WELFARE):
    """Transmission welfare in currency for a dispatch in MW.

    :param CoordCase case: Case (MW or per-unit, loads are rescaled)
    """
    scale = _mw_scale(case)
    value = sum(b.load_bid_price * b.active_load * scale for b in case.buses)
    value -= sum(g.offer_price * gen_p[g.id] for g in case.generators)
    if pricing_mode == LITERAL:
        for dso_id in tso_buy:
            ds = case.dso(dso_id)
            value += ds.bid_price * tso_buy[dso_id] - \
                ds.offer_price * tso_sell[dso_id]
    return value


def surrogate_value(case, sol, view, pricing_mode=WELFARE):
    """Augmented Lagrangian TSO value of a candidate at the given view.

    Objective plus priced balance and coupling residuals minus the
    absolute-value penalties, all in currency.

    :param CoordCase case: Case (per-unit)
    :param TsoSolution sol: Candidate
    :param TsoMultiplierView view: Multipliers
    :param str pricing_mode: welfare or literal
    """
    value = tso_objective(case, sol.gen_p, sol.tso_buy, sol.tso_sell,
                          pricing_mode)
    for link in case.coupled_links():
        bus_id = link.transmission_bus
        dso_id = link.distribution_system
        residual = balance_residual(
            case, bus_id, sol.gen_p, sol.flow,
            view.dso_sell_now.get(dso_id, 0.0),
            view.dso_buy_now.get(dso_id, 0.0))
        value += view.lambdas.get(bus_id, 0.0) * residual
        for psi, tso, now, prev in (
                (view.psi_buy.get(dso_id, 0.0), sol.tso_buy.get(dso_id, 0.0),
                 view.dso_buy_now.get(dso_id, 0.0),
                 view.prev_buy_residual.get(dso_id, 0.0)),
                (view.psi_sell.get(dso_id, 0.0),
                 sol.tso_sell.get(dso_id, 0.0),
                 view.dso_sell_now.get(dso_id, 0.0),
                 view.prev_sell_residual.get(dso_id, 0.0))):
            value += psi * (tso - now)
            if view.penalty > 0.0:
                value -= _penalty_weight(view.penalty, prev) * abs(tso - now)
        if view.penalty > 0.0:
            value -= _penalty_weight(
                view.penalty, view.prev_balance.get(bus_id, 0.0)
            ) * abs(residual)
    return value


def extract_tso_solution(case, incumbent, view=None, pricing_mode=WELFARE):
    sol = incumbent.solution
    base = float(case.base_mva)
    commit = {g.id: int(round(sol.value("x:%s" % g.id)))
              for g in case.generators}
    gen_p = {g.id: sol.value("g:%s" % g.id) * base for g in case.generators}
    flow = {l.id: sol.value("f:%s" % l.id) * base for l in case.lines}
    angle = {b.id: sol.value("theta:%s" % b.id) for b in case.buses}
    tso_buy, tso_sell = {}, {}
    for dso_id in sorted(l.distribution_system for l in case.coupled_links()):
        if "buy:%s" % dso_id in sol.var_index:
            tso_buy[dso_id] = sol.value("buy:%s" % dso_id) * base
            tso_sell[dso_id] = sol.value("sell:%s" % dso_id) * base
    if view is not None and not tso_buy:
        copies_buy, copies_sell, _ = relaxed_exchange_copies(
            case, view, pricing_mode)
        tso_buy = dict(sorted(copies_buy.items()))
        tso_sell = dict(sorted(copies_sell.items()))

    violation = {}
    for link in case.coupled_links():
        dso_id = link.distribution_system
        if view is not None:
            sell_now = view.dso_sell_now.get(dso_id, 0.0)
            buy_now = view.dso_buy_now.get(dso_id, 0.0)
        else:
            sell_now = tso_sell.get(dso_id, 0.0)
            buy_now = tso_buy.get(dso_id, 0.0)
        violation[link.transmission_bus] = balance_residual(
            case, link.transmission_bus, gen_p, flow, sell_now, buy_now)

    result = TsoSolution(
        status=sol.status, commit=commit, gen_p=gen_p, flow=flow,
        angle=angle, tso_buy=tso_buy, tso_sell=tso_sell,
        objective=tso_objective(case, gen_p, tso_buy, tso_sell, pricing_mode),
        surrogate_value=math.nan, balance_violation=violation,
        generation_cost=sum(g.offer_price * gen_p[g.id]
                            for g in case.generators),
        proven_optimal=incumbent.proven_optimal,
        nodes_explored=incumbent.nodes_explored
    )
    if view is not None:
        result.surrogate_value = surrogate_value(case, result, view,
                                                 pricing_mode)
    else:
        result.surrogate_value = result.objective
    return result


def solve_tso(case, mode=STRICT, exchanges=None, cfg=None,
              pricing_mode=WELFARE, logger=None):
    """Solve the TSO program in strict or isolated mode to optimality.

    :param CoordCase case: Case (per-unit)
    :param str mode: strict or isolated
    :param dict exchanges: DSO id -> (buy, sell) in MW
    :param BnBConfig cfg: Search configuration
    :param str pricing_mode: welfare or literal
    :param Logger logger: Logger
    """
    prog = build_tso(case, mode, None, exchanges, pricing_mode)
    incumbent = solve_milp(prog, cfg or BnBConfig(), logger)
    return extract_tso_solution(case, incumbent, None, pricing_mode)


def solve_tso_surrogate(case, view, cfg=None, pricing_mode=WELFARE,
                        logger=None):
    """Solve the relaxed TSO program until surrogate optimality.

    The first candidate whose surrogate value strictly improves on the
    previous iterate re-evaluated at the current multipliers is returned.
    If no candidate improves, the proven optimum comes back flagged with
    surrogate_condition_unmet.

    :param CoordCase case: Case (per-unit)
    :param TsoMultiplierView view: Multipliers and previous iterate
    :param BnBConfig cfg: Search configuration
    :param str pricing_mode: welfare or literal
    :param Logger logger: Logger
    """
    logger = logger or logging.getLogger(__name__)
    prog = build_tso(case, RELAXED, view, None, pricing_mode)
    cfg = cfg or BnBConfig()

    if view.prev is None:
        incumbent = solve_milp(prog, cfg, logger)
        return extract_tso_solution(case, incumbent, view, pricing_mode)

    previous = surrogate_value(case, view.prev, view, pricing_mode)
    threshold = previous + IMPROVEMENT_TOL * (1.0 + abs(previous))

    def accept(candidate):
        return candidate.objective >= threshold

    incumbent = solve_until(prog, cfg, accept, logger)
    result = extract_tso_solution(case, incumbent, view, pricing_mode)
    result.surrogate_condition_unmet = not incumbent.accepted
    if result.surrogate_condition_unmet:
        logger.debug(
            "Surrogate condition unmet: best %.10g vs previous %.10g" %
            (result.surrogate_value, previous))
    return result
