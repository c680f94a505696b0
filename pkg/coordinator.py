import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from conic_solver import ToleranceSet
from dso_subproblem import (
    DsoMultiplierView, SubproblemError, solve_dso, DEFAULT_TIE_BREAK,
    PENALTY_FLOOR
)
from grid_model import to_per_unit
from milp_solver import BnBConfig, MilpError
from tso_subproblem import (
    TsoMultiplierView, balance_residual, solve_tso, solve_tso_surrogate,
    surrogate_value, WELFARE, PRICING_MODES, STRICT
)


SLR = 'slr'
SUBGRADIENT = 'subgradient'

DIRECTION_TOL = 'direction_tol'
MULTIPLIER_TOL = 'multiplier_tol'
MAX_ITERS = 'max_iters'
WALL_CLOCK = 'wall_clock'
SURROGATE_UNMET_STALL = 'surrogate_unmet_stall'

NORM_GUARD = 1e-12


class ConfigError(ValueError):
    """Invalid coordination configuration"""


class CoordinationError(Exception):
    """Subproblem failure during coordination"""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class SlrConfig:
    s0: float = 0.1
    c0: float = 1.0
    beta: float = 1.02
    big_m: float = 20.0
    r_exp: float = 0.05
    c_max: float = 1e4
    max_iters: int = 2000
    # MW
    tol_direction_norm: float = 0.1
    # currency/MW, 0 disables
    tol_multiplier_delta: float = 0.0
    # seconds, 0 disables
    wall_clock_limit: float = 0.0
    direction_patience: int = 2
    unmet_stall: int = 3
    workers: int = 1
    gap_interval: int = 0
    exchange_tie_break: float = DEFAULT_TIE_BREAK
    pricing_mode: str = WELFARE
    lambda0: Mapping[str, float] = field(default_factory=dict)
    method: str = SLR

    def check(self):
        if self.s0 < 0 or (self.method == SLR and self.s0 == 0):
            raise ConfigError("s0 must be positive, got %s" % self.s0)
        if self.c0 < 0:
            raise ConfigError("c0 must not be negative, got %s" % self.c0)
        if self.beta <= 1:
            raise ConfigError("beta must exceed 1, got %s" % self.beta)
        if self.big_m <= 1:
            raise ConfigError("big_m must exceed 1, got %s" % self.big_m)
        if self.r_exp <= 0:
            raise ConfigError("r_exp must be positive, got %s" % self.r_exp)
        if self.c_max < self.c0:
            raise ConfigError("c_max must be at least c0")
        if self.max_iters < 0:
            raise ConfigError("max_iters must not be negative")
        if self.direction_patience < 1 or self.unmet_stall < 1:
            raise ConfigError("patience values must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.pricing_mode not in PRICING_MODES:
            raise ConfigError("Unknown pricing mode '%s'" % self.pricing_mode)
        if self.method not in (SLR, SUBGRADIENT):
            raise ConfigError("Unknown method '%s'" % self.method)


@dataclass
class SlrState:
    k: int
    lambdas: dict
    psi_buy: dict
    psi_sell: dict
    stepsize: float
    penalty: float
    dso_solutions: dict
    tso_solution: object
    direction_norm: float = 0.0
    reference_norm: float = 0.0
    direction: Optional[np.ndarray] = None
    step_applied: float = 0.0
    unmet_streak: int = 0
    small_streak: int = 0


@dataclass
class IterationRecord:
    k: int
    surrogate_dual: float
    lagrangian: float
    direction_norm: float
    lambdas: dict
    psi_buy: dict
    psi_sell: dict
    violations: dict
    buy_residuals: dict
    sell_residuals: dict
    stepsize: float
    penalty: float
    gap: Optional[float]
    elapsed: float
    surrogate_unmet: bool = False


@dataclass
class ConvergenceTrace:
    records: list
    terminal_status: str
    final_primal: Optional[dict] = None
    config: Optional[SlrConfig] = None
    method: str = SLR
    cpu_seconds: float = 0.0
    final_state: Optional[SlrState] = None

    @property
    def final_lambdas(self):
        return dict(self.records[-1].lambdas) if self.records else {}


def alpha_step(k, big_m, r_exp):
    """Stepsize-sizing factor 1 - 1/(M * k^(1 - 1/k^r)).

    :param int k: Iteration, at least 1
    :param float big_m: M > 1
    :param float r_exp: r > 0
    """
    if k < 1:
        raise ValueError("alpha_step needs k >= 1, got %s" % k)
    return 1.0 - 1.0 / (big_m * k ** (1.0 - 1.0 / k ** r_exp))


def initial_lambdas(case, cfg):
    """Mean of all generator costs, overridable per coupled bus."""
    costs = [g.offer_price for g in case.generators]
    for ds in case.distribution_systems:
        costs.extend(g.incremental_cost for g in ds.generators)
    start = float(np.mean(costs)) if costs else 0.0
    return {
        bus_id: float(cfg.lambda0.get(bus_id, start))
        for bus_id in case.coupled_buses()
    }


def violation_at_root(tso_sol, dso_sols, case):
    """Balance residual in MW per coupled bus using DSO-side exchanges.

    :param TsoSolution tso_sol: TSO solution
    :param dict dso_sols: DsoSolution per DSO id
    :param CoordCase case: Case
    """
    result = {}
    for link in case.coupled_links():
        dso = dso_sols[link.distribution_system]
        result[link.transmission_bus] = balance_residual(
            case, link.transmission_bus, tso_sol.gen_p, tso_sol.flow,
            dso.sell, dso.buy)
    return result


def coupling_residuals(tso_sol, dso_sols, case):
    """DSO-side minus TSO-side exchanges in MW, per DSO id in sorted order."""
    buy, sell = {}, {}
    for dso_id in sorted(l.distribution_system for l in case.coupled_links()):
        dso = dso_sols[dso_id]
        buy[dso_id] = dso.buy - tso_sol.tso_buy.get(dso_id, 0.0)
        sell[dso_id] = dso.sell - tso_sol.tso_sell.get(dso_id, 0.0)
    return buy, sell


def surrogate_direction(tso_sol, dso_sols, case):
    """Concatenated residual vector [balances; buy residuals; sell residuals].

    :param TsoSolution tso_sol: TSO solution
    :param dict dso_sols: DsoSolution per DSO id
    :param CoordCase case: Case
    """
    balance = violation_at_root(tso_sol, dso_sols, case)
    buy, sell = coupling_residuals(tso_sol, dso_sols, case)
    return np.array(
        list(balance.values()) + list(buy.values()) + list(sell.values()),
        dtype=float)


def lagrangian_value(case, dso_sols, tso_sol, lambdas, psi_buy, psi_sell,
                     pricing_mode=WELFARE, penalty=0.0, prev_balance=None,
                     prev_buy=None, prev_sell=None):
    """Lagrangian of the coordinated problem at given solutions.

    With penalty = 0 this is the plain Lagrangian; otherwise the
    absolute-value penalties weighted by the previous residuals are
    subtracted.
    """
    value = sum(s.tariff_revenue - s.generation_cost
                for s in dso_sols.values())
    value += tso_sol.objective
    balance = violation_at_root(tso_sol, dso_sols, case)
    buy, sell = coupling_residuals(tso_sol, dso_sols, case)
    for bus_id, h in balance.items():
        value += lambdas.get(bus_id, 0.0) * h
        if penalty > 0.0:
            value -= 0.5 * penalty * max(
                abs((prev_balance or {}).get(bus_id, 0.0)), PENALTY_FLOOR
            ) * abs(h)
    for dso_id in buy:
        # psi prices (tso - dso)
        value -= psi_buy.get(dso_id, 0.0) * buy[dso_id]
        value -= psi_sell.get(dso_id, 0.0) * sell[dso_id]
        if penalty > 0.0:
            for prev, residual in (((prev_buy or {}).get(dso_id, 0.0),
                                    buy[dso_id]),
                                   ((prev_sell or {}).get(dso_id, 0.0),
                                    sell[dso_id])):
                # counted once in each subproblem
                value -= 2.0 * 0.5 * penalty * \
                    max(abs(prev), PENALTY_FLOOR) * abs(residual)
    return value


def primal_welfare(dso_sols, tso_sol):
    """Total welfare of a coupling-feasible point in currency."""
    return sum(s.tariff_revenue - s.generation_cost
               for s in dso_sols.values()) + tso_sol.objective


class SlrCoordinator():
    """SlrCoordinator class

    Alternate DSO and TSO subproblem solves and update the coupling
    multipliers until a stopping criterion holds.
    """

    def __init__(self, case, cfg, logger, bnb=None, tol=None):
        """Constructor

        :param CoordCase case: Case (MW or per-unit)
        :param SlrConfig cfg: Coordination settings
        :param Logger logger: Application logger
        :param BnBConfig bnb: Branch-and-bound settings
        :param ToleranceSet tol: Cone solver tolerances
        """
        cfg.check()
        self.cfg = cfg
        self.logger = logger
        self.case = to_per_unit(case)
        self.bnb = bnb or BnBConfig()
        self.tol = tol or ToleranceSet()
        self.coupled_dsos = sorted(
            l.distribution_system for l in self.case.coupled_links())
        self.guard = max(cfg.tol_direction_norm, NORM_GUARD)

    def solve_dso(self, dso_id, view, augmented):
        ds = self.case.dso(dso_id)
        return solve_dso(
            ds, self.case.link_for(dso_id), view, augmented, self.tol,
            self.case.base_mva, self.cfg.exchange_tie_break, self.logger)

    def solve_dsos(self, views, augmented, k):
        """Solve the DSOs in views, concurrently when workers > 1."""
        ids = sorted(views)
        try:
            if self.cfg.workers > 1 and len(ids) > 1:
                with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                    sols = list(pool.map(
                        lambda i: self.solve_dso(i, views[i], augmented), ids))
            else:
                sols = [self.solve_dso(i, views[i], augmented) for i in ids]
        except SubproblemError as e:
            raise CoordinationError("Iteration %d: %s" % (k, e), k)
        return dict(zip(ids, sols))

    def root_bus(self, dso_id):
        return self.case.link_for(dso_id).transmission_bus

    def initialize(self):
        """Seed multipliers and solutions.

        DSOs are solved alone at the starting prices; the TSO starts from
        its unpenalized relaxed optimum with exchanges mirrored from the
        DSO side.
        """
        cfg = self.cfg
        lambdas = initial_lambdas(self.case, cfg)
        psi_buy = {d: 0.0 for d in self.coupled_dsos}
        psi_sell = {d: 0.0 for d in self.coupled_dsos}

        views = {}
        for ds in self.case.distribution_systems:
            link = self.case.link_for(ds.id)
            price = lambdas.get(link.transmission_bus, 0.0) \
                if link is not None else 0.0
            views[ds.id] = DsoMultiplierView(lambda_root=price)
        dso_sols = self.solve_dsos(views, False, 0)

        view = TsoMultiplierView(
            lambdas=lambdas, psi_buy=psi_buy, psi_sell=psi_sell, penalty=0.0,
            dso_buy_now={d: dso_sols[d].buy for d in self.coupled_dsos},
            dso_sell_now={d: dso_sols[d].sell for d in self.coupled_dsos})
        try:
            tso = solve_tso_surrogate(self.case, view, self.bnb,
                                      cfg.pricing_mode, self.logger)
        except MilpError as e:
            raise CoordinationError("Initialization: %s" % e, 0)
        tso.tso_buy = dict(view.dso_buy_now)
        tso.tso_sell = dict(view.dso_sell_now)
        tso.surrogate_value = surrogate_value(self.case, tso, view,
                                              cfg.pricing_mode)

        state = SlrState(
            k=0, lambdas=lambdas, psi_buy=psi_buy, psi_sell=psi_sell,
            stepsize=0.0, penalty=0.0,
            dso_solutions=dso_sols, tso_solution=tso)
        state.direction = surrogate_direction(tso, dso_sols, self.case)
        state.direction_norm = float(np.linalg.norm(state.direction))
        if state.direction_norm > self.guard:
            state.reference_norm = state.direction_norm
        return state

    def iterate(self, state):
        """Steps 2 and 3: DSO solves, then the TSO surrogate solve."""
        k = state.k + 1
        tso_prev = state.tso_solution
        prev_balance = violation_at_root(tso_prev, state.dso_solutions,
                                         self.case)
        prev_buy, prev_sell = coupling_residuals(
            tso_prev, state.dso_solutions, self.case)

        views = {}
        for dso_id in self.coupled_dsos:
            old = state.dso_solutions[dso_id]
            views[dso_id] = DsoMultiplierView(
                lambda_root=state.lambdas[self.root_bus(dso_id)],
                psi_buy=state.psi_buy[dso_id],
                psi_sell=state.psi_sell[dso_id],
                penalty=state.penalty,
                tso_buy_prev=tso_prev.tso_buy.get(dso_id, 0.0),
                tso_sell_prev=tso_prev.tso_sell.get(dso_id, 0.0),
                dso_buy_prev=old.buy, dso_sell_prev=old.sell)
        dso_sols = dict(state.dso_solutions)
        dso_sols.update(self.solve_dsos(views, True, k))

        view = TsoMultiplierView(
            lambdas=state.lambdas, psi_buy=state.psi_buy,
            psi_sell=state.psi_sell, penalty=state.penalty,
            dso_buy_now={d: dso_sols[d].buy for d in self.coupled_dsos},
            dso_sell_now={d: dso_sols[d].sell for d in self.coupled_dsos},
            prev=tso_prev if self.cfg.method == SLR else None,
            prev_balance=prev_balance, prev_buy_residual=prev_buy,
            prev_sell_residual=prev_sell)
        try:
            tso = solve_tso_surrogate(self.case, view, self.bnb,
                                      self.cfg.pricing_mode, self.logger)
        except MilpError as e:
            raise CoordinationError("Iteration %d: %s" % (k, e), k)
        return dso_sols, tso, (prev_balance, prev_buy, prev_sell)

    def stepsize(self, state, k, new_norm):
        """Stepsize s^k applied after the solves of iteration k.

        s^0 = s0 and s^k = alpha^(k-1) * s^(k-1) * |H^(k-1)| / |H^k|,
        where |H^(k-1)| is the last direction norm above the guard. alpha^0
        is taken as 1 since the sizing factor starts at k = 1. A direction
        within the guard keeps the previous stepsize.
        """
        cfg = self.cfg
        if cfg.method == SUBGRADIENT:
            return cfg.s0 / math.sqrt(k + 1)
        if k == 0:
            return cfg.s0
        s = state.stepsize
        if new_norm > self.guard and state.reference_norm > self.guard:
            alpha = alpha_step(k - 1, cfg.big_m, cfg.r_exp) if k > 1 else 1.0
            s = alpha * s * state.reference_norm / new_norm
        return s

    def update(self, state, dso_sols, tso, direction, step, k):
        """Step 4: move the multipliers along the residuals of iteration k.

        The returned state carries the multipliers and penalty for k + 1.
        """
        cfg = self.cfg
        balance = violation_at_root(tso, dso_sols, self.case)
        buy, sell = coupling_residuals(tso, dso_sols, self.case)
        lambdas = {b: state.lambdas[b] - step * balance[b]
                   for b in state.lambdas}
        psi_buy = {d: state.psi_buy[d] + step * buy[d]
                   for d in state.psi_buy}
        psi_sell = {d: state.psi_sell[d] + step * sell[d]
                    for d in state.psi_sell}
        norm = float(np.linalg.norm(direction))
        reference = norm if norm > self.guard else state.reference_norm
        if cfg.method != SLR:
            penalty = 0.0
        elif k == 0:
            penalty = cfg.c0
        else:
            penalty = min(state.penalty * cfg.beta, cfg.c_max)
        return replace(
            state, k=k, lambdas=lambdas, psi_buy=psi_buy,
            psi_sell=psi_sell, stepsize=step, penalty=penalty,
            dso_solutions=dso_sols, tso_solution=tso, direction=direction,
            direction_norm=norm, reference_norm=reference, step_applied=step)

    def record(self, state, dso_sols, tso, prev, step, gap, started,
               unmet=False):
        prev_balance, prev_buy, prev_sell = prev
        balance = violation_at_root(tso, dso_sols, self.case)
        buy, sell = coupling_residuals(tso, dso_sols, self.case)
        direction = surrogate_direction(tso, dso_sols, self.case)
        lagrangian = lagrangian_value(
            self.case, dso_sols, tso, state.lambdas, state.psi_buy,
            state.psi_sell, self.cfg.pricing_mode)
        augmented = lagrangian_value(
            self.case, dso_sols, tso, state.lambdas, state.psi_buy,
            state.psi_sell, self.cfg.pricing_mode, state.penalty,
            prev_balance, prev_buy, prev_sell)
        return IterationRecord(
            k=state.k, surrogate_dual=augmented, lagrangian=lagrangian,
            direction_norm=float(np.linalg.norm(direction)),
            lambdas=dict(state.lambdas), psi_buy=dict(state.psi_buy),
            psi_sell=dict(state.psi_sell), violations=balance,
            buy_residuals=buy, sell_residuals=sell, stepsize=step,
            penalty=state.penalty, gap=gap,
            elapsed=time.process_time() - started, surrogate_unmet=unmet)

    def estimate_gap(self, state):
        return estimate_gap(state, self.case, self.cfg, self.bnb,
                            self.logger)

    def want_gap(self, k, final=False):
        interval = self.cfg.gap_interval
        return final or (interval > 0 and k % interval == 0)

    def run(self):
        """Execute the coordination loop and return its trace."""
        cfg = self.cfg
        started = time.process_time()
        self.logger.info(
            "Starting %s coordination: %d coupled DSOs, max_iters %d" %
            (cfg.method, len(self.coupled_dsos), cfg.max_iters))

        state = self.initialize()
        empty = ({}, {}, {})
        records = []
        status = None

        if state.direction.size == 0:
            status = DIRECTION_TOL
        elif cfg.max_iters == 0:
            status = MAX_ITERS

        step = 0.0 if status else self.stepsize(state, 0,
                                                state.direction_norm)
        gap = self.estimate_gap(state) if status or self.want_gap(0) \
            else None
        records.append(self.record(
            state, state.dso_solutions, state.tso_solution, empty, step, gap,
            started))
        if status is None:
            state = self.update(state, state.dso_solutions,
                                state.tso_solution, state.direction, step, 0)

        while status is None:
            k = state.k + 1
            dso_sols, tso, prev = self.iterate(state)
            direction = surrogate_direction(tso, dso_sols, self.case)
            norm = float(np.linalg.norm(direction))

            unmet = tso.surrogate_condition_unmet
            unmet_streak = state.unmet_streak + 1 if unmet else 0
            if unmet:
                state = replace(state, stepsize=state.stepsize / 2.0)
            small_streak = state.small_streak + 1 if norm <= \
                cfg.tol_direction_norm else 0

            if unmet_streak >= cfg.unmet_stall:
                status = SURROGATE_UNMET_STALL
            elif small_streak >= cfg.direction_patience:
                status = DIRECTION_TOL

            step = 0.0 if status else self.stepsize(state, k, norm)
            record_state = replace(state, k=k)
            if status:
                final = replace(state, k=k, dso_solutions=dso_sols,
                                tso_solution=tso, direction=direction,
                                direction_norm=norm)
                gap = self.estimate_gap(final)
                records.append(self.record(record_state, dso_sols, tso,
                                           prev, step, gap, started, unmet))
                state = final
                break

            new_state = self.update(state, dso_sols, tso, direction, step, k)
            new_state.unmet_streak = unmet_streak
            new_state.small_streak = small_streak

            delta = max(
                [abs(new_state.lambdas[b] - state.lambdas[b])
                 for b in state.lambdas] +
                [abs(new_state.psi_buy[d] - state.psi_buy[d])
                 for d in state.psi_buy] +
                [abs(new_state.psi_sell[d] - state.psi_sell[d])
                 for d in state.psi_sell] + [0.0])

            if cfg.tol_multiplier_delta > 0 and \
                    delta <= cfg.tol_multiplier_delta:
                status = MULTIPLIER_TOL
            elif k >= cfg.max_iters:
                status = MAX_ITERS
            elif cfg.wall_clock_limit > 0 and \
                    time.process_time() - started >= cfg.wall_clock_limit:
                status = WALL_CLOCK

            current = replace(state, k=k, dso_solutions=dso_sols,
                              tso_solution=tso)
            gap = self.estimate_gap(current) \
                if status or self.want_gap(k) else None
            records.append(self.record(record_state, dso_sols, tso, prev,
                                       step, gap, started, unmet))
            self.logger.debug(
                "iter %d norm %.6g step %.6g penalty %.6g lambdas %s" %
                (k, norm, step, state.penalty, state.lambdas))
            state = new_state

        final_primal = restore_primal(state, self.case, self.cfg, self.bnb,
                                      self.logger)
        cpu = time.process_time() - started
        self.logger.info(
            "Coordination stopped with %s after %d iterations (%.2f s)" %
            (status, records[-1].k, cpu))
        return ConvergenceTrace(
            records=records, terminal_status=status,
            final_primal=final_primal, config=cfg, method=cfg.method,
            cpu_seconds=cpu, final_state=state)


def restore_primal(state, case, cfg, bnb=None, logger=None):
    """Coupling-feasible point from the DSO-side exchanges.

    The TSO is re-solved strictly with its exchanges fixed to the DSO
    values clipped to the interface limits. Returns None if that fails.

    :param SlrState state: State with solutions
    :param CoordCase case: Case (per-unit)
    :param SlrConfig cfg: Coordination settings
    """
    logger = logger or logging.getLogger(__name__)
    case = to_per_unit(case)
    base = case.base_mva
    exchanges = {}
    for link in case.coupled_links():
        dso = state.dso_solutions[link.distribution_system]
        limit = link.exchange_limit * base
        exchanges[link.distribution_system] = (
            min(max(dso.buy, 0.0), limit), min(max(dso.sell, 0.0), limit))
    try:
        tso = solve_tso(case, STRICT, exchanges, bnb or BnBConfig(),
                        cfg.pricing_mode, logger)
    except MilpError as e:
        logger.warning("Primal restoration failed: %s" % e)
        return None
    return {
        'tso': tso,
        'dsos': dict(state.dso_solutions),
        'welfare': primal_welfare(state.dso_solutions, tso)
    }


def estimate_gap(state, case, cfg, bnb=None, logger=None):
    """Relative distance between the Lagrangian and a restored primal.

    :param SlrState state: State with solutions
    :param CoordCase case: Case
    :param SlrConfig cfg: Coordination settings
    """
    logger = logger or logging.getLogger(__name__)
    case = to_per_unit(case)
    restored = restore_primal(state, case, cfg, bnb, logger)
    if restored is None:
        logger.warning("Gap unavailable at iteration %d" % state.k)
        return None
    dual = lagrangian_value(case, state.dso_solutions, state.tso_solution,
                            state.lambdas, state.psi_buy, state.psi_sell,
                            cfg.pricing_mode)
    primal = restored['welfare']
    return (dual - primal) / (1.0 + abs(primal))


def dual_function(case, lambdas, psi_buy, psi_sell, pricing_mode=WELFARE,
                  bnb=None, tol=None, logger=None):
    """Plain Lagrangian dual value at given multipliers.

    Every subproblem is solved to optimality without penalties, so the
    value bounds the coordinated welfare from above.
    """
    logger = logger or logging.getLogger(__name__)
    case = to_per_unit(case)
    coupled = sorted(l.distribution_system for l in case.coupled_links())
    dso_sols = {}
    for ds in case.distribution_systems:
        link = case.link_for(ds.id)
        coupled_ds = ds.id in coupled
        view = DsoMultiplierView(
            lambda_root=lambdas.get(link.transmission_bus, 0.0)
            if coupled_ds else 0.0,
            psi_buy=psi_buy.get(ds.id, 0.0), psi_sell=psi_sell.get(ds.id, 0.0))
        dso_sols[ds.id] = solve_dso(ds, link, view, coupled_ds, tol,
                                    case.base_mva, 0.0, logger)
    view = TsoMultiplierView(
        lambdas=lambdas, psi_buy=psi_buy, psi_sell=psi_sell,
        dso_buy_now={d: dso_sols[d].buy for d in coupled},
        dso_sell_now={d: dso_sols[d].sell for d in coupled})
    tso = solve_tso_surrogate(case, view, bnb or BnBConfig(), pricing_mode,
                              logger)
    return lagrangian_value(case, dso_sols, tso, lambdas, psi_buy, psi_sell,
                            pricing_mode)


def run(case, cfg=None, logger=None, bnb=None, tol=None):
    """Run surrogate Lagrangian coordination on a case.

    :param CoordCase case: Case
    :param SlrConfig cfg: Coordination settings
    :param Logger logger: Logger
    """
    coordinator = SlrCoordinator(case, cfg or SlrConfig(),
                                 logger or logging.getLogger(__name__),
                                 bnb, tol)
    return coordinator.run()
