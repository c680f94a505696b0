import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from conic_solver import (
    ConeProgram, SolverSolution, ToleranceSet, solve_cone,
    OPTIMAL, INFEASIBLE
)


class MilpError(Exception):
    """Base class for branch-and-bound failures"""


class MilpInfeasibleError(MilpError):
    """No integer-feasible assignment exists"""


class NodeLimitError(MilpError):
    """Node limit reached before any incumbent was found"""


class MilpNumericalError(MilpError):
    """Relaxations failed numerically and no incumbent is available"""


@dataclass(frozen=True, eq=False)
class MixedBinaryProgram:
    base: ConeProgram
    binaries: Tuple[int, ...]

    def check(self):
        self.base.check()
        heads = {cone[0] for cone in self.base.cones}
        for idx in self.binaries:
            if self.base.lower[idx] < 0.0 or self.base.upper[idx] > 1.0:
                raise ValueError(
                    "Binary '%s' must have bounds within [0, 1]" %
                    self.base.var_names[idx]
                )
            if idx in heads:
                raise ValueError(
                    "Binary '%s' heads a cone" % self.base.var_names[idx])


@dataclass(frozen=True)
class BnBConfig:
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: int = 10000
    search: str = 'best-first'
    rounding: bool = True
    node_log: bool = False
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)

    def check(self):
        if self.abs_gap <= 0 or self.rel_gap <= 0 or \
                self.integrality_tol <= 0:
            raise ValueError("Branch-and-bound tolerances must be positive")
        if self.node_limit < 1:
            raise ValueError("node_limit must be at least 1")
        if self.search != 'best-first':
            raise ValueError("Unsupported search strategy '%s'" % self.search)


@dataclass(eq=False)
class Incumbent:
    solution: SolverSolution
    objective: float
    proven_optimal: bool
    nodes_explored: int
    accepted: bool = True
    bound: float = math.inf

    def value(self, name):
        return self.solution.value(name)


@dataclass(eq=False)
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    relaxation: SolverSolution
    bound: float
    depth: int
    id: int


class BranchAndBound():
    """BranchAndBound class

    Best-first branch and bound over the binaries of a MixedBinaryProgram,
    bounding with cone relaxations.
    """

    def __init__(self, prog, cfg, logger):
        """Constructor

        :param MixedBinaryProgram prog: Program
        :param BnBConfig cfg: Search configuration
        :param Logger logger: Logger
        """
        prog.check()
        cfg.check()
        self.prog = prog
        self.cfg = cfg
        self.logger = logger
        self.binaries = np.array(sorted(prog.binaries), dtype=int)
        self.pattern_cache = {}
        self.incumbent = None
        self.nodes = 0
        self.counter = 0
        # subtrees lost to relaxations that neither solved nor proved
        # infeasibility, with the best bound they could have held
        self.dropped = 0
        self.dropped_bound = -math.inf

    def relax(self, lower, upper):
        return solve_cone(self.prog.base.with_bounds(lower, upper),
                          self.cfg.tolerances, self.logger)

    def drop(self, status, bound):
        self.dropped += 1
        self.dropped_bound = max(self.dropped_bound, bound)
        self.logger.warning(
            "Dropping node with relaxation status %s (bound %.10g)" %
            (status, bound))

    def fractional_binary(self, sol):
        """Most fractional binary, ties to the lowest index; None if
        every binary is integral within tolerance.
        """
        if len(self.binaries) == 0:
            return None
        values = sol.primal[self.binaries]
        frac = np.abs(values - np.round(values))
        best = int(np.argmax(frac))
        if frac[best] <= self.cfg.integrality_tol:
            return None
        return int(self.binaries[best])

    def fixed_candidate(self, sol, bound):
        """Round the binaries of sol, fix them and re-solve."""
        pattern = tuple(int(v) for v in np.round(sol.primal[self.binaries]))
        if pattern in self.pattern_cache:
            return self.pattern_cache[pattern]
        lower = self.prog.base.lower.copy()
        upper = self.prog.base.upper.copy()
        lower[self.binaries] = pattern
        upper[self.binaries] = pattern
        fixed = self.relax(lower, upper)
        candidate = fixed if fixed.status == OPTIMAL else None
        if fixed.status not in (OPTIMAL, INFEASIBLE):
            self.drop(fixed.status, bound)
        self.pattern_cache[pattern] = candidate
        return candidate

    def prune_threshold(self):
        inc = self.incumbent.objective
        return inc + max(self.cfg.abs_gap, self.cfg.rel_gap * abs(inc))

    def push(self, heap, node):
        self.counter += 1
        heapq.heappush(heap, (-node.bound, self.counter, node))

    def consider(self, candidate, accept, bound):
        """Record a candidate; return an accepted Incumbent or None."""
        if candidate is None:
            return None
        if self.incumbent is None or \
                candidate.objective > self.incumbent.objective:
            self.incumbent = Incumbent(
                solution=candidate, objective=candidate.objective,
                proven_optimal=False, nodes_explored=self.nodes, bound=bound
            )
        if accept is not None:
            trial = Incumbent(
                solution=candidate, objective=candidate.objective,
                proven_optimal=False, nodes_explored=self.nodes, bound=bound
            )
            if accept(trial):
                return trial
        return None

    def run(self, accept=None):
        base = self.prog.base
        lower = base.lower.copy()
        upper = base.upper.copy()
        tol = self.cfg.integrality_tol
        lower[self.binaries] = np.ceil(lower[self.binaries] - tol)
        upper[self.binaries] = np.floor(upper[self.binaries] + tol)

        root = self.relax(lower, upper)
        if root.status == INFEASIBLE:
            raise MilpInfeasibleError("Root relaxation is infeasible")
        if root.status != OPTIMAL:
            raise MilpNumericalError(
                "Root relaxation ended with status %s" % root.status)

        heap = []
        self.push(heap, _Node(lower, upper, root, root.objective, 0, 0))
        limit_hit = False

        while heap:
            neg_bound, _, node = heapq.heappop(heap)
            bound = -neg_bound
            if self.incumbent is not None and bound <= self.prune_threshold():
                # best-first: every remaining node is dominated as well
                heap.clear()
                break
            if self.nodes >= self.cfg.node_limit:
                limit_hit = True
                break
            self.nodes += 1

            sol = node.relaxation
            branch_var = self.fractional_binary(sol)
            if self.cfg.node_log:
                self.logger.debug(
                    "node %d depth %d bound %.10g decision %s" % (
                        node.id, node.depth, bound,
                        'integral' if branch_var is None
                        else "branch on %s" % base.var_names[branch_var]
                    )
                )

            if branch_var is None or self.cfg.rounding:
                found = self.consider(self.fixed_candidate(sol, bound),
                                      accept, bound)
                if found is not None:
                    return found
            if branch_var is None:
                continue

            for value in (0.0, 1.0):
                child_lower = node.lower.copy()
                child_upper = node.upper.copy()
                child_lower[branch_var] = value
                child_upper[branch_var] = value
                child = self.relax(child_lower, child_upper)
                if child.status != OPTIMAL:
                    if child.status != INFEASIBLE:
                        self.drop(child.status, bound)
                    continue
                child_bound = min(child.objective, bound)
                if self.incumbent is not None and \
                        child_bound <= self.prune_threshold():
                    continue
                self.push(heap, _Node(
                    child_lower, child_upper, child, child_bound,
                    node.depth + 1, self.counter + 1
                ))

        if self.incumbent is None:
            if limit_hit:
                raise NodeLimitError(
                    "Node limit %d reached without incumbent" %
                    self.cfg.node_limit)
            if self.dropped:
                raise MilpNumericalError(
                    "No incumbent found; %d relaxations failed numerically" %
                    self.dropped)
            raise MilpInfeasibleError("No integer-feasible assignment")

        result = self.incumbent
        result.nodes_explored = self.nodes
        result.proven_optimal = not limit_hit and not self.dropped
        result.accepted = accept is None
        if heap:
            result.bound = max(-entry[0] for entry in heap)
        else:
            result.bound = result.objective
        if self.dropped:
            result.bound = max(result.bound, self.dropped_bound)
            self.logger.warning(
                "%d relaxations failed numerically; incumbent %.10g is not "
                "proven optimal (bound %.10g)" %
                (self.dropped, result.objective, result.bound))
        if limit_hit:
            self.logger.warning(
                "Node limit %d reached; best incumbent %.10g, bound %.10g" %
                (self.cfg.node_limit, result.objective, result.bound))
        return result


def solve_milp(prog, cfg=None, logger=None):
    """Solve a MixedBinaryProgram to proven optimality.

    :param MixedBinaryProgram prog: Program
    :param BnBConfig cfg: Search configuration
    :param Logger logger: Logger
    """
    search = BranchAndBound(prog, cfg or BnBConfig(),
                            logger or logging.getLogger(__name__))
    return search.run()


def solve_until(prog, cfg, accept, logger=None):
    """Return the first integer-feasible candidate passing accept.

    On exhaustion the proven optimum is returned with accepted = False.

    :param MixedBinaryProgram prog: Program
    :param BnBConfig cfg: Search configuration
    :param callable accept: Predicate over Incumbent
    :param Logger logger: Logger
    """
    search = BranchAndBound(prog, cfg or BnBConfig(),
                            logger or logging.getLogger(__name__))
    return search.run(accept)
