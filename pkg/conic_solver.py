import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from cvxopt import matrix, solvers, spmatrix


OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
ITERATION_LIMIT = 'iteration_limit'
NUMERICAL_FAILURE = 'numerical_failure'

INF = float('inf')
# relative pivot size below which an equality row counts as dependent
RANK_TOL = 1e-10


class UnknownRowError(KeyError):
    """Equality row identifier not present in the program"""


@dataclass(frozen=True)
class ToleranceSet:
    """Interior-point termination tolerances.

    `acceptable` is the fallback tier for solves that stall short of the
    strict tolerances.
    """
    feasibility: float = 1e-8
    gap: float = 1e-8
    max_iterations: int = 200
    acceptable: float = 1e-6
    ruiz_passes: int = 3
    regularization: float = 1e-9


@dataclass(frozen=True, eq=False)
class ConeProgram:
    """Canonical maximization problem.

    maximize objective.x + offset
    s.t. eq_matrix x = eq_rhs, lower <= x <= upper,
         ||x[members]||_2 <= x[head] for every cone (head, *members)
    """
    n_vars: int
    objective: np.ndarray
    offset: float
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cones: Tuple[Tuple[int, ...], ...]
    var_names: Tuple[str, ...]
    row_names: Tuple[str, ...]

    @cached_property
    def var_index(self):
        return {name: idx for idx, name in enumerate(self.var_names)}

    @cached_property
    def row_index(self):
        return {name: idx for idx, name in enumerate(self.row_names)}

    def check(self):
        """Raise ValueError if a structural invariant is violated."""
        n = self.n_vars
        if self.objective.shape != (n,) or self.lower.shape != (n,) or \
                self.upper.shape != (n,):
            raise ValueError("Vector sizes do not match n_vars=%d" % n)
        if self.eq_matrix.shape != (len(self.eq_rhs), n):
            raise ValueError("Equality matrix shape mismatch")
        counts = np.diff(self.eq_matrix.indptr)
        if np.any(counts == 0):
            row = int(np.flatnonzero(counts == 0)[0])
            raise ValueError("Equality row '%s' is empty" % self.row_names[row])
        heads = set()
        for cone in self.cones:
            if len(cone) < 2:
                raise ValueError("Cone %s needs a head and members" % (cone,))
            if any(idx < 0 or idx >= n for idx in cone):
                raise ValueError("Cone index out of range in %s" % (cone,))
            if cone[0] in heads:
                raise ValueError("Variable %d heads two cones" % cone[0])
            heads.add(cone[0])

    def with_bounds(self, lower, upper):
        return replace(self, lower=np.asarray(lower, dtype=float),
                       upper=np.asarray(upper, dtype=float))

    def objective_value(self, x):
        return float(self.objective @ x + self.offset)


@dataclass(eq=False)
class SolverSolution:
    status: str
    primal: np.ndarray
    eq_multipliers: np.ndarray
    objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    relative_gap: float
    var_index: dict
    row_index: dict
    iterations: int = 0
    accuracy: str = 'strict'
    # solver settings that produced this result
    attempt: str = ''

    @property
    def is_optimal(self):
        return self.status == OPTIMAL

    @property
    def residuals(self):
        return {
            'primal_infeasibility': self.primal_infeasibility,
            'dual_infeasibility': self.dual_infeasibility,
            'relative_gap': self.relative_gap
        }

    def value(self, name):
        return float(self.primal[self.var_index[name]])

    def restrict(self, prefix):
        """View of the variables and rows whose names start with prefix,
        with the prefix stripped.
        """
        n = len(prefix)
        return replace(
            self,
            var_index={name[n:]: idx for name, idx in self.var_index.items()
                       if name.startswith(prefix)},
            row_index={name[n:]: idx for name, idx in self.row_index.items()
                       if name.startswith(prefix)}
        )


class ProgramBuilder():
    """ProgramBuilder class

    Assemble a ConeProgram from named variables and rows.
    """

    def __init__(self):
        self.names = []
        self.lower = []
        self.upper = []
        self.objective = []
        self.offset = 0.0
        self.rows = []
        self.rhs = []
        self.row_names = []
        self.cones = []
        self._index = {}
        self._row_set = set()

    def add_variable(self, name, lower=0.0, upper=INF, objective=0.0):
        if name in self._index:
            raise ValueError("Duplicated variable '%s'" % name)
        idx = len(self.names)
        self._index[name] = idx
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective.append(float(objective))
        return idx

    def index(self, name):
        return self._index[name]

    def add_objective(self, idx, coefficient):
        self.objective[idx] += float(coefficient)

    def add_constant(self, value):
        self.offset += float(value)

    def add_equality(self, name, coeffs, rhs):
        """Add sum(coeffs[j] * x_j) = rhs.

        :param str name: Row identifier
        :param dict coeffs: Coefficient per variable index
        :param float rhs: Right-hand side
        """
        coeffs = {j: float(v) for j, v in coeffs.items() if v != 0.0}
        if not coeffs:
            raise ValueError("Equality row '%s' is empty" % name)
        if name in self._row_set:
            raise ValueError("Duplicated row '%s'" % name)
        self._row_set.add(name)
        self.rows.append(coeffs)
        self.rhs.append(float(rhs))
        self.row_names.append(name)
        return len(self.rows) - 1

    def add_range(self, name, coeffs, lower=-INF, upper=INF):
        """Add lower <= sum(coeffs[j] * x_j) <= upper via a bounded
        auxiliary variable.
        """
        aux = self.add_variable("%s:aux" % name, lower, upper)
        row = dict((j, -v) for j, v in coeffs.items())
        row[aux] = row.get(aux, 0.0) + 1.0
        self.add_equality(name, row, 0.0)
        return aux

    def add_affine(self, name, coeffs, constant=0.0):
        """Free auxiliary variable equal to sum(coeffs) + constant."""
        aux = self.add_variable(name, -INF, INF)
        row = dict((j, -v) for j, v in coeffs.items())
        row[aux] = 1.0
        self.add_equality("%s:def" % name, row, constant)
        return aux

    def add_cone(self, head, members):
        self.cones.append((head,) + tuple(members))

    def add_rotated_cone(self, name, x, y, members):
        """Add ||u||^2 <= 2 * x * y with x, y and each u affine.

        Mapped onto the standard cone (x + y; x - y, sqrt(2) * u).
        """
        t = self.add_affine("%s:t" % name, _combine(x, y, 1.0))
        d = self.add_affine("%s:d" % name, _combine(x, y, -1.0))
        scaled = [
            self.add_affine(
                "%s:u%d" % (name, k),
                {j: math.sqrt(2.0) * v for j, v in u.items()}
            )
            for k, u in enumerate(members)
        ]
        self.add_cone(t, [d] + scaled)
        return t

    def add_norm_cone(self, name, members, bound):
        """Add ||u|| <= bound for affine members (coeffs, constant)."""
        head = self.add_variable("%s:head" % name, bound, bound)
        aux = [
            self.add_affine("%s:m%d" % (name, k), coeffs, constant)
            for k, (coeffs, constant) in enumerate(members)
        ]
        self.add_cone(head, aux)
        return head

    def add_abs_epigraph(self, name, coeffs, constant, weight):
        """Charge weight * |sum(coeffs) + constant| in the objective.

        One auxiliary w with w >= expr and w >= -expr.
        """
        w = self.add_variable(name, 0.0, INF, -float(weight))
        pos = dict((j, -v) for j, v in coeffs.items())
        pos[w] = 1.0
        self.add_range("%s:pos" % name, pos, lower=constant)
        neg = dict(coeffs)
        neg[w] = 1.0
        self.add_range("%s:neg" % name, neg, lower=-constant)
        return w

    def extend(self, prog, prefix):
        """Copy a built program into this builder under a name prefix.

        Returns the index offset of the copied variables.
        """
        offset = len(self.names)
        for j, name in enumerate(prog.var_names):
            self.add_variable(prefix + name, prog.lower[j], prog.upper[j],
                              prog.objective[j])
        csr = prog.eq_matrix.tocsr()
        for i, name in enumerate(prog.row_names):
            start, end = csr.indptr[i], csr.indptr[i + 1]
            self.add_equality(
                prefix + name,
                {offset + int(csr.indices[k]): csr.data[k]
                 for k in range(start, end)},
                prog.eq_rhs[i])
        for cone in prog.cones:
            self.add_cone(offset + cone[0], [offset + j for j in cone[1:]])
        self.offset += prog.offset
        return offset

    def build(self):
        n = len(self.names)
        data, rows, cols = [], [], []
        for i, coeffs in enumerate(self.rows):
            for j, v in coeffs.items():
                rows.append(i)
                cols.append(j)
                data.append(v)
        eq = sp.csr_matrix(
            (np.array(data, dtype=float), (np.array(rows, dtype=int),
                                           np.array(cols, dtype=int))),
            shape=(len(self.rows), n)
        )
        return ConeProgram(
            n_vars=n,
            objective=np.array(self.objective, dtype=float),
            offset=self.offset,
            eq_matrix=eq,
            eq_rhs=np.array(self.rhs, dtype=float),
            lower=np.array(self.lower, dtype=float),
            upper=np.array(self.upper, dtype=float),
            cones=tuple(self.cones),
            var_names=tuple(self.names),
            row_names=tuple(self.row_names)
        )


def _combine(x, y, sign):
    out = dict(x)
    for j, v in y.items():
        out[j] = out.get(j, 0.0) + sign * v
    return out


def solve_cone(prog, tol=None, logger=None):
    """Solve a ConeProgram with a primal-dual interior-point method.

    Fixed variables and empty rows are presolved, equality rows and
    cone-free columns are Ruiz-equilibrated, and the reduced problem is
    handed to cvxopt's conelp (homogeneous self-dual embedding,
    Nesterov-Todd scaling, regularized LDL KKT factorization).

    A solve that fails or stalls is retried without KKT regularization,
    then without scaling, then with cvxopt's own KKT solver choice. The
    settings that produced the result are kept in `attempt`.

    Multipliers follow multiplier = d(optimal objective)/d(rhs).

    :param ConeProgram prog: Program
    :param ToleranceSet tol: Tolerances
    :param Logger logger: Logger
    """
    tol = tol or ToleranceSet()
    logger = logger or logging.getLogger(__name__)
    prog.check()

    n = prog.n_vars
    fixed = np.isfinite(prog.lower) & (prog.lower == prog.upper)
    fixed_values = np.where(fixed, prog.lower, 0.0)
    keep = np.flatnonzero(~fixed)

    A = prog.eq_matrix.tocsc()
    b = prog.eq_rhs - A @ fixed_values
    A_keep = A[:, keep].tocsr()
    A_keep.eliminate_zeros()
    counts = np.diff(A_keep.indptr)
    empty = np.flatnonzero(counts == 0)
    rows = np.flatnonzero(counts > 0)

    def finish(status, x_keep=None, y_rows=None, pinf=INF, dinf=INF,
               gap=INF, iterations=0, accuracy='strict', attempt=''):
        x = fixed_values.copy()
        if x_keep is not None:
            x[keep] = x_keep
        else:
            x[keep] = np.nan
        y = np.zeros(len(prog.eq_rhs))
        if y_rows is not None:
            y[rows] = y_rows
        objective = prog.objective_value(x) if x_keep is not None else math.nan
        return SolverSolution(
            status=status, primal=x, eq_multipliers=y, objective=objective,
            primal_infeasibility=pinf, dual_infeasibility=dinf,
            relative_gap=gap, var_index=prog.var_index,
            row_index=prog.row_index, iterations=iterations,
            accuracy=accuracy, attempt=attempt
        )

    # empty rows must hold on their own
    for i in empty:
        if abs(b[i]) > tol.feasibility * (1.0 + abs(prog.eq_rhs[i])):
            logger.debug("Row '%s' is empty after presolve but rhs %g != 0" %
                         (prog.row_names[i], b[i]))
            return finish(INFEASIBLE)

    nk = len(keep)
    if nk == 0:
        return finish(OPTIMAL, np.zeros(0), np.zeros(len(rows)), 0.0, 0.0, 0.0)

    col_of = -np.ones(n, dtype=int)
    col_of[keep] = np.arange(nk)
    cone_cols = np.zeros(nk, dtype=bool)
    for cone in prog.cones:
        for idx in cone:
            if col_of[idx] >= 0:
                cone_cols[col_of[idx]] = True

    A_red = A_keep[rows]
    b_red = b[rows]

    first = None
    for attempt in _attempts(tol):
        label = _attempt_label(attempt)
        try:
            result = _conelp(prog, tol, A_red, b_red, keep, col_of, cone_cols,
                             fixed_values, *attempt)
        except (ArithmeticError, ValueError, TypeError) as e:
            logger.debug("Cone solve attempt '%s' failed: %s" % (label, e))
            continue
        status, x_keep, y_rows, pinf, dinf, gap, iterations, accuracy = \
            result
        if status == OPTIMAL:
            if accuracy != 'strict':
                logger.warning(
                    "Cone solve stopped at acceptable accuracy "
                    "(pinf %.2e, dinf %.2e, gap %.2e)" % (pinf, dinf, gap)
                )
            if attempt != _attempts(tol)[0]:
                logger.info("Cone solve succeeded with fallback '%s'" % label)
            return finish(OPTIMAL, x_keep, y_rows, pinf, dinf, gap,
                          iterations, accuracy, label)
        if status in (INFEASIBLE, UNBOUNDED):
            return finish(status, pinf=pinf, dinf=dinf, gap=gap,
                          iterations=iterations, attempt=label)
        logger.debug("Cone solve attempt '%s' ended with %s after %d "
                     "iterations" % (label, status, iterations))
        if first is None:
            first = (status, x_keep, y_rows, pinf, dinf, gap, iterations,
                     label)

    if first is None:
        logger.warning("Cone solve failed in every attempt")
        return finish(NUMERICAL_FAILURE)
    status, x_keep, y_rows, pinf, dinf, gap, iterations, label = first
    logger.debug("Cone solve ended with %s in every attempt" % status)
    return finish(status, x_keep, y_rows, pinf, dinf, gap, iterations,
                  attempt=label)


def _attempts(tol):
    """Solver settings tried in order until one reaches optimality.

    Each entry is (kktsolver, kktreg, Ruiz passes, reduce rows); kktreg
    None leaves the KKT system unregularized, kktsolver None lets cvxopt
    choose and reduce rows drops linearly dependent equalities first.
    """
    ladder = [
        ('ldl', tol.regularization, tol.ruiz_passes, False),
        ('ldl', 0.0, tol.ruiz_passes, False),
        ('ldl', None, 0, True),
        (None, None, 0, True)
    ]
    out = []
    for entry in ladder:
        if entry not in out:
            out.append(entry)
    return out


def _attempt_label(attempt):
    kktsolver, regularization, passes, reduce_rows = attempt
    label = "%s kktreg=%s ruiz=%d" % (kktsolver or 'default',
                                      'none' if regularization is None
                                      else "%g" % regularization, passes)
    return label + " rows=independent" if reduce_rows else label


def independent_rows(A, b, feasibility):
    """Positions of a maximal independent subset of the rows of A.

    Rows are normalized to unit max-norm and ranked by a pivoted QR of
    A transposed. The second value is False when a dependent row
    disagrees with the kept ones on its right-hand side.
    """
    m = A.shape[0]
    if m <= 1:
        return np.arange(m), True
    dense = A.toarray()
    norms = np.abs(dense).max(axis=1)
    scaled = dense / norms[:, None]
    rhs = b / norms
    _, R, piv = la.qr(scaled.T, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * max(1.0, diag[0])))
    kept = np.sort(piv[:rank])
    if rank == m:
        return kept, True
    dropped = np.sort(piv[rank:])
    coef = np.linalg.lstsq(scaled[kept].T, scaled[dropped].T, rcond=None)[0]
    implied = coef.T @ rhs[kept]
    consistent = bool(np.all(
        np.abs(implied - rhs[dropped]) <=
        feasibility * (1.0 + np.abs(rhs[dropped]))))
    return kept, consistent


def _conelp(prog, tol, A_red, b_red, keep, col_of, cone_cols, fixed_values,
            kktsolver, regularization, passes, reduce_rows):
    """One conelp run on the presolved program.

    Returns (status, x_keep, y_rows, pinf, dinf, gap, iterations,
    accuracy) in the unscaled variables. Rows dropped as dependent get a
    zero multiplier.
    """
    nk = len(keep)
    m_all = A_red.shape[0]
    selected = np.arange(m_all)
    if reduce_rows:
        selected, consistent = independent_rows(A_red, b_red,
                                                 tol.feasibility)
        if not consistent:
            return INFEASIBLE, None, None, INF, INF, INF, 0, None
        A_red = A_red[selected]
        b_red = b_red[selected]
    m = A_red.shape[0]
    r_scale, c_scale = _ruiz_scaling(A_red, cone_cols, passes)
    A_s = (sp.diags(r_scale) @ A_red @ sp.diags(c_scale)).tocoo()
    b_s = r_scale * b_red
    c_s = c_scale * prog.objective[keep]
    # objective scale, undone on the multipliers
    obj_scale = max(1.0, float(np.max(np.abs(c_s)))) if nk else 1.0
    lo = prog.lower[keep] / c_scale
    hi = prog.upper[keep] / c_scale

    # linear part: bounds
    g_val, g_row, g_col, h = [], [], [], []
    for j in range(nk):
        if np.isfinite(hi[j]):
            g_val.append(1.0)
            g_row.append(len(h))
            g_col.append(j)
            h.append(hi[j])
        if np.isfinite(lo[j]):
            g_val.append(-1.0)
            g_row.append(len(h))
            g_col.append(j)
            h.append(-lo[j])
    if not h:
        # conelp needs a nonempty cone; 0 <= 1 is always satisfied
        h.append(1.0)
    n_lin = len(h)

    # second-order cones, fixed members move into h
    q_dims = []
    for cone in prog.cones:
        for idx in cone:
            if col_of[idx] >= 0:
                g_val.append(-1.0)
                g_row.append(len(h))
                g_col.append(int(col_of[idx]))
                h.append(0.0)
            else:
                h.append(fixed_values[idx])
        q_dims.append(len(cone))

    G = spmatrix(g_val, g_row, g_col, (len(h), nk))
    if m > 0:
        A_cvx = spmatrix(A_s.data.tolist(), A_s.row.tolist(),
                         A_s.col.tolist(), (m, nk))
        b_cvx = matrix(b_s, (m, 1), 'd')
    else:
        A_cvx, b_cvx = None, None
    dims = {'l': n_lin, 'q': q_dims, 's': []}
    options = {
        'show_progress': False,
        'maxiters': int(tol.max_iterations),
        'abstol': tol.gap,
        'reltol': tol.gap,
        'feastol': tol.feasibility
    }
    if regularization is not None:
        options['kktreg'] = float(regularization)

    sol = solvers.conelp(matrix(-c_s / obj_scale), G, matrix(h), dims,
                         A_cvx, b_cvx, kktsolver=kktsolver, options=options)

    pinf = _as_float(sol.get('primal infeasibility'))
    dinf = _as_float(sol.get('dual infeasibility'))
    gap = _relative_gap(sol)
    iterations = int(sol.get('iterations') or 0)
    status = sol['status']

    if status == 'primal infeasible':
        return INFEASIBLE, None, None, pinf, dinf, gap, iterations, None
    if status == 'dual infeasible':
        return UNBOUNDED, None, None, pinf, dinf, gap, iterations, None
    if sol['x'] is None:
        return NUMERICAL_FAILURE, None, None, pinf, dinf, gap, iterations, None

    x_keep = c_scale * np.array(sol['x']).ravel()
    y_rows = np.zeros(m_all)
    if m > 0:
        y_rows[selected] = obj_scale * r_scale * np.array(sol['y']).ravel()

    if status == 'optimal':
        return OPTIMAL, x_keep, y_rows, pinf, dinf, gap, iterations, 'strict'
    if max(pinf, dinf, gap) <= tol.acceptable:
        return (OPTIMAL, x_keep, y_rows, pinf, dinf, gap, iterations,
                'acceptable')
    status = ITERATION_LIMIT if iterations >= tol.max_iterations \
        else NUMERICAL_FAILURE
    return status, x_keep, y_rows, pinf, dinf, gap, iterations, None


def _as_float(value):
    return INF if value is None else float(value)


def _relative_gap(sol):
    rel = sol.get('relative gap')
    if rel is not None:
        return abs(float(rel))
    gap = sol.get('gap')
    pobj = sol.get('primal objective')
    if gap is None or pobj is None:
        return INF
    return abs(float(gap)) / (1.0 + abs(float(pobj)))


def _ruiz_scaling(A, frozen_cols, passes):
    """Row and column equilibration factors for A.

    Columns that take part in cones keep a unit factor so cone
    membership is unchanged by the scaling.
    """
    m, n = A.shape
    r = np.ones(m)
    d = np.ones(n)
    if m == 0 or passes <= 0:
        return r, d
    M = abs(A).tocsr()
    for _ in range(passes):
        S = sp.diags(r) @ M @ sp.diags(d)
        row_max = np.asarray(S.max(axis=1).todense()).ravel()
        col_max = np.asarray(S.max(axis=0).todense()).ravel()
        row_max[row_max == 0.0] = 1.0
        col_max[col_max == 0.0] = 1.0
        col_max[frozen_cols] = 1.0
        r = r / np.sqrt(row_max)
        d = d / np.sqrt(col_max)
    return r, d


def extract_row_multiplier(sol, row, base_mva=1.0):
    """Return the multiplier of an equality row in currency/MW.

    :param SolverSolution sol: Optimal solution
    :param str row: Row identifier
    :param float base_mva: System base the row is stated in
    """
    if sol.status != OPTIMAL:
        raise ValueError("Multipliers need an optimal solution, got %s" %
                         sol.status)
    if row not in sol.row_index:
        raise UnknownRowError(row)
    return float(sol.eq_multipliers[sol.row_index[row]]) / base_mva


def dump_program(prog, path):
    """Write a readable listing of a ConeProgram for debugging.

    :param ConeProgram prog: Program
    :param str path: Output file path
    """
    with open(path, 'w') as f:
        f.write("maximize  offset %r\n" % prog.offset)
        for j, name in enumerate(prog.var_names):
            f.write("var %d %s [%r, %r] obj %r\n" % (
                j, name, prog.lower[j], prog.upper[j], prog.objective[j]))
        csr = prog.eq_matrix.tocsr()
        for i, name in enumerate(prog.row_names):
            start, end = csr.indptr[i], csr.indptr[i + 1]
            terms = " ".join(
                "%+r*%s" % (csr.data[k], prog.var_names[csr.indices[k]])
                for k in range(start, end)
            )
            f.write("row %s: %s = %r\n" % (name, terms, prog.eq_rhs[i]))
        for cone in prog.cones:
            f.write("cone %s >= ||(%s)||\n" % (
                prog.var_names[cone[0]],
                ", ".join(prog.var_names[j] for j in cone[1:])))
