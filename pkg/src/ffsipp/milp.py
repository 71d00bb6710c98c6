"""Generic mixed-integer linear programs: model, solver, oracle, LP export.

``solve`` wraps scipy's HiGHS-backed MILP solver. ``enumerate_oracle`` is an
independent exhaustive checker (grid over the integer variables, hand-rolled
two-phase simplex for any continuous remainder) used by the test suite to
cross-validate the production path.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

FEAS_TOL = 1e-6

CONTINUOUS = "continuous"
INTEGER = "integer"
BOOLEAN = "boolean"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time_limit"
GAP_LIMIT = "gap_limit"


@dataclass(frozen=True)
class VarDef:
    name: str
    domain: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if self.domain not in (CONTINUOUS, INTEGER, BOOLEAN):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == BOOLEAN and self.upper == math.inf:
            object.__setattr__(self, "upper", 1.0)
        if self.lower > self.upper:
            raise ValueError(f"{self.name}: lower {self.lower} > upper {self.upper}")
        if self.domain == BOOLEAN and not (0 <= self.lower and self.upper <= 1):
            raise ValueError(f"{self.name}: boolean bounds outside [0,1]")


@dataclass
class LinearExpr:
    """Sum of coefficient*variable terms plus a constant."""

    terms: dict[str, float] = field(default_factory=dict)
    constant: float = 0.0

    def add(self, coef: float, var: str) -> "LinearExpr":
        if coef:
            self.terms[var] = self.terms.get(var, 0.0) + coef
            if self.terms[var] == 0.0:
                del self.terms[var]
        return self

    def value(self, values: dict[str, float]) -> float:
        return self.constant + sum(c * values[v] for v, c in self.terms.items())

    def copy(self) -> "LinearExpr":
        return LinearExpr(dict(self.terms), self.constant)


@dataclass(frozen=True)
class Constraint:
    expr: LinearExpr
    relation: str  # "<=" | "=" | ">="
    rhs: float
    label: str = ""

    def __post_init__(self):
        if self.relation not in ("<=", "=", ">="):
            raise ValueError(f"bad relation {self.relation!r}")


@dataclass
class MilpProblem:
    variables: list[VarDef]
    objective: LinearExpr
    constraints: list[Constraint]

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}
        if len(self._index) != len(self.variables):
            raise ValueError("duplicate variable names")
        for v in self.objective.terms:
            if v not in self._index:
                raise ValueError(f"objective references undeclared variable {v!r}")
        for con in self.constraints:
            for v in con.expr.terms:
                if v not in self._index:
                    raise ValueError(
                        f"constraint {con.label!r} references undeclared variable {v!r}"
                    )

    def var_index(self, name: str) -> int:
        return self._index[name]


@dataclass
class MilpSolution:
    status: str
    values: dict[str, float] | None
    objective_value: float | None
    bound: float | None


@dataclass
class Violation:
    constraint: int | None  # index into problem.constraints, None for var checks
    variable: str | None
    amount: float
    kind: str  # "constraint" | "bound" | "integrality"


def _dense_rows(problem: MilpProblem):
    n = len(problem.variables)
    rows, lbs, ubs = [], [], []
    for con in problem.constraints:
        row = np.zeros(n)
        for v, c in con.expr.terms.items():
            row[problem.var_index(v)] = c
        rhs = con.rhs - con.expr.constant
        rows.append(row)
        if con.relation == "<=":
            lbs.append(-np.inf), ubs.append(rhs)
        elif con.relation == ">=":
            lbs.append(rhs), ubs.append(np.inf)
        else:
            lbs.append(rhs), ubs.append(rhs)
    return np.array(rows), np.array(lbs), np.array(ubs)


def solve(
    problem: MilpProblem,
    gap_tol: float = 1e-9,
    time_limit_ms: int | None = None,
    seed: int | None = None,
) -> MilpSolution:
    """Solve to (near-)optimality. Deterministic for fixed inputs; ``seed``
    is accepted for interface symmetry but the backend is already
    deterministic."""
    n = len(problem.variables)
    c = np.zeros(n)
    for v, coef in problem.objective.terms.items():
        c[problem.var_index(v)] = coef
    integrality = np.array(
        [0 if v.domain == CONTINUOUS else 1 for v in problem.variables]
    )
    bounds = optimize.Bounds(
        np.array([v.lower for v in problem.variables]),
        np.array([v.upper for v in problem.variables]),
    )
    constraints = []
    if problem.constraints:
        rows, lbs, ubs = _dense_rows(problem)
        constraints = [optimize.LinearConstraint(sparse.csr_matrix(rows), lbs, ubs)]
    options = {"mip_rel_gap": gap_tol, "presolve": True}
    if time_limit_ms is not None:
        options["time_limit"] = time_limit_ms / 1000.0
    res = optimize.milp(
        c, constraints=constraints, integrality=integrality, bounds=bounds, options=options
    )
    offset = problem.objective.constant
    if res.status == 0:
        values = {v.name: float(res.x[i]) for i, v in enumerate(problem.variables)}
        bound = float(res.mip_dual_bound) + offset if res.mip_dual_bound is not None else None
        return MilpSolution(OPTIMAL, values, float(res.fun) + offset, bound)
    if res.status == 2:
        return MilpSolution(INFEASIBLE, None, None, None)
    if res.status == 3:
        raise ValueError("unbounded model")
    if res.x is not None:  # stopped at a limit with an incumbent
        values = {v.name: float(res.x[i]) for i, v in enumerate(problem.variables)}
        bound = float(res.mip_dual_bound) + offset if res.mip_dual_bound is not None else None
        return MilpSolution(TIME_LIMIT, values, float(res.fun) + offset, bound)
    return MilpSolution(TIME_LIMIT, None, None, None)


def verify(problem: MilpProblem, values: dict[str, float]) -> list[Violation]:
    """All constraint/bound/integrality violations beyond the 1e-6 tolerance."""
    for v in problem.variables:
        if v.name not in values:
            raise ValueError(f"missing value for variable {v.name!r}")
    out: list[Violation] = []
    for v in problem.variables:
        x = values[v.name]
        if x < v.lower - FEAS_TOL or x > v.upper + FEAS_TOL:
            amount = max(v.lower - x, x - v.upper)
            out.append(Violation(None, v.name, amount, "bound"))
        if v.domain != CONTINUOUS and abs(x - round(x)) > FEAS_TOL:
            out.append(Violation(None, v.name, abs(x - round(x)), "integrality"))
    for idx, con in enumerate(problem.constraints):
        lhs = con.expr.value(values)
        slack = 0.0
        if con.relation == "<=":
            slack = lhs - con.rhs
        elif con.relation == ">=":
            slack = con.rhs - lhs
        else:
            slack = abs(lhs - con.rhs)
        if slack > FEAS_TOL:
            out.append(Violation(idx, None, slack, "constraint"))
    return out


# ---------------------------------------------------------------------------
# Exhaustive oracle (tests only)

ORACLE_GRID_LIMIT = 10_000_000


def enumerate_oracle(problem: MilpProblem) -> MilpSolution:
    """Exact optimum by enumerating the integer grid; continuous remainders
    are resolved per grid point with a two-phase simplex."""
    int_vars = [v for v in problem.variables if v.domain != CONTINUOUS]
    cont_vars = [v for v in problem.variables if v.domain == CONTINUOUS]
    grid = 1
    ranges = []
    for v in int_vars:
        if not (math.isfinite(v.lower) and math.isfinite(v.upper)):
            raise ValueError(f"oracle needs finite bounds on {v.name}")
        lo, hi = math.ceil(v.lower - FEAS_TOL), math.floor(v.upper + FEAS_TOL)
        ranges.append(range(lo, hi + 1))
        grid *= len(ranges[-1])
        if grid > ORACLE_GRID_LIMIT:
            raise ValueError(f"oracle grid too large ({grid} points)")

    best_obj = math.inf
    best_values = None
    for point in itertools.product(*ranges) if ranges else [()]:
        fixed = {v.name: float(x) for v, x in zip(int_vars, point)}
        if cont_vars:
            status, xs, obj = _fixed_lp(problem, cont_vars, fixed)
            if status != OPTIMAL:
                continue
            candidate = dict(fixed)
            candidate.update(xs)
        else:
            candidate = fixed
            if any(v.kind != "integrality" for v in verify(problem, candidate)):
                continue
            obj = problem.objective.value(candidate)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_values = candidate
    if best_values is None:
        return MilpSolution(INFEASIBLE, None, None, None)
    return MilpSolution(OPTIMAL, best_values, best_obj, best_obj)


def _fixed_lp(problem, cont_vars, fixed):
    """LP over the continuous variables with the integers substituted."""
    idx = {v.name: i for i, v in enumerate(cont_vars)}
    rows = []
    for con in problem.constraints:
        coefs = np.zeros(len(cont_vars))
        rhs = con.rhs - con.expr.constant
        for name, c in con.expr.terms.items():
            if name in idx:
                coefs[idx[name]] = c
            else:
                rhs -= c * fixed[name]
        rows.append((coefs, con.relation, rhs))
    c = np.zeros(len(cont_vars))
    obj_fixed = problem.objective.constant
    for name, coef in problem.objective.terms.items():
        if name in idx:
            c[idx[name]] = coef
        else:
            obj_fixed += coef * fixed[name]
    lowers = np.array([v.lower for v in cont_vars])
    uppers = np.array([v.upper for v in cont_vars])
    if not np.all(np.isfinite(lowers)):
        raise ValueError("oracle needs finite lower bounds on continuous variables")
    status, x = _simplex(c, rows, lowers, uppers)
    if status != OPTIMAL:
        return status, None, None
    values = {v.name: float(x[i]) for i, v in enumerate(cont_vars)}
    obj = obj_fixed + float(c @ x)
    return OPTIMAL, values, obj


def _simplex(c, rows, lowers, uppers):
    """Two-phase primal simplex with Bland's rule.

    Minimizes c@x subject to the given (coefs, relation, rhs) rows and
    lower/upper variable bounds. Returns (status, x).
    """
    n = len(c)
    # Shift to x' = x - lower >= 0; finite uppers become extra rows.
    shift = lowers
    work_rows = []
    for coefs, rel, rhs in rows:
        work_rows.append((coefs.copy(), rel, rhs - float(coefs @ shift)))
    for j in range(n):
        if math.isfinite(uppers[j]):
            e = np.zeros(n)
            e[j] = 1.0
            work_rows.append((e, "<=", uppers[j] - lowers[j]))

    m = len(work_rows)
    if m == 0:
        # Unconstrained besides x' >= 0: bounded iff c >= 0.
        if np.any(c < -1e-12):
            raise ValueError("unbounded LP in oracle")
        return OPTIMAL, shift.copy()

    # Build equalities with slack/surplus columns, then artificials.
    slack_count = sum(1 for _, rel, _ in work_rows if rel != "=")
    total = n + slack_count
    A = np.zeros((m, total))
    b = np.zeros(m)
    si = n
    for i, (coefs, rel, rhs) in enumerate(work_rows):
        A[i, :n] = coefs
        b[i] = rhs
        if rel == "<=":
            A[i, si] = 1.0
            si += 1
        elif rel == ">=":
            A[i, si] = -1.0
            si += 1
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]

    # Phase 1.
    art = np.eye(m)
    A1 = np.hstack([A, art])
    basis = list(range(total, total + m))
    tableau = np.hstack([A1, b.reshape(-1, 1)])
    cost1 = np.zeros(total + m)
    cost1[total:] = 1.0
    if not _simplex_core(tableau, basis, cost1):
        raise ValueError("unbounded phase-1 LP")
    if float(cost1[basis] @ tableau[:, -1]) > 1e-7:
        return INFEASIBLE, None
    # Drive leftover artificials out of the basis; rows where that fails
    # are redundant and dropped.
    for i, bv in enumerate(basis):
        if bv >= total:
            pivot_col = next(
                (j for j in range(total) if abs(tableau[i, j]) > 1e-9), None
            )
            if pivot_col is not None:
                _pivot(tableau, basis, i, pivot_col)
    keep = [i for i, bv in enumerate(basis) if bv < total]
    basis2 = [basis[i] for i in keep]

    # Phase 2 on the original columns.
    tableau2 = np.hstack([tableau[keep][:, :total], tableau[keep][:, -1:]])
    cost2 = np.zeros(total)
    cost2[:n] = c
    if not _simplex_core(tableau2, basis2, cost2):
        raise ValueError("unbounded LP in oracle")
    x = np.zeros(total)
    for i, bv in enumerate(basis2):
        x[bv] = tableau2[i, -1]
    return OPTIMAL, x[:n] + shift


def _simplex_core(tableau, basis, cost):
    """In-place Bland-rule simplex on [A|b]; returns False if unbounded."""
    m, width = tableau.shape
    ncols = width - 1
    while True:
        cb = np.array([cost[bv] for bv in basis])
        reduced = cost[:ncols] - cb @ tableau[:, :ncols]
        basic = set(basis)
        entering = None
        for j in range(ncols):
            if j in basic:
                continue
            if reduced[j] < -1e-9:
                entering = j
                break
        if entering is None:
            return True
        ratios = []
        for i in range(m):
            a = tableau[i, entering]
            if a > 1e-9:
                ratios.append((tableau[i, -1] / a, basis[i], i))
        if not ratios:
            return False
        ratios.sort(key=lambda t: (t[0], t[1]))
        _pivot(tableau, basis, ratios[0][2], entering)


def _pivot(tableau, basis, row, col):
    tableau[row] /= tableau[row, col]
    for i in range(len(tableau)):
        if i != row and abs(tableau[i, col]) > 1e-12:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


# ---------------------------------------------------------------------------
# LP text format


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _format_expr(expr: LinearExpr, order: list[str]) -> str:
    parts = []
    for name in order:
        if name not in expr.terms:
            continue
        coef = expr.terms[name]
        sign = "-" if coef < 0 else "+"
        mag = _num(abs(coef))
        if parts:
            parts.append(f"{sign} {mag} {name}")
        else:
            parts.append(f"{mag} {name}" if coef >= 0 else f"- {mag} {name}")
    return " ".join(parts) if parts else "0 " + order[0] if order else "0"


def export_lp(problem: MilpProblem) -> str:
    """Serialize to the conventional LP text format (readable by external
    solvers; the objective constant travels in a comment)."""
    order = [v.name for v in problem.variables]
    lines = []
    if problem.objective.constant:
        lines.append(f"\\ constant {_num(problem.objective.constant)}")
    lines.append("Minimize")
    lines.append(f" obj: {_format_expr(problem.objective, order)}")
    lines.append("Subject To")
    for i, con in enumerate(problem.constraints):
        rel = con.relation if con.relation != "=" else "="
        rhs = con.rhs - con.expr.constant
        lines.append(f" c{i}: {_format_expr(con.expr, order)} {rel} {_num(rhs)}")
    lines.append("Bounds")
    for v in problem.variables:
        if v.domain == BOOLEAN:
            continue
        lo = "-inf" if v.lower == -math.inf else _num(v.lower)
        hi = "+inf" if v.upper == math.inf else _num(v.upper)
        lines.append(f" {lo} <= {v.name} <= {hi}")
    generals = [v.name for v in problem.variables if v.domain == INTEGER]
    binaries = [v.name for v in problem.variables if v.domain == BOOLEAN]
    if generals:
        lines.append("Generals")
        lines.extend(f" {name}" for name in generals)
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def _parse_terms(text: str) -> LinearExpr:
    tokens = text.split()
    expr = LinearExpr()
    sign = 1.0
    pending: float | None = None
    for tok in tokens:
        if tok == "+":
            sign = 1.0
        elif tok == "-":
            sign = -1.0
        else:
            try:
                value = float(tok)
            except ValueError:
                coef = sign * (1.0 if pending is None else pending)
                expr.add(coef, tok)
                sign, pending = 1.0, None
                continue
            pending = value
    return expr


def parse_lp(text: str) -> MilpProblem:
    """Round-trip reader for export_lp output."""
    constant = 0.0
    section = None
    objective = LinearExpr()
    raw_cons: list[tuple[LinearExpr, str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    generals: set[str] = set()
    binaries: set[str] = set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            parts = line.split()
            if len(parts) == 3 and parts[1] == "constant":
                constant = float(parts[2])
            continue
        lowered = line.lower()
        if lowered in ("minimize", "subject to", "bounds", "generals", "binaries", "end"):
            section = lowered
            continue
        if section == "minimize":
            body = line.split(":", 1)[1] if ":" in line else line
            objective = _parse_terms(body)
        elif section == "subject to":
            body = line.split(":", 1)[1] if ":" in line else line
            for rel in ("<=", ">=", "="):
                if f" {rel} " in body:
                    lhs, rhs = body.rsplit(f" {rel} ", 1)
                    raw_cons.append((_parse_terms(lhs), rel, float(rhs)))
                    break
        elif section == "bounds":
            parts = line.split("<=")
            lo = -math.inf if parts[0].strip() == "-inf" else float(parts[0])
            name = parts[1].strip()
            hi = math.inf if parts[2].strip() == "+inf" else float(parts[2])
            bounds[name] = (lo, hi)
        elif section == "generals":
            generals.add(line)
        elif section == "binaries":
            binaries.add(line)

    names: list[str] = []
    seen = set()
    for expr in [objective] + [c[0] for c in raw_cons]:
        for name in expr.terms:
            if name not in seen:
                seen.add(name)
                names.append(name)
    for name in list(bounds) + sorted(generals) + sorted(binaries):
        if name not in seen:
            seen.add(name)
            names.append(name)

    variables = []
    for name in names:
        if name in binaries:
            variables.append(VarDef(name, BOOLEAN, 0, 1))
        else:
            lo, hi = bounds.get(name, (0.0, math.inf))
            domain = INTEGER if name in generals else CONTINUOUS
            variables.append(VarDef(name, domain, lo, hi))
    objective.constant = constant
    constraints = [Constraint(expr, rel, rhs) for expr, rel, rhs in raw_cons]
    return MilpProblem(variables, objective, constraints)
