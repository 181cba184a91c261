"""
LMI problem model and conic solves
SDPs are modelled with cvxpy and solved by Clarabel (SCS as fallback); LPs go to scipy's HiGHS
"""

import logging
from typing import Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from app.core.config import settings
from app.core.exceptions import DimensionMismatch, InvalidOption, LpInfeasible, LpUnbounded, NumericalFailure
from app.models.sdp import LmiSolution, LpResult, SolveStatus

logger = logging.getLogger(__name__)

_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolveStatus.UNBOUNDED,
}


class LmiProblem:
    """Named variables, linear objective, PSD and equality constraints"""

    def __init__(self, name: str = "lmi"):
        self.name = name
        self._variables: Dict[str, cp.Variable] = {}
        self._lmis: List[Tuple[str, cp.Expression]] = []
        self._equalities: List[Tuple[str, cp.Expression]] = []
        self._nonneg: List[Tuple[str, cp.Expression]] = []
        self._objective: Optional[cp.Expression] = None

    # Variables

    def _declare(self, name: str, var: cp.Variable) -> cp.Variable:
        if name in self._variables:
            raise InvalidOption(f"variable '{name}' declared twice")
        self._variables[name] = var
        return var

    def scalar(self, name: str) -> cp.Variable:
        return self._declare(name, cp.Variable(name=name))

    def symmetric(self, name: str, n: int) -> cp.Variable:
        return self._declare(name, cp.Variable((n, n), symmetric=True, name=name))

    def matrix(self, name: str, rows: int, cols: int) -> cp.Variable:
        return self._declare(name, cp.Variable((rows, cols), name=name))

    def variable(self, name: str) -> cp.Variable:
        return self._variables[name]

    @property
    def variables(self) -> Dict[str, cp.Variable]:
        return dict(self._variables)

    # Constraints and objective

    def add_lmi(self, expr, label: Optional[str] = None) -> None:
        """Require expr >= 0 in the PSD sense; the symmetric part is constrained"""
        if expr.ndim != 2 or expr.shape[0] != expr.shape[1]:
            raise DimensionMismatch(f"LMI expression must be square, got shape {expr.shape}")
        label = label or f"lmi{len(self._lmis)}"
        self._lmis.append((label, 0.5 * (expr + expr.T)))

    def add_eq(self, expr, label: Optional[str] = None) -> None:
        label = label or f"eq{len(self._equalities)}"
        self._equalities.append((label, expr))

    def add_nonneg(self, expr, label: Optional[str] = None) -> None:
        label = label or f"nonneg{len(self._nonneg)}"
        self._nonneg.append((label, expr))

    def minimize(self, expr) -> None:
        self._objective = expr

    def constraints(self) -> list:
        out = [expr >> 0 for _, expr in self._lmis]
        out += [expr == 0 for _, expr in self._equalities]
        out += [expr >= 0 for _, expr in self._nonneg]
        return out

    def to_cvxpy(self) -> cp.Problem:
        objective = cp.Minimize(self._objective if self._objective is not None else 0)
        return cp.Problem(objective, self.constraints())

    def dump(self) -> str:
        """Plain-text listing: variable table, objective row, constraint blocks"""
        lines = [f"LMI PROBLEM {self.name}", "VARIABLES"]
        for name, var in self._variables.items():
            kind = "symmetric" if var.attributes.get("symmetric") else ("scalar" if var.ndim == 0 else "matrix")
            shape = "x".join(str(d) for d in var.shape) or "1"
            lines.append(f"  {name} {kind} {shape}")
        lines.append("OBJECTIVE")
        lines.append(f"  minimize {self._objective if self._objective is not None else 0}")
        for title, block, rel in (
            ("LMI", self._lmis, ">> 0"),
            ("EQUALITY", self._equalities, "== 0"),
            ("NONNEGATIVE", self._nonneg, ">= 0"),
        ):
            for label, expr in block:
                lines.append(f"{title} {label} {'x'.join(str(d) for d in expr.shape) or '1'}")
                lines.append(f"  {expr} {rel}")
        lines.append("END")
        return "\n".join(lines) + "\n"

    # Residuals at the current variable values

    def max_residual(self) -> float:
        worst = 0.0
        for _, expr in self._lmis:
            val = np.atleast_2d(expr.value)
            worst = max(worst, -float(np.linalg.eigvalsh(0.5 * (val + val.T))[0]))
        for _, expr in self._equalities:
            worst = max(worst, float(np.max(np.abs(np.atleast_1d(expr.value)))))
        for _, expr in self._nonneg:
            worst = max(worst, -float(np.min(np.atleast_1d(expr.value))))
        return worst


def _solver_options(solver: str, tol: float) -> dict:
    if solver == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": settings.SDP_MAX_ITER}
    if solver == "SCS":
        eps = max(tol, 1e-8)
        return {"eps_abs": eps, "eps_rel": eps, "max_iters": 1000 * settings.SDP_MAX_ITER}
    return {}


def _solve_with(problem: LmiProblem, solver: str, tol: float) -> Optional[LmiSolution]:
    prob = problem.to_cvxpy()
    try:
        prob.solve(solver=solver, **_solver_options(solver, tol))
    except (cp.error.SolverError, ValueError, ArithmeticError) as e:
        logger.warning(f"{solver} failed on {problem.name}: {e}")
        return None

    status = _STATUS_MAP.get(prob.status, SolveStatus.NUMERICAL_FAILURE)
    if status == SolveStatus.NUMERICAL_FAILURE:
        logger.warning(f"{solver} returned status '{prob.status}' on {problem.name}")
        return None
    if status != SolveStatus.OPTIMAL:
        return LmiSolution(status=status, solver=solver)

    residual = problem.max_residual()
    if prob.status == cp.OPTIMAL_INACCURATE:
        if residual > settings.SDP_RESIDUAL_ACCEPT:
            logger.warning(f"{solver} inaccurate solution rejected on {problem.name} (residual {residual:.2e})")
            return None
        logger.warning(f"{solver} inaccurate solution accepted on {problem.name} (residual {residual:.2e})")

    values = {name: np.atleast_2d(np.asarray(var.value, dtype=float)) for name, var in problem.variables.items()}
    return LmiSolution(
        status=SolveStatus.OPTIMAL,
        values=values,
        objective_value=float(prob.value),
        max_residual=residual,
        solver=solver,
    )


def solve_lmi(problem: LmiProblem, tol: Optional[float] = None) -> LmiSolution:
    tol = settings.SDP_TOL if tol is None else tol
    if not 1e-12 <= tol <= 1e-4:
        raise InvalidOption(f"SDP tolerance must lie in [1e-12, 1e-4], got {tol}")

    for solver in (settings.SDP_SOLVER, settings.SDP_FALLBACK_SOLVER):
        solution = _solve_with(problem, solver, tol)
        if solution is not None:
            logger.debug(f"{problem.name}: {solution.status.value} via {solver}")
            return solution

    logger.error(f"All conic solvers failed on {problem.name}")
    raise NumericalFailure(f"conic solve of {problem.name} stalled")


def solve_lp(c, F, g, A_eq=None, b_eq=None, maximize: bool = False) -> LpResult:
    """min (or max) c^T x subject to F x <= g and optional equalities, x free"""
    c = np.asarray(c, dtype=float).reshape(-1)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    g = np.asarray(g, dtype=float).reshape(-1)
    if F.size and (F.shape[1] != c.size or F.shape[0] != g.size):
        raise DimensionMismatch(f"LP data inconsistent: c {c.shape}, F {F.shape}, g {g.shape}")

    result = linprog(
        -c if maximize else c,
        A_ub=F if F.size else None,
        b_ub=g if F.size else None,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(None, None)] * c.size,
        method="highs",
    )
    if result.status == 0:
        objective = float(-result.fun if maximize else result.fun)
        return LpResult(status=SolveStatus.OPTIMAL, x=result.x, objective=objective)
    if result.status == 2:
        raise LpInfeasible(result.message)
    if result.status == 3:
        raise LpUnbounded(result.message)
    logger.error(f"LP solve failed: {result.message}")
    raise NumericalFailure(f"LP solve failed: {result.message}")
