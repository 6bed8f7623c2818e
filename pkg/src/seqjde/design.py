"""Choosing cost coefficients so the optimal policy meets the error constraints.

Two routes are provided: projected gradient ascent on the dual objective and
a linear program that relaxes the Bellman equations into inequalities.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize, sparse

from .bellman import CostCoefficients, CostTable, Policy, backward_induction, extract_policy, stop_cost
from .discretization import Discretization
from .performance import PerformanceTable, design_gradient, dual_objective, error_recursion

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstraintSpec:
    alpha_bar: tuple[float, ...]
    beta_bar: tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.alpha_bar, dtype=float)
        b = np.asarray(self.beta_bar, dtype=float)
        if a.shape != b.shape:
            raise ValueError("alpha_bar and beta_bar need one entry per hypothesis")
        if np.any(a <= 0) or np.any(a >= 1):
            raise ValueError("detection error bounds must lie in (0, 1)")
        if np.any(b <= 0):
            raise ValueError("estimation error bounds must be positive")

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.alpha_bar, dtype=float)

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.beta_bar, dtype=float)

    @property
    def bounds(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])


@dataclass(frozen=True)
class PgaConfig:
    gamma: float = 1000.0
    tol_alpha: float = 1e-3
    tol_beta: float = 5e-3
    max_iter: int = 500
    gradient_mode: str = "grid"  # "grid" or "monte-carlo"
    mc_runs: int = 100_000
    mc_seed: int = 0
    # divide each gradient component by its prior probability
    diagonal_scaling: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not (self.tol_alpha > 0 and self.tol_beta > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.gradient_mode not in ("grid", "monte-carlo"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")


@dataclass
class ErrorEstimate:
    """Detection and estimation errors at the initial state, with standard errors."""

    alpha: np.ndarray
    beta: np.ndarray
    alpha_se: np.ndarray
    beta_se: np.ndarray
    perf: Optional[PerformanceTable] = None


# maps (discretization, policy) to errors at the initial state
ErrorEvaluator = Callable[[Discretization, Policy], ErrorEstimate]


def grid_evaluator(disc: Discretization, policy: Policy) -> ErrorEstimate:
    perf = error_recursion(disc, policy)
    zeros = np.zeros(disc.M)
    return ErrorEstimate(perf.alpha0, perf.beta0, zeros, zeros.copy(), perf)


@dataclass
class TraceRow:
    iteration: int
    lam: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    dual: float


@dataclass
class DesignResult:
    coeffs: CostCoefficients
    table: CostTable
    policy: Policy
    errors: ErrorEstimate
    dual: float
    converged: bool
    iterations: int
    trace: list[TraceRow] = field(default_factory=list)
    method: str = "pga"

    def report(self) -> str:
        state = "converged" if self.converged else "NOT converged (constraints may be infeasible for this horizon)"
        return (f"{self.method} {state} after {self.iterations} iterations; "
                f"alpha={np.array2string(self.errors.alpha, precision=6)} "
                f"beta={np.array2string(self.errors.beta, precision=6)}")


def project(c: np.ndarray) -> np.ndarray:
    """Projection onto the nonnegative orthant."""
    return np.maximum(c, 0.0)


def _symmetrize(v: np.ndarray, perm: Optional[np.ndarray]) -> np.ndarray:
    if perm is None:
        return v
    M = perm.size
    full = np.concatenate([perm, perm + M])
    return 0.5 * (v + v[full])


def optimality_reached(c, grad, errors: ErrorEstimate, constraints: ConstraintSpec, config: PgaConfig) -> np.ndarray:
    """Per-coefficient stopping test of the ascent; Monte Carlo noise widens the tolerance by 3 SE."""
    err = np.concatenate([errors.alpha, errors.beta])
    se = np.concatenate([errors.alpha_se, errors.beta_se])
    M = errors.alpha.size
    tol = np.concatenate([np.full(M, config.tol_alpha), np.full(M, config.tol_beta)]) + 3.0 * se
    return ((c == 0) & (grad <= 0)) | (np.abs(err - constraints.bounds) <= tol)


def projected_gradient_ascent(
    disc: Discretization,
    constraints: ConstraintSpec,
    init: CostCoefficients,
    config: PgaConfig = PgaConfig(),
    min_samples: int = 1,
    evaluator: ErrorEvaluator = grid_evaluator,
) -> DesignResult:
    prior = disc.prior
    c = project(init.vector.astype(float))
    if disc.fold:
        c = _symmetrize(c, disc.perm)
    scale = np.concatenate([prior, prior]) if config.diagonal_scaling else np.ones_like(c)
    trace: list[TraceRow] = []
    started = time.perf_counter()
    for it in range(1, config.max_iter + 1):
        coeffs = CostCoefficients.from_vector(c)
        table = backward_induction(disc, coeffs, min_samples)
        policy = extract_policy(table, disc)
        errors = evaluator(disc, policy)
        grad = design_gradient(errors.alpha, errors.beta, constraints.alpha, constraints.beta, prior)
        if disc.fold:
            grad = _symmetrize(grad, disc.perm)
        L = dual_objective(table.rho0, coeffs, constraints.alpha, constraints.beta, prior)
        trace.append(TraceRow(it, coeffs.lam, coeffs.mu, errors.alpha, errors.beta, L))
        log.debug("pga %d: c=%s alpha=%s beta=%s L=%.6f", it, c, errors.alpha, errors.beta, L)
        if np.all(optimality_reached(c, grad, errors, constraints, config)):
            log.info("pga converged after %d iterations (%.1fs)", it, time.perf_counter() - started)
            return DesignResult(coeffs, table, policy, errors, L, True, it, trace)
        c = project(c + config.gamma * grad / scale)
    log.warning("pga hit the iteration cap of %d", config.max_iter)
    return DesignResult(coeffs, table, policy, errors, L, False, config.max_iter, trace)


# linear program


class LpSizeError(MemoryError):
    pass


class LpSolveError(RuntimeError):
    pass


@dataclass
class LpProblem:
    """``maximize objective @ v`` subject to ``A_ub v <= b_ub`` and ``A_eq v = b_eq``.

    The variable vector holds ``rho[n, i]`` in stage-major order followed by
    ``lam`` and ``mu``.
    """

    objective: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    A_eq: Optional[sparse.csr_matrix]
    b_eq: Optional[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    names: list[str]
    N: int
    R: int
    M: int
    n_stop_rows: int
    n_cont_rows: int
    eps: float

    @property
    def n_rho(self) -> int:
        return (self.N + 1) * self.R

    def rho_index(self, n: int, i) -> np.ndarray:
        return n * self.R + np.asarray(i)


def build_lp(
    disc: Discretization,
    constraints: ConstraintSpec,
    min_samples: int = 1,
    eps: float = 1e-8,
    max_nonzeros: int = 50_000_000,
) -> LpProblem:
    """Assemble the relaxed Bellman program.

    Stopping rows ``rho_n(t) - D_m(t; lam, mu) <= 0`` exist for stages where
    stopping is allowed; continuation rows are ``rho_n - K_n rho_{n+1} <= 1``.
    The regularizer adds ``eps`` times the mean of all ``rho`` to the
    objective so that every ``rho`` is pushed up to its Bellman value.
    """
    N, R, M = disc.N, disc.R, disc.M
    stop_stages = [n for n in range(N + 1) if n >= min_samples or n == N]
    n_stop = len(stop_stages) * R * M
    cont_nnz = sum(k.nnz for k in disc.kernels) + N * R
    est = n_stop * (2 * M + 1) + cont_nnz
    if est > max_nonzeros:
        raise LpSizeError(f"LP needs about {est} nonzeros ({n_stop} stopping rows, {N * R} continuation rows, "
                          f"{(N + 1) * R + 2 * M} variables); budget is {max_nonzeros}")
    n_rho = (N + 1) * R
    n_var = n_rho + 2 * M
    lam0, mu0 = n_rho, n_rho + M

    blocks = []
    # stopping rows: for each (n, i, m) the row reads rho - sum_{j != m} p_j lam_j - p_m var_m mu_m
    for n in stop_stages:
        p, v = disc.hyp[n], disc.var[n]
        rows = np.arange(R * M).reshape(R, M)
        rho_col = np.repeat(n * R + np.arange(R), M)
        r_idx = [rows.ravel()]
        c_idx = [rho_col]
        vals = [np.ones(R * M)]
        for j in range(M):
            coef = np.repeat(-p[:, j], M).reshape(R, M)
            coef[:, j] = 0.0
            r_idx.append(rows.ravel())
            c_idx.append(np.full(R * M, lam0 + j))
            vals.append(coef.ravel())
        r_idx.append(rows.ravel())
        c_idx.append(mu0 + np.tile(np.arange(M), R))
        vals.append((-p * v).ravel())
        blocks.append(sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(R * M, n_var)))
    # continuation rows
    for n in range(N):
        K = disc.kernels[n]
        Kf = K.same if K.mirror is None else (K.same + K.mirror)
        Kf = Kf.tocoo()
        rr = np.concatenate([np.arange(R), Kf.row])
        cc = np.concatenate([n * R + np.arange(R), (n + 1) * R + Kf.col])
        vv = np.concatenate([np.ones(R), -Kf.data])
        blocks.append(sparse.csr_matrix((vv, (rr, cc)), shape=(R, n_var)))
    A_ub = sparse.vstack(blocks, format="csr")
    b_ub = np.concatenate([np.zeros(n_stop), np.ones(N * R)])

    objective = np.zeros(n_var)
    objective[:n_rho] = eps / n_rho
    objective[disc.t0_row] += 1.0
    objective[lam0:mu0] = -disc.prior * constraints.alpha
    objective[mu0:] = -disc.prior * constraints.beta

    A_eq = b_eq = None
    if disc.fold:
        # coefficients of mirrored hypotheses are tied
        pairs = [(m, int(disc.perm[m])) for m in range(M) if disc.perm[m] > m]
        if pairs:
            rows, cols, vals = [], [], []
            for r, (a, b) in enumerate(pairs * 2):
                off = lam0 if r < len(pairs) else mu0
                rows += [r, r]
                cols += [off + a, off + b]
                vals += [1.0, -1.0]
            A_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * len(pairs), n_var))
            b_eq = np.zeros(2 * len(pairs))

    lower = np.concatenate([np.full(n_rho, -np.inf), np.zeros(2 * M)])
    upper = np.full(n_var, np.inf)
    names = [f"rho_{n}_{i}" for n in range(N + 1) for i in range(R)]
    names += [f"lam_{m + 1}" for m in range(M)] + [f"mu_{m + 1}" for m in range(M)]
    return LpProblem(objective, A_ub, b_ub, A_eq, b_eq, lower, upper, names, N, R, M, n_stop, N * R, eps)


@dataclass
class LpSolution:
    coeffs: CostCoefficients
    rho: np.ndarray  # (N+1, R)
    objective: float  # includes the regularizer
    status: str
    ineq_duals: Optional[np.ndarray] = None
    value: float = float("nan")  # dual objective without the regularizer


def solve_lp(problem: LpProblem, backend: str = "highs", time_limit: Optional[float] = None) -> LpSolution:
    """Solve with SciPy's HiGHS interface; other backends go through :func:`export_lp`.

    ``backend`` is one of ``highs`` (automatic choice), ``highs-ds`` (dual
    simplex) or ``highs-ipm`` (interior point with crossover).
    """
    if backend not in ("highs", "highs-ds", "highs-ipm"):
        raise ValueError(f"backend {backend!r} is not available; export the LP and solve it externally")
    options = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = optimize.linprog(
        -problem.objective,
        A_ub=problem.A_ub,
        b_ub=problem.b_ub,
        A_eq=problem.A_eq,
        b_eq=problem.b_eq,
        bounds=np.column_stack([problem.lower, np.where(np.isinf(problem.upper), None, problem.upper)]),
        method=backend,
        options=options,
    )
    if res.status != 0:
        raise LpSolveError(f"LP backend status {res.status}: {res.message}")
    x = res.x
    n_rho = problem.n_rho
    M = problem.M
    coeffs = CostCoefficients(np.maximum(x[n_rho: n_rho + M], 0.0), np.maximum(x[n_rho + M:], 0.0))
    duals = getattr(getattr(res, "ineqlin", None), "marginals", None)
    value = float(-res.fun) - problem.eps / n_rho * float(np.sum(x[:n_rho]))
    return LpSolution(coeffs, x[:n_rho].reshape(problem.N + 1, problem.R), float(-res.fun), res.message, duals, value)


def lp_consistency(disc: Discretization, sol: LpSolution, min_samples: int = 1) -> tuple[float, float]:
    """Compare LP ``rho`` with backward induction at the LP coefficients.

    Returns the relative gap at the initial state and the largest amount by
    which the LP value exceeds the Bellman value anywhere (which should be
    within solver tolerance; below the Bellman value is allowed at states the
    optimum does not depend on).
    """
    table = backward_induction(disc, sol.coeffs, min_samples)
    r0 = table.rho[0, disc.t0_row]
    gap0 = abs(sol.rho[0, disc.t0_row] - r0) / (1.0 + abs(r0))
    excess = float(np.max((sol.rho - table.rho) / (1.0 + np.abs(table.rho))))
    return float(gap0), max(excess, 0.0)


def export_lp(problem: LpProblem, path) -> Path:
    """Write the problem in CPLEX LP text format."""
    path = Path(path)
    names = problem.names

    def terms(idx, vals):
        out = []
        for k, (j, v) in enumerate(zip(idx, vals)):
            if v == 0:
                continue
            sign = "-" if v < 0 else "+"
            out.append(f"{sign} {abs(v):.17g} {names[j]}")
        # keep lines short for strict readers
        return "\n   ".join(" ".join(out[i: i + 6]) for i in range(0, len(out), 6)) or "0 rho_0_0"

    nz = np.flatnonzero(problem.objective)
    lines = ["\\ relaxed Bellman program for cost-coefficient design", "Maximize",
             " obj: " + terms(nz, problem.objective[nz]), "Subject To"]
    A = problem.A_ub
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        lines.append(f" r{r}: " + terms(A.indices[lo:hi], A.data[lo:hi]) + f" <= {problem.b_ub[r]:.17g}")
    if problem.A_eq is not None:
        E = problem.A_eq
        for r in range(E.shape[0]):
            lo, hi = E.indptr[r], E.indptr[r + 1]
            lines.append(f" e{r}: " + terms(E.indices[lo:hi], E.data[lo:hi]) + f" = {problem.b_eq[r]:.17g}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = problem.lower[j], problem.upper[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {name} free")
        elif lo != 0 or not np.isinf(hi):
            lines.append(f" {lo:.17g} <= {name} <= {hi:.17g}".replace("inf", "+inf"))
    lines.append("End")
    path.write_text("\n".join(lines) + "\n")
    return path


def resolve_ties_with_duals(
    table: CostTable, policy: Policy, problem: LpProblem, sol: LpSolution, disc: Discretization, tol: float = 1e-7
) -> Policy:
    """Break stop/continue and decision ties using the LP dual values.

    At the LP optimum the coefficients sit where several policies are
    optimal; the inequality duals are the occupation measure of the
    constrained optimum, so the action carrying dual mass is kept.  States
    without dual mass keep the default tie-break.
    """
    if sol.ineq_duals is None:
        return policy
    N, R, M = problem.N, problem.R, problem.M
    duals = np.abs(sol.ineq_duals)
    stop_stages = [n for n in range(N + 1) if n >= table.min_samples or n == N]
    stop_dual = np.zeros((N + 1, R, M))
    stop_dual[stop_stages] = duals[: problem.n_stop_rows].reshape(len(stop_stages), R, M)
    cont_dual = np.zeros((N + 1, R))
    cont_dual[:N] = duals[problem.n_stop_rows:].reshape(N, R)
    stop = policy.stop.copy()
    decision = policy.decision.copy()
    D = stop_cost(disc.hyp, disc.var, table.coeffs)
    scale = 1.0 + np.abs(table.g)
    tied = (np.abs(table.g - table.d) <= tol * scale) & (np.arange(N + 1)[:, None] >= table.min_samples)
    tied[N] = False
    has_mass = (cont_dual + stop_dual.sum(axis=2)) > 0
    pick = tied & has_mass
    stop[pick] = stop_dual.sum(axis=2)[pick] >= cont_dual[pick]
    dec_tied = (np.abs(D - table.g[..., None]) <= tol * scale[..., None]).sum(axis=2) > 1
    dec_pick = dec_tied & (stop_dual.sum(axis=2) > 0)
    masked = np.where(np.abs(D - table.g[..., None]) <= tol * scale[..., None], stop_dual, -1.0)
    decision[dec_pick] = np.argmax(masked, axis=2)[dec_pick]
    return Policy(stop, decision, policy.estimate, policy.min_samples)


def lp_design(
    disc: Discretization,
    constraints: ConstraintSpec,
    min_samples: int = 1,
    eps: float = 1e-8,
    evaluator: ErrorEvaluator = grid_evaluator,
    backend: str = "highs",
) -> tuple[DesignResult, LpSolution]:
    """Solve the LP and re-derive the policy by backward induction at its coefficients."""
    problem = build_lp(disc, constraints, min_samples, eps)
    sol = solve_lp(problem, backend)
    table = backward_induction(disc, sol.coeffs, min_samples)
    policy = resolve_ties_with_duals(table, extract_policy(table, disc), problem, sol, disc)
    errors = evaluator(disc, policy)
    L = dual_objective(table.rho0, sol.coeffs, constraints.alpha, constraints.beta, disc.prior)
    return DesignResult(sol.coeffs, table, policy, errors, L, True, 1, method="lp"), sol
