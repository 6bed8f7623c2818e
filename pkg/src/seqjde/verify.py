"""Invariant checks runnable from the command line.

Each check returns a :class:`CheckResult`; nothing here raises on a failed
invariant so that a full report is always produced.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bellman import CostCoefficients, backward_induction, bellman_residual, extract_policy
from .config import ExperimentConfig
from .discretization import Discretization
from .grid import GridSpec
from .models import AskModel, AskSpec, BinaryToyModel, ShiftInMeanModel
from .models.base import SequentialModel
from .models.shift_in_mean import build_symmetric_spec
from .montecarlo import GridPolicyRunner, simulate
from .msprt import MsprtConfig, llr_matrix, msprt_step
from .performance import error_recursion, verify_derivative_identity


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _guard(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported with its cause
        return CheckResult(name, False, f"raised {type(exc).__name__}: {exc}")
    return CheckResult(name, bool(ok), detail)


def posterior_normalization(disc: Discretization, tol: float = 1e-10) -> tuple[bool, str]:
    err = float(np.max(np.abs(disc.hyp.sum(axis=2) - 1.0)))
    in_range = bool(np.all((disc.hyp >= 0) & (disc.hyp <= 1)))
    var_ok = bool(np.all(np.isfinite(disc.var) & (disc.var >= 0)))
    return err <= tol and in_range and var_ok, f"max |sum p - 1| = {err:.2e}, p in [0,1]: {in_range}, var ok: {var_ok}"


def bellman_terminal(disc: Discretization, coeffs: CostCoefficients) -> tuple[bool, str]:
    table = backward_induction(disc, coeffs)
    gap = float(np.max(np.abs(table.rho[-1] - table.g[-1])))
    return gap == 0.0, f"max |rho_N - g| = {gap:.2e}"


def bellman_recursion(disc: Discretization, coeffs: CostCoefficients) -> tuple[bool, str]:
    table = backward_induction(disc, coeffs)
    res = bellman_residual(table)
    return res == 0.0, f"max |rho_n - min(g, d_n)| = {res:.2e}"


def error_bounds(disc: Discretization, coeffs: CostCoefficients) -> tuple[bool, str]:
    table = backward_induction(disc, coeffs)
    policy = extract_policy(table, disc)
    perf = error_recursion(disc, policy)
    lo, hi = float(perf.alpha.min()), float(perf.alpha.max())
    bmin = float(perf.beta.min())
    correct = policy.decision[-1][:, None] == np.arange(disc.M)
    terminal = bool(np.array_equal(perf.alpha[-1], (~correct).astype(float)))
    ok = lo >= 0.0 and hi <= 1.0 and bmin >= 0.0 and terminal
    return ok, f"alpha in [{lo:.3g}, {hi:.3g}], min beta {bmin:.3g}, terminal alpha exact: {terminal}"


def msprt_uniqueness(trials: int = 1000, M: int = 4, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    cfg = MsprtConfig(tuple(np.log(M / 0.05) * np.ones(M)), 10)
    worst = 0
    for _ in range(trials):
        # spread wide enough that a good share of matrices cross a threshold
        eta = llr_matrix(rng.normal(0.0, 6.0, M))
        qual = np.all((eta >= cfg.A[:, None]) | np.eye(M, dtype=bool), axis=1)
        worst = max(worst, int(qual.sum()))
        stop, dec = msprt_step(eta, 1, cfg)
        if stop and not qual[dec]:
            return False, "decision does not qualify"
    return worst <= 1, f"max qualifying hypotheses over {trials} matrices = {worst}"


def model_symmetry(model: SequentialModel, points: np.ndarray, n: int, negate_mean: bool, tol: float = 1e-10):
    perm = np.asarray(model.mirror_perm)
    mirrored = points.copy()
    mirrored[:, 0] = -mirrored[:, 0]
    p, pm = model.hyp_probs(n, points), model.hyp_probs(n, mirrored)
    mean, var = model.param_moments(n, points)
    mean_m, var_m = model.param_moments(n, mirrored)
    sign = -1.0 if negate_mean else 1.0
    gaps = [np.max(np.abs(p - pm[:, perm])), np.max(np.abs(var - var_m[:, perm])),
            np.max(np.abs(mean - sign * mean_m[:, perm]))]
    worst = float(max(gaps))
    return worst <= tol, f"max mirror mismatch {worst:.2e} at n={n}"


def mc_determinism(disc: Discretization, coeffs: CostCoefficients, runs: int, seed: int, threads: int):
    policy = extract_policy(backward_induction(disc, coeffs), disc)
    runner = GridPolicyRunner.from_discretization(disc, policy)
    one = simulate(runner, disc.model, runs, seed, threads=1, chunk=257)
    many = simulate(runner, disc.model, runs, seed, threads=threads, chunk=257)
    same = one.to_dict() == many.to_dict()
    return same, f"1 vs {threads} workers over {runs} runs identical: {same}"


def toy_setup():
    model = BinaryToyModel()
    disc = Discretization(model, GridSpec.from_bounds((0, model.horizon, model.horizon + 1)))
    return disc, CostCoefficients([30.0, 30.0], [300.0, 300.0])


def small_ask_setup():
    model = AskModel(AskSpec(horizon=8))
    disc = Discretization(model, GridSpec.from_bounds((-9, 9, 31), (0, 30, 31)))
    return disc, CostCoefficients([40.0] * 4, [40.0] * 4)


def run_verification(config: Optional[ExperimentConfig] = None, threads: int = 8, seed: int = 0) -> list[CheckResult]:
    out = []
    toy, toy_c = toy_setup()
    ask, ask_c = small_ask_setup()
    setups = [("toy", toy, toy_c), ("ask-small", ask, ask_c)]
    if config is not None:
        model = config.model.build()
        grid = config.coarse_grid or config.fine_grid
        disc = Discretization(model, grid, fold=config.design.fold)
        c = config.design.init or CostCoefficients(np.full(model.M, 10.0), np.full(model.M, 10.0))
        setups.append((f"config:{config.model.name}", disc, c))
    for label, disc, c in setups:
        out.append(_guard(f"posterior normalization ({label})", lambda d=disc: posterior_normalization(d)))
        out.append(_guard(f"rho_N = g ({label})", lambda d=disc, c=c: bellman_terminal(d, c)))
        out.append(_guard(f"rho_n = min(g, d_n) ({label})", lambda d=disc, c=c: bellman_recursion(d, c)))
        out.append(_guard(f"alpha in [0,1], beta >= 0 ({label})", lambda d=disc, c=c: error_bounds(d, c)))
    out.append(_guard("MSPRT decision uniqueness", lambda: msprt_uniqueness(seed=seed)))
    pts = np.column_stack([np.linspace(-4, 4, 41), np.linspace(0.1, 6, 41)])
    out.append(_guard("4-ASK mirror symmetry", lambda: model_symmetry(AskModel(), pts, 5, negate_mean=False)))
    sym = ShiftInMeanModel(build_symmetric_spec())
    out.append(_guard("shift-in-mean (symmetric prior) mirror symmetry",
                      lambda: model_symmetry(sym, np.linspace(-5, 5, 41)[:, None], 7, negate_mean=True)))
    out.append(_guard("Monte Carlo determinism", lambda: mc_determinism(toy, toy_c, 5000, seed, threads)))

    def fd():
        chk = verify_derivative_identity(toy, toy_c)
        return chk.max_rel_error <= 1e-6, f"max relative error {chk.max_rel_error:.2e}"

    out.append(_guard("derivative identity (toy)", fd))
    return out
