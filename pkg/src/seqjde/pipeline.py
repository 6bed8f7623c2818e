"""End-to-end steps shared by the command line and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bellman import CostCoefficients
from .config import ExperimentConfig
from .design import DesignResult, LpSolution, lp_design, projected_gradient_ascent
from .discretization import Discretization
from .io import DesignArtifact
from .models.base import SequentialModel
from .montecarlo import EmpiricalReport, GridPolicyRunner, MonteCarloEvaluator, MsprtRunner, simulate
from .msprt import MsprtConfig
from .performance import expected_runlength

log = logging.getLogger(__name__)


@dataclass
class DesignOutcome:
    result: DesignResult
    disc: Discretization
    lp: Optional[LpSolution] = None
    lp_result: Optional[DesignResult] = None

    @property
    def identity_runlength(self) -> float:
        """``rho_0 - sum_m p_m (lam_m alpha_0^m + mu_m beta_0^m)`` on the grid."""
        perf = self.result.errors.perf
        if perf is None:
            return float("nan")
        return expected_runlength(self.result.table, self.result.coeffs, perf, self.disc.prior)


def build_discretization(model: SequentialModel, config: ExperimentConfig, which: str = "fine") -> Discretization:
    grid = config.fine_grid if which == "fine" else config.coarse_grid
    if grid is None:
        raise ValueError(f"config has no {which} grid")
    return Discretization(model, grid, fold=config.design.fold)


def default_init(M: int) -> CostCoefficients:
    return CostCoefficients(np.full(M, 10.0), np.full(M, 10.0))


def run_design(
    config: ExperimentConfig,
    model: Optional[SequentialModel] = None,
    fine: Optional[Discretization] = None,
    coarse: Optional[Discretization] = None,
    threads: int = 1,
) -> DesignOutcome:
    """Design coefficients with the configured method and return the fine-grid result."""
    model = model or config.model.build()
    d = config.design
    lp_sol = lp_res = None
    init = d.init or default_init(model.M)
    if d.method in ("lp", "lp-then-pga"):
        lp_disc = (coarse or build_discretization(model, config, "coarse")) if d.method == "lp-then-pga" else (
            fine or build_discretization(model, config, "fine"))
        lp_res, lp_sol = lp_design(lp_disc, config.constraints, d.min_samples, d.lp_eps)
        log.info("LP coefficients %s", lp_sol.coeffs.vector)
        if d.method == "lp":
            return DesignOutcome(lp_res, lp_disc, lp_sol, lp_res)
        init = lp_sol.coeffs
    fine = fine or build_discretization(model, config, "fine")
    evaluator = None
    if config.pga.gradient_mode == "monte-carlo":
        evaluator = MonteCarloEvaluator(model, config.pga.mc_runs, config.pga.mc_seed, threads)
    kwargs = {} if evaluator is None else {"evaluator": evaluator}
    result = projected_gradient_ascent(fine, config.constraints, init, config.pga, d.min_samples, **kwargs)
    if evaluator is not None:
        # report grid errors alongside so the identity value is available
        from .design import grid_evaluator

        grid_err = grid_evaluator(fine, result.policy)
        result.errors.perf = grid_err.perf
    return DesignOutcome(result, fine, lp_sol, lp_res)


def simulate_artifact(art: DesignArtifact, model: SequentialModel, config: ExperimentConfig) -> EmpiricalReport:
    runner = GridPolicyRunner(model, art.grid, art.stop, art.decision, art.estimate)
    s = config.simulation
    return simulate(runner, model, s.runs, s.seed, s.mode, s.threads)


def msprt_config(config: ExperimentConfig, model: SequentialModel) -> MsprtConfig:
    return MsprtConfig.from_levels(config.constraints.alpha, model.horizon, config.simulation.threshold_rule)


def run_benchmark(config: ExperimentConfig, model: Optional[SequentialModel] = None) -> tuple[EmpiricalReport, MsprtConfig]:
    model = model or config.model.build()
    mc = msprt_config(config, model)
    s = config.simulation
    runner = MsprtRunner(model, mc, config.fine_grid)
    return simulate(runner, model, s.runs, s.seed, s.mode, s.threads), mc
