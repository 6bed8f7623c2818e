"""Reproduction criteria for the shipped experiments.

Each criterion test records a one-line verdict (see ``acceptance_log``); the
lines are repeated in the terminal summary at the end of the run.
"""
import numpy as np
import pytest

from acceptance_log import record
from seqjde.bellman import CostCoefficients, backward_induction, extract_policy
from seqjde.config import ExperimentConfig, shipped_config
from seqjde.design import ConstraintSpec, PgaConfig, lp_design, projected_gradient_ascent
from seqjde.io import artifact_from_design, region_labels
from seqjde.montecarlo import GridPolicyRunner, MsprtRunner, simulate
from seqjde.msprt import MsprtConfig
from seqjde.performance import dual_objective, error_recursion, expected_runlength, verify_derivative_identity
from seqjde.pipeline import msprt_config, run_benchmark, run_design
from seqjde.verify import run_verification
from toy_oracle import ToyOracle


def _v(x, digits=4):
    return "(" + ", ".join(f"{float(v):.{digits}f}" for v in np.atleast_1d(x)) + ")"


@pytest.fixture(scope="module")
def shift_cfg():
    return ExperimentConfig.load(shipped_config("shift_in_mean"))


@pytest.fixture(scope="module")
def shift_design(shift_cfg):
    return run_design(shift_cfg)


@pytest.fixture(scope="module")
def shift_mc(shift_cfg, shift_design):
    runner = GridPolicyRunner.from_discretization(shift_design.disc, shift_design.result.policy)
    s = shift_cfg.simulation
    return simulate(runner, shift_design.disc.model, s.runs, s.seed, s.mode, s.threads)


def test_criterion_1_shift_in_mean_reproduction(shift_cfg, shift_design, shift_mc):
    bounds = shift_cfg.constraints
    rep = shift_mc
    alpha_ok = bool(np.all((rep.alpha >= 0.04) & (rep.alpha <= 0.06)))
    beta_ok = bool(np.all(np.abs(rep.beta - bounds.beta) <= 0.1 * bounds.beta))
    tau_ok = 19.4 <= rep.runlength <= 21.6
    ok = record(1, "shift-in-mean reproduction", alpha_ok and beta_ok and tau_ok and shift_design.result.converged,
                f"alpha={_v(rep.alpha)} beta={_v(rep.beta)} E[tau]={rep.runlength:.3f} "
                f"(se {rep.runlength_se:.3f}), {rep.runs} runs, design converged={shift_design.result.converged}")
    assert ok


def test_criterion_2_two_step_benchmark(shift_cfg):
    rep, mc = run_benchmark(shift_cfg)
    alpha_ok = bool(np.all(rep.alpha <= 0.06))
    beta_ok = all(0.7 <= rep.beta[m] <= 0.92 for m in (0, 2))
    tau_ok = 12.5 <= rep.runlength <= 13.8
    ok = record(2, "two-step benchmark", alpha_ok and beta_ok and tau_ok,
                f"thresholds={_v(mc.A)} alpha={_v(rep.alpha)} beta={_v(rep.beta)} E[tau]={rep.runlength:.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_3_four_ask_desk_scale():
    cfg = ExperimentConfig.load(shipped_config("ask4"))
    outcome = run_design(cfg)
    model = outcome.disc.model
    s = cfg.simulation
    runner = GridPolicyRunner.from_discretization(outcome.disc, outcome.result.policy)
    rep = simulate(runner, model, s.runs, s.seed, s.mode, s.threads)
    two = simulate(MsprtRunner(model, msprt_config(cfg, model), outcome.disc.grid), model, s.runs, s.seed,
                   s.mode, s.threads)
    alpha_ok = bool(np.all((rep.alpha >= 0.04) & (rep.alpha <= 0.06)))
    beta_ok = bool(np.all((rep.beta >= 0.13) & (rep.beta <= 0.17)))
    tau_ok = 5.8 <= rep.runlength <= 7.0
    msprt_ok = two.beta[0] > 0.25
    ok = record(3, "4-ASK desk scale", alpha_ok and beta_ok and tau_ok and msprt_ok and outcome.disc.fold,
                f"alpha={_v(rep.alpha)} beta={_v(rep.beta)} E[tau]={rep.runlength:.3f}; "
                f"two-step beta={_v(two.beta)} E[tau]={two.runlength:.3f}; folded={outcome.disc.fold}")
    assert ok


def test_criterion_4_exhaustive_oracle(toy_model, toy_disc):
    worst = 0.0
    for lam, mu in (([30.0, 30.0], [300.0, 300.0]), ([12.0, 45.0], [80.0, 500.0]), ([75.7, 84.9], [0.0, 0.0])):
        c = CostCoefficients(lam, mu)
        table = backward_induction(toy_disc, c)
        perf = error_recursion(toy_disc, extract_policy(table, toy_disc))
        oracle = ToyOracle(toy_model.spec, lam, mu, 1)
        alpha, beta, _, tau = oracle.performance()
        errs = [abs(table.rho0 - oracle.rho()), np.max(np.abs(perf.alpha0 - alpha)),
                np.max(np.abs(perf.beta0 - beta)), abs(perf.expected_runlength - tau),
                abs(expected_runlength(table, c, perf, toy_disc.prior) - tau)]
        worst = max(worst, float(max(errs)))
    ok = record(4, "exhaustive oracle", worst <= 1e-12,
                f"max deviation over rho_0, alpha, beta, E[tau] = {worst:.1e} (N={toy_disc.N}, 2^{toy_disc.N} paths)")
    assert ok


def test_criterion_5_derivative_identity(toy_disc, toy_coeffs, shift_design):
    toy = verify_derivative_identity(toy_disc, toy_coeffs)
    shift = verify_derivative_identity(shift_design.disc, shift_design.result.coeffs)
    ok = record(5, "derivative identity", toy.max_rel_error <= 1e-6 and shift.max_rel_error <= 2e-2,
                f"toy max rel error {toy.max_rel_error:.1e} (<= 1e-6); shift-in-mean per coefficient "
                f"{_v(shift.rel_error)} (<= 2e-2)")
    assert ok


def test_criterion_6_duality(shift_cfg, shift_design, shift_mc):
    res = shift_design.result
    disc = shift_design.disc
    perf = res.errors.perf
    c = res.coeffs
    L = dual_objective(res.table.rho0, c, perf.alpha0, perf.beta0, disc.prior)
    identity = expected_runlength(res.table, c, perf, disc.prior)
    gap = abs(L - identity)
    half = 2.5758293035489 * shift_mc.runlength_se
    in_ci = abs(L - shift_mc.runlength) <= half
    pga = shift_cfg.pga
    tol = np.concatenate([np.full(disc.M, pga.tol_alpha), np.full(disc.M, pga.tol_beta)])
    resid = c.vector * (np.concatenate([perf.alpha0, perf.beta0]) - shift_cfg.constraints.bounds)
    slack_ok = bool(np.all(np.abs(resid) <= tol * np.maximum(1.0, c.vector)))
    ok = record(6, "duality", gap <= 1e-9 and in_ci and slack_ok,
                f"|L - identity| = {gap:.1e}; L = {L:.4f} vs MC {shift_mc.runlength:.4f} +/- {half:.4f}; "
                f"max slackness residual / allowance = {np.max(np.abs(resid) / (tol * np.maximum(1, c.vector))):.2f}; "
                f"L at the bounds {res.dual:.4f}, run-length recursion {perf.expected_runlength:.4f}")
    assert ok


def test_criterion_7_lp_pga_cross_validation(toy_disc):
    cfg = ExperimentConfig.load(shipped_config("toy"))
    lp, _ = lp_design(toy_disc, cfg.constraints, cfg.design.min_samples, cfg.design.lp_eps)
    pga = projected_gradient_ascent(toy_disc, cfg.constraints, CostCoefficients([10.0] * 2, [10.0] * 2), cfg.pga,
                                    cfg.design.min_samples)
    same_stop = bool(np.array_equal(lp.policy.stop, pga.policy.stop))
    same_dec = bool(np.array_equal(lp.policy.decision, pga.policy.decision))
    gap = abs(lp.dual - pga.dual)
    ok = record(7, "LP-PGA cross-validation", same_stop and same_dec and gap <= 1e-3 and pga.converged,
                f"stop masks equal={same_stop}, decision masks equal={same_dec}, |L_LP - L_PGA| = {gap:.1e} "
                f"(raw rho_0 {lp.table.rho0:.4f} vs {pga.table.rho0:.4f})")
    assert ok


def test_criterion_8_verify_suite():
    results = run_verification(None, threads=8, seed=0)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        print(r.line())
    ok = record(8, "verify suite", not failed,
                f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    assert ok


def test_shift_in_mean_continues_far_out_at_stage_ten(shift_design):
    art = artifact_from_design(shift_design.disc, shift_design.result)
    labels = region_labels(art.stop, art.decision)
    x = art.grid.points()[:, 0]
    near = np.abs(x - 6.0) <= art.grid.axes[0].spacing
    assert np.all(labels[10][near] == "continue")
    assert not np.any(labels[-1] == "continue")
