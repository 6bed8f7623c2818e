import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqjde.bellman import CostCoefficients, backward_induction, extract_policy
from seqjde.design import (
    ConstraintSpec,
    LpSizeError,
    PgaConfig,
    build_lp,
    export_lp,
    lp_consistency,
    lp_design,
    optimality_reached,
    project,
    projected_gradient_ascent,
    solve_lp,
)
from seqjde.discretization import Discretization
from seqjde.grid import GridSpec
from seqjde.io import write_trace
from seqjde.models import BinaryToyModel
from seqjde.models.toy import ToySpec
from seqjde.performance import dual_objective, error_recursion, expected_runlength
from toy_oracle import ToyOracle

TOY_PGA = PgaConfig(gamma=100.0, tol_alpha=1e-5, tol_beta=1e-5, max_iter=2000)


def _achieved(disc, coeffs, ms=1):
    policy = extract_policy(backward_induction(disc, coeffs, ms), disc)
    return error_recursion(disc, policy)


@pytest.fixture(scope="module")
def toy_constraints(toy_disc, toy_coeffs):
    # errors achieved by the optimal policy at known coefficients, so the constraints are attainable
    perf = _achieved(toy_disc, toy_coeffs)
    return ConstraintSpec(tuple(perf.alpha0), tuple(perf.beta0))


def test_constraint_validation():
    with pytest.raises(ValueError):
        ConstraintSpec((0.05, 1.0), (0.1, 0.1))
    with pytest.raises(ValueError):
        ConstraintSpec((0.05, 0.05), (0.1, 0.0))
    with pytest.raises(ValueError):
        ConstraintSpec((0.05,), (0.1, 0.1))


def test_pga_config_validation():
    with pytest.raises(ValueError):
        PgaConfig(gamma=0)
    with pytest.raises(ValueError):
        PgaConfig(tol_beta=0)
    with pytest.raises(ValueError):
        PgaConfig(max_iter=0)
    with pytest.raises(ValueError):
        PgaConfig(gradient_mode="adam")


def test_projection_clips_negative_components():
    assert np.array_equal(project(np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8))
def test_projection_is_idempotent_and_nonnegative(v):
    p = project(np.array(v))
    assert np.all(p >= 0)
    assert np.array_equal(project(p), p)


def test_lp_row_and_variable_counts():
    model = BinaryToyModel(ToySpec(horizon=2))
    disc = Discretization(model, GridSpec.from_bounds((0, 2, 3)))
    lp = build_lp(disc, ConstraintSpec((0.1, 0.1), (0.01, 0.01)), min_samples=0)
    assert lp.n_stop_rows == 3 * 3 * 2
    assert lp.n_cont_rows == 2 * 3
    assert lp.A_ub.shape == (24, 9 + 4)
    assert np.all(lp.lower[-4:] == 0)
    assert lp.names[-4:] == ["lam_1", "lam_2", "mu_1", "mu_2"]


def test_lambda_enters_only_rows_deciding_for_other_hypotheses(toy_disc):
    lp = build_lp(toy_disc, ConstraintSpec((0.1, 0.1), (0.01, 0.01)), min_samples=0)
    M = 2
    A = lp.A_ub[: lp.n_stop_rows].toarray()
    lam = A[:, lp.n_rho: lp.n_rho + M]
    decided = np.tile(np.arange(M), lp.n_stop_rows // M)
    for m in range(M):
        assert np.all(lam[decided == m, m] == 0)
        assert np.all(lam[decided != m, m] <= 0)


def test_lp_size_budget(toy_disc):
    with pytest.raises(LpSizeError, match="nonzeros"):
        build_lp(toy_disc, ConstraintSpec((0.1, 0.1), (0.01, 0.01)), max_nonzeros=10)


def test_lp_objective_is_the_oracle_runlength(toy_model, toy_disc, toy_constraints):
    res, sol = lp_design(toy_disc, toy_constraints)
    lam, mu = res.coeffs.lam, res.coeffs.mu
    _, _, _, tau = ToyOracle(toy_model.spec, lam, mu, 1).performance()
    assert abs(sol.value - tau) <= 1e-9
    assert abs(res.dual - tau) <= 1e-9
    assert np.allclose(res.errors.alpha, toy_constraints.alpha, atol=1e-9)
    assert np.allclose(res.errors.beta, toy_constraints.beta, atol=1e-9)


@pytest.fixture(scope="module")
def loose_constraints(toy_constraints):
    # loosened so that the optimum is a unique vertex rather than a ray of equal dual value
    return ConstraintSpec(tuple(toy_constraints.alpha + 0.01), tuple(toy_constraints.beta + 0.001))


def test_lp_rho_is_bellman_consistent(toy_disc, loose_constraints):
    sol = solve_lp(build_lp(toy_disc, loose_constraints))
    gap0, excess = lp_consistency(toy_disc, sol)
    assert gap0 <= 1e-4 and excess <= 1e-4
    table = backward_induction(toy_disc, sol.coeffs)
    assert np.all(np.abs(sol.rho - table.rho) <= 1e-4 * (1 + np.abs(table.rho)))


def test_lp_rho_at_tight_constraints_matches_at_the_initial_state(toy_disc, toy_constraints):
    sol = solve_lp(build_lp(toy_disc, toy_constraints))
    gap0, excess = lp_consistency(toy_disc, sol)
    assert gap0 <= 1e-4 and excess <= 1e-4


def test_regularizer_does_not_move_the_optimum(toy_disc, loose_constraints):
    a = solve_lp(build_lp(toy_disc, loose_constraints, eps=0.0)).coeffs.vector
    b = solve_lp(build_lp(toy_disc, loose_constraints, eps=1e-8)).coeffs.vector
    assert np.allclose(a, b, rtol=1e-4, atol=1e-9)


def test_lp_backends_agree(toy_disc, toy_constraints):
    vals = [lp_design(toy_disc, toy_constraints, backend=b)[0].dual for b in ("highs", "highs-ds", "highs-ipm")]
    assert np.ptp(vals) <= 1e-7
    with pytest.raises(ValueError):
        solve_lp(build_lp(toy_disc, toy_constraints), backend="gurobi")


def test_all_slack_constraints_give_zero_coefficients(toy_disc):
    res, _ = lp_design(toy_disc, ConstraintSpec((0.9, 0.9), (1.0, 1.0)))
    assert np.all(res.coeffs.vector == 0)
    assert res.dual == pytest.approx(1.0)


def test_slack_estimation_constraints_give_zero_mu(toy_disc):
    perf = _achieved(toy_disc, CostCoefficients([30.0, 30.0], [0.0, 0.0]))
    cons = ConstraintSpec(tuple(perf.alpha0), (1.0, 1.0))
    lp, _ = lp_design(toy_disc, cons)
    pga = projected_gradient_ascent(toy_disc, cons, CostCoefficients([10.0] * 2, [10.0] * 2), TOY_PGA)
    assert pga.converged
    for res in (lp, pga):
        assert np.all(res.coeffs.mu == 0) and np.all(res.coeffs.lam > 0)
        assert np.all(res.errors.beta < 1.0)


def test_lp_and_pga_agree_on_the_toy(toy_disc, toy_constraints):
    lp, _ = lp_design(toy_disc, toy_constraints)
    pga = projected_gradient_ascent(toy_disc, toy_constraints, CostCoefficients([10.0] * 2, [10.0] * 2), TOY_PGA)
    assert pga.converged
    assert np.array_equal(lp.policy.stop, pga.policy.stop)
    assert np.array_equal(lp.policy.decision, pga.policy.decision)
    assert abs(lp.dual - pga.dual) <= 1e-3


def test_pga_converged_point_satisfies_the_stop_test(toy_disc, toy_constraints):
    res = projected_gradient_ascent(toy_disc, toy_constraints, CostCoefficients([10.0] * 2, [10.0] * 2), TOY_PGA)
    assert res.converged
    last = res.trace[-1]
    assert np.array_equal(np.concatenate([last.lam, last.mu]), res.coeffs.vector)
    grad = np.zeros(4)
    assert np.all(optimality_reached(res.coeffs.vector, grad, res.errors, toy_constraints, TOY_PGA))
    # complementary slackness
    c = res.coeffs.vector
    resid = c * (np.concatenate([res.errors.alpha, res.errors.beta]) - toy_constraints.bounds)
    assert np.all(np.abs(resid) <= 1e-5 * np.maximum(1.0, c))


def test_pga_started_at_the_optimum_stops_immediately(toy_disc, toy_coeffs, toy_constraints):
    res = projected_gradient_ascent(toy_disc, toy_constraints, toy_coeffs, TOY_PGA)
    assert res.iterations == 1 and res.converged
    assert np.array_equal(res.coeffs.vector, toy_coeffs.vector)


def test_pga_dual_equals_runlength_with_achieved_errors(toy_disc, toy_constraints):
    res = projected_gradient_ascent(toy_disc, toy_constraints, CostCoefficients([10.0] * 2, [10.0] * 2), TOY_PGA)
    perf = res.errors.perf
    L = dual_objective(res.table.rho0, res.coeffs, perf.alpha0, perf.beta0, toy_disc.prior)
    assert abs(L - expected_runlength(res.table, res.coeffs, perf, toy_disc.prior)) <= 1e-9
    assert abs(L - perf.expected_runlength) <= 1e-9


def test_pga_reports_infeasible_horizon():
    model = BinaryToyModel(ToySpec(horizon=1))
    disc = Discretization(model, GridSpec.from_bounds((0, 1, 2)))
    res = projected_gradient_ascent(disc, ConstraintSpec((0.01, 0.01), (1e-4, 1e-4)),
                                    CostCoefficients.zeros(2), PgaConfig(gamma=100.0, max_iter=20))
    assert not res.converged and res.iterations == 20
    assert "NOT converged" in res.report() and "alpha=" in res.report()


def test_lp_export_names_and_sections(toy_disc, toy_constraints, tmp_path):
    problem = build_lp(toy_disc, toy_constraints)
    text = export_lp(problem, tmp_path / "toy.lp").read_text()
    assert text.splitlines()[1] == "Maximize"
    for name in ("rho_0_0", "rho_4_4", "lam_1", "mu_2"):
        assert name in text
    assert text.count(" r") >= problem.A_ub.shape[0]
    assert text.rstrip().endswith("End")
    assert " rho_0_0 free" in text


def test_trace_csv_columns(toy_disc, toy_constraints, tmp_path):
    res = projected_gradient_ascent(toy_disc, toy_constraints, CostCoefficients([10.0] * 2, [10.0] * 2), TOY_PGA)
    lines = write_trace(res, tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iter,lam_1,lam_2,mu_1,mu_2,alpha_1,alpha_2,beta_1,beta_2,L"
    assert len(lines) == res.iterations + 1
