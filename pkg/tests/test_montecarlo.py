import json

import numpy as np
import pytest

from seqjde.bellman import CostCoefficients, backward_induction, extract_policy
from seqjde.montecarlo import (
    GridPolicyRunner,
    MonteCarloEvaluator,
    MsprtRunner,
    Outcome,
    aggregate,
    derive_rng_streams,
    draw_trajectories,
    simulate,
)
from seqjde.msprt import MsprtConfig
from seqjde.performance import error_recursion


def test_stream_is_a_function_of_seed_stream_and_index():
    a = derive_rng_streams(5, 17, 2).random(8)
    b = derive_rng_streams(5, 17, 2).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, derive_rng_streams(5, 18, 2).random(8))
    assert not np.array_equal(a, derive_rng_streams(5, 17, 3).random(8))
    assert not np.array_equal(a, derive_rng_streams(6, 17, 2).random(8))


def test_no_collisions_across_ten_thousand_streams():
    firsts = {derive_rng_streams(0, i, s).integers(0, 2 ** 63) for s in (0, 1) for i in range(10_000)}
    assert len(firsts) == 20_000


def test_trajectories_do_not_depend_on_batching(small_shift_disc):
    model = small_shift_disc.model
    whole = draw_trajectories(model, 3, range(40), 0)
    parts = [draw_trajectories(model, 3, range(lo, lo + 10), 0) for lo in range(0, 40, 10)]
    assert np.array_equal(whole.x, np.concatenate([p.x for p in parts]))
    assert np.array_equal(whole.theta, np.concatenate([p.theta for p in parts]))


def test_fixed_hypothesis_draws(toy_model):
    traj = draw_trajectories(toy_model, 0, range(200), 1, hypothesis=1)
    assert np.all(traj.hypothesis == 1)
    assert set(np.unique(traj.theta)) <= set(toy_model.spec.thetas[1])
    assert set(np.unique(traj.x)) <= {0.0, 1.0}


def _toy_runner(toy_disc, toy_coeffs):
    policy = extract_policy(backward_induction(toy_disc, toy_coeffs), toy_disc)
    return GridPolicyRunner.from_discretization(toy_disc, policy), policy


def test_one_and_eight_threads_are_bit_identical(toy_model, toy_disc, toy_coeffs):
    runner, _ = _toy_runner(toy_disc, toy_coeffs)
    one = simulate(runner, toy_model, 5000, seed=11, threads=1, chunk=257)
    eight = simulate(runner, toy_model, 5000, seed=11, threads=8, chunk=257)
    assert one.to_json() == eight.to_json()


def test_stop_after_one_sample_has_unit_runlength(toy_model, toy_disc):
    N, G = toy_disc.N, toy_disc.grid.size
    stop = np.ones((N + 1, G), dtype=bool)
    stop[0] = False
    decision = np.zeros((N + 1, G), dtype=np.int64)
    runner = GridPolicyRunner(toy_model, toy_disc.grid, stop, decision, toy_disc.mean)
    rep = simulate(runner, toy_model, 3000, seed=2)
    assert rep.runlength == 1.0 and rep.runlength_se == 0.0
    # always deciding H_1 never rejects it and always rejects H_2
    assert rep.alpha[0] == 0.0 and rep.alpha[1] == 1.0


def test_toy_monte_carlo_agrees_with_the_recursions(toy_model, toy_disc, toy_coeffs):
    runner, policy = _toy_runner(toy_disc, toy_coeffs)
    perf = error_recursion(toy_disc, policy)
    rep = simulate(runner, toy_model, 20_000, seed=4)
    assert np.all(np.abs(rep.alpha - perf.alpha0) <= 4 * rep.alpha_se)
    assert np.all(np.abs(rep.beta - perf.beta0) <= 4 * rep.beta_se)
    assert np.all(np.abs(rep.runlength_given - perf.runlength_given) <= 4 * rep.runlength_given_se)
    assert abs(rep.runlength - perf.expected_runlength) <= 4 * rep.runlength_se
    assert rep.boundary_exit_rate == 0.0


def test_conditional_mode_runs_every_hypothesis(toy_model, toy_disc, toy_coeffs):
    runner, _ = _toy_runner(toy_disc, toy_coeffs)
    rep = simulate(runner, toy_model, 1000, seed=4, mode="conditional")
    assert list(rep.counts) == [1000, 1000]
    p = toy_model.hypotheses.probs
    assert rep.runlength == pytest.approx(float(np.sum(p * rep.runlength_given)))
    with pytest.raises(ValueError):
        simulate(runner, toy_model, 10, mode="posterior")
    with pytest.raises(ValueError):
        simulate(runner, toy_model, 0)


def test_aggregate_counts_squared_error_only_for_correct_decisions(toy_model):
    hyp = np.array([0, 0, 1, 1])
    theta = np.array([0.2, 0.4, 0.6, 0.8])
    out = Outcome(np.array([1, 2, 3, 4]), np.array([0, 1, 1, 1]), np.array([0.3, 0.0, 0.6, 0.5]),
                  np.zeros(4, dtype=bool))
    rep = aggregate(toy_model, hyp, theta, out, 4, 0, "prior")
    assert rep.alpha == pytest.approx([0.5, 0.0])
    assert rep.beta == pytest.approx([0.01 / 2, (0.0 + 0.09) / 2])
    assert rep.runlength_given == pytest.approx([1.5, 3.5])
    assert rep.runlength == pytest.approx(2.5)


def test_aggregate_rejects_unfinished_trajectories(toy_model):
    out = Outcome(np.array([1, -1]), np.zeros(2, dtype=np.int64), np.zeros(2), np.zeros(2, dtype=bool))
    with pytest.raises(RuntimeError):
        aggregate(toy_model, np.array([0, 1]), np.array([0.2, 0.6]), out, 2, 0, "prior")


def test_report_json_round_trip(toy_model, toy_disc, toy_coeffs):
    runner, _ = _toy_runner(toy_disc, toy_coeffs)
    rep = simulate(runner, toy_model, 500, seed=9)
    data = json.loads(rep.to_json())
    assert data["runs"] == 500 and data["seed"] == 9
    assert data["alpha"] == rep.alpha.tolist()
    assert "E[tau]=" in rep.summary()


def test_evaluator_reuses_trajectories(toy_model, toy_disc, toy_coeffs):
    ev = MonteCarloEvaluator(toy_model, 2000, seed=1)
    policy = extract_policy(backward_induction(toy_disc, toy_coeffs), toy_disc)
    a = ev(toy_disc, policy)
    b = ev(toy_disc, policy)
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.beta, b.beta)
    # same streams as a plain simulation with the same seed
    rep = simulate(GridPolicyRunner.from_discretization(toy_disc, policy), toy_model, 2000, seed=1)
    assert np.array_equal(a.alpha, rep.alpha)


def test_folded_runner_matches_full_grid_runner(small_ask_model):
    from seqjde.discretization import Discretization
    from seqjde.grid import GridSpec

    grid = GridSpec.from_bounds((-6, 6, 24), (0, 12, 21))
    c = CostCoefficients(np.full(4, 40.0), np.full(4, 60.0))
    reps = []
    for fold in (False, True):
        disc = Discretization(small_ask_model, grid, fold=fold)
        policy = extract_policy(backward_induction(disc, c), disc)
        reps.append(simulate(GridPolicyRunner.from_discretization(disc, policy), small_ask_model, 2000, seed=5))
    assert np.array_equal(reps[0].alpha, reps[1].alpha)
    assert np.array_equal(reps[0].runlength_given, reps[1].runlength_given)
    assert np.allclose(reps[0].beta, reps[1].beta, rtol=1e-10)


def test_msprt_runner_stops_by_the_horizon(small_shift_disc):
    model = small_shift_disc.model
    cfg = MsprtConfig.from_levels([0.05] * 3, model.horizon)
    rep = simulate(MsprtRunner(model, cfg, small_shift_disc.grid), model, 2000, seed=3)
    assert 1 <= rep.runlength <= model.horizon
    assert np.all(rep.alpha <= 1)
    with pytest.raises(ValueError):
        MsprtRunner(model, MsprtConfig.from_levels([0.05] * 3, model.horizon + 1))
