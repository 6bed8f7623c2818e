"""Seeded simulation of sequential schemes and empirical performance estimates.

Every trajectory owns a random stream derived from ``(master seed, stream,
index)``, so a run is bit-identical regardless of how trajectories are split
across worker threads.  Trajectories are processed in fixed-size chunks and
aggregated in index order.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .bellman import Policy
from .design import ErrorEstimate
from .discretization import Discretization
from .models.base import SequentialModel
from .msprt import MsprtConfig, msprt_decide, msprt_estimate

CHUNK = 2048


def derive_rng_streams(master_seed: int, trajectory_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one trajectory, keyed by seed, stream and index."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(trajectory_index)))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class Trajectories:
    hypothesis: np.ndarray  # (B,)
    theta: np.ndarray  # (B,)
    x: np.ndarray  # (B, N)


def draw_trajectories(model: SequentialModel, seed: int, indices, stream: int, hypothesis: Optional[int] = None) -> Trajectories:
    """Hypothesis, parameter and the full observation sequence of each trajectory."""
    N = model.horizon
    cum = np.cumsum(model.hypotheses.probs)
    hyp = np.empty(len(indices), dtype=np.int64)
    theta = np.empty(len(indices))
    x = np.empty((len(indices), N))
    for k, idx in enumerate(indices):
        rng = derive_rng_streams(seed, idx, stream)
        if hypothesis is None:
            m = min(int(np.searchsorted(cum, rng.random(), side="right")), cum.size - 1)
        else:
            m = hypothesis
        th = model.sample_parameter(rng, m, 1)
        hyp[k] = m
        theta[k] = th[0]
        x[k] = model.sample_observations(rng, m, th, N)[0]
    return Trajectories(hyp, theta, x)


def full_grid_policy(disc: Discretization, policy: Policy):
    """Stop mask, decision map and estimates expanded to every node of the grid."""
    N = disc.N
    stop = np.stack([disc.unfold(policy.stop[n]) for n in range(N + 1)])
    decision = np.stack([disc.unfold(policy.decision[n], labels=True) for n in range(N + 1)])
    if not disc.fold:
        return stop, decision, policy.estimate
    # the estimated parameter need not be invariant under reflection
    pts = disc.grid.points()
    est = np.empty((N + 1, disc.grid.size, disc.M))
    est[0] = policy.estimate[0, 0]
    for n in range(1, N + 1):
        est[n] = disc.model.param_moments(n, pts)[0]
    return stop, decision, est


@dataclass
class Outcome:
    """Per-trajectory results of running a scheme."""

    stop_time: np.ndarray
    decision: np.ndarray
    estimate: np.ndarray
    exited: np.ndarray


class GridPolicyRunner:
    """Executes a grid policy: nearest node for stop and decision, interpolation for the estimate.

    Statistics outside the grid use the boundary node for stop and decision
    and the model's posterior mean for the estimate.

    Tables are on the full grid: ``stop`` and ``decision`` (N+1, G),
    ``estimate`` (N+1, G, M); stage 0 is read from node 0.
    """

    def __init__(self, model: SequentialModel, grid, stop, decision, estimate):
        self.model = model
        self.grid = grid
        self.stop = np.asarray(stop, dtype=bool)
        self.decision = np.asarray(decision, dtype=np.int64)
        self.estimate = np.asarray(estimate, dtype=float)
        self.N = self.stop.shape[0] - 1

    @classmethod
    def from_discretization(cls, disc: Discretization, policy: Policy) -> "GridPolicyRunner":
        stop, decision, estimate = full_grid_policy(disc, policy)
        return cls(disc.model, disc.grid, stop, decision, estimate)

    def run(self, traj: Trajectories) -> Outcome:
        B = traj.x.shape[0]
        model = self.model
        t = np.tile(model.initial_statistic(), (B, 1))
        tau = np.full(B, -1, dtype=np.int64)
        dec = np.zeros(B, dtype=np.int64)
        est = np.zeros(B)
        exited = np.zeros(B, dtype=bool)
        active = np.ones(B, dtype=bool)
        for n in range(self.N + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            tn = t[idx]
            if n == 0:
                node = np.zeros(idx.size, dtype=np.int64)
                out = np.zeros(idx.size, dtype=bool)
            else:
                node, out = self.grid.nearest_index(tn)
                exited[idx] |= out
            stop = self.stop[n, node]
            if np.any(stop):
                s = idx[stop]
                d = self.decision[n, node[stop]]
                tau[s] = n
                dec[s] = d
                if n == 0:
                    est[s] = self.estimate[0, 0, d]
                else:
                    ci, cw = self.grid.corner_weights(tn[stop])
                    est[s] = np.sum(self.estimate[n][ci, d[:, None]] * cw, axis=1)
                    # off the grid the table would be clamped; use the posterior mean itself
                    off = out[stop]
                    if np.any(off):
                        mean = model.param_moments(n, tn[stop][off])[0]
                        est[s[off]] = mean[np.arange(off.sum()), d[off]]
                active[s] = False
            go = idx[~stop]
            if n < self.N and go.size:
                t[go] = model.transition(n, t[go], traj.x[go, n])
        return Outcome(tau, dec, est, exited)


class MsprtRunner:
    """Executes the truncated matrix SPRT on the exact statistic."""

    def __init__(self, model: SequentialModel, config: MsprtConfig, grid=None):
        if config.horizon > model.horizon:
            raise ValueError("test horizon exceeds the model horizon")
        self.model = model
        self.config = config
        self.grid = grid

    def run(self, traj: Trajectories) -> Outcome:
        B = traj.x.shape[0]
        model = self.model
        t = np.tile(model.initial_statistic(), (B, 1))
        tau = np.full(B, -1, dtype=np.int64)
        dec = np.zeros(B, dtype=np.int64)
        est = np.zeros(B)
        exited = np.zeros(B, dtype=bool)
        active = np.ones(B, dtype=bool)
        for n in range(self.config.horizon):
            go = np.flatnonzero(active)
            t[go] = model.transition(n, t[go], traj.x[go, n])
            tn = t[go]
            if self.grid is not None:
                exited[go] |= self.grid.nearest_index(tn)[1]
            stop, d = msprt_decide(model, n + 1, tn, self.config)
            s = go[stop]
            if s.size:
                tau[s] = n + 1
                dec[s] = d[stop]
                est[s] = msprt_estimate(model, n + 1, tn[stop], d[stop])
                active[s] = False
            if not np.any(active):
                break
        return Outcome(tau, dec, est, exited)


@dataclass
class EmpiricalReport:
    alpha: np.ndarray
    alpha_se: np.ndarray
    beta: np.ndarray
    beta_se: np.ndarray
    runlength_given: np.ndarray
    runlength_given_se: np.ndarray
    runlength: float
    runlength_se: float
    counts: np.ndarray
    runs: int
    seed: int
    mode: str
    boundary_exit_rate: float

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def as_errors(self) -> ErrorEstimate:
        return ErrorEstimate(self.alpha, self.beta, self.alpha_se, self.beta_se)

    def summary(self) -> str:
        f = lambda v: np.array2string(np.asarray(v), precision=6, separator=", ")  # noqa: E731
        return (f"runs={self.runs} seed={self.seed} mode={self.mode}\n"
                f"alpha={f(self.alpha)} (se {f(self.alpha_se)})\n"
                f"beta={f(self.beta)} (se {f(self.beta_se)})\n"
                f"E[tau|H]={f(self.runlength_given)}\n"
                f"E[tau]={self.runlength:.6g} (se {self.runlength_se:.3g}) boundary exits={self.boundary_exit_rate:.3g}")


def _plan(model: SequentialModel, runs: int, mode: str):
    """List of (stream, fixed hypothesis, count) blocks."""
    if mode == "prior":
        return [(0, None, runs)]
    if mode == "conditional":
        return [(1 + m, m, runs) for m in range(model.M)]
    raise ValueError(f"unknown hypothesis mode {mode!r}")


def simulate(
    runner,
    model: SequentialModel,
    runs: int,
    seed: int = 0,
    mode: str = "prior",
    threads: int = 1,
    chunk: int = CHUNK,
) -> EmpiricalReport:
    """Run ``runs`` trajectories (per hypothesis in conditional mode) and aggregate."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    jobs = []
    for stream, m, count in _plan(model, runs, mode):
        for lo in range(0, count, chunk):
            jobs.append((stream, m, range(lo, min(lo + chunk, count))))

    def work(job):
        stream, m, idx = job
        traj = draw_trajectories(model, seed, idx, stream, m)
        return traj.hypothesis, traj.theta, runner.run(traj)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    hyp = np.concatenate([r[0] for r in results])
    theta = np.concatenate([r[1] for r in results])
    out = Outcome(*[np.concatenate([getattr(r[2], f) for r in results])
                    for f in ("stop_time", "decision", "estimate", "exited")])
    return aggregate(model, hyp, theta, out, runs, seed, mode)


def aggregate(model, hyp, theta, out: Outcome, runs: int, seed: int, mode: str) -> EmpiricalReport:
    if np.any(out.stop_time < 0):
        raise RuntimeError("a trajectory ran past the horizon without stopping")
    M = model.M
    correct = out.decision == hyp
    # squared error counts only when the decision is right
    sq = np.where(correct, (theta - out.estimate) ** 2, 0.0)
    tau = out.stop_time.astype(float)
    counts = np.bincount(hyp, minlength=M)
    alpha = np.zeros(M)
    alpha_se = np.zeros(M)
    beta = np.zeros(M)
    beta_se = np.zeros(M)
    rl = np.zeros(M)
    rl_se = np.zeros(M)
    for m in range(M):
        sel = hyp == m
        k = int(counts[m])
        if k == 0:
            alpha[m] = beta[m] = rl[m] = np.nan
            continue
        wrong = int(np.count_nonzero(~correct[sel]))
        alpha[m] = wrong / k
        alpha_se[m] = np.sqrt(alpha[m] * (1.0 - alpha[m]) / k)
        beta[m] = float(np.mean(sq[sel]))
        rl[m] = float(np.mean(tau[sel]))
        if k > 1:
            beta_se[m] = float(np.std(sq[sel], ddof=1)) / np.sqrt(k)
            rl_se[m] = float(np.std(tau[sel], ddof=1)) / np.sqrt(k)
    if mode == "prior":
        overall = float(np.mean(tau))
        overall_se = float(np.std(tau, ddof=1) / np.sqrt(tau.size)) if tau.size > 1 else 0.0
    else:
        p = model.hypotheses.probs
        overall = float(np.sum(p * rl))
        overall_se = float(np.sqrt(np.sum((p * rl_se) ** 2)))
    exit_rate = float(np.count_nonzero(out.exited)) / out.exited.size
    return EmpiricalReport(alpha, alpha_se, beta, beta_se, rl, rl_se, overall, overall_se,
                           counts, int(runs), int(seed), mode, exit_rate)


class MonteCarloEvaluator:
    """Error estimates for the ascent from simulated trajectories.

    The trajectories are drawn once and reused at every iteration, so
    successive gradients differ only through the policy.
    """

    def __init__(self, model: SequentialModel, runs: int, seed: int = 0, threads: int = 1, chunk: int = CHUNK):
        self.model = model
        self.runs = runs
        self.seed = seed
        self.threads = threads
        self.chunk = chunk
        self._cache = None

    def _trajectories(self):
        if self._cache is None:
            blocks = [draw_trajectories(self.model, self.seed, range(lo, min(lo + self.chunk, self.runs)), 0)
                      for lo in range(0, self.runs, self.chunk)]
            self._cache = blocks
        return self._cache

    def report(self, disc: Discretization, policy: Policy) -> EmpiricalReport:
        runner = GridPolicyRunner.from_discretization(disc, policy)
        blocks = self._trajectories()
        outs = [runner.run(b) for b in blocks]
        hyp = np.concatenate([b.hypothesis for b in blocks])
        theta = np.concatenate([b.theta for b in blocks])
        out = Outcome(*[np.concatenate([getattr(o, f) for o in outs])
                        for f in ("stop_time", "decision", "estimate", "exited")])
        return aggregate(self.model, hyp, theta, out, self.runs, self.seed, "prior")

    def __call__(self, disc: Discretization, policy: Policy) -> ErrorEstimate:
        return self.report(disc, policy).as_errors()
