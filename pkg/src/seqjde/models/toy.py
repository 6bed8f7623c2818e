"""Binary observations with a finitely supported success probability.

Every expectation in this model is a finite sum, which makes it the exact
reference for the grid machinery: the statistic (number of ones) always
lands on integer grid nodes and the observation "quadrature" is the pmf.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .base import HypothesisSet, SequentialModel


@dataclass(frozen=True)
class ToySpec:
    # support points and weights of the success probability under each hypothesis
    thetas: tuple[tuple[float, ...], ...] = ((0.2, 0.45), (0.6, 0.85))
    weights: tuple[tuple[float, ...], ...] = ((0.6, 0.4), (0.5, 0.5))
    hyp_prior: tuple[float, ...] = (0.45, 0.55)
    horizon: int = 4

    def __post_init__(self):
        if len(self.thetas) != len(self.weights):
            raise ValueError("thetas and weights must have one entry per hypothesis")
        for th, w in zip(self.thetas, self.weights):
            if len(th) != len(w) or not all(0.0 < v < 1.0 for v in th):
                raise ValueError("success probabilities must lie in (0, 1)")
            if abs(sum(w) - 1.0) > 1e-12 or min(w) <= 0:
                raise ValueError("support weights must be positive and sum to one")


class BinaryToyModel(SequentialModel):
    stat_dim = 1

    def __init__(self, spec: ToySpec | None = None):
        self.spec = spec = spec or ToySpec()
        self.hypotheses = HypothesisSet(tuple(spec.hyp_prior))
        self.horizon = spec.horizon
        K = max(len(th) for th in spec.thetas)
        # pad to a rectangular table; padded entries carry zero weight
        self.theta = np.full((self.M, K), 0.5)
        self.logw = np.full((self.M, K), -np.inf)
        for m, (th, w) in enumerate(zip(spec.thetas, spec.weights)):
            self.theta[m, : len(th)] = th
            self.logw[m, : len(w)] = np.log(w)

    def initial_statistic(self):
        return np.zeros(1)

    def transition(self, n, t, x):
        k = np.atleast_2d(np.asarray(t, dtype=float))[:, 0]
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            k = k[:, None]
        return (k + x)[..., None]

    def batch_statistic(self, xs):
        return np.array([float(np.sum(xs))])

    def _log_joint(self, n, t):
        k = np.atleast_2d(np.asarray(t, dtype=float))[:, 0]
        lt, l1t = np.log(self.theta), np.log1p(-self.theta)
        return self.logw[None] + k[:, None, None] * lt[None] + (n - k)[:, None, None] * l1t[None]

    def log_evidence(self, n, t):
        return logsumexp(self._log_joint(n, t), axis=2)

    def param_moments(self, n, t):
        lj = self._log_joint(n, t)
        post = np.exp(lj - logsumexp(lj, axis=2, keepdims=True))
        mean = np.sum(post * self.theta[None], axis=2)
        var = np.sum(post * (self.theta[None] - mean[..., None]) ** 2, axis=2)
        return mean, np.maximum(var, 0.0)

    def log_predictive(self, n, t, x):
        mean, _ = self.param_moments(n, t)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = np.broadcast_to(x, (mean.shape[0], x.size))
        return np.where(x[..., None] > 0.5, np.log(mean)[:, None, :], np.log1p(-mean)[:, None, :])

    def observation_nodes(self):
        return np.array([0.0, 1.0]), np.array([1.0, 1.0])

    def in_domain(self, t):
        t = np.atleast_2d(t)
        return np.isfinite(t[:, 0]) & (t[:, 0] >= 0)

    def sample_parameter(self, rng, m, size):
        th = np.asarray(self.spec.thetas[m])
        return rng.choice(th, size=size, p=np.asarray(self.spec.weights[m]))

    def sample_observations(self, rng, m, theta, n):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return (rng.random((theta.size, n)) < theta[:, None]).astype(float)
