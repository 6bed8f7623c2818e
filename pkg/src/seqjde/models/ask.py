"""Amplitude-shift-keying symbols in Gaussian noise of unknown, inverse-Gamma power.

Under hypothesis ``m`` the observations are ``x_k = A_m + w_k`` with
``w_k ~ N(0, s2)`` and ``s2 ~ InvGamma(a, b)``.  The estimated parameter is
the noise power ``s2``.  The statistic is ``t = (xbar, s2bar)``, the sample
mean and the (biased) sample variance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..grid import Axis, trapezoid_weights
from .base import HypothesisSet, SequentialModel

HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class AskSpec:
    symbols: tuple[float, ...] = (-2.0, -1.0, 1.0, 2.0)
    a: float = 2.1
    b: float = 0.9
    hyp_prior: tuple[float, ...] | None = None
    horizon: int = 50
    x_grid: Axis = Axis(-25.0, 25.0, 2100)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("symbols must be pairwise distinct")
        if not self.a > 2:
            raise ValueError("prior shape a must exceed 2 for a finite prior variance")
        if not self.b > 0:
            raise ValueError("prior scale b must be positive")


class AskModel(SequentialModel):
    stat_dim = 2

    def __init__(self, spec: AskSpec | None = None):
        self.spec = spec = spec or AskSpec()
        M = len(spec.symbols)
        self.hypotheses = HypothesisSet(spec.hyp_prior or tuple([1.0 / M] * M))
        self.horizon = spec.horizon
        self.symbols = np.asarray(spec.symbols, dtype=float)
        order = np.argsort(self.symbols)
        perm = np.empty(M, dtype=np.int64)
        perm[order] = order[::-1]
        p = self.hypotheses.probs
        symmetric = np.allclose(self.symbols[perm], -self.symbols) and np.allclose(p[perm], p, rtol=0, atol=1e-15)
        self.mirror_perm = perm if symmetric else None

    def posterior_params(self, n: int, t) -> tuple[float, np.ndarray]:
        """Shape ``a + n/2`` and per-hypothesis scales ``b + n/2 (s2bar + (xbar - A_m)^2)``."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        shape = self.spec.a + 0.5 * n
        scale = self.spec.b + 0.5 * n * (t[:, 1:2] + (t[:, 0:1] - self.symbols[None, :]) ** 2)
        return shape, scale

    def initial_statistic(self):
        return np.zeros(2)

    def transition(self, n, t, x):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float)
        xbar, s2 = t[:, 0], t[:, 1]
        if x.ndim == 2:
            xbar, s2 = xbar[:, None], s2[:, None]
        new_mean = (n * xbar + x) / (n + 1)
        new_var = (n * s2 + n * (x - xbar) ** 2 / (n + 1)) / (n + 1)
        return np.stack([new_mean, new_var], axis=-1)

    def batch_statistic(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return np.zeros(2)
        return np.array([xs.mean(), xs.var()])

    def in_domain(self, t):
        t = np.atleast_2d(t)
        return np.isfinite(t).all(axis=1) & (t[:, 1] >= 0)

    def log_evidence(self, n, t):
        shape, scale = self.posterior_params(n, t)
        a, b = self.spec.a, self.spec.b
        return a * np.log(b) - shape * np.log(scale) + gammaln(shape) - gammaln(a)

    def param_moments(self, n, t):
        shape, scale = self.posterior_params(n, t)
        mean = scale / (shape - 1.0)
        var = scale**2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        return mean, var

    def log_predictive(self, n, t, x):
        shape, scale = self.posterior_params(n, t)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = np.broadcast_to(x, (scale.shape[0], x.size))
        shape_new = shape + 0.5
        scale_new = scale[:, None, :] + 0.5 * (x[:, :, None] - self.symbols[None, None, :]) ** 2
        return (-HALF_LOG_2PI + shape * np.log(scale[:, None, :]) - gammaln(shape)
                + gammaln(shape_new) - shape_new * np.log(scale_new))

    def observation_nodes(self):
        ax = self.spec.x_grid
        return ax.nodes, trapezoid_weights(ax)

    def sample_parameter(self, rng, m, size):
        return self.spec.b / rng.gamma(self.spec.a, 1.0, size)

    def sample_observations(self, rng, m, theta, n):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.symbols[m] + np.sqrt(theta)[:, None] * rng.standard_normal((theta.size, n))
