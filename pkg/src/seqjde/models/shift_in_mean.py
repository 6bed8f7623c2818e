"""Gaussian shift-in-mean model with a known noise variance.

Each hypothesis places its own prior on the mean ``mu``; posteriors are
obtained by trapezoidal quadrature over a fixed ``mu`` grid.  The sample mean
is a sufficient statistic, so ``t = (xbar,)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import stats
from scipy.special import logsumexp

from ..grid import Axis, trapezoid_weights
from .base import HypothesisSet, SequentialModel

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MeanPrior:
    """Prior on the mean under one hypothesis.

    ``kind="gamma"``: ``mu = loc + sign * G`` with ``G ~ Gamma(shape, scale)``.
    ``kind="uniform"``: ``mu ~ U(low, high)``.
    """

    kind: str
    loc: float = 0.0
    shape: float = 1.0
    scale: float = 1.0
    sign: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gamma", "uniform"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "gamma" and (self.shape <= 0 or self.scale <= 0 or self.sign not in (-1.0, 1.0)):
            raise ValueError("gamma prior needs shape, scale > 0 and sign in {-1, +1}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform prior needs low < high")

    def pdf(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if self.kind == "uniform":
            return np.where((mu >= self.low) & (mu < self.high), 1.0 / (self.high - self.low), 0.0)
        return stats.gamma.pdf(self.sign * (mu - self.loc), self.shape, scale=self.scale)

    def cdf(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if self.kind == "uniform":
            return np.clip((mu - self.low) / (self.high - self.low), 0.0, 1.0)
        if self.sign > 0:
            return stats.gamma.cdf(mu - self.loc, self.shape, scale=self.scale)
        return stats.gamma.sf(self.loc - mu, self.shape, scale=self.scale)

    def cell_masses(self, axis: Axis) -> np.ndarray:
        """Prior mass of the cell around each node; end cells are half cells."""
        h = axis.spacing
        edges = np.concatenate([[axis.lower], axis.nodes[:-1] + 0.5 * h, [axis.upper]])
        return np.maximum(np.diff(self.cdf(edges)), 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        return self.loc + self.sign * rng.gamma(self.shape, self.scale, size)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        return self.loc + self.sign * self.shape * self.scale

    def mirrored(self) -> "MeanPrior":
        if self.kind == "uniform":
            return MeanPrior("uniform", low=-self.high, high=-self.low)
        return MeanPrior("gamma", loc=-self.loc, shape=self.shape, scale=self.scale, sign=-self.sign)


@dataclass(frozen=True)
class ShiftInMeanSpec:
    sigma2: float = 4.0
    mu_grid: Axis = Axis(-16.0, 16.0, 7000)
    priors: tuple[MeanPrior, ...] = field(
        default_factory=lambda: (
            MeanPrior("gamma", loc=1.3, shape=1.7, scale=1.0, sign=-1.0),
            MeanPrior("uniform", low=-1.0, high=1.0),
            MeanPrior("gamma", loc=1.3, shape=1.7, scale=1.0, sign=1.0),
        )
    )
    hyp_prior: tuple[float, ...] | None = None
    horizon: int = 100
    x_grid: Axis = Axis(-15.0, 15.0, 6000)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


def build_default_spec() -> ShiftInMeanSpec:
    """Three hypotheses: ``1.3 - G``, ``U(-1, 1)`` and ``1.3 + G`` with ``G ~ Gamma(1.7, 1)``."""
    return ShiftInMeanSpec()


def build_symmetric_spec() -> ShiftInMeanSpec:
    """Like :func:`build_default_spec` but with the first prior mirrored to ``-1.3 - G``.

    This variant is invariant under ``xbar -> -xbar`` with hypotheses 1 and 3
    swapped, and is the one whose benchmark behaviour matches the published
    tables (the default prior on the first mean overlaps the uniform one).
    """
    return ShiftInMeanSpec(priors=(
        MeanPrior("gamma", loc=-1.3, shape=1.7, scale=1.0, sign=-1.0),
        MeanPrior("uniform", low=-1.0, high=1.0),
        MeanPrior("gamma", loc=1.3, shape=1.7, scale=1.0, sign=1.0),
    ))


@numba.njit(cache=True)
def _mean_quadrature(xbar, n, sigma2, mu, logprior, support_lo, support_hi):
    """log Z, mean and variance of mu for each statistic value and hypothesis.

    ``logprior`` (M, K) already contains the log trapezoid weights.  Only the
    window of the mu grid where the likelihood is within exp(-100) of its
    peak is visited; the peak is clipped into the prior support first.
    """
    P = xbar.shape[0]
    M = logprior.shape[0]
    logz = np.empty((P, M))
    mean = np.empty((P, M))
    var = np.empty((P, M))
    prec = n / sigma2
    const = -0.5 * (LOG_2PI + np.log(sigma2 / n))
    mu0 = mu[0]
    dmu = mu[1] - mu[0]
    radius = np.sqrt(200.0 / prec)
    for p in range(P):
        for m in range(M):
            c = min(max(xbar[p], mu[support_lo[m]]), mu[support_hi[m] - 1])
            lo = max(support_lo[m], int(np.floor((c - radius - mu0) / dmu)))
            hi = min(support_hi[m], int(np.ceil((c + radius - mu0) / dmu)) + 1)
            top = -np.inf
            for k in range(lo, hi):
                d = xbar[p] - mu[k]
                e = logprior[m, k] - 0.5 * prec * d * d
                if e > top:
                    top = e
            s0 = 0.0
            s1 = 0.0
            for k in range(lo, hi):
                d = xbar[p] - mu[k]
                e = logprior[m, k] - 0.5 * prec * d * d - top
                if e > -60.0:
                    w = np.exp(e)
                    s0 += w
                    s1 += w * mu[k]
            mbar = s1 / s0
            s2 = 0.0
            for k in range(lo, hi):
                d = xbar[p] - mu[k]
                e = logprior[m, k] - 0.5 * prec * d * d - top
                if e > -60.0:
                    dm = mu[k] - mbar
                    s2 += np.exp(e) * dm * dm
            logz[p, m] = const + top + np.log(s0)
            mean[p, m] = mbar
            var[p, m] = s2 / s0
    return logz, mean, var


class ShiftInMeanModel(SequentialModel):
    stat_dim = 1

    def __init__(self, spec: ShiftInMeanSpec | None = None, table_step: float = 0.01):
        self.spec = spec = spec or build_default_spec()
        M = len(spec.priors)
        self.hypotheses = HypothesisSet(spec.hyp_prior or tuple([1.0 / M] * M))
        self.horizon = spec.horizon
        self.mu = spec.mu_grid.nodes
        w = trapezoid_weights(spec.mu_grid)
        # exact prior mass per grid cell keeps the quadrature second order at
        # support edges that fall between nodes
        cells = np.stack([p.cell_masses(spec.mu_grid) for p in spec.priors])
        mass = cells.sum(axis=1)
        if np.any(mass <= 0):
            raise ValueError("a mean prior has no mass on the mu grid")
        # truncated to the mu grid and renormalized
        self.prior_weights = cells / mass[:, None]
        self.prior_table = self.prior_weights / w[None, :]
        with np.errstate(divide="ignore"):
            self._logprior = np.log(self.prior_weights)
        self._support = [np.flatnonzero(row > 0) for row in cells]
        self._lo = np.array([s[0] for s in self._support], dtype=np.int64)
        self._hi = np.array([s[-1] + 1 for s in self._support], dtype=np.int64)
        self.mirror_perm = self._detect_mirror()
        lim = max(abs(spec.mu_grid.lower), abs(spec.mu_grid.upper))
        self._table_axis = Axis(-lim, lim, int(round(2 * lim / table_step)) + 1)

    def _detect_mirror(self):
        perm = np.arange(self.M)[::-1]
        p = self.hypotheses.probs
        if not np.allclose(self.mu, -self.mu[::-1], atol=1e-12) or not np.allclose(p, p[perm], rtol=0, atol=1e-15):
            return None
        for m in range(self.M):
            if not np.allclose(self.prior_table[m][::-1], self.prior_table[perm[m]], rtol=1e-9, atol=1e-12):
                return None
        return perm

    # statistic

    def initial_statistic(self):
        return np.zeros(1)

    def transition(self, n, t, x):
        xbar = np.atleast_2d(np.asarray(t, dtype=float))[:, 0]
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            xbar = xbar[:, None]
        return ((n * xbar + x) / (n + 1))[..., None]

    def batch_statistic(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.array([xs.mean() if xs.size else 0.0])

    # posteriors

    def _quad(self, n, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if n == 0:
            mean = self.prior_weights @ self.mu
            var = np.sum(self.prior_weights * (self.mu[None, :] - mean[:, None]) ** 2, axis=1)
            P = t.shape[0]
            return np.zeros((P, self.M)), np.tile(mean, (P, 1)), np.tile(var, (P, 1))
        return _mean_quadrature(np.ascontiguousarray(t[:, 0]), float(n), self.spec.sigma2,
                                self.mu, self._logprior, self._lo, self._hi)

    def log_evidence(self, n, t):
        return self._quad(n, t)[0]

    def param_moments(self, n, t):
        _, mean, var = self._quad(n, t)
        return mean, var

    @lru_cache(maxsize=None)
    def log_evidence_table(self, n: int) -> np.ndarray:
        """log p(xbar_n | H_m) tabulated on a fine axis spanning the mu grid; shape (K, M)."""
        return self.log_evidence(n, self._table_axis.nodes[:, None])

    def log_evidence_fast(self, n, t):
        """Linear interpolation of :meth:`log_evidence_table`, clamped at the table edges."""
        return self._interp_table(self.log_evidence_table(n), np.atleast_2d(t)[:, 0])

    def _interp_table(self, tab, xbar):
        ax = self._table_axis
        u = np.clip((xbar - ax.lower) / ax.spacing, 0.0, ax.count - 1)
        k = np.minimum(np.floor(u).astype(np.int64), ax.count - 2)
        f = u - k
        if tab.ndim == 2:
            f = f[..., None]
        return (1.0 - f) * tab[k] + f * tab[k + 1]

    @lru_cache(maxsize=None)
    def log_mixture_table(self, n: int) -> np.ndarray:
        return logsumexp(self.log_evidence_table(n) + np.log(self.hypotheses.probs), axis=1)

    def log_marginal_predictive(self, n, t, x):
        # the row factor 1 / p(t_n) is dropped
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.broadcast_to(np.asarray(x, dtype=float), (t.shape[0], np.shape(x)[-1]))
        xi = self.transition(n, t, x)[..., 0]
        out = self._interp_table(self.log_mixture_table(n + 1), xi)
        if n > 0:
            s2 = self.spec.sigma2 * (n + 1) / n
            out = out - 0.5 * (x - t[:, :1]) ** 2 / s2
        return out

    def log_predictive(self, n, t, x):
        # p(x | H_m, t_n) = N(x; xbar, sigma2 (n+1)/n) Z_m(n+1, xi) / Z_m(n, xbar), which
        # follows from completing the square in the likelihood of the n+1 samples.
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.broadcast_to(np.asarray(x, dtype=float), (t.shape[0], np.shape(x)[-1]))
        xi = self.transition(n, t, x)[..., 0]
        P, J = xi.shape
        lz_next = self.log_evidence_fast(n + 1, xi.reshape(-1, 1)).reshape(P, J, self.M)
        if n == 0:
            return lz_next
        s2 = self.spec.sigma2 * (n + 1) / n
        gauss = -0.5 * (LOG_2PI + np.log(s2)) - 0.5 * (x - t[:, :1]) ** 2 / s2
        lz_now = self.log_evidence_fast(n, t)
        return gauss[:, :, None] + lz_next - lz_now[:, None, :]

    def observation_nodes(self):
        ax = self.spec.x_grid
        return ax.nodes, trapezoid_weights(ax)

    def in_domain(self, t):
        t = np.atleast_2d(t)
        return np.isfinite(t[:, 0])

    # sampling

    def sample_parameter(self, rng, m, size):
        return self.spec.priors[m].sample(rng, size)

    def sample_observations(self, rng, m, theta, n):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return theta[:, None] + np.sqrt(self.spec.sigma2) * rng.standard_normal((theta.size, n))
