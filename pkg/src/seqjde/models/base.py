"""Common interface for Bayesian sequential models."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp


class DomainError(ValueError):
    """A statistic state lies outside the model's declared domain."""


class HorizonExceededError(ValueError):
    """Attempt to update a statistic that is already at the truncation horizon."""


class NumericalUnderflowError(ArithmeticError):
    """Posterior mass underflowed under every hypothesis."""


@dataclass(frozen=True)
class HypothesisSet:
    prior: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.prior, dtype=float)
        if p.size < 2:
            raise ValueError("need at least two hypotheses")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"priors must be positive and sum to one, got {self.prior}")

    @classmethod
    def uniform(cls, M: int) -> "HypothesisSet":
        return cls(tuple([1.0 / M] * M))

    @property
    def M(self) -> int:
        return len(self.prior)

    @property
    def probs(self) -> np.ndarray:
        return np.asarray(self.prior, dtype=float)


@dataclass(frozen=True)
class StatisticState:
    n: int
    t: tuple[float, ...]

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)


@dataclass(frozen=True)
class PosteriorSummary:
    hyp_probs: np.ndarray
    param_mean: np.ndarray
    param_var: np.ndarray


class SequentialModel(ABC):
    """A hypothesis set with a sufficient statistic and its posterior quantities.

    Subclasses implement vectorized hooks working on arrays of statistic
    values at a common sample count ``n``; the scalar-state methods below are
    thin wrappers around them.
    """

    hypotheses: HypothesisSet
    horizon: int
    stat_dim: int
    # Permutation of hypothesis indices under reflection of the first
    # statistic coordinate, or None when the model has no such symmetry.
    mirror_perm: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.hypotheses.M

    # statistic dynamics

    @abstractmethod
    def initial_statistic(self) -> np.ndarray:
        """Statistic value before any observation (shape ``(stat_dim,)``)."""

    @abstractmethod
    def transition(self, n: int, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Next statistic for states ``t`` (P, d) at count ``n`` and observations ``x``.

        ``x`` broadcasts against the leading axes; the result has shape
        ``broadcast(P, x) + (d,)``.
        """

    @abstractmethod
    def batch_statistic(self, xs) -> np.ndarray:
        """Statistic of a raw observation sequence."""

    # posterior quantities

    @abstractmethod
    def log_evidence(self, n: int, t: np.ndarray) -> np.ndarray:
        """log p(t_n | H_m) up to an additive constant shared by all m; shape (P, M)."""

    @abstractmethod
    def param_moments(self, n: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the parameter under each hypothesis, (P, M) each."""

    @abstractmethod
    def log_predictive(self, n: int, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """log p(x | H_m, t_n) on a (P, J) grid of states by observations; shape (P, J, M)."""

    @abstractmethod
    def observation_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights used to integrate over the next observation."""

    def in_domain(self, t: np.ndarray) -> np.ndarray:
        return np.all(np.isfinite(np.atleast_2d(t)), axis=1)

    def hyp_probs(self, n: int, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(t)
        logw = self.log_evidence(n, t) + np.log(self.hypotheses.probs)
        top = np.max(logw, axis=1, keepdims=True)
        if np.any(~np.isfinite(top)) or np.any(top < np.log(1e-300)):
            raise NumericalUnderflowError("posterior mass underflowed under every hypothesis")
        return np.exp(logw - logsumexp(logw, axis=1, keepdims=True))

    def log_marginal_predictive(self, n: int, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """log p(x | t_n) on a (P, J) grid, up to a per-row additive constant."""
        t = np.atleast_2d(t)
        logp = self.log_predictive(n, t, x) + np.log(self.hyp_probs(n, t))[:, None, :]
        return logsumexp(logp, axis=2)

    def log_evidence_fast(self, n: int, t: np.ndarray) -> np.ndarray:
        """Same as :meth:`log_evidence`; models may trade exactness for speed here."""
        return self.log_evidence(n, t)

    def predictive(self, n: int, t: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Marginal and per-hypothesis predictive densities on a (P, J) grid."""
        t = np.atleast_2d(t)
        cond = np.exp(self.log_predictive(n, t, x))
        probs = self.hyp_probs(n, t)
        return np.einsum("pjm,pm->pj", cond, probs), cond

    # sampling

    @abstractmethod
    def sample_parameter(self, rng: np.random.Generator, m: int, size: int) -> np.ndarray:
        """Draw parameters from the prior of hypothesis ``m``."""

    @abstractmethod
    def sample_observations(self, rng: np.random.Generator, m: int, theta: np.ndarray, n: int) -> np.ndarray:
        """Draw ``n`` observations for each parameter in ``theta``; shape (len(theta), n)."""

    # scalar-state convenience API

    def initial_state(self) -> StatisticState:
        return StatisticState(0, tuple(self.initial_statistic().tolist()))

    def update_statistic(self, state: StatisticState, x: float) -> StatisticState:
        if state.n >= self.horizon:
            raise HorizonExceededError(f"state already at horizon n={state.n}")
        nxt = self.transition(state.n, state.vector[None, :], np.array([[x]]))
        return StatisticState(state.n + 1, tuple(nxt.reshape(-1).tolist()))

    def state_from_samples(self, xs) -> StatisticState:
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size > self.horizon:
            raise HorizonExceededError(f"{xs.size} samples exceed horizon {self.horizon}")
        return StatisticState(xs.size, tuple(self.batch_statistic(xs).tolist()))

    def _check(self, state: StatisticState) -> np.ndarray:
        if not 0 <= state.n <= self.horizon:
            raise DomainError(f"sample count {state.n} outside 0..{self.horizon}")
        t = state.vector[None, :]
        if t.shape[1] != self.stat_dim or not self.in_domain(t)[0]:
            raise DomainError(f"statistic {state.t} outside the model domain")
        return t

    def posterior(self, state: StatisticState) -> PosteriorSummary:
        t = self._check(state)
        mean, var = self.param_moments(state.n, t)
        return PosteriorSummary(self.hyp_probs(state.n, t)[0], mean[0], var[0])

    def conditional_predictive(self, state: StatisticState, x: float, m: Optional[int] = None) -> float:
        """p(x | H_m, t) for hypothesis ``m`` or the marginal p(x | t) when ``m`` is None."""
        t = self._check(state)
        marg, cond = self.predictive(state.n, t, np.array([[x]]))
        return float(marg[0, 0] if m is None else cond[0, 0, m])
