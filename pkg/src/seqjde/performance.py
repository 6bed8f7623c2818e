"""Detection errors, estimation errors and run-lengths of a fixed policy.

The conditional expectation under ``H_m`` is taken with the marginal kernel
reweighted by the next-stage posterior of ``H_m``:
``E[f | H_m, t] = K[p_m f] / K[p_m]``, which is quadrature against
``p(x | H_m, t) = p(x | t) p(H_m | xi(t, x)) / p(H_m | t)``.  The reweighted
kernel stays stochastic, so alpha stays in [0, 1] and beta stays nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bellman import CostCoefficients, CostTable, Policy, backward_induction
from .discretization import Discretization

# below this kernel mass of p(H_m | .) the unweighted kernel is used instead
_TINY = 1e-280


@dataclass
class PerformanceTable:
    alpha: np.ndarray  # (N+1, R, M)
    beta: np.ndarray  # (N+1, R, M)
    runlength: np.ndarray  # (N+1, R) expected remaining samples
    runlength_cond: np.ndarray  # (N+1, R, M) the same under each hypothesis

    @property
    def alpha0(self) -> np.ndarray:
        return self.alpha[0, 0].copy()

    @property
    def beta0(self) -> np.ndarray:
        return self.beta[0, 0].copy()

    @property
    def expected_runlength(self) -> float:
        return float(self.runlength[0, 0])

    @property
    def runlength_given(self) -> np.ndarray:
        return self.runlength_cond[0, 0].copy()


def _conditional(disc: Discretization, n: int, f: np.ndarray) -> np.ndarray:
    K, p = disc.kernels[n], disc.hyp[n + 1]
    den = K.apply(p, disc.perm)
    num = K.apply(p * f, disc.perm)
    ok = den > _TINY
    out = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    if not np.all(ok):
        out = np.where(ok, out, K.apply(f, disc.perm))
    return out


def error_recursion(disc: Discretization, policy: Policy) -> PerformanceTable:
    N, R, M = disc.N, disc.R, disc.M
    alpha = np.empty((N + 1, R, M))
    beta = np.empty((N + 1, R, M))
    ell = np.zeros((N + 1, R))
    ell_m = np.zeros((N + 1, R, M))
    hyps = np.arange(M)
    correct = policy.decision[..., None] == hyps  # (N+1, R, M)
    alpha[N] = ~correct[N]
    beta[N] = correct[N] * disc.var[N]
    for n in range(N - 1, -1, -1):
        stop = policy.stop[n][:, None]
        alpha[n] = np.where(stop, ~correct[n], _conditional(disc, n, alpha[n + 1]))
        beta[n] = np.where(stop, correct[n] * disc.var[n], _conditional(disc, n, beta[n + 1]))
        ell[n] = np.where(policy.stop[n], 0.0, 1.0 + disc.kernels[n].apply(ell[n + 1]))
        ell_m[n] = np.where(stop, 0.0, 1.0 + _conditional(disc, n, ell_m[n + 1]))
    return PerformanceTable(alpha, beta, ell, ell_m)


def likelihood_ratio_field(disc: Discretization) -> np.ndarray:
    """``z_n^m = p(t_n | H_m) / p(t_n)``, computed as ``p(H_m | t_n) / p(H_m)``."""
    return disc.hyp / disc.prior


def expected_runlength(table: CostTable, coeffs: CostCoefficients, perf: PerformanceTable, prior) -> float:
    """``rho_0 - sum_m p(H_m) (lam_m alpha_0^m + mu_m beta_0^m)``."""
    prior = np.asarray(prior, dtype=float)
    return table.rho0 - float(np.sum(prior * (coeffs.lam * perf.alpha0 + coeffs.mu * perf.beta0)))


def design_gradient(alpha0, beta0, alpha_bar, beta_bar, prior) -> np.ndarray:
    """Gradient of the dual objective; lambda components first, then mu."""
    prior = np.asarray(prior, dtype=float)
    return np.concatenate([
        prior * (np.asarray(alpha0) - np.asarray(alpha_bar)),
        prior * (np.asarray(beta0) - np.asarray(beta_bar)),
    ])


def dual_objective(rho0: float, coeffs: CostCoefficients, alpha_bar, beta_bar, prior) -> float:
    prior = np.asarray(prior, dtype=float)
    return rho0 - float(np.sum(prior * (coeffs.lam * np.asarray(alpha_bar) + coeffs.mu * np.asarray(beta_bar))))


@dataclass
class DerivativeCheck:
    finite_difference: np.ndarray
    identity: np.ndarray
    rel_error: np.ndarray
    one_sided: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_error))


def verify_derivative_identity(
    disc: Discretization, coeffs: CostCoefficients, h: float = 1e-3, min_samples: int = 1
) -> DerivativeCheck:
    """Compare finite differences of ``rho_0`` with ``p(H_m) alpha_0^m`` and ``p(H_m) beta_0^m``.

    The step for coefficient ``c`` is ``h * c``; zero coefficients get a
    forward step ``h``.
    """
    from .bellman import extract_policy

    base = backward_induction(disc, coeffs, min_samples)
    perf = error_recursion(disc, extract_policy(base, disc))
    identity = np.concatenate([disc.prior * perf.alpha0, disc.prior * perf.beta0])
    c = coeffs.vector
    fd = np.empty_like(c)
    one_sided = c <= 0
    for k in range(c.size):
        step = h * c[k] if c[k] > 0 else h
        up = c.copy()
        up[k] += step
        rho_up = backward_induction(disc, CostCoefficients.from_vector(up), min_samples).rho0
        if one_sided[k]:
            fd[k] = (rho_up - base.rho0) / step
        else:
            dn = c.copy()
            dn[k] -= step
            rho_dn = backward_induction(disc, CostCoefficients.from_vector(dn), min_samples).rho0
            fd[k] = (rho_up - rho_dn) / (2 * step)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(fd - identity) / np.maximum(np.abs(identity), 1e-300)
    rel = np.where(np.isfinite(fd), rel, np.inf)
    return DerivativeCheck(fd, identity, rel, one_sided)
