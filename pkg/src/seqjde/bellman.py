"""Backward induction of the optimal cost-to-go and extraction of the policy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import Discretization


@dataclass(frozen=True)
class CostCoefficients:
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).copy()
        mu = np.asarray(self.mu, dtype=float).copy()
        if lam.shape != mu.shape or lam.ndim != 1:
            raise ValueError("lam and mu must be vectors of equal length")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(mu))):
            raise ValueError("cost coefficients must be finite")
        if np.any(lam < 0) or np.any(mu < 0):
            raise ValueError("cost coefficients must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def zeros(cls, M: int) -> "CostCoefficients":
        return cls(np.zeros(M), np.zeros(M))

    @classmethod
    def from_vector(cls, v) -> "CostCoefficients":
        v = np.asarray(v, dtype=float)
        M = v.size // 2
        return cls(v[:M], v[M:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu])

    def scaled(self, c: float) -> "CostCoefficients":
        return CostCoefficients(c * self.lam, c * self.mu)


def stop_cost(hyp_probs, param_var, coeffs: CostCoefficients) -> np.ndarray:
    """Cost of stopping now and deciding for each hypothesis; trailing axis is m.

    ``D_m = mu_m p_m Var_m + sum_{i != m} lam_i p_i``.
    """
    p = np.asarray(hyp_probs, dtype=float)
    v = np.asarray(param_var, dtype=float)
    wrong = p @ coeffs.lam
    return coeffs.mu * p * v + (wrong[..., None] - coeffs.lam * p)


def stopping_envelope(D, perm=None, flip=None) -> tuple[np.ndarray, np.ndarray]:
    """Minimum stopping cost and the smallest index attaining it.

    Where ``flip`` is set, ties are broken by the smallest index in the order
    given by ``perm`` instead, so decisions at mirrored states are the
    relabeled decisions of their mirror images.
    """
    D = np.asarray(D, dtype=float)
    dec = np.argmin(D, axis=-1)
    if perm is not None and flip is not None and np.any(flip):
        perm = np.asarray(perm)
        dec = np.where(flip, perm[np.argmin(D[..., perm], axis=-1)], dec)
    return np.take_along_axis(D, dec[..., None], axis=-1)[..., 0], dec


@dataclass
class CostTable:
    """Per-stage tables on the (possibly folded) grid rows.

    ``d[n]`` is the continuation cost for ``n < N``; ``d[N]`` is ``inf``.
    """

    rho: np.ndarray  # (N+1, R)
    d: np.ndarray  # (N+1, R)
    g: np.ndarray  # (N+1, R)
    decision: np.ndarray  # (N+1, R) argmin of the stopping cost
    coeffs: CostCoefficients
    min_samples: int

    @property
    def N(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def rho0(self) -> float:
        return float(self.rho[0, 0])


@dataclass
class Policy:
    stop: np.ndarray  # (N+1, R) bool
    decision: np.ndarray  # (N+1, R) int, meaningful where stop
    estimate: np.ndarray  # (N+1, R, M) posterior means
    min_samples: int

    @property
    def N(self) -> int:
        return self.stop.shape[0] - 1


def backward_induction(disc: Discretization, coeffs: CostCoefficients, min_samples: int = 1) -> CostTable:
    """Solve ``rho_N = g`` and ``rho_n = min(g, 1 + E[rho_{n+1}])`` on the grid.

    Stages ``n < min_samples`` always continue.
    """
    if coeffs.lam.size != disc.M:
        raise ValueError(f"expected {disc.M} coefficients per kind, got {coeffs.lam.size}")
    N, R = disc.N, disc.R
    D = stop_cost(disc.hyp, disc.var, coeffs)
    g, decision = stopping_envelope(D, disc.mirror_perm, disc.mirror_side)
    rho = np.empty((N + 1, R))
    d = np.full((N + 1, R), np.inf)
    rho[N] = g[N]
    for n in range(N - 1, -1, -1):
        d[n] = 1.0 + disc.kernels[n].apply(rho[n + 1])
        rho[n] = d[n] if n < min_samples else np.minimum(g[n], d[n])
    return CostTable(rho, d, g, decision, coeffs, min_samples)


def extract_policy(table: CostTable, disc: Discretization) -> Policy:
    """Stop where ``g <= d`` (ties stop) and decide by the smallest argmin."""
    stop = table.g <= table.d
    stop[: min(table.min_samples, table.N)] = False
    stop[table.N] = True
    return Policy(stop, table.decision.copy(), disc.mean.copy(), table.min_samples)


def solve(disc: Discretization, coeffs: CostCoefficients, min_samples: int = 1) -> tuple[CostTable, Policy]:
    table = backward_induction(disc, coeffs, min_samples)
    return table, extract_policy(table, disc)


def bellman_residual(table: CostTable) -> float:
    """Largest violation of the Bellman equations over all stages."""
    N, ms = table.N, table.min_samples
    res = float(np.max(np.abs(table.rho[N] - table.g[N])))
    for n in range(N):
        target = table.d[n] if n < ms else np.minimum(table.g[n], table.d[n])
        res = max(res, float(np.max(np.abs(table.rho[n] - target))))
    return res
