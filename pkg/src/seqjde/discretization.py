"""Posterior tables and sparse one-step transition kernels on a statistic grid.

For every stage ``n`` the kernel maps a function on the stage ``n+1`` grid to
its expectation under the predictive distribution of the next observation:
``(K_n f)(t_i) = sum_j q_ij f(node_j)`` where the weights combine the
observation quadrature, the predictive density (renormalized per row) and the
multilinear interpolation stencil of ``xi(t_i, x)``.  Kernels do not depend on
the cost coefficients, so they are built once per model and grid.

With ``fold=True`` only the half grid with a nonpositive first coordinate is
stored.  A value at a mirrored node is recovered from its mirror image with
hypothesis indices permuted, so every kernel splits into a same-side part and
a mirrored part.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy import sparse

from .grid import GridSpec
from .models.base import SequentialModel

log = logging.getLogger(__name__)


class DegeneratePredictiveError(RuntimeError):
    """The predictive density has no usable mass at some grid state."""


@dataclass
class StageKernel:
    same: sparse.csr_matrix
    mirror: Optional[sparse.csr_matrix] = None

    @property
    def nnz(self) -> int:
        return self.same.nnz + (0 if self.mirror is None else self.mirror.nnz)

    def apply(self, f: np.ndarray, perm: Optional[np.ndarray] = None) -> np.ndarray:
        """Expectation of ``f`` (rows, ...) one step ahead.

        ``perm`` relabels hypothesis columns of ``f`` for the mirrored part.
        """
        out = self.same @ f
        if self.mirror is not None:
            g = f[:, perm] if (perm is not None and f.ndim == 2) else f
            out = out + self.mirror @ g
        return out

    def dense(self) -> np.ndarray:
        return self.same.toarray() + (0 if self.mirror is None else self.mirror.toarray())


class Discretization:
    """Everything the solver and the performance recursion need on a grid."""

    def __init__(
        self,
        model: SequentialModel,
        grid: GridSpec,
        fold: bool = False,
        prune: float = 1e-15,
        chunk_entries: int = 4_000_000,
    ):
        if grid.ndim != model.stat_dim:
            raise ValueError(f"grid has {grid.ndim} axes but the statistic has {model.stat_dim}")
        self.model = model
        self.grid = grid
        self.N = model.horizon
        self.M = model.M
        self.prune = prune
        self.chunk_entries = chunk_entries
        self.fold = fold
        if fold:
            self._setup_fold()
        else:
            self.rows = np.arange(grid.size)
            self.perm = None
        self.points = grid.points()[self.rows]
        self.R = self.rows.size
        self.prior = model.hypotheses.probs
        # rows on the reflected half resolve argmin ties in mirrored order
        self.mirror_perm = None if model.mirror_perm is None else np.asarray(model.mirror_perm)
        self.mirror_side = np.zeros((self.N + 1, self.R), dtype=bool)
        if self.mirror_perm is not None and not fold:
            self.mirror_side[1:] = self.points[:, 0] > 0
        self._build_tables()
        self.kernels: list[StageKernel] = []
        started = time.perf_counter()
        for n in range(self.N):
            self.kernels.append(self._build_kernel(n))
        log.info("built %d kernels (%d nonzeros) in %.1fs", self.N,
                 sum(k.nnz for k in self.kernels), time.perf_counter() - started)

    # folding

    def _setup_fold(self):
        perm = self.model.mirror_perm
        ax = self.grid.axes[0]
        if perm is None:
            raise ValueError("model has no reflection symmetry to fold")
        if not np.allclose(ax.nodes, -ax.nodes[::-1], atol=1e-12):
            raise ValueError("folding needs a first axis symmetric about zero")
        idx0 = np.indices(self.grid.shape)[0].ravel()
        self.rows = np.flatnonzero(2 * idx0 <= ax.count - 1)
        self.perm = np.asarray(perm)
        mirror = self.grid.mirror_index(0)
        half_of = np.full(self.grid.size, -1)
        half_of[self.rows] = np.arange(self.rows.size)
        # each full-grid node maps to (is_mirrored, half index)
        self._col_mirrored = half_of < 0
        self._col_half = np.where(self._col_mirrored, half_of[mirror], half_of)

    def unfold(self, values: np.ndarray, hyp_axis: bool = False, labels: bool = False) -> np.ndarray:
        """Expand half-grid values (R, ...) to the full grid.

        ``hyp_axis`` permutes a trailing hypothesis axis on mirrored nodes;
        ``labels`` maps hypothesis-valued entries through the permutation.
        """
        if not self.fold:
            return values
        out = values[self._col_half].copy()
        mir = self._col_mirrored
        if hyp_axis:
            out[mir] = out[mir][..., self.perm]
        if labels:
            out[mir] = self.perm[out[mir]]
        return out

    # tables

    def _build_tables(self):
        model, N, R, M = self.model, self.N, self.R, self.M
        self.hyp = np.empty((N + 1, R, M))
        self.mean = np.empty((N + 1, R, M))
        self.var = np.empty((N + 1, R, M))
        t0 = model.initial_statistic()[None, :]
        self.hyp[0] = model.hyp_probs(0, t0)
        m0, v0 = model.param_moments(0, t0)
        self.mean[0], self.var[0] = m0, v0
        for n in range(1, N + 1):
            self.hyp[n] = model.hyp_probs(n, self.points)
            self.mean[n], self.var[n] = model.param_moments(n, self.points)
        if not (np.all(np.isfinite(self.var)) and np.all(self.var >= 0)):
            raise ValueError("posterior variance table is not finite and nonnegative")

    # kernels

    def _kernel_rows(self, n: int, t: np.ndarray):
        """Aggregated kernel weights for the states ``t``: dense (P, cols) arrays."""
        model, grid = self.model, self.grid
        x, w = model.observation_nodes()
        P, J = t.shape[0], x.size
        xx = np.broadcast_to(x, (P, J))
        logq = model.log_marginal_predictive(n, t, xx)
        with np.errstate(invalid="ignore"):
            logq = logq - np.max(logq, axis=1, keepdims=True)
        q = np.exp(logq) * w[None, :]
        xi = np.ascontiguousarray(model.transition(n, t, xx).reshape(P, J, -1))
        lower = np.array([a.lower for a in grid.axes])
        step = np.array([a.spacing for a in grid.axes])
        count = np.array([a.count for a in grid.axes], dtype=np.int64)
        if self.fold:
            ncol = 2 * self.R
            colmap = self._col_half + self.R * self._col_mirrored
        else:
            ncol = grid.size
            colmap = np.arange(grid.size)
        dense = np.zeros((P, ncol))
        _accumulate(xi, np.ascontiguousarray(q), lower, step, count, colmap, dense)
        total = dense.sum(axis=1)
        bad = ~(np.isfinite(total) & (total > 0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DegeneratePredictiveError(f"predictive density has no mass at stage {n}, state {t[i].tolist()}")
        dense[dense < self.prune * dense.max(axis=1, keepdims=True)] = 0.0
        dense /= dense.sum(axis=1, keepdims=True)
        return dense

    def _to_kernel(self, dense: np.ndarray) -> StageKernel:
        if self.fold:
            return StageKernel(sparse.csr_matrix(dense[:, : self.R]), sparse.csr_matrix(dense[:, self.R:]))
        return StageKernel(sparse.csr_matrix(dense))

    def _build_kernel(self, n: int) -> StageKernel:
        x, _ = self.model.observation_nodes()
        per_row = x.size * 2**self.grid.ndim
        ncol = 2 * self.R if self.fold else self.grid.size
        if n == 0:
            row = self._kernel_rows(0, self.model.initial_statistic()[None, :])
            one = self._to_kernel(row)
            return StageKernel(*[None if k is None else _tile_row(k, self.R) for k in (one.same, one.mirror)])
        chunk = max(1, min(self.chunk_entries // per_row, self.chunk_entries * 4 // ncol))
        parts = []
        for lo in range(0, self.R, chunk):
            parts.append(self._to_kernel(self._kernel_rows(n, self.points[lo: lo + chunk])))
        same = sparse.vstack([p.same for p in parts], format="csr")
        mirror = sparse.vstack([p.mirror for p in parts], format="csr") if self.fold else None
        return StageKernel(same, mirror)

    # convenience

    @property
    def t0_row(self) -> int:
        """Any row works at stage 0; all of them hold the initial statistic."""
        return 0

    def stage_points(self, n: int) -> np.ndarray:
        if n == 0:
            return np.broadcast_to(self.model.initial_statistic(), self.points.shape)
        return self.points


@numba.njit(cache=True)
def _accumulate(xi, q, lower, step, count, colmap, out):
    """Spread weight ``q[p, j]`` at point ``xi[p, j]`` onto grid nodes (clamped multilinear)."""
    P, J, D = xi.shape
    k0 = np.empty(D, dtype=np.int64)
    frac = np.empty(D)
    for p in range(P):
        for j in range(J):
            w = q[p, j]
            if w == 0.0:
                continue
            for d in range(D):
                u = (xi[p, j, d] - lower[d]) / step[d]
                u = min(max(u, 0.0), count[d] - 1.0)
                k = min(int(np.floor(u)), count[d] - 2)
                k0[d] = k
                frac[d] = u - k
            for corner in range(1 << D):
                flat = 0
                cw = w
                for d in range(D):
                    bit = (corner >> (D - 1 - d)) & 1
                    flat = flat * count[d] + k0[d] + bit
                    cw *= frac[d] if bit else 1.0 - frac[d]
                if cw != 0.0:
                    out[p, colmap[flat]] += cw


def _tile_row(row: sparse.csr_matrix, R: int) -> sparse.csr_matrix:
    nnz = row.nnz
    data = np.tile(row.data, R)
    indices = np.tile(row.indices, R)
    indptr = np.arange(R + 1, dtype=np.int64) * nnz
    return sparse.csr_matrix((data, indices, indptr), shape=(R, row.shape[1]))
