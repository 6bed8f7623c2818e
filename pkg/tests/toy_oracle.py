"""Brute-force reference for the binary toy model.

Everything is computed from raw observation histories: posteriors from
products of Bernoulli likelihoods, the optimal cost by recursion over
histories, and error/run-length figures by summing over all 2**N paths.
No grid, kernel or sufficient statistic is involved.
"""
from __future__ import annotations

import itertools

import numpy as np


class ToyOracle:
    def __init__(self, spec, lam, mu, min_samples=1):
        self.thetas = [np.asarray(t, dtype=float) for t in spec.thetas]
        self.weights = [np.asarray(w, dtype=float) for w in spec.weights]
        self.prior = np.asarray(spec.hyp_prior, dtype=float)
        self.N = spec.horizon
        self.lam = np.asarray(lam, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.min_samples = min_samples
        self.M = len(self.prior)
        self._rho = {}

    # posterior pieces for a history h (tuple of 0/1)

    def _lik(self, m, h):
        k, n = sum(h), len(h)
        return self.thetas[m] ** k * (1 - self.thetas[m]) ** (n - k)

    def evidence(self, h):
        """p(h | H_m) for every m."""
        return np.array([np.sum(self.weights[m] * self._lik(m, h)) for m in range(self.M)])

    def posterior(self, h):
        joint = self.prior * self.evidence(h)
        return joint / joint.sum()

    def moments(self, h, m):
        w = self.weights[m] * self._lik(m, h)
        w = w / w.sum()
        mean = np.sum(w * self.thetas[m])
        return mean, np.sum(w * (self.thetas[m] - mean) ** 2)

    def stop_costs(self, h):
        p = self.posterior(h)
        var = np.array([self.moments(h, m)[1] for m in range(self.M)])
        miss = np.sum(self.lam * p) - self.lam * p
        return self.mu * p * var + miss

    def prob_next_one(self, h):
        p = self.posterior(h)
        out = 0.0
        for m in range(self.M):
            w = self.weights[m] * self._lik(m, h)
            out += p[m] * np.sum(w * self.thetas[m]) / w.sum()
        return out

    # optimal policy by recursion over histories

    def rho(self, h=()):
        if h in self._rho:
            return self._rho[h]
        g = float(np.min(self.stop_costs(h)))
        if len(h) == self.N:
            val = g
        else:
            q = self.prob_next_one(h)
            d = 1.0 + (1 - q) * self.rho(h + (0,)) + q * self.rho(h + (1,))
            val = d if len(h) < self.min_samples else min(g, d)
        self._rho[h] = val
        return val

    def stops(self, h):
        if len(h) == self.N:
            return True
        if len(h) < self.min_samples:
            return False
        g = float(np.min(self.stop_costs(h)))
        q = self.prob_next_one(h)
        d = 1.0 + (1 - q) * self.rho(h + (0,)) + q * self.rho(h + (1,))
        return g <= d

    def decision(self, h):
        return int(np.argmin(self.stop_costs(h)))

    # performance by enumerating full paths

    def performance(self, stops=None, decision=None):
        """alpha, beta, E[tau | H_m], E[tau] of a policy given as callables on histories."""
        stops = stops or self.stops
        decision = decision or self.decision
        alpha = np.zeros(self.M)
        beta = np.zeros(self.M)
        tau_m = np.zeros(self.M)
        for path in itertools.product((0, 1), repeat=self.N):
            tau = next(n for n in range(self.N + 1) if stops(path[:n]))
            h = path[:tau]
            dec = decision(h)
            for m in range(self.M):
                for theta, w in zip(self.thetas[m], self.weights[m]):
                    k = sum(path)
                    pr = w * theta ** k * (1 - theta) ** (self.N - k)
                    tau_m[m] += pr * tau
                    if dec != m:
                        alpha[m] += pr
                    else:
                        est = self.moments(h, m)[0]
                        beta[m] += pr * (est - theta) ** 2
        return alpha, beta, tau_m, float(np.sum(self.prior * tau_m))
