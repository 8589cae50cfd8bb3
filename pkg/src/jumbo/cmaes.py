"""Box-constrained (mu/mu_w, lambda)-CMA-ES for maximising batched scores.

Works in the unit cube; samples are clipped to the box before evaluation and
the clipped points drive the update. Supports d = 1, which pycma does not.
"""
from __future__ import annotations

import math

import numpy as np


def default_popsize(d: int) -> int:
    return 4 + int(math.floor(3.0 * math.log(d)))


class _CMAState:
    """Strategy parameters and state of one CMA-ES descent in the unit cube."""

    def __init__(self, x0, sigma0, popsize):
        N = x0.size
        self.N = N
        self.lam = popsize or default_popsize(N)
        self.mu = self.lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.w = w / w.sum()
        mueff = 1.0 / np.sum(self.w * self.w)
        self.mueff = mueff
        self.cc = (4 + mueff / N) / (N + 4 + 2 * mueff / N)
        self.cs = (mueff + 2) / (N + mueff + 5)
        self.c1 = 2 / ((N + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((N + 2) ** 2 + mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (N + 1)) - 1) + self.cs
        self.chiN = math.sqrt(N) * (1 - 1 / (4 * N) + 1 / (21 * N * N))
        self.mean = x0.copy()
        self.sigma = sigma0
        self.C = np.eye(N)
        self.B = np.eye(N)
        self.D = np.ones(N)
        self.pc = np.zeros(N)
        self.ps = np.zeros(N)
        self.gen = 0
        self.done = False

    def ask(self, rng):
        Z = rng.standard_normal((self.lam, self.N))
        return np.clip(self.mean + self.sigma * (Z * self.D) @ self.B.T, 0.0, 1.0)

    def tell(self, X, f):
        N, cs, cc, c1, cmu = self.N, self.cs, self.cc, self.c1, self.cmu
        self.gen += 1
        f = np.where(np.isnan(f), -np.inf, f)
        order = np.argsort(-f, kind="stable")[:self.mu]
        Y = (X[order] - self.mean) / self.sigma
        step = self.w @ Y
        self.mean = self.mean + self.sigma * step
        invsqrtC = (self.B / self.D) @ self.B.T
        self.ps = (1 - cs) * self.ps + math.sqrt(cs * (2 - cs) * self.mueff) * (invsqrtC @ step)
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - cs) ** (2 * self.gen)) / self.chiN < 1.4 + 2 / (N + 1)
        self.pc = (1 - cc) * self.pc + hsig * math.sqrt(cc * (2 - cc) * self.mueff) * step
        self.C = ((1 - c1 - cmu) * self.C
                  + c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * cc * (2 - cc) * self.C)
                  + cmu * (Y.T * self.w) @ Y)
        self.sigma = min(self.sigma * math.exp((cs / self.damps) * (ps_norm / self.chiN - 1)), 1.0)
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        evals, B = np.linalg.eigh(self.C)
        if not np.all(np.isfinite(evals)) or evals.min() <= 0 or self.sigma * math.sqrt(evals.max()) < 1e-12:
            self.done = True
            return
        self.B, self.D = B, np.sqrt(evals)


def cma_es_maximize_many(score_fn, starts, rng, sigma0=0.3, generations=50, popsize=None):
    """Independent CMA-ES descents run in lockstep.

    Each generation evaluates the populations of all live descents in a single
    ``score_fn`` call. Returns every evaluated point and its score, ordered by
    generation, then descent, then population member.
    """
    states = [_CMAState(np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0), sigma0, popsize)
              for s in starts]
    Xs, fs = [], []
    for _ in range(generations):
        live = [s for s in states if not s.done]
        if not live:
            break
        pops = [s.ask(rng) for s in live]
        X = np.vstack(pops)
        f = np.asarray(score_fn(X), dtype=np.float64)
        Xs.append(X)
        fs.append(f)
        k = 0
        for s, P in zip(live, pops):
            s.tell(P, f[k:k + len(P)])
            k += len(P)
    return np.vstack(Xs), np.concatenate(fs)


def cma_es_maximize(score_fn, x0, rng, sigma0=0.3, generations=50, popsize=None):
    """Run one CMA-ES descent on ``score_fn`` over ``[0, 1]^d``.

    ``score_fn`` maps an (m, d) array of unit-cube points to m scores
    (higher is better). Returns all evaluated points and their scores.
    """
    return cma_es_maximize_many(score_fn, [x0], rng, sigma0, generations, popsize)
