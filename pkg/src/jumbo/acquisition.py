"""UCB acquisition, the warm/cold interpolated acquisition, and its maximisation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cmaes import cma_es_maximize_many, default_popsize
from .errors import InvalidArgument
from .nn import embed


@dataclass(frozen=True)
class AcqConfig:
    """Acquisition settings.

    ``l_alpha`` is the warm-acquisition gap below which a point counts as
    near-optimal; with ``normalize=True`` the gap is measured on the warm
    acquisition min-max scaled to [0, 1] over the round's reference set.
    ``lambda_mode`` is ``"indicator"`` or ``"constant"`` (weight ``constant``).
    """

    l_alpha: float = 0.1
    total_budget: int = 50
    ucb_scale_initial: float = 10.0
    lambda_mode: str = "indicator"
    constant: float = 0.5
    normalize: bool = True

    def __post_init__(self):
        if not (self.l_alpha >= 0):
            raise InvalidArgument(f"l_alpha must be >= 0 (or inf), got {self.l_alpha}")
        if self.total_budget < 1:
            raise InvalidArgument("total_budget must be >= 1")
        if self.lambda_mode not in ("indicator", "constant"):
            raise InvalidArgument(f"unknown lambda_mode {self.lambda_mode!r}")
        if not 0.0 <= self.constant <= 1.0:
            raise InvalidArgument("constant lambda must lie in [0, 1]")


@dataclass(frozen=True)
class AcqScore:
    alpha_warm: float | np.ndarray
    alpha_cold: float | np.ndarray
    lam: float | np.ndarray
    combined: float | np.ndarray


def ucb(gp, x, beta: float):
    """``mean + sqrt(beta) * std`` of ``gp`` at one point or at the rows of ``x``.

    ``gp`` is anything with ``predict(X) -> (mean, var)``.
    """
    if beta < 0:
        raise InvalidArgument(f"beta must be non-negative, got {beta}")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    mean, var = gp.predict(np.atleast_2d(X))
    a = mean + math.sqrt(beta) * np.sqrt(var)
    return float(a[0]) if single else a


def exploration_weight(t: float, T: int, scale: float = 10.0) -> float:
    """UCB exploration weight ``scale * exp(-t / T)``."""
    if T < 1 or t < 0:
        raise InvalidArgument(f"need T >= 1 and t >= 0, got t={t}, T={T}")
    return scale * math.exp(-t / T)


def jumbo_lambda(alpha_warm_star, alpha_warm_x, cfg: AcqConfig, scale: float = 1.0):
    """Interpolation weight on the cold acquisition.

    Indicator mode: 1 where ``(alpha_warm_star - alpha_warm_x) / scale <= l_alpha``,
    else 0. ``scale`` is the warm acquisition's range over the reference set
    (1 for raw comparison); a zero range puts every point in the region.
    Constant mode returns ``cfg.constant`` everywhere.
    """
    ax = np.asarray(alpha_warm_x, dtype=np.float64)
    if cfg.lambda_mode == "constant":
        lam = np.full(ax.shape, cfg.constant)
    else:
        gap = alpha_warm_star - ax
        if scale > 0:
            gap = gap / scale
        else:
            gap = np.zeros_like(ax)
        lam = (gap <= cfg.l_alpha).astype(np.float64)
    return float(lam) if lam.ndim == 0 else lam


def combine(lam, alpha_cold, alpha_warm):
    return lam * alpha_cold + (1.0 - lam) * alpha_warm


def jumbo_acq(warm, cold, model, x, beta: float, alpha_warm_star: float, cfg: AcqConfig,
              scale: float = 1.0) -> AcqScore:
    """Warm UCB on ``embed(x)``, cold UCB on ``x``, and their interpolation.

    Pass ``model=None`` when ``warm`` already maps raw inputs to features.
    """
    Z = embed(model, x) if model is not None else x
    a_w = ucb(warm, Z, beta)
    a_c = ucb(cold, x, beta)
    lam = jumbo_lambda(alpha_warm_star, a_w, cfg, scale)
    return AcqScore(a_w, a_c, lam, combine(lam, a_c, a_w))


class Maximum(NamedTuple):
    x: np.ndarray
    value: float
    index: int | None
    X: np.ndarray
    values: np.ndarray


def maximize_acq(score_fn, space, rng_seed=0, candidates=None, incumbent=None,
                 restarts: int = 4, generations: int = 50, popsize: int | None = None) -> Maximum:
    """Maximise a batched score function.

    With ``candidates`` (an (m, d) array) the argmax is exhaustive, ties going
    to the lowest row index. Otherwise CMA-ES runs over the relaxed box of
    ``space`` from ``restarts`` starting points (the incumbent first, if given,
    then uniform draws) and the best evaluated point is returned; ties go to
    the first point evaluated.
    """
    if candidates is not None:
        C = np.asarray(candidates, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] == 0:
            raise InvalidArgument("empty candidate set")
        f = np.asarray(score_fn(C), dtype=np.float64)
        i = int(np.argmax(np.where(np.isnan(f), -np.inf, f)))
        return Maximum(C[i], float(f[i]), i, C, f)
    lo, hi = space.bounds()
    span = hi - lo
    rng = np.random.default_rng(rng_seed)

    def unit_score(U):
        return score_fn(lo + U * span)

    starts = []
    if incumbent is not None:
        starts.append(np.clip((np.asarray(incumbent, dtype=np.float64) - lo) / span, 0.0, 1.0))
    while len(starts) < restarts:
        starts.append(rng.random(lo.size))
    pop = popsize or default_popsize(lo.size)
    U, f = cma_es_maximize_many(unit_score, starts, rng, generations=generations, popsize=pop)
    i = int(np.argmax(np.where(np.isnan(f), -np.inf, f)))
    X = np.clip(lo + U * span, lo, hi)
    return Maximum(X[i], float(f[i]), None, X, f)
