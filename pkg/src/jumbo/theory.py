"""Empirical checks of the regret analysis: confidence coverage, information gain, no-regret trend."""

import math

import numpy as np

from . import gp as gplib
from .acquisition import AcqConfig, combine, jumbo_lambda
from .benchmarks import prior_table, regret_curves, sample_gp_prior
from .errors import InvalidArgument, NumericalFailure
from .loop import RunOptions, Strategy, run, theoretical_beta
from .nn import embed


def mig_greedy_path(spec: gplib.KernelSpec, candidates, n: int, noise: float):
    """Greedy information-gain path over ``candidates``.

    Returns ``(indices, gains)``: the selected rows in order and the marginal
    mutual-information gain (nats) of each. Their cumulative sum is the
    information ``0.5 log det(I + noise^-2 K_S)`` of each prefix.
    """
    C = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    m = len(C)
    if not 0 <= n <= m:
        raise InvalidArgument(f"n must lie in [0, {m}]")
    if noise <= 0:
        raise InvalidArgument("noise must be > 0")
    s2 = noise * noise
    K = gplib.kernel_matrix(spec, C, C)
    var = np.diag(K).copy()
    U = np.zeros((0, m))
    chosen = np.zeros(m, dtype=bool)
    indices, gains = [], []
    for _ in range(n):
        g = np.where(chosen, -np.inf, 0.5 * np.log1p(np.maximum(var, 0.0) / s2))
        i = int(np.argmax(g))
        denom = var[i] + s2
        if not np.isfinite(g[i]) or denom <= 0:
            raise NumericalFailure("degenerate kernel matrix in information gain")
        # Rank-one update of the noisy posterior covariance of every candidate.
        col = K[:, i] - U.T @ U[:, i]
        u = col / math.sqrt(denom)
        U = np.vstack([U, u])
        var = var - u * u
        chosen[i] = True
        indices.append(i)
        gains.append(float(g[i]))
    return indices, np.array(gains)


def mig_greedy(spec: gplib.KernelSpec, candidates, n: int, noise: float) -> float:
    """Greedy lower-bound estimate of the maximum information gain after ``n`` observations."""
    _, gains = mig_greedy_path(spec, candidates, n, noise)
    return float(gains.sum())


def information_gain(spec: gplib.KernelSpec, X, noise: float) -> float:
    """``0.5 log det(I + noise^-2 K_X)`` computed directly."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        return 0.0
    K = gplib.kernel_matrix(spec, X, X)
    sign, logdet = np.linalg.slogdet(np.eye(len(X)) + K / (noise * noise))
    if sign <= 0:
        raise NumericalFailure("information matrix is not positive definite")
    return 0.5 * logdet


def _ucb_values(state, X, beta):
    mu, var = state.predict(X)
    return mu + math.sqrt(beta) * np.sqrt(np.maximum(var, 0.0))


def lemma1_coverage(spec_cold: gplib.KernelSpec, spec_warm: gplib.KernelSpec | None, model, domain,
                    delta: float = 0.1, rounds: int = 15, trials: int = 200, seed: int = 0,
                    noise: float = 0.1, beta_multiplier: float = 1.0, mode: str = "cold",
                    l_alpha: float = 0.1):
    """Monte-Carlo estimate of how often the confidence bound fails.

    Each trial draws ``f`` from the cold-GP prior on ``domain``, then runs
    ``rounds`` queries with the finite-domain confidence width
    ``beta_t = 2 log(|X| pi^2 t^2 / (3 delta))`` and fixed hyperparameters.
    A trial is a violation if ``|f(x) - mu_{t-1}(x)| > sqrt(beta_t) sigma_{t-1}(x)``
    for any point and round.

    ``mode="cold"`` queries by GP-UCB on the cold posterior and checks it.
    ``mode="full"`` queries by JUMBO and checks both posteriors; the warm
    check presumes the target is realisable in the latent space, which a
    generic pretrained model does not guarantee.

    Returns the violation fraction, or ``None`` when ``trials == 0``.
    """
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    if mode not in ("cold", "full"):
        raise InvalidArgument(f"unknown mode {mode!r}")
    if mode == "full" and (model is None or spec_warm is None):
        raise InvalidArgument("full mode needs a model and a warm kernel")
    if trials == 0:
        return None
    D = np.atleast_2d(np.asarray(domain, dtype=np.float64))
    size = len(D)
    Z = embed(model, D) if mode == "full" else None
    acfg = AcqConfig(l_alpha=l_alpha, total_budget=rounds)
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(trials):
        f = sample_gp_prior(spec_cold, D, rng)
        idx: list[int] = []
        ys: list[float] = []
        violated = False
        for t in range(1, rounds + 1):
            beta = beta_multiplier * theoretical_beta(t, size, delta)
            width = math.sqrt(beta)
            y = np.array(ys)
            cold = gplib.gp_condition(spec_cold, noise, D[idx], y, dim=D.shape[1])
            mu_c, var_c = cold.predict(D)
            sd_c = np.sqrt(np.maximum(var_c, 0.0))
            if np.any(np.abs(f - mu_c) > width * sd_c):
                violated = True
            a_c = mu_c + width * sd_c
            if mode == "cold":
                i = int(np.argmax(a_c))
            else:
                warm = gplib.gp_condition(spec_warm, noise, Z[idx], y, dim=Z.shape[1])
                mu_w, var_w = warm.predict(Z)
                sd_w = np.sqrt(np.maximum(var_w, 0.0))
                if np.any(np.abs(f - mu_w) > width * sd_w):
                    violated = True
                a_w = mu_w + width * sd_w
                star = float(a_w.max())
                lam = np.asarray(jumbo_lambda(star, a_w, acfg, star - float(a_w.min())))
                score = np.where(lam == 1.0, combine(lam, a_c, a_w), -np.inf)
                i = int(np.argmax(score))
            idx.append(i)
            ys.append(float(f[i] + noise * rng.standard_normal()))
        violations += violated
    return violations / trials


def no_regret_trend(spec: gplib.KernelSpec, budgets=(10, 20, 40), trials: int = 20,
                    n_points: int = 50, dim: int = 1, noise: float = 0.05, seed: int = 0):
    """Median of ``cumulative_T / T`` for GP-UCB on prior-sampled tables.

    Uses the true hyperparameters, no refitting, no output standardisation
    and repeats allowed, which is the setting of the no-regret analysis.
    Returns ``{T: median}``.
    """
    options = RunOptions(kernel=spec.kind, init_lengthscale=spec.lengthscale,
                         init_signal_variance=spec.signal_variance, init_noise=noise,
                         fit_hyperparams=False, standardize=False, no_repeat=False)
    out = {}
    for T in budgets:
        ratios = []
        for k in range(trials):
            bench = prior_table(spec, n_points, dim, seed=seed + k, noise_std=noise)
            trace = run(Strategy.GpUcb(), bench, T=T, seed=seed + k, options=options)
            _, cum = regret_curves(trace, bench.f_star)
            ratios.append(cum[-1] / T)
        out[T] = float(np.median(ratios))
    return out
