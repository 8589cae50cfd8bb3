"""The sequential optimisation loop and its strategy variants.

Each round refits the surrogates on all observations so far, scores the
domain with the strategy's acquisition, queries the benchmark at the argmax
and appends the observation to both the raw-input (cold) and feature-space
(warm) datasets.

Strategies
----------
``jumbo``        indicator-interpolated warm/cold UCB
``gp-ucb``       cold GP only
``offline-dkl``  warm GP only
``jumbo-blr``    ``jumbo`` with Bayesian linear regression in place of the warm GP
``jumbo-const``  ``jumbo`` with a constant interpolation weight
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gp as gplib
from .acquisition import AcqConfig, combine, exploration_weight, jumbo_lambda, maximize_acq, ucb
from .benchmarks import regret_curves
from .errors import BudgetExhausted, InvalidArgument, NumericalFailure, ParseError
from .nn import embed

KINDS = ("jumbo", "gp-ucb", "offline-dkl", "jumbo-blr", "jumbo-const")


@dataclass(frozen=True)
class Strategy:
    kind: str
    l_alpha: float = 0.1
    constant: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown strategy {self.kind!r}; choose from {KINDS}")
        if not self.l_alpha >= 0:
            raise InvalidArgument("l_alpha must be >= 0")
        if not 0.0 <= self.constant <= 1.0:
            raise InvalidArgument("constant lambda must lie in [0, 1]")

    @classmethod
    def Jumbo(cls, l_alpha=0.1):
        return cls("jumbo", l_alpha)

    @classmethod
    def GpUcb(cls):
        return cls("gp-ucb")

    @classmethod
    def OfflineDkl(cls):
        return cls("offline-dkl")

    @classmethod
    def JumboBlr(cls, l_alpha=0.1):
        return cls("jumbo-blr", l_alpha)

    @classmethod
    def JumboConstLambda(cls, c=0.5):
        return cls("jumbo-const", constant=c)

    @classmethod
    def parse(cls, text: str, default_l_alpha: float = 0.1) -> "Strategy":
        """``"jumbo"``, ``"jumbo:0.05"``, ``"jumbo-blr:inf"``, ``"jumbo-const:0.5"``, ``"gp-ucb"`` ..."""
        kind, _, arg = text.strip().partition(":")
        try:
            val = float(arg) if arg else None
        except ValueError:
            raise InvalidArgument(f"bad strategy parameter in {text!r}") from None
        if kind == "jumbo-const":
            return cls(kind, constant=0.5 if val is None else val)
        return cls(kind, default_l_alpha if val is None else val)

    @property
    def needs_model(self) -> bool:
        return self.kind != "gp-ucb"

    @property
    def uses_cold(self) -> bool:
        return self.kind != "offline-dkl"

    @property
    def uses_warm(self) -> bool:
        return self.kind != "gp-ucb"

    @property
    def label(self) -> str:
        if self.kind in ("jumbo", "jumbo-blr"):
            return f"{self.kind}-{self.l_alpha:g}"
        if self.kind == "jumbo-const":
            return f"{self.kind}-{self.constant:g}"
        return self.kind

    def acq_config(self, T: int, normalize: bool = True) -> AcqConfig:
        mode = "constant" if self.kind == "jumbo-const" else "indicator"
        return AcqConfig(self.l_alpha, T, 10.0, mode, self.constant, normalize)


@dataclass(frozen=True)
class RunOptions:
    """Loop settings. Defaults follow the reference experimental setup."""

    kernel: str = "Matern52"
    init_lengthscale: float = 0.5
    init_signal_variance: float = 1.0
    init_noise: float = 0.1
    fit_hyperparams: bool = True
    gp_steps: int = 100
    gp_lr: float = 0.1
    standardize: bool = True
    normalize_lambda: bool = True
    no_repeat: bool = True
    n_init: int = 0
    use_model_gp_init: bool = True
    restarts: int = 4
    generations: int = 50
    ucb_scale: float = 10.0
    theoretical_beta_delta: float | None = None

    def beta(self, t: int, T: int, domain_size: int | None = None) -> float:
        if self.theoretical_beta_delta is not None:
            return theoretical_beta(t, domain_size, self.theoretical_beta_delta)
        return exploration_weight(t, T, self.ucb_scale)


def theoretical_beta(t: int, domain_size: int, delta: float) -> float:
    """Confidence width ``2 log(|X| pi^2 t^2 / (3 delta))`` for finite domains."""
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    return 2.0 * math.log(domain_size * math.pi**2 * t * t / (3.0 * delta))


@dataclass
class RoundRecord:
    t: int
    x: np.ndarray
    y: float
    f: float
    lam: float
    alpha_warm: float
    alpha_cold: float
    beta: float
    best: float
    simple_regret: float
    instant_regret: float
    seconds: float = 0.0


@dataclass(eq=False)
class RunTrace:
    strategy: str
    seed: int
    benchmark: str
    records: list = field(default_factory=list)
    status: str = "ok"
    config: dict = field(default_factory=dict)

    @property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def y_values(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    @property
    def simple_regret(self) -> np.ndarray:
        return np.array([r.simple_regret for r in self.records])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    def columns(self):
        d = len(self.records[0].x) if self.records else self.config.get("dim", 0)
        return (["t"] + [f"x{i}" for i in range(d)]
                + ["y", "lambda", "alpha_warm", "alpha_cold", "beta", "best", "simple_regret",
                   "instant_regret"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for r in self.records:
            w.writerow([r.t, *(repr(float(v)) for v in r.x)] + [
                repr(float(v)) for v in (r.y, r.lam, r.alpha_warm, r.alpha_cold, r.beta, r.best,
                                         r.simple_regret, r.instant_regret)])
        return buf.getvalue()

    def sidecar(self) -> str:
        meta = {"strategy": self.strategy, "seed": self.seed, "benchmark": self.benchmark,
                "status": self.status, "rounds": len(self.records), "config": self.config}
        return json.dumps(meta, sort_keys=True, indent=1) + "\n"

    def save(self, directory, stem: str | None = None):
        stem = stem or f"trace_{self.strategy}_seed{self.seed}"
        csv_path = os.path.join(directory, f"{stem}.csv")
        atomic_write(csv_path, self.to_csv())
        atomic_write(os.path.join(directory, f"{stem}.json"), self.sidecar())
        return csv_path


def atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_trace_csv(path):
    """Column name -> float array, from a trace CSV."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty trace file", 1)
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    except ValueError:
        raise ParseError(f"{path}: malformed trace row") from None
    return {name: data[:, j] for j, name in enumerate(header)}


def no_repeat_filter(candidates, visited):
    """Indices of candidates not yet visited, in their original order.

    ``candidates`` is an index sequence (or an int count); raises
    BudgetExhausted when nothing is left.
    """
    idx = np.arange(candidates) if isinstance(candidates, (int, np.integer)) else np.asarray(candidates)
    if visited:
        keep = ~np.isin(idx, np.fromiter(visited, dtype=np.int64))
        idx = idx[keep]
    if idx.size == 0:
        raise BudgetExhausted("every candidate has been queried")
    return idx


class _Posterior:
    """A GP/BLR state seen through an input map and the output standardisation."""

    def __init__(self, state, shift=0.0, scale=1.0, input_map=None):
        self.state, self.shift, self.scale, self.input_map = state, shift, scale, input_map

    def predict(self, X):
        if self.input_map is not None:
            X = self.input_map(X)
        m, v = self.state.predict(X)
        return m * self.scale + self.shift, v * self.scale * self.scale


def _initial_specs(options: RunOptions, model):
    base = (gplib.KernelSpec(options.kernel, options.init_lengthscale, options.init_signal_variance),
            options.init_noise)
    warm = cold = base
    if model is not None and options.use_model_gp_init and model.gp_init:
        g = model.gp_init
        if "warm" in g:
            w = g["warm"]
            warm = (gplib.KernelSpec(w["kind"], w["lengthscale"], w["signal_variance"]), w["noise"])
        if "cold" in g:
            c = g["cold"]
            cold = (gplib.KernelSpec(c["kind"], c["lengthscale"], c["signal_variance"]), c["noise"])
    return warm, cold


def _fit(spec, noise, X, ys, options, dim):
    state = gplib.gp_condition(spec, noise, X, ys, dim=dim)
    if options.fit_hyperparams and state.n >= 2:
        state = gplib.fit_gp_hyperparams(state, options.gp_steps, options.gp_lr)
    return state


def _fit_blr(X, ys, options, dim):
    spec = gplib.KernelSpec("Linear", 1.0, 1.0)
    state = gplib.gp_condition(spec, options.init_noise, X, ys, dim=dim)
    if options.fit_hyperparams and state.n >= 2:
        state = gplib.fit_gp_hyperparams(state, options.gp_steps, options.gp_lr)
    sw = math.sqrt(state.kernel.signal_variance)
    return gplib.BLRState(sw, max(state.noise_std, gplib.NOISE_FLOOR), np.asarray(X).reshape(-1, dim), ys)


def _standardizer(y, enabled):
    if not enabled or len(y) == 0:
        return 0.0, 1.0
    shift = float(np.mean(y))
    scale = float(np.std(y)) if len(y) >= 2 else 1.0
    return shift, (scale if scale > 0 else 1.0)


def run(strategy: Strategy, benchmark, model=None, T: int = 50, seed: int = 0,
        options: RunOptions | None = None, initial_data=None) -> RunTrace:
    """Run one optimisation and return its per-round trace.

    Numerical or benchmark failures end the run early with ``status``
    describing the failure; the partial trace is kept. On finite domains with
    ``options.no_repeat`` the run also ends cleanly once every row has been
    queried.

    ``initial_data`` optionally seeds both datasets with offline target
    observations ``(X, y)`` before round 1.
    """
    options = options or RunOptions()
    if T < 1:
        raise InvalidArgument("T must be >= 1")
    if strategy.needs_model and model is None:
        raise InvalidArgument(f"strategy {strategy.label} requires a pretrained model")
    space = benchmark.space
    dim = space.encoded_dim
    acfg = strategy.acq_config(T, options.normalize_lambda)
    trace = RunTrace(strategy.label, seed, getattr(benchmark, "name", "benchmark"), config={
        "strategy": asdict(strategy), "options": asdict(options), "T": T, "dim": dim,
        "benchmark": getattr(benchmark, "name", "benchmark"), "backend": gplib._backend.BACKEND,
    })
    cand = benchmark.candidates
    discrete = cand is not None
    domain_size = len(cand) if discrete else None
    if discrete:
        cand_unit = space.to_unit(cand)
        cand_z = embed(model, cand) if strategy.uses_warm else None

    warm0, cold0 = _initial_specs(options, model)
    lat = model.latent_dim if model is not None else 0
    X_obs, y_obs = np.zeros((0, dim)), np.zeros(0)
    if initial_data is not None:
        X_obs = np.asarray(initial_data[0], dtype=np.float64).reshape(-1, dim)
        y_obs = np.asarray(initial_data[1], dtype=np.float64).ravel()
    Z_obs = embed(model, X_obs) if (strategy.uses_warm and len(X_obs)) else np.zeros((0, lat))
    visited: set = set()
    noise_rng = np.random.default_rng([seed, 0])
    init_rng = np.random.default_rng([seed, 2])
    best = -math.inf
    f_star = benchmark.f_star

    def warm_inputs(Xrel):
        return embed(model, space.transform(Xrel))

    for t in range(1, T + 1):
        tic = time.perf_counter()
        try:
            beta = options.beta(t, T, domain_size)
            a_w = a_c = math.nan
            lam = 1.0 if strategy.kind == "gp-ucb" else (0.0 if strategy.kind == "offline-dkl" else math.nan)
            if discrete and options.no_repeat:
                avail = no_repeat_filter(len(cand), visited)
            elif discrete:
                avail = np.arange(len(cand))
            if t <= options.n_init:
                if discrete:
                    i = int(avail[init_rng.integers(len(avail))])
                    x_t = cand[i]
                else:
                    lo, hi = space.bounds()
                    x_t = space.transform(lo + init_rng.random(dim) * (hi - lo))
            else:
                shift, scale = _standardizer(y_obs, options.standardize)
                ys = (y_obs - shift) / scale
                cold = warm = None
                if strategy.uses_cold:
                    cs = _fit(cold0[0], cold0[1], space.to_unit(X_obs), ys, options, dim)
                    cold = _Posterior(cs, shift, scale)
                if strategy.uses_warm:
                    if strategy.kind == "jumbo-blr":
                        ws = _fit_blr(Z_obs, ys, options, lat)
                    else:
                        ws = _fit(warm0[0], warm0[1], Z_obs, ys, options, lat)
                    warm = _Posterior(ws, shift, scale)
                if discrete:
                    x_t, i, a_w, a_c, lam = _select_discrete(
                        strategy, acfg, warm, cold, cand, cand_unit, cand_z, avail, beta)
                else:
                    x_t, a_w, a_c, lam = _select_continuous(
                        strategy, acfg, warm, cold, space, warm_inputs, X_obs, y_obs, beta,
                        seed, t, options)
            y_t = float(benchmark.query(x_t, noise_rng))
            f_t = float(benchmark.f(x_t)[0])
        except BudgetExhausted:
            trace.status = "budget-exhausted"
            break
        except (NumericalFailure, InvalidArgument, ArithmeticError, ValueError) as exc:
            trace.status = f"failed: round {t}: {exc}"
            break
        if discrete:
            visited.add(i)
        x_t = np.asarray(x_t, dtype=np.float64).copy()
        X_obs = np.vstack([X_obs, x_t])
        y_obs = np.append(y_obs, y_t)
        if strategy.uses_warm:
            Z_obs = np.vstack([Z_obs, embed(model, x_t)[None, :]])
        best = max(best, f_t)
        trace.records.append(RoundRecord(
            t, x_t, y_t, f_t, float(lam), float(a_w), float(a_c), beta, best, f_star - best,
            f_star - f_t, time.perf_counter() - tic))
    return trace


def _select_discrete(strategy, acfg, warm, cold, cand, cand_unit, cand_z, avail, beta):
    C_unit = cand_unit[avail]
    if strategy.kind == "gp-ucb":
        a_c = ucb(cold, C_unit, beta)
        m = maximize_acq(lambda _: a_c, None, candidates=C_unit)
        j = m.index
        return cand[avail[j]], int(avail[j]), math.nan, float(a_c[j]), 1.0
    a_w = ucb(warm, cand_z[avail], beta)
    if strategy.kind == "offline-dkl":
        m = maximize_acq(lambda _: a_w, None, candidates=C_unit)
        j = m.index
        return cand[avail[j]], int(avail[j]), float(a_w[j]), math.nan, 0.0
    a_c = ucb(cold, C_unit, beta)
    star = float(np.max(a_w))
    scale = float(star - np.min(a_w)) if acfg.normalize else 1.0
    lam = np.asarray(jumbo_lambda(star, a_w, acfg, scale))
    combined = combine(lam, a_c, a_w)
    if acfg.lambda_mode == "indicator":
        # On a finite domain the query is taken from the near-optimal region only.
        score = np.where(lam == 1.0, combined, -np.inf)
    else:
        score = combined
    m = maximize_acq(lambda _: score, None, candidates=C_unit)
    j = m.index
    return cand[avail[j]], int(avail[j]), float(a_w[j]), float(a_c[j]), float(lam[j])


def _select_continuous(strategy, acfg, warm, cold, space, warm_inputs, X_obs, y_obs, beta, seed, t,
                       options):
    incumbent = X_obs[int(np.argmax(y_obs))] if len(y_obs) else None
    kw = dict(incumbent=incumbent, restarts=options.restarts, generations=options.generations)
    final_seed = [seed, 1, t]

    def cold_score(Xrel):
        return ucb(cold, space.to_unit(space.transform(Xrel)), beta)

    def warm_score(Xrel):
        return ucb(warm, warm_inputs(Xrel), beta)

    if strategy.kind == "gp-ucb":
        m = maximize_acq(cold_score, space, final_seed, **kw)
        x = space.transform(m.x)
        return x, math.nan, float(ucb(cold, space.to_unit(x), beta)), 1.0
    if strategy.kind == "offline-dkl":
        m = maximize_acq(warm_score, space, final_seed, **kw)
        x = space.transform(m.x)
        return x, float(ucb(warm, warm_inputs(x), beta)), math.nan, 0.0
    mw = maximize_acq(warm_score, space, [seed, 3, t], **kw)
    star = float(mw.value)
    scale = float(star - np.min(mw.values)) if acfg.normalize else 1.0

    def combined_score(Xrel):
        a_w = warm_score(Xrel)
        a_c = cold_score(Xrel)
        return combine(jumbo_lambda(star, a_w, acfg, scale), a_c, a_w)

    m = maximize_acq(combined_score, space, final_seed, **kw)
    x = space.transform(m.x)
    a_w = float(ucb(warm, warm_inputs(x), beta))
    a_c = float(ucb(cold, space.to_unit(x), beta))
    return x, a_w, a_c, float(jumbo_lambda(star, a_w, acfg, scale))


@dataclass
class Comparison:
    traces: dict
    failures: int
    T: int

    def regret_matrix(self, label):
        """Seeds x rounds simple-regret matrix; early-stopped runs carry their last value."""
        rows = []
        for tr in self.traces[label]:
            if tr.status.startswith("failed"):
                continue
            r = tr.simple_regret
            if r.size == 0:
                continue
            rows.append(np.concatenate([r, np.full(self.T - r.size, r[-1])]))
        return np.array(rows).reshape(len(rows), self.T)

    def summary(self):
        """``{label: (median, stderr)}`` per round."""
        out = {}
        for label in self.traces:
            M = self.regret_matrix(label)
            med = np.median(M, axis=0) if len(M) else np.full(self.T, np.nan)
            se = M.std(axis=0, ddof=1) / math.sqrt(len(M)) if len(M) > 1 else np.zeros(self.T)
            out[label] = (med, se)
        return out

    def to_csv(self) -> str:
        return summary_csv(self.summary(), self.T)


def summary_csv(summary: dict, T: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = list(summary)
    w.writerow(["t"] + [f"{lab}_{k}" for lab in labels for k in ("median", "stderr")])
    for t in range(T):
        w.writerow([t + 1] + [repr(float(summary[lab][k][t])) for lab in labels for k in (0, 1)])
    return buf.getvalue()


def compare(strategies, benchmark, T: int, seeds, model=None, options: RunOptions | None = None,
            workers: int = 1) -> Comparison:
    """Run every (strategy, seed) pair and aggregate simple regret per round."""
    if not strategies or not seeds:
        raise InvalidArgument("need at least one strategy and one seed")
    jobs = [(s, seed) for s in strategies for seed in seeds]

    def one(job):
        s, seed = job
        return run(s, benchmark, model, T, seed, options)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    traces: dict = {}
    failures = 0
    for (s, _), tr in zip(jobs, results):
        traces.setdefault(s.label, []).append(tr)
        failures += tr.status.startswith("failed")
    return Comparison(traces, failures, T)


def cumulative_regret(trace, f_star=None):
    return regret_curves(trace, trace_f_star(trace) if f_star is None else f_star)[1]


def trace_f_star(trace) -> float:
    r = trace.records[0]
    return r.f + r.instant_regret
