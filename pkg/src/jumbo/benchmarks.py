"""Benchmark problems and regret bookkeeping.

A benchmark exposes ``space`` (a SearchSpace), ``candidates`` (an array of
encoded rows for finite domains, ``None`` for continuous ones), ``f`` (true
target values), ``query`` (noisy observation) and ``f_star``.

Tabular file format (UTF-8 CSV)::

    #space: c(0,1) i(1,5) k(3)
    #tasks: target,aux1
    0.25,3,0,1,0,0.71,0.64
    ...

Each data row holds the encoded coordinates followed by one value per task.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import gp as gplib
from .errors import InvalidArgument, ParseError
from .nn import OfflineDataset
from .space import Categorical, Continuous, Integer, SearchSpace, transform_T  # noqa: F401


@dataclass(eq=False)
class TabularBenchmark:
    """Finite lookup table of target and auxiliary values over encoded configurations."""

    space: SearchSpace
    X: np.ndarray
    values: np.ndarray
    task_names: list
    name: str = "table"
    noise_std: float = 0.0
    duplicates: int = 0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, self.space.encoded_dim)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.X), -1)
        if self.values.shape[1] != len(self.task_names) or not self.task_names:
            raise InvalidArgument("values need one column per task (target first)")
        if len(self.X) == 0:
            raise InvalidArgument("table has no rows")
        self._index = {}
        for i, row in enumerate(self.X):
            key = row.tobytes()
            if key in self._index:
                raise InvalidArgument(f"duplicate configuration in row {i}")
            self._index[key] = i

    @property
    def candidates(self) -> np.ndarray:
        return self.X

    @property
    def target(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def n_aux(self) -> int:
        return self.values.shape[1] - 1

    @property
    def f_star(self) -> float:
        return float(self.target.max())

    @property
    def f_min(self) -> float:
        return float(self.target.min())

    def row_of(self, x) -> int:
        key = np.asarray(x, dtype=np.float64).ravel().tobytes()
        try:
            return self._index[key]
        except KeyError:
            raise InvalidArgument("configuration is not a row of the table") from None

    def f(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.array([self.target[self.row_of(x)] for x in X])

    def query(self, x, rng=None) -> float:
        y = float(self.f(x)[0])
        if self.noise_std > 0 and rng is not None:
            y += self.noise_std * float(rng.standard_normal())
        return y

    def offline_dataset(self, n_points: int | None = None, seed: int = 0, n_target: int = 0) -> OfflineDataset:
        """Auxiliary columns of ``n_points`` random rows, plus ``n_target`` rows of target data."""
        if self.n_aux == 0:
            raise InvalidArgument("table has no auxiliary tasks")
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self.X))
        rows = order if n_points is None else order[:n_points]
        tasks = {name: (self.X[rows], self.values[rows, k + 1])
                 for k, name in enumerate(self.task_names[1:])}
        target = None
        if n_target:
            trows = order[-n_target:]
            target = (self.X[trows], self.target[trows])
        return OfflineDataset(tasks, target)


def _fmt(v: float) -> str:
    return repr(float(v))


def save_tabular(bench: TabularBenchmark, path) -> None:
    lines = [f"#space: {bench.space.header()}", f"#tasks: {','.join(bench.task_names)}"]
    for x, v in zip(bench.X, bench.values):
        lines.append(",".join(_fmt(a) for a in np.concatenate([x, v])))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_tabular(path, name: str | None = None) -> TabularBenchmark:
    """Parse a tabular benchmark file; exact-duplicate configurations keep their first row."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#space:"):
        raise ParseError("first line must be '#space: ...'", 1)
    space = SearchSpace.parse(lines[0][len("#space:"):], line=1)
    if not lines[1].startswith("#tasks:"):
        raise ParseError("second line must be '#tasks: target,...'", 2)
    tasks = [t.strip() for t in lines[1][len("#tasks:"):].split(",") if t.strip()]
    if not tasks:
        raise ParseError("no task names declared", 2)
    d, width = space.encoded_dim, space.encoded_dim + len(tasks)
    lo, hi = space.bounds()
    seen, rows, dup = set(), [], 0
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise ParseError(f"expected {width} fields, got {len(parts)}", lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric field", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("NaN or infinite value", lineno)
        x = np.array(vals[:d])
        if np.any(x < lo) or np.any(x > hi):
            raise ParseError("configuration outside the declared space", lineno)
        key = x.tobytes()
        if key in seen:
            dup += 1
            continue
        seen.add(key)
        rows.append(vals)
    if not rows:
        raise ParseError("table has no data rows", len(lines))
    arr = np.array(rows)
    label = name or os.path.splitext(os.path.basename(str(path)))[0]
    return TabularBenchmark(space, arr[:, :d], arr[:, d:], tasks, label, duplicates=dup)


def _fig3_target(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(6 * np.pi * x) * (1 - 0.7 * x) + 0.3 * x


def _fig3_aux(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(6 * np.pi * x) * (1 - 0.7 * (1 - x)) + 0.3 * (1 - x)


def _grid_argmax(fn, n=100001, refine=True):
    g = np.linspace(0.0, 1.0, n)
    v = fn(g)
    i = int(np.argmax(v))
    if not refine:
        return float(g[i]), float(v[i])
    a, b = g[max(i - 1, 0)], g[min(i + 1, n - 1)]
    phi = (math.sqrt(5) - 1) / 2
    for _ in range(80):
        c, d = b - phi * (b - a), a + phi * (b - a)
        if fn(c) > fn(d):
            b = d
        else:
            a = c
    x = 0.5 * (a + b)
    fx = float(fn(x))
    return (x, fx) if fx >= v[i] else (float(g[i]), float(v[i]))


@dataclass(eq=False)
class SyntheticPair:
    """Closed-form target / auxiliary pair on [0, 1] sharing a periodic component."""

    target_fn: object
    aux_fn: object
    noise_std: float = 0.0
    name: str = "synthetic"
    x_star: float = field(init=False)
    f_star: float = field(init=False)
    aux_x_star: float = field(init=False)
    f_min: float = field(init=False)

    def __post_init__(self):
        self.x_star, self.f_star = _grid_argmax(self.target_fn)
        self.aux_x_star, _ = _grid_argmax(self.aux_fn)
        self.f_min = -_grid_argmax(lambda x: -self.target_fn(x))[1]

    space = SearchSpace.unit_box(1)
    candidates = None

    def f(self, X) -> np.ndarray:
        return self.target_fn(np.atleast_2d(X)[:, 0])

    def aux(self, X) -> np.ndarray:
        return self.aux_fn(np.atleast_2d(X)[:, 0])

    def query(self, x, rng=None) -> float:
        y = float(self.f(x)[0])
        if self.noise_std > 0 and rng is not None:
            y += self.noise_std * float(rng.standard_normal())
        return y

    def offline_dataset(self, n_points: int = 500, seed: int = 0) -> OfflineDataset:
        """Uniform samples of the auxiliary function."""
        X = np.random.default_rng(seed).random((n_points, 1))
        return OfflineDataset({"aux": (X, self.aux(X))})

    def grid_table(self, m: int = 201) -> TabularBenchmark:
        """The pair restricted to a uniform grid, as a finite benchmark."""
        g = np.linspace(0.0, 1.0, m)[:, None]
        return TabularBenchmark(self.space, g, np.column_stack([self.f(g), self.aux(g)]),
                                ["target", "aux"], f"{self.name}-grid{m}", self.noise_std)


def make_fig3_pair(noise_std: float = 0.0) -> SyntheticPair:
    """``f = sin(6 pi x)(1 - 0.7x) + 0.3x`` and ``f1 = sin(6 pi x)(1 - 0.7(1 - x)) + 0.3(1 - x)``.

    Same sine, mirrored envelope and trend, so the two optima sit on different peaks.
    """
    return SyntheticPair(_fig3_target, _fig3_aux, noise_std, "fig3")


def normalized_regret(bench, regret):
    """Regret divided by the target's range ``f_star - f_min``."""
    return np.asarray(regret) / (bench.f_star - bench.f_min)


def sample_gp_prior(spec: gplib.KernelSpec, X, rng) -> np.ndarray:
    """One draw of a zero-mean GP with kernel ``spec`` at the rows of ``X``."""
    K = gplib.kernel_matrix(spec, X, X)
    L, _ = gplib.cholesky_with_jitter(K)
    return L @ rng.standard_normal(len(K))


def prior_table(spec: gplib.KernelSpec, n_points: int = 50, dim: int = 1, seed: int = 0,
                noise_std: float = 0.0) -> TabularBenchmark:
    """Finite benchmark whose target is a GP prior draw on random points in the unit cube."""
    rng = np.random.default_rng(seed)
    X = rng.random((n_points, dim))
    f = sample_gp_prior(spec, X, rng)
    return TabularBenchmark(SearchSpace.unit_box(dim), X, f[:, None], ["target"],
                            f"gp-prior-{seed}", noise_std)


def make_hpo_table(n_rows: int = 400, seed: int = 0, corr_gap: float = 0.3) -> TabularBenchmark:
    """Mixed-type table imitating short-run vs long-run validation scores.

    Space: learning-rate-like continuous, two integer widths, a 3-way
    categorical. The auxiliary column is the target distorted around its
    optimum, so the tasks correlate globally but disagree near the top.
    """
    rng = np.random.default_rng(seed)
    space = SearchSpace((Continuous(0.0, 1.0), Integer(1, 8), Integer(1, 8), Categorical(3)))
    cat_effect = np.array([0.0, 0.35, -0.2])
    rows, seen = [], set()
    while len(rows) < n_rows:
        c = rng.integers(3)
        x = np.array([round(float(rng.random()), 3), rng.integers(1, 9), rng.integers(1, 9),
                      *(np.arange(3) == c)], dtype=np.float64)
        key = x.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(x)
    X = np.array(rows)
    lr, w1, w2 = X[:, 0], (X[:, 1] - 1) / 7, (X[:, 2] - 1) / 7
    cat = X[:, 3:] @ cat_effect
    target = (np.sin(3.0 * lr) * np.cos(2.0 * lr - w1) - (lr - 0.65) ** 2
              - 0.5 * (w1 - 0.7) ** 2 - 0.3 * (w2 - 0.4) ** 2 + cat)
    aux = (np.sin(3.0 * lr) * np.cos(2.0 * lr - w1) - (lr - 0.65 + corr_gap) ** 2
           - 0.5 * (w1 - 0.7) ** 2 - 0.3 * (w2 - 0.4 - corr_gap) ** 2 + 0.8 * cat)
    return TabularBenchmark(space, X, np.column_stack([target, aux]), ["target", "aux"],
                            f"hpo-style-{seed}")


def regret_curves(trace, f_star: float):
    """Simple and cumulative regret per round.

    ``trace`` is a RunTrace or the sequence of true target values at the
    queried points.
    """
    f = np.asarray(getattr(trace, "f_values", trace), dtype=np.float64)
    if f.size == 0:
        return np.zeros(0), np.zeros(0)
    simple = f_star - np.maximum.accumulate(f)
    cumulative = np.cumsum(f_star - f)
    return simple, cumulative
