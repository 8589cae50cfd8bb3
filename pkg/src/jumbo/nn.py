"""Multi-head tanh MLP pretrained on offline auxiliary data.

Architecture: ``n_layers`` tanh layers of ``hidden_units``, optional dropout,
a tanh projection to ``latent_dim`` features, and one linear head per task.
The latent projection is the frozen feature map fed to the warm GP.

Forward and backward passes are written out by hand in numpy; the network is
small enough that a framework would only add overhead.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import gp as gplib
from .errors import InvalidArgument, NumericalFailure, ParseError
from .optim import Adam

_MAGIC = b"JUMBO-MLP 1\n"


@dataclass(frozen=True)
class MLPConfig:
    n_layers: int = 3
    hidden_units: int = 32
    latent_dim: int = 4
    dropout_rate: float = 0.0
    num_tasks: int = 1
    learning_rate: float = 5e-5
    batch_size: int = 128
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    patience: int = 50

    def __post_init__(self):
        for name in ("n_layers", "hidden_units", "latent_dim", "num_tasks", "batch_size"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgument("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidArgument("val_fraction must lie in [0, 1)")
        if self.epochs < 0 or self.learning_rate <= 0:
            raise InvalidArgument("epochs must be >= 0 and learning_rate > 0")


# Circuit-style defaults; the HPO-style defaults are the MLPConfig defaults.
CIRCUIT_CONFIG = dict(n_layers=3, hidden_units=200, latent_dim=32, learning_rate=3e-4,
                      batch_size=64, dropout_rate=0.5)


@dataclass
class OfflineDataset:
    """Per-task offline evaluations plus an optional target-task subset.

    ``tasks`` maps a task name to ``(X, y)`` with ``X`` of shape (n_k, d).
    ``target`` is the (usually tiny) offline data of the target function.
    """

    tasks: dict
    target: tuple | None = None

    def __post_init__(self):
        if not self.tasks:
            raise InvalidArgument("offline dataset has no tasks")
        dims = set()
        clean = {}
        for name, (X, y) in self.tasks.items():
            X = np.atleast_2d(np.asarray(X, dtype=np.float64))
            y = np.asarray(y, dtype=np.float64).ravel()
            if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
                raise InvalidArgument(f"task {name!r} needs >= 1 point and matching X/y rows")
            dims.add(X.shape[1])
            clean[name] = (X, y)
        if len(dims) != 1:
            raise InvalidArgument(f"tasks disagree on input dimension: {sorted(dims)}")
        self.tasks = clean
        if self.target is not None:
            X, y = self.target
            X = np.atleast_2d(np.asarray(X, dtype=np.float64))
            if X.size == 0:
                self.target = None
            else:
                self.target = (X, np.asarray(y, dtype=np.float64).ravel())

    @property
    def task_names(self):
        return list(self.tasks)

    @property
    def dim(self) -> int:
        return next(iter(self.tasks.values()))[0].shape[1]

    def stacked(self):
        """All pairs as ``(X, task_index, y)`` arrays, tasks in insertion order."""
        Xs, ks, ys = [], [], []
        for k, (X, y) in enumerate(self.tasks.values()):
            Xs.append(X)
            ks.append(np.full(len(y), k))
            ys.append(y)
        return np.vstack(Xs), np.concatenate(ks), np.concatenate(ys)


@dataclass(eq=False)
class SurrogateModel:
    config: MLPConfig
    input_dim: int
    params: dict
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    task_names: list
    history: list = field(default_factory=list)
    gp_init: dict = field(default_factory=dict)

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def param_names(self):
        names = []
        for i in range(self.config.n_layers):
            names += [f"W{i}", f"b{i}"]
        return names + ["Wz", "bz", "Wh", "bh"]

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(
            self.config, self.input_dim, {k: v.copy() for k, v in self.params.items()},
            self.input_mean.copy(), self.input_std.copy(), self.target_mean.copy(),
            self.target_std.copy(), list(self.task_names), list(self.history), dict(self.gp_init),
        )


def init_model(cfg: MLPConfig, input_dim: int, task_names=None) -> SurrogateModel:
    """Random model; weights and biases uniform in +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    fan_in = input_dim
    for i in range(cfg.n_layers):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, (fan_in, cfg.hidden_units))
        params[f"b{i}"] = rng.uniform(-bound, bound, cfg.hidden_units)
        fan_in = cfg.hidden_units
    bound = 1.0 / math.sqrt(fan_in)
    params["Wz"] = rng.uniform(-bound, bound, (fan_in, cfg.latent_dim))
    params["bz"] = rng.uniform(-bound, bound, cfg.latent_dim)
    bound = 1.0 / math.sqrt(cfg.latent_dim)
    params["Wh"] = rng.uniform(-bound, bound, (cfg.latent_dim, cfg.num_tasks))
    params["bh"] = rng.uniform(-bound, bound, cfg.num_tasks)
    names = list(task_names) if task_names is not None else [f"task{k}" for k in range(cfg.num_tasks)]
    return SurrogateModel(
        cfg, input_dim, params, np.zeros(input_dim), np.ones(input_dim),
        np.zeros(cfg.num_tasks), np.ones(cfg.num_tasks), names,
    )


def _forward(model: SurrogateModel, X, mask=None):
    """Batch forward pass on raw inputs; returns (z, heads, cache for backprop)."""
    p = model.params
    h = (X - model.input_mean) / model.input_std
    acts = [h]
    for i in range(model.config.n_layers):
        h = np.tanh(h @ p[f"W{i}"] + p[f"b{i}"])
        acts.append(h)
    if mask is not None:
        h = h * mask
    z = np.tanh(h @ p["Wz"] + p["bz"])
    heads = z @ p["Wh"] + p["bh"]
    return z, heads, (acts, h, mask)


def _backward(model: SurrogateModel, z, cache, d_heads):
    p = model.params
    acts, h_drop, mask = cache
    g = {"Wh": z.T @ d_heads, "bh": d_heads.sum(axis=0)}
    dz = (d_heads @ p["Wh"].T) * (1.0 - z * z)
    g["Wz"] = h_drop.T @ dz
    g["bz"] = dz.sum(axis=0)
    dh = dz @ p["Wz"].T
    if mask is not None:
        dh = dh * mask
    for i in reversed(range(model.config.n_layers)):
        a = acts[i + 1]
        da = dh * (1.0 - a * a)
        g[f"W{i}"] = acts[i].T @ da
        g[f"b{i}"] = da.sum(axis=0)
        dh = da @ p[f"W{i}"].T
    return g


def _check_finite_input(X):
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("input contains non-finite values")
    return X


def mlp_forward(model: SurrogateModel, x, mode: str = "eval", rng=None):
    """Latent features and head outputs (standardised target units).

    In ``"train"`` mode dropout is applied after the trunk using ``rng``.
    Accepts one point or a batch of rows.
    """
    X = _check_finite_input(x)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    mask = None
    rate = model.config.dropout_rate
    if mode == "train" and rate > 0:
        rng = rng if rng is not None else np.random.default_rng(model.config.seed)
        mask = (rng.random((X.shape[0], model.config.hidden_units)) >= rate) / (1.0 - rate)
    elif mode not in ("train", "eval"):
        raise InvalidArgument(f"mode must be 'train' or 'eval', got {mode!r}")
    z, heads, _ = _forward(model, X, mask)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(heads))):
        raise NumericalFailure("non-finite activations in forward pass")
    return (z[0], heads[0]) if single else (z, heads)


def embed(model: SurrogateModel, x):
    """Deterministic latent features ``h(x)`` (dropout off)."""
    return mlp_forward(model, x, "eval")[0]


def predict_tasks(model: SurrogateModel, x):
    """Head outputs in the original units of each task."""
    _, heads = mlp_forward(model, x, "eval")
    return heads * model.target_std + model.target_mean


def mse_loss_and_grads(model: SurrogateModel, X, task_idx, y, mask=None):
    """Sum over tasks of the per-task mean squared error, and its gradients.

    ``y`` must already be in standardised units. Tasks absent from the batch
    contribute nothing.
    """
    z, heads, cache = _forward(model, X, mask)
    rows = np.arange(X.shape[0])
    resid = heads[rows, task_idx] - y
    counts = np.bincount(task_idx, minlength=model.config.num_tasks).astype(np.float64)
    weight = 1.0 / counts[task_idx]
    loss = float(np.sum(weight * resid * resid))
    d_heads = np.zeros_like(heads)
    d_heads[rows, task_idx] = 2.0 * weight * resid
    return loss, _backward(model, z, cache, d_heads)


def lipschitz_bound(model: SurrogateModel) -> float:
    """Upper bound on the Lipschitz constant of ``embed`` (Euclidean norms)."""
    L = 1.0 / float(np.min(model.input_std))
    for i in range(model.config.n_layers):
        L *= np.linalg.norm(model.params[f"W{i}"], 2)
    L *= np.linalg.norm(model.params["Wz"], 2)
    return float(L)


class _Trainer:
    """Resumable minibatch Adam training of a SurrogateModel on an OfflineDataset."""

    def __init__(self, data: OfflineDataset, cfg: MLPConfig):
        if cfg.num_tasks != len(data.tasks):
            cfg = MLPConfig(**{**asdict(cfg), "num_tasks": len(data.tasks)})
        self.cfg = cfg
        X, k, y = data.stacked()
        self.model = init_model(cfg, data.dim, data.task_names)
        m = self.model
        m.input_mean = X.mean(axis=0)
        std = X.std(axis=0)
        m.input_std = np.where(std > 0, std, 1.0)
        for t, (_, yt) in enumerate(data.tasks.values()):
            m.target_mean[t] = yt.mean()
            s = yt.std()
            m.target_std[t] = s if s > 0 else 1.0
        ys = (y - m.target_mean[k]) / m.target_std[k]
        self.rng = np.random.default_rng(cfg.seed + 1)
        order = self.rng.permutation(len(y))
        n_val = int(round(cfg.val_fraction * len(y))) if len(y) >= 5 else 0
        val, tr = order[:n_val], order[n_val:]
        self.train = (X[tr], k[tr], ys[tr])
        self.val = (X[val], k[val], ys[val]) if n_val else None
        names = m.param_names()
        self.opt = Adam([m.params[n] for n in names], lr=cfg.learning_rate)
        self.epoch = 0
        self.best_val = math.inf
        self.best_params = None
        self.stale = 0

    def mse(self, part):
        X, k, y = part
        return mse_loss_and_grads(self.model, X, k, y)[0] if len(y) else 0.0

    def run(self, epochs: int):
        m, cfg = self.model, self.cfg
        names = m.param_names()
        X, k, y = self.train
        n = len(y)
        for _ in range(epochs):
            self.epoch += 1
            perm = self.rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                mask = None
                if cfg.dropout_rate > 0:
                    keep = self.rng.random((len(idx), cfg.hidden_units)) >= cfg.dropout_rate
                    mask = keep / (1.0 - cfg.dropout_rate)
                loss, g = mse_loss_and_grads(m, X[idx], k[idx], y[idx], mask)
                if not math.isfinite(loss):
                    raise NumericalFailure(f"training loss diverged at epoch {self.epoch}")
                self.opt.step([m.params[p] for p in names], [g[p] for p in names])
            train_mse = self.mse(self.train)
            if not math.isfinite(train_mse):
                raise NumericalFailure(f"training loss diverged at epoch {self.epoch}")
            rec = {"epoch": self.epoch, "train_mse": train_mse}
            if self.val is not None:
                val_mse = self.mse(self.val)
                rec["val_mse"] = val_mse
                if val_mse < self.best_val:
                    self.best_val, self.stale = val_mse, 0
                    self.best_params = {p: v.copy() for p, v in m.params.items()}
                else:
                    self.stale += 1
            m.history.append(rec)
            if self.val is not None and self.stale >= cfg.patience:
                break

    def finish(self) -> SurrogateModel:
        if self.best_params is not None:
            for p, v in self.best_params.items():
                self.model.params[p][...] = v
        return self.model


def pretrain(data: OfflineDataset, cfg: MLPConfig, restarts: int = 1) -> SurrogateModel:
    """Fit every head to its task by minibatch Adam on the summed per-task MSE.

    Targets are standardised per task. With a validation fraction the
    parameters with the best validation loss are kept and training stops
    after ``patience`` epochs without improvement. ``epochs=0`` returns the
    initial model.

    ``restarts > 1`` trains from initialisations ``cfg.seed, cfg.seed + 1, ...``
    and keeps the one with the lowest validation loss (training loss when
    there is no validation split).
    """
    best, best_loss = None, math.inf
    for r in range(max(1, restarts)):
        rcfg = cfg if r == 0 else MLPConfig(**{**asdict(cfg), "seed": cfg.seed + r})
        trainer = _Trainer(data, rcfg)
        trainer.run(rcfg.epochs)
        model = trainer.finish()
        loss = trainer.mse(trainer.val) if trainer.val is not None else trainer.mse(trainer.train)
        if best is None or loss < best_loss:
            best, best_loss = model, loss
    return best


class JointPretrainResult(NamedTuple):
    model: SurrogateModel
    warm: "gplib.KernelSpec"
    cold: "gplib.KernelSpec"
    warm_noise: float
    cold_noise: float
    losses: list


def _standardize(y):
    s = y.std()
    return (y - y.mean()) / (s if s > 0 else 1.0)


def joint_pretrain(data: OfflineDataset, cfg: MLPConfig, warm: "gplib.KernelSpec",
                   cold: "gplib.KernelSpec", warm_noise: float = 0.1, cold_noise: float = 0.1,
                   outer_iters: int = 4, gp_steps: int = 100, cold_input_map=None) -> JointPretrainResult:
    """Pretrain the network together with warm- and cold-GP hyperparameters.

    Minimises ``MSE(aux) + NLL_warm(target) + NLL_cold(target)`` by
    alternation: a block of network epochs on the auxiliary data, then the
    warm GP on ``(embed(x), y)`` of the offline target data, then the cold GP
    on the raw target data. ``cfg.epochs`` is split across ``outer_iters``
    blocks. The iterate with the lowest total is returned; ``losses`` holds
    the total after each block.

    Without offline target data this is ``pretrain`` and the kernels come
    back unchanged.
    """
    if data.target is None:
        return JointPretrainResult(pretrain(data, cfg), warm, cold, warm_noise, cold_noise, [])
    Xf, yf = data.target
    yf = _standardize(yf)
    Xc = cold_input_map(Xf) if cold_input_map is not None else Xf
    trainer = _Trainer(data, cfg)
    per_block = [cfg.epochs // outer_iters + (1 if i < cfg.epochs % outer_iters else 0)
                 for i in range(outer_iters)]
    best, best_total, losses = None, math.inf, []
    w_spec, w_noise, c_spec, c_noise = warm, warm_noise, cold, cold_noise
    for epochs in per_block:
        trainer.run(epochs)
        model = trainer.model
        mse = trainer.mse(trainer.train)
        w_gp = gplib.fit_gp_hyperparams(gplib.gp_condition(w_spec, w_noise, embed(model, Xf), yf), gp_steps)
        c_gp = gplib.fit_gp_hyperparams(gplib.gp_condition(c_spec, c_noise, Xc, yf), gp_steps)
        w_spec, w_noise, c_spec, c_noise = w_gp.kernel, w_gp.noise_std, c_gp.kernel, c_gp.noise_std
        total = mse + gplib.gp_nll(w_gp)[0] + gplib.gp_nll(c_gp)[0]
        losses.append(total)
        if total < best_total:
            best_total = total
            best = (model.copy(), w_spec, c_spec, w_noise, c_noise)
    model, w_spec, c_spec, w_noise, c_noise = best
    model.gp_init = {
        "warm": {"kind": w_spec.kind, "lengthscale": w_spec.lengthscale,
                 "signal_variance": w_spec.signal_variance, "noise": w_noise},
        "cold": {"kind": c_spec.kind, "lengthscale": c_spec.lengthscale,
                 "signal_variance": c_spec.signal_variance, "noise": c_noise},
    }
    return JointPretrainResult(model, w_spec, c_spec, w_noise, c_noise, losses)


def per_task_mse(model: SurrogateModel, data: OfflineDataset) -> dict:
    """Mean squared error of each head on its task, in standardised units."""
    out = {}
    for t, (name, (X, y)) in enumerate(data.tasks.items()):
        pred = mlp_forward(model, X, "eval")[1][:, t]
        ys = (y - model.target_mean[t]) / model.target_std[t]
        out[name] = float(np.mean((pred - ys) ** 2))
    return out


def save_model(model: SurrogateModel, path) -> None:
    """Write a self-describing file: magic line, JSON header line, raw little-endian float64 blobs."""
    arrays = {f"param.{n}": model.params[n] for n in model.param_names()}
    arrays.update({
        "input_mean": model.input_mean, "input_std": model.input_std,
        "target_mean": model.target_mean, "target_std": model.target_std,
    })
    blobs, entries, offset = [], [], 0
    for name, arr in arrays.items():
        b = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = {
        "config": asdict(model.config), "input_dim": model.input_dim, "task_names": model.task_names,
        "history": model.history, "gp_init": model.gp_init, "arrays": entries,
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)


def load_model(path) -> SurrogateModel:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ParseError(f"{path}: not a model file", 1)
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: corrupt header ({exc})", 2) from None
        payload = fh.read()
    arrays = {}
    for e in header["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ParseError(f"{path}: truncated array {e['name']}")
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(e["shape"])
    cfg = MLPConfig(**header["config"])
    params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
    return SurrogateModel(
        cfg, header["input_dim"], params, arrays["input_mean"], arrays["input_std"],
        arrays["target_mean"], arrays["target_std"], header["task_names"],
        header["history"], header["gp_init"],
    )
