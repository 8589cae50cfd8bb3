"""Exact Gaussian-process regression and Bayesian linear regression.

All states are immutable once built: conditioning computes the Cholesky
factor of the regularised Gram matrix once and every posterior query reuses
it. Hyperparameters live in log space for fitting:
``[log lengthscale, log signal_std, log noise_std]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import _backend
from .errors import InvalidArgument, NumericalFailure
from .optim import Adam

KERNEL_KINDS = {"Matern52": 0, "RBF": 1, "Linear": 2}
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
NOISE_FLOOR = 1e-4
# Box on log-hyperparameters during fitting; keeps exp() finite.
_LOG_BOUNDS = (
    (math.log(1e-3), math.log(1e3)),
    (math.log(1e-3), math.log(1e3)),
    (math.log(NOISE_FLOOR), math.log(1e2)),
)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic stationary kernel (or linear kernel) with its hyperparameters."""

    kind: str = "Matern52"
    lengthscale: float = 0.5
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidArgument(f"unknown kernel kind {self.kind!r}; expected one of {list(KERNEL_KINDS)}")
        for name in ("lengthscale", "signal_variance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be a positive finite number, got {v!r}")

    @property
    def code(self) -> int:
        return KERNEL_KINDS[self.kind]


def _as_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument(f"{name} contains non-finite values")
    return X


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Evaluate the kernel on a single pair of points."""
    x = np.asarray(x, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x.shape != x2.shape:
        raise InvalidArgument(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    return float(kernel_matrix(spec, x[None, :], x2[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, X1, X2) -> np.ndarray:
    X1 = _as_matrix(X1, "X1")
    X2 = _as_matrix(X2, "X2")
    if X1.shape[1] != X2.shape[1]:
        raise InvalidArgument(f"dimension mismatch: {X1.shape[1]} vs {X2.shape[1]}")
    return _backend.gram(X1, X2, spec.code, spec.lengthscale, spec.signal_variance)


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    X = _as_matrix(X)
    if spec.kind == "Linear":
        return spec.signal_variance * np.einsum("ij,ij->i", X, X)
    return np.full(X.shape[0], spec.signal_variance)


def cholesky_with_jitter(A: np.ndarray):
    """Cholesky factor of ``A + eps I`` for the first ``eps`` on the jitter ladder that works.

    Returns ``(L, eps)``. Raises NumericalFailure once the ladder is exhausted.
    """
    n = A.shape[0]
    eye = np.eye(n)
    for eps in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(A + eps * eye if eps else A)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, eps
    raise NumericalFailure(f"Cholesky failed for every jitter in {JITTER_LADDER}")


@dataclass(frozen=True, eq=False)
class GPState:
    """A zero-mean GP conditioned on noisy observations.

    ``chol`` is the lower Cholesky factor of ``K(X, X) + noise_std**2 I``
    (plus ``jitter`` on the diagonal if the ladder needed it) and ``alpha``
    caches ``chol^-T chol^-1 y``.
    """

    kernel: KernelSpec
    noise_std: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict(self, Xstar):
        """Posterior mean and marginal variance (diagonal only) at the rows of ``Xstar``."""
        return gp_predict(self, Xstar)


def gp_condition(spec: KernelSpec, noise: float, X, y, dim: int | None = None) -> GPState:
    """Condition a zero-mean GP prior on ``(X, y)``.

    ``X`` may have zero rows; pass ``dim`` in that case so the prior state
    knows its input dimension.
    """
    if not (math.isfinite(noise) and noise >= 0):
        raise InvalidArgument(f"noise must be non-negative and finite, got {noise!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        if dim is None:
            dim = X.shape[1] if X.ndim == 2 else 0
        X = np.zeros((0, dim))
    else:
        X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise InvalidArgument(f"|y|={y.shape[0]} does not match rows(X)={X.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("y contains non-finite values")
    if X.shape[0] == 0:
        return GPState(spec, float(noise), X, y, np.zeros((0, 0)), np.zeros(0))
    K = _backend.gram(X, X, spec.code, spec.lengthscale, spec.signal_variance)
    K[np.diag_indices_from(K)] += noise * noise
    L, eps = cholesky_with_jitter(K)
    alpha = cho_solve((L, True), y)
    return GPState(spec, float(noise), X, y, L, alpha, eps)


def _check_query(gp: GPState, Xstar) -> np.ndarray:
    Xstar = _as_matrix(Xstar, "Xstar")
    if Xstar.shape[1] != gp.dim:
        raise InvalidArgument(f"Xstar has {Xstar.shape[1]} columns, training dimension is {gp.dim}")
    return Xstar


def gp_posterior(gp: GPState, Xstar):
    """Full posterior ``(mean, cov)`` of the latent function at ``Xstar``."""
    Xstar = _check_query(gp, Xstar)
    Kss = kernel_matrix(gp.kernel, Xstar, Xstar)
    if gp.n == 0:
        return np.zeros(Xstar.shape[0]), Kss
    Ks = _backend.gram(gp.X, Xstar, gp.kernel.code, gp.kernel.lengthscale, gp.kernel.signal_variance)
    mean = Ks.T @ gp.alpha
    V = solve_triangular(gp.chol, Ks, lower=True)
    cov = Kss - V.T @ V
    d = np.diag_indices_from(cov)
    cov[d] = np.maximum(cov[d], 0.0)
    return mean, cov


def gp_predict(gp: GPState, Xstar):
    """Posterior mean and clamped marginal variance; O(n m) memory, no m x m matrix."""
    Xstar = _check_query(gp, Xstar)
    prior = kernel_diag(gp.kernel, Xstar)
    if gp.n == 0:
        return np.zeros(Xstar.shape[0]), prior
    Ks = _backend.gram(gp.X, Xstar, gp.kernel.code, gp.kernel.lengthscale, gp.kernel.signal_variance)
    mean = Ks.T @ gp.alpha
    V = solve_triangular(gp.chol, Ks, lower=True)
    var = prior - np.einsum("ij,ij->j", V, V)
    return mean, np.maximum(var, 0.0)


def log_params(spec: KernelSpec, noise: float) -> np.ndarray:
    return np.array([math.log(spec.lengthscale), 0.5 * math.log(spec.signal_variance), math.log(noise)])


def _from_log(kind: str, theta: np.ndarray):
    spec = KernelSpec(kind, float(np.exp(theta[0])), float(np.exp(2.0 * theta[1])))
    return spec, float(np.exp(theta[2]))


def gp_nll(gp: GPState):
    """Negative log marginal likelihood and its gradient in log-hyperparameter space.

    Returns
    -------
    value : float
        ``0.5 y^T Kt^-1 y + 0.5 log det Kt + (n/2) log 2 pi``.
    grad : ndarray, shape (3,)
        Derivatives with respect to ``[log lengthscale, log signal_std, log noise_std]``.
        The lengthscale entry is 0 for the linear kernel.
    """
    n = gp.n
    if n == 0:
        raise InvalidArgument("gp_nll needs at least one observation")
    spec = gp.kernel
    Kf, dK_ls = _backend.gram_with_grad(gp.X, spec.code, spec.lengthscale, spec.signal_variance)
    L, a = gp.chol, gp.alpha
    value = 0.5 * float(gp.y @ a) + float(np.sum(np.log(np.diag(L)))) + 0.5 * n * _LOG_2PI
    W = cho_solve((L, True), np.eye(n)) - np.outer(a, a)
    grad = np.array([
        0.5 * float(np.sum(W * dK_ls)),
        float(np.sum(W * Kf)),
        float(np.trace(W)) * gp.noise_std**2,
    ])
    return value, grad


def fit_gp_hyperparams(gp: GPState, steps: int = 100, lr: float = 0.1) -> GPState:
    """Fit kernel hyperparameters and noise by Adam on the negative log marginal likelihood.

    The best iterate (lowest NLL) is returned, not the last. Noise never goes
    below ``NOISE_FLOOR``. ``steps=0`` returns ``gp`` itself.
    """
    if steps <= 0:
        return gp
    if gp.n < 1:
        raise InvalidArgument("cannot fit hyperparameters without observations")
    kind = gp.kernel.kind
    lo = np.array([b[0] for b in _LOG_BOUNDS])
    hi = np.array([b[1] for b in _LOG_BOUNDS])
    theta = np.clip(log_params(gp.kernel, max(gp.noise_std, NOISE_FLOOR)), lo, hi)
    opt = Adam([theta], lr=lr)
    best_state, best_value = None, math.inf
    for _ in range(steps + 1):
        spec, noise = _from_log(kind, theta)
        try:
            state = gp_condition(spec, noise, gp.X, gp.y)
            value, grad = gp_nll(state)
        except NumericalFailure:
            state, value = None, math.inf
        if state is not None and math.isfinite(value) and value < best_value:
            best_state, best_value = state, value
        if state is None or not np.all(np.isfinite(grad)):
            if best_state is None:
                continue
            theta[:] = log_params(best_state.kernel, best_state.noise_std)
            opt.lr *= 0.5
            continue
        if kind == "Linear":
            grad[0] = 0.0
        opt.step([theta], [grad])
        np.clip(theta, lo, hi, out=theta)
    if best_state is None:
        raise NumericalFailure("every hyperparameter iterate failed to factorise")
    return best_state


@dataclass(frozen=True, eq=False)
class BLRState:
    """Bayesian linear regression ``y = phi^T w + eps`` with prior ``w ~ N(0, weight_prior_std^2 I)``."""

    weight_prior_std: float
    noise_std: float
    Phi: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not (self.weight_prior_std > 0 and self.noise_std > 0):
            raise InvalidArgument("weight_prior_std and noise_std must be positive")
        Phi = np.asarray(self.Phi, dtype=np.float64)
        if Phi.ndim != 2:
            raise InvalidArgument(f"Phi must be 2-D, got shape {Phi.shape}")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64).ravel())
        if self.y.shape[0] != Phi.shape[0]:
            raise InvalidArgument("Phi and y have different numbers of rows")

    def predict(self, Phistar):
        """Latent (noise-free) predictive mean and variance."""
        mean, var = blr_fit_predict(self, Phistar)
        return mean, np.maximum(var - self.noise_std**2, 0.0)


def blr_fit_predict(state: BLRState, Phistar):
    """Predictive mean and variance of new targets (observation noise included).

    Posterior precision is ``A = sw^-2 I + s^-2 Phi^T Phi``; the mean is
    ``Phi* A^-1 s^-2 Phi^T y`` and the variance ``diag(Phi* A^-1 Phi*^T) + s^2``.
    """
    Phistar = np.asarray(Phistar, dtype=np.float64)
    if Phistar.ndim == 1:
        Phistar = Phistar[None, :]
    m = state.Phi.shape[1]
    if Phistar.shape[1] != m:
        raise InvalidArgument(f"feature dimension mismatch: {Phistar.shape[1]} vs {m}")
    s2 = state.noise_std**2
    A = np.eye(m) / state.weight_prior_std**2 + state.Phi.T @ state.Phi / s2
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("BLR posterior precision is not positive definite") from exc
    w_mean = cho_solve((L, True), state.Phi.T @ state.y / s2)
    V = solve_triangular(L, Phistar.T, lower=True)
    return Phistar @ w_mean, np.einsum("ij,ij->j", V, V) + s2


def blr_as_gp(state: BLRState) -> GPState:
    """The linear-kernel GP with the same predictive distribution as ``state``."""
    spec = KernelSpec("Linear", 1.0, state.weight_prior_std**2)
    return gp_condition(spec, state.noise_std, state.Phi, state.y, dim=state.Phi.shape[1])


def with_params(gp: GPState, spec: KernelSpec | None = None, noise: float | None = None) -> GPState:
    """Recondition ``gp`` on its own data with new hyperparameters."""
    return gp_condition(spec or gp.kernel, gp.noise_std if noise is None else noise, gp.X, gp.y, dim=gp.dim)


__all__ = [
    "KernelSpec", "GPState", "BLRState", "kernel_eval", "kernel_matrix", "kernel_diag",
    "gp_condition", "gp_posterior", "gp_predict", "gp_nll", "fit_gp_hyperparams",
    "blr_fit_predict", "blr_as_gp", "with_params", "cholesky_with_jitter",
]
