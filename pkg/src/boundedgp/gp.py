"""Exact Gaussian-process regression on the unit cube.

Inputs live in [0,1]^d and outputs are standardized; the :class:`Dataset`
keeps the affine parameters needed to map back to original units.  A fitted
model caches a Cholesky factor of the noisy kernel matrix and the solve
vector used by the predictive equations, so predictions and downstream
sampling never refactorize.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

if TYPE_CHECKING:  # pragma: no cover
    from .transform import TransformSpec

__all__ = [
    "Dataset",
    "KernelConfig",
    "FittedGP",
    "FactorizationError",
    "DegeneratePendingPointError",
    "kernel_matrix",
    "kernel_diag",
    "kernel_grad",
    "fit_gp",
    "posterior",
    "posterior_batch",
    "log_marginal_likelihood",
    "extended_variance",
    "extended_variance_batch",
    "as_generator",
]

SE = "squared-exponential"
MATERN52 = "matern-5/2"

# Variance floor below which a pending point carries no usable information.
PENDING_VAR_TOL = 1e-12


class FactorizationError(RuntimeError):
    """Covariance factorization failed even at the maximum jitter."""


class DegeneratePendingPointError(ValueError):
    """Pending point has (numerically) zero predictive variance."""


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed / None / Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Training data with inputs in the unit cube and standardized outputs.

    ``X`` holds unit-cube coordinates, ``y`` standardized outputs.  The
    original data is recovered as ``input_lo + X * (input_hi - input_lo)``
    and ``y * y_std + y_mean``.
    """

    X: np.ndarray
    y: np.ndarray
    input_lo: np.ndarray
    input_hi: np.ndarray
    y_mean: float
    y_std: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "input_lo", np.asarray(self.input_lo, dtype=float).ravel())
        object.__setattr__(self, "input_hi", np.asarray(self.input_hi, dtype=float).ravel())
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.size and (X.min() < -1e-9 or X.max() > 1 + 1e-9):
            raise ValueError("inputs must lie in the unit cube")
        if not self.y_std > 0:
            raise ValueError("y_std must be positive")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_raw(cls, X_raw, y_raw, input_lo=None, input_hi=None) -> "Dataset":
        """Standardize raw data: map inputs into [0,1]^d, outputs to ~N(0,1).

        When the box is omitted it is taken as the unit cube.  A degenerate
        output spread falls back to y_std = 1 so the transform stays invertible.
        """
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        y_raw = np.asarray(y_raw, dtype=float).ravel()
        d = X_raw.shape[1]
        lo = np.zeros(d) if input_lo is None else np.asarray(input_lo, dtype=float).ravel()
        hi = np.ones(d) if input_hi is None else np.asarray(input_hi, dtype=float).ravel()
        span = hi - lo
        if np.any(span <= 0):
            raise ValueError("input_hi must exceed input_lo in every dimension")
        X = (X_raw - lo) / span
        y_mean = float(np.mean(y_raw)) if y_raw.size else 0.0
        y_std = float(np.std(y_raw)) if y_raw.size > 1 else 0.0
        if y_std <= 1e-12:
            y_std = 1.0
        return cls(X=X, y=(y_raw - y_mean) / y_std, input_lo=lo, input_hi=hi,
                   y_mean=y_mean, y_std=y_std)

    @classmethod
    def from_unit(cls, X_unit, y_raw) -> "Dataset":
        """Standardize outputs for inputs already in the unit cube."""
        return cls.from_raw(X_unit, y_raw)

    def to_raw(self) -> tuple[np.ndarray, np.ndarray]:
        """Invert the stored normalization."""
        X_raw = self.input_lo + self.X * (self.input_hi - self.input_lo)
        return X_raw, self.y * self.y_std + self.y_mean

    def destandardize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) * self.y_std + self.y_mean

    def standardize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) - self.y_mean) / self.y_std


@dataclass(frozen=True)
class KernelConfig:
    """Stationary kernel hyperparameters.

    ``ard`` only affects hyperparameter optimization: when False a single
    shared lengthscale is tuned and broadcast across dimensions.
    """

    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-4
    family: str = SE
    ard: bool = False

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0) or self.signal_variance <= 0:
            raise ValueError("lengthscales and signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.family not in (SE, MATERN52):
            raise ValueError(f"unknown kernel family {self.family!r}")

    @classmethod
    def default(cls, d: int) -> "KernelConfig":
        return cls(lengthscales=np.full(d, 0.3))


@dataclass(frozen=True)
class FittedGP:
    """Fitted GP: data, kernel, Cholesky factor of K + noise*I (+jitter), and
    the cached solve vector alpha = (K + noise*I)^-1 (y - m)."""

    dataset: Dataset
    kernel: KernelConfig
    chol: np.ndarray
    alpha: np.ndarray
    prior_mean: float = 0.0
    space_tag: str = "f-space"
    jitter: float = 0.0
    transform: "TransformSpec | None" = None

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @classmethod
    def prior(cls, kernel: KernelConfig, d: int) -> "FittedGP":
        """Data-free model; posterior equals the prior everywhere."""
        empty = Dataset(X=np.zeros((0, d)), y=np.zeros(0), input_lo=np.zeros(d),
                        input_hi=np.ones(d), y_mean=0.0, y_std=1.0)
        return cls(dataset=empty, kernel=kernel, chol=np.zeros((0, 0)),
                   alpha=np.zeros(0))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _scaled(config: KernelConfig, A: np.ndarray) -> np.ndarray:
    return np.atleast_2d(A) / config.lengthscales


def kernel_matrix(config: KernelConfig, A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Cross-covariance matrix k(A, B) of shape (len(A), len(B))."""
    sa = _scaled(config, A)
    sb = sa if B is None else _scaled(config, B)
    if config.family == SE:
        d2 = cdist(sa, sb, metric="sqeuclidean")
        return config.signal_variance * np.exp(-0.5 * d2)
    r = cdist(sa, sb, metric="euclidean")
    sq5r = np.sqrt(5.0) * r
    return config.signal_variance * (1.0 + sq5r + 5.0 * r * r / 3.0) * np.exp(-sq5r)


def kernel_diag(config: KernelConfig, A: np.ndarray) -> np.ndarray:
    """k(x, x) for each row of A (stationary: the signal variance)."""
    return np.full(np.atleast_2d(A).shape[0], config.signal_variance)


def kernel_grad(config: KernelConfig, x: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Gradient of k(x, b_j) with respect to x; shape (len(B), d)."""
    x = np.asarray(x, dtype=float).ravel()
    B = np.atleast_2d(B)
    diff = (x - B) / config.lengthscales**2          # (n, d)
    if config.family == SE:
        k = kernel_matrix(config, x[None, :], B).ravel()
        return -diff * k[:, None]
    r = cdist(_scaled(config, x[None, :]), _scaled(config, B)).ravel()
    sq5r = np.sqrt(5.0) * r
    # dk/dr = -(5/3) s^2 r (1 + sqrt(5) r) exp(-sqrt(5) r);  dr/dx = diff / r
    coef = -(5.0 / 3.0) * config.signal_variance * (1.0 + sq5r) * np.exp(-sq5r)
    return coef[:, None] * diff


# ---------------------------------------------------------------------------
# factorization and fitting
# ---------------------------------------------------------------------------


def _cholesky_with_jitter(K_noisy: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky of K_noisy + jitter*I, escalating jitter tenfold from
    1e-8*scale up to 1e-2*scale (zero is tried first)."""
    ladder = [0.0] + [scale * 10.0**e for e in range(-8, -1)]
    last = ladder[-1]
    for jitter in ladder:
        try:
            L = cholesky(K_noisy + jitter * np.eye(K_noisy.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"covariance not positive definite even with jitter {last:.3e}")


def _factorize(dataset: Dataset, config: KernelConfig) -> tuple[np.ndarray, np.ndarray, float]:
    K = kernel_matrix(config, dataset.X)
    scale = float(np.mean(np.diag(K))) if dataset.n else 1.0
    L, jitter = _cholesky_with_jitter(K + config.noise_variance * np.eye(dataset.n), scale)
    alpha = cho_solve((L, True), dataset.y)
    return L, alpha, jitter


def _lml_from_factors(y: np.ndarray, L: np.ndarray, alpha: np.ndarray) -> float:
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi))


# log10 search boxes for hyperparameter optimization
_LOG_BOX_SCALE = (-3.0, 2.0)   # lengthscales and signal variance
_LOG_BOX_NOISE = (-6.0, 0.0)


def _pack(config: KernelConfig, ard: bool) -> np.ndarray:
    ls = np.log10(config.lengthscales) if ard else [np.log10(config.lengthscales.mean())]
    return np.concatenate([np.atleast_1d(ls),
                           [np.log10(config.signal_variance)],
                           [np.log10(max(config.noise_variance, 1e-6))]])


def _unpack(theta: np.ndarray, base: KernelConfig, ard: bool) -> KernelConfig:
    d = base.lengthscales.shape[0]
    n_ls = d if ard else 1
    ls = 10.0 ** np.asarray(theta[:n_ls])
    if not ard:
        ls = np.full(d, ls[0])
    return replace(base, lengthscales=ls, signal_variance=10.0 ** theta[n_ls],
                   noise_variance=10.0 ** theta[n_ls + 1])


def fit_gp(dataset: Dataset, config: KernelConfig | None = None, *,
           optimize_hypers: bool = True, rng=None, n_restarts: int = 8,
           space_tag: str = "f-space") -> FittedGP:
    """Fit a GP, optionally maximizing the log marginal likelihood.

    Hyperparameters are tuned by Nelder-Mead restarts on log10 parameters
    inside a fixed box; the best of all restarts and the initial
    configuration is kept, so the returned likelihood never drops below the
    likelihood at ``config``.
    """
    if dataset.n < 1:
        raise ValueError("fit_gp needs at least one observation")
    if config is None:
        config = KernelConfig.default(dataset.d)
    if config.lengthscales.shape[0] != dataset.d:
        raise ValueError("kernel lengthscales do not match data dimension")

    best = config
    if optimize_hypers:
        ard = config.ard
        theta0 = _pack(config, ard)
        n_ls = dataset.d if ard else 1
        bounds = [_LOG_BOX_SCALE] * (n_ls + 1) + [_LOG_BOX_NOISE]
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])

        def neg_lml(theta):
            try:
                cand = _unpack(theta, config, ard)
                L, alpha, _ = _factorize(dataset, cand)
                val = _lml_from_factors(dataset.y, L, alpha)
            except (FactorizationError, np.linalg.LinAlgError, FloatingPointError):
                return np.inf
            return -val if np.isfinite(val) else np.inf

        # coarse deterministic scan, then Nelder-Mead polish from the best
        # cells: the likelihood surface is multimodal (noise-dominated vs
        # interpolating basins) and random restarts pick basins erratically
        from .optimize import sobol_points

        scan = lo + sobol_points(16 * len(lo) ** 2, len(lo)) * (hi - lo)
        scan_vals = np.array([neg_lml(t) for t in scan])
        order = np.argsort(scan_vals)[:max(1, n_restarts - 1)]
        starts = [np.clip(theta0, lo, hi)] + [scan[i] for i in order]
        best_val = neg_lml(starts[0])
        best_theta = starts[0]
        for x0 in starts:
            res = minimize(neg_lml, x0, method="Nelder-Mead", bounds=bounds,
                           options={"maxfev": 120 * len(x0), "xatol": 1e-4, "fatol": 1e-9})
            if res.fun < best_val:
                best_val, best_theta = res.fun, res.x
        if np.isfinite(best_val):
            best = _unpack(best_theta, config, ard)

    L, alpha, jitter = _factorize(dataset, best)
    return FittedGP(dataset=dataset, kernel=best, chol=L, alpha=alpha,
                    space_tag=space_tag, jitter=jitter)


# ---------------------------------------------------------------------------
# predictive equations
# ---------------------------------------------------------------------------


def posterior_batch(gp: FittedGP, X_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at each row of X_star."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != gp.d:
        raise ValueError(f"query dimension {X_star.shape[1]} != model dimension {gp.d}")
    k_diag = kernel_diag(gp.kernel, X_star)
    if gp.n == 0:
        return np.full(X_star.shape[0], gp.prior_mean), k_diag
    K_star = kernel_matrix(gp.kernel, gp.dataset.X, X_star)       # (N, P)
    mu = K_star.T @ gp.alpha + gp.prior_mean
    tmp = solve_triangular(gp.chol, K_star, lower=True)           # (N, P)
    var = k_diag - np.sum(tmp * tmp, axis=0)
    return mu, np.clip(var, 0.0, k_diag)


def posterior(gp: FittedGP, x_star: np.ndarray) -> tuple[float, float]:
    """Predictive mean and variance at a single point."""
    mu, var = posterior_batch(gp, np.asarray(x_star, dtype=float).reshape(1, -1))
    return float(mu[0]), float(var[0])


def log_marginal_likelihood(gp: FittedGP) -> float:
    """Gaussian log evidence of the standardized outputs under the fitted kernel."""
    val = _lml_from_factors(gp.dataset.y - gp.prior_mean, gp.chol, gp.alpha)
    if not np.isfinite(val):
        raise ArithmeticError("log marginal likelihood is not finite")
    return val


def extended_variance_batch(gp: FittedGP, x_pending: np.ndarray,
                            X_query: np.ndarray) -> np.ndarray:
    """Posterior variance at each query point after hypothetically adding
    ``x_pending`` (observed with the model noise) to the training set.

    Uses the rank-one block-inversion update on the cached factorization, so
    no refit happens: var_new(q) = var(q) - cov(q, p)^2 / (var(p) + noise).
    """
    x_pending = np.asarray(x_pending, dtype=float).ravel()
    X_query = np.atleast_2d(np.asarray(X_query, dtype=float))
    if x_pending.shape[0] != gp.d or X_query.shape[1] != gp.d:
        raise ValueError("dimension mismatch with the fitted model")
    _, var_p = posterior(gp, x_pending)
    if var_p < PENDING_VAR_TOL:
        raise DegeneratePendingPointError(
            f"pending point variance {var_p:.3e} below tolerance {PENDING_VAR_TOL:.0e}")
    _, var_q = posterior_batch(gp, X_query)
    cross = kernel_matrix(gp.kernel, X_query, x_pending[None, :]).ravel()
    if gp.n:
        k_p = kernel_matrix(gp.kernel, gp.dataset.X, x_pending[None, :]).ravel()
        k_q = kernel_matrix(gp.kernel, gp.dataset.X, X_query)
        cross = cross - k_q.T @ cho_solve((gp.chol, True), k_p)
    denom = var_p + gp.kernel.noise_variance
    return np.clip(var_q - cross**2 / denom, 0.0, None)


def extended_variance(gp: FittedGP, x_pending: np.ndarray, x_query: np.ndarray) -> float:
    """Single-query form of :func:`extended_variance_batch`."""
    out = extended_variance_batch(gp, x_pending, np.asarray(x_query, dtype=float).reshape(1, -1))
    return float(out[0])
