"""Output-space transforms that bake known bounds into the surrogate.

The square-root transform writes the objective as a downward parabola in a
latent function, f = f_plus + 2*eta_plus - h^2/2, so every sample of the
latent GP maps to a function that respects the upper bound by construction.
Sinusoidal and sigmoid transforms squash samples into [f_minus, f_plus] and
serve as comparators.  Predictive moments in the original space come from a
first-order expansion of the parabola around the latent posterior mean.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gp import Dataset, FittedGP, KernelConfig, fit_gp, posterior_batch
from .weighting import ApproxBounds

__all__ = [
    "SQUARE_ROOT",
    "SINUSOIDAL",
    "SIGMOID",
    "IDENTITY",
    "TransformSpec",
    "to_h_space",
    "from_h",
    "from_h_grad",
    "taylor_moments",
    "srgp_posterior",
    "srgp_posterior_batch",
    "fit_srgp",
    "Algorithm1Result",
    "run_algorithm1",
]

SQUARE_ROOT = "square-root"
SINUSOIDAL = "sinusoidal"
SIGMOID = "sigmoid"
IDENTITY = "identity"

_CLIP = 1e-9  # ratio / radicand clamp for data violating loose bounds


@dataclass(frozen=True)
class TransformSpec:
    """Which transform to apply and the bound values it needs."""

    kind: str
    f_plus: float | None = None
    f_minus: float | None = None
    eta_plus_sq: float = 0.0

    def __post_init__(self):
        if self.kind not in (SQUARE_ROOT, SINUSOIDAL, SIGMOID, IDENTITY):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == SQUARE_ROOT:
            if self.f_plus is None:
                raise ValueError("square-root transform requires f_plus")
            if self.eta_plus_sq < 0:
                raise ValueError("eta_plus_sq must be nonnegative")
        if self.kind in (SINUSOIDAL, SIGMOID):
            if self.f_plus is None or self.f_minus is None:
                raise ValueError(f"{self.kind} transform requires both bounds")
            if not self.f_plus > self.f_minus:
                raise ValueError("f_plus must exceed f_minus")

    @property
    def apex(self) -> float:
        """Hard ceiling of the square-root parabola: f_plus + 2*eta_plus."""
        if self.kind != SQUARE_ROOT:
            raise ValueError("apex is defined for the square-root transform only")
        return self.f_plus + 2.0 * np.sqrt(self.eta_plus_sq)

    @property
    def span(self) -> float:
        return self.f_plus - self.f_minus


def to_h_space(dataset: Dataset, spec: TransformSpec) -> tuple[Dataset, int]:
    """Map standardized outputs into the latent space of ``spec``.

    Returns the latent-space dataset (outputs re-standardized, with the
    affine parameters stored for the way back) and the number of values that
    had to be clamped because they violated the loose bounds.
    """
    y = dataset.y
    clamped = 0
    if spec.kind == SQUARE_ROOT:
        radicand = 2.0 * (spec.apex - y)
        clamped = int(np.sum(radicand < 0))  # value exceeds the loose ceiling
        h = np.sqrt(np.maximum(radicand, _CLIP))
    elif spec.kind == SINUSOIDAL:
        ratio = (y - spec.f_minus) / spec.span
        arg = 2.0 * (ratio - 0.5)
        clamped = int(np.sum((arg < -1) | (arg > 1)))
        h = np.arcsin(np.clip(arg, -1 + _CLIP, 1 - _CLIP))
    elif spec.kind == SIGMOID:
        ratio = (y - spec.f_minus) / spec.span
        clamped = int(np.sum((ratio < 0) | (ratio > 1)))
        ratio = np.clip(ratio, _CLIP, 1 - _CLIP)
        h = np.log(ratio / (1.0 - ratio))
    else:
        h = y.copy()
    h_mean = float(np.mean(h)) if h.size else 0.0
    h_std = float(np.std(h)) if h.size > 1 else 0.0
    if h_std <= 1e-12:
        h_std = 1.0
    out = Dataset(X=dataset.X, y=(h - h_mean) / h_std, input_lo=dataset.input_lo,
                  input_hi=dataset.input_hi, y_mean=h_mean, y_std=h_std)
    return out, clamped


def from_h(spec: TransformSpec, h_value):
    """Forward map from latent values back to the (standardized) output space."""
    h = np.asarray(h_value, dtype=float)
    if spec.kind == SQUARE_ROOT:
        out = spec.apex - 0.5 * h**2
    elif spec.kind == SINUSOIDAL:
        out = spec.f_minus + spec.span * (0.5 * np.sin(h) + 0.5)
    elif spec.kind == SIGMOID:
        out = spec.f_minus + spec.span / (1.0 + np.exp(-h))
    else:
        out = h
    return out if out.ndim else float(out)


def from_h_grad(spec: TransformSpec, h_value):
    """Derivative of :func:`from_h` with respect to the latent value."""
    h = np.asarray(h_value, dtype=float)
    if spec.kind == SQUARE_ROOT:
        out = -h
    elif spec.kind == SINUSOIDAL:
        out = 0.5 * spec.span * np.cos(h)
    elif spec.kind == SIGMOID:
        s = 1.0 / (1.0 + np.exp(-h))
        out = spec.span * s * (1.0 - s)
    else:
        out = np.ones_like(h)
    return out if out.ndim else float(out)


def taylor_moments(mu_h, var_h, apex: float):
    """First-order predictive moments of the parabola at latent moments:
    mean = apex - mu_h^2 / 2, variance = mu_h * var_h * mu_h."""
    mu_h = np.asarray(mu_h, dtype=float)
    var_h = np.asarray(var_h, dtype=float)
    mu_f = apex - 0.5 * mu_h**2
    var_f = mu_h * var_h * mu_h
    return mu_f, var_f


def latent_moments(gp_h: FittedGP, X_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior moments of the latent function in its original (non
    re-standardized) scale."""
    mu_s, var_s = posterior_batch(gp_h, X_star)
    s = gp_h.dataset.y_std
    return mu_s * s + gp_h.dataset.y_mean, var_s * s * s


def srgp_posterior_batch(gp_h: FittedGP, spec: TransformSpec,
                         X_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Approximate predictive moments in the output space at each query row."""
    if spec.kind != SQUARE_ROOT:
        raise ValueError("Taylor posterior is defined for the square-root kind")
    mu_h, var_h = latent_moments(gp_h, X_star)
    return taylor_moments(mu_h, var_h, spec.apex)


def srgp_posterior(gp_h: FittedGP, spec: TransformSpec, x_star) -> tuple[float, float]:
    mu, var = srgp_posterior_batch(gp_h, spec, np.asarray(x_star, dtype=float).reshape(1, -1))
    return float(mu[0]), float(var[0])


def fit_srgp(dataset: Dataset, bounds: ApproxBounds, config: KernelConfig | None = None,
             *, optimize_hypers: bool = True, rng=None,
             kind: str = SQUARE_ROOT) -> tuple[FittedGP, int]:
    """Fit a GP in the transformed space implied by ``bounds``.

    The latent noise level is learned by marginal likelihood in the latent
    space rather than propagated from the output-space noise.  Returns the
    fitted model (tagged h-space, transform attached) and the clamp count.
    """
    if kind == SQUARE_ROOT:
        if bounds.f_plus is None:
            raise ValueError("square-root fit requires f_plus")
        spec = TransformSpec(SQUARE_ROOT, f_plus=bounds.f_plus,
                             eta_plus_sq=bounds.eta_plus_sq)
    else:
        spec = TransformSpec(kind, f_plus=bounds.f_plus, f_minus=bounds.f_minus)
    ds_h, clamped = to_h_space(dataset, spec)
    gp_h = fit_gp(ds_h, config, optimize_hypers=optimize_hypers, rng=rng,
                  space_tag="h-space")
    return replace(gp_h, transform=spec), clamped


@dataclass(frozen=True)
class Algorithm1Result:
    """Samples from the bound-respecting surrogate plus their weights and the
    weighted-average predictor."""

    samples: list
    summaries: list
    weights: np.ndarray
    gp_h: FittedGP
    clamped: int

    def aggregate(self, X) -> np.ndarray:
        from .rff import eval_samples_at

        total = self.weights.sum()
        if not total > 0:
            from .weighting import NoAdmissibleSamplesError
            raise NoAdmissibleSamplesError("all sample weights are zero")
        vals = eval_samples_at(self.samples, np.atleast_2d(np.asarray(X, dtype=float)))
        return vals @ (self.weights / total)


def run_algorithm1(dataset: Dataset, bounds: ApproxBounds, M: int, rng, *,
                   config: KernelConfig | None = None, l: int = 100,
                   optimize_hypers: bool = True, n_starts: int | None = None) -> Algorithm1Result:
    """Bound-weighted sampling through the square-root surrogate.

    Fits the transformed model, draws ``M`` decoupled posterior samples
    mapped back to the output space, locates each sample's extrema, and
    weights every sample against the supplied bounds.  The aggregate
    predictor is the weight-normalized average of the samples.
    """
    from . import rff as _rff  # deferred: rff depends on this module

    from .gp import as_generator
    from .weighting import NoAdmissibleSamplesError, attach_weights

    if M < 1:
        raise ValueError("M must be at least 1")
    rng = as_generator(rng)
    gp_h, clamped = fit_srgp(dataset, bounds, config, optimize_hypers=optimize_hypers,
                             rng=rng)
    basis = _rff.draw_basis(gp_h, l, rng)
    samples = _rff.draw_samples(gp_h, basis, M, rng)
    summaries = _rff.summarize_samples(samples, n_starts=n_starts)
    weights = attach_weights(bounds, summaries)
    if not weights.sum() > 0:
        raise NoAdmissibleSamplesError(
            "no sample is consistent with the supplied bounds")
    return Algorithm1Result(samples=samples, summaries=summaries, weights=weights,
                            gp_h=gp_h, clamped=clamped)
