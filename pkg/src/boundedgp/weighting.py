"""Scoring posterior samples against approximately known output bounds.

A sample is summarized by its located extrema (g_min, g_max).  The weighting
probability is a Gaussian density centered at the believed bounds with the
stated looseness variances; it collapses to a univariate density when only
one bound is known.  A hard companion rule accepts a sample when each present
extremum lies within two standard deviations of its bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .rff import PosteriorSample, SampleSummary

__all__ = [
    "ApproxBounds",
    "NoAdmissibleSamplesError",
    "log_weight",
    "weight",
    "normalized_weights",
    "accept",
    "weighted_aggregate",
    "rank_select",
    "LemmaReport",
    "verify_variance_lemmas",
]

_LOG_2PI = math.log(2.0 * math.pi)
# Raw densities below exp(_UNDERFLOW_LOG) are flushed to zero: bounds that far
# from every sample are treated as inconsistent rather than renormalized.
_UNDERFLOW_LOG = math.log(5e-324)


class NoAdmissibleSamplesError(RuntimeError):
    """Every sample weight is zero; callers typically switch to a fallback."""


@dataclass(frozen=True)
class ApproxBounds:
    """Approximately known maximum/minimum with looseness variances.

    At least one bound must be present.  Variances are strictly positive;
    exact knowledge is expressed by a vanishingly small variance.
    """

    f_plus: float | None = None
    eta_plus_sq: float = 1.0
    f_minus: float | None = None
    eta_minus_sq: float = 1.0

    def __post_init__(self):
        if self.f_plus is None and self.f_minus is None:
            raise ValueError("at least one of f_plus/f_minus must be given")
        if self.f_plus is not None and self.f_minus is not None:
            if not self.f_plus > self.f_minus:
                raise ValueError("f_plus must exceed f_minus")
        if self.eta_plus_sq <= 0 or self.eta_minus_sq <= 0:
            raise ValueError("looseness variances must be strictly positive")

    @property
    def eta_plus(self) -> float:
        return math.sqrt(self.eta_plus_sq)

    @property
    def eta_minus(self) -> float:
        return math.sqrt(self.eta_minus_sq)

    def without_minus(self) -> "ApproxBounds":
        return ApproxBounds(f_plus=self.f_plus, eta_plus_sq=self.eta_plus_sq)


def _coord_logpdfs(bounds: ApproxBounds, g_min, g_max) -> list[np.ndarray]:
    out = []
    if bounds.f_minus is not None:
        z = (np.asarray(g_min, dtype=float) - bounds.f_minus)
        out.append(-0.5 * z * z / bounds.eta_minus_sq
                   - 0.5 * (_LOG_2PI + math.log(bounds.eta_minus_sq)))
    if bounds.f_plus is not None:
        z = (np.asarray(g_max, dtype=float) - bounds.f_plus)
        out.append(-0.5 * z * z / bounds.eta_plus_sq
                   - 0.5 * (_LOG_2PI + math.log(bounds.eta_plus_sq)))
    return out


def log_weight(bounds: ApproxBounds, summary) -> float:
    """Log of the (possibly collapsed) Gaussian bound density at the sample's
    extrema."""
    return float(sum(_coord_logpdfs(bounds, summary.g_min, summary.g_max)))


def weight(bounds: ApproxBounds, summary) -> float:
    """Bound-consistency density of a sample summary (nonnegative)."""
    return float(math.exp(min(log_weight(bounds, summary), 700.0)))


def normalized_weights(bounds: ApproxBounds, summaries: Sequence) -> np.ndarray:
    """Weights normalized to sum to one, computed in log space.

    The maximum log weight is subtracted before exponentiation so tight
    looseness variances do not underflow.  If even the best sample's raw
    density underflows double precision, the bounds are inconsistent with
    every sample and an all-zero vector is returned.
    """
    if len(summaries) == 0:
        return np.zeros(0)
    logs = np.array([log_weight(bounds, s) for s in summaries])
    top = logs.max()
    if top < _UNDERFLOW_LOG:
        return np.zeros(len(summaries))
    w = np.exp(logs - top)
    return w / w.sum()


def attach_weights(bounds: ApproxBounds, summaries: Sequence) -> np.ndarray:
    """Fill each summary's normalized weight and raw log weight in place;
    returns the normalized weight vector."""
    w = normalized_weights(bounds, summaries)
    for s, wi in zip(summaries, w):
        s.weight = float(wi)
        s.log_weight = log_weight(bounds, s)
    return w


def accept(bounds: ApproxBounds, summary) -> bool:
    """Two-standard-deviation rule, closed band, per present bound."""
    ok = True
    if bounds.f_plus is not None:
        ok &= abs(summary.g_max - bounds.f_plus) <= 2.0 * bounds.eta_plus
    if bounds.f_minus is not None:
        ok &= abs(summary.g_min - bounds.f_minus) <= 2.0 * bounds.eta_minus
    return bool(ok)


def weighted_aggregate(samples: Sequence["PosteriorSample"],
                       weights: Sequence[float], x: np.ndarray) -> float:
    """Convex combination of sample values at ``x`` with the given weights."""
    from .rff import eval_sample  # local import keeps module deps one-way

    w = np.asarray(weights, dtype=float)
    if len(samples) != w.shape[0]:
        raise ValueError("samples and weights must align")
    total = w.sum()
    if not total > 0:
        raise NoAdmissibleSamplesError("all sample weights are zero")
    vals = np.array([eval_sample(s, x) for s in samples])
    return float(vals @ w / total)


def rank_select(summaries: Sequence, m_prime: int) -> list[int]:
    """Indices of the ``m_prime`` largest weights; ties go to the lower index.

    Ordering uses the log weights when present (a monotone transform, so the
    ranking agrees with the raw weights wherever those do not underflow).
    """
    if m_prime > len(summaries):
        raise ValueError("m_prime exceeds the number of summaries")
    logs = np.array([getattr(s, "log_weight", -np.inf) for s in summaries])
    keys = logs if np.any(np.isfinite(logs)) else np.array([s.weight for s in summaries])
    order = np.argsort(-keys, kind="stable")
    return [int(i) for i in order[:m_prime]]


# ---------------------------------------------------------------------------
# variance checks in the (g_min, g_max) plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaReport:
    """Per-coordinate sample variances with Popoviciu range bounds.

    Coordinates are ordered (g_min, g_max).  Inequality flags compare the
    sets coordinate-wise; ``insufficient`` marks a set with fewer than two
    members, in which case the flags are not meaningful.
    """

    var_gp: np.ndarray
    var_wgp: np.ndarray
    var_wsrgp: np.ndarray
    popoviciu_gp: np.ndarray
    popoviciu_wgp: np.ndarray
    popoviciu_wsrgp: np.ndarray
    wgp_le_gp: bool
    wsrgp_le_gp: bool
    wsrgp_le_wgp: bool
    insufficient: bool
    n_gp: int
    n_wgp: int
    n_wsrgp: int


def _coords(summaries: Sequence) -> np.ndarray:
    return np.array([[s.g_min, s.g_max] for s in summaries], dtype=float).reshape(-1, 2)


def _var_and_popoviciu(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pts.shape[0] < 2:
        return np.full(2, np.nan), np.full(2, np.nan)
    var = pts.var(axis=0, ddof=1)
    rng = pts.max(axis=0) - pts.min(axis=0)
    return var, rng**2 / 4.0


def verify_variance_lemmas(summaries_gp: Sequence, summaries_wgp: Sequence,
                           summaries_wsrgp: Sequence) -> LemmaReport:
    """Compare sample variances of the plain, accepted-plain and
    accepted-transformed summary sets in the (g_min, g_max) plane."""
    sets = [_coords(s) for s in (summaries_gp, summaries_wgp, summaries_wsrgp)]
    insufficient = any(p.shape[0] < 2 for p in sets)
    (v_gp, p_gp), (v_wgp, p_wgp), (v_wsrgp, p_wsrgp) = [_var_and_popoviciu(p) for p in sets]

    def le(a, b):
        return bool(np.all(a <= b + 1e-12)) if not insufficient else False

    return LemmaReport(
        var_gp=v_gp, var_wgp=v_wgp, var_wsrgp=v_wsrgp,
        popoviciu_gp=p_gp, popoviciu_wgp=p_wgp, popoviciu_wsrgp=p_wsrgp,
        wgp_le_gp=le(v_wgp, v_gp), wsrgp_le_gp=le(v_wsrgp, v_gp),
        wsrgp_le_wgp=le(v_wsrgp, v_wgp), insufficient=insufficient,
        n_gp=sets[0].shape[0], n_wgp=sets[1].shape[0], n_wsrgp=sets[2].shape[0])
