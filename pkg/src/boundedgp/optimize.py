"""Box-constrained local search shared by sample-extremum location and
acquisition maximization.

The engine is a projected gradient ascent with backtracking line search,
vectorized over a batch of starting points so that many restarts (or many
samples) advance in lockstep.  Quasi-random starting points come from an
unscrambled Sobol sequence, which keeps every caller deterministic without
threading a seed through.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
from scipy.stats import qmc

__all__ = ["sobol_points", "projected_ascent", "maximize_with_restarts",
           "fd_value_and_grad"]

MAX_ITER = 200
GRAD_TOL = 1e-6
ARMIJO_C = 1e-4
FTOL = 1e-9  # relative value-stall freeze: progress this small is converged
REJECT_LIMIT = 8  # consecutive failed halvings => numerically stationary

# value_and_grad(X_subset, row_ids, want_grad) -> (values, gradients | None);
# the row ids let a closure serve many objectives at once (one per row), e.g.
# many posterior samples optimized jointly, and want_grad lets line-search
# probes skip the gradient work.
ValueAndGrad = Callable[[np.ndarray, np.ndarray, bool],
                        tuple[np.ndarray, np.ndarray | None]]


def sobol_points(n: int, d: int, seed=None) -> np.ndarray:
    """First ``n`` points of a Sobol sequence in [0,1]^d.

    Unseeded calls use the unscrambled sequence (fully deterministic); a seed
    switches on scrambling.
    """
    if n < 1:
        return np.zeros((0, d))
    sampler = qmc.Sobol(d, scramble=seed is not None, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # n need not be a power of two
        return sampler.random(n)


MIN_STEP = 1e-10


def projected_ascent(value_and_grad: ValueAndGrad, X0: np.ndarray, *,
                     max_iter: int = MAX_ITER,
                     grad_tol: float = GRAD_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Maximize smooth row objectives over [0,1]^d from a batch of starts.

    Each row of ``X0`` runs an independent projected gradient ascent with a
    per-row adaptive step and Armijo backtracking spread over the outer
    iterations (one batched trial per iteration: accepted rows move and grow
    their step, rejected rows halve it and retry next round).  Rows freeze
    once their projected step shrinks below ``grad_tol`` or their step size
    underflows; non-converged rows keep their last iterate.

    Returns the final points (P, d) and values (P,).
    """
    X = np.clip(np.atleast_2d(np.asarray(X0, dtype=float)).copy(), 0.0, 1.0)
    P = X.shape[0]
    vals, grads = value_and_grad(X, np.arange(P), True)
    vals = np.asarray(vals, dtype=float).copy()
    grads = np.asarray(grads, dtype=float).copy()
    # scale the first trial to a ~0.3 box-unit move so early rounds aren't
    # spent halving a blind unit step
    steps = 0.3 / (1.0 + np.linalg.norm(grads, axis=1))
    rejects = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)

    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        x_a, g_a = X[idx], grads[idx]
        # projected unit step doubles as the stationarity measure on the box
        direction = np.clip(x_a + g_a, 0.0, 1.0) - x_a
        converged = np.linalg.norm(direction, axis=1) <= grad_tol
        if converged.any():
            active[idx[converged]] = False
            keep = ~converged
            idx, x_a, g_a = idx[keep], x_a[keep], g_a[keep]
            if idx.size == 0:
                continue

        t = steps[idx]
        trial = np.clip(x_a + t[:, None] * g_a, 0.0, 1.0)
        tv, tg = value_and_grad(trial, idx, True)
        gain = np.einsum("ij,ij->i", g_a, trial - x_a)
        ok = (tv >= vals[idx] + ARMIJO_C * gain) & (tv > vals[idx])
        moved = idx[ok]
        if moved.size:
            stalled = tv[ok] - vals[moved] <= FTOL * (1.0 + np.abs(tv[ok]))
            X[moved] = trial[ok]
            vals[moved] = tv[ok]
            grads[moved] = tg[ok]
            steps[moved] = np.minimum(steps[moved] * 1.5, 1e3)
            rejects[moved] = 0
            active[moved[stalled]] = False
        rejected = idx[~ok]
        steps[rejected] *= 0.5
        rejects[rejected] += 1
        dead = rejected[(steps[rejected] < MIN_STEP)
                        | (rejects[rejected] >= REJECT_LIMIT)]
        active[dead] = False
    return X, vals


def maximize_with_restarts(value_and_grad: ValueAndGrad, starts: np.ndarray, *,
                           max_iter: int = MAX_ITER,
                           grad_tol: float = GRAD_TOL) -> tuple[np.ndarray, float]:
    """Run :func:`projected_ascent` and return the best (point, value)."""
    X, vals = projected_ascent(value_and_grad, starts, max_iter=max_iter,
                               grad_tol=grad_tol)
    best = int(np.argmax(vals))
    return X[best], float(vals[best])


def fd_value_and_grad(value_fn: Callable[[np.ndarray], np.ndarray],
                      step: float = 1e-6) -> ValueAndGrad:
    """Central finite-difference gradients around a batched value function.

    Used where no analytic gradient exists (acquisition refinement); one call
    costs 2d+1 batched evaluations.  Differences respect the box, shrinking
    the stencil at the boundary.
    """

    def vag(X: np.ndarray, rows: np.ndarray,
            want_grad: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
        X = np.atleast_2d(X)
        P, d = X.shape
        vals = value_fn(X)
        if not want_grad:
            return vals, None
        grads = np.empty((P, d))
        for dim in range(d):
            e = np.zeros(d)
            e[dim] = step
            hi_x = np.clip(X + e, 0.0, 1.0)
            lo_x = np.clip(X - e, 0.0, 1.0)
            span = hi_x[:, dim] - lo_x[:, dim]
            span = np.where(span <= 0, 1.0, span)
            grads[:, dim] = (value_fn(hi_x) - value_fn(lo_x)) / span
        return vals, grads

    return vag
