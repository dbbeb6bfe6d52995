"""Constrained l1-penalized Poisson likelihood fits on an interval.

For an interval I = [s, e] the (unpenalized) negative log-likelihood of a
coefficient matrix A is

    nll(A, I) = sum_{t=s}^{e-1} sum_m  exp(v + A_m g(t)) - X_m(t+1) (v + A_m g(t)),

with g(t) the clipped count vector at time t.  The segment estimate minimizes

    H(A, I) = nll(A, I) + lam * sqrt(|I|) * ||A||_1      over  max_m ||A_m||_1 <= 1,

a smooth convex loss plus a prox-friendly nonsmooth part.  The problem is
row-separable, so the solver runs proximal gradient steps on all rows at once
with per-row backtracking line search; each prox application is the exact
proximal point of the penalty-plus-constraint pair (soft-threshold followed by
an l1-ball projection, which composes into a single soft-threshold).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EventSeries, Interval, ModelConfig, SolverFailure

_BACKTRACK_LIMIT = 200


@dataclass(frozen=True)
class SolverOptions:
    """Proximal-gradient controls for one interval fit.

    ``tol`` is the relative objective-decrease stopping threshold applied per
    row, ``init`` an optional warm-start matrix (None starts from zero) and
    ``init_step`` the first trial step size, refined by backtracking with
    shrink factor ``beta``.
    """

    tol: float = 1e-8
    max_iter: int = 5000
    init: np.ndarray | None = None
    beta: float = 0.5
    init_step: float = 1.0
    track_history: bool = False

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not self.init_step > 0:
            raise ValueError("init_step must be positive")


@dataclass(frozen=True)
class SegmentFit:
    """A fitted matrix on an interval together with its penalized cost."""

    interval: Interval
    matrix: np.ndarray
    cost: float
    unpenalized_nll: float
    iterations: np.ndarray
    converged: np.ndarray
    history: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        object.__setattr__(self, "iterations", _frozen(self.iterations))
        object.__setattr__(self, "converged", _frozen(self.converged))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def design_matrices(
    series: EventSeries, config: ModelConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Clipped design columns G[:, t-1] = g(X(t)) and targets X(t+1), t = 1..T-1."""
    counts = series.counts
    g = np.minimum(counts[:, :-1], config.clip).astype(np.float64)
    xp = counts[:, 1:].astype(np.float64)
    return g, xp


def _slice(series: EventSeries, interval: Interval, config: ModelConfig):
    if interval.end > series.T:
        raise ValueError(
            f"interval [{interval.start}, {interval.end}] exceeds T={series.T}"
        )
    if interval.transitions < 1:
        raise ValueError("interval must contain at least 2 time points")
    lo, hi = interval.start - 1, interval.end - 1
    counts = series.counts
    g = np.minimum(counts[:, lo:hi], config.clip).astype(np.float64)
    xp = counts[:, lo + 1 : hi + 1].astype(np.float64)
    return g, xp


def nll(
    A: np.ndarray,
    series: EventSeries,
    interval: Interval,
    config: ModelConfig,
) -> float:
    """Unpenalized Poisson negative log-likelihood of A over the interval."""
    g, xp = _slice(series, interval, config)
    z = config.v + np.asarray(A, dtype=np.float64) @ g
    with np.errstate(over="ignore"):
        val = float(np.sum(np.exp(z) - xp * z))
    if not np.isfinite(val):
        raise SolverFailure("non-finite likelihood value (overflow)")
    return val


def nll_gradient(
    A: np.ndarray,
    series: EventSeries,
    interval: Interval,
    config: ModelConfig,
) -> np.ndarray:
    """Gradient of the interval nll; row m depends only on row m of A."""
    g, xp = _slice(series, interval, config)
    z = config.v + np.asarray(A, dtype=np.float64) @ g
    with np.errstate(over="ignore"):
        grad = (np.exp(z) - xp) @ g.T
    if not np.all(np.isfinite(grad)):
        raise SolverFailure("non-finite gradient (overflow)")
    return grad


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _l1_project_inplace(rows: np.ndarray) -> None:
    """Project each row onto the l1 ball of radius 1 (rows already violating it).

    Euclidean projection onto the l1 ball is itself a soft-threshold at the
    level where the shrunk norm hits 1, found from the sorted magnitudes.
    """
    norms = np.abs(rows).sum(axis=1)
    for i in np.flatnonzero(norms > 1.0):
        u = np.sort(np.abs(rows[i]))[::-1]
        css = np.cumsum(u)
        k = np.arange(1, u.size + 1)
        valid = u - (css - 1.0) / k > 0
        kmax = k[valid][-1]
        tau = (css[kmax - 1] - 1.0) / kmax
        rows[i] = soft_threshold(rows[i], tau)


def prox(x: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal point of threshold*||.||_1 plus the l1-ball indicator.

    Soft-threshold first; if the result leaves the unit l1 ball, apply the
    ball projection (a second soft-threshold).  The composition of the two
    soft-thresholds is again a soft-threshold, so the two-stage rule is the
    exact prox of the sum.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    y = soft_threshold(np.asarray(x, dtype=np.float64), threshold)
    y = np.atleast_2d(y)
    _l1_project_inplace(y)
    return y[0] if np.asarray(x).ndim == 1 else y


def _prox_rows(rows: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    out = np.sign(rows) * np.maximum(np.abs(rows) - thresholds[:, None], 0.0)
    _l1_project_inplace(out)
    return out


def _fit_kernel(
    g: np.ndarray,
    xp: np.ndarray,
    v: float,
    thr: float,
    opts: SolverOptions,
    init: np.ndarray | None,
):
    """Row-parallel proximal gradient with per-row backtracking.

    Returns (matrix, per-row nll, per-row iterations, per-row converged,
    objective history or None).  Monotone descent per row is guaranteed by the
    backtracking condition; rows stop individually once their relative
    objective decrease falls below ``opts.tol``.
    """
    m = g.shape[0]
    A = np.zeros((m, m)) if init is None else np.array(init, dtype=np.float64)
    if A.shape != (m, m):
        raise ValueError(f"warm-start matrix must be ({m}, {m}), got {A.shape}")
    z = v + A @ g
    ez = np.exp(z)
    f_rows = np.einsum("ij->i", ez - xp * z)
    del z
    if not np.all(np.isfinite(f_rows)):
        raise SolverFailure("non-finite objective at the starting point")
    obj_rows = f_rows + thr * np.abs(A).sum(axis=1)
    steps = np.full(m, opts.init_step)
    iters = np.zeros(m, dtype=np.int64)
    converged = np.zeros(m, dtype=bool)
    history = [float(obj_rows.sum())] if opts.track_history else None

    n = g.shape[1]
    active = np.arange(m)
    for it in range(1, opts.max_iter + 1):
        grad = (ez[active] - xp[active]) @ g.T
        if not np.all(np.isfinite(grad)):
            raise SolverFailure("non-finite gradient during fit")
        steps[active] = steps[active] * 2.0

        a = active.size
        new_rows = np.empty((a, m))
        new_f = np.empty(a)
        new_ez = np.empty((a, n))
        pend = np.arange(a)  # positions within `active`
        for _ in range(_BACKTRACK_LIMIT):
            if pend.size == 0:
                break
            rows = active[pend]
            st = steps[rows]
            cand = _prox_rows(A[rows] - st[:, None] * grad[pend], st * thr)
            zc = v + cand @ g
            ezc = np.exp(zc)
            fc = np.einsum("ij->i", ezc - xp[rows] * zc)
            diff = cand - A[rows]
            quad = (
                f_rows[rows]
                + np.einsum("ij,ij->i", grad[pend], diff)
                + np.einsum("ij,ij->i", diff, diff) / (2.0 * st)
            )
            ok = fc <= quad + 1e-12 * np.maximum(1.0, np.abs(f_rows[rows]))
            if np.any(ok):
                hit = pend[ok]
                new_rows[hit] = cand[ok]
                new_f[hit] = fc[ok]
                new_ez[hit] = ezc[ok]
            steps[rows[~ok]] *= opts.beta
            pend = pend[~ok]
        else:
            raise SolverFailure("backtracking line search failed to make progress")

        A[active] = new_rows
        f_rows[active] = new_f
        ez[active] = new_ez
        new_obj = new_f + thr * np.abs(new_rows).sum(axis=1)
        decrease = obj_rows[active] - new_obj
        obj_rows[active] = new_obj
        if history is not None:
            history.append(float(obj_rows.sum()))
        done = decrease <= opts.tol * np.maximum(1.0, np.abs(obj_rows[active]))
        if np.any(done):
            finished = active[done]
            iters[finished] = it
            converged[finished] = True
            active = active[~done]
        if active.size == 0:
            break
    if active.size:
        iters[active] = opts.max_iter

    return A, f_rows, iters, converged, history


def fit_interval(
    series: EventSeries,
    interval: Interval,
    lam: float,
    config: ModelConfig,
    opts: SolverOptions = SolverOptions(),
) -> SegmentFit:
    """Minimize the penalized interval likelihood over the stability constraint.

    The penalty is lam * sqrt(|I|) * ||A||_1, counted once per interval.  Rows
    that hit ``max_iter`` are returned as-is with their ``converged`` flag
    cleared; this is a soft failure so that partition scans stay total.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    g, xp = _slice(series, interval, config)
    thr = lam * np.sqrt(interval.length)
    A, f_rows, iters, converged, history = _fit_kernel(
        g, xp, config.v, thr, opts, opts.init
    )
    nll_total = float(f_rows.sum())
    cost = nll_total + thr * float(np.abs(A).sum())
    return SegmentFit(
        interval=interval,
        matrix=A,
        cost=cost,
        unpenalized_nll=nll_total,
        iterations=iters,
        converged=converged,
        history=None if history is None else np.asarray(history),
    )
