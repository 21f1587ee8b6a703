"""Gradient-pursuit estimators (GraSP / GraHTP families) and the FISTA baseline."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .likelihood import (
    RestrictedObjective,
    grad_h,
    grad_h_sparse,
    loglik_from_product,
    score_weights,
)
from .model import VirtualChannel
from .threshold import STRATEGIES, apply_threshold, hard_threshold

ALGORITHMS = ("grasp", "grahtp")


class NumericalError(RuntimeError):
    """Non-finite objective met during an ascent; ``state`` holds diagnostics."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    sparsity: int
    algorithm: str = "grasp"
    threshold: str = "bms"
    debias: bool = True
    max_outer_iters: int = 50
    inner_max_iters: int = 200
    inner_tol: float = 1e-6
    shrink: float = 0.5
    slope: float = 1e-4
    initial_step: float = 1.0
    max_kappa_halvings: int = 20

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.threshold not in STRATEGIES:
            raise ValueError(f"threshold must be one of {STRATEGIES}")
        if not (self.inner_tol > 0 and self.slope > 0 and 0 < self.shrink < 1 and self.initial_step > 0):
            raise ValueError("tolerances and line-search constants must be positive")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class InnerTrace:
    values: list
    iterations: int
    converged: bool


@dataclass
class SolverReport:
    estimate: VirtualChannel
    support_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    inner_histories: list = field(default_factory=list)
    kappa_history: list = field(default_factory=list)
    outer_iterations: int = 0
    multiply_count: float = 0.0
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "estimate": {
                "size": self.estimate.size,
                "indices": self.estimate.indices.tolist(),
                "values_re": self.estimate.values.real.tolist(),
                "values_im": self.estimate.values.imag.tolist(),
            },
            "support_history": [list(s) for s in self.support_history],
            "objective_history": list(self.objective_history),
            "kappa_history": list(self.kappa_history),
            "outer_iterations": self.outer_iterations,
            "multiply_count": self.multiply_count,
            "flags": dict(self.flags),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def same_as(self, other):
        return self.to_json() == other.to_json()


def _support_of(x):
    return np.flatnonzero(x)


def restricted_maximize(ctx, support, warm_start=None, opts=None):
    """Maximize h over vectors supported on ``support`` by gradient ascent.

    Armijo backtracking; the first search starts at ``initial_step``, later
    ones at the Barzilai-Borwein step of the previous move. Returns the zero-padded maximizer and
    an :class:`InnerTrace`.
    """
    opts = opts or SolverOptions(sparsity=1)
    support = np.sort(np.asarray(list(support), dtype=np.int64))
    x_full = np.zeros(ctx.B, dtype=np.complex128)
    if support.size == 0:
        return x_full, InnerTrace([], 0, True)
    obj = RestrictedObjective(ctx, support)
    if warm_start is None:
        x = np.zeros(support.size, dtype=np.complex128)
    else:
        x = np.asarray(warm_start)[support].astype(np.complex128)

    def evaluate(v):
        ax = obj.op.forward(v)
        val = loglik_from_product(ctx, ax) - (float(np.vdot(v, v).real) if ctx.prior == "map" else 0.0)
        return val, ax

    def gradient(v, ax):
        g = obj.op.adjoint(score_weights(ctx, ax))
        return g - 2.0 * v if ctx.prior == "map" else g

    val, ax = evaluate(x)
    if not np.isfinite(val):
        raise NumericalError("non-finite objective at warm start", {"support": support.tolist()})
    g = gradient(x, ax)
    values = [val]
    step = opts.initial_step
    converged = False
    it = 0
    for it in range(1, opts.inner_max_iters + 1):
        gn2 = float(np.vdot(g, g).real)
        if math.sqrt(gn2) <= opts.inner_tol:
            converged = True
            it -= 1
            break
        t = step
        accepted = False
        for _ in range(200):
            x_new = x + t * g
            val_new, ax_new = evaluate(x_new)
            if np.isfinite(val_new) and val_new >= val + opts.slope * t * gn2:
                accepted = True
                break
            t *= opts.shrink
        if not accepted:
            # step underflow: no representable ascent left, treat as stationary
            converged = True
            break
        if not np.isfinite(val_new):
            raise NumericalError("non-finite objective", {"support": support.tolist(), "iteration": it})
        g_new = gradient(x_new, ax_new)
        # Barzilai-Borwein trial step for the next search (curvature along the
        # last move); falls back to doubling the accepted step
        dx, dg = x_new - x, g_new - g
        curv = -float(np.vdot(dx, dg).real)
        step = float(np.vdot(dx, dx).real) / curv if curv > 0 else t / opts.shrink
        x, val, ax, g = x_new, val_new, ax_new, g_new
        values.append(val)
    else:
        converged = math.sqrt(float(np.vdot(g, g).real)) <= opts.inner_tol
    x_full[support] = x
    return x_full, InnerTrace(values, it, converged)


def _h_sparse(ctx, x):
    support = _support_of(x)
    return RestrictedObjective(ctx, support).value(x[support])


def grasp_step(ctx, x, opts, bands=None):
    """One outer iteration of the (BMS/BE/plain) GraSP scheme."""
    L = opts.sparsity
    z = grad_h_sparse(ctx, x)
    thr = apply_threshold(opts.threshold, z, x, 2 * L, bands)
    merged = np.union1d(thr.support, _support_of(x))
    b, inner = restricted_maximize(ctx, merged, warm_start=x, opts=opts)
    pruned = hard_threshold(b, L)
    inners = [inner]
    if opts.debias:
        x_new, inner2 = restricted_maximize(ctx, pruned.support, warm_start=b, opts=opts)
        inners.append(inner2)
    else:
        x_new = pruned.vector
    entry = {"merged_size": int(merged.size), "short": bool(thr.short), "inner": inners, "kappa": None}
    return x_new, entry


def grahtp_step(ctx, x, opts, bands=None):
    """One outer iteration of the (BMS/BE/plain) GraHTP scheme."""
    L = opts.sparsity
    g = grad_h_sparse(ctx, x)
    h0 = _h_sparse(ctx, x)
    kappa = 1.0
    for _ in range(opts.max_kappa_halvings + 1):
        z = x + kappa * g
        thr = apply_threshold(opts.threshold, z, x, L, bands)
        trial = RestrictedObjective(ctx, thr.support).value(z[thr.support])
        if trial >= h0:
            break
        kappa *= 0.5
    x_new, inner = restricted_maximize(ctx, thr.support, warm_start=x, opts=opts)
    entry = {"merged_size": int(thr.support.size), "short": bool(thr.short), "inner": [inner], "kappa": kappa}
    return x_new, entry


def run_estimator(ctx, opts, bands=None):
    """Iterate the chosen step from x = 0 until the support repeats."""
    if opts.threshold != "plain" and bands is None:
        raise ValueError(f"threshold strategy {opts.threshold!r} requires bands")
    op = ctx.operator.fork()
    ctx = ctx.with_operator(op)
    step = grasp_step if opts.algorithm == "grasp" else grahtp_step
    x = np.zeros(ctx.B, dtype=np.complex128)
    prev = frozenset()
    report = SolverReport(estimate=VirtualChannel(ctx.B))
    best_val, best_x = -np.inf, x
    short = False
    inner_unconverged = 0
    halted = False
    for it in range(1, opts.max_outer_iters + 1):
        x, entry = step(ctx, x, opts, bands)
        support = frozenset(int(k) for k in _support_of(x))
        val = _h_sparse(ctx, x)
        report.support_history.append(sorted(support))
        report.objective_history.append(val)
        report.kappa_history.append(entry["kappa"])
        report.inner_histories.append([tr.values for tr in entry["inner"]])
        short = short or entry["short"]
        inner_unconverged += sum(not tr.converged for tr in entry["inner"])
        if val > best_val:
            best_val, best_x = val, x
        report.outer_iterations = it
        if support == prev:
            halted = True
            break
        prev = support
    if not halted:
        x = best_x
    report.estimate = VirtualChannel.from_dense(x)
    report.multiply_count = op.counter.count
    report.flags = {
        "max_iters_hit": not halted,
        "short_support": short,
        "inner_unconverged": inner_unconverged,
    }
    return report


# --------------------------------------------------------------------------
# FISTA baseline
# --------------------------------------------------------------------------

def complex_soft_threshold(v, t):
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(mag > t, 1.0 - t / mag, 0.0)
    return v * shrink


@dataclass
class FistaResult:
    x: np.ndarray
    objective_history: list
    iterations: int
    converged: bool
    restarts: int
    multiply_count: float

    @property
    def nnz(self):
        return int(np.count_nonzero(np.abs(self.x) > 1e-8))


def fista(ctx, gamma, max_iters=500, tol=1e-6, x0=None, initial_step=1.0, shrink=0.5):
    """Maximize f(x) - gamma * ||x||_1 by accelerated proximal gradient.

    The momentum is reset and the previous iterate kept whenever a step would
    lower the objective, so the recorded objective never decreases.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    op = ctx.operator.fork()

    def f_and_ax(v):
        ax = op.forward(v)
        return loglik_from_product(ctx, ax), ax

    def objective(fv, v):
        return fv - gamma * float(np.sum(np.abs(v)))

    x = np.zeros(ctx.B, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    fx, _ = f_and_ax(x)
    F = objective(fx, x)
    history = [F]
    y, theta, t = x.copy(), 1.0, initial_step
    restarts = 0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        fy, ay = f_and_ax(y)
        gy = op.adjoint(score_weights(ctx, ay))
        while True:
            p = complex_soft_threshold(y + t * gy, t * gamma)
            fp, _ = f_and_ax(p)
            d = p - y
            if fp >= fy + float(np.vdot(gy, d).real) - float(np.vdot(d, d).real) / (2 * t) or t < 1e-300:
                break
            t *= shrink
        Fp = objective(fp, p)
        if Fp >= F:
            x_new = p
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            y = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
            theta = theta_new
            change = float(np.linalg.norm(x_new - x))
            x, F = x_new, Fp
            history.append(F)
            if change <= tol * max(1.0, float(np.linalg.norm(x))):
                converged = True
                break
        else:
            restarts += 1
            history.append(F)
            if np.array_equal(y, x):
                # a plain proximal step from x failed to ascend: stationary
                converged = True
                break
            y, theta = x.copy(), 1.0
    return FistaResult(x, history, it, converged, restarts, op.counter.count)


def gamma_upper_bound(contexts):
    """Smallest gamma for which x = 0 solves every instance."""
    best = 0.0
    for ctx in contexts:
        g = grad_h(ctx.with_prior("ml"), np.zeros(ctx.B, dtype=np.complex128))
        best = max(best, float(np.abs(g).max()))
    return best


def calibrate_gamma(contexts, target, lo=1e-6, hi=1e6, max_evals=60, fista_kwargs=None):
    """Bisect gamma (log scale) until the mean FISTA sparsity is within 1 of ``target``.

    Returns ``(gamma, mean_nnz, evaluations)``.
    """
    contexts = list(contexts)
    if target <= 0:
        return hi, 0.0, []
    fista_kwargs = fista_kwargs or {}
    warm = [None] * len(contexts)
    evals = []

    def mean_nnz(gamma):
        total = 0
        for k, ctx in enumerate(contexts):
            res = fista(ctx, gamma, x0=warm[k], **fista_kwargs)
            warm[k] = res.x
            total += res.nnz
        m = total / len(contexts)
        evals.append((gamma, m))
        return m

    def inside(m):
        return target - 1 <= m <= target + 1

    top = min(hi, gamma_upper_bound(contexts))
    if top <= lo:
        raise CalibrationError("gradient at zero is below the lower bracket")
    # walk down from the zero-solution threshold to bracket the target
    upper, lower = top, None
    g = top
    while g > lo:
        g = max(lo, g / 10.0)
        m = mean_nnz(g)
        if inside(m):
            return g, m, evals
        if m > target + 1:
            lower = g
            break
        upper = g
    if lower is None:
        raise CalibrationError(f"no gamma in [{lo}, {hi}] reaches mean sparsity {target}")
    for _ in range(max_evals):
        mid = math.sqrt(lower * upper)
        m = mean_nnz(mid)
        if inside(m):
            return mid, m, evals
        if m > target + 1:
            lower = mid
        else:
            upper = mid
        if upper / lower < 1 + 1e-9:
            break
    raise CalibrationError(f"bisection stalled near gamma={math.sqrt(lower * upper):.4g}")
