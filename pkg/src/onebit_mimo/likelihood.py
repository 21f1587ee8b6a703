"""One-bit log-likelihood objective h(x) = f(x) + g(x) and its gradient.

The gradient is returned in complex form: real part holds dh/dRe(x), imaginary
part dh/dIm(x), i.e. the two halves of the real-counterpart gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

PRIORS = ("map", "ml")


def log_ncdf(t):
    """log Phi(t), stable over the whole double range."""
    scalar = np.ndim(t) == 0
    out = kernels.log_ncdf(np.atleast_1d(np.asarray(t, dtype=np.float64)))
    return float(out[0]) if scalar else out


def inverse_mills(t):
    """phi(t) / Phi(t), computed in the log domain for very negative t."""
    scalar = np.ndim(t) == 0
    out = kernels.inverse_mills(np.atleast_1d(np.asarray(t, dtype=np.float64)))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ObjectiveContext:
    y_hat: np.ndarray
    rho: float
    operator: object
    prior: str = "map"

    def __post_init__(self):
        y = np.asarray(self.y_hat, dtype=np.complex128)
        if not (np.all(np.abs(y.real) == 1) and np.all(np.abs(y.imag) == 1)):
            raise ValueError("y_hat entries must be +-1 +- 1j")
        if y.shape != (self.operator.shape[0],):
            raise ValueError("y_hat length does not match the operator")
        if self.prior not in PRIORS:
            raise ValueError(f"prior must be one of {PRIORS}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "y_hat", y)

    @property
    def B(self):
        return self.operator.shape[1]

    @property
    def scale(self):
        return math.sqrt(2.0 * self.rho)

    @property
    def y_real(self):
        return np.concatenate([self.y_hat.real, self.y_hat.imag])

    def with_operator(self, operator):
        return ObjectiveContext(self.y_hat, self.rho, operator, self.prior)

    def with_prior(self, prior):
        return ObjectiveContext(self.y_hat, self.rho, self.operator, prior)


def _arguments(ctx, ax):
    s = ctx.scale
    return s * ctx.y_hat.real * ax.real, s * ctx.y_hat.imag * ax.imag


def loglik_from_product(ctx, ax):
    """f given the noiseless measurement A x."""
    t_re, t_im = _arguments(ctx, ax)
    return float(np.sum(log_ncdf(t_re)) + np.sum(log_ncdf(t_im)))


def score_weights(ctx, ax):
    """Complex vector c with A^H c the likelihood gradient."""
    t_re, t_im = _arguments(ctx, ax)
    s = ctx.scale
    return s * (inverse_mills(t_re) * ctx.y_hat.real + 1j * inverse_mills(t_im) * ctx.y_hat.imag)


def prior_value(ctx, x):
    if ctx.prior == "ml":
        return 0.0
    return -float(np.vdot(x, x).real)


def prior_gradient(ctx, x):
    if ctx.prior == "ml":
        return np.zeros_like(x)
    return -2.0 * x


def _check_x(ctx, x):
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (ctx.B,):
        raise ValueError(f"x must have length {ctx.B}, got {x.shape}")
    return x


def eval_h(ctx, x):
    x = _check_x(ctx, x)
    return loglik_from_product(ctx, ctx.operator.forward(x)) + prior_value(ctx, x)


def grad_h(ctx, x):
    x = _check_x(ctx, x)
    c = score_weights(ctx, ctx.operator.forward(x))
    return ctx.operator.adjoint(c) + prior_gradient(ctx, x)


def grad_h_sparse(ctx, x):
    """grad_h for a sparse ``x``: the forward pass uses only supp(x) columns."""
    x = _check_x(ctx, x)
    support = np.flatnonzero(x)
    if support.size * 4 >= ctx.B:
        return grad_h(ctx, x)
    ax = ctx.operator.column_subset(support).forward(x[support]) if support.size else np.zeros(ctx.operator.shape[0], complex)
    return ctx.operator.adjoint(score_weights(ctx, ax)) + prior_gradient(ctx, x)


class RestrictedObjective:
    """h restricted to a fixed support, using the column subset A_I."""

    def __init__(self, ctx, support):
        self.ctx = ctx
        # x_I is aligned with the order of ``support`` as given
        self.support = np.asarray(list(support), dtype=np.int64).ravel()
        self.op = ctx.operator.column_subset(self.support)

    def value(self, x_I):
        x_I = np.asarray(x_I, dtype=np.complex128)
        if not self.support.size:
            return loglik_from_product(self.ctx, np.zeros(self.ctx.operator.shape[0], complex))
        return loglik_from_product(self.ctx, self.op.forward(x_I)) + prior_value(self.ctx, x_I)

    def gradient(self, x_I):
        x_I = np.asarray(x_I, dtype=np.complex128)
        if not self.support.size:
            return np.zeros(0, dtype=np.complex128)
        c = score_weights(self.ctx, self.op.forward(x_I))
        return self.op.adjoint(c) + prior_gradient(self.ctx, x_I)

    def value_and_gradient(self, x_I):
        x_I = np.asarray(x_I, dtype=np.complex128)
        if not self.support.size:
            return self.value(x_I), np.zeros(0, dtype=np.complex128)
        ax = self.op.forward(x_I)
        val = loglik_from_product(self.ctx, ax) + prior_value(self.ctx, x_I)
        grad = self.op.adjoint(score_weights(self.ctx, ax)) + prior_gradient(self.ctx, x_I)
        return val, grad

    def pad(self, x_I):
        x = np.zeros(self.ctx.B, dtype=np.complex128)
        x[self.support] = x_I
        return x


def eval_h_restricted(ctx, support, x_I):
    return RestrictedObjective(ctx, support).value(x_I)


def grad_h_restricted(ctx, support, x_I):
    return RestrictedObjective(ctx, support).gradient(x_I)
