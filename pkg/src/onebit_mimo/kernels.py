"""Hot numeric kernels with a numba path and a numpy/Python fallback.

Both paths are always importable: ``*_numpy`` / ``*_py`` are the reference
implementations, the unsuffixed names dispatch to the compiled versions when
:data:`onebit_mimo._accel.USE_NUMBA` is set.
"""

import math

import numpy as np
from scipy import special

from ._accel import USE_NUMBA, maybe_njit

# below this argument the tail branch (erfcx / continued fraction) is used
TAIL_SWITCH = -8.0
# 15 terms already reach double precision for x >= 8; 24 leaves margin
_CF_TERMS = 24
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


# --------------------------------------------------------------------------
# normal CDF kernels
# --------------------------------------------------------------------------

def log_ncdf_numpy(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0.0
    mid = (t < 0.0) & (t >= TAIL_SWITCH)
    tail = t < TAIL_SWITCH
    out[pos] = np.log1p(-0.5 * special.erfc(t[pos] * _INV_SQRT2))
    out[mid] = np.log(0.5 * special.erfc(-t[mid] * _INV_SQRT2))
    tt = t[tail]
    out[tail] = np.log(0.5 * special.erfcx(-tt * _INV_SQRT2)) - 0.5 * tt * tt
    return out


def inverse_mills_numpy(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    body = t >= TAIL_SWITCH
    tb = t[body]
    out[body] = np.exp(-0.5 * tb * tb - _LOG_SQRT_2PI) / (0.5 * special.erfc(-tb * _INV_SQRT2))
    out[~body] = _SQRT_2_OVER_PI / special.erfcx(-t[~body] * _INV_SQRT2)
    return out


@maybe_njit
def _mills_denominator(x):
    # 1 / R(x) for the Mills ratio R(x) = Phi(-x) / phi(x), x > 0,
    # via the Laplace continued fraction evaluated bottom-up
    d = x
    for k in range(_CF_TERMS, 0, -1):
        d = x + k / d
    return d


@maybe_njit
def _log_ncdf_scalar(t):
    if t >= 0.0:
        return math.log1p(-0.5 * math.erfc(t * _INV_SQRT2))
    if t >= TAIL_SWITCH:
        return math.log(0.5 * math.erfc(-t * _INV_SQRT2))
    x = -t
    return -0.5 * x * x - _LOG_SQRT_2PI - math.log(_mills_denominator(x))


@maybe_njit
def _inverse_mills_scalar(t):
    if t >= TAIL_SWITCH:
        return math.exp(-0.5 * t * t - _LOG_SQRT_2PI) / (0.5 * math.erfc(-t * _INV_SQRT2))
    return _mills_denominator(-t)


@maybe_njit
def _log_ncdf_loop(t):
    out = np.empty(t.shape[0])
    for k in range(t.shape[0]):
        out[k] = _log_ncdf_scalar(t[k])
    return out


@maybe_njit
def _inverse_mills_loop(t):
    out = np.empty(t.shape[0])
    for k in range(t.shape[0]):
        out[k] = _inverse_mills_scalar(t[k])
    return out


def log_ncdf_cf(t):
    """Continued-fraction variant of :func:`log_ncdf_numpy` (numba target)."""
    t = np.asarray(t, dtype=np.float64)
    return _log_ncdf_loop(np.ascontiguousarray(t.ravel())).reshape(t.shape)


def inverse_mills_cf(t):
    t = np.asarray(t, dtype=np.float64)
    return _inverse_mills_loop(np.ascontiguousarray(t.ravel())).reshape(t.shape)


# --------------------------------------------------------------------------
# thresholding selection loops
# --------------------------------------------------------------------------

def _bms_select_py(absz, x, order, indptr, indices, s):
    selected = np.empty(s, dtype=np.int64)
    count = 0
    for pos in range(order.shape[0]):
        if count >= s:
            break
        i = order[pos]
        band_max = -np.inf
        for ptr in range(indptr[i], indptr[i + 1]):
            j = indices[ptr]
            if j != i and x[j] == x[i] and absz[j] > band_max:
                band_max = absz[j]
        if absz[i] > band_max:
            selected[count] = i
            count += 1
    return selected[:count]


def _be_select_py(absz, order, indptr, indices, s):
    selected = np.empty(s, dtype=np.int64)
    excluded = np.zeros(absz.shape[0], dtype=np.bool_)
    count = 0
    for pos in range(order.shape[0]):
        if count >= s:
            break
        i = order[pos]
        if excluded[i]:
            continue
        selected[count] = i
        count += 1
        for ptr in range(indptr[i], indptr[i + 1]):
            excluded[indices[ptr]] = True
    return selected[:count]


_bms_select_jit = maybe_njit(_bms_select_py)
_be_select_jit = maybe_njit(_be_select_py)


def bms_select(absz, x, order, indptr, indices, s):
    """Indices accepted by the band maximum criterion, in acceptance order."""
    return _bms_select_jit(absz, x, order, indptr, indices, int(s))


def be_select(absz, order, indptr, indices, s):
    """Indices chosen by greedy band exclusion, in selection order."""
    return _be_select_jit(absz, order, indptr, indices, int(s))


if USE_NUMBA:
    log_ncdf = log_ncdf_cf
    inverse_mills = inverse_mills_cf
else:
    log_ncdf = log_ncdf_numpy
    inverse_mills = inverse_mills_numpy
