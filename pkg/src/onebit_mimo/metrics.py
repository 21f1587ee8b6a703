"""Path extraction, estimate-to-truth matching and error metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

# angle assigned to padding estimates; far from every true angle in [-pi/2, pi/2]
DUMMY_ANGLE = math.pi
BRUTE_FORCE_MAX = 8


@dataclass(frozen=True)
class PathEstimate:
    gain: complex
    aoa: float
    aod: float


def extract_paths(x, dictionary):
    """One PathEstimate per nonzero of the virtual channel ``x``."""
    out = []
    for k, val in zip(x.indices, x.values):
        i, j = dictionary.cell(k)
        out.append(PathEstimate(complex(val), float(dictionary.grid_rx[i]), float(dictionary.grid_tx[j])))
    return out


def _cost_matrix(est, truth):
    aoa = np.array([e.aoa for e in est])
    aod = np.array([e.aod for e in est])
    return (aoa[:, None] - truth.aoa[None, :]) ** 2 + (aod[:, None] - truth.aod[None, :]) ** 2


def _prepare(est, truth):
    est = list(est)
    if len(est) > truth.L:
        # keep the L strongest recovered paths
        est = sorted(est, key=lambda e: -abs(e.gain))[: truth.L]
    return est


def _best_injection(cost):
    """Rows -> distinct columns minimizing the summed cost (rows <= columns)."""
    K, L = cost.shape
    if L <= BRUTE_FORCE_MAX:
        best, best_cols = np.inf, None
        rows = np.arange(K)
        for cols in itertools.permutations(range(L), K):
            c = cost[rows, cols].sum()
            if c < best:
                best, best_cols = c, cols
        return np.asarray(best_cols, dtype=np.int64)
    _, cols = linear_sum_assignment(cost)
    return cols.astype(np.int64)


def match_paths(est, truth):
    """Minimum angle-cost matching; returns (estimates, perm) with est[k] <-> truth[perm[k]].

    Recovered paths are matched first; true paths left unmatched are paired
    with zero-gain padding estimates placed at DUMMY_ANGLE.
    """
    est = _prepare(est, truth)
    L = truth.L
    if L == 0:
        return est, np.zeros(0, dtype=np.int64)
    cols = _best_injection(_cost_matrix(est, truth)) if est else np.zeros(0, dtype=np.int64)
    rest = [j for j in range(L) if j not in set(cols.tolist())]
    est = est + [PathEstimate(0j, DUMMY_ANGLE, DUMMY_ANGLE)] * len(rest)
    return est, np.concatenate([cols, np.asarray(rest, dtype=np.int64)])


def pairing_cost(est, truth, perm):
    cost = _cost_matrix(est, truth)
    return float(cost[np.arange(len(perm)), perm].sum())


def mse_metrics(est, truth, perm):
    """Per-trial (gain, AoA, AoD) mean squared errors over the L paths."""
    L = truth.L
    if L == 0:
        return 0.0, 0.0, 0.0
    g = np.array([e.gain for e in est])
    a = np.array([e.aoa for e in est])
    d = np.array([e.aod for e in est])
    mse_gain = float(np.sum(np.abs(g - truth.gains[perm]) ** 2) / L)
    mse_aoa = float(np.sum((a - truth.aoa[perm]) ** 2) / L)
    mse_aod = float(np.sum((d - truth.aod[perm]) ** 2) / L)
    return mse_gain, mse_aoa, mse_aod


def reconstruct_channel(x, dictionary):
    X = x.as_matrix(dictionary.B_RX)
    return dictionary.a_rx @ X @ dictionary.a_tx.conj().T


def nmse(H_est, H):
    energy = float(np.linalg.norm(H) ** 2)
    if energy == 0:
        raise ValueError("true channel has zero energy")
    return float(np.linalg.norm(H_est - H) ** 2) / energy


def nmse_channel(x, dictionary, H):
    return nmse(reconstruct_channel(x, dictionary), H)


def support_recovered(estimate, true_support):
    return frozenset(int(k) for k in estimate.indices) == frozenset(int(k) for k in true_support)
