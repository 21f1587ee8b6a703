"""Column coherence, eta-coherence bands and hard-thresholding operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

# slack on the band test mu >= eta, so the coherence pair that defines eta
# stays inside its band despite rounding between code paths
BAND_RTOL = 1e-12


class DegenerateBandError(ValueError):
    """No eta in (0, 1) gives every index a band partner."""


class DegenerateBandWarning(UserWarning):
    pass


def _orthogonal_rows(s, rtol=1e-10):
    gram = s @ s.conj().T
    scale = np.real(np.trace(gram)) / s.shape[0]
    return np.allclose(gram, scale * np.eye(s.shape[0]), rtol=0, atol=rtol * scale)


def factor_coherences(dictionary):
    """Normalized |A^H A| for the RX and TX dictionaries separately."""
    def gram(A):
        norms = np.linalg.norm(A, axis=0)
        return np.abs(A.conj().T @ A) / np.outer(norms, norms)

    return gram(dictionary.a_rx), gram(dictionary.a_tx)


@dataclass(frozen=True)
class CoherenceStructure:
    """eta-coherence bands in CSR form: band(i) = indices[indptr[i]:indptr[i+1]]."""

    eta: float
    indptr: np.ndarray
    indices: np.ndarray
    factorized: bool

    @property
    def B(self):
        return self.indptr.size - 1

    def band(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def band_sizes(self):
        return np.diff(self.indptr)

    @classmethod
    def singletons(cls, B):
        return cls(1.0, np.arange(B + 1, dtype=np.int64), np.arange(B, dtype=np.int64), True)

    @classmethod
    def from_sets(cls, bands, eta=0.5):
        """Build from explicit per-index band lists (used for hand-made cases)."""
        indptr = np.zeros(len(bands) + 1, dtype=np.int64)
        flat = []
        for i, band in enumerate(bands):
            members = sorted(set(int(j) for j in band) | {i})
            flat.extend(members)
            indptr[i + 1] = len(flat)
        return cls(float(eta), indptr, np.asarray(flat, dtype=np.int64), False)


class Coherence:
    """Coherence mu(i, j) of the columns of A for one dictionary/training pair.

    With orthogonal training rows, mu(i, j) = mu_RX(p, p') * mu_TX(q, q') where
    i = (p, q); otherwise the explicit Gram of A is materialized.
    """

    def __init__(self, dictionary, training):
        self.dictionary = dictionary
        self.training = training
        self.B_RX = dictionary.B_RX
        self.B_TX = dictionary.B_TX
        self.B = dictionary.B
        self.factorized = _orthogonal_rows(training.s)
        if self.factorized:
            self.mu_rx, self.mu_tx = factor_coherences(dictionary)
            self._gram = None
        else:
            from .linops import DenseOperator

            A = DenseOperator(dictionary, training).A
            norms = np.linalg.norm(A, axis=0)
            self._gram = np.abs(A.conj().T @ A) / np.outer(norms, norms)

    def __call__(self, i, j):
        if self._gram is not None:
            return float(self._gram[i, j])
        p, q = i % self.B_RX, i // self.B_RX
        pp, qq = j % self.B_RX, j // self.B_RX
        return float(self.mu_rx[p, pp] * self.mu_tx[q, qq])

    def select_eta(self):
        """Largest eta with min_i |B_eta(i)| > 1, i.e. min_i max_{j != i} mu(i, j)."""
        if self.B < 2:
            raise DegenerateBandError("a single-column dictionary has no band partners")
        if self._gram is not None:
            off = self._gram.copy()
            np.fill_diagonal(off, -np.inf)
            eta = float(off.max(axis=1).min())
        else:
            # the best partner of (p, q) differs in one coordinate only
            def best_partner(mu):
                if mu.shape[0] < 2:
                    return -np.inf
                off = mu.copy()
                np.fill_diagonal(off, -np.inf)
                return off.max(axis=1).min()

            eta = float(max(best_partner(self.mu_rx), best_partner(self.mu_tx)))
        if not 1e-8 < eta < 1.0:
            raise DegenerateBandError(
                f"cross-coherences are ~{eta:.3g}: bands collapse to singletons (orthogonal dictionary)"
            )
        return eta

    def bands(self, eta):
        thr = eta * (1.0 - BAND_RTOL)
        B_RX = self.B_RX
        indptr = np.zeros(self.B + 1, dtype=np.int64)
        chunks = []
        if self._gram is not None:
            for i in range(self.B):
                members = np.flatnonzero(self._gram[i] >= thr)
                chunks.append(members)
                indptr[i + 1] = indptr[i] + members.size
        else:
            rx_cand = [np.flatnonzero(row >= thr) for row in self.mu_rx]
            tx_cand = [np.flatnonzero(row >= thr) for row in self.mu_tx]
            for q in range(self.B_TX):
                tq = tx_cand[q]
                for p in range(B_RX):
                    rp = rx_cand[p]
                    prod = np.outer(self.mu_rx[p, rp], self.mu_tx[q, tq])
                    keep = prod >= thr
                    members = np.sort((rp[:, None] + tq[None, :] * B_RX)[keep])
                    i = p + q * B_RX
                    chunks.append(members)
                    indptr[i + 1] = indptr[i] + members.size
        indices = np.concatenate(chunks).astype(np.int64) if chunks else np.zeros(0, np.int64)
        return CoherenceStructure(float(eta), indptr, indices, self._gram is None)


def coherence(dictionary, training, i, j):
    return Coherence(dictionary, training)(i, j)


def select_eta(dictionary, training):
    return Coherence(dictionary, training).select_eta()


def build_bands(dictionary, training, eta=None):
    """Bands at ``eta`` (default: the largest admissible eta).

    For orthogonal dictionaries no admissible eta exists; singleton bands are
    returned with a :class:`DegenerateBandWarning`.
    """
    coh = Coherence(dictionary, training)
    if eta is None:
        try:
            eta = coh.select_eta()
        except DegenerateBandError as exc:
            warnings.warn(str(exc), DegenerateBandWarning, stacklevel=2)
            return CoherenceStructure.singletons(coh.B)
    return coh.bands(eta)


# --------------------------------------------------------------------------
# thresholding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdResult:
    vector: np.ndarray
    support: np.ndarray
    short: bool = False

    def __iter__(self):
        # allows ``vec, supp = hard_threshold(...)``
        yield self.vector
        yield self.support


def _descending_order(absz):
    # stable sort on -|z| keeps lower indices first on ties
    return np.argsort(-absz, kind="stable")


def _restrict(z, support, s_requested):
    out = np.zeros_like(z)
    support = np.sort(np.asarray(support, dtype=np.int64))
    out[support] = z[support]
    return ThresholdResult(out, support, short=support.size < s_requested)


def hard_threshold(z, s):
    """Best s-term approximation of ``z``."""
    z = np.asarray(z, dtype=np.complex128)
    s = int(min(max(s, 0), z.size))
    support = _descending_order(np.abs(z))[:s]
    return _restrict(z, support, s)


def bms_threshold(z, x, s, bands):
    """Band maximum selecting hard thresholding.

    An index is accepted only if its magnitude strictly exceeds every other
    member of its band that shares its current iterate value.
    """
    z = np.asarray(z, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    s = int(min(max(s, 0), z.size))
    absz = np.abs(z)
    support = kernels.bms_select(absz, x, _descending_order(absz), bands.indptr, bands.indices, s)
    return _restrict(z, support, s)


def be_threshold(z, s, bands):
    """Band excluding thresholding: take the maximum, drop its band, repeat."""
    z = np.asarray(z, dtype=np.complex128)
    s = int(min(max(s, 0), z.size))
    absz = np.abs(z)
    support = kernels.be_select(absz, _descending_order(absz), bands.indptr, bands.indices, s)
    return _restrict(z, support, s)


STRATEGIES = ("plain", "be", "bms")


def apply_threshold(strategy, z, x, s, bands):
    if strategy == "plain":
        return hard_threshold(z, s)
    if bands is None:
        raise ValueError(f"strategy {strategy!r} needs coherence bands")
    if strategy == "bms":
        return bms_threshold(z, x, s, bands)
    if strategy == "be":
        return be_threshold(z, s, bands)
    raise ValueError(f"unknown threshold strategy {strategy!r}")
