"""Measurement operator A = S^T conj(A_TX) kron A_RX, dense and FFT forms.

Vectors on the coefficient side are column-major vectorizations of
B_RX x B_TX matrices, vectors on the measurement side of M x T matrices.
Every operator carries a multiply counter that tallies complex
multiplications: an n-point transform counts (n/2) log2 n, a dense product
counts its full size.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .model import unvec, vec


def fft_cost(n):
    return 0.0 if n <= 1 else 0.5 * n * math.log2(n)


class MultiplyCounter:
    """Thread-safe running count of complex multiplications."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0.0

    def add(self, n):
        with self._lock:
            self._count += n

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0.0


def fft_forward_cost(M, N, T, B_RX, B_TX):
    """Multiplications of one FFT-mode forward pass (see FFTOperator.forward)."""
    tx = B_RX * (fft_cost(B_TX) + N)
    s = B_RX * (2 * fft_cost(T) + T)
    rx = T * (fft_cost(B_RX) + M)
    return tx + s + rx


def fft_adjoint_cost(M, N, T, B_RX, B_TX):
    s = M * (2 * fft_cost(T) + T)
    tx = M * (fft_cost(B_TX) + N)
    rx = B_TX * (fft_cost(B_RX) + M)
    return s + tx + rx


def fft_pair_cost(M, N, T, B_RX, B_TX):
    """Cost of one forward plus one adjoint pass in FFT mode."""
    return fft_forward_cost(M, N, T, B_RX, B_TX) + fft_adjoint_cost(M, N, T, B_RX, B_TX)


class MeasurementOperator:
    mode = "abstract"

    def __init__(self, dictionary, training, counter=None):
        if dictionary.N != training.N:
            raise ValueError("dictionary and training disagree on N")
        self.dictionary = dictionary
        self.training = training
        self.M = dictionary.M
        self.N = dictionary.N
        self.T = training.T
        self.B_RX = dictionary.B_RX
        self.B_TX = dictionary.B_TX
        self.B = dictionary.B
        self.counter = counter if counter is not None else MultiplyCounter()

    @property
    def shape(self):
        return (self.M * self.T, self.B)

    def fork(self):
        """Shallow copy sharing precomputed data with a fresh counter."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.counter = MultiplyCounter()
        return clone

    def complexity_report(self):
        return self.counter.count

    def _check_coeff(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.B,):
            raise ValueError(f"expected coefficient vector of length {self.B}, got {x.shape}")
        return x

    def _check_meas(self, c):
        c = np.asarray(c, dtype=np.complex128)
        if c.shape != (self.M * self.T,):
            raise ValueError(f"expected measurement vector of length {self.M * self.T}, got {c.shape}")
        return c

    def column_subset(self, indices):
        return SubsetOperator(self, indices)

    def columns(self, indices):
        """Explicit columns a_k = vec(a_RX,i a_TX,j^H S) for the given indices."""
        idx = np.asarray(indices, dtype=np.int64)
        p = idx % self.B_RX
        q = idx // self.B_RX
        R = self.dictionary.a_rx[:, p]
        W = self.dictionary.a_tx[:, q].conj().T @ self.training.s
        return (W.T[:, None, :] * R[None, :, :]).reshape(self.M * self.T, idx.size)

    def dense_matrix(self):
        return np.kron(self.training.s.T @ self.dictionary.a_tx.conj(), self.dictionary.a_rx)


class DenseOperator(MeasurementOperator):
    """Explicit MT x B matrix; the correctness oracle for the FFT path."""

    mode = "dense"

    def __init__(self, dictionary, training, counter=None):
        super().__init__(dictionary, training, counter)
        self.A = self.dense_matrix()
        self._AH = self.A.conj().T

    def forward(self, x):
        x = self._check_coeff(x)
        self.counter.add(self.A.size)
        return self.A @ x

    def adjoint(self, c):
        c = self._check_meas(c)
        self.counter.add(self.A.size)
        return self._AH @ c


class FFTOperator(MeasurementOperator):
    """Matrix-free operator using pruned DFTs along both grid axes.

    Forward order is TX axis, training, RX axis; the adjoint mirrors it as
    training, TX axis, RX axis. Pruning is realized by full transforms with
    output selection or zero-padded input.
    """

    mode = "fft"

    def __init__(self, dictionary, training, counter=None):
        super().__init__(dictionary, training, counter)
        if not dictionary.dft_grid:
            raise ValueError("FFT operator requires an overcomplete-DFT dictionary")
        self.sign_rx = ((-1.0) ** np.arange(self.M)) / math.sqrt(self.M)
        self.sign_tx = ((-1.0) ** np.arange(self.N)) / math.sqrt(self.N)
        gen = training.circulant_generator()
        self.circulant = gen is not None
        if self.circulant:
            self._gen_fft = np.fft.fft(gen)
        self._S = training.s
        self._cost_forward = fft_forward_cost(self.M, self.N, self.T, self.B_RX, self.B_TX)
        self._cost_adjoint = fft_adjoint_cost(self.M, self.N, self.T, self.B_RX, self.B_TX)

    def s_multiply(self, X, direction="forward"):
        """Multiply rows of ``X`` by S (forward, width N -> T) or S^H (adjoint, T -> N)."""
        X = np.asarray(X, dtype=np.complex128)
        rows = X.shape[0]
        if direction == "forward":
            if not self.circulant:
                self.counter.add(rows * self.N * self.T)
                return X @ self._S
            spec = np.fft.fft(X, n=self.T, axis=1)
            self.counter.add(rows * (2 * fft_cost(self.T) + self.T))
            return np.fft.ifft(spec * self._gen_fft[None, :], axis=1)
        if direction == "adjoint":
            if not self.circulant:
                self.counter.add(rows * self.N * self.T)
                return X @ self._S.conj().T
            spec = np.fft.fft(X, axis=1)
            self.counter.add(rows * (2 * fft_cost(self.T) + self.T))
            return np.fft.ifft(spec * self._gen_fft.conj()[None, :], axis=1)[:, : self.N]
        raise ValueError(f"unknown direction {direction!r}")

    def forward(self, x):
        x = self._check_coeff(x)
        X = unvec(x, self.B_RX)
        # X A_TX^H: B_TX-point inverse transforms, keep N outputs
        W = np.fft.ifft(X, axis=1)[:, : self.N] * (self.B_TX * self.sign_tx[None, :])
        self.counter.add(self.B_RX * (fft_cost(self.B_TX) + self.N))
        V = self.s_multiply(W, "forward")
        # A_RX V: B_RX-point transforms, keep M outputs
        Y = np.fft.fft(V, axis=0)[: self.M, :] * self.sign_rx[:, None]
        self.counter.add(self.T * (fft_cost(self.B_RX) + self.M))
        return vec(Y)

    def adjoint(self, c):
        c = self._check_meas(c)
        C = unvec(c, self.M)
        U = self.s_multiply(C, "adjoint")
        # U A_TX: zero-padded B_TX-point transforms
        Z = np.fft.fft(U * self.sign_tx[None, :], n=self.B_TX, axis=1)
        self.counter.add(self.M * (fft_cost(self.B_TX) + self.N))
        # A_RX^H Z: zero-padded B_RX-point inverse transforms
        G = np.fft.ifft(Z * self.sign_rx[:, None], n=self.B_RX, axis=0) * self.B_RX
        self.counter.add(self.B_TX * (fft_cost(self.B_RX) + self.M))
        return vec(G)


class SubsetOperator:
    """Column-restricted operator A_I, materialized densely (|I| is O(L))."""

    def __init__(self, parent, indices):
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= parent.B):
            raise ValueError("column index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("column indices must be distinct")
        self.parent = parent
        self.indices = idx
        self.counter = parent.counter
        self.A = parent.columns(idx)
        self._AH = self.A.conj().T
        self.counter.add(idx.size * (parent.N + parent.M) * parent.T)

    @property
    def shape(self):
        return self.A.shape

    def forward(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.indices.size,):
            raise ValueError("restricted vector has the wrong length")
        self.counter.add(self.A.size)
        return self.A @ x

    def adjoint(self, c):
        self.counter.add(self.A.size)
        return self._AH @ np.asarray(c, dtype=np.complex128)


def build_operator(dictionary, training, mode=None):
    """Dense for small grids, FFT for B_RX > 32 (or whenever requested)."""
    if mode is None:
        mode = "fft" if dictionary.B_RX > 32 and dictionary.dft_grid else "dense"
    if mode == "dense":
        return DenseOperator(dictionary, training)
    if mode == "fft":
        return FFTOperator(dictionary, training)
    raise ValueError(f"unknown operator mode {mode!r}")
