import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_mimo.linops import (
    DenseOperator,
    FFTOperator,
    MultiplyCounter,
    build_operator,
    fft_cost,
    fft_pair_cost,
)
from onebit_mimo.model import TrainingSequence, make_dictionary, make_zc_training

from conftest import crandn


def pair(M=8, N=8, T=10, B_RX=16, B_TX=16):
    d = make_dictionary(M, N, B_RX, B_TX)
    s = make_zc_training(N, T)
    return DenseOperator(d, s), FFTOperator(d, s)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("dims", [(8, 8, 10, 16, 16), (4, 6, 7, 12, 8), (5, 3, 3, 5, 3), (16, 16, 20, 64, 64)])
def test_fft_matches_dense(dims, rng):
    dense, fft = pair(*dims)
    for _ in range(5):
        x = crandn(rng, dense.B)
        c = crandn(rng, dense.shape[0])
        assert rel(fft.forward(x), dense.forward(x)) <= 1e-10
        assert rel(fft.adjoint(c), dense.adjoint(c)) <= 1e-10


def test_adjoint_identity(rng):
    _, fft = pair()
    x = crandn(rng, fft.B)
    c = crandn(rng, fft.shape[0])
    lhs = np.vdot(c, fft.forward(x))
    rhs = np.vdot(fft.adjoint(c), x)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_dense_matrix_is_kron_form():
    dense, _ = pair(4, 4, 5, 8, 8)
    d, s = dense.dictionary, dense.training
    A = np.kron(s.s.T @ d.a_tx.conj(), d.a_rx)
    assert np.allclose(dense.A, A, atol=1e-12)


def test_columns_match_dense(rng):
    dense, fft = pair()
    idx = rng.choice(dense.B, 7, replace=False)
    assert np.allclose(fft.columns(idx), dense.A[:, idx], atol=1e-12)


def test_subset_operator(rng):
    dense, fft = pair()
    idx = np.array([40, 3, 200])
    sub = fft.column_subset(idx)
    v = crandn(rng, 3)
    x = np.zeros(fft.B, complex)
    x[idx] = v
    assert np.allclose(sub.forward(v), dense.forward(x), atol=1e-12)
    c = crandn(rng, fft.shape[0])
    assert np.allclose(sub.adjoint(c), dense.adjoint(c)[idx], atol=1e-12)
    with pytest.raises(ValueError):
        fft.column_subset([1, 1])


def test_generic_training_uses_dense_s_multiply(rng):
    d = make_dictionary(4, 4, 8, 8)
    s = TrainingSequence(crandn(rng, 4, 6))
    dense, fft = DenseOperator(d, s), FFTOperator(d, s)
    x = crandn(rng, d.B)
    assert rel(fft.forward(x), dense.forward(x)) <= 1e-10


def test_shape_errors():
    _, fft = pair()
    with pytest.raises(ValueError):
        fft.forward(np.zeros(3))
    with pytest.raises(ValueError):
        fft.adjoint(np.zeros(3))


def test_build_operator_modes():
    d = make_dictionary(8, 8, 16, 16)
    s = make_zc_training(8, 10)
    assert build_operator(d, s).mode == "dense"
    assert build_operator(d, s, "fft").mode == "fft"
    assert build_operator(make_dictionary(16, 16, 64, 64), make_zc_training(16, 20)).mode == "fft"
    with pytest.raises(ValueError):
        build_operator(d, s, "sparse")


def test_counter_counts_one_pair(rng):
    _, fft = pair()
    op = fft.fork()
    op.forward(crandn(rng, op.B))
    op.adjoint(crandn(rng, op.shape[0]))
    assert op.counter.count == pytest.approx(fft_pair_cost(8, 8, 10, 16, 16))
    assert fft.counter.count == 0


def test_dense_counter_counts_matrix_size(rng):
    dense, _ = pair()
    dense.forward(crandn(rng, dense.B))
    assert dense.counter.count == dense.A.size


def test_fft_cost_formula():
    assert fft_cost(1) == 0
    assert fft_cost(64) == 32 * 6
    c = MultiplyCounter()
    c.add(3)
    c.add(4.5)
    assert c.count == 7.5
    c.reset()
    assert c.count == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(1, 3), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_fft_dense_property(M, N, over, extra_t, seed):
    rng = np.random.default_rng(seed)
    dense, fft = pair(M, N, N + extra_t, over * M, over * N)
    x = crandn(rng, dense.B)
    c = crandn(rng, dense.shape[0])
    assert rel(fft.forward(x), dense.forward(x)) <= 1e-10
    assert rel(fft.adjoint(c), dense.adjoint(c)) <= 1e-10
    assert abs(np.vdot(c, fft.forward(x)) - np.vdot(fft.adjoint(c), x)) <= 1e-10 * max(1.0, np.linalg.norm(x) * np.linalg.norm(c))


def test_fft_cost_growth_is_m2_log_m():
    costs = {M: fft_pair_cost(M, M, int(1.25 * M), 4 * M, 4 * M) for M in (8, 16, 32)}
    for M in (16, 32):
        ratio = costs[M] / costs[8]
        model = (M**2 * math.log(M)) / (8**2 * math.log(8))
        assert 0.5 <= ratio / model <= 2.0
