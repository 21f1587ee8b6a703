"""Channel, dictionary, training and one-bit measurement synthesis."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Inconsistent system dimensions or training parameters."""


class GridCollisionError(ValueError):
    """Two paths fall into the same virtual-channel grid cell."""


@dataclass(frozen=True)
class SystemConfig:
    M: int
    N: int
    T: int
    L: int
    B_RX: int
    B_TX: int
    rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("M", "N", "T", "B_RX", "B_TX"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if self.T < self.N:
            raise ConfigError(f"training length T={self.T} shorter than N={self.N}")
        if self.B_RX < self.M or self.B_TX < self.N:
            raise ConfigError("grid sizes must satisfy B_RX >= M and B_TX >= N")
        if self.L > min(self.B_RX * self.B_TX, self.M * self.T):
            raise ConfigError("too many paths for the grid / measurement size")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")

    @property
    def B(self):
        return self.B_RX * self.B_TX

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.rho)

    def with_snr_db(self, snr_db):
        return self.replace(rho=10.0 ** (snr_db / 10.0))

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return SystemConfig(**data)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PathSet:
    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        aoa = np.atleast_1d(np.asarray(self.aoa, dtype=np.float64))
        aod = np.atleast_1d(np.asarray(self.aod, dtype=np.float64))
        if not (gains.shape == aoa.shape == aod.shape) or gains.ndim != 1:
            raise ValueError("gains, aoa and aod must be 1-D arrays of equal length")
        if not np.all(np.isfinite(gains)):
            raise ValueError("path gains must be finite")
        for angles in (aoa, aod):
            if np.any(np.abs(angles) > math.pi / 2):
                raise ValueError("path angles must lie in [-pi/2, pi/2]")
        if gains.size and not np.any(gains != 0):
            raise ValueError("path gains are all zero")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "aoa", aoa)
        object.__setattr__(self, "aod", aod)

    @property
    def L(self):
        return self.gains.size

    def scaled(self, c):
        return PathSet(self.gains * c, self.aoa.copy(), self.aod.copy())

    def to_dict(self):
        return {
            "gains_re": self.gains.real.tolist(),
            "gains_im": self.gains.imag.tolist(),
            "aoa": self.aoa.tolist(),
            "aod": self.aod.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        gains = np.asarray(data["gains_re"], dtype=float) + 1j * np.asarray(data["gains_im"], dtype=float)
        return cls(gains, np.asarray(data["aoa"], dtype=float), np.asarray(data["aod"], dtype=float))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Dictionary:
    a_rx: np.ndarray
    a_tx: np.ndarray
    grid_rx: np.ndarray
    grid_tx: np.ndarray
    # True when the columns sit on the overcomplete-DFT grid, enabling FFT operators
    dft_grid: bool = True

    @property
    def M(self):
        return self.a_rx.shape[0]

    @property
    def N(self):
        return self.a_tx.shape[0]

    @property
    def B_RX(self):
        return self.a_rx.shape[1]

    @property
    def B_TX(self):
        return self.a_tx.shape[1]

    @property
    def B(self):
        return self.B_RX * self.B_TX

    def cell(self, k):
        """(row, column) grid cell of vectorized index ``k`` (column-major)."""
        return int(k) % self.B_RX, int(k) // self.B_RX

    def index(self, i, j):
        return int(i) + int(j) * self.B_RX


@dataclass(frozen=True)
class TrainingSequence:
    s: np.ndarray
    root: int = 1

    @property
    def N(self):
        return self.s.shape[0]

    @property
    def T(self):
        return self.s.shape[1]

    def circulant_generator(self, atol=1e-12):
        """First row ``c`` with ``s[n, t] == c[(t - n) % T]``, or None."""
        c = self.s[0]
        for n in range(1, self.N):
            if not np.allclose(self.s[n], np.roll(c, n), rtol=0, atol=atol):
                return None
        return c


@dataclass(frozen=True)
class MeasurementSet:
    y_hat: np.ndarray
    rho: float
    training: TrainingSequence
    dictionary: Dictionary | None = None

    def __post_init__(self):
        y = np.asarray(self.y_hat, dtype=np.complex128)
        if not (np.all(np.abs(y.real) == 1) and np.all(np.abs(y.imag) == 1)):
            raise ValueError("quantized measurements must lie in {+-1 +- 1j}")
        object.__setattr__(self, "y_hat", y)

    def same_as(self, other):
        return self.rho == other.rho and np.array_equal(self.y_hat, other.y_hat)


@dataclass(frozen=True)
class VirtualChannel:
    """Sparse length-B virtual channel, column-major over the B_RX x B_TX grid."""

    size: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.complex128))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=np.complex128).ravel()
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise ValueError("virtual channel index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate virtual channel index")
        order = np.argsort(idx)
        object.__setattr__(self, "indices", idx[order])
        object.__setattr__(self, "values", val[order])

    @classmethod
    def from_dense(cls, x):
        x = np.asarray(x, dtype=np.complex128)
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx])

    @property
    def support(self):
        return frozenset(int(k) for k in self.indices)

    @property
    def nnz(self):
        return int(self.indices.size)

    def dense(self):
        x = np.zeros(self.size, dtype=np.complex128)
        x[self.indices] = self.values
        return x

    def as_matrix(self, B_RX):
        return unvec(self.dense(), B_RX)


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, rows):
    x = np.asarray(x)
    return x.reshape((rows, x.size // rows), order="F")


def steering_vector(theta, m):
    """Half-wavelength ULA response with unit 2-norm."""
    if not -math.pi / 2 <= theta <= math.pi / 2:
        raise ValueError(f"angle {theta} outside [-pi/2, pi/2]")
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    k = np.arange(m)
    return np.exp(-1j * math.pi * k * math.sin(theta)) / math.sqrt(m)


def _steering_matrix(sines, m):
    k = np.arange(m)[:, None]
    return np.exp(-1j * math.pi * k * np.asarray(sines)[None, :]) / math.sqrt(m)


def make_channel(paths, M, N):
    H = np.zeros((M, N), dtype=np.complex128)
    for alpha, th_rx, th_tx in zip(paths.gains, paths.aoa, paths.aod):
        H += alpha * np.outer(steering_vector(th_rx, M), steering_vector(th_tx, N).conj())
    return H


def grid_angles(B):
    """Overcomplete-DFT grid: asin(-1 + 2 i / B), i = 0..B-1."""
    return np.arcsin(-1.0 + 2.0 * np.arange(B) / B)


def make_dictionary(M, N, B_RX, B_TX):
    if B_RX < M or B_TX < N:
        raise ConfigError("grid sizes must satisfy B_RX >= M and B_TX >= N")
    grid_rx = grid_angles(B_RX)
    grid_tx = grid_angles(B_TX)
    # build from the exact grid sines so the DFT structure holds to rounding
    a_rx = _steering_matrix(-1.0 + 2.0 * np.arange(B_RX) / B_RX, M)
    a_tx = _steering_matrix(-1.0 + 2.0 * np.arange(B_TX) / B_TX, N)
    return Dictionary(a_rx, a_tx, grid_rx, grid_tx, dft_grid=True)


def zadoff_chu(T, root=1):
    if math.gcd(root, T) != 1:
        raise ConfigError(f"ZC root {root} is not coprime with length {T}")
    t = np.arange(T, dtype=np.float64)
    if T % 2 == 0:
        phase = root * t * t / T
    else:
        phase = root * t * (t + 1) / T
    # reduce the phase mod 2 before exponentiating to keep large-t rounding small
    return np.exp(-1j * math.pi * np.mod(phase, 2.0))


def make_zc_training(N, T, root=1):
    """Rows are circular shifts of one length-T ZC sequence."""
    if N > T:
        raise ConfigError(f"N={N} exceeds training length T={T}")
    z = zadoff_chu(T, root)
    s = np.stack([np.roll(z, n) for n in range(N)])
    return TrainingSequence(s, root)


def nearest_grid_map(paths, dictionary):
    """Place each path gain at the grid cell nearest to its (AoA, AoD)."""
    B_RX = dictionary.B_RX
    cells = {}
    for ell in range(paths.L):
        # separable distance: nearest row and column minimize the sum independently;
        # argmin returns the first (lower) index on ties
        i = int(np.argmin(np.abs(dictionary.grid_rx - paths.aoa[ell])))
        j = int(np.argmin(np.abs(dictionary.grid_tx - paths.aod[ell])))
        k = i + j * B_RX
        if k in cells:
            raise GridCollisionError(f"paths {cells[k]} and {ell} share grid cell ({i}, {j})")
        cells[k] = ell
    idx = np.array(sorted(cells), dtype=np.int64)
    vals = np.array([paths.gains[cells[k]] for k in idx], dtype=np.complex128)
    return VirtualChannel(dictionary.B, idx, vals)


def quantize(y):
    """One-bit quantizer sign(Re) + j sign(Im), with sign(0) = +1."""
    y = np.asarray(y)
    re = np.where(np.real(y) >= 0, 1.0, -1.0)
    im = np.where(np.imag(y) >= 0, 1.0, -1.0)
    return re + 1j * im


def complex_normal(rng, size):
    """CN(0, 1) samples: variance 1/2 per real component."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * math.sqrt(0.5)


def random_paths(rng, L):
    """alpha ~ CN(0, 1), angles uniform on [-pi/2, pi/2], all independent."""
    gains = complex_normal(rng, L)
    aoa = rng.uniform(-math.pi / 2, math.pi / 2, L)
    aod = rng.uniform(-math.pi / 2, math.pi / 2, L)
    return PathSet(gains, aoa, aod)


def spread_paths(L, step):
    """Deterministic scenario with theta_RX = theta_TX = step * l."""
    ell = np.arange(L)
    gains = (0.8 + 0.1 * ell) * np.exp(1j * math.pi / 4 * ell)
    return PathSet(gains, step * ell, step * ell)


def simulate_measurement(cfg, paths, training, rng, noiseless=False, dictionary=None):
    H = make_channel(paths, cfg.M, cfg.N)
    Y = math.sqrt(cfg.rho) * (H @ training.s)
    if not noiseless:
        Y = Y + complex_normal(rng, Y.shape)
    return MeasurementSet(quantize(vec(Y)), cfg.rho, training, dictionary)


def trial_rng(seed, trial, stream=0):
    """Counter-based generator keyed by (seed, trial, stream)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(ss))
