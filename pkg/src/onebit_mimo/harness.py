"""Seeded Monte-Carlo experiments over SNR sweeps and estimator lists."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from ._accel import backend_name
from .likelihood import ObjectiveContext, grad_h
from .linops import build_operator, fft_pair_cost
from .metrics import extract_paths, match_paths, mse_metrics, nmse_channel, support_recovered
from .model import (
    ConfigError,
    GridCollisionError,
    PathSet,
    SystemConfig,
    VirtualChannel,
    make_channel,
    make_dictionary,
    make_zc_training,
    nearest_grid_map,
    random_paths,
    simulate_measurement,
    spread_paths,
    trial_rng,
)
from .solvers import SolverOptions, calibrate_gamma, fista, run_estimator
from .threshold import build_bands

CHANNEL_MODES = ("random", "fixed", "spread", "on_grid")
# on-grid gains: CN(0, 1), unit modulus with CN phase, or the fixed-scenario ramp
GAIN_PROFILES = ("cn", "unit", "ramp")
CSV_HEADER = [
    "estimator",
    "snr_db",
    "trial",
    "mse_gain",
    "mse_aoa",
    "mse_aod",
    "nmse",
    "outer_iterations",
    "normalized_complexity",
    "support_recovered",
    "flags",
]
# pilot trials for gamma calibration use indices disjoint from evaluation trials
PILOT_TRIAL_OFFSET = 1_000_000
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    algorithm: str = "grasp"
    threshold: str = "bms"
    debias: bool = True
    prior: str = "auto"
    B_RX: int | None = None
    B_TX: int | None = None
    gamma: float | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    snr_db: tuple
    trials: int
    estimators: tuple
    channel: dict = field(default_factory=lambda: {"mode": "random"})
    noiseless: bool = False
    operator: str | None = None
    output: str | None = None
    gamma_calibration: dict = field(default_factory=lambda: {"pilot_trials": 20})

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trial count must be >= 1")
        if not self.snr_db:
            raise ConfigError("SNR list is empty")
        if not self.estimators:
            raise ConfigError("no estimators configured")
        mode = self.channel.get("mode", "random")
        if mode not in CHANNEL_MODES:
            raise ConfigError(f"channel mode must be one of {CHANNEL_MODES}")
        if mode == "fixed" and "paths" not in self.channel:
            raise ConfigError("fixed channel mode needs 'paths'")
        if mode == "spread" and "step" not in self.channel:
            raise ConfigError("spread channel mode needs 'step'")
        if self.channel.get("gains", "cn") not in GAIN_PROFILES:
            raise ConfigError(f"on-grid gains must be one of {GAIN_PROFILES}")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique")
        for est in self.estimators:
            if est.algorithm not in ("grasp", "grahtp", "fista"):
                raise ConfigError(f"unknown algorithm {est.algorithm!r}")
            b_rx = est.B_RX or self.system.B_RX
            b_tx = est.B_TX or self.system.B_TX
            if b_rx < self.system.M or b_tx < self.system.N:
                raise ConfigError(f"estimator {est.name}: grid smaller than the arrays")
        if self.operator not in (None, "dense", "fft"):
            raise ConfigError("operator must be 'dense' or 'fft'")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        system = SystemConfig.from_dict(data.pop("system"))
        estimators = tuple(EstimatorSpec.from_dict(e) for e in data.pop("estimators"))
        snr = tuple(float(v) for v in data.pop("snr_db"))
        return cls(system=system, snr_db=snr, estimators=estimators, **data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        return {
            "system": self.system.to_dict(),
            "snr_db": list(self.snr_db),
            "trials": self.trials,
            "estimators": [asdict(e) for e in self.estimators],
            "channel": self.channel,
            "noiseless": self.noiseless,
            "operator": self.operator,
            "output": self.output,
            "gamma_calibration": self.gamma_calibration,
        }

    def with_overrides(self, **changes):
        data = self.to_dict()
        for key, value in changes.items():
            if value is None:
                continue
            if key == "seed":
                data["system"]["seed"] = int(value)
            else:
                data[key] = value
        return ExperimentConfig.from_dict(data)


class _Grid:
    """Dictionary, operator and bands for one grid size (shared across trials)."""

    def __init__(self, cfg, B_RX, B_TX, training, operator_mode):
        self.B_RX, self.B_TX = B_RX, B_TX
        self.dictionary = make_dictionary(cfg.M, cfg.N, B_RX, B_TX)
        self.operator = build_operator(self.dictionary, training, operator_mode)
        self._bands = None
        self._training = training
        self.pair_cost = fft_pair_cost(cfg.M, cfg.N, cfg.T, B_RX, B_TX)

    @property
    def bands(self):
        if self._bands is None:
            self._bands = build_bands(self.dictionary, self._training)
        return self._bands


def _on_grid_paths(rng, cfg, channel):
    B_RX, B_TX = channel.get("grid", (cfg.B_RX, cfg.B_TX))
    sep = int(channel.get("min_separation", 1))
    grid_rx = make_dictionary(cfg.M, cfg.N, B_RX, B_TX).grid_rx
    grid_tx = make_dictionary(cfg.M, cfg.N, B_RX, B_TX).grid_tx
    cells = []
    if channel.get("adjacent_pair") and cfg.L >= 2:
        p, q = int(rng.integers(1, B_RX - 1)), int(rng.integers(0, B_TX))
        cells = [(p, q), (p + 1, q)]
    for _ in range(MAX_REDRAWS * cfg.L):
        if len(cells) >= cfg.L:
            break
        p, q = int(rng.integers(1, B_RX)), int(rng.integers(0, B_TX))
        # cyclic Chebyshev distance on the grid
        ok = all(
            max(min(abs(p - a), B_RX - abs(p - a)), min(abs(q - b), B_TX - abs(q - b))) >= sep
            for a, b in cells
        )
        if ok:
            cells.append((p, q))
    if len(cells) < cfg.L:
        raise ConfigError("could not place separated on-grid paths")
    profile = channel.get("gains", "cn")
    if profile == "ramp":
        gains = spread_paths(cfg.L, 0.0).gains
    else:
        gains = (rng.standard_normal(cfg.L) + 1j * rng.standard_normal(cfg.L)) * math.sqrt(0.5)
        if profile == "unit":
            gains = np.exp(1j * np.angle(gains))
    # row 0 sits at -pi/2 exactly; it is excluded above to keep angles interior
    aoa = np.array([grid_rx[p] for p, _ in cells])
    aod = np.array([grid_tx[q] for _, q in cells])
    return PathSet(gains, aoa, aod)


def draw_paths(cfg, channel, trial):
    """PathSet for ``trial``; identical for every SNR point and estimator."""
    mode = channel.get("mode", "random")
    if mode == "fixed":
        return PathSet.from_dict(channel["paths"])
    if mode == "spread":
        return spread_paths(cfg.L, float(channel["step"]))
    rng = trial_rng(cfg.seed, trial, 0)
    if mode == "on_grid":
        return _on_grid_paths(rng, cfg, channel)
    check = make_dictionary(cfg.M, cfg.N, cfg.B_RX, cfg.B_TX)
    for _ in range(MAX_REDRAWS):
        paths = random_paths(rng, cfg.L)
        try:
            nearest_grid_map(paths, check)
        except GridCollisionError:
            continue
        return paths
    raise ConfigError("could not draw a collision-free PathSet")


def _prior_for(spec, channel):
    if spec.prior != "auto":
        return spec.prior
    return "map" if channel.get("mode", "random") in ("random", "on_grid") else "ml"


def _format(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Experiment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        sys_cfg = cfg.system
        self.training = make_zc_training(sys_cfg.N, sys_cfg.T)
        self.grids = {}
        for spec in cfg.estimators:
            key = (spec.B_RX or sys_cfg.B_RX, spec.B_TX or sys_cfg.B_TX)
            if key not in self.grids:
                self.grids[key] = _Grid(sys_cfg, key[0], key[1], self.training, cfg.operator)
        self.gammas = {}

    def grid_for(self, spec):
        return self.grids[(spec.B_RX or self.cfg.system.B_RX, spec.B_TX or self.cfg.system.B_TX)]

    def measurements(self, trial, snr_db):
        sys_cfg = self.cfg.system.with_snr_db(snr_db)
        paths = draw_paths(self.cfg.system, self.cfg.channel, trial)
        ms = simulate_measurement(sys_cfg, paths, self.training, trial_rng(sys_cfg.seed, trial, 1), noiseless=self.cfg.noiseless)
        return sys_cfg, paths, ms

    def context(self, spec, ms):
        return ObjectiveContext(ms.y_hat, ms.rho, self.grid_for(spec).operator, _prior_for(spec, self.cfg.channel))

    def calibrate(self, spec, snr_db):
        settings = self.cfg.gamma_calibration or {}
        pilots = int(settings.get("pilot_trials", 20))
        target = int(settings.get("target", 3 * self.cfg.system.L))
        contexts = []
        for k in range(pilots):
            _, _, ms = self.measurements(PILOT_TRIAL_OFFSET + k, snr_db)
            contexts.append(self.context(spec, ms).with_prior("ml"))
        gamma, mean_nnz, evals = calibrate_gamma(contexts, target, fista_kwargs=settings.get("fista", {}))
        return {"gamma": gamma, "mean_nnz": mean_nnz, "target": target, "pilot_trials": pilots, "evaluations": len(evals)}

    def gamma_for(self, spec, snr_db):
        if spec.gamma is not None:
            return float(spec.gamma)
        key = (spec.name, snr_db)
        if key not in self.gammas:
            self.gammas[key] = self.calibrate(spec, snr_db)
        return self.gammas[key]["gamma"]

    def run_trial(self, snr_db, trial):
        sys_cfg, paths, ms = self.measurements(trial, snr_db)
        H = make_channel(paths, sys_cfg.M, sys_cfg.N)
        rows = []
        for spec in self.cfg.estimators:
            grid = self.grid_for(spec)
            ctx = self.context(spec, ms)
            flags = []
            if spec.algorithm == "fista":
                res = fista(ctx.with_prior("ml"), self.gamma_for(spec, snr_db), **spec.options)
                estimate = VirtualChannel.from_dense(np.where(np.abs(res.x) > 1e-8, res.x, 0))
                iters = res.iterations
                count = res.multiply_count
                if not res.converged:
                    flags.append("not_converged")
            else:
                opts = SolverOptions(
                    sparsity=sys_cfg.L,
                    algorithm=spec.algorithm,
                    threshold=spec.threshold,
                    debias=spec.debias,
                    **spec.options,
                )
                bands = grid.bands if spec.threshold != "plain" else None
                report = run_estimator(ctx, opts, bands)
                estimate = report.estimate
                iters = report.outer_iterations
                count = report.multiply_count
                flags += [k for k, v in report.flags.items() if v]
            est_paths = extract_paths(estimate, grid.dictionary)
            matched, perm = match_paths(est_paths, paths)
            mse_gain, mse_aoa, mse_aod = mse_metrics(matched, paths, perm)
            try:
                truth = nearest_grid_map(paths, grid.dictionary)
                recovered = int(support_recovered(estimate, truth.indices))
            except GridCollisionError:
                recovered = ""
            rows.append(
                {
                    "estimator": spec.name,
                    "snr_db": float(snr_db),
                    "trial": int(trial),
                    "mse_gain": mse_gain,
                    "mse_aoa": mse_aoa,
                    "mse_aod": mse_aod,
                    "nmse": nmse_channel(estimate, grid.dictionary, H),
                    "outer_iterations": int(iters),
                    "normalized_complexity": normalized_complexity(count, grid.pair_cost),
                    "support_recovered": recovered,
                    "flags": "|".join(flags),
                }
            )
        return rows

    def run(self, threads=1):
        cfg = self.cfg
        # calibrations are resolved up front so trial order cannot affect them
        for spec in cfg.estimators:
            if spec.algorithm == "fista":
                for snr in cfg.snr_db:
                    self.gamma_for(spec, snr)
        jobs = [(si, snr, t) for si, snr in enumerate(cfg.snr_db) for t in range(cfg.trials)]
        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda j: self.run_trial(j[1], j[2]), jobs))
        else:
            results = [self.run_trial(snr, t) for _, snr, t in jobs]
        order = {spec.name: k for k, spec in enumerate(cfg.estimators)}
        keyed = []
        for (si, _, t), rows in zip(jobs, results):
            for row in rows:
                keyed.append(((order[row["estimator"]], si, t), row))
        keyed.sort(key=lambda item: item[0])
        return [row for _, row in keyed]


def normalized_complexity(multiply_count, pair_cost):
    """Multiplications divided by one FFT-mode forward+adjoint pair."""
    return float(multiply_count) / float(pair_cost)


def run_experiment(cfg, threads=1):
    exp = Experiment(cfg)
    rows = exp.run(threads)
    return rows, exp


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_format(row[k]) for k in CSV_HEADER])
    return buf.getvalue()


def write_results(rows, exp, path):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    sidecar = {
        "config": exp.cfg.to_dict(),
        "version": __version__,
        "backend": backend_name(),
        "gamma_calibration": [
            {"estimator": name, "snr_db": snr, **info} for (name, snr), info in sorted(exp.gammas.items())
        ],
    }
    side_path = path[:-4] + ".json" if path.endswith(".csv") else path + ".json"
    with open(side_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return side_path


def summarize(rows, key="nmse"):
    """Mean of ``key`` grouped by (estimator, snr_db)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["estimator"], row["snr_db"]), []).append(row[key])
    return {k: float(np.mean(v)) for k, v in groups.items()}


def conjecture_probe(ctx, bands, x=None, max_indices=None, rng=None):
    """Relative gradient gaps |g_i - g_j| / max|g| over band pairs with x_i = x_j."""
    x = np.zeros(ctx.B, dtype=np.complex128) if x is None else np.asarray(x, dtype=np.complex128)
    g = grad_h(ctx, x)
    scale = float(np.abs(g).max()) or 1.0
    indices = np.arange(ctx.B)
    if max_indices is not None and max_indices < ctx.B:
        rng = rng or np.random.default_rng(0)
        indices = np.sort(rng.choice(ctx.B, size=max_indices, replace=False))
    gaps = []
    for i in indices:
        for j in bands.band(i):
            if j != i and x[j] == x[i]:
                gaps.append(abs(g[i] - g[j]) / scale)
    gaps = np.asarray(gaps)
    if gaps.size == 0:
        return {"pairs": 0}
    return {
        "pairs": int(gaps.size),
        "median": float(np.median(gaps)),
        "mean": float(gaps.mean()),
        "p90": float(np.quantile(gaps, 0.9)),
        "max": float(gaps.max()),
    }
