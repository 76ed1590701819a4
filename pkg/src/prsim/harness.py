"""
Experiment orchestration: configs, seeded sweeps, CSV output and manifests.

Every experiment writes ``<kind>.csv`` plus ``manifest.json`` into its
output directory. The CSV depends only on the config, so replaying a
manifest with :func:`rerun` reproduces it byte for byte; wall time and
version live in the manifest only.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .complexity import NetShape, flops
from .contention import ContentionParams, run_pipeline, write_event_log
from .cooperative import (
    SCHEMES,
    NetworkScenario,
    select_prs,
    simulate_statistical,
    simulate_timeseries,
)
from .errors import ConfigurationError
from .fading import FadingParams, generate_trace, jakes_correlation, link_seed
from .predictor import ChannelPredictor, PredictorConfig, make_dataset, train_predictor

log = logging.getLogger(__name__)

KINDS = ("train-predict", "hyperparam-sweep", "outage-sweep", "capacity-sweep",
         "contention-demo", "complexity-report")
SWEEP_KINDS = ("hyperparam-sweep", "outage-sweep", "capacity-sweep")
OUTPUT_ENV = "PRSIM_OUTPUT_DIR"

RESULT_COLUMNS = ["scheme", "mode", "K", "R", "tau_ms", "snr_db", "trials", "outage_prob",
                  "capacity_bps_hz", "outage_stderr", "capacity_stderr", "rho"]


@dataclass
class ExperimentConfig:
    kind: str = "outage-sweep"
    relay_count: int = 8
    target_rate: float = 1.0
    doppler_hz: float = 100.0
    sample_rate_hz: float = 1000.0
    delays_ms: list[float] = field(default_factory=lambda: [3.0])
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    snr_db: list[float] = field(default_factory=lambda: [float(x) for x in range(0, 32, 2)])
    mode: str = "statistical"
    rho_p: float | None = 0.95
    trials: int = 1_000_000
    seed: int = 0
    # predictor
    hidden: list[list] = field(default_factory=lambda: [["lstm", 25], ["lstm", 25]])
    horizon_steps: int = 2
    trace_length: int = 1_000_000
    epochs: int = 10
    batch_size: int = 256
    lr: float = 1e-2
    stride: int = 4
    seeds: int = 5
    models: list[str] = field(default_factory=lambda: ["LSTM-1", "LSTM-2", "LSTM-3",
                                                      "LSTM-4", "RNN-2", "GRU-2"])
    neurons: list[int] = field(default_factory=lambda: [20, 40, 60, 80, 100])
    # contention
    frames: int = 10_000
    base_time_us: float = 100.0
    guard_us: float = 0.005
    # complexity
    prediction_rate_hz: float = 1000.0
    capacities_gflops: list[float] = field(default_factory=lambda: [179.0, 2.7])
    workers: int = 1
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if not self.sample_rate_hz > 2 * self.doppler_hz:
            raise ConfigurationError("sample_rate_hz must exceed twice the Doppler frequency")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ConfigurationError("SNR grid must be strictly increasing")
        if self.kind in SWEEP_KINDS and self.kind != "hyperparam-sweep" and self.trials < 1000:
            raise ConfigurationError("sweeps need at least 1000 trials per point")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}")
        if self.mode not in ("statistical", "timeseries"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.mode == "timeseries" or self.kind == "contention-demo":
            for d in self.delays_ms:
                steps = d * 1e-3 * self.sample_rate_hz
                if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                    raise ConfigurationError(
                        f"delay {d} ms is not a whole number of samples at {self.sample_rate_hz} Hz")
        if self.rho_p is not None and not 0 <= self.rho_p <= 1:
            raise ConfigurationError("rho_p must lie in [0, 1]")
        if self.relay_count < 1 or self.target_rate <= 0:
            raise ConfigurationError("relay_count must be >= 1 and target_rate > 0")

    def predictor_config(self, horizon: int | None = None, hidden=None) -> PredictorConfig:
        return PredictorConfig(hidden_layers=tuple(tuple(h) for h in (hidden or self.hidden)),
                               horizon_steps=horizon or self.horizon_steps,
                               epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                               stride=self.stride)

    def delay_steps(self, delay_ms: float) -> int:
        return int(round(delay_ms * 1e-3 * self.sample_rate_hz))


def point_seed(master: int, *index: int) -> int:
    """Stable per-point seed from the master seed and a grid index."""
    return int(np.random.SeedSequence([int(master), *map(int, index)]).generate_state(1)[0])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _trace(cfg: ExperimentConfig, seed, length: int | None = None):
    params = FadingParams(cfg.doppler_hz, cfg.sample_rate_hz, 1.0, length or cfg.trace_length)
    return generate_trace(params, seed)


# -- individual experiments --------------------------------------------------

def _train_predict(cfg: ExperimentConfig, out: Path):
    trace = _trace(cfg, link_seed(cfg.seed, 0))
    pcfg = cfg.predictor_config()
    predictor, data = train_predictor(trace, pcfg, cfg.seed)
    rep = predictor.evaluate(data)
    predictor.save(out / "predictor.npz")
    (out / "report.json").write_text(rep.to_json())
    row = {"hidden": ";".join(f"{k}:{n}" for k, n in pcfg.hidden_layers),
           "horizon": pcfg.horizon_steps, "seed": cfg.seed, "epochs": pcfg.epochs,
           "train_windows": len(data.train_starts[::pcfg.stride]),
           "test_samples": rep.samples, "mse": rep.mse, "correlation": rep.correlation}
    return list(row), [row]


def hyper_cell(cfg: ExperimentConfig, model: str, neurons: int, seed_index: int):
    """Test MSE and correlation for one (model, neurons, seed) cell."""
    pcfg = PredictorConfig.named(model, neurons, horizon_steps=cfg.horizon_steps,
                                 epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                                 stride=cfg.stride)
    seed = cfg.seed + seed_index
    trace = _trace(cfg, link_seed(seed, 0))
    predictor, data = train_predictor(trace, pcfg, seed)
    rep = predictor.evaluate(data)
    return rep.mse, rep.correlation


def _hyperparam_sweep(cfg: ExperimentConfig, out: Path):
    rows = []
    for model in cfg.models:
        for neurons in cfg.neurons:
            depth = int(model.partition("-")[2] or 1)
            if neurons // depth < 1:
                continue
            cells = [hyper_cell(cfg, model, neurons, i) for i in range(cfg.seeds)]
            mses = [c[0] for c in cells]
            rhos = [c[1] for c in cells]
            rows.append({"model": model, "total_neurons": neurons, "layers": depth,
                         "per_layer": neurons // depth, "seeds": cfg.seeds,
                         "median_mse": statistics.median(mses),
                         "median_correlation": statistics.median(rhos),
                         "mse_per_seed": ";".join(repr(m) for m in mses)})
            log.info("%s %d: median mse %.5f", model, neurons, rows[-1]["median_mse"])
    cols = ["model", "total_neurons", "layers", "per_layer", "seeds", "median_mse",
            "median_correlation", "mse_per_seed"]
    return cols, rows


def _statistical_point(args):
    cfg, scenario, trials, seed, schemes, rho_p = args
    return simulate_statistical(scenario, trials, seed, schemes, rho_p)


def _result_rows(cfg, results, delay_ms, snr_db):
    rows = []
    for s in cfg.schemes:
        r = results[s]
        rows.append({"scheme": s, "mode": r.mode, "K": cfg.relay_count, "R": cfg.target_rate,
                     "tau_ms": float(delay_ms), "snr_db": float(snr_db), "trials": r.trials,
                     "outage_prob": r.outage_prob, "capacity_bps_hz": r.capacity,
                     "outage_stderr": r.outage_stderr, "capacity_stderr": r.capacity_stderr,
                     "rho": r.rho})
    return rows


def _link_traces(cfg: ExperimentConfig, length: int):
    K = cfg.relay_count
    sr = np.stack([_trace(cfg, link_seed(cfg.seed, 100 + k), length).samples for k in range(K)])
    rd = np.stack([_trace(cfg, link_seed(cfg.seed, 200 + k), length).samples
                   for k in range(K)])
    return sr, rd


def _snr_sweep(cfg: ExperimentConfig, out: Path):
    schemes = tuple(cfg.schemes)
    rows = []
    if cfg.mode == "statistical":
        jobs = []
        for i, d in enumerate(cfg.delays_ms):
            for j, snr in enumerate(cfg.snr_db):
                sc = NetworkScenario(cfg.relay_count, cfg.target_rate, snr, 0.5, cfg.doppler_hz,
                                     d * 1e-3)
                jobs.append((d, snr, (cfg, sc, cfg.trials, point_seed(cfg.seed, i, j), schemes,
                                      cfg.rho_p)))
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                results = list(pool.map(_statistical_point, [j[2] for j in jobs]))
        else:
            results = [_statistical_point(j[2]) for j in jobs]
        for (d, snr, _), res in zip(jobs, results):
            rows.extend(_result_rows(cfg, res, d, snr))
    else:
        length = cfg.trials + 64
        sr, rd = _link_traces(cfg, length)
        for d in cfg.delays_ms:
            steps = cfg.delay_steps(d)
            predicted = None
            if "prs" in schemes:
                trace = _trace(cfg, link_seed(cfg.seed, 0))
                predictor, _ = train_predictor(trace, cfg.predictor_config(horizon=steps), cfg.seed)
                predicted = predictor.predict_series(np.abs(rd))
            for snr in cfg.snr_db:
                sc = NetworkScenario(cfg.relay_count, cfg.target_rate, snr, 0.5, cfg.doppler_hz,
                                     d * 1e-3)
                res = simulate_timeseries(sc, sr, rd, steps, predicted, schemes)
                rows.extend(_result_rows(cfg, res, d, snr))
    return RESULT_COLUMNS, rows


def _contention_demo(cfg: ExperimentConfig, out: Path):
    steps = cfg.delay_steps(cfg.delays_ms[0])
    length = (cfg.frames + 2) * steps + 64
    K = cfg.relay_count
    rd = np.stack([_trace(cfg, link_seed(cfg.seed, 200 + k), length).samples for k in range(K)])
    rng = np.random.default_rng(link_seed(cfg.seed, 300))
    sc = NetworkScenario(K, cfg.target_rate, cfg.snr_db[-1], 0.5, cfg.doppler_hz,
                         cfg.delays_ms[0] * 1e-3)
    sr = sc.sr_mean_snr * rng.exponential(1.0, size=(cfg.frames, K))
    trace = _trace(cfg, link_seed(cfg.seed, 0))
    predictor, _ = train_predictor(trace, cfg.predictor_config(horizon=steps), cfg.seed)
    window = predictor.window
    schedules = run_pipeline(rd, sr, cfg.target_rate, predictor.predict_windows, cfg.frames,
                             steps, window, ContentionParams(cfg.base_time_us, cfg.guard_us))
    with open(out / "events.log", "w") as fh:
        write_event_log(schedules, fh)
    rows = []
    for s in schedules:
        prs = select_prs(s.decoding_subset, s.buffered ** 2)
        rows.append({"frame": s.frame, "sample": s.sample, "source": s.source,
                     "ds": ";".join(map(str, s.decoding_subset)),
                     "winner": "" if s.winner is None else s.winner,
                     "collision": int(s.result.collision),
                     "select_prs": "" if prs is None else prs})
    return ["frame", "sample", "source", "ds", "winner", "collision", "select_prs"], rows


def _complexity_report(cfg: ExperimentConfig, out: Path):
    rows = []
    sizes = [n for _, n in cfg.hidden]
    for kind in ("rnn", "gru", "lstm"):
        shape = NetShape.uniform(kind, 1, sizes, 1)
        for cap in cfg.capacities_gflops:
            rep = flops(shape, cfg.prediction_rate_hz, cap * 1e9)
            rows.append({"kind": kind, "hidden": ";".join(map(str, sizes)),
                         "ops_per_prediction": rep.ops_per_prediction,
                         "prediction_rate_hz": rep.prediction_rate_hz,
                         "mflops": rep.flops / 1e6, "capacity_gflops": cap,
                         "utilization_percent": 100 * rep.utilization})
    cols = ["kind", "hidden", "ops_per_prediction", "prediction_rate_hz", "mflops",
            "capacity_gflops", "utilization_percent"]
    return cols, rows


_RUNNERS = {
    "train-predict": _train_predict,
    "hyperparam-sweep": _hyperparam_sweep,
    "outage-sweep": _snr_sweep,
    "capacity-sweep": _snr_sweep,
    "contention-demo": _contention_demo,
    "complexity-report": _complexity_report,
}


def output_dir(cfg: ExperimentConfig) -> Path:
    base = cfg.output or os.environ.get(OUTPUT_ENV) or "results"
    return Path(base)


def run_experiment(cfg: ExperimentConfig) -> dict[str, Path]:
    """Run one experiment; returns the paths of the files it wrote."""
    cfg.validate()
    out = output_dir(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    started = time.perf_counter()
    columns, rows = _RUNNERS[cfg.kind](cfg, out)
    csv_path = out / f"{cfg.kind}.csv"
    csv_path.write_text(csv_text(columns, rows))
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - started,
        "version": __version__,
        "csv": csv_path.name,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("wrote %s", csv_path)
    return {"csv": csv_path, "manifest": manifest_path}


def rerun(manifest_path, output: str | os.PathLike | None = None) -> dict[str, Path]:
    """Replay the config recorded in a manifest, optionally elsewhere."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = ExperimentConfig.from_dict(manifest["config"])
    if output is not None:
        cfg.output = str(output)
    return run_experiment(cfg)


# -- canned figure reproductions ---------------------------------------------

# values read from the published figures/text, used by the expectation sidecar
FIGURE_EXPECTATIONS = {
    "3a": {"best_model": "LSTM-2", "ordering": "LSTM-2 < LSTM-1; GRU-2 ~ LSTM-2 < RNN-2"},
    "3b": {"rho_outdated": {"2.0": 0.6425, "3.0": 0.2906}, "ors_diversity": 1,
           "ostc_diversity": 2, "prs_gain_over_ostc_db_at_1e-3": 8.0},
    "3c": {"snr_db": 20.0, "capacity_bps_hz": {"ors": 2.6, "ostc": 2.75, "prs": 3.5}},
}


def figure_config(tag: str, output: str | None = None, **overrides) -> ExperimentConfig:
    """Desk-scale configs for each panel of the results figure."""
    if tag == "3a":
        cfg = ExperimentConfig(kind="hyperparam-sweep", horizon_steps=2, seeds=3,
                               trace_length=250_000, models=["LSTM-1", "LSTM-2", "LSTM-3",
                                                             "LSTM-4", "RNN-2", "GRU-2"],
                               neurons=[20, 40, 60, 80, 100])
    elif tag == "3b":
        cfg = ExperimentConfig(kind="outage-sweep", delays_ms=[2.0, 3.0],
                               snr_db=[float(x) for x in range(0, 42, 2)], trials=1_000_000)
    elif tag == "3c":
        cfg = ExperimentConfig(kind="capacity-sweep", delays_ms=[3.0],
                               snr_db=[float(x) for x in range(0, 42, 2)], trials=200_000)
    else:
        raise ConfigurationError(f"unknown figure tag {tag!r}; expected 3a, 3b or 3c")
    cfg.output = output
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def reproduce_figure(tag: str, output: str | None = None, **overrides) -> dict[str, Path]:
    cfg = figure_config(tag, output, **overrides)
    paths = run_experiment(cfg)
    expected = dict(FIGURE_EXPECTATIONS[tag])
    if tag == "3b":
        expected["rho_outdated_computed"] = {
            str(d): jakes_correlation(cfg.doppler_hz, d * 1e-3) for d in cfg.delays_ms}
    side = paths["csv"].with_suffix(".expected.json")
    side.write_text(json.dumps({"figure": tag, **expected}, indent=2, sort_keys=True))
    paths["expected"] = side
    return paths


def outage_slope(snr_db, outage, floor: float = 1e-4, decades: float = 2.0) -> float:
    """Least-squares slope of log10(P_out) against log10(SNR) over the last
    ``decades`` of P_out above ``floor``."""
    snr_db = np.asarray(snr_db, dtype=float)
    p = np.asarray(outage, dtype=float)
    ok = p >= floor
    if ok.sum() < 2:
        raise ConfigurationError("fewer than two points above the outage floor")
    lp = np.log10(p[ok])
    x = snr_db[ok] / 10.0
    sel = lp <= lp.min() + decades
    if sel.sum() < 2:
        raise ConfigurationError("fewer than two points in the fitted range")
    return float(np.polyfit(x[sel], lp[sel], 1)[0])


def snr_at_outage(snr_db, outage, level: float) -> float:
    """SNR (dB) where a decreasing outage curve crosses ``level``, interpolated
    linearly in (dB, log10 P_out)."""
    snr_db = np.asarray(snr_db, dtype=float)
    lp = np.log10(np.maximum(np.asarray(outage, dtype=float), 1e-300))
    target = math.log10(level)
    for i in range(len(snr_db) - 1):
        if lp[i] >= target > lp[i + 1]:
            f = (lp[i] - target) / (lp[i] - lp[i + 1])
            return float(snr_db[i] + f * (snr_db[i + 1] - snr_db[i]))
    raise ConfigurationError(f"outage curve never crosses {level}")
