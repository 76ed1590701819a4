"""
Magnitude-only channel predictor built on :mod:`prsim.recurrent`.

A window of past magnitudes ``a[t-W+1..t]`` goes through a one-neuron tanh
input layer, the recurrent hidden layers and a one-neuron tanh output layer,
which gives the normalised ``a[t+D]``. Magnitudes are scaled so that the
99.9th percentile of the training split maps to 0.9, keeping targets inside
the range of the tanh output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError
from .fading import FadingTrace
from .recurrent import LayerSpec, RecurrentNet, TrainConfig, load_net, save_net, train

DEFAULT_WINDOW = 16


@dataclass(frozen=True)
class PredictorConfig:
    hidden_layers: tuple[tuple[str, int], ...] = (("lstm", 25), ("lstm", 25))
    horizon_steps: int = 2
    window: int = DEFAULT_WINDOW
    quantile: float = 0.999
    quantile_level: float = 0.9
    train_fraction: float = 0.8
    # training windows start every ``stride`` samples; each carries a target at every step
    stride: int = 4
    warmup_steps: int = 8
    epochs: int = 10
    batch_size: int = 256
    lr: float = 1e-2
    final_lr_fraction: float = 0.05
    dtype: str = "float32"

    def __post_init__(self):
        layers = tuple((str(k), int(n)) for k, n in self.hidden_layers)
        object.__setattr__(self, "hidden_layers", layers)
        if not layers:
            raise InvalidArgumentError("at least one hidden layer is required")
        for kind, n in layers:
            if kind not in ("rnn", "lstm", "gru"):
                raise InvalidArgumentError(f"unknown hidden layer kind {kind!r}")
            if n < 1:
                raise InvalidArgumentError("neuron counts must be >= 1")
        if self.horizon_steps < 1:
            raise InvalidArgumentError("horizon_steps must be >= 1")
        if self.window < 1:
            raise InvalidArgumentError("window must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise InvalidArgumentError("train_fraction must lie in (0, 1)")
        if not 0 <= self.warmup_steps < self.window:
            raise InvalidArgumentError("warmup_steps must be smaller than the window")
        if self.stride < 1:
            raise InvalidArgumentError("stride must be >= 1")

    @classmethod
    def named(cls, name: str, total_neurons: int, **kwargs) -> "PredictorConfig":
        """Config from a label like ``"LSTM-2"`` with neurons split evenly across layers."""
        kind, _, depth = name.partition("-")
        depth = int(depth or 1)
        per_layer = total_neurons // depth
        if per_layer < 1:
            raise InvalidArgumentError(f"{total_neurons} neurons cannot fill {depth} layers")
        return cls(hidden_layers=((kind.lower(), per_layer),) * depth, **kwargs)


@dataclass
class PredictionReport:
    mse: float
    correlation: float
    horizon_steps: int
    samples: int

    def to_json(self) -> str:
        return json.dumps({"mse": self.mse, "correlation": self.correlation,
                           "horizon": self.horizon_steps, "samples": self.samples})


def build_predictor(config: PredictorConfig, seed: int = 0) -> RecurrentNet:
    specs = [LayerSpec("dense", 1, 1, "tanh")]
    prev = 1
    for kind, n in config.hidden_layers:
        specs.append(LayerSpec(kind, prev, n))
        prev = n
    specs.append(LayerSpec("dense", prev, 1, "tanh"))
    return RecurrentNet(specs, seed=seed, dtype=config.dtype)


def normalization_scale(magnitudes, quantile: float = 0.999, level: float = 0.9) -> float:
    q = float(np.quantile(np.asarray(magnitudes, dtype=float), quantile))
    if not q > 0:
        # a dead channel; any positive scale keeps the arithmetic finite
        return 1.0
    return level / q


@dataclass
class Dataset:
    """Sliding windows over one normalised magnitude series.

    Window ``s`` covers ``series[s : s + window]`` and its target is
    ``series[s + window - 1 + horizon]``. Train windows (targets included)
    lie strictly before ``split``; test windows start at or after it.
    """

    series: np.ndarray
    scale: float
    window: int
    horizon: int
    split: int
    train_starts: np.ndarray
    test_starts: np.ndarray

    def inputs(self, starts) -> np.ndarray:
        idx = np.asarray(starts)[:, None] + np.arange(self.window)
        return self.series[idx]

    def targets(self, starts) -> np.ndarray:
        return self.series[np.asarray(starts) + self.window - 1 + self.horizon]

    def step_targets(self, starts) -> np.ndarray:
        """Target for every step of each window, ``series[s + j + horizon]``."""
        idx = np.asarray(starts)[:, None] + np.arange(self.window) + self.horizon
        return self.series[idx]

    @property
    def max_train_index(self) -> int:
        return int(self.train_starts[-1] + self.window - 1 + self.horizon) \
            if len(self.train_starts) else -1

    @property
    def min_test_index(self) -> int:
        return int(self.test_starts[0]) if len(self.test_starts) else len(self.series)


def make_dataset(trace: FadingTrace | np.ndarray, horizon: int, window: int = DEFAULT_WINDOW,
                 scale: float | None = None, train_fraction: float = 0.8,
                 quantile: float = 0.999, level: float = 0.9) -> Dataset:
    """Windows of normalised magnitudes with a chronological train/test split.

    ``trace`` may be a :class:`FadingTrace` or a magnitude array. When
    ``scale`` is None it is fitted on the training split only.
    """
    mags = trace.magnitude if isinstance(trace, FadingTrace) else np.abs(np.asarray(trace))
    n = len(mags)
    if horizon < 1 or window < 1:
        raise InvalidArgumentError("horizon and window must be >= 1")
    if n <= window + horizon:
        raise InvalidArgumentError(
            f"trace of {n} samples is too short for window {window} + horizon {horizon}")
    span = window - 1 + horizon
    split = int(round(train_fraction * n))
    train_starts = np.arange(0, max(0, split - span))
    test_starts = np.arange(split, n - span)
    if scale is None:
        scale = normalization_scale(mags[:split], quantile, level)
    series = mags * scale
    return Dataset(series, float(scale), window, horizon, split, train_starts, test_starts)


@dataclass
class ChannelPredictor:
    net: RecurrentNet
    scale: float
    window: int
    horizon: int
    config: PredictorConfig | None = None
    loss_history: list[float] = field(default_factory=list)

    def _check(self):
        if not self.net.is_finite():
            raise InvalidStateError("predictor parameters are not finite")

    def predict_windows(self, windows, batch: int = 8192) -> np.ndarray:
        """De-normalised predictions for an ``(M, window)`` array of raw magnitudes."""
        self._check()
        windows = np.asarray(windows, dtype=float)
        if windows.ndim != 2 or windows.shape[1] != self.window:
            raise InvalidArgumentError(f"windows must be (M, {self.window})")
        out = np.empty(len(windows))
        for k in range(0, len(windows), batch):
            x = (windows[k:k + batch] * self.scale).T[:, :, None]
            out[k:k + batch] = self.net.forward(x)[-1, :, 0]
        self.net.reset_state()
        return np.maximum(out / self.scale, 0.0)

    def predict(self, recent_magnitudes: Sequence[float]) -> float:
        """Predicted magnitude ``horizon`` steps after the last of ``recent_magnitudes``."""
        recent = np.asarray(recent_magnitudes, dtype=float)
        if recent.ndim != 1 or len(recent) < self.window:
            raise InvalidArgumentError(f"need at least {self.window} recent magnitudes")
        if not np.isfinite(recent).all():
            raise InvalidArgumentError("magnitudes must be finite")
        return float(self.predict_windows(recent[None, -self.window:])[0])

    def predict_series(self, magnitudes) -> np.ndarray:
        """``out[n]`` predicts ``magnitudes[n]`` from the window ending at
        ``n - horizon``; entries without a full window are NaN. Works on a
        1-D series or row-wise on a 2-D ``(K, N)`` array."""
        mags = np.asarray(magnitudes, dtype=float)
        if mags.ndim == 2:
            return np.stack([self.predict_series(row) for row in mags])
        out = np.full(len(mags), np.nan)
        first = self.window - 1 + self.horizon
        if len(mags) <= first:
            return out
        windows = np.lib.stride_tricks.sliding_window_view(mags, self.window)
        out[first:] = self.predict_windows(windows[:len(mags) - first])
        return out

    def evaluate(self, dataset: Dataset, starts=None) -> PredictionReport:
        starts = dataset.test_starts if starts is None else np.asarray(starts)
        if len(starts) == 0:
            raise InvalidArgumentError("test set is empty")
        pred = self.predict_windows(dataset.inputs(starts) / dataset.scale)
        actual = dataset.targets(starts) / dataset.scale
        return report(pred, actual, self.horizon)

    def save(self, path) -> None:
        path = Path(path)
        save_net(self.net, path)
        meta = {"scale": self.scale, "window": self.window, "horizon": self.horizon,
                "config": asdict(self.config) if self.config else None}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path) -> "ChannelPredictor":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        config = PredictorConfig(**meta["config"]) if meta.get("config") else None
        return cls(load_net(path), meta["scale"], meta["window"], meta["horizon"], config)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / denom, -1.0, 1.0))


def report(predicted, actual, horizon: int) -> PredictionReport:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if len(actual) == 0:
        raise InvalidArgumentError("test set is empty")
    mse = float(np.mean((actual - predicted) ** 2))
    return PredictionReport(mse, pearson(predicted, actual), horizon, len(actual))


def evaluate(predictor: ChannelPredictor, dataset: Dataset) -> PredictionReport:
    return predictor.evaluate(dataset)


def predict(predictor: ChannelPredictor, recent_magnitudes) -> float:
    return predictor.predict(recent_magnitudes)


def train_predictor(trace: FadingTrace | np.ndarray, config: PredictorConfig,
                    seed: int = 0) -> tuple[ChannelPredictor, Dataset]:
    """Fit a predictor on the training split of ``trace``."""
    data = make_dataset(trace, config.horizon_steps, config.window,
                        train_fraction=config.train_fraction,
                        quantile=config.quantile, level=config.quantile_level)
    starts = data.train_starts[::config.stride]
    if len(starts) == 0:
        raise InvalidArgumentError("training split holds no complete window")
    net = build_predictor(config, seed)
    series = data.series.astype(net.dtype)

    def batch(idx):
        s = starts[idx]
        cols = s[None, :] + np.arange(config.window)[:, None]
        return series[cols][..., None], series[cols + config.horizon_steps][..., None]

    tc = TrainConfig(batch_size=config.batch_size, epochs=config.epochs, lr=config.lr,
                     bptt_window=config.window, warmup_steps=config.warmup_steps, seed=seed,
                     final_lr_fraction=config.final_lr_fraction)
    result = train(net, starts, None, tc, batch_fn=batch)
    return ChannelPredictor(net, data.scale, config.window, config.horizon_steps, config,
                            result.epoch_losses), data
