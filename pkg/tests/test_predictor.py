import json

import numpy as np
import pytest
from scipy import stats

from prsim.errors import InvalidArgumentError, InvalidStateError
from prsim.fading import FadingParams, generate_trace
from prsim.predictor import (
    ChannelPredictor,
    PredictorConfig,
    build_predictor,
    evaluate,
    make_dataset,
    normalization_scale,
    pearson,
    predict,
    report,
    train_predictor,
)
from prsim.recurrent import LayerSpec


@pytest.fixture(scope="module")
def short_trace():
    return generate_trace(FadingParams(100.0, 1000.0, 1.0, 20_000), seed=3)


@pytest.fixture(scope="module")
def small_model(short_trace):
    cfg = PredictorConfig(hidden_layers=(("lstm", 16),), horizon_steps=2, epochs=10,
                          batch_size=64, stride=2, dtype="float64")
    return train_predictor(short_trace, cfg, seed=0)


class TestConfig:
    def test_named(self):
        cfg = PredictorConfig.named("LSTM-2", 50)
        assert cfg.hidden_layers == (("lstm", 25), ("lstm", 25))
        assert PredictorConfig.named("GRU-1", 40).hidden_layers == (("gru", 40),)
        with pytest.raises(InvalidArgumentError):
            PredictorConfig.named("RNN-4", 3)

    @pytest.mark.parametrize("kwargs", [
        dict(hidden_layers=()), dict(hidden_layers=(("cnn", 3),)),
        dict(hidden_layers=(("lstm", 0),)), dict(horizon_steps=0),
        dict(train_fraction=1.0), dict(warmup_steps=16), dict(stride=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            PredictorConfig(**kwargs)


class TestBuild:
    def test_lstm2_shapes(self):
        net = build_predictor(PredictorConfig())
        specs = net.specs
        assert specs[0] == LayerSpec("dense", 1, 1, "tanh")
        assert [(s.kind, s.output_size) for s in specs[1:-1]] == [("lstm", 25), ("lstm", 25)]
        assert specs[-1] == LayerSpec("dense", 25, 1, "tanh")

    def test_rnn1_range(self, rng):
        net = build_predictor(PredictorConfig(hidden_layers=(("rnn", 1),), dtype="float64"))
        y = net.forward(rng.normal(size=(30, 1)) * 5)
        assert np.all(np.abs(y) < 1)

    def test_gru_is_three_rnn(self):
        def hidden_params(kind):
            net = build_predictor(PredictorConfig(hidden_layers=((kind, 30), (kind, 30))))
            return sum(s.param_count for s in net.specs[1:-1])
        assert hidden_params("gru") == 3 * hidden_params("rnn")


class TestDataset:
    def test_constant_trace(self):
        tr = generate_trace(FadingParams(0.0, 1000.0, 1.0, 200), seed=1)
        ds = make_dataset(tr, 2, window=4)
        x = ds.inputs(ds.train_starts)
        assert np.allclose(x, ds.targets(ds.train_starts)[:, None])

    def test_index_arithmetic(self):
        a = np.arange(10, dtype=float) + 1.0
        ds = make_dataset(a, 2, window=3, scale=1.0, train_fraction=0.5)
        assert ds.inputs([0]).tolist() == [[1.0, 2.0, 3.0]]
        assert ds.targets([0]).tolist() == [5.0]
        last = ds.test_starts[-1]
        assert last + 3 - 1 + 2 == 9

    def test_no_leakage(self, short_trace):
        ds = make_dataset(short_trace, 3)
        assert ds.max_train_index < ds.min_test_index
        assert ds.max_train_index < ds.split <= ds.min_test_index

    def test_scale_from_train(self, short_trace):
        ds = make_dataset(short_trace, 2)
        mags = short_trace.magnitude[:ds.split]
        assert ds.scale * np.quantile(mags, 0.999) == pytest.approx(0.9)
        assert np.all(ds.series[:ds.split] < 1.0 + 1e-9) or np.quantile(ds.series[:ds.split], 0.999) <= 0.9 + 1e-12

    def test_rayleigh_quantile(self):
        tr = generate_trace(FadingParams(100.0, 1000.0, 1.0, 10**6), seed=8)
        q = np.quantile(tr.magnitude, 0.999)
        assert q == pytest.approx(stats.rayleigh(scale=np.sqrt(0.5)).ppf(0.999), rel=0.03)
        assert normalization_scale(tr.magnitude) == pytest.approx(0.9 / q)

    def test_dead_channel_scale(self):
        assert normalization_scale(np.zeros(10)) == 1.0

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            make_dataset(np.ones(18), 2, window=16)


class TestMetrics:
    def test_perfect(self):
        a = np.abs(np.random.default_rng(0).normal(size=1000))
        rep = report(a, a, 2)
        assert rep.mse == 0.0 and rep.correlation == pytest.approx(1.0)

    def test_shuffled(self):
        rng = np.random.default_rng(1)
        a = rng.rayleigh(size=10**5)
        assert abs(pearson(rng.permutation(a), a)) < 0.05

    def test_constant_prediction(self):
        assert pearson(np.ones(10), np.arange(10)) == 0.0

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            report([], [], 1)

    def test_json(self):
        rep = report([1.0, 2.0], [1.0, 2.5], 3)
        data = json.loads(rep.to_json())
        assert set(data) == {"mse", "correlation", "horizon", "samples"}
        assert data["horizon"] == 3 and data["mse"] == pytest.approx(0.125)


class TestPredictor:
    def test_trains_and_evaluates(self, small_model):
        predictor, data = small_model
        rep = evaluate(predictor, data)
        assert rep.samples == len(data.test_starts)
        assert rep.mse >= 0 and -1 <= rep.correlation <= 1
        assert rep.correlation > 0.9
        assert predictor.loss_history[-1] < predictor.loss_history[0]

    def test_evaluate_idempotent(self, small_model):
        predictor, data = small_model
        a, b = predictor.evaluate(data), predictor.evaluate(data)
        assert a == b

    def test_predict_matches_windows(self, small_model, short_trace):
        predictor, _ = small_model
        mags = short_trace.magnitude
        single = predict(predictor, mags[100:116])
        batch = predictor.predict_windows(mags[None, 100:116])[0]
        assert single == pytest.approx(batch, abs=1e-12)
        assert single >= 0

    def test_predict_series_alignment(self, small_model, short_trace):
        predictor, _ = small_model
        mags = short_trace.magnitude[:500]
        out = predictor.predict_series(mags)
        first = predictor.window - 1 + predictor.horizon
        assert np.all(np.isnan(out[:first])) and np.all(np.isfinite(out[first:]))
        n = 300
        assert out[n] == pytest.approx(predict(predictor, mags[:n - predictor.horizon + 1]), abs=1e-12)
        two = predictor.predict_series(np.stack([mags, mags]))
        assert np.array_equal(two[0], out, equal_nan=True)

    def test_zero_window_nonnegative(self, small_model):
        predictor, _ = small_model
        assert predictor.predict(np.zeros(16)) >= 0

    def test_bad_input(self, small_model):
        predictor, _ = small_model
        with pytest.raises(InvalidArgumentError):
            predictor.predict(np.ones(3))
        with pytest.raises(InvalidArgumentError):
            predictor.predict(np.full(16, np.nan))

    def test_nan_parameters(self, small_model):
        predictor, _ = small_model
        net = build_predictor(PredictorConfig(hidden_layers=(("rnn", 2),)))
        net.parameters()[0][...] = np.nan
        broken = ChannelPredictor(net, 1.0, 16, 2)
        with pytest.raises(InvalidStateError):
            broken.predict(np.ones(16))

    def test_save_load(self, small_model, tmp_path, short_trace):
        predictor, data = small_model
        predictor.save(tmp_path / "p.npz")
        back = ChannelPredictor.load(tmp_path / "p.npz")
        assert back.scale == predictor.scale and back.config == predictor.config
        w = short_trace.magnitude[None, :16]
        assert back.predict_windows(w)[0] == predictor.predict_windows(w)[0]

    def test_deterministic(self, short_trace):
        cfg = PredictorConfig(hidden_layers=(("gru", 4),), epochs=1, stride=8)
        a, _ = train_predictor(short_trace, cfg, seed=5)
        b, _ = train_predictor(short_trace, cfg, seed=5)
        assert a.loss_history == b.loss_history
        assert np.array_equal(a.net.get_flat(), b.net.get_flat())

    def test_constant_channel(self):
        tr = generate_trace(FadingParams(0.0, 1000.0, 1.0, 5000), seed=2)
        cfg = PredictorConfig(hidden_layers=(("lstm", 4),), epochs=5, stride=1, batch_size=64)
        predictor, _ = train_predictor(tr, cfg, seed=0)
        level = tr.magnitude[0]
        assert predictor.predict(tr.magnitude[:16]) == pytest.approx(level, rel=0.01)
