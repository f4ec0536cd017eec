import math

import numpy as np
import pytest

from test_net import random_window
from hstgcnn.errors import EmptyDataset, FormatError, InvalidConfig, NumericError
from hstgcnn.net import ModelConfig
from hstgcnn.skeleton import HIGH, LOW
from hstgcnn.train import (Checkpoint, TrainConfig, cosine_lr, load_checkpoint, mse_loss, save_checkpoint, sgd_step,
                           train, train_level)


def test_cosine_schedule():
    assert cosine_lr(0, 10, 0.1) == pytest.approx(0.1)
    assert cosine_lr(5, 10, 0.1) == pytest.approx(0.05)
    assert cosine_lr(10, 10, 0.1, 0.01) == pytest.approx(0.01)
    lrs = [cosine_lr(e, 20, 1.0) for e in range(21)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 0.1)


def test_momentum_step_by_hand():
    p, g, v = {"w": np.array([1.0, -2.0])}, {"w": np.array([0.5, 0.5])}, {"w": np.array([0.2, -0.4])}
    new_p, new_v = sgd_step(p, g, v, lr=0.1, beta=0.9)
    assert np.allclose(new_v["w"], [0.9 * 0.2 + 0.5, 0.9 * -0.4 + 0.5])
    assert np.allclose(new_p["w"], [1.0 - 0.1 * 0.68, -2.0 - 0.1 * 0.14])
    assert p["w"].tolist() == [1.0, -2.0]


def test_mse_loss():
    assert mse_loss([1.0, 3.0], [0.0, 0.0]) == 5.0


@pytest.mark.parametrize("kwargs", [dict(batch_size=0), dict(momentum=1.0), dict(lr_max=0.0), dict(epochs=0),
                                    dict(level="mid")])
def test_config_validation(kwargs):
    with pytest.raises(InvalidConfig):
        TrainConfig(**kwargs)


def test_empty_training_set():
    with pytest.raises(EmptyDataset):
        train_level([], TrainConfig(), ModelConfig(HIGH))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(rng):
    wins = [random_window(rng, HIGH, 5) for _ in range(8)]
    for w in wins:
        w.target[:] *= 1e3
    with pytest.raises(NumericError):
        train_level(wins, TrainConfig(lr_max=50.0, epochs=40, batch_size=2), ModelConfig(HIGH))


def test_single_window_overfit(rng):
    w = random_window(rng, HIGH, 4)
    _, hist = train_level([w], TrainConfig(epochs=400, batch_size=1, lr_max=0.05), ModelConfig(HIGH))
    assert hist[-1] < 1e-4 < hist[0]


def test_training_is_deterministic(rng):
    wins = [random_window(rng, LOW) for _ in range(10)]
    cfg = TrainConfig(epochs=3, batch_size=4)
    a, ha = train_level(wins, cfg, ModelConfig(LOW))
    b, hb = train_level(wins, cfg, ModelConfig(LOW))
    assert ha == hb and all(np.array_equal(a[k], b[k]) for k in a.tensors)


def test_checkpoint_round_trip(rng, tmp_path):
    wins = {HIGH: [random_window(rng, HIGH) for _ in range(4)], LOW: [random_window(rng, LOW) for _ in range(4)]}
    ck = train(wins, TrainConfig(epochs=2, batch_size=2), {HIGH: ModelConfig(HIGH, node_kernel=1)}, group="3")
    save_checkpoint(ck, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert isinstance(back, Checkpoint)
    assert back.group == "3" and back.train_config == ck.train_config
    assert back.final_loss == ck.final_loss
    for level in (HIGH, LOW):
        assert back.params[level].config == ck.params[level].config
        for k, v in ck.params[level].tensors.items():
            assert np.array_equal(back.params[level][k], v)
    save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_format_errors(rng, tmp_path):
    ck = train({HIGH: [random_window(rng, HIGH)]}, TrainConfig(epochs=1, level=HIGH))
    path = tmp_path / "c.ckpt"
    save_checkpoint(ck, path)
    text = path.read_text()
    cases = {
        "header": text.replace("HSTGCNN-CKPT v1", "OTHER v9"),
        "truncated": text.rsplit("end", 1)[0],
        "values": text.replace("tensor high gcn.weight 2 2\n", "tensor high gcn.weight 2 3\n"),
        "missing key": "\n".join(l for l in text.splitlines() if not l.startswith("train.epochs")) + "\n",
        "malformed": text.replace("group: 0", "group 0"),
        "": "",
    }
    for name, body in cases.items():
        bad = tmp_path / f"bad-{name or 'empty'}.ckpt"
        bad.write_text(body)
        with pytest.raises(FormatError):
            load_checkpoint(bad)
    assert math.isfinite(load_checkpoint(path).final_loss[HIGH])


def test_momentum_examples():
    p, g0, v0 = {"w": np.array([1.5])}, {"w": np.array([0.0])}, {"w": np.array([0.0])}
    assert sgd_step(p, g0, v0, 0.3, 0.9)[0]["w"] == 1.5
    g = {"w": np.array([2.0])}
    assert sgd_step(p, g, v0, 0.1, 0.0)[0]["w"] == pytest.approx(1.5 - 0.2)
    _, v1 = sgd_step(p, g, v0, 0.1, 0.9)
    _, v2 = sgd_step(p, g, v1, 0.1, 0.9)
    assert v2["w"] == pytest.approx(1.9 * 2.0)
    assert cosine_lr(0, 30, 0.5) == 0.5


def test_vanishing_rate_leaves_params(rng):
    wins = [random_window(rng, HIGH) for _ in range(4)]
    from hstgcnn.net import init_params
    start = init_params(ModelConfig(HIGH), 0)
    out, _ = train_level(wins, TrainConfig(epochs=5, lr_max=1e-300, batch_size=2), ModelConfig(HIGH), start)
    assert all(np.array_equal(out[k], start[k]) for k in start.tensors)


def test_overfit_loss_is_nearly_monotone(rng):
    w = random_window(rng, LOW)
    _, hist = train_level([w], TrainConfig(epochs=300, batch_size=1, lr_max=0.05), ModelConfig(LOW))
    assert all(b <= a * 1.05 for a, b in zip(hist[5:], hist[6:]))


def test_constant_velocity_tracks_converge():
    from builders import clip_of, walking_track
    from hstgcnn.skeleton import sliding_windows
    clips = [clip_of([walking_track(f"p{i}", range(30), start=(40 * i, 10 * v), velocity=(1 + 0.2 * v, 0.5 * i))
                      for i in range(3)], 30, f"v{v}") for v in range(4)]
    wins = [w for c in clips for w in sliding_windows(c, HIGH)]
    _, hist = train_level(wins, TrainConfig(epochs=20, batch_size=16), ModelConfig(HIGH))
    assert hist[-1] < 0.1 * hist[0]


def test_checkpoint_preserves_predictions(rng, tmp_path):
    from hstgcnn.net import predict
    wins = [random_window(rng, HIGH) for _ in range(3)]
    ck = train({HIGH: wins}, TrainConfig(epochs=2, level=HIGH))
    save_checkpoint(ck, tmp_path / "p.ckpt")
    back = load_checkpoint(tmp_path / "p.ckpt")
    for a, b in zip(predict(ck.params[HIGH], wins), predict(back.params[HIGH], wins)):
        assert np.array_equal(a, b)
