import math

import numpy as np
import pytest

from salfer.dataset import make_split
from salfer.nn import ClassifierModel
from salfer.train import (EpochRecord, TrainConfig, TrainingError, fit, lr_schedule, read_records, records_csv,
                          train, write_records)


def test_lr_schedule():
    c = TrainConfig()
    assert (c.base_lr, c.epochs, c.lr_decay) == (0.01, 100, "linear")
    assert lr_schedule(c, 0) == 0.01
    assert lr_schedule(c, 50) == pytest.approx(0.005, abs=1e-12)
    assert lr_schedule(c, 99) == pytest.approx(0.0001, abs=1e-12)
    lrs = [lr_schedule(c, e) for e in range(100)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    assert np.allclose(np.diff(lrs), -0.0001, atol=1e-15)
    assert lr_schedule(TrainConfig(lr_decay="none"), 70) == 0.01
    with pytest.raises(ValueError):
        lr_schedule(c, 100)
    with pytest.raises(ValueError):
        lr_schedule(c, -1)


@pytest.mark.parametrize("kw", [{"base_lr": 0}, {"epochs": 0}, {"batch_size": 0}, {"lr_decay": "cosine"},
                                {"input_variant": "rgb"}, {"momentum": 1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_text_round_trip(tmp_path):
    c = TrainConfig(epochs=7, base_lr=0.02, freeze_backbone=True, backbone_weights="/w.pth", seed=5)
    (tmp_path / "c.txt").write_text(c.to_text())
    assert TrainConfig.load(tmp_path / "c.txt") == c
    assert TrainConfig.from_text("epochs = 3  # short\n\n", seed=9) == TrainConfig(epochs=3, seed=9)
    with pytest.raises(ValueError, match="line 1"):
        TrainConfig.from_text("learning_rate = 0.1\n")


def test_one_step_minimal_loop(faces14):
    x, y = faces14
    m = ClassifierModel(seed=0)
    before = {k: v.copy() for k, v in m.params.items()}
    res = fit(m, x[:5], y[:5], config=TrainConfig(epochs=1, batch_size=32))
    assert res.steps == 1 and len(res.records) == 1
    assert all(not np.array_equal(before[k], v) for k, v in m.params.items())
    assert math.isnan(res.records[0].val_acc)
    assert res.best_model is m and res.best_epoch == 0


def test_step_count_and_best_checkpoint(faces14):
    x, y = faces14
    m = ClassifierModel(seed=1)
    res = fit(m, x[:10], y[:10], x[10:], y[10:], TrainConfig(epochs=3, batch_size=4))
    assert res.steps == 3 * math.ceil(10 / 4)
    assert [r.epoch for r in res.records] == [0, 1, 2]
    best = max(range(3), key=lambda e: (res.records[e].val_acc, -e))
    assert res.best_epoch == best
    assert res.best_model is not m


def test_training_determinism(faces14):
    x, y = faces14
    runs = []
    for _ in range(2):
        m = ClassifierModel(seed=4)
        res = fit(m, x[:8], y[:8], x[8:], y[8:], TrainConfig(epochs=2, batch_size=3, seed=4))
        runs.append((records_csv(res.records, include_time=False), m.params))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_descends_on_fixed_batch(faces14, seed):
    x, y = faces14
    m = ClassifierModel(seed=seed, dropout_p=0.0)
    cfg = TrainConfig(epochs=5, batch_size=len(x), seed=seed)
    res = fit(m, x, y, config=cfg)
    losses = [r.train_loss for r in res.records]
    assert losses[-1] < losses[0]


def test_errors(faces14):
    x, y = faces14
    with pytest.raises(TrainingError, match="empty"):
        fit(ClassifierModel(seed=0), x[:0], y[:0])
    m = ClassifierModel(seed=0)
    m.head["head.weight"][:] = np.inf
    with pytest.raises(TrainingError, match=r"epoch 0, batch 0, lr 0\.01"):
        fit(m, x[:2], y[:2], config=TrainConfig(epochs=1))


def test_input_mean_set_from_training_data(faces14):
    x, y = faces14
    m = ClassifierModel(seed=0)
    fit(m, x[:3], y[:3], config=TrainConfig(epochs=1))
    assert m.input_mean == pytest.approx(x[:3].mean() / 255)


def test_records_csv_round_trip(tmp_path):
    recs = [EpochRecord(0, 0.01, 1.5, float("nan"), float("nan"), 0.25), EpochRecord(1, 0.005, 1.25, 1.0, 0.5, 0.5)]
    text = records_csv(recs)
    assert text.splitlines()[0] == "epoch,lr,train_loss,val_loss,val_acc,seconds"
    assert text.splitlines()[1] == "0,0.01,1.5,,,0.25"
    write_records(recs, tmp_path / "e.csv")
    back = read_records(tmp_path / "e.csv")
    assert back[1] == recs[1] and math.isnan(back[0].val_loss)
    assert "seconds" not in records_csv(recs, include_time=False)


def test_train_from_manifest(tmp_path, cfee_small):
    from salfer.dataset import scan_dataset
    from salfer.pipeline import preprocess_samples

    samples = scan_dataset(cfee_small, "cfee").samples[:14]
    m = make_split(samples, (0.5, 0.5, 0.0), "by-image", 0)
    preprocess_samples(m.all_samples(), tmp_path / "faces")
    res = train(ClassifierModel(seed=0), m, TrainConfig(epochs=1), tmp_path)
    assert len(res.records) == 1 and not math.isnan(res.records[0].val_acc)
    with pytest.raises(TrainingError, match="no preprocessed"):
        train(ClassifierModel(seed=0), m, TrainConfig(epochs=1, input_variant="saliency_product"), tmp_path)
