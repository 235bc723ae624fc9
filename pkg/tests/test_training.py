import json

import numpy as np
import pytest

from ifasnet import tensor as T
from ifasnet.model import Model, micro_config
from ifasnet.optim import Adam
from ifasnet.tensor import Tensor
from ifasnet.training import (DivergenceError, EvalReport, TrainConfig, Utterance, evaluate, fit,
                              load_model, load_utterances, read_sidecar, train_step, utterance_loss)


class ConstantStub:
    """Parameter-free separator whose loss never changes."""

    def __init__(self, value=0.1):
        self.value = value

    def parameters(self):
        return []

    def __call__(self, mixture, ref=0):
        x = np.asarray(mixture)
        return Tensor(np.stack([x[ref] * 0.5 + self.value, x[ref] * 0.5 - self.value]))


def utterances(n, M=2, length=48, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = rng.standard_normal((2, M, length))
        out.append(Utterance(f"u{i}", img.sum(0), img, overlap_ratio=i / max(n, 1)))
    return out


def test_early_stop_after_ten_stale_epochs(tmp_path):
    data = utterances(2)
    res = fit(ConstantStub(), data, TrainConfig(epochs=50), val_data=data, out_dir=tmp_path)
    assert len(res.history) == 11 and res.stopped_early and res.best_epoch == 0
    log = [json.loads(x) for x in (tmp_path / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == list(range(11))


def test_lr_schedule_in_log():
    res = fit(ConstantStub(), utterances(1), TrainConfig(epochs=5, a2t_weight=0.0))
    assert [r["lr"] for r in res.history] == pytest.approx([1e-3, 1e-3, 9.8e-4, 9.8e-4, 1e-3 * 0.98 ** 2])


def test_divergence_is_reported():
    with pytest.raises(DivergenceError):
        fit(ConstantStub(np.nan), utterances(1), TrainConfig(epochs=2))


def test_fit_writes_checkpoints_and_improves(tmp_path):
    model = Model(micro_config("ifasnet-nocontext", seed=1))
    data = utterances(3, seed=2)
    res = fit(model, data, TrainConfig(epochs=4, lr=5e-3), out_dir=tmp_path)
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]
    assert (tmp_path / "best.ifsn").exists() and (tmp_path / "last.ifsn").exists()
    assert read_sidecar(tmp_path / "best.ifsn")["mic_range"] == [2, 2]
    x = data[0].mixture
    assert np.array_equal(load_model(tmp_path / "last.ifsn")(x).data, model(x).data)


def test_a2t_term_adds_to_loss():
    model = Model(micro_config("ifasnet", seed=0))
    u = utterances(1)[0]
    with T.no_grad():
        base, _ = utterance_loss(model, u, 0)
        both, _ = utterance_loss(model, u, 0, a2t_weight=1.0, a2t_source=1)
        from ifasnet.losses import a2t_loss
        extra = a2t_loss(model, u.images[1], u.images[1, 0], 0)
    assert np.isclose(both.item(), base.item() + extra.item())


def test_train_step_gradient_accumulation_matches_mean():
    cfg = TrainConfig(batch_size=2, a2t_weight=0.0, max_grad_norm=1e9)
    data = utterances(2, seed=5)
    grads = []
    for batch in ([data[0]], [data[1]], data):
        model = Model(micro_config("fasnet-miso", seed=0))
        opt = Adam(model.parameters(), lr=0.0)
        train_step(model, opt, batch, cfg)
        grads.append(np.concatenate([p.grad.ravel() for p in opt.params]))
    np.testing.assert_allclose(grads[2], (grads[0] + grads[1]) / 2, atol=1e-12)


def test_evaluate_identity_is_zero_and_report_round_trips(small_dataset):
    rep = evaluate(lambda mix, ref: np.stack([mix[ref], mix[ref]]), small_dataset)
    assert rep.overall == 0.0 and all(r["si_sdri"] == 0.0 for r in rep.records)
    assert set(rep.grid) == {"<25%", "25-50%", "50-75%", ">75%"}
    assert sum(sum(c.values()) for c in rep.counts.values()) == 4
    assert EvalReport.from_json(rep.to_json()) == rep


def test_load_utterances(small_dataset):
    data = load_utterances(small_dataset)
    assert len(data) == 4 and data[1].images.shape == (2, 3, 8000)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=1.5)
    with pytest.raises(ValueError):
        TrainConfig(a2t_weight=-1)
