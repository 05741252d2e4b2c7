import numpy as np
import pytest

from handfer import imaging
from handfer.dataset import ExpressionLabel, ManifestEntry
from handfer.evaluation import confusion, macro_f1
from handfer.learner import (
    HAND,
    Corpus,
    ModelConfig,
    TrainConfig,
    format_history_csv,
    forward,
    freeze_prefix,
    init_model,
    load_corpus,
    predict_expression,
    predict_hand,
    predict_labels,
    softmax,
    train,
)


def blobs(n, size=8, seed=0):
    """Two classes: a dark or a bright disc on mid-grey, plus noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    inputs, labels = [], []
    for i in range(n):
        label = i % 2
        cy, cx = rng.uniform(2, size - 3, 2)
        disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= 4
        img = np.full((size, size), 0.5) + rng.normal(0, 0.05, (size, size))
        img[disc] = 0.9 if label else 0.1
        inputs.append(img)
        labels.append(label)
    return Corpus(np.array(inputs), np.array(labels), 2)


FAST = TrainConfig(learning_rate=1e-3, epochs=20, batch_size=16)


def test_separable_blobs_reach_high_train_accuracy():
    data = blobs(200)
    result = train(init_model(ModelConfig((8, 8), (4, 4, 4), 2, 0)), data, FAST)
    accuracy = np.mean(predict_labels(result.params, data.inputs) == data.labels)
    assert accuracy >= 0.99
    assert len(result.history) == FAST.epochs
    assert [h.epoch for h in result.history] == list(range(1, 21))


def intensity_fields(n, size=8, seed=0):
    """Two linearly separable classes: dark versus bright noisy fields."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = np.where(labels[:, None, None] == 1, 0.75, 0.25) + rng.normal(0, 0.1, (n, size, size))
    return Corpus(np.clip(x, 0, 1), labels, 2)


def test_loss_decreases_over_first_epochs_for_most_seeds():
    data = intensity_fields(1000, seed=42)
    ok = 0
    for seed in range(20):
        cfg = TrainConfig(learning_rate=1e-3, epochs=5, seed=seed)
        result = train(init_model(ModelConfig((8, 8), (8, 8, 8), 2, seed)), data, cfg)
        losses = [h.loss for h in result.history]
        ok += all(b <= a for a, b in zip(losses, losses[1:]))
    assert ok >= 19


def test_training_is_deterministic():
    data = blobs(64, seed=3)
    cfg = TrainConfig(learning_rate=1e-3, epochs=3, batch_size=8, seed=5)
    model = init_model(ModelConfig((8, 8), (3, 3), 2, 1))
    a, b = train(model, data, cfg), train(model, data, cfg)
    for ta, tb in zip(a.params, b.params):
        assert ta.value.tobytes() == tb.value.tobytes()
    assert [h.loss for h in a.history] == [h.loss for h in b.history]


def test_input_params_not_mutated():
    data = blobs(32)
    model = init_model(ModelConfig((8, 8), (3,), 2, 0))
    before = model.copy()
    train(model, data, TrainConfig(learning_rate=1e-2, epochs=1))
    for a, b in zip(model, before):
        assert np.array_equal(a.value, b.value)


def test_full_freeze_leaves_blocks_bit_identical():
    data = blobs(64)
    model = freeze_prefix(init_model(ModelConfig((8, 8), (3, 3, 3), 2, 0)), 1.0)
    result = train(model, data, TrainConfig(learning_rate=1e-2, epochs=3))
    for a, b in zip(result.params, model):
        if a.block is not None:
            assert a.value.tobytes() == b.value.tobytes()
        else:
            assert not np.array_equal(a.value, b.value)


def test_two_phase_run_freezes_pretrained_prefix():
    source, target = blobs(64, seed=1), blobs(64, seed=2)
    cfg = TrainConfig(learning_rate=1e-3, epochs=3, freeze_fraction=0.5)
    result = train(init_model(ModelConfig((8, 8), (3, 3, 3, 3), 2, 0)), target, cfg, pretrain_set=source)
    assert [h.phase for h in result.history] == ["pretrain"] * 3 + ["finetune"] * 3
    for a, b in zip(result.params, result.pretrained):
        if a.block is not None and a.block < 2:
            assert a.frozen and a.value.tobytes() == b.value.tobytes()
        else:
            assert not a.frozen


def test_returns_snapshot_of_best_epoch():
    data, val = blobs(100), blobs(40, seed=9)
    result = train(init_model(ModelConfig((8, 8), (4, 4), 2, 0)), data, FAST, val_set=val)
    scores = [h.val_macro_f1 for h in result.history]
    assert result.best_epoch == int(np.argmax(scores)) + 1  # argmax picks the earliest tie
    f1 = macro_f1(confusion(predict_labels(result.params, val.inputs), val.labels, 2)).macro
    assert f1 == max(scores)


def test_train_errors():
    model = init_model(ModelConfig((8, 8), (2,), 6, 0))
    with pytest.raises(ValueError, match="classes"):
        train(model, blobs(10), FAST)
    with pytest.raises(ValueError, match="empty"):
        train(model, Corpus(np.zeros((0, 8, 8)), np.zeros(0, dtype=int), 6), FAST)


def test_history_csv():
    from handfer.learner import EpochRecord

    text = format_history_csv([EpochRecord("pretrain", 1, 0.5, 0.25), EpochRecord("finetune", 1, 0.4, 0.5)])
    assert text == "epoch,loss,val_macro_f1,phase\n1,0.500000,0.250000,pretrain\n1,0.400000,0.500000,finetune\n"


def test_load_corpus_rejects_unlabeled_hand(tmp_path):
    imaging.write_pgm(tmp_path / "a.pgm", imaging.Image(np.zeros((4, 4))))
    entries = [ManifestEntry("a.pgm", ExpressionLabel.FEAR, None, line=7)]
    with pytest.raises(ValueError, match="line 7"):
        load_corpus(entries, tmp_path, HAND, (4, 4))
    with pytest.raises(ValueError, match="no entries"):
        load_corpus([], tmp_path, HAND, (4, 4))


def test_load_corpus_hand_inputs_are_scaled_edges(tmp_path):
    pixels = np.zeros((4, 4))
    pixels[:, 2:] = 255
    imaging.write_pgm(tmp_path / "s.pgm", imaging.Image(pixels))
    corpus = load_corpus([ManifestEntry("s.pgm", ExpressionLabel.FEAR, True)], tmp_path, HAND, (4, 4))
    assert corpus.labels.tolist() == [1]
    assert corpus.inputs[0, :, 1].tolist() == [1.0] * 4  # 1020 / 1020


def test_predict_expression_argmax_and_ties():
    params = init_model(ModelConfig((4, 4), (2,), 6, 0))
    params["head.weight"][:] = 0
    params["head.bias"][:] = [0, 0, 0, 0, 1, 0]
    label, probs = predict_expression(params, np.zeros((4, 4)))
    assert label is ExpressionLabel.SADNESS
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
    params["head.bias"][:] = [2, 0, 2, 0, 0, 0]
    assert predict_expression(params, imaging.Image(np.zeros((4, 4))))[0] is ExpressionLabel.ANGER
    with pytest.raises(ValueError, match="6-way"):
        predict_expression(init_model(ModelConfig((4, 4), (2,), 2, 0)), np.zeros((4, 4)))


def test_predict_expression_probabilities_normalized():
    params = init_model(ModelConfig((6, 6), (3, 3), 6, 4))
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert predict_expression(params, rng.random((6, 6)))[1].sum() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("bias, expected", [([0.0, np.log(0.7 / 0.3)], True), ([0.0, 0.0], False), ([1.0, 0.0], False)])
def test_predict_hand_threshold(bias, expected):
    params = init_model(ModelConfig((4, 4), (2,), 2, 0))
    params["head.weight"][:] = 0
    params["head.bias"][:] = bias
    flag, p = predict_hand(params, imaging.EdgeMap(np.zeros((4, 4))))
    assert flag is expected
    if bias[1] > 0:
        assert p == pytest.approx(0.7)
    probs = softmax(forward(params, np.zeros((1, 4, 4))))[0]
    assert probs[1] == pytest.approx(p) and probs.sum() == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError, match="2-way"):
        predict_hand(init_model(ModelConfig((4, 4), (2,), 6, 0)), np.zeros((4, 4)))
