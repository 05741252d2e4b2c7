import shutil

import numpy as np
import pytest

from handfer import imaging, toy
from handfer.cli import main, read_config
from handfer.dataset import ExpressionLabel, ManifestEntry, format_manifest
from handfer.learner import load_checkpoint
from handfer.learner.checkpoint import encode_checkpoint

from make_fixtures import oracle_report

SMALL = ["--input-width", "16", "--input-height", "16", "--channels", "4,4", "--lr", "1e-3", "--epochs", "3"]


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpora")
    toy.write_expression_corpus(root / "expr", 10, 16, seed=1)
    toy.write_expression_corpus(root / "pre", 10, 16, seed=2)
    toy.write_hand_corpus(root / "hand", 60, 16, seed=3)
    return root


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_expr_writes_reloadable_checkpoint(tmp_path, corpora, capsys):
    code, out, _ = run(capsys, "train-expr", "--train-manifest", corpora / "expr" / "manifest.csv",
                       "--out", tmp_path, *SMALL)
    assert code == 0
    assert "best epoch" in out
    ckpt = tmp_path / "expr.ckpt"
    params = load_checkpoint(ckpt)
    assert params.config.head_classes == 6
    assert encode_checkpoint(params) == ckpt.read_bytes()
    history = (tmp_path / "expr_history.csv").read_text().splitlines()
    assert history[0] == "epoch,loss,val_macro_f1,phase"
    assert len(history) == 4


def test_train_expr_two_phase_marks_boundary(tmp_path, corpora, capsys):
    code, _, _ = run(capsys, "train-expr", "--train-manifest", corpora / "expr" / "manifest.csv",
                     "--pretrain-manifest", corpora / "pre" / "manifest.csv", "--out", tmp_path,
                     *SMALL, "--freeze-fraction", "0.5")
    assert code == 0
    phases = [line.split(",")[-1] for line in (tmp_path / "expr_history.csv").read_text().splitlines()[1:]]
    assert phases == ["pretrain"] * 3 + ["finetune"] * 3
    params = load_checkpoint(tmp_path / "expr.ckpt")
    assert [t.frozen for t in params] == [True, True, False, False, False, False]


def test_train_is_bit_reproducible(tmp_path, corpora, capsys):
    outs = []
    for name in ("a", "b"):
        run(capsys, "train-hand", "--train-manifest", corpora / "hand" / "manifest.csv",
            "--out", tmp_path / name, "--seed", "7", *SMALL)
        outs.append(((tmp_path / name / "hand.ckpt").read_bytes(), (tmp_path / name / "hand_history.csv").read_text()))
    assert outs[0] == outs[1]


def test_missing_manifest_names_path(tmp_path, capsys):
    code, out, err = run(capsys, "train-expr", "--train-manifest", tmp_path / "nope.csv", "--out", tmp_path)
    assert code == 1
    assert "nope.csv" in err and out == ""


def test_train_hand_checkpoint_is_binary(tmp_path, corpora, capsys):
    code, _, _ = run(capsys, "train-hand", "--train-manifest", corpora / "hand" / "manifest.csv",
                     "--out", tmp_path, *SMALL)
    assert code == 0
    assert load_checkpoint(tmp_path / "hand.ckpt").config.head_classes == 2


def test_train_hand_rejects_unlabeled(tmp_path, capsys):
    imaging.write_pgm(tmp_path / "a.pgm", imaging.Image(np.zeros((4, 4))))
    entries = [ManifestEntry("a.pgm", ExpressionLabel.FEAR, True), ManifestEntry("a.pgm", ExpressionLabel.ANGER, None)]
    (tmp_path / "m.csv").write_text(format_manifest(entries))
    code, _, err = run(capsys, "train-hand", "--train-manifest", tmp_path / "m.csv", "--out", tmp_path)
    assert code == 1
    assert "line 3" in err


def test_bad_manifest_line_reported(tmp_path, capsys):
    (tmp_path / "m.csv").write_text("path,expression,hand\na.pgm,joy,0\n")
    code, _, err = run(capsys, "train-expr", "--train-manifest", tmp_path / "m.csv", "--out", tmp_path)
    assert code == 1 and "line 2" in err and "joy" in err


def test_config_file_precedence(tmp_path, corpora, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# toy run\n"
        f"train_manifest = {corpora / 'expr' / 'manifest.csv'}\n"
        "input_width = 16\ninput_height = 16\nchannels = 4,4\n"
        "learning_rate = 1e-3\n"
        "epochs = 5   # overridden below\n"
    )
    code, _, _ = run(capsys, "train-expr", "--config", cfg, "--epochs", "2", "--out", tmp_path)
    assert code == 0
    assert len((tmp_path / "expr_history.csv").read_text().splitlines()) == 3
    assert read_config(cfg)["epochs"] == 5


def test_config_file_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "train-expr", "--config", cfg)
    assert code == 1 and "unknown key" in err and "bad.cfg:1" in err


def _evaluate(capsys, data_dir, out, *extra):
    return run(capsys, "evaluate", "--expr-ckpt", data_dir / "expr.ckpt", "--hand-ckpt", data_dir / "hand.ckpt",
               "--val-manifest", data_dir / "fixture" / "manifest.csv", "--out", out, *extra)


def test_evaluate_matches_oracle_golden(tmp_path, data_dir, capsys):
    code, out, _ = _evaluate(capsys, data_dir, tmp_path)
    assert code == 0
    golden = (data_dir / "evaluate_golden.csv").read_bytes()
    assert (tmp_path / "report.csv").read_bytes() == golden
    assert len(golden.decode().splitlines()) == 4
    assert "hand-override-except-happiness" in out


def test_golden_is_oracle_output(data_dir):
    expected = oracle_report(data_dir / "fixture", data_dir / "expr.ckpt", data_dir / "hand.ckpt")
    assert expected == (data_dir / "evaluate_golden.csv").read_text()


def test_evaluate_subset_of_modes(tmp_path, data_dir, capsys):
    code, _, _ = run(capsys, "evaluate", "--expr-ckpt", data_dir / "expr.ckpt",
                     "--val-manifest", data_dir / "fixture" / "manifest.csv", "--out", tmp_path,
                     "--modes", "expression-only")
    assert code == 0
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["expression-only"]


def test_evaluate_hand_mode_without_hand_checkpoint(tmp_path, data_dir, capsys):
    code, _, err = run(capsys, "evaluate", "--expr-ckpt", data_dir / "expr.ckpt",
                       "--val-manifest", data_dir / "fixture" / "manifest.csv", "--out", tmp_path,
                       "--modes", "expression-only,hand-override")
    assert code == 1 and "--hand-ckpt" in err


def test_evaluate_corrupted_checkpoint(tmp_path, data_dir, capsys):
    bad = tmp_path / "expr.ckpt"
    bad.write_bytes((data_dir / "expr.ckpt").read_bytes()[:-10])
    code, _, err = run(capsys, "evaluate", "--expr-ckpt", bad, "--val-manifest",
                       data_dir / "fixture" / "manifest.csv", "--out", tmp_path, "--modes", "expression-only")
    assert code == 1
    assert "head.bias truncated" in err


def test_predict_golden_stdout(data_dir, capsys):
    code, out, _ = run(capsys, "predict", data_dir / "fixture" / "val_04.pgm",
                       "--expr-ckpt", data_dir / "expr.ckpt", "--hand-ckpt", data_dir / "hand.ckpt")
    assert code == 0
    assert out == (data_dir / "predict_golden.txt").read_text()


def test_predict_expression_only_ignores_hand_checkpoint(tmp_path, data_dir, capsys):
    code, out, _ = run(capsys, "predict", data_dir / "fixture" / "val_04.pgm", "--expr-ckpt", data_dir / "expr.ckpt",
                       "--hand-ckpt", tmp_path / "does-not-exist.ckpt", "--mode", "expression-only")
    assert code == 0
    assert "hand: n/a" in out
    lines = dict(line.split(": ", 1) for line in out.splitlines())
    assert lines["label"] == lines["expression"]


def test_predict_missing_image(tmp_path, data_dir, capsys):
    code, out, err = run(capsys, "predict", tmp_path / "nope.pgm", "--expr-ckpt", data_dir / "expr.ckpt")
    assert code == 1 and "nope.pgm" in err and out == ""


def test_predict_unreadable_image(tmp_path, data_dir, capsys):
    (tmp_path / "x.pgm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    code, _, err = run(capsys, "predict", tmp_path / "x.pgm", "--expr-ckpt", data_dir / "expr.ckpt")
    assert code == 1 and "P5" in err


def test_edges_step_golden(tmp_path, data_dir, capsys):
    out = tmp_path / "e.pgm"
    code, _, _ = run(capsys, "edges", data_dir / "step.pgm", "--out", out)
    assert code == 0
    assert out.read_bytes() == (data_dir / "step_edges_golden.pgm").read_bytes()
    assert imaging.read_pgm(out).pixels[:, 1].tolist() == [180.0] * 4


def test_edges_constant_image(tmp_path, capsys):
    src = tmp_path / "c.pgm"
    imaging.write_pgm(src, imaging.Image(np.full((5, 6), 99.0)))
    code, _, _ = run(capsys, "edges", src, "--out", tmp_path / "e.pgm")
    assert code == 0
    edges = imaging.read_pgm(tmp_path / "e.pgm")
    assert (edges.width, edges.height) == (6, 5) and not edges.pixels.any()


def test_edges_write_failure(tmp_path, data_dir, capsys):
    code, _, err = run(capsys, "edges", data_dir / "step.pgm", "--out", tmp_path / "missing-dir" / "e.pgm")
    assert code == 1 and "cannot write" in err


def test_manifest_paths_resolve_relative_to_manifest(tmp_path, data_dir, capsys, monkeypatch):
    copy = tmp_path / "elsewhere"
    shutil.copytree(data_dir / "fixture", copy)
    monkeypatch.chdir(tmp_path.parent)
    code, _, _ = run(capsys, "evaluate", "--expr-ckpt", data_dir / "expr.ckpt", "--val-manifest",
                     copy / "manifest.csv", "--out", tmp_path / "r", "--modes", "expression-only")
    assert code == 0
