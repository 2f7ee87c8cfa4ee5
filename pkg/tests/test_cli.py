import json
import shutil

import pytest

from leafscope import __version__
from leafscope.cli import main
from test_metrics import PUBLISHED_TABLE


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = run(capsys, "version")
    assert code == 0 and out.strip() == __version__


def test_help_on_every_subcommand(capsys):
    for cmd in ("ingest", "split", "train", "grid", "evaluate", "explain", "compare", "version"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
    capsys.readouterr()


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1
    assert "usage" in err


def test_no_command(capsys):
    assert run(capsys)[0] == 1


def test_split_missing_manifest(capsys):
    code, _, err = run(capsys, "split", "missing.json")
    assert code == 1
    assert "missing.json" in err


def test_bad_ratios(capsys, corpus, tmp_path):
    m = tmp_path / "m.json"
    assert run(capsys, "ingest", str(corpus), "-o", str(m))[0] == 0
    assert run(capsys, "split", str(m), "--ratios", "0.8,0.2")[0] == 1
    assert run(capsys, "split", str(m), "--ratios", "0.5,0.1,0.1")[0] == 1


def test_ingest_refuses_to_clobber(capsys, corpus, tmp_path):
    m = tmp_path / "m.json"
    assert run(capsys, "ingest", str(corpus), "-o", str(m))[0] == 0
    before = m.read_text()
    code, _, err = run(capsys, "ingest", str(corpus), "-o", str(m))
    assert code == 1 and "--overwrite" in err
    assert run(capsys, "ingest", str(corpus), "-o", str(m), "--overwrite")[0] == 0
    assert m.read_text() == before


def test_seed_env_override(capsys, corpus, tmp_path, monkeypatch):
    m = tmp_path / "m.json"
    run(capsys, "ingest", str(corpus), "-o", str(m))
    monkeypatch.setenv("LEAFSCOPE_SEED", "11")
    run(capsys, "split", str(m), "--ratios", "0.6,0.2,0.2", "-o", str(tmp_path / "a.json"))
    monkeypatch.delenv("LEAFSCOPE_SEED")
    run(capsys, "split", str(m), "--ratios", "0.6,0.2,0.2", "--seed", "11", "-o", str(tmp_path / "b.json"))
    assert json.loads((tmp_path / "a.json").read_text())["seed"] == 11
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def write_report(run_dir, name, acc, p, r, f):
    run_dir.mkdir(parents=True)
    doc = {"architecture": name, "accuracy": acc, "precision": p, "recall": r, "f1": f,
           "per_class": {}, "confusion": []}
    (run_dir / "report.json").write_text(json.dumps(doc))


def test_compare_published_table(capsys, tmp_path):
    runs = []
    for name, values in PUBLISHED_TABLE.items():
        write_report(tmp_path / name, name, *values)
        runs.append(str(tmp_path / name))
    code, out, _ = run(capsys, "compare", *runs, "-o", str(tmp_path / "cmp"))
    assert code == 0
    table = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
    assert [row["architecture"] for row in table] == [
        "ResNet50", "Xception", "ResNet101", "DenseNet169",
        "DenseNet201", "DenseNet121", "InceptionResNetV2",
    ]


def test_compare_single_and_skip(capsys, tmp_path):
    write_report(tmp_path / "a", "ResNet50", *PUBLISHED_TABLE["ResNet50"])
    (tmp_path / "b").mkdir()
    code, _, err = run(capsys, "compare", str(tmp_path / "a"), str(tmp_path / "b"),
                       "-o", str(tmp_path / "cmp"))
    assert code == 0
    assert "skipped" in err and "b" in err
    assert len(json.loads((tmp_path / "cmp" / "comparison.json").read_text())) == 1


def test_compare_nothing_valid(capsys, tmp_path):
    (tmp_path / "b").mkdir()
    assert run(capsys, "compare", str(tmp_path / "b"), "-o", str(tmp_path / "cmp"))[0] == 1


def test_grid_command(capsys, corpus, tmp_path):
    m = tmp_path / "m.json"
    run(capsys, "ingest", str(corpus), "-o", str(m))
    run(capsys, "split", str(m), "--ratios", "0.6,0.2,0.2", "--seed", "1")
    grid = {
        "base": {"architecture": "toy", "manifest_path": "m.json", "preprocess_side": 64},
        "epochs": [1],
        "batch_size": [4],
        "learning_rate": [1e-2, 1e3],
    }
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    code, out, _ = run(capsys, "grid", "-c", str(tmp_path / "grid.json"), "-o", str(tmp_path / "runs"))
    assert code == 0
    report = json.loads((tmp_path / "runs" / "grid.json").read_text())
    assert [row["status"] for row in report["rows"]] == ["ok", "failed"]
    assert (tmp_path / "runs" / "toy_e1_b4_lr0.01" / "best.ckpt").is_file()


def test_internal_failure_exit_code(capsys, monkeypatch):
    import leafscope.cli as cli

    def boom(args):
        raise RuntimeError("bug")

    monkeypatch.setattr(cli, "cmd_version", boom)
    assert run(capsys, "version")[0] == 2


def test_explain_rejects_bad_inputs(capsys, tmp_path):
    code, _, err = run(capsys, "explain", "--checkpoint", "x.ckpt", "--image", "y.png",
                       "--methods", "gradcam,lime", "-o", str(tmp_path / "o"))
    assert code == 1 and "lime" in err
    code, _, err = run(capsys, "explain", "--checkpoint", "x.ckpt", "--image", "y.png",
                       "-o", str(tmp_path / "o"))
    assert code == 1 and "y.png" in err
