"""End-to-end command-line workflow on a small synthetic bundle."""

import re

import numpy as np
import pytest

from neradapt.cli import main
from neradapt.data import read_conll


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    assert main(["synth", "--out-dir", str(out), "--seed", "0", "--dim", "10"]) == 0
    return out


def run_ok(argv):
    assert main(argv) == 0


def test_synth_emits_expected_files(bundle_dir):
    for name in ("source_train.conll", "source_dev.conll", "target_train.conll",
                 "target_dev.conll", "source_corpus.txt", "target_corpus.txt",
                 "source_emb.txt", "target_emb.txt"):
        assert (bundle_dir / name).exists()


@pytest.fixture(scope="module")
def artifacts(bundle_dir, tmp_path_factory):
    """Run the whole pipeline once; later tests poke at the outputs."""
    work = tmp_path_factory.mktemp("work")
    d = {k: str(bundle_dir / v) for k, v in {
        "src_corpus": "source_corpus.txt", "tgt_corpus": "target_corpus.txt",
        "src_emb": "source_emb.txt", "tgt_emb": "target_emb.txt",
        "src_train": "source_train.conll", "src_dev": "source_dev.conll",
        "tgt_train": "target_train.conll", "tgt_dev": "target_dev.conll"}.items()}
    d.update({k: str(work / v) for k, v in {
        "src_stats": "src_stats.txt", "tgt_stats": "tgt_stats.txt",
        "lexicon": "lexicon.txt", "proj": "z.sxz", "proj_cf": "z_cf.sxz",
        "source_model": "source.sxm", "target_model": "target.sxm",
        "baseline_model": "baseline.sxm", "report": "report.txt",
        "tagged": "tagged.conll", "raw": "raw.txt"}.items()})

    run_ok(["stats", "--corpus", d["src_corpus"], "--out", d["src_stats"]])
    run_ok(["stats", "--corpus", d["tgt_corpus"], "--out", d["tgt_stats"]])
    run_ok(["lexicon", "--source-stats", d["src_stats"], "--target-stats",
            d["tgt_stats"], "--top-k", "60", "--out", d["lexicon"]])
    run_ok(["project", "--source-emb", d["src_emb"], "--target-emb", d["tgt_emb"],
            "--lexicon", d["lexicon"], "--out", d["proj"]])
    run_ok(["project", "--source-emb", d["src_emb"], "--target-emb", d["tgt_emb"],
            "--lexicon", d["lexicon"], "--out", d["proj_cf"], "--closed-form"])
    run_ok(["train-source", "--train", d["src_train"], "--dev", d["src_dev"],
            "--emb", d["src_emb"], "--out", d["source_model"],
            "--char-emb-dim", "4", "--char-hidden", "6", "--word-hidden", "8",
            "--dropout", "0.25", "--lr", "0.01", "--max-epochs", "2",
            "--patience", "2", "--seed", "0"])
    return d


def test_project_closed_form_and_descent_agree(artifacts):
    from neradapt.corpus import PivotLexicon
    from neradapt.embeddings import (ProjectionMatrix, load_embeddings,
                                     projection_loss, _design_matrices)
    z_gd = ProjectionMatrix.load(artifacts["proj"]).z
    z_cf = ProjectionMatrix.load(artifacts["proj_cf"]).z
    assert np.max(np.abs(z_gd - z_cf)) < 1e-4
    emb_s = load_embeddings(artifacts["src_emb"])
    emb_t = load_embeddings(artifacts["tgt_emb"])
    lex = PivotLexicon.load(artifacts["lexicon"])
    x, y, c, _ = _design_matrices(emb_s, emb_t, lex)
    loss_gd = projection_loss(z_gd, x, y, c)
    loss_cf = projection_loss(z_cf, x, y, c)
    scale = projection_loss(np.zeros_like(z_gd), x, y, c)  # natural loss scale
    assert (loss_gd - loss_cf) <= 1e-6 * max(scale, 1e-30)


def test_transfer_frozen_then_evaluate_twice_identical(artifacts, tmp_path):
    run_ok(["transfer", "--source-model", artifacts["source_model"],
            "--source-emb", artifacts["src_emb"], "--projection", artifacts["proj"],
            "--target-emb", artifacts["tgt_emb"], "--train", artifacts["tgt_train"],
            "--dev", artifacts["tgt_dev"], "--out", artifacts["target_model"],
            "--psi", "0.0", "--alpha", "0.01", "--max-epochs", "2",
            "--patience", "2", "--seed", "0",
            "--report", artifacts["report"]])
    rep1 = tmp_path / "eval1.txt"
    rep2 = tmp_path / "eval2.txt"
    for rep in (rep1, rep2):
        run_ok(["evaluate", "--model", artifacts["target_model"],
                "--data", artifacts["tgt_dev"], "--emb", artifacts["tgt_emb"],
                "--report", str(rep)])
    body1 = rep1.read_text().split("---METRICS---")[1]
    body2 = rep2.read_text().split("---METRICS---")[1]
    assert body1 == body2


def test_report_has_header_and_machine_block(artifacts):
    text = open(artifacts["report"]).read()
    assert text.startswith("# neradapt")
    assert re.search(r"# seed=\d+ config_hash=[0-9a-f]{12}", text)
    assert "---METRICS---" in text and "---END---" in text
    block = text.split("---METRICS---")[1].split("---END---")[0].strip()
    for line in block.split("\n"):
        assert re.match(r"^[a-z0-9_]+=\S+$", line)


def test_transfer_psi_grid_selects_and_reports(artifacts, tmp_path, monkeypatch):
    import neradapt.transfer as transfer_mod
    monkeypatch.setattr(transfer_mod, "PSI_GRID", [0.2, 0.8])  # keep the smoke fast
    out = tmp_path / "grid.sxm"
    rep = tmp_path / "grid.txt"
    run_ok(["transfer", "--source-model", artifacts["source_model"],
            "--source-emb", artifacts["src_emb"], "--projection", artifacts["proj"],
            "--target-emb", artifacts["tgt_emb"], "--train", artifacts["tgt_train"],
            "--dev", artifacts["tgt_dev"], "--out", str(out), "--psi-grid",
            "--alpha", "0.01", "--max-epochs", "1", "--patience", "1",
            "--seed", "0", "--report", str(rep)])
    text = rep.read_text()
    assert "psi grid (dev F1):" in text
    assert "psi=0.2" in text and "psi=0.8" in text
    assert re.search(r"selected psi=0\.[28]", text)


def test_baseline_init_finetune_runs(artifacts):
    run_ok(["baseline", "--method", "init-finetune",
            "--train", artifacts["tgt_train"], "--dev", artifacts["tgt_dev"],
            "--emb", artifacts["src_emb"], "--source-model", artifacts["source_model"],
            "--out", artifacts["baseline_model"],
            "--lr", "0.01", "--max-epochs", "1", "--patience", "1", "--seed", "0"])


def test_baseline_mult_runs(artifacts, tmp_path):
    out = tmp_path / "mult.sxm"
    run_ok(["baseline", "--method", "mult",
            "--train", artifacts["tgt_train"], "--dev", artifacts["tgt_dev"],
            "--source-train", artifacts["src_train"], "--source-dev", artifacts["src_dev"],
            "--emb", artifacts["src_emb"], "--lambda", "0.5", "--steps", "6",
            "--eval-every", "3", "--out", str(out),
            "--char-emb-dim", "4", "--char-hidden", "6", "--word-hidden", "8",
            "--lr", "0.01", "--max-epochs", "1", "--patience", "1", "--seed", "0"])
    assert out.exists() and (tmp_path / "mult.sxm.source").exists()


def test_tag_produces_conll(artifacts):
    with open(artifacts["raw"], "w") as fh:
        fh.write("alvern visited ashmere yesterday\n\n")
    run_ok(["tag", "--model", artifacts["source_model"], "--input", artifacts["raw"],
            "--emb", artifacts["src_emb"], "--out", artifacts["tagged"]])
    tagged = read_conll(artifacts["tagged"])
    assert len(tagged) == 1
    assert tagged[0].tokens == ["alvern", "visited", "ashmere", "yesterday"]


def test_missing_file_is_validation_error(tmp_path):
    assert main(["stats", "--corpus", str(tmp_path / "nope.txt"),
                 "--out", str(tmp_path / "o.txt")]) == 1


def test_bad_flag_is_validation_error():
    assert main(["stats", "--corpus"]) == 1


def test_malformed_input_is_runtime_error(tmp_path):
    bad = tmp_path / "bad.conll"
    bad.write_text("one two three\n")
    model = tmp_path / "never.sxm"
    emb = tmp_path / "e.txt"
    emb.write_text("a 1.0\n")
    corrupt = tmp_path / "corrupt.sxm"
    corrupt.write_bytes(b"JUNK")
    assert main(["evaluate", "--model", str(corrupt), "--data", str(bad),
                 "--emb", str(emb)]) == 2


def test_config_file_supplies_defaults_with_flag_override(bundle_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    out1 = tmp_path / "s1.txt"
    cfg.write_text(f"corpus={bundle_dir / 'source_corpus.txt'}\nout={out1}\n")
    assert main(["--config", str(cfg), "stats"]) == 0
    assert out1.exists()
    out2 = tmp_path / "s2.txt"
    # explicit flag beats the config value
    assert main(["--config", str(cfg), "stats", "--out", str(out2)]) == 0
    assert out2.exists()


def test_version_flag():
    assert main(["--version"]) == 0
