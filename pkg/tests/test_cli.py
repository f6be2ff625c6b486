import subprocess
import sys

import numpy as np
import pytest

from tdsv.cli import run
from tdsv.data import EmbeddingStore, read_scores, write_embeddings

GEN = ["--speakers", "8", "--dim", "16", "--cohort-speakers", "12", "--cohort-utts", "2", "--seed", "3"]


@pytest.fixture
def dataset(tmp_path):
    d = tmp_path / "ds"
    assert run(["gen", *GEN, "--noise", "0", "--confusion", "0", "--out", str(d)]) == 0
    return d


def _pipeline(d, out, workers="1", top_n="5"):
    out.mkdir(exist_ok=True)
    steps = [
        ["enroll", "--models", d / "models.tsv", "--embeddings", d / "embeddings.bin", "--out", out / "models.bin"],
        ["score", "--trials", d / "trials.tsv", "--models", out / "models.bin", "--embeddings",
         d / "embeddings.bin", "--out", out / "raw.tsv", "--workers", workers],
        ["asnorm", "--in", out / "raw.tsv", "--models", out / "models.bin", "--embeddings", d / "embeddings.bin",
         "--cohort-embeddings", d / "cohort.bin", "--speaker-map", d / "cohort_speakers.tsv", "--top-n", top_n,
         "--out", out / "norm.tsv", "--workers", workers],
        ["gate", "--trials", d / "trials.tsv", "--models", d / "models.tsv", "--posteriors", d / "posteriors.tsv",
         "--scores", out / "norm.tsv", "--out", out / "gated.tsv", "--decisions", out / "decisions.tsv"],
    ]
    for argv in steps:
        assert run([str(a) for a in argv]) == 0, argv[0]


def test_full_pipeline_table_row(dataset, tmp_path, capsys):
    out = tmp_path / "run"
    _pipeline(dataset, out)
    capsys.readouterr()
    rc = run(["eval", "--scores", str(out / "gated.tsv"), "--trials", str(dataset / "trials.tsv"),
              "--subset", "tc-vs-tw", "--det-out", str(out / "det.tsv")])
    text = capsys.readouterr().out
    assert rc == 0
    assert "EER(%)\t0.0000" in text and "MinDCF\t0.0000" in text
    assert text.rstrip().splitlines()[-1] == "0.0000 & 0.00"
    assert (out / "det.tsv").exists() and (out / "det.tsv.manifest.tsv").exists()


def test_decisions_file(dataset, tmp_path):
    out = tmp_path / "run"
    _pipeline(dataset, out)
    rows = [line.split("\t") for line in (out / "decisions.tsv").read_text().splitlines()]
    assert rows and all(len(r) == 4 and r[3] in ("0", "1") for r in rows)


def test_workers_byte_identical(dataset, tmp_path):
    _pipeline(dataset, tmp_path / "w1", workers="1")
    _pipeline(dataset, tmp_path / "w8", workers="8")
    for name in ("models.bin", "raw.tsv", "norm.tsv", "gated.tsv", "decisions.tsv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w8" / name).read_bytes(), name


def test_manifest_echoes_parameters(dataset, tmp_path):
    out = tmp_path / "run"
    _pipeline(dataset, out, top_n="4")
    rows = dict(line.split("\t", 1) for line in (out / "norm.tsv.manifest.tsv").read_text().splitlines())
    assert rows["command"] == "asnorm"
    assert rows["top_n"] == "4" and rows["epsilon_sigma"] == "1e-06"
    assert (dataset / "gen.manifest.tsv").exists()


def test_fuse(dataset, tmp_path):
    out = tmp_path / "run"
    _pipeline(dataset, out)
    assert run(["fuse", "--in", f"{out / 'raw.tsv'},{out / 'raw.tsv'}", "--out", str(out / "f.tsv")]) == 0
    a, b = read_scores(out / "raw.tsv"), read_scores(out / "f.tsv")
    assert [r.score for r in a] == pytest.approx([r.score for r in b], abs=1e-6)
    assert run(["fuse", "--in", f"{out / 'raw.tsv'},{out / 'norm.tsv'}", "--out", str(out / "f.tsv")]) == 0


def test_unknown_flag_is_usage_error(capsys):
    assert run(["eval", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_subcommand_and_required():
    assert run([]) == 1
    assert run(["score", "--trials", "x"]) == 1


def test_missing_embedding_names_trial_line(dataset, tmp_path, capsys):
    out = tmp_path / "run"
    _pipeline(dataset, out)
    trials = (dataset / "trials.tsv").read_text().splitlines()
    first = trials[0].split("\t")
    trials.insert(1, f"{first[0]}\tghost_utt")
    bad = tmp_path / "bad_trials.tsv"
    bad.write_text("\n".join(trials) + "\n")
    capsys.readouterr()
    rc = run(["score", "--trials", str(bad), "--models", str(out / "models.bin"), "--embeddings",
              str(dataset / "embeddings.bin"), "--out", str(tmp_path / "s.tsv")])
    err = capsys.readouterr().err
    assert rc == 2
    assert "line 2" in err and "ghost_utt" in err
    assert not (tmp_path / "s.tsv").exists()


def test_missing_file_is_data_error(tmp_path):
    assert run(["eval", "--scores", str(tmp_path / "nope"), "--trials", str(tmp_path / "nope")]) == 2


def test_degenerate_cohort_exit_3(tmp_path):
    emb = tmp_path / "e.txt"
    write_embeddings(emb, EmbeddingStore(["t"], [[1.0, 0.0]]))
    write_embeddings(tmp_path / "m.txt", EmbeddingStore(["m"], [[0.0, 1.0]]))
    write_embeddings(tmp_path / "c.txt", EmbeddingStore(["a", "b"], [[1.0, 0.0], [1.0, 0.0]]))
    (tmp_path / "map.tsv").write_text("a\tsa\nb\tsb\n")
    (tmp_path / "raw.tsv").write_text("m\tt\t0.000000\n")
    rc = run(["asnorm", "--in", str(tmp_path / "raw.tsv"), "--models", str(tmp_path / "m.txt"),
              "--embeddings", str(emb), "--cohort-embeddings", str(tmp_path / "c.txt"),
              "--speaker-map", str(tmp_path / "map.tsv"), "--top-n", "2", "--out", str(tmp_path / "o.tsv")])
    assert rc == 3


def test_losscheck(capsys):
    assert run(["losscheck", "--instances", "5"]) == 0
    assert "max_relative_error" in capsys.readouterr().out
    assert run(["losscheck", "--instances", "5", "--tolerance", "1e-30"]) == 3


def test_gen_infeasible_is_data_error(tmp_path):
    assert run(["gen", *GEN, "--tc", "10", "--out", str(tmp_path / "x")]) == 2


class TestConfigFile:
    def test_config_supplies_required_and_defaults(self, dataset, tmp_path):
        out = tmp_path / "run"
        _pipeline(dataset, out)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"# defaults\ntrials = {dataset / 'trials.tsv'}\neval.subset = tc-vs-ic\n")
        assert run(["--config", str(cfg), "eval", "--scores", str(out / "raw.tsv"),
                    "--det-out", str(out / "det.tsv")]) == 0
        rows = dict(line.split("\t", 1) for line in (out / "det.tsv.manifest.tsv").read_text().splitlines())
        assert rows["subset"] == "tc-vs-ic"
        # command line wins over the file
        assert run(["--config", str(cfg), "eval", "--scores", str(out / "raw.tsv"), "--subset", "tc-vs-tw",
                    "--det-out", str(out / "det.tsv")]) == 0
        rows = dict(line.split("\t", 1) for line in (out / "det.tsv.manifest.tsv").read_text().splitlines())
        assert rows["subset"] == "tc-vs-tw"

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("no_such_key = 1\n")
        assert run(["--config", str(cfg), "losscheck"]) == 1

    def test_bad_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("just words\n")
        assert run(["--config", str(cfg), "losscheck"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tdsv", "losscheck", "--instances", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "tdsv", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
