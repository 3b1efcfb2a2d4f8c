import hashlib
import json
import subprocess
import sys

import pytest

from atpc.cli import main
from atpc.corpus import load_alignment_dir, load_transcripts
from atpc.matrix import load_matrix

SMALL = ["--chars", "8", "--groups", "3", "--utts", "60", "--bias-utts", "30", "--hotwords", "3"]


def digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(directory)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(root, workers=1):
    data = root / "data"
    assert run("synth", "--seed", 7, *SMALL, "--out", data) == 0
    assert run("build", "--alignments", data / "alignments", "--embeddings", data / "embeddings",
               "--metric", "cosine", "--cap", 20, "--min-occ", 3, "--seed", 1,
               "--workers", workers, "--out", root / "raw.atpc") == 0
    assert run("normalize", "--in", root / "raw.atpc", "--out", root / "norm.atpc") == 0
    assert run("sweep", "--matrix", root / "norm.atpc", "--hotwords", data / "hotwords.txt",
               "--ref", data / "dev_ref.tsv", "--hyp", data / "dev_hyp.tsv",
               "--workers", workers, "--out", root / "sweep.tsv") == 0
    assert run("bias", "--matrix", root / "norm.atpc", "--hotwords", data / "hotwords.txt",
               "--hyp", data / "test_hyp.tsv", "--threshold", 1.07, "--workers", workers,
               "--out", root / "rewritten.tsv", "--trace", root / "trace.jsonl") == 0
    assert run("score", "--ref", data / "test_ref.tsv", "--hyp", root / "rewritten.tsv",
               "--hotwords", data / "hotwords.txt", "--json", root / "score.json") == 0
    assert run("disparity", "--matrix", root / "raw.atpc", "--lexicon", data / "lexicon.tsv",
               "--json", root / "disparity.json") == 0


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    pipeline(root)
    return root


def test_synth_deterministic(tmp_path):
    assert run("synth", "--seed", 7, *SMALL, "--out", tmp_path / "a") == 0
    assert run("synth", "--seed", 7, *SMALL, "--out", tmp_path / "b") == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_synth_output_loads_cleanly(pipeline_dir):
    alis = load_alignment_dir(pipeline_dir / "data" / "alignments")
    assert len(alis) == 60


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["synth"])
    assert ei.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as ei:
        main(["normalize", "--in", "a", "--out", "b", "--bogus"])
    assert ei.value.code == 2


def test_runtime_error_format(tmp_path, capsys):
    bad = tmp_path / "bad.atpc"
    bad.write_text("ATPC 2 raw cosine\na b\n1 2\n3\n", encoding="utf-8")
    assert run("normalize", "--in", bad, "--out", tmp_path / "x.atpc") == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: normalize: ")
    assert f"{bad}:4:" in err


def test_pipeline_outputs(pipeline_dir):
    raw = load_matrix(pipeline_dir / "raw.atpc")
    norm = load_matrix(pipeline_dir / "norm.atpc")
    assert not raw.normalized and norm.normalized
    assert len(raw.vocab) == 8
    sweep = (pipeline_dir / "sweep.tsv").read_text(encoding="utf-8").splitlines()
    assert len(sweep) == 1 + 9
    rep = json.loads((pipeline_dir / "score.json").read_text(encoding="utf-8"))
    assert set(rep) >= {"cer", "b_cer", "u_cer", "recall", "precision", "f1", "per_hotword"}
    trace = [json.loads(line) for line in (pipeline_dir / "trace.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(trace) == 30
    assert all({"utt", "original", "rewritten", "applied", "skipped"} <= set(t) for t in trace)
    rewritten = load_transcripts(pipeline_dir / "rewritten.tsv")
    assert [t["rewritten"] for t in trace] == list(rewritten.values())


def test_pipeline_reproducible_across_runs_and_workers(tmp_path, pipeline_dir):
    pipeline(tmp_path / "again", workers=3)
    for name in ("raw.atpc", "norm.atpc", "sweep.tsv", "rewritten.tsv", "trace.jsonl", "score.json"):
        assert (tmp_path / "again" / name).read_bytes() == (pipeline_dir / name).read_bytes(), name
    assert digest(tmp_path / "again" / "data") == digest(pipeline_dir / "data")


def test_score_fixture(tmp_path, capsys):
    (tmp_path / "ref.tsv").write_text("u1\tXKYW\nu2\tabcd\n", encoding="utf-8")
    (tmp_path / "hyp.tsv").write_text("u2\tbd\nu1\tXQYW\n", encoding="utf-8")
    (tmp_path / "hw.txt").write_text("KY\n", encoding="utf-8")
    assert run("score", "--ref", tmp_path / "ref.tsv", "--hyp", tmp_path / "hyp.tsv",
               "--hotwords", tmp_path / "hw.txt", "--json", tmp_path / "s.json") == 0
    out = capsys.readouterr().out
    assert "CER         37.50" in out
    assert "B-CER       50.00" in out
    assert "U-CER       33.33" in out
    rep = json.loads((tmp_path / "s.json").read_text(encoding="utf-8"))
    assert rep["cer"] == 3 / 8 and rep["b_cer"] == 0.5 and rep["recall"] == 0.0


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "atpc.cli", "normalize", "--in", tmp_path / "none",
                           "--out", tmp_path / "o"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.startswith("error: normalize: ")
    proc = subprocess.run([sys.executable, "-m", "atpc.cli"], capture_output=True, text=True)
    assert proc.returncode == 2
