import csv
import json

import pytest

from atomconnect.cli import run_cli
from atomconnect.structgraph import load_graph

from corpus import PDB_CASES

TINY = {
    "graph_encoder_hidden_size": 8, "graph_encoder_depth": 1, "number_of_rbf_bases": 8,
    "gate_mlp_hidden_size": 8, "fusion_model_width": 8, "attention_head_count": 2,
    "fusion_block_count": 1, "fusion_mlp_intermediate_size": 16,
    "language_model_width": 8, "language_model_head_count": 2, "language_model_block_count": 1,
    "decoder_warmup_steps": 2, "alignment_max_steps": 2, "adaptation_max_steps": 2,
    "encoder_max_steps": 3, "encoder_warmup_steps": 1,
}


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def test_parse_smiles(tmp_path, capsys):
    assert run_cli(["parse", "--smiles", "CCO", "-o", str(tmp_path / "g.json")]) == 0
    assert load_graph(tmp_path / "g.json").num_atoms == 3
    assert "3 atoms" in capsys.readouterr().out


def test_parse_pdb_and_fiber_with_workdir(tmp_path):
    text, expected = PDB_CASES[0][0], PDB_CASES[0][2]
    (tmp_path / "in.pdb").write_text(text)
    assert run_cli(["--workdir", str(tmp_path), "parse", "--pdb", "in.pdb", "-o", "p.json"]) == 0
    assert load_graph(tmp_path / "p.json").num_atoms == len(expected)
    assert run_cli(["parse", "--fiber", "ACG", "--kind", "rna", "--workdir", str(tmp_path), "-o", "f.json"]) == 0
    assert load_graph(tmp_path / "f.json").modality == "rna"


def test_parse_error_is_one_line(tmp_path, capsys):
    assert run_cli(["parse", "--smiles", "C1CC", "-o", str(tmp_path / "x.json")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and "error" in err


def test_unknown_subcommand_exits_2(capsys):
    assert run_cli(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_exits_2():
    assert run_cli([]) == 2


def test_bench_tokens_rows(tmp_path):
    out = tmp_path / "b.csv"
    assert run_cli(["bench-tokens", "--sizes", "32,128,512", "--mode", "uniform", "-o", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["node_count", "method", "structural_tokens", "language_tokens", "ratio"]
    assert len(rows) == 10
    first = out.read_bytes()
    assert run_cli(["bench-tokens", "--sizes", "32,128,512", "-o", str(out)]) == 0
    assert out.read_bytes() == first


def test_bench_tokens_stdout(capsys):
    assert run_cli(["bench-tokens", "--sizes", "40960"]) == 0
    assert "40960,adaptive,2048," in capsys.readouterr().out


def test_bench_trained_without_checkpoint(capsys):
    assert run_cli(["bench-tokens", "--mode", "trained"]) == 1
    assert "checkpoint" in capsys.readouterr().err


def test_bad_sizes(capsys):
    assert run_cli(["bench-tokens", "--sizes", "12,abc"]) == 1


def test_bad_config_key(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"nonsense": 1}))
    assert run_cli(["--config", str(p), "bench-tokens", "--sizes", "8"]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_patch_report(tmp_path, tiny_config):
    run_cli(["parse", "--smiles", "c1ccccc1O", "-o", str(tmp_path / "g.json")])
    out = tmp_path / "r.json"
    assert run_cli(["--config", str(tiny_config), "patch", "--graph", str(tmp_path / "g.json"),
                    "--instruction", "what is <geo> ?", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep) >= {"k_g", "anchors", "membership_row_sums", "token_norms"}
    assert rep["node_count"] == 7
    assert all(abs(s - 1.0) <= 1e-12 for s in rep["membership_row_sums"][0])


def test_training_commands(tmp_path, tiny_config):
    w = ["--workdir", str(tmp_path), "--config", str(tiny_config)]
    assert run_cli(w + ["pretrain-encoder", "-o", "enc.json"]) == 0
    assert (tmp_path / "enc.report.json").exists() and (tmp_path / "enc.steps.csv").exists()
    assert run_cli(w + ["align", "--encoder", "enc.json", "-o", "al.json"]) == 0
    assert run_cli(w + ["adapt", "--model", "al.json", "-o", "ad.json"]) == 0
    rep = json.loads((tmp_path / "ad.report.json").read_text())
    assert rep["stage"] == "adaptation" and len(rep["steps"]) == 2
    assert run_cli(w + ["bench-tokens", "--mode", "trained", "--checkpoint", "ad.json",
                        "--sizes", "6,12", "-o", "t.csv"]) == 0
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 7


def test_align_needs_encoder_checkpoint(tmp_path, capsys):
    assert run_cli(["align", "--encoder", str(tmp_path / "missing.json")]) == 1


def test_gradcheck_exit_code(capsys):
    assert run_cli(["gradcheck", "--instances", "1"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
