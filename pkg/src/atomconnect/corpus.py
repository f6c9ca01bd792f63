"""Instruction corpora: the JSONL file format and small built-in demo sets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import zip_longest
from pathlib import Path

from .lmtoy import PLACEHOLDER
from .structgraph import AtomGraph, generate_fiber, load_graph, molecule_from_smiles, parse_pdb_atoms, save_graph


@dataclass
class InstructionSample:
    instruction: str
    graph: AtomGraph
    answer: str
    graph_file: str = ""

    def __post_init__(self):
        n = self.instruction.count(PLACEHOLDER)
        if n == 0:
            self.instruction = f"{PLACEHOLDER} {self.instruction}"
        elif n > 1:
            raise ValueError("one graph per sample: instruction has several placeholders")
        if self.graph.coords is None:
            raise ValueError("sample graph has no coordinates (sequence-only inputs are rejected)")


def load_corpus_jsonl(path) -> list[InstructionSample]:
    """One ``{"instruction", "graph_file", "answer"}`` object per line; graph
    paths are resolved against the corpus file's directory."""
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            missing = {"instruction", "graph_file", "answer"} - set(row)
            if missing:
                raise ValueError(f"missing keys {sorted(missing)}")
            graph = load_graph(path.parent / row["graph_file"])
        except (ValueError, OSError) as exc:
            raise ValueError(f"{path.name} line {lineno}: {exc}") from None
        out.append(InstructionSample(row["instruction"], graph, row["answer"], row["graph_file"]))
    if not out:
        raise ValueError(f"{path} holds no samples")
    return out


def write_corpus_jsonl(samples: list[InstructionSample], directory) -> Path:
    """Write graph files plus ``corpus.jsonl`` into ``directory``."""
    directory = Path(directory)
    (directory / "graphs").mkdir(parents=True, exist_ok=True)
    lines = []
    for k, s in enumerate(samples):
        rel = s.graph_file or f"graphs/sample_{k:03d}.json"
        save_graph(s.graph, directory / rel)
        lines.append(json.dumps({"instruction": s.instruction, "graph_file": rel, "answer": s.answer}))
    target = directory / "corpus.jsonl"
    target.write_text("\n".join(lines) + "\n")
    return target


def round_robin(samples: list, key=lambda s: s.graph.modality) -> list:
    """Interleave modality shards: one sample from each modality in turn."""
    shards: dict[str, list] = {}
    for s in samples:
        shards.setdefault(key(s), []).append(s)
    mixed = zip_longest(*shards.values())
    return [s for group in mixed for s in group if s is not None]


_GLYCINE = """\
ATOM      1  N   GLY A   1      -1.195   0.256   0.000  1.00  0.00           N
ATOM      2  CA  GLY A   1       0.000   1.083   0.000  1.00  0.00           C
ATOM      3  C   GLY A   1       1.195   0.256   0.000  1.00  0.00           C
ATOM      4  O   GLY A   1       1.195  -0.974   0.000  1.00  0.00           O
"""
_ALA_SER = """\
ATOM      1  N   ALA A   1       0.000   0.000   0.000  1.00  0.00           N
ATOM      2  CA  ALA A   1       1.458   0.000   0.000  1.00  0.00           C
ATOM      3  C   ALA A   1       2.009   1.420   0.000  1.00  0.00           C
ATOM      4  O   ALA A   1       1.251   2.390   0.000  1.00  0.00           O
ATOM      5  CB  ALA A   1       1.988  -0.773  -1.199  1.00  0.00           C
ATOM      6  N   SER A   2       3.332   1.536   0.000  1.00  0.00           N
ATOM      7  CA  SER A   2       3.988   2.839   0.000  1.00  0.00           C
ATOM      8  C   SER A   2       5.504   2.693   0.000  1.00  0.00           C
ATOM      9  O   SER A   2       6.030   1.580   0.000  1.00  0.00           O
ATOM     10  CB  SER A   2       3.555   3.645   1.225  1.00  0.00           C
ATOM     11  OG  SER A   2       4.013   4.986   1.170  1.00  0.00           O
"""

DEMO_INSTRUCTION = "describe the structure <geo> ."


def demo_instruction_corpus() -> list[InstructionSample]:
    """Eight samples, two per modality, sharing one instruction. Answers can
    only be told apart through the geometry tokens."""
    rows = [
        (molecule_from_smiles("CCO"), "ethanol , a small alcohol", "graphs/ethanol.json"),
        (molecule_from_smiles("c1ccccc1O"), "phenol , an aromatic alcohol", "graphs/phenol.json"),
        (parse_pdb_atoms(_GLYCINE), "a glycine residue", "graphs/glycine.json"),
        (parse_pdb_atoms(_ALA_SER), "an alanine serine dipeptide", "graphs/ala_ser.json"),
        (generate_fiber("ACGT", "dna"), "a dna strand of four bases", "graphs/dna_acgt.json"),
        (generate_fiber("GG", "dna"), "a short guanine dna strand", "graphs/dna_gg.json"),
        (generate_fiber("ACGU", "rna"), "an rna strand of four bases", "graphs/rna_acgu.json"),
        (generate_fiber("UU", "rna"), "a short uracil rna strand", "graphs/rna_uu.json"),
    ]
    return [InstructionSample(DEMO_INSTRUCTION, g, a, f) for g, a, f in rows]


DEMO_MOLECULES = ["CCO", "CC(=O)O", "c1ccncc1", "CN"]


def demo_pretrain_graphs() -> list[AtomGraph]:
    return [molecule_from_smiles(s) for s in DEMO_MOLECULES]
