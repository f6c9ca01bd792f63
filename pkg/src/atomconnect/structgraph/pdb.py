"""Fixed-column PDB ``ATOM`` record reader."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import vocab
from .graph import Atom, AtomGraph, build_radius_graph, center


class PDBError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


_TWO_LETTER = {s.upper(): s for s in vocab.ELEMENTS if len(s) == 2}


def infer_element(name_field: str) -> str:
    """Element symbol from a 4-column atom-name field.

    Two-letter elements start in the first column of the field (e.g. ``FE  ``);
    otherwise the first alphabetic character after leading digits is used.
    """
    if name_field[:1].isalpha() and name_field[:2].upper() in _TWO_LETTER:
        return _TWO_LETTER[name_field[:2].upper()]
    stripped = name_field.strip().lstrip("0123456789")
    if not stripped or not stripped[0].isalpha():
        raise ValueError(f"cannot infer element from atom name {name_field!r}")
    return stripped[0].upper()


def _modality(res_names: list[str]) -> str:
    names = set(res_names)
    if names & set(vocab.DNA_RESIDUES):
        return "dna"
    if names & set(vocab.RNA_RESIDUES) and not names & set(vocab.AMINO_ACIDS):
        return "rna"
    return "protein"


def parse_pdb_atoms(text: str | Iterable[str], cutoff: float = 10.0,
                    modality: str | None = None) -> AtomGraph:
    """One atom per ``ATOM`` record in file order; coordinates centered and a
    radius graph built afterward. ``HETATM`` and other records are skipped."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.startswith("ATOM"):
            continue
        if len(line) < 54:
            raise PDBError("record shorter than coordinate columns", lineno)
        try:
            xyz = [float(line[30:38]), float(line[38:46]), float(line[46:54])]
        except ValueError:
            raise PDBError("unparsable coordinate", lineno) from None
        name_field = line[12:16]
        name = name_field.strip()
        res_name = line[17:20].strip()
        chain = line[21:22]
        try:
            res_seq = int(line[22:26])
        except ValueError:
            raise PDBError("unparsable residue number", lineno) from None
        element = line[76:78].strip() if len(line) >= 78 else ""
        if not element:
            try:
                element = infer_element(name_field)
            except ValueError as exc:
                raise PDBError(str(exc), lineno) from None
        element = element.capitalize()
        if element not in vocab.ATOMIC_NUMBER:
            raise PDBError(f"unknown element {element!r}", lineno)
        records.append((name, res_name, chain, res_seq, element, xyz))
    if not records:
        raise PDBError("no ATOM records")

    kind = modality or _modality([r[1] for r in records])
    chains: dict[str, int] = {}
    residues: dict[tuple[str, int], int] = {}
    atoms = []
    for name, res_name, chain, res_seq, element, _ in records:
        chain_idx = chains.setdefault(chain, len(chains))
        res_idx = residues.setdefault((chain, res_seq), len(residues))
        if kind == "protein":
            backbone = name in vocab.PROTEIN_BACKBONE
            special = name == "CA"
        else:
            backbone = name in vocab.NUCLEIC_BACKBONE
            special = name in vocab.PHOSPHATE
        atoms.append(Atom(
            element=vocab.ATOMIC_NUMBER[element],
            atom_name_id=vocab.atom_name_id(name),
            residue_id=vocab.residue_id(res_name),
            chain_index=chain_idx,
            residue_index=res_idx,
            is_backbone=backbone,
            is_phosphate_or_ca=special,
        ))
    coords = center(np.array([r[5] for r in records], dtype=np.float64))
    return build_radius_graph(AtomGraph(atoms, coords, [], kind), cutoff)


def format_atom_record(serial: int, name: str, res_name: str, chain: str, res_seq: int,
                       xyz, element: str) -> str:
    """Write one ``ATOM`` line in standard fixed columns."""
    padded = f" {name:<3}" if len(name) < 4 and len(element) == 1 else f"{name:<4}"
    return (f"ATOM  {serial:5d} {padded} {res_name:>3} {chain:1}{res_seq:4d}    "
            f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}  1.00  0.00          {element:>2}")
