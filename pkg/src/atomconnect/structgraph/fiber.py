"""Idealized single-strand nucleic-acid helices from a template table."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import vocab
from .graph import Atom, AtomGraph, build_radius_graph, center

ALPHABET = {"dna": "ACGT", "rna": "ACGU"}


@dataclass(frozen=True)
class HelixParams:
    rise: float
    twist_deg: float


@lru_cache(maxsize=1)
def _table() -> dict:
    text = resources.files("atomconnect.structgraph").joinpath("data/fiber_templates.json").read_text()
    return json.loads(text)


def default_helix(kind: str) -> HelixParams:
    h = _table()["helix"][kind]
    return HelixParams(h["rise"], h["twist_deg"])


def template(kind: str, base: str) -> list[tuple[str, np.ndarray]]:
    return [(row[0], np.array(row[1:], dtype=np.float64)) for row in _table()["templates"][kind][base]]


def _rotation_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def generate_fiber(sequence: str, kind: str = "dna", helix: HelixParams | None = None,
                   cutoff: float | None = 10.0, centered: bool = True) -> AtomGraph:
    """Place one template per nucleotide: residue i is rotated by i * twist about
    the z axis and lifted by i * rise. Single strand only."""
    if kind not in ALPHABET:
        raise ValueError(f"kind must be 'dna' or 'rna', got {kind!r}")
    if not sequence:
        raise ValueError("empty sequence")
    seq = sequence.upper()
    for pos, ch in enumerate(seq):
        if ch not in ALPHABET[kind]:
            raise ValueError(f"alphabet violation: {ch} at position {pos}")
    helix = helix or default_helix(kind)
    twist = np.deg2rad(helix.twist_deg)
    atoms, coords = [], []
    for i, base in enumerate(seq):
        rot = _rotation_z(i * twist)
        shift = np.array([0.0, 0.0, i * helix.rise])
        res_name = ("D" + base) if kind == "dna" else base
        for name, xyz in template(kind, base):
            atoms.append(Atom(
                element=vocab.ATOMIC_NUMBER[name[0]],
                atom_name_id=vocab.atom_name_id(name),
                residue_id=vocab.residue_id(res_name),
                chain_index=0,
                residue_index=i,
                is_backbone=name in vocab.NUCLEIC_BACKBONE,
                is_phosphate_or_ca=name in vocab.PHOSPHATE,
            ))
            coords.append(rot @ xyz + shift)
    coords = np.array(coords)
    g = AtomGraph(atoms, center(coords) if centered else coords, [], kind)
    return build_radius_graph(g, cutoff) if cutoff is not None else g
