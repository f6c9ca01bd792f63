"""All-atom entities: parsing, coordinate generation and batching."""

from .embed import embed_molecule_coords
from .fiber import HelixParams, generate_fiber
from .graph import (
    Atom,
    AtomGraph,
    BatchedGraph,
    batch_graphs,
    build_radius_graph,
    center,
    graph_from_json,
    graph_to_json,
    load_graph,
    save_graph,
    unbatch,
)
from .pdb import PDBError, parse_pdb_atoms
from .smiles import SmilesError, parse_smiles

__all__ = [
    "Atom", "AtomGraph", "BatchedGraph", "HelixParams", "PDBError", "SmilesError",
    "batch_graphs", "build_radius_graph", "center", "embed_molecule_coords",
    "generate_fiber", "graph_from_json", "graph_to_json", "load_graph", "parse_pdb_atoms",
    "parse_smiles", "save_graph", "unbatch", "molecule_from_smiles",
]


def molecule_from_smiles(text: str, seed: int = 0, cutoff: float = 10.0) -> AtomGraph:
    """Parse, lay out and connect a molecule in one call."""
    return build_radius_graph(embed_molecule_coords(parse_smiles(text), seed), cutoff)
