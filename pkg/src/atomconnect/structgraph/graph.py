"""AtomGraph / BatchedGraph containers, radius graphs and the JSON graph file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import vocab


@dataclass(frozen=True)
class Atom:
    element: int
    atom_name_id: int = 0
    residue_id: int = 0
    chain_index: int = 0
    residue_index: int = 0
    is_backbone: bool = False
    is_phosphate_or_ca: bool = False

    def __post_init__(self):
        if self.element < 1:
            raise ValueError(f"atomic number must be >= 1, got {self.element}")


@dataclass
class AtomGraph:
    atoms: list[Atom]
    coords: np.ndarray | None = None
    edges: list[tuple[int, int]] = field(default_factory=list)
    modality: str = "molecule"
    # covalent bonds (i, j, order); molecules only, subset of edges
    bonds: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.modality not in vocab.MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
            if self.coords.shape[0] != len(self.atoms):
                raise ValueError("coords row count must equal atom count")
        self.edges = normalize_edges(self.edges, len(self.atoms))

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def elements(self) -> np.ndarray:
        return np.array([a.element for a in self.atoms], dtype=np.int64)

    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    def with_coords(self, coords) -> "AtomGraph":
        return replace(self, coords=np.asarray(coords, dtype=np.float64))

    def centered(self) -> "AtomGraph":
        if self.coords is None:
            raise ValueError("graph has no coordinates")
        return self.with_coords(center(self.coords))

    def same_as(self, other: "AtomGraph") -> bool:
        """Field-for-field equality (coordinates compared exactly)."""
        if (self.atoms, self.edges, self.modality, self.bonds) != (
                other.atoms, other.edges, other.modality, other.bonds):
            return False
        if self.coords is None or other.coords is None:
            return self.coords is None and other.coords is None
        return np.array_equal(self.coords, other.coords)


def normalize_edges(edges, n: int) -> list[tuple[int, int]]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for {n} atoms")
        if i == j:
            raise ValueError(f"self-loop on atom {i}")
        out.add((min(i, j), max(i, j)))
    return sorted(out)


def center(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] == 0:
        return coords.copy()
    return coords - coords.mean(axis=0)


def build_radius_graph(g: AtomGraph, cutoff: float = 10.0) -> AtomGraph:
    """Undirected edge for every atom pair within ``cutoff`` (inclusive).

    Existing edges (covalent bonds) are kept even if longer than the cutoff.
    """
    if g.coords is None:
        raise ValueError("graph has no coordinates")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    x = g.coords
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    i, j = np.nonzero(np.triu(d2 <= cutoff * cutoff, k=1))
    edges = set(g.edges) | set(zip(i.tolist(), j.tolist()))
    return replace(g, edges=sorted(edges))


@dataclass
class BatchedGraph:
    graphs: list[AtomGraph]
    elements: np.ndarray
    atom_name_ids: np.ndarray
    residue_ids: np.ndarray
    flags: np.ndarray  # (N, 2): backbone, phosphate_or_ca
    coords: np.ndarray
    edges: np.ndarray  # (E, 2) global indices, i < j
    batch: np.ndarray
    offsets: np.ndarray  # (G + 1,)

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)

    @property
    def num_atoms(self) -> int:
        return int(self.batch.shape[0])

    def node_indices(self, g: int) -> np.ndarray:
        return np.arange(self.offsets[g], self.offsets[g + 1])

    def graph_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)


def batch_graphs(graphs: list[AtomGraph]) -> BatchedGraph:
    if not graphs:
        raise ValueError("cannot batch an empty list of graphs")
    for k, g in enumerate(graphs):
        if g.coords is None:
            raise ValueError(f"graph {k} has no coordinates (sequence-only inputs are rejected)")
    sizes = [g.num_atoms for g in graphs]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    atoms = [a for g in graphs for a in g.atoms]
    edges = [g.edge_array() + offsets[k] for k, g in enumerate(graphs)]
    return BatchedGraph(
        graphs=list(graphs),
        elements=np.array([a.element for a in atoms], dtype=np.int64),
        atom_name_ids=np.array([a.atom_name_id for a in atoms], dtype=np.int64),
        residue_ids=np.array([a.residue_id for a in atoms], dtype=np.int64),
        flags=np.array([[a.is_backbone, a.is_phosphate_or_ca] for a in atoms],
                       dtype=np.float64).reshape(-1, 2),
        coords=np.concatenate([g.coords for g in graphs], axis=0),
        edges=np.concatenate(edges, axis=0).reshape(-1, 2),
        batch=np.repeat(np.arange(len(graphs)), sizes).astype(np.int64),
        offsets=offsets,
    )


def unbatch(b: BatchedGraph) -> list[AtomGraph]:
    out = []
    for k, g in enumerate(b.graphs):
        lo, hi = b.offsets[k], b.offsets[k + 1]
        sel = (b.edges[:, 0] >= lo) & (b.edges[:, 0] < hi)
        edges = [tuple(e) for e in (b.edges[sel] - lo).tolist()]
        out.append(replace(g, coords=b.coords[lo:hi].copy(), edges=edges))
    return out


# graph file format


def graph_to_json(g: AtomGraph) -> str:
    """Serialize to the canonical graph JSON (coordinates with 6 decimals)."""
    if g.coords is None:
        raise ValueError("graph has no coordinates")
    atoms = [
        {
            "element": vocab.SYMBOL[a.element],
            "name": vocab.ATOM_NAMES[a.atom_name_id],
            "residue": vocab.RESIDUES[a.residue_id],
            "chain": a.chain_index,
            "residue_index": a.residue_index,
            "flags": {"backbone": a.is_backbone, "phos_or_ca": a.is_phosphate_or_ca},
        }
        for a in g.atoms
    ]
    head = json.dumps({"modality": g.modality, "atoms": atoms})[:-1]
    rows = ",".join("[" + ",".join(f"{v:.6f}" for v in row) + "]" for row in g.coords)
    edges = json.dumps([list(e) for e in g.edges])
    parts = [head, f', "coords": [{rows}]', f', "edges": {edges}']
    if g.bonds:
        parts.append(f', "bonds": {json.dumps([list(b) for b in g.bonds])}')
    return "".join(parts) + "}\n"


def graph_from_json(text: str) -> AtomGraph:
    obj = json.loads(text)
    atoms = []
    for a in obj["atoms"]:
        flags = a.get("flags", {})
        atoms.append(Atom(
            element=vocab.ATOMIC_NUMBER[a["element"]],
            atom_name_id=vocab.atom_name_id(a.get("name", vocab.MISC)),
            residue_id=vocab.residue_id(a.get("residue", vocab.MISC)),
            chain_index=int(a.get("chain", 0)),
            residue_index=int(a.get("residue_index", 0)),
            is_backbone=bool(flags.get("backbone", False)),
            is_phosphate_or_ca=bool(flags.get("phos_or_ca", False)),
        ))
    coords = np.array(obj["coords"], dtype=np.float64).reshape(-1, 3)
    bonds = [(int(i), int(j), float(o)) for i, j, o in obj.get("bonds", [])]
    return AtomGraph(atoms, coords, [tuple(e) for e in obj["edges"]], obj["modality"], bonds)


def save_graph(g: AtomGraph, path) -> None:
    Path(path).write_text(graph_to_json(g))


def load_graph(path) -> AtomGraph:
    return graph_from_json(Path(path).read_text())
