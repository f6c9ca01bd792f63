"""Random inputs shared by several test modules."""

import numpy as np
from scipy.spatial.transform import Rotation

from atomconnect.structgraph import AtomGraph, build_radius_graph
from atomconnect.structgraph.graph import Atom

COMMON = [1, 6, 7, 8, 15, 16]


def random_graph(rng: np.random.Generator, n: int, box: float = 6.0, cutoff: float = 5.0) -> AtomGraph:
    atoms = [Atom(int(rng.choice(COMMON)), residue_id=0) for _ in range(n)]
    coords = rng.uniform(-box / 2, box / 2, size=(n, 3))
    return build_radius_graph(AtomGraph(atoms, coords, [], "molecule"), cutoff)


def random_motion(rng: np.random.Generator, shift: float = 20.0):
    rot = Rotation.random(random_state=rng).as_matrix()
    return rot, rng.uniform(-shift, shift, size=3)
