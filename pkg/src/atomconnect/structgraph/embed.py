"""Deterministic 3D layout for SMILES graphs.

A seeded spring model: bonds pull toward element/order dependent lengths,
1-3 pairs toward a fixed bend, every other pair is pushed apart below a
clearance radius. Minimized with L-BFGS for a fixed iteration budget, then
centered and rotated onto principal axes.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.optimize import minimize

from .graph import AtomGraph, center
from .vocab import SYMBOL

COVALENT_RADIUS = {"B": 0.84, "C": 0.76, "N": 0.71, "O": 0.66, "F": 0.57, "P": 1.07,
                   "S": 1.05, "Cl": 1.02, "Br": 1.20, "I": 1.39, "Se": 1.20, "As": 1.19,
                   "H": 0.31, "Si": 1.11}
ORDER_FACTOR = {1.0: 1.0, 1.5: 0.92, 2.0: 0.87, 3.0: 0.78}
BOND_MIN, BOND_MAX = 1.05, 1.75
NONBOND_MIN = 1.8
CLEARANCE = 2.6
BEND = np.deg2rad(115.0)
ITERATIONS = 200
MAX_ATTEMPTS = 20


def bond_length(z1: int, z2: int, order: float) -> float:
    r = COVALENT_RADIUS.get(SYMBOL[z1], 0.8) + COVALENT_RADIUS.get(SYMBOL[z2], 0.8)
    return float(np.clip(r * ORDER_FACTOR.get(order, 1.0), BOND_MIN, BOND_MAX))


def _components(n: int, edges) -> int:
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    q.append(v)
    return count


def _pair_terms(g: AtomGraph):
    n = g.num_atoms
    z = g.elements
    bonds = g.bonds or [(i, j, 1.0) for i, j in g.edges]
    target = np.zeros((n, n))
    kind = np.zeros((n, n), dtype=np.int8)  # 1 bond, 2 one-three, 0 other
    adj = [[] for _ in range(n)]
    for i, j, order in bonds:
        length = bond_length(z[i], z[j], order)
        target[i, j] = target[j, i] = length
        kind[i, j] = kind[j, i] = 1
        adj[i].append(j)
        adj[j].append(i)
    for c in range(n):
        nb = adj[c]
        for a_pos, a in enumerate(nb):
            for b in nb[a_pos + 1:]:
                if kind[a, b] == 0:
                    la, lb = target[a, c], target[b, c]
                    kind[a, b] = kind[b, a] = 2
                    target[a, b] = target[b, a] = np.sqrt(la * la + lb * lb - 2 * la * lb * np.cos(BEND))
    iu = np.triu_indices(n, k=1)
    return iu, kind[iu], target[iu]


def _energy(flat, n, iu, kind, target):
    x = flat.reshape(n, 3)
    diff = x[iu[0]] - x[iu[1]]
    d = np.sqrt((diff * diff).sum(-1) + 1e-12)
    bond = kind == 1
    bend = kind == 2
    other = kind == 0
    r = np.zeros_like(d)
    r[bond] = 10.0 * (d[bond] - target[bond])
    r[bend] = 2.0 * (d[bend] - target[bend])
    short = other & (d < CLEARANCE)
    r[short] = 5.0 * (d[short] - CLEARANCE)
    energy = float((r * r).sum())
    dd = 2.0 * r * np.where(bond, 10.0, np.where(bend, 2.0, np.where(short, 5.0, 0.0)))
    gvec = (dd / d)[:, None] * diff
    grad = np.zeros((n, 3))
    np.add.at(grad, iu[0], gvec)
    np.add.at(grad, iu[1], -gvec)
    return energy, grad.reshape(-1)


def _initial(g: AtomGraph, rng: np.random.Generator) -> np.ndarray:
    n = g.num_atoms
    adj = [[] for _ in range(n)]
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    x = np.zeros((n, 3))
    placed = [False] * n
    placed[0] = True
    q = deque([0])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if placed[v]:
                continue
            best, best_clear = None, -1.0
            for _ in range(12):
                d = rng.normal(size=3)
                cand = x[u] + 1.5 * d / np.linalg.norm(d)
                others = x[[k for k in range(n) if placed[k]]]
                clear = np.min(np.linalg.norm(others - cand, axis=1))
                if clear > best_clear:
                    best, best_clear = cand, clear
            x[v] = best
            placed[v] = True
            q.append(v)
    return x


def _principal_axes(x: np.ndarray) -> np.ndarray:
    x = center(x)
    if x.shape[0] < 2:
        return x
    _, vecs = np.linalg.eigh(x.T @ x)
    vecs = vecs[:, ::-1]
    y = x @ vecs
    for k in range(3):
        col = y[:, k]
        # deterministic sign: largest-magnitude coordinate positive
        j = int(np.argmax(np.abs(col)))
        if col[j] < 0:
            y[:, k] = -col
    # sign fixing may reflect; stereochemistry is never encoded so this is harmless
    return y


def layout_ok(g: AtomGraph, x: np.ndarray) -> bool:
    n = g.num_atoms
    bonded = np.zeros((n, n), dtype=bool)
    for i, j in g.edges:
        bonded[i, j] = bonded[j, i] = True
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    iu = np.triu_indices(n, k=1)
    db, bb = d[iu], bonded[iu]
    return bool(((db[bb] >= 1.0) & (db[bb] <= 1.8)).all() and (db[~bb] >= NONBOND_MIN).all())


def embed_molecule_coords(g: AtomGraph, seed: int = 0) -> AtomGraph:
    """Return a copy of ``g`` with deterministic, centered 3D coordinates."""
    n = g.num_atoms
    if n == 0:
        raise ValueError("empty molecule")
    if _components(n, g.edges) > 1:
        raise ValueError("disconnected molecule")
    if n == 1:
        return g.with_coords(np.zeros((1, 3)))
    iu, kind, target = _pair_terms(g)
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        x0 = _initial(g, rng)
        res = minimize(_energy, x0.reshape(-1), args=(n, iu, kind, target), jac=True,
                       method="L-BFGS-B", options={"maxiter": ITERATIONS, "gtol": 1e-10})
        x = res.x.reshape(n, 3)
        if layout_ok(g, x):
            return g.with_coords(_principal_axes(x))
    raise RuntimeError(f"layout failed after {MAX_ATTEMPTS} attempts")
