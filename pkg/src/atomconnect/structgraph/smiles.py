"""SMILES subset parser producing heavy-atom graphs.

Supported: organic-subset atoms (B C N O P S F Cl Br I), aromatic b c n o p s,
bracket atoms with an explicit element plus optional H count and a single
charge sign (optionally followed by a digit), bonds ``- = # :``, ``.``,
branches, and ring closures (single digit or ``%nn``). Stereochemistry,
isotopes and atom classes are rejected.
"""

from __future__ import annotations

from .graph import Atom, AtomGraph
from .vocab import ATOMIC_NUMBER, MOLECULE_RESIDUE, atom_name_id, residue_id


class SmilesError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.reason = message
        self.offset = offset


ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC = {"b", "c", "n", "o", "p", "s"}
BRACKET_AROMATIC = AROMATIC | {"se", "as"}
BOND_ORDER = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}


def _bracket(text: str, start: int) -> tuple[str, int, bool]:
    """Parse ``[...]`` beginning at ``start``; return (symbol, end, aromatic)."""
    end = text.find("]", start)
    if end < 0:
        raise SmilesError("unclosed bracket atom", start)
    body = text[start + 1:end]
    pos = 0
    if body[:1].isdigit():
        raise SmilesError("isotopes not supported", start + 1)
    two, one = body[:2], body[:1]
    if len(two) == 2 and two in BRACKET_AROMATIC:
        sym, aromatic = two, True
    elif len(two) == 2 and two in ATOMIC_NUMBER:
        sym, aromatic = two, False
    elif one in ATOMIC_NUMBER:
        sym, aromatic = one, False
    elif one in AROMATIC:
        sym, aromatic = one, True
    else:
        raise SmilesError(f"unknown atom symbol {body!r}", start + 1)
    pos = len(sym)
    rest = body[pos:]
    if "@" in rest:
        raise SmilesError("stereochemistry not supported", start + 1 + pos + rest.index("@"))
    if ":" in rest:
        raise SmilesError("atom classes not supported", start + 1 + pos + rest.index(":"))
    i = 0
    if rest[i:i + 1] == "H":
        i += 1
        if rest[i:i + 1].isdigit():
            i += 1
    if rest[i:i + 1] in ("+", "-"):
        i += 1
        if rest[i:i + 1].isdigit():
            i += 1
    if i != len(rest):
        raise SmilesError("unsupported bracket atom content", start + 1 + pos + i)
    return sym, end + 1, aromatic


def _element(sym: str) -> int:
    return ATOMIC_NUMBER[sym.capitalize() if len(sym) == 2 else sym.upper()]


def parse_smiles(text: str) -> AtomGraph:
    """Parse ``text`` into a molecule AtomGraph without coordinates."""
    if not text:
        raise SmilesError("empty SMILES", 0)
    atoms: list[Atom] = []
    bonds: dict[tuple[int, int], float] = {}
    aromatic: list[bool] = []
    prev: int | None = None
    pending: tuple[float, int] | None = None  # bond order and its offset
    branches: list[tuple[int | None, int]] = []
    rings: dict[int, tuple[int, float | None, int]] = {}
    mol_res = residue_id(MOLECULE_RESIDUE)

    def add_bond(i, j, order, offset):
        key = (min(i, j), max(i, j))
        if i == j or key in bonds:
            raise SmilesError("duplicate or self bond", offset)
        bonds[key] = order

    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        start = i
        sym = None
        if ch == "[":
            sym, i, arom = _bracket(text, i)
        elif text[i:i + 2] in ("Cl", "Br"):
            sym, arom, i = text[i:i + 2], False, i + 2
        elif ch in ORGANIC:
            sym, arom, i = ch, False, i + 1
        elif ch in AROMATIC:
            sym, arom, i = ch, True, i + 1
        if sym is not None:
            idx = len(atoms)
            atoms.append(Atom(element=_element(sym), atom_name_id=atom_name_id(sym),
                              residue_id=mol_res))
            aromatic.append(arom)
            if prev is not None:
                if pending is not None:
                    order = pending[0]
                else:
                    order = 1.5 if (arom and aromatic[prev]) else 1.0
                add_bond(prev, idx, order, start)
            elif pending is not None:
                raise SmilesError("bond without preceding atom", pending[1])
            pending = None
            prev = idx
            continue
        if ch in BOND_ORDER:
            if pending is not None or prev is None:
                raise SmilesError("misplaced bond symbol", i)
            pending = (BOND_ORDER[ch], i)
            i += 1
        elif ch == ".":
            if pending is not None:
                raise SmilesError("misplaced bond symbol", i)
            prev = None
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesError("branch without preceding atom", i)
            branches.append((prev, i))
            i += 1
        elif ch == ")":
            if not branches:
                raise SmilesError("unbalanced parenthesis", i)
            if pending is not None:
                raise SmilesError("dangling bond", pending[1])
            prev = branches.pop()[0]
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                digits = text[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesError("malformed ring closure", i)
                num, width = int(digits), 3
            else:
                num, width = int(ch), 1
            if prev is None:
                raise SmilesError("ring closure without atom", i)
            order = pending[0] if pending is not None else None
            if num in rings:
                other, other_order, _ = rings.pop(num)
                if order is not None and other_order is not None and order != other_order:
                    raise SmilesError("conflicting ring bond orders", i)
                final = order if order is not None else other_order
                if final is None:
                    final = 1.5 if (aromatic[other] and aromatic[prev]) else 1.0
                add_bond(other, prev, final, i)
            else:
                rings[num] = (prev, order, i)
            pending = None
            i += width
        elif ch in "/\\@":
            raise SmilesError("stereochemistry not supported", i)
        elif ch == "$":
            raise SmilesError("quadruple bonds not supported", i)
        elif ch == "]":
            raise SmilesError("unbalanced bracket", i)
        else:
            raise SmilesError(f"unknown atom symbol {ch!r}", i)
    if branches:
        raise SmilesError("unbalanced parenthesis", branches[-1][1])
    if rings:
        offset = min(r[2] for r in rings.values())
        raise SmilesError("unmatched ring-closure digit", offset)
    if pending is not None:
        raise SmilesError("dangling bond", pending[1])
    if not atoms:
        raise SmilesError("no atoms", 0)
    bond_list = sorted((a, b, o) for (a, b), o in bonds.items())
    return AtomGraph(atoms=atoms, coords=None, edges=[(a, b) for a, b, _ in bond_list],
                     modality="molecule", bonds=bond_list)
