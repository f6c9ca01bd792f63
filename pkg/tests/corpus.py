"""Hand-verified parser corpus shared by structgraph and acceptance tests."""

# (smiles, heavy atoms, bonds) -- counted by hand
SMILES_CASES = [
    ("C", 1, 0),
    ("CC", 2, 1),
    ("CCO", 3, 2),
    ("C=C", 2, 1),
    ("C#N", 2, 1),
    ("O=C=O", 3, 2),
    ("CC(=O)O", 4, 3),
    ("c1ccccc1", 6, 6),
    ("C1CCCCC1", 6, 6),
    ("C%10CCCCC%10", 6, 6),
    ("CC(C)(C)C", 5, 4),
    ("c1ccncc1", 6, 6),
    ("c1ccc2ccccc2c1", 10, 11),
    ("CC(=O)Oc1ccccc1C(=O)O", 13, 13),
    ("CN1C=NC2=C1C(=O)N(C(=O)N2C)C", 14, 15),
    ("ClC(Cl)(Cl)Cl", 5, 4),
    ("OCC(O)C(O)C(O)C(O)C=O", 12, 11),
    ("[NH4+]", 1, 0),
    ("[O-]C(=O)C", 4, 3),
    ("c1cc[nH]c1", 5, 5),
]

# Five PDB fragments, columns laid out by hand:
# name 13-16, resName 18-20, chain 22, resSeq 23-26, x/y/z 31-54, element 77-78.
GLY = """\
ATOM      1  N   GLY A   1      -1.195   0.256   0.000  1.00  0.00           N
ATOM      2  CA  GLY A   1       0.000   1.083   0.000  1.00  0.00           C
ATOM      3  C   GLY A   1       1.195   0.256   0.000  1.00  0.00           C
ATOM      4  O   GLY A   1       1.195  -0.974   0.000  1.00  0.00           O
"""
ALA_SER = """\
HEADER    TEST PEPTIDE
ATOM      1  N   ALA A   5       0.000   0.000   0.000  1.00  0.00           N
ATOM      2  CA  ALA A   5       1.458   0.000   0.000  1.00  0.00           C
ATOM      3  CB  ALA A   5       1.988   1.420   0.000  1.00  0.00           C
ATOM      4  N   SER B   6       2.000  -1.300   0.500  1.00  0.00           N
ATOM      5  OG  SER B   6       3.100  -2.000   1.000  1.00  0.00           O
HETATM    6  O   HOH A 101       9.000   9.000   9.000  1.00  0.00           O
END
"""
# element columns left blank: inferred from the atom name
NO_ELEMENT = """\
ATOM      1  N   MET A   1      11.104   6.134  -6.504
ATOM      2  CA  MET A   1      11.639   6.071  -5.147
ATOM      3  SD  MET A   1      13.122   8.947  -3.060
"""
DNA_FRAG = """\
ATOM      1  P    DA A   1       8.900   0.000   2.200  1.00  0.00           P
ATOM      2  OP1  DA A   1       9.600  -1.000   2.900  1.00  0.00           O
ATOM      3  C1'  DA A   1       5.500   1.600   0.000  1.00  0.00           C
ATOM      4  N9   DA A   1       4.200   1.200  -0.200  1.00  0.00           N
"""
RNA_FRAG = """\
ATOM      1  O2'   U R   7       6.000  -0.400   1.600  1.00  0.00           O
ATOM      2  P     U R   8      14.000   0.000   2.200  1.00  0.00           P
"""

# expected per-atom fields: (name, residue, chain_index, residue_index, element, backbone, special)
PDB_CASES = [
    (GLY, "protein", [("N", "GLY", 0, 0, 7, True, False), ("CA", "GLY", 0, 0, 6, True, True),
                      ("C", "GLY", 0, 0, 6, True, False), ("O", "GLY", 0, 0, 8, True, False)],
     [[-1.195, 0.256, 0.0], [0.0, 1.083, 0.0], [1.195, 0.256, 0.0], [1.195, -0.974, 0.0]]),
    (ALA_SER, "protein", [("N", "ALA", 0, 0, 7, True, False), ("CA", "ALA", 0, 0, 6, True, True),
                          ("CB", "ALA", 0, 0, 6, False, False), ("N", "SER", 1, 1, 7, True, False),
                          ("OG", "SER", 1, 1, 8, False, False)],
     [[0.0, 0.0, 0.0], [1.458, 0.0, 0.0], [1.988, 1.42, 0.0], [2.0, -1.3, 0.5], [3.1, -2.0, 1.0]]),
    (NO_ELEMENT, "protein", [("N", "MET", 0, 0, 7, True, False), ("CA", "MET", 0, 0, 6, True, True),
                             ("SD", "MET", 0, 0, 16, False, False)],
     [[11.104, 6.134, -6.504], [11.639, 6.071, -5.147], [13.122, 8.947, -3.060]]),
    (DNA_FRAG, "dna", [("P", "DA", 0, 0, 15, True, True), ("OP1", "DA", 0, 0, 8, True, True),
                       ("C1'", "DA", 0, 0, 6, True, False), ("N9", "DA", 0, 0, 7, False, False)],
     [[8.9, 0.0, 2.2], [9.6, -1.0, 2.9], [5.5, 1.6, 0.0], [4.2, 1.2, -0.2]]),
    (RNA_FRAG, "rna", [("O2'", "U", 0, 0, 8, True, False), ("P", "U", 0, 1, 15, True, True)],
     [[6.0, -0.4, 1.6], [14.0, 0.0, 2.2]]),
]

# (kind, input, expected message fragment)
MALFORMED = [
    ("smiles", "C(", "unbalanced parenthesis at offset 1"),
    ("smiles", "C1CC", "unmatched ring-closure digit at offset 1"),
    ("smiles", "CXC", "unknown atom symbol 'X' at offset 1"),
    ("pdb", "ATOM      1  N   GLY A   1      -1.195   0.256\n", "line 1: record shorter than coordinate columns"),
    ("pdb", "ATOM      1  N   GLY A   1      -1.195   0.2x6   0.000\n", "line 1: unparsable coordinate"),
    ("pdb", "HETATM    1  O   HOH A 101       9.000   9.000   9.000  1.00  0.00           O\n",
     "no ATOM records"),
]
