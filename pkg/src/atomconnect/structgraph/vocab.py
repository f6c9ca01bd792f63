"""Fixed enumerations for elements, atom names and residues.

Unknown names and residues map to the ``misc`` bucket (index 0).
"""

ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce "
    "Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn "
    "Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl "
    "Mc Lv Ts Og"
).split()

ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}
SYMBOL = {z: sym for sym, z in ATOMIC_NUMBER.items()}
NUM_ELEMENTS = len(ELEMENTS)  # 118
ELEMENT_MASK_ID = NUM_ELEMENTS + 1

MISC = "misc"

_MOLECULE_NAMES = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I",
                   "b", "c", "n", "o", "p", "s", "se", "as", "H", "Si", "Se"]
_PROTEIN_NAMES = [
    "CA", "CB", "CG", "CG1", "CG2", "CD", "CD1", "CD2", "CE", "CE1", "CE2", "CE3",
    "CZ", "CZ2", "CZ3", "CH2", "ND1", "ND2", "NE", "NE1", "NE2", "NH1", "NH2", "NZ",
    "OD1", "OD2", "OE1", "OE2", "OG", "OG1", "OH", "SD", "SG", "OXT",
]
_NUCLEIC_NAMES = [
    "OP1", "OP2", "OP3", "O5'", "C5'", "C4'", "O4'", "C3'", "O3'", "C2'", "O2'", "C1'",
    "N9", "C8", "N7", "C5", "C6", "N6", "N1", "C2", "N3", "C4", "O6", "N2", "O2", "N4",
    "O4", "C7",
]

ATOM_NAMES: tuple[str, ...] = tuple(
    dict.fromkeys([MISC] + _MOLECULE_NAMES + _PROTEIN_NAMES + _NUCLEIC_NAMES)
)
ATOM_NAME_ID = {name: i for i, name in enumerate(ATOM_NAMES)}
ATOM_NAME_MASK_ID = len(ATOM_NAMES)

AMINO_ACIDS = ("ALA ARG ASN ASP CYS GLN GLU GLY HIS ILE LEU LYS MET PHE PRO SER THR "
               "TRP TYR VAL").split()
DNA_RESIDUES = ("DA", "DC", "DG", "DT")
RNA_RESIDUES = ("A", "C", "G", "U")
MOLECULE_RESIDUE = "MOL"

RESIDUES: tuple[str, ...] = (MISC, MOLECULE_RESIDUE) + tuple(AMINO_ACIDS) + DNA_RESIDUES + RNA_RESIDUES
RESIDUE_ID = {name: i for i, name in enumerate(RESIDUES)}

PROTEIN_BACKBONE = frozenset({"N", "CA", "C", "O"})
NUCLEIC_BACKBONE = frozenset({"P", "OP1", "OP2", "OP3", "O1P", "O2P", "O5'", "C5'", "C4'",
                              "O4'", "C3'", "O3'", "C2'", "O2'", "C1'"})
PHOSPHATE = frozenset({"P", "OP1", "OP2", "OP3", "O1P", "O2P"})

MODALITIES = ("molecule", "protein", "dna", "rna")


def atom_name_id(name: str) -> int:
    return ATOM_NAME_ID.get(name, 0)


def residue_id(name: str) -> int:
    return RESIDUE_ID.get(name, 0)
