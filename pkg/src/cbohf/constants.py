"""Physical constants and unit conversions (CODATA 2018)."""

HARTREE_TO_CM = 219474.6313632
BOHR_TO_ANGSTROM = 0.529177210903
ANGSTROM_TO_BOHR = 1.0 / BOHR_TO_ANGSTROM
AMU_TO_ME = 1822.888486209
BOHR_TO_NM = BOHR_TO_ANGSTROM / 10.0

# most abundant isotope masses in amu
ISOTOPE_MASS = {
    "H": 1.00782503223,
    "He": 4.00260325413,
    "Li": 7.0160034366,
    "Be": 9.012183065,
    "B": 11.00930536,
    "C": 12.0,
    "N": 14.00307400443,
    "O": 15.99491461957,
    "F": 18.99840316273,
    "Ne": 19.9924401762,
}

ELEMENTS = ["H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne"]
ATOMIC_NUMBER = {sym: i + 1 for i, sym in enumerate(ELEMENTS)}


def cm_to_hartree(x):
    return x / HARTREE_TO_CM


def hartree_to_cm(x):
    return x * HARTREE_TO_CM


def normalize_symbol(sym: str) -> str:
    s = sym.strip()
    s = s[0].upper() + s[1:].lower()
    if s not in ATOMIC_NUMBER:
        raise ValueError(f"unsupported element {sym!r}")
    return s
