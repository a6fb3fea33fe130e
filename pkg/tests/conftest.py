import json
from pathlib import Path

import numpy as np
import pytest

from cbohf.molecule import Molecule, read_xyz

DATA = Path(__file__).parent / "data"
GEOM = Path(__file__).resolve().parents[1] / "src" / "cbohf" / "data"


@pytest.fixture(scope="session")
def reference():
    return json.loads((DATA / "reference.json").read_text())


@pytest.fixture(scope="session")
def hf_mol():
    return read_xyz(GEOM / "hf.xyz")


@pytest.fixture(scope="session")
def nh3_mol():
    return read_xyz(GEOM / "nh3.xyz")


@pytest.fixture(scope="session")
def h2_mol():
    return Molecule.from_arrays(["H", "H"], [[0.0, 0.0, 0.0], [0.0, 0.0, 1.4]])


@pytest.fixture(scope="session")
def water_fixture():
    d = np.load(DATA / "h2o_sto3g.npz")
    mol = Molecule.from_arrays(["O", "H", "H"], d["coords"])
    return mol, d


@pytest.fixture(scope="session")
def hf_ccpvdz_fixture():
    d = np.load(DATA / "hf_ccpvdz.npz")
    mol = Molecule.from_arrays(["F", "H"], d["coords"])
    return mol, d


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
