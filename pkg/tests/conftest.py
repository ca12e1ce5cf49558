import numpy as np
import pytest

from plapdecay import LatticeSpec, build_lattice, load_edge_list


@pytest.fixture(scope="session")
def z1_r2():
    return build_lattice(LatticeSpec(dim=1, radius=2))


@pytest.fixture(scope="session")
def z1_r10():
    return build_lattice(LatticeSpec(dim=1, radius=10))


@pytest.fixture(scope="session")
def z2_r1():
    return build_lattice(LatticeSpec(dim=2, radius=1))


@pytest.fixture(scope="session")
def z2_r6():
    return build_lattice(LatticeSpec(dim=2, radius=6))


@pytest.fixture(scope="session")
def singleton_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("graphs") / "single.txt"
    path.write_text("root 0\n")
    return str(path)


@pytest.fixture(scope="session")
def singleton(singleton_path):
    return load_edge_list(singleton_path)


@pytest.fixture(scope="session")
def pair_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("graphs") / "pair.txt"
    path.write_text("root 0\n0 1 1.0\n")
    return str(path)


@pytest.fixture(scope="session")
def pair(pair_path):
    return load_edge_list(pair_path)


def indicator(g, label):
    """Field that is 1 at the vertex carrying ``label`` and 0 elsewhere."""
    u = np.zeros(g.n)
    u[g.index_of(label)] = 1.0
    return u
