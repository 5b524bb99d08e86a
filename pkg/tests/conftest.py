import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def lib_a_bytes() -> bytes:
    return (FIXTURES / "lib_a.xmi").read_bytes()


@pytest.fixture(scope="session")
def topo1_bytes() -> bytes:
    return (FIXTURES / "topo1.rdf").read_bytes()


@pytest.fixture()
def lib_a(lib_a_bytes):
    from cimgateway.cim_library import load_library

    return load_library(lib_a_bytes)


@pytest.fixture()
def topo1(topo1_bytes):
    from cimgateway.rdf_topology import parse_topology

    return parse_topology(topo1_bytes)
