import pytest

from hesc.grid import Grid2D, PacketSpec, make_packet


@pytest.fixture(scope="session")
def grid64():
    return Grid2D(64, 20.0)


@pytest.fixture(scope="session")
def grid128():
    return Grid2D(128, 40.0)


@pytest.fixture
def gauss_packet(grid64):
    return make_packet(grid64, PacketSpec("gaussian", 1.0))
