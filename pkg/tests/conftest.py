import numpy as np
import pytest

from derender3d.geometry import Camera
from derender3d.meshes import MeshLibrary, load_mesh_library


@pytest.fixture(scope="session")
def library() -> MeshLibrary:
    return load_mesh_library("builtin")


@pytest.fixture(scope="session")
def bench_camera() -> Camera:
    from derender3d.bench import BENCH_CAMERA

    return BENCH_CAMERA


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
