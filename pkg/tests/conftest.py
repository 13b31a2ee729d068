from pathlib import Path

import numpy as np
import pytest

from tactsim.geometry import TriangleMesh, load_mesh, voxelize

REPO_ROOT = Path(__file__).resolve().parent.parent
SPHERE_OBJ = str(REPO_ROOT / "assets" / "sphere.obj")
DEFAULT_CONFIG = str(REPO_ROOT / "configs" / "default.yaml")


def cube_mesh(side=1.0, origin=(0.0, 0.0, 0.0)) -> TriangleMesh:
    o = np.asarray(origin, dtype=float)
    v = o + side * np.array([
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
    f = np.array([
        [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
    return TriangleMesh(v, f)


@pytest.fixture(scope="session")
def sphere_mesh():
    return load_mesh(SPHERE_OBJ)


@pytest.fixture(scope="session")
def sphere_cloud(sphere_mesh):
    return voxelize(sphere_mesh, 1.0 / 64.0)


@pytest.fixture
def cube():
    return cube_mesh()
