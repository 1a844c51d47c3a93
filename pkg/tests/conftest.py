import numpy as np
import pytest
from hypothesis import settings

from pocodom.geometry import RigidTransform, rotation_about
from pocodom.synth import World

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_transform(rng, max_angle=np.pi, max_t=10.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    return RigidTransform(rotation_about(axis, angle), rng.uniform(-max_t, max_t, 3))


def box_surface(lo, hi, spacing):
    """Points sampled on the faces of an axis-aligned box on a regular lattice."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pts = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        u = np.arange(lo[others[0]], hi[others[0]] + 1e-9, spacing)
        v = np.arange(lo[others[1]], hi[others[1]] + 1e-9, spacing)
        U, V = np.meshgrid(u, v, indexing="ij")
        for value in (lo[axis], hi[axis]):
            face = np.zeros((U.size, 3))
            face[:, axis] = value
            face[:, others[0]] = U.ravel()
            face[:, others[1]] = V.ravel()
            pts.append(face)
    return np.unique(np.vstack(pts), axis=0)


def structured_scene(spacing=0.2):
    """Ground with two perpendicular walls and a pillar, for registration tests."""
    g = np.arange(-10.0, 10.0 + 1e-9, spacing)
    X, Y = np.meshgrid(g, g, indexing="ij")
    ground = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, -1.7)])
    h = np.arange(-1.7, 3.0 + 1e-9, spacing)
    A, H = np.meshgrid(g, h, indexing="ij")
    wall_x = np.column_stack([np.full(A.size, 8.0), A.ravel(), H.ravel()])
    wall_y = np.column_stack([A.ravel(), np.full(A.size, 6.0), H.ravel()])
    pillar = box_surface([-3.0, -4.0, -1.7], [-2.0, -3.0, 2.0], spacing)
    pts = np.vstack([ground, wall_x, wall_y, pillar])
    return pts[pts[:, 2] >= -1.7 - 1e-9]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def street_world():
    w = World()
    w.add_box([-30.0, 6.0, 0.0], [40.0, 12.0, 9.0])
    w.add_box([-30.0, -13.0, 0.0], [5.0, -7.0, 12.0])
    w.add_box([9.0, -13.0, 0.0], [40.0, -7.0, 7.0])
    w.add_box([20.0, -3.0, 0.0], [24.0, 3.0, 4.0])
    return w


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS):
            terminalreporter.write_line(line)
