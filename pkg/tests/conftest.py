import numpy as np
import pytest

from gripperdesign.meshgen import make_box, make_cylinder, make_sphere


@pytest.fixture(scope="session")
def unit_cube():
    return make_box((1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def sphere_r10():
    return make_sphere(10.0, subdivisions=3)


@pytest.fixture(scope="session")
def cylinder_r10_h40():
    return make_cylinder(10.0, 40.0, n_sides=64)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
