import numpy as np
import pytest

from saddlescape.problems import make_zoo


@pytest.fixture(scope="session")
def zoo():
    return {p.label: p for p in make_zoo()}


@pytest.fixture(scope="session")
def z1(zoo):
    return zoo["Z1"]


@pytest.fixture(scope="session")
def z2(zoo):
    return zoo["Z2"]


def random_points_in_validity_ball(p, n, seed):
    """Seeded ambient samples inside the validity ball; set instances sample
    through their membership oracle."""
    gen = np.random.default_rng(seed)
    man = p.manifold
    pts = []
    if p.kind == "set":
        while len(pts) < n:
            r = man.validity_radius * (0.05 + 0.95 * gen.random())
            pts.append(p.boundary_sampler(gen, r))
        return np.stack(pts)
    d = p.dimension
    z = gen.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radii = man.validity_radius * gen.random(n) ** (1.0 / d)
    return man.anchor + radii[:, None] * z
