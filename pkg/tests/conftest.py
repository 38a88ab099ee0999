import numpy as np
import pytest

from locbox.model import Instance


def random_spd(m: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((m, m))
    return scale * (a @ a.T + 1e-3 * np.eye(m))


def random_instance(
    rng: np.random.Generator, m: int = 3, d: int = 2, sigma_scale: float = 0.05
) -> Instance:
    """An arbitrary valid instance, not tied to the generation protocol."""
    anchors = rng.uniform(-1.0, 1.0, size=(m, d))
    x = rng.uniform(-1.0, 1.0, size=d)
    dist = np.linalg.norm(x - anchors, axis=1)
    y = dist + rng.uniform(-0.2, 0.2, size=m)
    y = np.maximum(y, 0.0)
    return Instance(dim=d, anchors=anchors, y=y, sigma=random_spd(m, rng, sigma_scale))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
