import numpy as np
import pytest

from balloonseg.phantom import PhantomSpec, generate_phantom


@pytest.fixture(scope="session")
def small_sphere_phantom():
    """64^3 noise-free sphere, radius 10 mm: fast enough for unit tests."""
    spec = PhantomSpec(
        dims=(64, 64, 64),
        center_vox=(32.0, 32.0, 32.0),
        radii_mm=(10.0, 10.0, 10.0),
        noise_sigma=0.0,
        rng_seed=7,
    )
    return (spec,) + generate_phantom(spec)


@pytest.fixture(scope="session")
def small_noisy_phantom():
    spec = PhantomSpec(
        dims=(64, 64, 64),
        center_vox=(32.0, 32.0, 32.0),
        radii_mm=(10.0, 10.0, 10.0),
        noise_sigma=8.0,
        rng_seed=11,
    )
    return (spec,) + generate_phantom(spec)


def random_volume(kind: str, dims=(5, 4, 3), seed=0):
    """Random volume whose scalars are exactly representable in ``kind``."""
    from balloonseg.volume import Volume3D

    rng = np.random.default_rng(seed)
    if kind == "float32":
        scalars = rng.normal(100.0, 30.0, size=dims).astype(np.float32).astype(np.float64)
    else:
        info = np.iinfo({"uint8": np.uint8, "int16": np.int16, "uint16": np.uint16}[kind])
        scalars = rng.integers(info.min, info.max, size=dims, endpoint=True).astype(np.float64)
    return Volume3D(scalars=scalars, spacing_mm=(0.5, 1.0, 2.0), value_kind=kind)
