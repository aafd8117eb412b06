import numpy as np
import pytest

from geotopics.tensor import CPModel, SparseTensor3, build_coo_arrays


def random_tensor(rng: np.random.Generator, dims, density: float = 0.4) -> SparseTensor3:
    """Random sparse nonnegative tensor with at least one entry."""
    cells = int(np.prod(dims))
    nnz = max(1, int(cells * density))
    flat = rng.choice(cells, size=nnz, replace=False)
    coords = np.stack(np.unravel_index(flat, dims), axis=1)
    values = rng.uniform(0.1, 3.0, size=nnz)
    return build_coo_arrays(coords, values, dims)


def random_model(rng: np.random.Generator, dims, rank: int, unit_weights: bool = True) -> CPModel:
    factors = tuple(rng.uniform(0.0, 1.0, size=(d, rank)) for d in dims)
    weights = np.ones(rank) if unit_weights else rng.uniform(0.5, 2.0, size=rank)
    return CPModel(weights, factors)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
