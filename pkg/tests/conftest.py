import numpy as np
import pytest

from prunelab.models import LayerSpec, build_network, layer_sizes
from prunelab.pruning import full_mask


@pytest.fixture
def tiny_specs():
    return (
        LayerSpec("dense", 3, 4),
        LayerSpec("dense", 4, 2, is_output=True),
    )


@pytest.fixture
def tiny_net(tiny_specs):
    params = build_network(tiny_specs, seed=0)
    return params, full_mask(layer_sizes(tiny_specs))


def random_batch(specs, n, seed, *, image_shape=None):
    """A batch matching the first layer's fan-in, int labels for the output."""
    rng = np.random.default_rng(seed)
    if image_shape is not None:
        x = rng.normal(size=(n, int(np.prod(image_shape))))
    else:
        x = rng.normal(size=(n, specs[0].fan_in))
    y = rng.integers(0, specs[-1].fan_out, size=n)
    return x, y
