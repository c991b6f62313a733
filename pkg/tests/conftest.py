import numpy as np
import pytest

from bitcol.workload import Layer, LayerShape, Network


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_layer(name, rng=None, values=None, **shape_kw):
    shape = LayerShape(**shape_kw)
    if values is None:
        values = rng.integers(-127, 128, size=shape.weight_dims, dtype=np.int8)
    else:
        values = np.asarray(values, dtype=np.int8).reshape(shape.weight_dims)
    return Layer(name, shape, values)


def make_network(name, layers):
    return Network(name, layers)


# layer shapes used across the mapper and acceptance suites: early conv,
# late conv, depthwise and pointwise, parameterized from the usual
# ResNet18 / MobileNetV2 dimensions
CANONICAL_SHAPES = {
    "early": LayerShape(k=64, c=3, fy=7, fx=7, ox=112, oy=112, stride=2),
    "late": LayerShape(k=512, c=512, fy=3, fx=3, ox=7, oy=7),
    "depthwise": LayerShape(k=32, c=1, fy=3, fx=3, ox=112, oy=112, kind="depthwise-conv"),
    "pointwise": LayerShape(k=16, c=32, fy=1, fx=1, ox=112, oy=112, kind="pointwise-conv"),
}


@pytest.fixture
def small_net(rng):
    return make_network("smallnet", [
        make_layer("conv1", rng, k=4, c=8, fy=3, fx=3, ox=8, oy=8),
        make_layer("conv2", rng, k=8, c=8, fy=1, fx=1, ox=8, oy=8, kind="pointwise-conv"),
    ])
