"""LightPneumoNet architecture: layer descriptors, shape/parameter
introspection, initialization and whole-network forward/backward passes."""
from dataclasses import dataclass, field

import numpy as np

from . import ops, rng as rngmod
from .errors import ArchitectureError, ShapeError, StateError
from .tensor import as_dtype, flatten_batch


@dataclass(frozen=True)
class Conv:
    name: str
    filters: int
    kernel: int
    activation: str = "relu"


@dataclass(frozen=True)
class MaxPool:
    name: str
    pool: int


@dataclass(frozen=True)
class Flatten:
    name: str = "flatten"


@dataclass(frozen=True)
class Dense:
    name: str
    units: int
    activation: str  # "relu" or "softmax"


@dataclass(frozen=True)
class Dropout:
    name: str
    rate: float


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple
    layers: tuple

    @property
    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, Conv)]

    @property
    def dense_layers(self):
        return [l for l in self.layers if isinstance(l, Dense)]

    @property
    def pool_layers(self):
        return [l for l in self.layers if isinstance(l, MaxPool)]

    @property
    def trainable_layers(self):
        return [l for l in self.layers if isinstance(l, (Conv, Dense))]


def _four_block_stack(name, input_shape, filters, kernels, pools, dense_units, dropout):
    layers = []
    for block in range(4):
        for k in range(2):
            i = 2 * block + k
            layers.append(Conv(f"conv{block + 1}_{k + 1}", filters[i], kernels[i]))
        layers.append(MaxPool(f"pool{block + 1}", pools[block]))
    layers += [
        Flatten("flatten"),
        Dense("dense1", dense_units, "relu"),
        Dropout("dropout", dropout),
        Dense("dense2", 2, "softmax"),
    ]
    return ModelSpec(name, tuple(input_shape), tuple(layers))


def build_lightpneumonet(input_shape=(224, 224, 1)):
    """The reference 16-layer stack: four conv-conv-pool blocks and a dense head."""
    return _four_block_stack(
        "lightpneumonet",
        input_shape,
        filters=(16, 16, 32, 32, 64, 64, 128, 128),
        kernels=(5, 5, 5, 5, 3, 3, 3, 3),
        pools=(3, 3, 2, 2),
        dense_units=128,
        dropout=0.2,
    )


def build_reduced(input_size=20, filters=(2, 2, 3, 3, 4, 4, 4, 4), dense_units=6, dropout=0.2,
                  name="reduced"):
    """A small stack with the same layer types for gradient checks and fast tests.

    Spatial chain at the default 20x20 input:
    18, 16, pool 8, 7, 6, pool 3, 2, 2, pool 2, 2, 2, pool 2; flatten 16.
    """
    return _four_block_stack(
        name,
        (input_size, input_size, 1),
        filters=tuple(filters),
        kernels=(3, 3, 2, 2, 2, 1, 1, 1),
        pools=(2, 2, 1, 1),
        dense_units=dense_units,
        dropout=dropout,
    )


def build_mini(input_size=20):
    """Reference filter widths and dense head on the reduced spatial chain."""
    return build_reduced(
        input_size, filters=(16, 16, 32, 32, 64, 64, 128, 128), dense_units=128, dropout=0.2,
        name="mini",
    )


KNOWN_SPECS = {
    "lightpneumonet": build_lightpneumonet,
    "mini": build_mini,
    "reduced": build_reduced,
}


def build_spec(architecture="lightpneumonet", input_size=None):
    """Look up a named architecture, optionally at a different square input size."""
    try:
        build = KNOWN_SPECS[architecture]
    except KeyError:
        raise ArchitectureError(
            f"unknown architecture {architecture!r}; choose from {sorted(KNOWN_SPECS)}"
        ) from None
    if input_size is None:
        return build()
    if architecture == "lightpneumonet":
        return build((input_size, input_size, 1))
    return build(input_size=input_size)


def shape_trace(spec):
    """List of ``(layer name, output shape)`` with the input as the first row."""
    h, w, c = spec.input_shape
    shape = (h, w, c)
    trace = [("input", shape)]
    for layer in spec.layers:
        if isinstance(layer, Conv):
            h, w, c = shape
            if h < layer.kernel or w < layer.kernel:
                raise ArchitectureError(
                    f"{layer.name}: {h}x{w} input is smaller than the {layer.kernel}x{layer.kernel} kernel"
                )
            shape = (h - layer.kernel + 1, w - layer.kernel + 1, layer.filters)
        elif isinstance(layer, MaxPool):
            h, w, c = shape
            p = layer.pool
            if h < p or w < p:
                raise ArchitectureError(f"{layer.name}: {h}x{w} input is smaller than pool {p}")
            shape = ((h - p) // p + 1, (w - p) // p + 1, c)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            shape = (layer.units,)
        elif isinstance(layer, Dropout):
            pass
        else:
            raise ArchitectureError(f"unknown layer descriptor {layer!r}")
        trace.append((layer.name, shape))
    return trace


def param_shapes(spec):
    """Ordered ``(parameter name, shape)`` pairs, e.g. ``('conv1_1/kernel', (5, 5, 1, 16))``."""
    shapes = []
    for (_, in_shape), layer in zip(shape_trace(spec), spec.layers):
        if isinstance(layer, Conv):
            cin = in_shape[2]
            shapes.append((f"{layer.name}/kernel", (layer.kernel, layer.kernel, cin, layer.filters)))
            shapes.append((f"{layer.name}/bias", (layer.filters,)))
        elif isinstance(layer, Dense):
            shapes.append((f"{layer.name}/weights", (in_shape[0], layer.units)))
            shapes.append((f"{layer.name}/bias", (layer.units,)))
    return shapes


@dataclass
class ParamCounts:
    per_layer: dict
    total: int

    def nbytes(self, bytes_per_param=4):
        return self.total * bytes_per_param


def count_params(spec):
    per_layer = {}
    for name, shape in param_shapes(spec):
        layer = name.split("/")[0]
        per_layer[layer] = per_layer.get(layer, 0) + int(np.prod(shape))
    return ParamCounts(per_layer, sum(per_layer.values()))


def glorot_limit(shape):
    if len(shape) == 4:
        kh, kw, cin, cout = shape
        fan_in, fan_out = kh * kw * cin, kh * kw * cout
    else:
        fan_in, fan_out = shape
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(spec, seed, precision="single"):
    """Glorot-uniform weights and zero biases; fully determined by ``seed``."""
    dtype = as_dtype(precision)
    params = {}
    for i, (name, shape) in enumerate(param_shapes(spec)):
        if name.endswith("/bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            limit = glorot_limit(shape)
            g = rngmod.stream(seed, rngmod.INIT, i)
            params[name] = g.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def cast_params(params, precision):
    dtype = as_dtype(precision)
    return {k: v.astype(dtype) for k, v in params.items()}


@dataclass
class ForwardCache:
    spec: ModelSpec
    params: dict
    mode: str
    batch_size: int
    entries: list = field(default_factory=list)
    consumed: bool = False


def model_forward(params, spec, batch, mode="infer", rng=None):
    """Run the network on ``batch`` ([N, H, W, C]).

    ``rng`` feeds train-mode dropout: one generator, or one per sample.
    Returns ``(probs [N, 2], cache)``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(spec.input_shape):
        raise ShapeError(
            f"batch shape {batch.shape} does not match model input [N, {', '.join(map(str, spec.input_shape))}]"
        )
    cache = ForwardCache(spec, params, mode, batch.shape[0])
    x = np.ascontiguousarray(batch)
    for layer in spec.layers:
        if isinstance(layer, Conv):
            conv = ops.ConvLayer(params[f"{layer.name}/kernel"], params[f"{layer.name}/bias"])
            a = ops.relu_forward(ops.conv2d_forward(x, conv))
            cache.entries.append((layer, x, a))
            x = a
        elif isinstance(layer, MaxPool):
            out, index = ops.maxpool_forward(x, ops.MaxPoolSpec(layer.pool))
            cache.entries.append((layer, index, None))
            x = out
        elif isinstance(layer, Flatten):
            cache.entries.append((layer, x.shape, None))
            x = flatten_batch(x)
        elif isinstance(layer, Dense):
            dense = ops.DenseLayer(params[f"{layer.name}/weights"], params[f"{layer.name}/bias"])
            z = ops.dense_forward(x, dense)
            if layer.activation == "relu":
                a = ops.relu_forward(z)
            else:
                a = z  # logits; softmax is applied once at the end
            cache.entries.append((layer, x, a))
            x = a
        elif isinstance(layer, Dropout):
            dspec = ops.DropoutSpec(layer.rate, mode)
            x, mask = ops.dropout(x, dspec, rng)
            cache.entries.append((layer, mask, dspec))
    probs = ops.softmax(x)
    return probs, cache


def model_backward(cache, d_logits):
    """Gradients of every parameter given the loss gradient w.r.t. the logits.

    Per-sample contributions are summed in ascending sample order. A cache
    can be consumed only once.
    """
    if cache is None:
        raise StateError("no forward cache; run model_forward first")
    if cache.consumed:
        raise StateError("forward cache already consumed by a backward pass")
    if d_logits.shape != (cache.batch_size, 2):
        raise ShapeError(f"d_logits shape {d_logits.shape} does not match batch {cache.batch_size}")
    params = cache.params
    grads = {}
    g = d_logits.astype(cache.entries[-1][2].dtype, copy=False)
    first_conv = cache.spec.conv_layers[0].name if cache.spec.conv_layers else None
    for layer, saved, extra in reversed(cache.entries):
        if isinstance(layer, Dense):
            x, a = saved, extra
            if layer.activation == "relu":
                g = ops.relu_backward(a, g)
            dense = ops.DenseLayer(params[f"{layer.name}/weights"], params[f"{layer.name}/bias"])
            lg = ops.dense_backward(x, dense, g)
            grads[f"{layer.name}/weights"], grads[f"{layer.name}/bias"] = lg.d_params
            g = lg.d_input
        elif isinstance(layer, Dropout):
            g = ops.dropout_backward(g, saved, extra)
        elif isinstance(layer, Flatten):
            g = g.reshape(saved)
        elif isinstance(layer, MaxPool):
            g = ops.maxpool_backward(saved, g)
        elif isinstance(layer, Conv):
            x, a = saved, extra
            g = ops.relu_backward(a, g)
            conv = ops.ConvLayer(params[f"{layer.name}/kernel"], params[f"{layer.name}/bias"])
            lg = ops.conv2d_backward(x, conv, g, need_input_grad=layer.name != first_conv)
            grads[f"{layer.name}/kernel"], grads[f"{layer.name}/bias"] = lg.d_params
            g = lg.d_input
    cache.consumed = True
    cache.entries = []
    return {name: grads[name] for name, _ in param_shapes(cache.spec)}


def predict_proba(params, spec, batch):
    probs, _ = model_forward(params, spec, batch, mode="infer")
    return probs


def spec_for_params(params):
    """Find the default-size known architecture whose parameter layout matches ``params``."""
    layout = [(k, tuple(v.shape)) for k, v in params.items()]
    for build in KNOWN_SPECS.values():
        spec = build()
        if param_shapes(spec) == layout:
            return spec
    raise ArchitectureError("parameters do not match any known architecture")
