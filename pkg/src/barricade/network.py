"""Feedforward neural-network controller: numeric forward pass and lowering
to Expr so the checker sees exactly the arithmetic the simulator runs.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

from . import symexpr as sx

ACTIVATIONS = ("tanh", "sigmoid", "identity")


class NetworkFormatError(ValueError):
    """Malformed network file or inconsistent layer dimensions."""


@dataclass(frozen=True)
class Layer:
    weights: tuple   # rows: tuple of tuple of float, shape d_out x d_in
    bias: tuple      # d_out floats
    activation: str

    @property
    def d_out(self):
        return len(self.weights)

    @property
    def d_in(self):
        return len(self.weights[0])


@dataclass(frozen=True)
class Network:
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        _validate(self.layers)

    @property
    def input_dim(self):
        return self.layers[0].d_in

    @property
    def output_dim(self):
        return self.layers[-1].d_out


def _validate(layers):
    if not layers:
        raise NetworkFormatError("network needs at least one layer")
    for k, layer in enumerate(layers):
        if layer.activation not in ACTIVATIONS:
            raise NetworkFormatError("unknown activation %r" % layer.activation)
        if not layer.weights:
            raise NetworkFormatError("layer %d has no rows" % k)
        widths = {len(row) for row in layer.weights}
        if len(widths) != 1:
            raise NetworkFormatError("layer %d has ragged weight rows" % k)
        if len(layer.bias) != layer.d_out:
            raise NetworkFormatError("layer %d bias length mismatch" % k)
        if k > 0 and layer.d_in != layers[k - 1].d_out:
            raise NetworkFormatError(
                "layer %d expects %d inputs but layer %d outputs %d"
                % (k, layer.d_in, k - 1, layers[k - 1].d_out))


def make_layer(weights, bias, activation):
    return Layer(tuple(tuple(float(w) for w in row) for row in weights),
                 tuple(float(b) for b in bias), activation)


def parameter_count(net):
    return sum(layer.d_out * layer.d_in + layer.d_out for layer in net.layers)


def _act_scalar(name, v):
    import math
    if name == "tanh":
        return math.tanh(v)
    if name == "sigmoid":
        return 1.0 / (1.0 + math.exp(-v))
    return v


def forward(net, y):
    """Numeric forward pass.

    Accumulation order matches the Expr produced by to_expr term for term,
    so eval(to_expr(net), y) == forward(net, y) bit for bit.
    """
    if len(y) != net.input_dim:
        raise NetworkFormatError(
            "input arity %d, network expects %d" % (len(y), net.input_dim))
    values = list(y)
    for layer in net.layers:
        out = []
        for j in range(layer.d_out):
            row = layer.weights[j]
            acc = row[0] * values[0]
            for k in range(1, len(row)):
                acc = acc + row[k] * values[k]
            acc = acc + layer.bias[j]
            out.append(_act_scalar(layer.activation, acc))
        values = out
    return values


def _act_expr(name, e):
    if name == "tanh":
        return sx.tanh(e)
    if name == "sigmoid":
        return sx.div(sx.const(1.0), sx.add(sx.const(1.0), sx.exp(sx.neg(e))))
    return e


def to_expr(net, inputs=None):
    """Lower the network to one Expr per output, over var(0..d_in-1)."""
    if inputs is None:
        inputs = [sx.var(i) for i in range(net.input_dim)]
    values = list(inputs)
    for layer in net.layers:
        out = []
        for j in range(layer.d_out):
            row = layer.weights[j]
            acc = sx.mul(sx.const(row[0]), values[0])
            for k in range(1, len(row)):
                acc = sx.add(acc, sx.mul(sx.const(row[k]), values[k]))
            acc = sx.add(acc, sx.const(layer.bias[j]))
            out.append(_act_expr(layer.activation, acc))
        values = out
    return values


# --- fast numpy forward, used by the training rollouts only ---------------

def numpy_arrays(net):
    import numpy as np
    return [(np.array(l.weights, dtype=float), np.array(l.bias, dtype=float),
             l.activation) for l in net.layers]


def forward_fast(arrays, y):
    import numpy as np
    v = y
    for w, b, act in arrays:
        v = w @ v + b
        if act == "tanh":
            v = np.tanh(v)
        elif act == "sigmoid":
            v = 1.0 / (1.0 + np.exp(-v))
    return v


# --- JSON persistence ------------------------------------------------------

def to_dict(net):
    return {"layers": [{"weights": [list(row) for row in l.weights],
                        "bias": list(l.bias),
                        "activation": l.activation} for l in net.layers]}


def from_dict(data):
    try:
        layers = [make_layer(l["weights"], l["bias"], l["activation"])
                  for l in data["layers"]]
    except (KeyError, TypeError, IndexError) as exc:
        raise NetworkFormatError("bad network structure: %s" % exc) from exc
    return Network(tuple(layers))


def save(net, path):
    with open(path, "w") as fh:
        json.dump(to_dict(net), fh, indent=1)


def load(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError("not valid JSON: %s" % exc) from exc
    return from_dict(data)


def controller_hash(net):
    """Stable identity of the weights, recorded in certificates."""
    blob = json.dumps(to_dict(net), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
