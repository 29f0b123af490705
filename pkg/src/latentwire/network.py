"""Runtime model: a ModelSpec bound to parameter arrays."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import ops
from .errors import ShapeMismatchError
from .initializers import glorot_uniform
from .zoo import ModelSpec, infer_shapes, load_spec, save_spec, spec_from_dict, spec_to_dict


class Network:
    """Sequential chain of layers with explicit forward/backward passes.

    Parameters live in ``self.params``: one dict per layer ({"w","b"} for
    conv2d/dense, empty otherwise). Layers marked frozen in the spec do not
    receive updates; ``set_frozen`` flips that at stage boundaries.
    """

    def __init__(self, spec: ModelSpec, params=None, rng=None, dtype=np.float32):
        self.spec = spec
        self.frozen = [layer.frozen for layer in spec.layers]
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = self._init_params(rng, dtype)

    def _init_params(self, rng, dtype):
        shapes = infer_shapes(self.spec)
        params = []
        for layer, shape_in in zip(self.spec.layers, shapes):
            if layer.kind == "conv2d":
                w = glorot_uniform(
                    (layer.kernel, layer.kernel, shape_in[2], layer.filters), rng, dtype)
                params.append({"w": w, "b": np.zeros(layer.filters, dtype=dtype)})
            elif layer.kind == "dense":
                w = glorot_uniform((shape_in[0], layer.width), rng, dtype)
                params.append({"w": w, "b": np.zeros(layer.width, dtype=dtype)})
            else:
                params.append({})
        return params

    @property
    def input_shape(self):
        return self.spec.input_shape

    @property
    def output_shape(self):
        return infer_shapes(self.spec)[-1]

    def _check_input(self, x):
        sample = self.spec.input_shape
        if x.shape != sample and x.shape[1:] != sample:
            raise ShapeMismatchError(
                f"input {x.shape} does not match model input {sample}")

    def forward(self, x, training=False, rng=None, upto=None, return_caches=False):
        """Run the chain; ``upto`` stops before layer index ``upto``."""
        self._check_input(x)
        layers = self.spec.layers if upto is None else self.spec.layers[:upto]
        caches = [] if return_caches else None
        for layer, p in zip(layers, self.params):
            if layer.kind == "conv2d":
                x, cache = ops.conv2d(x, p["w"], p["b"], layer.stride, layer.padding)
            elif layer.kind == "maxpool":
                x, cache = ops.maxpool2d(x, layer.pool, layer.stride)
            elif layer.kind == "upsample":
                x, cache = ops.upsample2d(x, layer.factor)
            elif layer.kind == "dense":
                x, cache = ops.dense(x, p["w"], p["b"])
            elif layer.kind == "activation":
                x, cache = ops.activation(x, layer.fn)
            elif layer.kind == "dropout":
                x, cache = ops.dropout(x, layer.rate, rng=rng, training=training)
            else:
                x, cache = ops.flatten(x)
            if return_caches:
                caches.append(cache)
        return (x, caches) if return_caches else x

    def backward(self, caches, grad):
        """Chain rule over the cached layers; returns (input_grad, grads).

        ``grads`` aligns with ``self.params`` (empty dicts for layers that
        were not run or hold no parameters). When every remaining layer
        below the current position is frozen the walk stops early and those
        gradients are zero.
        """
        grads = [{} for _ in self.params]
        for i in range(len(caches) - 1, -1, -1):
            if all(self.frozen[j] for j in range(i + 1)):
                for j in range(i + 1):
                    grads[j] = {k: np.zeros_like(v) for k, v in self.params[j].items()}
                return None, grads
            grad, pgrads = ops.backward(caches[i], grad)
            if pgrads is not None:
                grads[i] = pgrads if not self.frozen[i] else {
                    k: np.zeros_like(v) for k, v in pgrads.items()}
        return grad, grads

    def trainable(self, grads=None):
        """Flat lists of trainable parameter arrays (and matching grads)."""
        params, flat_grads = [], []
        for i, p in enumerate(self.params):
            if self.frozen[i] or not p:
                continue
            for key in sorted(p):
                params.append(p[key])
                if grads is not None:
                    flat_grads.append(grads[i][key])
        return (params, flat_grads) if grads is not None else params

    def set_frozen(self, frozen):
        if isinstance(frozen, bool):
            self.frozen = [frozen] * len(self.frozen)
        else:
            self.frozen = list(frozen)

    def copy_params(self):
        return [{k: v.copy() for k, v in p.items()} for p in self.params]

    def slice(self, start, stop, input_shape, role):
        """View over layers [start:stop); parameter arrays are shared."""
        sub = ModelSpec(self.spec.layers[start:stop], input_shape, role=role)
        return Network(sub, params=self.params[start:stop])

    def save(self, prefix):
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        save_spec(self.spec, prefix.with_suffix(".model.json"))
        arrays = {}
        for i, p in enumerate(self.params):
            for key, value in p.items():
                arrays[f"layer{i}_{key}"] = value
        np.savez(prefix.with_suffix(".weights.npz"), **arrays)

    @classmethod
    def load(cls, prefix):
        prefix = Path(prefix)
        spec = load_spec(prefix.with_suffix(".model.json"))
        with np.load(prefix.with_suffix(".weights.npz")) as data:
            params = []
            for i, layer in enumerate(spec.layers):
                p = {}
                for key in ("w", "b"):
                    name = f"layer{i}_{key}"
                    if name in data:
                        p[key] = data[name]
                params.append(p)
        return cls(spec, params=params)
