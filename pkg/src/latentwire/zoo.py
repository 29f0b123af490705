"""Declarative model architectures.

Builders produce :class:`ModelSpec` values; binding specs to weights happens
in :mod:`latentwire.network`. The autoencoder builder is parameterized by an
exact compression ratio; classifier builders adapt to small latent inputs by
keeping the longest feasible prefix of their conv/pool trunk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .errors import (
    IncompatibleBaseError,
    InvalidGeometryError,
    UnachievableRatioError,
)
from .ops import ACTIVATIONS

SPEC_FORMAT = "latentwire-model"
SPEC_VERSION = 1

KINDS = ("conv2d", "maxpool", "upsample", "dense", "activation", "dropout", "flatten")

_REQUIRED = {
    "conv2d": ("kernel", "filters", "stride", "padding"),
    "maxpool": ("pool", "stride"),
    "upsample": ("factor",),
    "dense": ("width",),
    "activation": ("fn",),
    "dropout": ("rate",),
    "flatten": (),
}
_GEOMETRY = ("kernel", "filters", "stride", "padding", "pool", "factor", "width", "fn", "rate")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int | None = None
    filters: int | None = None
    stride: int | None = None
    padding: str | None = None
    pool: int | None = None
    factor: int | None = None
    width: int | None = None
    fn: str | None = None
    rate: float | None = None
    frozen: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        required = _REQUIRED[self.kind]
        for name in _GEOMETRY:
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{self.kind} layer needs {name}")
            if name not in required and value is not None:
                raise ValueError(f"{self.kind} layer does not take {name}")
        if self.kind == "activation" and self.fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.fn!r}")
        if self.kind == "conv2d" and self.padding not in ("valid", "same"):
            raise ValueError(f"conv padding must be valid|same, got {self.padding!r}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {self.rate}")


def conv(filters, kernel=3, stride=1, padding="valid", frozen=False):
    return LayerSpec("conv2d", kernel=kernel, filters=filters, stride=stride,
                     padding=padding, frozen=frozen)


def maxpool(pool=2, stride=2):
    return LayerSpec("maxpool", pool=pool, stride=stride)


def upsample(factor=2):
    return LayerSpec("upsample", factor=factor)


def dense(width, frozen=False):
    return LayerSpec("dense", width=width, frozen=frozen)


def act(fn):
    return LayerSpec("activation", fn=fn)


def dropout(rate):
    return LayerSpec("dropout", rate=rate)


def flatten():
    return LayerSpec("flatten")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple
    role: str = "classifier"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    @property
    def output_shape(self):
        return infer_shapes(self)[-1]

    def with_frozen(self, frozen):
        return replace(self, layers=tuple(replace(l, frozen=frozen) for l in self.layers))


def _layer_out(shape, layer, index):
    if layer.kind in ("conv2d", "maxpool", "upsample"):
        if len(shape) != 3:
            raise InvalidGeometryError(
                f"layer {index} ({layer.kind}) needs HxWxC input, got {shape}", index)
        h, w, c = shape
        if layer.kind == "conv2d":
            k, s = layer.kernel, layer.stride
            if layer.padding == "same":
                ho, wo = -(-h // s), -(-w // s)
            else:
                ho, wo = (h - k) // s + 1, (w - k) // s + 1
            if ho < 1 or wo < 1:
                raise InvalidGeometryError(
                    f"layer {index}: conv {k}x{k} does not fit {h}x{w}", index)
            return (ho, wo, layer.filters)
        if layer.kind == "maxpool":
            p, s = layer.pool, layer.stride
            if p > h or p > w:
                raise InvalidGeometryError(
                    f"layer {index}: pool {p} exceeds {h}x{w}", index)
            return ((h - p) // s + 1, (w - p) // s + 1, c)
        return (h * layer.factor, w * layer.factor, c)
    if layer.kind == "dense":
        if len(shape) != 1:
            raise InvalidGeometryError(
                f"layer {index}: dense needs a flat input, got {shape}", index)
        return (layer.width,)
    if layer.kind == "flatten":
        return (int(math.prod(shape)),)
    return tuple(shape)  # activation, dropout


def infer_shapes(spec, input_shape=None):
    """Shape walk; returns [input_shape, out_1, ..., out_n]."""
    shape = tuple(input_shape if input_shape is not None else spec.input_shape)
    out = [shape]
    for i, layer in enumerate(spec.layers):
        shape = _layer_out(shape, layer, i)
        out.append(shape)
    return out


def count_parameters(spec, input_shape=None):
    """conv: (K*K*C_in+1)*F; dense: (N+1)*M; everything else contributes 0."""
    shapes = infer_shapes(spec, input_shape)
    total = 0
    for layer, shape_in in zip(spec.layers, shapes):
        if layer.kind == "conv2d":
            total += (layer.kernel * layer.kernel * shape_in[2] + 1) * layer.filters
        elif layer.kind == "dense":
            total += (shape_in[0] + 1) * layer.width
    return total


def compression_ratio(input_shape, latent_shape):
    """elements(input) / elements(latent) as an exact rational."""
    return Fraction(math.prod(input_shape), math.prod(latent_shape))


@dataclass(frozen=True)
class CompressionRatio:
    requested: Fraction
    achieved: Fraction

    @property
    def is_identity(self):
        return self.achieved == 1


def _as_fraction(cr):
    frac = Fraction(cr)
    if frac <= 0:
        raise UnachievableRatioError(f"compression ratio must be positive, got {cr}")
    return frac


@dataclass(frozen=True)
class AutoencoderPair:
    encoder: ModelSpec
    decoder: ModelSpec
    latent_shape: tuple
    ratio: CompressionRatio

    @property
    def is_identity(self):
        return self.ratio.is_identity


def build_autoencoder(input_shape, cr, hidden_width=32):
    """Conv/pool encoder and conv/upsample decoder realizing ratio ``cr`` exactly.

    The encoder halves the spatial extent s times and maps to c_z latent
    channels where c_z = C*4^s/cr; the smallest feasible s wins. cr == 1
    degenerates to identity pass-through (no layers at all).
    """
    h, w, c = (int(d) for d in input_shape)
    requested = _as_fraction(cr)
    if requested == 1:
        enc = ModelSpec((), (h, w, c), role="encoder")
        dec = ModelSpec((), (h, w, c), role="decoder")
        ratio = CompressionRatio(requested, Fraction(1))
        return AutoencoderPair(enc, dec, (h, w, c), ratio)

    stages, c_z = None, None
    s = 1
    while h % (2 ** s) == 0 and w % (2 ** s) == 0 and 2 ** s <= min(h, w):
        cz = Fraction(c * 4 ** s) / requested
        if cz.denominator == 1 and cz >= 1:
            stages, c_z = s, int(cz)
            break
        s += 1
    if stages is None:
        raise UnachievableRatioError(
            f"no stage count realizes ratio {cr} on {input_shape}")

    enc_layers = []
    for _ in range(stages):
        enc_layers += [conv(hidden_width, padding="same"), act("relu"), maxpool(2, 2)]
    enc_layers += [conv(c_z, padding="same"), act("relu")]
    latent = (h // 2 ** stages, w // 2 ** stages, c_z)

    dec_layers = []
    for _ in range(stages):
        dec_layers += [conv(hidden_width, padding="same"), act("relu"), upsample(2)]
    dec_layers += [conv(c, padding="same"), act("sigmoid")]

    enc = ModelSpec(tuple(enc_layers), (h, w, c), role="encoder")
    dec = ModelSpec(tuple(dec_layers), latent, role="decoder")
    achieved = compression_ratio((h, w, c), latent)
    if achieved != requested:
        raise UnachievableRatioError(
            f"built ratio {achieved} != requested {requested}")
    assert infer_shapes(enc)[-1] == latent
    assert infer_shapes(dec)[-1] == (h, w, c)
    return AutoencoderPair(enc, dec, latent, CompressionRatio(requested, achieved))


def _feasible_prefix(trunk, input_shape):
    """Longest prefix of trunk layers for which the shape walk succeeds."""
    shape = tuple(input_shape)
    kept = []
    for layer in trunk:
        try:
            shape = _layer_out(shape, layer, len(kept))
        except InvalidGeometryError:
            break
        kept.append(layer)
    return kept, shape


def build_vanilla_classifier(input_shape, family, num_classes, pool_stride=2):
    """From-scratch CNN classifiers.

    Family A: three valid-padding conv/pool blocks, dense 64 head.
    Family B: two double-conv (same padding) blocks with dropout, dense 512 head.
    Trailing trunk layers that no longer fit the input are dropped, so the
    same family applies to compressed latent inputs.
    """
    h, w, c = (int(d) for d in input_shape)
    if min(h, w) < 3:
        raise InvalidGeometryError(f"input spatial dims must be >= 3, got {h}x{w}")
    if family == "A":
        trunk = []
        for _ in range(3):
            trunk += [conv(32, padding="valid"), act("relu"), maxpool(2, pool_stride)]
        head = [flatten(), dense(64), act("relu"), dropout(0.5),
                dense(num_classes), act("softmax")]
    elif family == "B":
        trunk = []
        for filters in (32, 64):
            trunk += [conv(filters, padding="same"), act("relu"),
                      conv(filters, padding="same"), act("relu"),
                      maxpool(2, pool_stride), dropout(0.25)]
        head = [flatten(), dense(512), act("relu"), dropout(0.5),
                dense(num_classes), act("softmax")]
    else:
        raise ValueError(f"unknown classifier family {family!r}")

    kept, shape = _feasible_prefix(trunk, (h, w, c))
    if not any(l.kind == "conv2d" for l in kept):
        raise InvalidGeometryError(f"first conv block does not fit {h}x{w}x{c}")
    features = math.prod(shape)
    if features < num_classes:
        raise InvalidGeometryError(
            f"trunk leaves {features} features for {num_classes} classes")
    return ModelSpec(tuple(kept + head), (h, w, c), role="classifier")


def build_transfer_model(base, head_width, num_classes):
    """Frozen feature base plus a trainable dense head."""
    if head_width < num_classes:
        raise IncompatibleBaseError(
            f"head width {head_width} < {num_classes} classes")
    if base.layers and base.layers[-1].kind == "activation" and base.layers[-1].fn == "softmax":
        raise IncompatibleBaseError("base must end in a feature tensor, not softmax")
    try:
        out = infer_shapes(base)[-1]
    except InvalidGeometryError as exc:
        raise IncompatibleBaseError(f"base does not shape-check: {exc}") from exc
    if math.prod(out) < num_classes:
        raise IncompatibleBaseError(f"base emits only {math.prod(out)} features")
    frozen_base = tuple(replace(l, frozen=True) for l in base.layers)
    head = (flatten(), dense(head_width), act("relu"),
            dense(num_classes), act("softmax"))
    return ModelSpec(frozen_base + head, base.input_shape, role="classifier")


def spec_to_dict(spec):
    layers = []
    for layer in spec.layers:
        entry = {"kind": layer.kind}
        for name in _GEOMETRY:
            value = getattr(layer, name)
            if value is not None:
                entry[name] = value
        if layer.frozen:
            entry["frozen"] = True
        layers.append(entry)
    return {
        "format": SPEC_FORMAT,
        "version": SPEC_VERSION,
        "role": spec.role,
        "input_shape": list(spec.input_shape),
        "layers": layers,
    }


def spec_from_dict(doc):
    if doc.get("format") != SPEC_FORMAT:
        raise ValueError(f"not a model spec document: {doc.get('format')!r}")
    if doc.get("version") != SPEC_VERSION:
        raise ValueError(f"unsupported model spec version {doc.get('version')!r}")
    layers = []
    for entry in doc["layers"]:
        fields = dict(entry)
        kind = fields.pop("kind")
        layers.append(LayerSpec(kind, **fields))
    return ModelSpec(tuple(layers), tuple(doc["input_shape"]), role=doc["role"])


def save_spec(spec, path):
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def load_spec(path):
    return spec_from_dict(json.loads(Path(path).read_text()))
