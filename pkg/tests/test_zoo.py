from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentwire.errors import (
    IncompatibleBaseError,
    InvalidGeometryError,
    UnachievableRatioError,
    UntrainedModelError,
)
from latentwire.network import Network
from latentwire.train import TrainConfig, split_autoencoder, train_autoencoder
from latentwire.zoo import (
    ModelSpec,
    act,
    build_autoencoder,
    build_transfer_model,
    build_vanilla_classifier,
    compression_ratio,
    conv,
    count_parameters,
    dense,
    infer_shapes,
    load_spec,
    maxpool,
    save_spec,
)

from oracles import count_parameters_oracle


# --- autoencoder builder -----------------------------------------------------

def test_cifar_shape_cr4_latent():
    pair = build_autoencoder((32, 32, 3), 4)
    assert pair.latent_shape == (16, 16, 3)
    assert int(np.prod(pair.latent_shape)) == 3072 // 4
    assert pair.ratio.achieved == 4


def test_cifar_shape_cr8_needs_two_stages():
    # one stage gives 1.5 latent channels, rejected; two stages give 6
    pair = build_autoencoder((32, 32, 3), 8)
    assert pair.latent_shape == (8, 8, 6)


def test_imagenet_shape_cr4():
    pair = build_autoencoder((256, 256, 3), 4)
    assert pair.latent_shape == (128, 128, 3)


def test_cr16_latent():
    pair = build_autoencoder((32, 32, 3), 16)
    assert pair.latent_shape == (8, 8, 3)


def test_cr1_identity_pair():
    pair = build_autoencoder((32, 32, 3), 1)
    assert pair.is_identity
    assert pair.encoder.layers == () and pair.decoder.layers == ()


def test_unachievable_ratio():
    with pytest.raises(UnachievableRatioError):
        build_autoencoder((32, 32, 3), 7)
    with pytest.raises(UnachievableRatioError):
        build_autoencoder((5, 5, 3), 4)  # odd extent, no pooling stage fits


def test_encoder_decoder_shapes_mirror():
    pair = build_autoencoder((32, 32, 3), 8)
    assert infer_shapes(pair.encoder)[-1] == pair.latent_shape
    assert pair.decoder.input_shape == pair.latent_shape
    assert infer_shapes(pair.decoder)[-1] == pair.encoder.input_shape


@given(st.sampled_from([(32, 32, 3), (64, 64, 3), (16, 16, 4), (256, 256, 3)]),
       st.sampled_from([1, 2, 4, 8, 16]))
@settings(max_examples=25, deadline=None)
def test_achieved_ratio_always_exact(shape, cr):
    try:
        pair = build_autoencoder(shape, cr)
    except UnachievableRatioError:
        return
    assert compression_ratio(shape, pair.latent_shape) == Fraction(cr)


# --- split/compose -----------------------------------------------------------

def test_split_requires_training():
    pair = build_autoencoder((8, 8, 3), 4)
    with pytest.raises(UntrainedModelError):
        split_autoencoder(pair)


def test_split_compose_bitwise():
    pair = build_autoencoder((8, 8, 3), 4)
    images = np.random.default_rng(0).random((20, 8, 8, 3)).astype(np.float32)
    trained, _ = train_autoencoder(pair, images, TrainConfig(epochs=2, seed=0))
    encoder, decoder = split_autoencoder(trained)
    assert encoder.output_shape == pair.latent_shape
    for x in images[:5]:
        full = trained.chain.forward(x)
        split = decoder.forward(encoder.forward(x))
        assert full.tobytes() == split.tobytes()


def test_decoder_rejects_non_latent_shape():
    pair = build_autoencoder((8, 8, 3), 4)
    images = np.random.default_rng(0).random((10, 8, 8, 3)).astype(np.float32)
    trained, _ = train_autoencoder(pair, images, TrainConfig(epochs=1, seed=0))
    _, decoder = split_autoencoder(trained)
    with pytest.raises(Exception):
        decoder.forward(np.zeros((8, 8, 3), np.float32))


# --- classifier builders -------------------------------------------------------

def test_family_a_table_layout_on_raw_cifar_shape():
    spec = build_vanilla_classifier((32, 32, 3), "A", 10)
    kinds = [l.kind for l in spec.layers]
    assert kinds == ["conv2d", "activation", "maxpool"] * 3 + [
        "flatten", "dense", "activation", "dropout", "dense", "activation"]
    widths = [l.width for l in spec.layers if l.kind == "dense"]
    assert widths == [64, 10]
    assert spec.layers[-3].rate == 0.5
    assert all(l.filters == 32 for l in spec.layers if l.kind == "conv2d")
    assert all(l.padding == "valid" for l in spec.layers if l.kind == "conv2d")


def test_family_b_table_layout():
    spec = build_vanilla_classifier((32, 32, 3), "B", 10)
    widths = [l.width for l in spec.layers if l.kind == "dense"]
    assert widths == [512, 10]
    rates = [l.rate for l in spec.layers if l.kind == "dropout"]
    assert rates == [0.25, 0.25, 0.5]
    filters = [l.filters for l in spec.layers if l.kind == "conv2d"]
    assert filters == [32, 32, 64, 64]
    assert all(l.padding == "same" for l in spec.layers if l.kind == "conv2d")


def test_family_a_truncates_on_small_latents():
    # 8x8 input: conv->6, pool->3, conv->1; the second pool no longer fits,
    # so the trunk stops there and later blocks are dropped entirely
    spec = build_vanilla_classifier((8, 8, 3), "A", 10)
    trunk = [l.kind for l in spec.layers[:5]]
    assert trunk == ["conv2d", "activation", "maxpool", "conv2d", "activation"]
    assert spec.layers[5].kind == "flatten"


def test_family_a_infeasible_input():
    with pytest.raises(InvalidGeometryError):
        build_vanilla_classifier((2, 2, 3), "A", 10)


def test_shape_walk_matches_hand_oracle():
    spec = build_vanilla_classifier((32, 32, 3), "A", 10)
    shapes = infer_shapes(spec)
    collapsed = [shapes[0]]
    for s in shapes[1:]:
        if s != collapsed[-1]:
            collapsed.append(s)
    assert collapsed == [(32, 32, 3), (30, 30, 32), (15, 15, 32), (13, 13, 32),
                         (6, 6, 32), (4, 4, 32), (2, 2, 32), (128,), (64,), (10,)]


def test_infer_shapes_empty_spec():
    spec = ModelSpec((), (4, 4, 2))
    assert infer_shapes(spec) == [(4, 4, 2)]


def test_infer_shapes_reports_failing_layer_index():
    spec = ModelSpec((conv(8), conv(8), conv(8)), (4, 4, 1))
    with pytest.raises(InvalidGeometryError) as exc:
        infer_shapes(spec)
    assert exc.value.layer_index == 1  # 4->2, then 3x3 no longer fits


# --- parameter counting ----------------------------------------------------------

def test_single_conv_count():
    spec = ModelSpec((conv(32),), (8, 8, 3))
    assert count_parameters(spec) == (27 + 1) * 32 == 896


def test_dense_count():
    spec = ModelSpec((dense(64),), (128,))
    assert count_parameters(spec) == 129 * 64 == 8256


def test_family_a_total_matches_recount_oracle():
    for shape in [(32, 32, 3), (16, 16, 3), (8, 8, 6), (8, 8, 3)]:
        spec = build_vanilla_classifier(shape, "A", 10)
        assert count_parameters(spec) == count_parameters_oracle(spec)


def test_param_counts_non_increasing_in_cr():
    latents = {1: (32, 32, 3), 4: (16, 16, 3), 8: (8, 8, 6), 16: (8, 8, 3)}
    for family in ("A", "B"):
        counts = [count_parameters(build_vanilla_classifier(latents[cr], family, 10))
                  for cr in (1, 4, 8, 16)]
        assert all(a >= b for a, b in zip(counts, counts[1:])), (family, counts)


# --- compression ratio -------------------------------------------------------------

def test_compression_ratio_values():
    assert compression_ratio((32, 32, 3), (16, 16, 3)) == 4
    assert compression_ratio((8, 8, 3), (8, 8, 3)) == 1
    assert compression_ratio((256, 256, 3), (64, 64, 6)) == 8


# --- transfer assembly ---------------------------------------------------------------

def _toy_base():
    return ModelSpec((conv(8, padding="same"), act("relu"), maxpool(2, 2)), (8, 8, 3),
                     role="base")


def test_transfer_head_shapes():
    spec = build_transfer_model(_toy_base(), 256, 10)
    dense_layers = [l for l in spec.layers if l.kind == "dense"]
    assert [l.width for l in dense_layers] == [256, 10]
    shapes = infer_shapes(spec)
    assert shapes[-1] == (10,)


def test_transfer_head_width_50_variant():
    spec = build_transfer_model(_toy_base(), 50, 10)
    assert [l.width for l in spec.layers if l.kind == "dense"] == [50, 10]


def test_transfer_base_layers_frozen():
    spec = build_transfer_model(_toy_base(), 32, 10)
    assert all(l.frozen for l in spec.layers[:3])
    assert not any(l.frozen for l in spec.layers[3:])


def test_transfer_rejects_softmax_base():
    bad = ModelSpec((dense(4), act("softmax")), (6,))
    with pytest.raises(IncompatibleBaseError):
        build_transfer_model(bad, 16, 4)


def test_transfer_rejects_narrow_head():
    with pytest.raises(IncompatibleBaseError):
        build_transfer_model(_toy_base(), 4, 10)


# --- spec serialization ----------------------------------------------------------------

def test_spec_roundtrip(tmp_path):
    spec = build_vanilla_classifier((32, 32, 3), "B", 10)
    path = tmp_path / "model.json"
    save_spec(spec, path)
    loaded = load_spec(path)
    assert loaded == spec
    assert "latentwire-model" in path.read_text()


def test_builders_are_pure():
    a = build_vanilla_classifier((32, 32, 3), "A", 10)
    b = build_vanilla_classifier((32, 32, 3), "A", 10)
    assert a == b
    p1 = build_autoencoder((32, 32, 3), 8)
    p2 = build_autoencoder((32, 32, 3), 8)
    assert p1.encoder == p2.encoder and p1.decoder == p2.decoder
