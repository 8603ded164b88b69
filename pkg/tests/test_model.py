import numpy as np
import pytest

from suscept.layers import ModelBuildError, dense
from suscept.model import (
    build_custom,
    build_model,
    copy_params,
    init_gaussian,
    load_checkpoint,
    save_checkpoint,
    validate_params,
    zero_params,
)
from suscept.engine import forward
from suscept.tensor import gaussian_tensor


def test_build_custom_tap_count():
    model = build_custom(32, 2, 101, (3, 64, 64))
    # hidden states: input, one per tuple, output -> D + 2
    assert len(model.tap_shapes) == 2 + 2
    assert model.depth_L == 3
    assert model.tap_shapes[0] == (3, 64, 64)
    assert model.tap_shapes[-1] == (101,)


def test_build_custom_minimal():
    model = build_custom(1, 2, 2, (3, 16, 16))
    assert model.num_classes == 2
    assert model.depth_L == 3


def test_build_custom_input_too_small():
    # the downsampling intake exhausts an 8x8 input
    with pytest.raises(ModelBuildError, match="maxpool"):
        build_custom(32, 64, 101, (3, 8, 8))


def test_build_custom_rejects_bad_args():
    with pytest.raises(ValueError):
        build_custom(0, 2, 2, (3, 16, 16))
    with pytest.raises(ValueError):
        build_custom(1, 1, 2, (3, 16, 16))
    with pytest.raises(ValueError):
        build_custom(1, 2, 1, (3, 16, 16))


def test_build_custom_channel_chain():
    model = build_custom(16, 4, 10, (3, 32, 32))
    # all tuple taps share the post-intake shape; drift at equal depth is
    # always between same-shaped states
    assert len(set(model.tap_shapes[1:-1])) == 1


def test_shape_chain_error_names_layer():
    with pytest.raises(ModelBuildError, match="layer 0"):
        build_model([dense(4, 2)], (5,), 2)


def test_init_gaussian_deterministic():
    model = build_custom(4, 2, 3, (3, 16, 16))
    a = init_gaussian(model, 7)
    b = init_gaussian(model, 7)
    for i in a:
        for k in a[i]:
            np.testing.assert_array_equal(a[i][k], b[i][k])


def test_init_gaussian_biases_zero_bn_identity():
    model = build_custom(4, 2, 3, (3, 16, 16))
    params = init_gaussian(model, 7)
    for i, layer in enumerate(model.layers):
        if layer.kind in ("conv", "conv1x1", "dense"):
            assert not params[i]["b"].any()
        if layer.kind == "batchnorm":
            assert (params[i]["gamma"] == 1).all()
            assert not params[i]["beta"].any()
            assert not params[i]["running_mean"].any()
            assert (params[i]["running_var"] == 1).all()


def test_init_gaussian_he_variance():
    model = build_custom(32, 3, 10, (3, 64, 64))
    params = init_gaussian(model, 123)
    for i, layer in enumerate(model.layers):
        if layer.kind == "conv" and layer.in_ch == 32:
            w = params[i]["w"]
            assert w.size >= 9000
            fan_in = layer.in_ch * layer.kernel ** 2
            assert w.var() == pytest.approx(2.0 / fan_in, rel=0.05)


def test_init_gaussian_unit_variance_flag():
    model = build_custom(32, 3, 10, (3, 64, 64))
    params = init_gaussian(model, 123, unit_variance=True)
    for i, layer in enumerate(model.layers):
        if layer.kind == "conv" and layer.in_ch == 32:
            assert params[i]["w"].var() == pytest.approx(1.0, rel=0.05)


def test_zero_params_collapse_signal():
    model = build_custom(4, 2, 5, (3, 16, 16))
    params = zero_params(model)
    x = gaussian_tensor((3, 16, 16), 1)
    y = forward(model, params, x)
    # zero weights wash out the input; every class score is equal
    assert np.ptp(y) == 0.0


def test_validate_params_catches_shape_drift():
    model = build_custom(4, 2, 3, (3, 16, 16))
    params = init_gaussian(model, 7)
    params[0]["w"] = params[0]["w"][:, :, :3, :3]
    with pytest.raises(ValueError, match="parameter w"):
        validate_params(model, params)


def test_checkpoint_roundtrip(tmp_path):
    model = build_custom(4, 2, 3, (3, 16, 16))
    params = init_gaussian(model, 7)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, params)
    model2, params2 = load_checkpoint(path)
    assert model2.meta == model.meta
    x = gaussian_tensor((3, 16, 16), 3)
    np.testing.assert_array_equal(forward(model, params, x),
                                  forward(model2, params2, x))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_copy_params_is_deep():
    model = build_custom(4, 2, 3, (3, 16, 16))
    params = init_gaussian(model, 7)
    clone = copy_params(params)
    clone[0]["w"][0, 0, 0, 0] += 1.0
    assert params[0]["w"][0, 0, 0, 0] != clone[0]["w"][0, 0, 0, 0]
