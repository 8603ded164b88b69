"""Finite-difference verification of every layer kind's input gradient."""
import numpy as np
import pytest

from suscept.engine import input_gradient
from suscept.layers import (
    batchnorm,
    chanavg,
    conv1x1,
    conv2d,
    dense,
    maxpool,
    relu,
)
from suscept.model import build_model, init_gaussian
from suscept.tensor import gaussian_tensor

EPS = 1e-5
REL_TOL = 1e-4


def central_difference(f, x, coords, eps=EPS):
    """Two-sided difference of a scalar function at the given flat coords."""
    grads = {}
    flat = x.ravel().copy()
    for i in coords:
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(flat.reshape(x.shape))
        flat[i] = orig - eps
        fm = f(flat.reshape(x.shape))
        flat[i] = orig
        grads[i] = (fp - fm) / (2 * eps)
    return grads


def weighted_sum_objective(seed, shape):
    w = gaussian_tensor(shape, seed)
    return lambda y: (float(np.sum(w * y)), w)


def check_model_gradient(model, params, x, n_coords=100, seed=99, rel_tol=REL_TOL):
    obj = weighted_sum_objective(seed, model.output_shape)
    grad = input_gradient(model, params, x, obj)

    from suscept.engine import forward

    def scalar(xv):
        return obj(forward(model, params, xv))[0]

    rng = np.random.default_rng(seed + 1)
    coords = rng.choice(x.size, size=min(n_coords, x.size), replace=False)
    numeric = central_difference(scalar, x, coords)
    for i, num in numeric.items():
        got = grad.ravel()[i]
        denom = max(abs(num), abs(got), 1e-8)
        assert abs(got - num) / denom < rel_tol, (
            f"coord {i}: analytic {got} vs numeric {num}"
        )


def test_dense_gradient_analytic():
    model = build_model([dense(6, 4)], (6,), 4)
    params = init_gaussian(model, 0)
    x = gaussian_tensor((6,), 5)
    # objective = sum of outputs: gradient is the column sums of W
    grad = input_gradient(model, params, x,
                          lambda y: (float(y.sum()), np.ones_like(y)))
    np.testing.assert_allclose(grad, params[0]["w"].sum(axis=1), rtol=1e-12)


def test_constant_objective_zero_gradient():
    model = build_model([dense(6, 4)], (6,), 4)
    params = init_gaussian(model, 0)
    x = gaussian_tensor((6,), 5)
    grad = input_gradient(model, params, x, lambda y: (1.0, np.zeros_like(y)))
    np.testing.assert_array_equal(grad, np.zeros(6))


@pytest.mark.parametrize(
    "name,layers,in_shape",
    [
        ("conv_s1p1", [conv2d(3, 4, 3, 1, 1), chanavg(), dense(4, 4)], (3, 8, 8)),
        ("conv_s2p0", [conv2d(3, 4, 7, 2, 0), chanavg(), dense(4, 4)], (3, 16, 16)),
        ("conv1x1", [conv1x1(3, 5), chanavg(), dense(5, 5)], (3, 6, 6)),
        ("relu", [conv2d(3, 4, 3, 1, 1), relu(), chanavg(), dense(4, 4)], (3, 8, 8)),
        ("maxpool", [maxpool(2, 2), chanavg(), dense(3, 3)], (3, 8, 8)),
        ("batchnorm", [conv2d(3, 4, 3, 1, 1), batchnorm(4), chanavg(), dense(4, 4)], (3, 8, 8)),
        ("chanavg", [chanavg(), dense(3, 3)], (3, 8, 8)),
        ("dense", [dense(24, 7)], (24,)),
    ],
)
def test_layer_gradients_match_finite_differences(name, layers, in_shape):
    model = build_model(layers, in_shape, model_classes(layers, in_shape))
    params = init_gaussian(model, 11)
    if name == "batchnorm":
        # non-identity running stats so the affine transform is exercised
        for i, lay in enumerate(model.layers):
            if lay.kind == "batchnorm":
                params[i]["running_mean"] = gaussian_tensor(params[i]["running_mean"].shape, 21) * 0.3
                params[i]["running_var"] = 1.0 + 0.5 * np.abs(
                    gaussian_tensor(params[i]["running_var"].shape, 22)
                )
                params[i]["gamma"] = 1.0 + 0.2 * gaussian_tensor(params[i]["gamma"].shape, 23)
                params[i]["beta"] = 0.1 * gaussian_tensor(params[i]["beta"].shape, 24)
    x = gaussian_tensor(in_shape, 31)
    check_model_gradient(model, params, x)


def model_classes(layers, in_shape):
    from suscept.layers import output_shape as oshape

    shape = in_shape
    for lay in layers:
        shape = oshape(lay, shape)
    return shape[0]


def test_full_custom_model_gradient():
    from suscept.model import build_custom

    model = build_custom(8, 4, 5, (3, 32, 32))
    params = init_gaussian(model, 3)
    x = gaussian_tensor((3, 32, 32), 13)
    check_model_gradient(model, params, x)
