import numpy as np
import pytest

from suscept.engine import evolve, forward, forward_batch, input_gradient
from suscept.model import build_custom, init_gaussian
from suscept.tensor import derive_seed, gaussian_tensor


@pytest.fixture(scope="module")
def small_model():
    model = build_custom(6, 4, 5, (3, 32, 32))
    params = init_gaussian(model, 17)
    return model, params


def test_forward_deterministic(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 2)
    y1, t1 = forward(model, params, x, record=True)
    y2, t2 = forward(model, params, x, record=True)
    np.testing.assert_array_equal(y1, y2)
    for (d1, z1), (d2, z2) in zip(t1.states, t2.states):
        assert d1 == d2
        np.testing.assert_array_equal(z1, z2)


def test_forward_trajectory_endpoints(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 3)
    y, traj = forward(model, params, x, record=True)
    assert traj.depths == list(range(model.depth_L + 1))
    np.testing.assert_array_equal(traj.states[0][1], x)
    np.testing.assert_array_equal(traj.states[-1][1], y)


def test_forward_trajectory_length_custom(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 4)
    _, traj = forward(model, params, x, record=True)
    assert len(traj.states) == 4 + 2  # D + 2 recorded states


def test_forward_rejects_bad_shape(small_model):
    model, params = small_model
    with pytest.raises(ValueError, match="shape"):
        forward(model, params, gaussian_tensor((3, 16, 16), 5))


def test_forward_batch_matches_single(small_model):
    model, params = small_model
    xs = gaussian_tensor((4, 3, 32, 32), 6)
    ys = forward_batch(model, params, xs)
    for i in range(4):
        np.testing.assert_allclose(ys[i], forward(model, params, xs[i]), rtol=1e-12)


def test_evolve_identity(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 7)
    np.testing.assert_array_equal(evolve(model, params, 0, x, 0), x)


def test_evolve_full_depth_equals_forward(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 8)
    np.testing.assert_array_equal(
        evolve(model, params, model.depth_L, x, 0), forward(model, params, x)
    )


def test_evolve_composition_law(small_model):
    model, params = small_model
    L = model.depth_L
    rng = np.random.default_rng(9)
    x = gaussian_tensor((3, 32, 32), 10)
    _, traj = forward(model, params, x, record=True)
    for _ in range(25):
        l = int(rng.integers(0, L))
        a = int(rng.integers(0, L - l + 1))
        b = int(rng.integers(0, L - l - a + 1))
        z = traj.state(l)
        one_shot = evolve(model, params, a + b, z, l)
        two_step = evolve(model, params, b, evolve(model, params, a, z, l), l + a)
        np.testing.assert_array_equal(one_shot, two_step)


def test_evolve_matches_recorded_taps(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 11)
    _, traj = forward(model, params, x, record=True)
    for l in range(model.depth_L):
        np.testing.assert_array_equal(
            evolve(model, params, 1, traj.state(l), l), traj.state(l + 1)
        )


def test_evolve_range_checks(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 12)
    with pytest.raises(ValueError):
        evolve(model, params, model.depth_L + 1, x, 0)
    with pytest.raises(ValueError):
        evolve(model, params, 1, x, model.depth_L)
    with pytest.raises(ValueError):
        evolve(model, params, -1, x, 1)


def test_evolve_checks_tap_shape(small_model):
    model, params = small_model
    with pytest.raises(ValueError, match="shape"):
        evolve(model, params, 1, gaussian_tensor((3, 32, 32), 13), 1)


def test_input_gradient_shape(small_model):
    model, params = small_model
    x = gaussian_tensor((3, 32, 32), 14)
    g = input_gradient(model, params, x, lambda y: (float(y.sum()), np.ones_like(y)))
    assert g.shape == x.shape
