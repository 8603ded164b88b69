import io
import math

import numpy as np
import pytest

from suscept.tensor import (
    ZeroVectorError,
    derive_seed,
    gaussian_tensor,
    load_tensor,
    project_to_sphere,
    read_tensor,
    rms_distance,
    rms_norm,
    save_tensor,
    write_tensor,
)


def test_rms_norm_zero_vector():
    assert rms_norm([0.0, 0.0, 0.0, 0.0]) == 0.0


def test_rms_norm_direct():
    # sqrt((9 + 16) / 2) = sqrt(12.5)
    assert rms_norm([3.0, 4.0]) == pytest.approx(math.sqrt(12.5), rel=1e-12)


def test_rms_norm_worked_example_difference():
    # difference vector of the five-class worked example; the closed form is
    # sqrt(0.225) ~ 0.47434, not the rounded 0.4703 sometimes quoted
    v = [0.75, -0.75, 0.0, 0.0, 0.0]
    assert rms_norm(v) == pytest.approx(math.sqrt(0.225), rel=1e-12)
    assert rms_norm(v) == pytest.approx(0.47434, abs=5e-6)


def test_rms_norm_empty_errors():
    with pytest.raises(ValueError):
        rms_norm(np.array([]))


def test_rms_distance_identity_and_unit():
    v = np.arange(12.0).reshape(3, 4)
    assert rms_distance(v, v) == 0.0
    assert rms_distance([1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0, rel=1e-12)


def test_rms_distance_worked_example():
    a = [2.1, 0.6, 0.1, -0.5, -1.1]
    b = [1.35, 1.35, 0.1, -0.5, -1.1]
    assert rms_distance(a, b) == pytest.approx(0.474341649, rel=1e-9)


def test_rms_distance_shape_mismatch():
    with pytest.raises(ValueError):
        rms_distance(np.zeros(3), np.zeros(4))


def test_rms_distance_triangle_inequality():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = rng.standard_normal((3, 17))
        assert rms_distance(a, c) <= rms_distance(a, b) + rms_distance(b, c) + 1e-12


def test_rms_norm_homogeneity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        v = rng.standard_normal(rng.integers(1, 50))
        c = float(rng.uniform(0.01, 100.0))
        assert rms_norm(c * v) == pytest.approx(c * rms_norm(v), rel=1e-12)


def test_rms_norm_matches_two_pass_euclidean():
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = rng.standard_normal(rng.integers(1, 200))
        naive = math.sqrt(sum(float(x) * float(x) for x in v)) / math.sqrt(v.size)
        assert rms_norm(v) == pytest.approx(naive, rel=1e-12)


def test_project_to_sphere_examples():
    w = project_to_sphere([3.0, 4.0], 1.0)
    assert rms_norm(w) == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(w, [0.84852814, 1.13137085], rtol=1e-7)


def test_project_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.standard_normal(31)
        r = float(rng.uniform(1e-4, 10.0))
        w = project_to_sphere(v, r)
        np.testing.assert_allclose(project_to_sphere(w, r), w, rtol=1e-14)


def test_project_on_sphere_already():
    v = project_to_sphere(np.ones(4), 2.0)
    np.testing.assert_allclose(project_to_sphere(v, 2.0), v, rtol=1e-15)


def test_project_zero_vector_errors():
    with pytest.raises(ZeroVectorError):
        project_to_sphere(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        project_to_sphere(np.ones(2), 0.0)


def test_gaussian_tensor_moments():
    v = gaussian_tensor((1000000,), 12345)
    assert abs(float(v.mean())) < 0.01
    assert abs(float(v.var()) - 1.0) < 0.02


def test_gaussian_tensor_determinism_and_seeds():
    a = gaussian_tensor((4, 5), 9)
    b = gaussian_tensor((4, 5), 9)
    c = gaussian_tensor((4, 5), 10)
    np.testing.assert_array_equal(a, b)
    assert (a != c).any()


def test_gaussian_tensor_bad_shape():
    with pytest.raises(ValueError):
        gaussian_tensor((0, 3), 1)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


def test_tensor_roundtrip(tmp_path):
    arr = np.random.default_rng(4).standard_normal((3, 5, 2))
    path = tmp_path / "t.bin"
    save_tensor(path, arr)
    np.testing.assert_array_equal(load_tensor(path), arr)


def test_tensor_format_layout():
    buf = io.BytesIO()
    write_tensor(buf, np.array([1.0, 2.0]))
    raw = buf.getvalue()
    assert raw[:4] == b"SUSC"
    assert raw[4:6] == (1).to_bytes(2, "little")       # format version
    assert raw[6:8] == (1).to_bytes(2, "little")       # rank
    assert raw[8:16] == (2).to_bytes(8, "little")      # dim
    assert np.frombuffer(raw[16:], dtype="<f8").tolist() == [1.0, 2.0]


def test_tensor_stream_multiple():
    buf = io.BytesIO()
    a = np.arange(6.0).reshape(2, 3)
    b = np.array([7.0])
    write_tensor(buf, a)
    write_tensor(buf, b)
    buf.seek(0)
    np.testing.assert_array_equal(read_tensor(buf), a)
    np.testing.assert_array_equal(read_tensor(buf), b)


def test_tensor_bad_magic():
    with pytest.raises(ValueError, match="magic"):
        read_tensor(io.BytesIO(b"NOPE" + b"\0" * 16))


def test_tensor_truncated():
    buf = io.BytesIO()
    write_tensor(buf, np.ones(10))
    data = buf.getvalue()[:-8]
    with pytest.raises(ValueError, match="truncated"):
        read_tensor(io.BytesIO(data))
