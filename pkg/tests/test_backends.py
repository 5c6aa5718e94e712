import os
import subprocess
import sys

import numpy as np
import pytest

from ropeflow import ConfigError, set_num_threads
from ropeflow import _kernels_numpy as knp

knb = pytest.importorskip("ropeflow._kernels_numba")


def rand_inputs(seed=0, n=64, d=32):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    dy = rng.normal(size=(n, d))
    scores = rng.normal(size=(n, n)) * 3
    a = knp.softmax_rows(scores)
    da = rng.normal(size=(n, n))
    angles = rng.normal(size=(n, d // 2))
    return x, dy, scores, a, da, angles


def test_kernel_parity():
    """Both backends compute the same functions to near machine precision."""
    x, dy, scores, a, da, angles = rand_inputs(1)
    cos_t, sin_t = np.cos(angles), np.sin(angles)
    np.testing.assert_allclose(knb.gelu(x), knp.gelu(x), atol=1e-12)
    np.testing.assert_allclose(knb.gelu_grad(x, dy), knp.gelu_grad(x, dy),
                               atol=1e-12)
    np.testing.assert_allclose(knb.rotary_rotate(x, cos_t, sin_t),
                               knp.rotary_rotate(x, cos_t, sin_t), atol=1e-13)
    np.testing.assert_allclose(knb.softmax_rows(scores),
                               knp.softmax_rows(scores), atol=1e-13)
    np.testing.assert_allclose(knb.softmax_rows_grad(a, da),
                               knp.softmax_rows_grad(a, da), atol=1e-13)
    np.testing.assert_allclose(knb.entropy_rows(a, 1e-12),
                               knp.entropy_rows(a, 1e-12), atol=1e-12)


def test_gelu_reference_values():
    # gelu(0) = 0; gelu(x) ~ x for large x; odd-ish symmetry gelu(-x) = gelu(x) - x
    for k in (knp, knb):
        x = np.array([[0.0, 10.0, -10.0, 1.0]])
        g = k.gelu(x)
        assert g[0, 0] == 0.0
        assert abs(g[0, 1] - 10.0) < 1e-12
        assert abs(g[0, 2]) < 1e-12
        assert abs(g[0, 3] - 0.8413447460685429) < 1e-12  # x * Phi(1)


def test_gelu_grad_matches_fd():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 5))
    h = 1e-6
    for k in (knp, knb):
        grad = k.gelu_grad(x, np.ones_like(x))
        numeric = (k.gelu(x + h) - k.gelu(x - h)) / (2 * h)
        np.testing.assert_allclose(grad, numeric, atol=1e-8)


def test_softmax_rows_overflow_safe():
    scores = np.array([[1000.0, 1000.0, 0.0], [-2000.0, 0.0, 0.0]])
    for k in (knp, knb):
        a = k.softmax_rows(scores)
        assert np.all(np.isfinite(a))
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(a[0, :2], 0.5, atol=1e-12)


def test_entropy_rows_hand_values():
    rows = np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0],
                     [1 / 3, 1 / 3, 1 / 3]])
    for k in (knp, knb):
        h = k.entropy_rows(rows, 0.0)
        np.testing.assert_allclose(h, [np.log(2), 0.0, np.log(3)], atol=1e-12)


def test_set_num_threads_guard():
    with pytest.raises(ConfigError):
        set_num_threads(0)
    set_num_threads(1)  # must be accepted on any backend


def test_backend_env_selection():
    """ROPEFLOW_BACKEND=numpy forces the fallback in a fresh interpreter."""
    code = ("import ropeflow.backends as b; print(b.BACKEND)")
    env = dict(os.environ, ROPEFLOW_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"
    env["ROPEFLOW_BACKEND"] = "auto"
    out2 = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True)
    assert out2.stdout.strip() in ("numba", "numpy")
