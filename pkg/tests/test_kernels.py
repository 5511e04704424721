"""Numeric agreement between the compiled and numpy kernel backends."""

import os
import subprocess
import sys

import numpy as np
import pytest

from ister import kernels
from ister.kernels import pykernels

from gradcheck import central_difference, rel_err

ck = pytest.importorskip(
    "ister.kernels._ckernels", reason="compiled kernels not built in this environment"
)

TOL = 1e-12


@pytest.fixture(autouse=True)
def keep_backend():
    before = kernels.get_backend()
    yield
    kernels.set_backend(before)


def rng_mats(seed, rows=17, width=23):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, width)) * 3.0


# -- forward/backward agreement ------------------------------------------------------


def test_softmax_backends_agree():
    x = rng_mats(0)
    a = pykernels.softmax_lastaxis_fwd(x.copy())
    b = ck.softmax_lastaxis_fwd(x.copy())
    assert rel_err(a, b) < TOL
    np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-14)
    gy = rng_mats(1)
    ga = pykernels.softmax_lastaxis_bwd(a, gy)
    gb = ck.softmax_lastaxis_bwd(b, gy)
    assert rel_err(ga, gb) < TOL


def test_softmax_large_inputs_stable():
    x = rng_mats(2) + 800.0  # would overflow exp without the max shift
    for fwd in (pykernels.softmax_lastaxis_fwd, ck.softmax_lastaxis_fwd):
        y = fwd(x.copy())
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-14)


def test_gelu_backends_agree():
    x = rng_mats(3)
    a = pykernels.gelu_fwd(x)
    b = ck.gelu_fwd(x)
    assert rel_err(a, b) < TOL
    gy = rng_mats(4)
    assert rel_err(pykernels.gelu_bwd(x, gy), ck.gelu_bwd(x, gy)) < TOL


def test_gelu_limits():
    x = np.array([[0.0, 8.0, -8.0]])
    for fwd in (pykernels.gelu_fwd, ck.gelu_fwd):
        y = fwd(x)
        assert y[0, 0] == 0.0
        assert y[0, 1] == pytest.approx(8.0, abs=1e-9)
        assert y[0, 2] == pytest.approx(0.0, abs=1e-9)


def test_gelu_bwd_matches_finite_difference():
    x = np.linspace(-3.0, 3.0, 41).reshape(1, -1)
    gy = np.ones_like(x)
    for mod in (pykernels, ck):
        probe = x.copy()
        fd = central_difference(lambda: float(mod.gelu_fwd(probe).sum()), [probe], eps=1e-6)[0]
        assert rel_err(mod.gelu_bwd(x, gy), fd) < 1e-8


def test_layernorm_backends_agree():
    x = rng_mats(5)
    ya, ra = pykernels.layernorm_lastaxis_fwd(x.copy(), 1e-5)
    yb, rb = ck.layernorm_lastaxis_fwd(x.copy(), 1e-5)
    assert rel_err(ya, yb) < TOL
    assert rel_err(ra, rb) < TOL
    np.testing.assert_allclose(ya.mean(axis=-1), 0.0, atol=1e-13)
    gy = rng_mats(6)
    ga = pykernels.layernorm_lastaxis_bwd(ya, ra, gy)
    gb = ck.layernorm_lastaxis_bwd(yb, rb, gy)
    assert rel_err(ga, gb) < TOL


def test_layernorm_bwd_matches_finite_difference():
    x = rng_mats(7, rows=3, width=9)
    gy = rng_mats(8, rows=3, width=9)
    for mod in (pykernels, ck):
        probe = x.copy()

        def loss():
            y, _ = mod.layernorm_lastaxis_fwd(probe, 1e-5)
            return float((y * gy).sum())

        fd = central_difference(loss, [probe], eps=1e-6)[0]
        y, rstd = mod.layernorm_lastaxis_fwd(x, 1e-5)
        assert rel_err(mod.layernorm_lastaxis_bwd(y, rstd, gy), fd) < 1e-7


@pytest.mark.parametrize("kernel", [1, 3, 5, 8, 25])
def test_moving_average_backends_agree(kernel):
    rng = np.random.default_rng(kernel)
    x = rng.standard_normal((40, 3))
    a = pykernels.moving_average_replicate(x, kernel)
    b = ck.moving_average_replicate(x, kernel)
    assert rel_err(a, b) < TOL
    # oracle: explicit replicate-pad then windowed mean
    front, back = (kernel - 1) // 2, kernel // 2
    padded = np.concatenate([np.repeat(x[:1], front, 0), x, np.repeat(x[-1:], back, 0)])
    expect = np.stack([padded[t : t + kernel].mean(axis=0) for t in range(40)])
    assert rel_err(a, expect) < 1e-12


def test_adam_backends_agree():
    rng = np.random.default_rng(9)
    shapes = [(4, 6), (13,), (2, 3, 5)]
    params_a = [rng.standard_normal(s) for s in shapes]
    grads = [rng.standard_normal(s) for s in shapes]
    params_b = [p.copy() for p in params_a]
    # run 3 steps on each backend with fresh moment buffers
    for mod, params in ((pykernels, params_a), (ck, params_b)):
        ms = [np.zeros(s) for s in shapes]
        vs = [np.zeros(s) for s in shapes]
        for t in (1, 2, 3):
            for p, grad, m, v in zip(params, grads, ms, vs):
                mod.adam_update(p, grad * t, m, v, t, 1e-2, 0.9, 0.999, 1e-8)
    for pa, pb in zip(params_a, params_b):
        assert rel_err(pa, pb) < TOL


def test_adam_compiled_rejects_noncontiguous():
    p = np.zeros((4, 4)).T[::2]  # not C-contiguous
    z = np.zeros_like(p)
    with pytest.raises(ValueError):
        ck.adam_update(p, z, z.copy(), z.copy(), 1, 1e-3, 0.9, 0.999, 1e-8)


# -- backend selection ---------------------------------------------------------------


def test_available_backends_lists_both():
    assert kernels.available_backends() == ("compiled", "python")


def test_set_backend_switches_bindings():
    kernels.set_backend("python")
    assert kernels.get_backend() == "python"
    assert kernels.gelu_fwd is pykernels.gelu_fwd
    kernels.set_backend("compiled")
    assert kernels.get_backend() == "compiled"
    assert kernels.gelu_fwd is ck.gelu_fwd
    kernels.set_backend("auto")
    assert kernels.get_backend() == "compiled"


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")


def test_env_override_forces_python_backend():
    env = dict(os.environ, ISTER_KERNELS="python")
    proc = subprocess.run(
        [sys.executable, "-c", "from ister import kernels; print(kernels.get_backend())"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "python"


def test_model_outputs_match_across_backends():
    """End-to-end: one forward/backward pass agrees between backends."""
    from ister.engine import Tape, reduce_mean
    from ister.model import IsterModel, ModelConfig

    config = ModelConfig(T=16, S=4, N=3, D=8, k=1, blocks=1, dropout=0.0, decomp_kernel=3)
    rng = np.random.default_rng(11)
    x = np.cumsum(rng.standard_normal((16, 3)), axis=0)

    results = {}
    for name in ("python", "compiled"):
        kernels.set_backend(name)
        model = IsterModel(config, seed=0)
        prepared = model.prepare_window(x)
        with Tape() as tape:
            pred, _ = model.forward_prepared([prepared])
            loss = reduce_mean(pred * pred)
            tape.backward(loss)
        grads = {k: p.grad.copy() for k, p in model.parameters().items()}
        results[name] = (pred.data.copy(), grads)

    pred_py, grads_py = results["python"]
    pred_c, grads_c = results["compiled"]
    assert rel_err(pred_py, pred_c) < 1e-10
    for key in grads_py:
        assert rel_err(grads_py[key], grads_c[key]) < 1e-9, key
