import numpy as np
import pytest

from mtmerlin import _kernels
from mtmerlin.core import ComplexStack
from mtmerlin.preprocess import preprocess_stack

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba unavailable")


def _pair(name):
    return _kernels.get(name, "numpy"), _kernels.get(name, "numba")


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col_col2im_parity(dtype):
    g = np.random.default_rng(0)
    xp = g.standard_normal((2, 10, 12, 3)).astype(dtype)
    a, b = _pair("im2col3x3")
    cols = a(xp)
    assert np.array_equal(cols, b(xp))
    a, b = _pair("col2im3x3")
    assert np.array_equal(a(cols), b(cols))


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_maxpool_parity(dtype):
    g = np.random.default_rng(1)
    x = g.standard_normal((2, 8, 6, 4)).astype(dtype)
    x[0, 0, 0, 0] = x[0, 0, 1, 0]           # tie: first offset wins in both
    a, b = _pair("maxpool2")
    ya, ia = a(x)
    yb, ib = b(x)
    assert np.array_equal(ya, yb) and np.array_equal(ia, ib)
    dy = g.standard_normal(ya.shape).astype(dtype)
    a, b = _pair("maxpool2_backward")
    assert np.array_equal(a(dy, ia), b(dy, ib))


@pytest.mark.parametrize("dtype", [np.float64, np.complex128])
def test_box_sum_parity(dtype):
    g = np.random.default_rng(2)
    img = g.standard_normal((17, 13)).astype(dtype)
    if np.iscomplexobj(img):
        img += 1j * g.standard_normal((17, 13))
    a, b = _pair("box_sum")
    for half in (0, 1, 3, 20):
        np.testing.assert_allclose(a(img, half), b(img, half), rtol=1e-12, atol=1e-12)


def test_box_sum_against_direct_window():
    img = np.random.default_rng(3).standard_normal((9, 11))
    half = 2
    direct = np.array([[img[max(0, i - half):i + half + 1, max(0, j - half):j + half + 1].sum()
                        for j in range(11)] for i in range(9)])
    for which in ("numpy", "numba"):
        np.testing.assert_allclose(_kernels.get("box_sum", which)(img, half), direct, atol=1e-12)


def test_strict_local_max_parity():
    g = np.random.default_rng(4)
    a = g.standard_normal((15, 16))
    a[3, 3] = a[3, 4] = 10.0                 # plateau: neither is a strict maximum
    fa, fb = _pair("strict_local_max")
    assert np.array_equal(fa(a), fb(a))
    assert not fa(a)[3, 3] and not fa(a)[3, 4]


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("MTMERLIN_KERNELS", "numpy")
    assert _kernels.backend() == "numpy"
    monkeypatch.setenv("MTMERLIN_KERNELS", "numba")
    assert _kernels.backend() == "numba"


def test_pipeline_agrees_across_backends(monkeypatch):
    g = np.random.default_rng(5)
    z = ComplexStack.from_planes(g.standard_normal((3, 24, 24)) + 1j * g.standard_normal((3, 24, 24)))
    out = {}
    for which in ("numpy", "numba"):
        monkeypatch.setenv("MTMERLIN_KERNELS", which)
        out[which] = preprocess_stack(z, 1, stage_log=lambda rec: None).planes()
    np.testing.assert_allclose(out["numpy"], out["numba"], rtol=1e-10, atol=1e-12)
