import numpy as np
import pytest

from qframes import _kernels
from qframes.polmath import random_unitary

needs_ext = pytest.mark.skipif(_kernels.compiled is None, reason="compiled extension not built")
BACKENDS = [_kernels.python] + ([_kernels.compiled] if _kernels.compiled is not None else [])


@needs_ext
@pytest.mark.parametrize("n", [0, 1, 7, 100_000])
def test_prepare_identical(n):
    e = np.array([0.01, 0.2, 0.0, 0.5])
    a = _kernels.compiled.prepare_slots(np.random.default_rng(1), n, 0.8, 0.95, e)
    b = _kernels.python.prepare_slots(np.random.default_rng(1), n, 0.8, 0.95, e)
    for x, y in zip(a, b):
        assert x.dtype == y.dtype and np.array_equal(x, y)


@needs_ext
def test_detect_identical():
    rng = np.random.default_rng(2)
    ptab = rng.random((24, 4))
    rows = rng.integers(0, 24, 200_000).astype(np.int16)
    a = _kernels.compiled.detect_slots(np.random.default_rng(5), rows, ptab)
    b = _kernels.python.detect_slots(np.random.default_rng(5), rows, ptab)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@needs_ext
@pytest.mark.parametrize("clock0", [0, 999, 123_456])
def test_drift_identical(clock0):
    m = random_unitary(np.random.default_rng(0)).m
    normals = np.random.default_rng(3).standard_normal((5000, 4))
    a = _kernels.compiled.drift_walk(m, normals, 1e-3, clock0)
    b = _kernels.python.drift_walk(m, normals, 1e-3, clock0)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("k", BACKENDS, ids=lambda k: k.BACKEND)
def test_detect_stream_consumption(k):
    # six uniforms per slot, whatever the outcome
    rng = np.random.default_rng(11)
    k.detect_slots(rng, np.zeros(1000, dtype=np.int16), np.full((1, 4), 0.5))
    ref = np.random.default_rng(11)
    ref.random((1000, 6))
    assert rng.random() == ref.random()


@pytest.mark.parametrize("k", BACKENDS, ids=lambda k: k.BACKEND)
def test_detect_probabilities(k):
    n = 200_000
    p = np.array([[0.3, 0.0, 1.0, 0.05]])
    clicks, bit, basis, squashed = k.detect_slots(np.random.default_rng(4), np.zeros(n, dtype=np.int16), p)
    for j, pj in enumerate(p[0]):
        frac = np.count_nonzero(clicks & (1 << j)) / n
        assert abs(frac - pj) <= 4 * np.sqrt(pj * (1 - pj) / n) + 1e-12
    assert (basis >= 0).all()


def test_backend_selection():
    assert _kernels.BACKEND in ("cython", "python")
    if _kernels.compiled is not None:
        assert _kernels.BACKEND == "cython"
