import numpy as np
import pytest

from rieszlab import _backend, _pykernels

ck = pytest.importorskip("rieszlab._ckernels")


@pytest.mark.parametrize("p", [-1.0, -1.5, -0.3])
def test_pair_power_matches_fallback(p):
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(300, 3)), rng.normal(size=(200, 3))
    assert np.allclose(ck.pair_power(X, Y, p), _pykernels.pair_power(X, Y, p), rtol=1e-13)
    # coincident points give zero, to be filled by the diagonal rule
    K = ck.pair_power(X, X, p)
    assert np.all(np.diag(K) == 0) and np.array_equal(np.diag(_pykernels.pair_power(X, X, p)), np.diag(K))


def test_apply_power_matches_fallback():
    rng = np.random.default_rng(1)
    X, P, m = rng.normal(size=(500, 3)), rng.normal(size=(70, 3)) + 5, rng.random(500)
    assert np.allclose(ck.apply_power(X, m, P, -1.0), _pykernels.apply_power(X, m, P, -1.0), rtol=1e-13)


def test_greedy_transport_matches_fallback():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A, B = rng.normal(size=(15, 3)), rng.normal(size=(12, 3))
        a, b = rng.random(15), rng.random(12)
        assert ck.greedy_transport(A, a, B, b, 2.0) == pytest.approx(
            _pykernels.greedy_transport(A, a, B, b, 2.0), rel=1e-12)


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


def test_env_forces_pure_python():
    import os
    import subprocess
    import sys
    env = dict(os.environ, RIESZLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import rieszlab; print(rieszlab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"
