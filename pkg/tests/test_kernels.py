import math
import os
import subprocess
import sys

import numpy as np
import pytest

from doseopt import _kernels_py, kernels
from doseopt.kernels import DET_FLOOR, REL_TOL

try:
    from doseopt import _kernels as compiled
except ImportError:
    compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python"),
            pytest.param(compiled, id="cython",
                         marks=pytest.mark.skipif(compiled is None, reason="extension not built"))]


def spd(rng, m):
    A = rng.normal(size=(m, m))
    return A @ A.T + 0.1 * np.eye(m)


@pytest.mark.parametrize("impl", BACKENDS)
class TestLogdet:
    def test_matches_slogdet(self, impl):
        rng = np.random.default_rng(0)
        for m in (1, 3, 4, 5, 7):
            M = spd(rng, m)
            assert impl.logdet_psd(M, REL_TOL, DET_FLOOR) == pytest.approx(
                np.linalg.slogdet(M)[1], rel=1e-12, abs=1e-12)

    def test_singular(self, impl):
        v = np.array([[1.0, 2.0, 3.0]])
        assert impl.logdet_psd(v.T @ v, REL_TOL, DET_FLOOR) == -math.inf
        assert impl.logdet_psd(np.zeros((3, 3)), REL_TOL, DET_FLOOR) == -math.inf

    def test_det_floor(self, impl):
        M = np.diag([1e-160, 1e-160, 1.0])
        assert impl.logdet_psd(M, 0.0, DET_FLOOR) == -math.inf
        assert impl.logdet_psd(M, 0.0, 1e-320) == pytest.approx(-320 * math.log(10), rel=1e-12)


def random_batch(rng, P=17, A=5, K=6, m=4, singular_rows=()):
    G = rng.normal(size=(P, A, K, m))
    W = rng.dirichlet(np.ones(K), size=P)
    for p in singular_rows:
        W[p, :] = 0
        W[p, :2] = 0.5  # two points cannot span four dimensions
    probs = rng.dirichlet(np.ones(A))
    return G, W, probs


@pytest.mark.parametrize("impl", BACKENDS)
def test_batch_matches_direct_sum(impl):
    rng = np.random.default_rng(1)
    G, W, probs = random_batch(rng, singular_rows=(3, 8))
    out = impl.batch_criterion(G, W, probs, REL_TOL, DET_FLOOR)
    for p in range(G.shape[0]):
        mats = np.einsum("akr,k,akc->arc", G[p], W[p], G[p])
        if p in (3, 8):
            assert out[p] == -math.inf
        else:
            assert out[p] == pytest.approx(probs @ np.linalg.slogdet(mats)[1], rel=1e-12)


@pytest.mark.skipif(compiled is None, reason="extension not built")
def test_backends_agree():
    rng = np.random.default_rng(2)
    for _ in range(20):
        G, W, probs = random_batch(rng, P=40, A=int(rng.integers(1, 30)), K=9, m=5)
        a = _kernels_py.batch_criterion(G, W, probs, REL_TOL, DET_FLOOR)
        b = compiled.batch_criterion(G, W, probs, REL_TOL, DET_FLOOR)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_wrapper_accepts_read_only_and_non_contiguous():
    rng = np.random.default_rng(3)
    G, W, probs = random_batch(rng)
    probs.setflags(write=False)
    out = kernels.batch_criterion(G[:, :, ::-1, :], W[:, ::-1], probs)
    ref = kernels.batch_criterion(np.ascontiguousarray(G[:, :, ::-1, :]),
                                  np.ascontiguousarray(W[:, ::-1]), probs.copy())
    np.testing.assert_array_equal(out, ref)


@pytest.mark.parametrize("flag, expected", [("1", "python"), ("", None)])
def test_backend_selection(flag, expected):
    env = dict(os.environ, DOSEOPT_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "import doseopt; print(doseopt.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or ("cython" if compiled is not None else "python"))


def test_pure_python_pipeline_reproduces_example():
    code = ("import doseopt as d\n"
            "from conftest import emax_two_group, XI_BAYES\n"
            "s, pr, prior = emax_two_group()\n"
            "print(d.BACKEND, repr(d.bayes_logdet(s, XI_BAYES, prior)))\n")
    env = dict(os.environ, DOSEOPT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True, cwd=os.path.dirname(__file__)).stdout.split()
    assert out[0] == "python"
    assert float(out[1]) == pytest.approx(-10.103385711401014, abs=1e-12)
