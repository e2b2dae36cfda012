import os
import subprocess
import sys

import numpy as np
import pytest

from pdocalc import _kernels
from pdocalc.spectral_core import circle_spectrum, contour_nodes, default_contour

needs_numba = pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not importable")


@needs_numba
@pytest.mark.parametrize("power", [1, 2, 3])
def test_contour_sum_backends_agree(power):
    spec = circle_spectrum()
    contour = default_contour(spec, -0.5, power - 1, 64, node_count=512)
    nodes, weights = contour_nodes(contour, -0.5)
    mu = spec.values(64)
    a = _kernels.contour_sum_numpy(nodes, weights, mu, power)
    b = _kernels.contour_sum_numba(nodes, weights, mu, power)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


@needs_numba
@pytest.mark.parametrize("dtype", [np.float64, np.complex128])
def test_commutator_levels_backends_agree(dtype):
    rng = np.random.default_rng(0)
    rows = rng.integers(0, 50, 200)
    cols = rng.integers(0, 50, 200)
    vals = rng.standard_normal(200).astype(dtype)
    if dtype is np.complex128:
        vals = vals + 1j * rng.standard_normal(200)
    f = np.sqrt(np.arange(1, 51) ** 2 + 1.0)
    a = _kernels.commutator_levels_numpy(rows, cols, vals, f, 4)
    b = _kernels.commutator_levels_numba(rows, cols, vals, f, 4)
    assert a.dtype == b.dtype
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_backend_reported():
    assert _kernels.backend() in ("numba", "numpy")


def test_env_flag_forces_numpy():
    env = dict(os.environ, PDOCALC_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from pdocalc import _kernels; print(_kernels.backend())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
