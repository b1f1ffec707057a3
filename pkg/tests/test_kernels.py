import numpy as np
import pytest

from stopbranch import _kernels
from stopbranch._quadrature import PanelGrid
from stopbranch.simulator import simulate, replica_rng, run_replicas

from conftest import one

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _sweep_inputs(seed=0, panels=3, m=6, n=5, r=2):
    rng = np.random.default_rng(seed)
    g = PanelGrid.build(0.0, 1.5, m, panels)
    H = rng.random((panels, m, n, r))
    q = -rng.random(n) * 3
    C = g.nodes - 0.0
    return H, q, C, g.edges.copy(), g.weights, g.tail


@needs_numba
def test_backward_sweep_backends_agree():
    args = _sweep_inputs()
    a, Ta = _kernels.backward_sweep_numpy(*args)
    b, Tb = _kernels.backward_sweep_numba(*args)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
    assert np.allclose(Ta, Tb, rtol=1e-13, atol=1e-15)


def test_backward_sweep_exact_for_constant_integrand():
    # int_u^T exp(q (v - u)) dv = (exp(q (T - u)) - 1) / q
    H, q, C, edges, w, tail = _sweep_inputs()
    H = np.ones_like(H)
    out, T = _kernels.backward_sweep_numpy(H, q, C, edges, w, tail)
    u = C[..., None]
    exact = (np.exp(q * (1.5 - u)) - 1) / q
    assert np.allclose(out[..., 0], exact, atol=1e-12)
    assert np.allclose(T[:, 0], (np.exp(q * 1.5) - 1) / q, atol=1e-12)


@needs_numba
def test_forward_sweep_backends_agree():
    H, q, C, edges, w, tail = _sweep_inputs(seed=3)
    K = np.ascontiguousarray(H.transpose(0, 1, 3, 2))
    a, Ta = _kernels.forward_sweep(K, q, C, edges, w, tail, sweep=_kernels.backward_sweep_numpy)
    b, Tb = _kernels.forward_sweep(K, q, C, edges, w, tail, sweep=_kernels.backward_sweep_numba)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
    assert np.allclose(Ta, Tb, rtol=1e-13, atol=1e-15)


@needs_numba
def test_ssa_backends_draw_identical_paths(bd_law, S3):
    for r in range(20):
        a = simulate(bd_law, one(1), 0.0, 2.0, S3, replica_rng(5, r), backend=_kernels.ssa_run_python)
        b = simulate(bd_law, one(1), 0.0, 2.0, S3, replica_rng(5, r), backend=_kernels.ssa_run_numba)
        assert a == b


@needs_numba
def test_replica_outcomes_identical_across_backends(two_law):
    from stopbranch import Configuration

    start = Configuration.from_dense((1, 1))
    a = run_replicas(two_law, start, 0.0, 1.0, None, 300, 9, backend=_kernels.ssa_run_python)
    b = run_replicas(two_law, start, 0.0, 1.0, None, 300, 9, backend=_kernels.ssa_run_numba)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
