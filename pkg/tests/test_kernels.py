import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_network_spec
from solargrid import kernels
from solargrid.network import admittance_matrix, build_network
from solargrid.powerflow import solve_load_flow


def _state(seed, n):
    rng = np.random.default_rng(seed)
    Y = admittance_matrix(build_network(random_network_spec(rng, n)))
    vm = 1 + 0.05 * rng.standard_normal(n)
    va = 0.1 * rng.standard_normal(n)
    pvpq = np.arange(1, n, dtype=np.int64)
    pq = np.arange(2 if n > 2 else 1, n, dtype=np.int64)
    return vm, va, np.ascontiguousarray(Y.real), np.ascontiguousarray(Y.imag), pvpq, pq


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_loop_and_numpy_paths_agree(seed, n):
    vm, va, G, B, pvpq, pq = _state(seed, n)
    p1, q1 = kernels._injections_loop(vm, va, G, B)
    p2, q2 = kernels._injections_numpy(vm, va, G, B)
    assert np.allclose(p1, p2, atol=1e-12) and np.allclose(q1, q2, atol=1e-12)
    J1 = kernels._jacobian_loop(vm, va, G, B, p1, q1, pvpq, pq)
    J2 = kernels._jacobian_numpy(vm, va, G, B, p1, q1, pvpq, pq)
    assert np.allclose(J1, J2, atol=1e-10)


@pytest.mark.parametrize("impl", ["_jacobian_loop", "_jacobian_numpy"])
def test_jacobian_matches_finite_differences(impl):
    vm, va, G, B, pvpq, pq = _state(3, 7)
    p, q = kernels._injections_numpy(vm, va, G, B)
    J = getattr(kernels, impl)(vm, va, G, B, p, q, pvpq, pq)

    def f(x):
        a = va.copy()
        m = vm.copy()
        a[pvpq] = x[:pvpq.size]
        m[pq] = x[pvpq.size:]
        pp, qq = kernels._injections_numpy(m, a, G, B)
        return np.concatenate((pp[pvpq], qq[pq]))

    x0 = np.concatenate((va[pvpq], vm[pq]))
    h = 1e-6
    num = np.column_stack([(f(x0 + h * e) - f(x0 - h * e)) / (2 * h) for e in np.eye(x0.size)])
    assert np.allclose(J, num, atol=1e-6, rtol=1e-6)


@pytest.mark.parametrize("v,idx", [(0.90, 0), (0.85, 0), (1.0, 40), (1.00124, 40), (1.00126, 41),
                                   (1.10, 80), (1.3, 80)])
def test_voltage_bin(v, idx):
    assert kernels.voltage_bin(v, 0.90, 0.0025, 81) == idx


def test_greedy_prefers_first_on_ties():
    assert kernels.greedy_index(np.array([1.0, 1.0, 0.5])) == 0
    assert kernels.greedy_index(np.array([0.0, 2.0, 2.0])) == 1


def test_fallback_flag_selects_numpy_path(tmp_path):
    code = (
        "import json, numpy as np\n"
        "from solargrid import kernels, _accel\n"
        "from solargrid.network import load_network\n"
        "from solargrid.powerflow import solve_load_flow\n"
        "from solargrid.cli import reference_case_path\n"
        "import solargrid.network as n\n"
        "from solargrid.study import load_case\n"
        "s = solve_load_flow(load_case(reference_case_path()).network)\n"
        "print(json.dumps({'enabled': _accel.NUMBA_ENABLED,\n"
        "  'numpy': kernels.jacobian is kernels._jacobian_numpy, 'vm': s.vm.tolist()}))\n"
    )
    env = dict(os.environ, SOLARGRID_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    data = json.loads(out.stdout)
    assert data["enabled"] is False and data["numpy"] is True
    from solargrid.study import load_case
    from solargrid.cli import reference_case_path
    here = solve_load_flow(load_case(reference_case_path()).network)
    assert np.allclose(here.vm, data["vm"], atol=1e-10)
