import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from privsense import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba backend not active")

seeds = st.integers(0, 2**31 - 1)
qubits = st.integers(1, 7)


def masks(n):
    return st.tuples(st.integers(0, (1 << n) - 1), st.integers(0, (1 << n) - 1))


@needs_numba
@given(qubits, seeds, st.data())
def test_pure_expectation_paths_agree(n, seed, data):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    xm, zm = data.draw(masks(n))
    phase = complex(data.draw(st.sampled_from([1, -1, 1j, -1j])))
    a = _kernels.pauli_expectation_pure_np(psi, xm, zm, phase)
    b = _kernels.pauli_expectation_pure_nb(psi, xm, zm, phase)
    assert abs(a - b) < 1e-12


@needs_numba
@given(st.integers(1, 5), seeds, st.data())
def test_mixed_expectation_paths_agree(n, seed, data):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    xm, zm = data.draw(masks(n))
    a = _kernels.pauli_expectation_mixed_np(rho, xm, zm, 1j)
    b = _kernels.pauli_expectation_mixed_nb(rho, xm, zm, 1j)
    assert abs(a - b) < 1e-12


@needs_numba
@given(qubits, st.data())
def test_phase_weights_paths_agree(n, data):
    w = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    assert np.allclose(_kernels.basis_phase_weights_np(n, w), _kernels.basis_phase_weights_nb(n, w))


@needs_numba
@given(st.lists(st.integers(0, 2**40), min_size=1, max_size=200), st.integers(1, 41))
def test_bit_helpers_paths_agree(words, n_bits):
    arr = np.array(words, dtype=np.int64)
    assert np.array_equal(_kernels.parity_np(arr), _kernels.parity_nb(arr))
    assert np.array_equal(_kernels.bit_table_np(arr, n_bits), _kernels.bit_table_nb(arr, n_bits))


def test_parity_reference():
    words = np.array([0, 1, 3, 7, 0b1011], dtype=np.int64)
    assert list(_kernels.parity_np(words)) == [0, 1, 0, 1, 1]


def test_bit_table_msb_first():
    assert _kernels.bit_table_np(np.array([0b100]), 3).tolist() == [[1, 0, 0]]


def test_phase_weights_msb_first():
    assert _kernels.basis_phase_weights_np(2, np.array([1.0, 10.0])).tolist() == [0, 10, 1, 11]


def test_env_flag_selects_numpy():
    env = dict(os.environ, PRIVSENSE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import privsense; print(privsense.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
