"""Hot inner loops.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature.  The numba path is used when numba imports cleanly and the
environment variable ``PRIVSENSE_DISABLE_NUMBA`` is unset (or ``0``).

Bit convention: qubit ``q`` of an ``n``-qubit register is bit ``n - 1 - q``
of the basis index, so qubit 0 is the most significant bit.
"""

import os

import numpy as np

_DISABLED = os.environ.get("PRIVSENSE_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by PRIVSENSE_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def _parity_np(words):
    words = np.asarray(words, dtype=np.int64)
    return (np.bitwise_count(words) & 1).astype(np.int64)


def pauli_expectation_pure_np(psi, xmask, zmask, phase):
    idx = np.arange(psi.shape[0], dtype=np.int64)
    signs = 1.0 - 2.0 * _parity_np(idx & zmask)
    return phase * np.sum(np.conj(psi[idx ^ xmask]) * psi * signs)


def pauli_expectation_mixed_np(rho, xmask, zmask, phase):
    idx = np.arange(rho.shape[0], dtype=np.int64)
    signs = 1.0 - 2.0 * _parity_np(idx & zmask)
    return phase * np.sum(rho[idx, idx ^ xmask] * signs)


def basis_phase_weights_np(n_qubits, weights):
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    out = np.zeros(idx.shape[0])
    for q in range(n_qubits):
        out += weights[q] * ((idx >> (n_qubits - 1 - q)) & 1)
    return out


def parity_np(words):
    return _parity_np(words)


def bit_table_np(words, n_bits):
    words = np.asarray(words, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    return ((words[:, None] >> shifts[None, :]) & 1).astype(np.int8)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _popcount_parity(w):
        p = 0
        while w:
            w &= w - 1
            p ^= 1
        return p

    @njit(cache=True)
    def pauli_expectation_pure_nb(psi, xmask, zmask, phase):
        acc = 0j
        for x in range(psi.shape[0]):
            a = psi[x]
            if a == 0:
                continue
            term = np.conj(psi[x ^ xmask]) * a
            if _popcount_parity(x & zmask):
                acc -= term
            else:
                acc += term
        return phase * acc

    @njit(cache=True)
    def pauli_expectation_mixed_nb(rho, xmask, zmask, phase):
        acc = 0j
        for x in range(rho.shape[0]):
            term = rho[x, x ^ xmask]
            if _popcount_parity(x & zmask):
                acc -= term
            else:
                acc += term
        return phase * acc

    @njit(cache=True)
    def basis_phase_weights_nb(n_qubits, weights):
        dim = 1 << n_qubits
        out = np.zeros(dim)
        for x in range(dim):
            s = 0.0
            for q in range(n_qubits):
                if (x >> (n_qubits - 1 - q)) & 1:
                    s += weights[q]
            out[x] = s
        return out

    @njit(cache=True)
    def _parity_loop(words, out):
        for i in range(words.shape[0]):
            out[i] = _popcount_parity(words[i])

    def parity_nb(words):
        words = np.ascontiguousarray(words, dtype=np.int64)
        out = np.empty(words.shape[0], dtype=np.int64)
        _parity_loop(words.ravel(), out.ravel())
        return out

    @njit(cache=True)
    def _bit_table_loop(words, n_bits, out):
        for i in range(words.shape[0]):
            w = words[i]
            for b in range(n_bits):
                out[i, b] = (w >> (n_bits - 1 - b)) & 1

    def bit_table_nb(words, n_bits):
        words = np.ascontiguousarray(words, dtype=np.int64)
        out = np.empty((words.shape[0], n_bits), dtype=np.int8)
        _bit_table_loop(words, n_bits, out)
        return out

    pauli_expectation_pure = pauli_expectation_pure_nb
    pauli_expectation_mixed = pauli_expectation_mixed_nb
    basis_phase_weights = basis_phase_weights_nb
    # np.bitwise_count is a vectorised popcount and beats the jitted loop
    parity = parity_np
    bit_table = bit_table_nb
else:
    pauli_expectation_pure = pauli_expectation_pure_np
    pauli_expectation_mixed = pauli_expectation_mixed_np
    basis_phase_weights = basis_phase_weights_np
    parity = parity_np
    bit_table = bit_table_np


def backend_name():
    return "numba" if HAS_NUMBA else "numpy"
