"""Independent dense-matrix oracles for tests.

Basis index bit q is qubit q, so in a Kronecker product qubit 0 is the
rightmost factor.  Nothing here imports the package's simulators.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
LETTER = {"I": I2, "X": X, "Y": Y, "Z": Z}
PHASE = {"": 1, "+": 1, "-": -1, "i": 1j, "+i": 1j, "-i": -1j}


def dense_pauli(label):
    body = label.lstrip("+-i")
    out = np.ones((1, 1), dtype=complex)
    for ch in reversed(body):
        out = np.kron(out, LETTER[ch])
    return PHASE[label[: len(label) - len(body)]] * out


def embed(u, qubits, n):
    """Full-register matrix of a local unitary; ``qubits[0]`` is the local MSB."""
    k = len(qubits)
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        loc = 0
        for j, q in enumerate(qubits):
            loc |= ((col >> q) & 1) << (k - 1 - j)
        for row_loc in range(1 << k):
            amp = u[row_loc, loc]
            if amp == 0:
                continue
            row = col
            for j, q in enumerate(qubits):
                bit = (row_loc >> (k - 1 - j)) & 1
                row = (row & ~(1 << q)) | (bit << q)
            out[row, col] += amp
    return out


CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
LOCAL = {"H": H, "S": S, "SDG": S.conj().T, "X": X, "Y": Y, "Z": Z, "I": I2, "CX": CX, "CZ": CZ, "SWAP": SWAP}


def dense_gate(name, qubits, n):
    return embed(LOCAL[name], qubits, n)


def rotation(label, theta):
    p = dense_pauli(label)
    return np.cos(theta / 2) * np.eye(len(p)) - 1j * np.sin(theta / 2) * p


def equal_up_to_phase(a, b, tol=1e-10):
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[idx]) < tol:
        return False
    phase = a[idx] / b[idx]
    return abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol)


def statevector_expectation(unitary, observable):
    psi = unitary[:, 0]
    return float(np.real(np.vdot(psi, observable @ psi)))
