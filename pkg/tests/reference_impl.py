"""
Naive full-matrix model of the heralded transfer, written out index by index.

Used as an oracle for the labeled-state pipeline. Only valid without spin
dephasing (T2* and T2 infinite), where the storage sequence is undone exactly.
"""

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (frequency, polarization, path) pairs and sign of each analyzed GHZ state
GHZ = {
    "xi+": ((0, 0, 0), (1, 1, 1), +1),
    "xi-": ((0, 0, 0), (1, 1, 1), -1),
    "chi+": ((1, 0, 1), (0, 1, 0), +1),
    "chi-": ((1, 0, 1), (0, 1, 0), -1),
}
CORRECTION = {"xi+": "Z", "xi-": "I", "chi+": "Y", "chi-": "X"}


def pair_density(init_error: float, reexcitation_weight: float) -> np.ndarray:
    """Spin-frequency density matrix, index 2 * spin + frequency."""
    ideal = np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2)
    flipped = np.array([0, -1, 1, 0], dtype=complex) / np.sqrt(2)
    rho = (1 - init_error) * np.outer(ideal, ideal.conj())
    rho += init_error * np.outer(flipped, flipped.conj())
    dephased = rho.copy()
    for i in range(4):
        for j in range(4):
            if i % 2 != j % 2:
                dephased[i, j] = 0
    return (1 - reexcitation_weight) * rho + reexcitation_weight * dephased


def encoding_isometry(psi: np.ndarray) -> np.ndarray:
    """|s, f> -> |s, f, psi, path = f>, index 8 s + 4 f + 2 p + x."""
    v = np.zeros((16, 4), dtype=complex)
    for s in (0, 1):
        for f in (0, 1):
            for p in (0, 1):
                v[8 * s + 4 * f + 2 * p + f, 2 * s + f] = psi[p]
    return v


def ghz_vector(name: str) -> np.ndarray:
    first, second, sign = GHZ[name]
    g = np.zeros(8, dtype=complex)
    g[4 * first[0] + 2 * first[1] + first[2]] = 1
    g[4 * second[0] + 2 * second[1] + second[2]] = sign
    return g / np.sqrt(2)


def transfer_fidelity(
    psi: np.ndarray, init_error: float, reexcitation_weight: float, readout_fidelity: float
) -> float:
    """Pooled heralded fidelity over the four analyzed outcomes."""
    v = encoding_isometry(psi)
    composite = v @ pair_density(init_error, reexcitation_weight) @ v.conj().T
    total, weighted = 0.0, 0.0
    for name in GHZ:
        g = ghz_vector(name)
        projector = np.kron(np.eye(2), np.outer(g, g.conj()))
        projected = (projector @ composite @ projector).reshape(2, 8, 2, 8)
        spin = np.einsum("aibi->ab", projected)
        weight = float(np.real(np.trace(spin)))
        if weight <= 0:
            continue
        c = PAULI[CORRECTION[name]]
        corrected = c @ spin @ c.conj().T / weight
        q = float(np.real(psi.conj() @ corrected @ psi))
        f = readout_fidelity * q + (1 - readout_fidelity) * (1 - q)
        total += weight
        weighted += weight * f
    return weighted / total
