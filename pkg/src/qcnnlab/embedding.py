"""Map classical pixel vectors into quantum states.

Amplitude embedding writes N normalized pixel values into the first N
amplitudes of a 2**n register (zero-padded past the pixels), which is the
encoding every experiment in this lab uses.  Single-value qubit embedding
is provided for completeness but is not wired into the classifier.
"""

from __future__ import annotations

import numpy as np


class EmbeddingError(ValueError):
    pass


class AllZeroImage(EmbeddingError):
    pass


class RegisterTooSmall(EmbeddingError):
    pass


class OutOfRange(EmbeddingError):
    pass


def amplitude_embed(pixels, n_qubits: int) -> np.ndarray:
    """Normalize ``pixels`` into the amplitudes of an ``n_qubits`` register.

    amps[i] = pixels[i] / ||pixels|| for i < N, zero past that.  Pixels are
    flattened row-major if 2-D.
    """
    values = np.asarray(pixels, dtype=np.float64).reshape(-1)
    dim = 2**n_qubits
    if len(values) > dim:
        raise RegisterTooSmall(f"{len(values)} pixels need more than {n_qubits} qubits")
    norm = np.linalg.norm(values)
    if norm == 0.0:
        raise AllZeroImage("cannot amplitude-embed an all-zero image")
    state = np.zeros(dim, dtype=np.complex128)
    state[: len(values)] = values / norm
    return state


def qubit_embed(x: float) -> np.ndarray:
    """One-qubit state cos(pi*x/2)|0> + sin(pi*x/2)|1> for x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise OutOfRange(f"qubit_embed expects x in [0, 1], got {x}")
    angle = np.pi * x
    return np.array([np.cos(angle / 2), np.sin(angle / 2)], dtype=np.complex128)
