"""Exact state-vector simulation of few-qubit registers.

States are plain numpy arrays of 2**n complex amplitudes.  Qubit 0 is the
least-significant bit of the basis-state index, so basis state |q1 q0> = |10>
sits at index 2.  Gates are dense 2x2 or 4x4 complex matrices; for a
multi-qubit gate the first entry of ``targets`` addresses the most
significant bit of the gate's own index.

All amplitudes are double precision; the unitarity and norm tolerances used
by the test suite (1e-10 / 1e-12) assume that.  Global phase is never
tracked or normalized.
"""

from __future__ import annotations

import numpy as np


class SimulatorError(ValueError):
    """Base class for contract violations in the simulator."""


class AxisNotNormalized(SimulatorError):
    pass


class TargetOutOfRange(SimulatorError):
    pass


class DuplicateTarget(SimulatorError):
    pass


class DimensionMismatch(SimulatorError):
    pass


class NotUnitary(SimulatorError):
    pass


class TooManyQubits(SimulatorError):
    pass


# Fixed gates.  CNOT applies X on the target (second wire listed) when the
# control (first wire listed) is |1>.
I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]],
    dtype=np.complex128,
)

PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def fixed_gates() -> dict[str, np.ndarray]:
    """Standard non-parametric gates (fresh copies)."""
    return {"X": X.copy(), "Y": Y.copy(), "Z": Z.copy(), "H": H.copy(), "CNOT": CNOT.copy()}


def num_qubits(state: np.ndarray) -> int:
    n = int(len(state)).bit_length() - 1
    if 2**n != len(state):
        raise DimensionMismatch(f"state length {len(state)} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    """|0...0> on ``n_qubits`` wires."""
    state = np.zeros(2**n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    """General single-qubit unitary from its three Euler-like angles.

    U = [[cos(t/2),            -e^{i*lam} sin(t/2)],
         [e^{i*phi} sin(t/2),   e^{i*(phi+lam)} cos(t/2)]]
    """
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s],
         [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=np.complex128,
    )


def u3_matrix_grads(theta: float, phi: float, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entrywise partial derivatives of :func:`u3_matrix` wrt (theta, phi, lam)."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ep, el, epl = np.exp(1j * phi), np.exp(1j * lam), np.exp(1j * (phi + lam))
    d_theta = 0.5 * np.array(
        [[-s, -el * c],
         [ep * c, -epl * s]],
        dtype=np.complex128,
    )
    d_phi = np.array(
        [[0, 0],
         [1j * ep * s, 1j * epl * c]],
        dtype=np.complex128,
    )
    d_lam = np.array(
        [[0, -1j * el * s],
         [0, 1j * epl * c]],
        dtype=np.complex128,
    )
    return d_theta, d_phi, d_lam


def axis_rotation_matrix(alpha: float, axis: tuple[float, float, float]) -> np.ndarray:
    """exp(-i*(alpha/2)*(n . sigma)) for a unit axis n = (nx, ny, nz)."""
    nx, ny, nz = axis
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    if abs(norm - 1.0) > 1e-9:
        raise AxisNotNormalized(f"axis norm {norm} differs from 1 by more than 1e-9")
    n_dot_sigma = nx * X + ny * Y + nz * Z
    return np.cos(alpha / 2) * I2 - 1j * np.sin(alpha / 2) * n_dot_sigma


def ising_matrix(kind: str, theta: float) -> np.ndarray:
    """Two-qubit rotation exp(-i*(theta/2)*P(x)P) for kind in {"XX","YY","ZZ"}.

    (P(x)P)^2 = I, so the closed form is cos(theta/2)*I - i*sin(theta/2)*P(x)P.
    """
    if kind not in ("XX", "YY", "ZZ"):
        raise SimulatorError(f"unknown Ising kind {kind!r}")
    p = PAULIS[kind[0]]
    pp = np.kron(p, p)
    return np.cos(theta / 2) * np.eye(4, dtype=np.complex128) - 1j * np.sin(theta / 2) * pp


def ising_matrix_grad(kind: str, theta: float) -> np.ndarray:
    """d/dtheta of :func:`ising_matrix`."""
    p = PAULIS[kind[0]]
    pp = np.kron(p, p)
    return -0.5 * np.sin(theta / 2) * np.eye(4, dtype=np.complex128) - 0.5j * np.cos(theta / 2) * pp


def is_unitary(g: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0]))) <= tol)


def controlled(g: np.ndarray) -> np.ndarray:
    """Block-diagonal [I, g]: acts as g on the target iff the control is |1>.

    Apply with targets (control, target).  controlled(X) is CNOT.
    """
    if g.shape != (2, 2):
        raise DimensionMismatch(f"controlled() expects a 2x2 gate, got {g.shape}")
    if not is_unitary(g, tol=1e-9):
        raise NotUnitary("controlled() requires a unitary gate")
    out = np.eye(4, dtype=np.complex128)
    out[2:, 2:] = g
    return out


def _check_targets(n: int, targets: tuple[int, ...]) -> None:
    for q in targets:
        if not 0 <= q < n:
            raise TargetOutOfRange(f"qubit {q} out of range for {n}-qubit register")
    if len(set(targets)) != len(targets):
        raise DuplicateTarget(f"duplicate target in {targets}")


def apply_gate(state: np.ndarray, g: np.ndarray, targets) -> np.ndarray:
    """Apply ``g`` to the listed qubits of ``state``; identity elsewhere.

    ``targets[0]`` is the most significant bit of the gate's own index, so a
    4x4 block-diagonal controlled gate takes targets (control, target).
    Returns a new array; the input is never mutated.
    """
    targets = tuple(int(t) for t in targets)
    n = num_qubits(state)
    _check_targets(n, targets)
    k = len(targets)
    if g.shape != (2**k, 2**k):
        raise DimensionMismatch(f"gate shape {g.shape} does not match {k} target(s)")
    # Axis n-1-q holds qubit q after reshaping to [2]*n (index MSB first).
    psi = state.reshape([2] * n)
    axes = [n - 1 - q for q in targets]
    psi = np.moveaxis(psi, axes, range(k))
    psi = g @ psi.reshape(2**k, -1)
    psi = np.moveaxis(psi.reshape([2] * n), range(k), axes)
    return np.ascontiguousarray(psi).reshape(-1)


def readout_prob_one(state: np.ndarray, qubit: int) -> float:
    """Probability that measuring ``qubit`` yields 1."""
    n = num_qubits(state)
    if not 0 <= qubit < n:
        raise TargetOutOfRange(f"qubit {qubit} out of range for {n}-qubit register")
    mask = (np.arange(len(state)) >> qubit) & 1
    return float(np.sum(np.abs(state[mask == 1]) ** 2))


def expand_gate(g: np.ndarray, targets, n_qubits: int) -> np.ndarray:
    """Kronecker-expand ``g`` to the full 2**n x 2**n register matrix.

    Builds kron(g, I) on a register reordered as (targets..., rest...) and
    permutes basis indices back to the qubit-0-least-significant convention.
    """
    targets = tuple(int(t) for t in targets)
    _check_targets(n_qubits, targets)
    k = len(targets)
    if g.shape != (2**k, 2**k):
        raise DimensionMismatch(f"gate shape {g.shape} does not match {k} target(s)")
    rest = [q for q in range(n_qubits) if q not in targets]
    big = np.kron(g, np.eye(2 ** len(rest), dtype=np.complex128))
    # big's index = (gate bits, rest bits); map each to the original index.
    to_original = np.empty(2**n_qubits, dtype=np.int64)
    for gi in range(2**k):
        gpart = 0
        for j, t in enumerate(targets):
            gpart |= ((gi >> (k - 1 - j)) & 1) << t
        for si in range(2 ** len(rest)):
            spart = 0
            for j, q in enumerate(rest):
                spart |= ((si >> (len(rest) - 1 - j)) & 1) << q
            to_original[(gi << len(rest)) | si] = gpart | spart
    perm = np.argsort(to_original)  # original index -> big index
    return big[np.ix_(perm, perm)]


def dense_circuit_oracle(gates, n_qubits: int) -> np.ndarray:
    """Full-register matrix of a gate list, for cross-checking apply_gate.

    ``gates`` is a sequence of (matrix, targets) applied in order.  Test-scale
    only: refuses registers above 10 qubits.
    """
    if n_qubits > 10:
        raise TooManyQubits(f"dense oracle limited to 10 qubits, got {n_qubits}")
    full = np.eye(2**n_qubits, dtype=np.complex128)
    for g, targets in gates:
        full = expand_gate(g, targets, n_qubits) @ full
    return full
