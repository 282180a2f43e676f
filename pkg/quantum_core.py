"""
Dense density-matrix algebra for small qubit registers.

Qubit 0 is the leftmost tensor factor (most significant bit of a basis
index), so kron(X, I) flips qubit 0. All functions are pure and return new
DensityMatrix objects.
"""
from typing import Iterable, List, Optional, Sequence
import logging
import math

import numpy as np

import config
from errors import DimensionError, ParameterError
from models import DensityMatrix, DensityReport, GateOp, QubitSubset

logger = logging.getLogger(__name__)

_SQ = 1.0 / math.sqrt(2.0)

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

FIXED_GATES = {
    "H": np.array([[_SQ, _SQ], [_SQ, -_SQ]], dtype=np.complex128),
    "X": PAULI["X"],
    "S": np.diag([1, 1j]).astype(np.complex128),
    "T": np.diag([1, np.exp(1j * math.pi / 4)]).astype(np.complex128),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
    ),
}
for _m in list(PAULI.values()) + list(FIXED_GATES.values()):
    _m.setflags(write=False)


_ROTATION_GENERATORS = {"RX": "X", "RH": "H", "RCNOT": "CNOT"}


def gate_matrix(gate: str, param: Optional[float] = None) -> np.ndarray:
    """Unitary of a gate from the public set (parametric gates take an angle)."""
    if gate == "RZ":
        return np.diag([np.exp(-0.5j * param), np.exp(0.5j * param)])
    if gate == "RY":
        c, s = math.cos(param / 2), math.sin(param / 2)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if gate in _ROTATION_GENERATORS:
        g = FIXED_GATES[_ROTATION_GENERATORS[gate]]
        return math.cos(param / 2) * np.eye(g.shape[0]) - 1j * math.sin(param / 2) * g
    if gate not in FIXED_GATES:
        raise ParameterError(f"unknown gate {gate!r}")
    return FIXED_GATES[gate]


def op_matrix(op: GateOp) -> np.ndarray:
    return gate_matrix(op.gate, op.param)


# --- Construction ---

def make_density(matrix: np.ndarray, num_qubits: Optional[int] = None) -> DensityMatrix:
    """
    Wrap a square matrix as a DensityMatrix after checking the size guard.

    Raises:
        DimensionError: matrix is not 2^n x 2^n
        ParameterError: n exceeds the ambient cap
    """
    arr = np.asarray(matrix, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    n = int(round(math.log2(arr.shape[0]))) if arr.shape[0] > 0 else -1
    if n < 0 or 2 ** n != arr.shape[0]:
        raise DimensionError(f"dimension {arr.shape[0]} is not a power of two")
    if num_qubits is not None and num_qubits != n:
        raise DimensionError(f"matrix has {n} qubits, expected {num_qubits}")
    if n > config.max_qubits():
        raise ParameterError(f"{n} qubits exceeds the cap of {config.max_qubits()}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("matrix entries must be finite")
    return DensityMatrix(num_qubits=n, matrix=arr)


def basis_density(num_qubits: int, index: int = 0) -> DensityMatrix:
    dim = 2 ** num_qubits
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[index, index] = 1.0
    return make_density(m, num_qubits)


def pure_density(vector: Sequence[complex]) -> DensityMatrix:
    psi = np.asarray(vector, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    return make_density(np.outer(psi, psi.conj()))


def maximally_mixed(num_qubits: int) -> DensityMatrix:
    dim = 2 ** num_qubits
    return make_density(np.eye(dim, dtype=np.complex128) / dim, num_qubits)


def random_density(num_qubits: int, seed: int, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre-distributed random state; rank=1 gives a Haar-random pure state."""
    dim = 2 ** num_qubits
    rng = np.random.default_rng(seed)
    r = dim if rank is None else rank
    g = rng.normal(size=(dim, r)) + 1j * rng.normal(size=(dim, r))
    m = g @ g.conj().T
    return make_density(m / np.trace(m).real, num_qubits)


def pauli_string_matrix(label: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis, e.g. 'XIZ'."""
    result = np.ones((1, 1), dtype=np.complex128)
    for ch in label:
        result = np.kron(result, PAULI[ch])
    return result


# --- Operations ---

def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product with the ambient size guard."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    limit = 2 ** config.max_qubits()
    rows, cols = a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]
    if rows > limit or cols > limit:
        raise ParameterError(f"tensor product of size {rows}x{cols} exceeds the cap of {limit}")
    return np.kron(a, b)


def _contract(tensor: np.ndarray, u: np.ndarray, axes: List[int]) -> np.ndarray:
    """Apply u to the given tensor axes, keeping axis order."""
    a = len(axes)
    u_t = u.reshape((2,) * (2 * a))
    out = np.tensordot(u_t, tensor, axes=(list(range(a, 2 * a)), axes))
    return np.moveaxis(out, list(range(a)), axes)


def apply_unitary(rho: DensityMatrix, u: np.ndarray, targets: Sequence[int]) -> DensityMatrix:
    """Return U rho U^dagger with U acting on `targets` (identity elsewhere)."""
    n = rho.num_qubits
    targets = list(targets)
    if any(t < 0 or t >= n for t in targets):
        raise ParameterError(f"targets {targets} out of range for {n} qubits")
    if u.shape != (2 ** len(targets),) * 2:
        raise DimensionError(f"unitary of shape {u.shape} does not act on {len(targets)} qubit(s)")
    tensor = rho.matrix.reshape((2,) * (2 * n))
    tensor = _contract(tensor, u, targets)
    tensor = _contract(tensor, u.conj(), [n + t for t in targets])
    return make_density(tensor.reshape(rho.dim, rho.dim), n)


def apply_gate(rho: DensityMatrix, op: GateOp) -> DensityMatrix:
    return apply_unitary(rho, op_matrix(op), op.targets)


def partial_trace(rho: DensityMatrix, keep: QubitSubset) -> DensityMatrix:
    """
    Marginal of rho on the qubits in `keep`, in increasing qubit order.

    An empty `keep` yields the 1x1 matrix [[Tr rho]].
    """
    n = rho.num_qubits
    if not keep.fits(n):
        raise ParameterError(f"subset {keep.indices} out of range for {n} qubits")
    if keep.size == n:
        return make_density(rho.matrix.copy(), n)
    kept = list(keep.indices)
    tensor = rho.matrix.reshape((2,) * (2 * n))
    rows = list(range(n))
    cols = [n + q if q in kept else q for q in range(n)]
    out = kept + [n + q for q in kept]
    reduced = np.einsum(tensor, rows + cols, out)
    dim = 2 ** len(kept)
    return make_density(np.asarray(reduced).reshape(dim, dim), len(kept))


def _check_same_shape(a: DensityMatrix, b: DensityMatrix) -> None:
    if a.matrix.shape != b.matrix.shape:
        raise DimensionError(f"dimension mismatch: {a.matrix.shape} vs {b.matrix.shape}")


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the sum of singular values of a - b, clipped to [0, 1]."""
    _check_same_shape(a, b)
    singular = np.linalg.svd(a.matrix - b.matrix, compute_uv=False)
    return float(min(max(0.5 * singular.sum(), 0.0), 1.0))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2."""
    _check_same_shape(a, b)
    root = _psd_sqrt(a.matrix)
    inner = root @ b.matrix @ root
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(min(np.sqrt(np.clip(w, 0.0, None)).sum() ** 2, 1.0))


def purity(rho: DensityMatrix) -> float:
    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """(1 - p) rho + p I / 2^n."""
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"depolarizing strength must be in [0, 1], got {p}")
    mixed = np.eye(rho.dim, dtype=np.complex128) / rho.dim
    return make_density((1.0 - p) * rho.matrix + p * mixed, rho.num_qubits)


def validate_density(rho: DensityMatrix, tol: Optional[float] = None) -> DensityReport:
    """
    Report Hermiticity defect, trace defect and minimum eigenvalue.

    Args:
        rho: matrix to check
        tol: single tolerance for all three checks (defaults to the
            configured TOL_HERM / TOL_TR / TOL_PSD)
    """
    m = rho.matrix
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    trace = float(abs(np.trace(m) - 1.0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    tol_herm = config.TOL_HERM if tol is None else tol
    tol_tr = config.TOL_TR if tol is None else tol
    tol_psd = config.TOL_PSD if tol is None else tol
    valid = herm <= tol_herm and trace <= tol_tr and min_eig >= -tol_psd
    return DensityReport(
        valid=valid,
        hermiticity_defect=herm,
        trace_defect=trace,
        min_eigenvalue=min_eig,
    )


def project_simplex(values: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(values)[::-1]
    css = np.cumsum(u)
    ranks = np.arange(1, len(u) + 1)
    positive = u - (css - 1.0) / ranks > 0
    rho = int(np.nonzero(positive)[0][-1])
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.clip(values - theta, 0.0, None)


def project_to_density(matrix: np.ndarray) -> DensityMatrix:
    """Frobenius-nearest PSD unit-trace matrix (eigenvalue simplex projection)."""
    m = np.asarray(matrix, dtype=np.complex128)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = project_simplex(w)
    return make_density((v * w) @ v.conj().T)


def embed_all(ops: Iterable[GateOp], rho: DensityMatrix) -> DensityMatrix:
    """Fold apply_gate over a gate sequence."""
    for op in ops:
        rho = apply_gate(rho, op)
    return rho


def relabel(inner: QubitSubset, outer: QubitSubset) -> QubitSubset:
    """
    Positions of `inner`'s global indices within `outer`.

    Example: inner (2, 5) inside outer (1, 2, 5) -> (1, 2).
    """
    if not inner.issubset(outer):
        raise ParameterError(f"subset {inner.indices} is not contained in {outer.indices}")
    return QubitSubset(indices=tuple(outer.indices.index(q) for q in inner.indices))


def lift_unitary(current: np.ndarray, u: np.ndarray, targets: Sequence[int], num_qubits: int) -> np.ndarray:
    """Left-multiply a 2^n-row operator by u acting on `targets`."""
    current = np.asarray(current, dtype=np.complex128)
    tensor = current.reshape((2,) * num_qubits + (current.shape[1],))
    tensor = _contract(tensor, u, list(targets))
    return tensor.reshape(current.shape)
