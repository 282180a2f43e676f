"""
Brute-force consistency oracle for local density matrices.

Alternating projections between the affine set of operators whose Pauli
coefficients match the given marginals and the set of density matrices,
with a least-squares polish on a low-rank factor once the residual is small.
"""
from typing import Dict, List, Optional, Tuple
from itertools import product
import logging

import numpy as np
from scipy.optimize import least_squares

import config
from errors import DimensionError, ParameterError
from models import CldmInstance, DensityMatrix, FeasibilityResult, PublicKey, PublicKeyEntry, QubitSubset
from quantum_core import (
    basis_density,
    lift_unitary,
    make_density,
    maximally_mixed,
    partial_trace,
    pauli_string_matrix,
    project_to_density,
    pure_density,
    trace_distance,
)

logger = logging.getLogger(__name__)

PauliKey = Tuple[Tuple[int, str], ...]


def instance_from_public_key(pk: PublicKey, beta: float = config.DEFAULT_BETA) -> CldmInstance:
    return CldmInstance(num_qubits=pk.num_qubits, entries=list(pk.entries), beta=beta)


def bell_contradiction_instance(num_qubits: int, beta: float = config.DEFAULT_BETA) -> CldmInstance:
    """
    A Bell pair on qubits {0, 1} together with pure |0><0| on every qubit.

    A pure entangled pair forces maximally mixed singles, so no global
    state is within 1/4 of every entry.
    """
    if num_qubits < 2:
        raise ParameterError(f"need N >= 2, got {num_qubits}")
    s = 1.0 / np.sqrt(2.0)
    entries = [PublicKeyEntry(subset=QubitSubset(indices=(0, 1)), marginal=pure_density([s, 0, 0, s]))]
    entries += [
        PublicKeyEntry(subset=QubitSubset(indices=(q,)), marginal=basis_density(1))
        for q in range(num_qubits)
    ]
    return CldmInstance(num_qubits=num_qubits, entries=entries, beta=beta)


def _local_label(key: PauliKey, subset: QubitSubset) -> str:
    letters = dict(key)
    return "".join(letters.get(q, "I") for q in subset.indices)


def _embed(local: np.ndarray, subset: QubitSubset, num_qubits: int) -> np.ndarray:
    """local (x) I/2^rest, with subset qubits moved to their global positions."""
    rest = [q for q in range(num_qubits) if q not in subset.indices]
    full = np.kron(local, np.eye(2 ** len(rest)) / 2 ** len(rest))
    order = list(subset.indices) + rest
    perm = [order.index(q) for q in range(num_qubits)]
    tensor = full.reshape((2,) * (2 * num_qubits))
    tensor = tensor.transpose(perm + [num_qubits + p for p in perm])
    return tensor.reshape(2 ** num_qubits, 2 ** num_qubits)


class _AffineConstraints:
    """Pauli coefficients pinned by the entries, grouped by a covering entry."""

    def __init__(self, inst: CldmInstance):
        self.num_qubits = inst.num_qubits
        targets: Dict[PauliKey, List[float]] = {}
        owner: Dict[PauliKey, int] = {}
        for idx, entry in enumerate(inst.entries):
            size = entry.subset.size
            for label in product("IXYZ", repeat=size):
                key = tuple((entry.subset.indices[i], ch) for i, ch in enumerate(label) if ch != "I")
                if not key:
                    continue
                value = float(np.real(np.trace(entry.marginal.matrix @ pauli_string_matrix("".join(label)))))
                targets.setdefault(key, []).append(value)
                owner.setdefault(key, idx)

        self.groups: List[Tuple[QubitSubset, np.ndarray, np.ndarray]] = []
        by_owner: Dict[int, List[PauliKey]] = {}
        for key, idx in owner.items():
            by_owner.setdefault(idx, []).append(key)
        for idx, keys in sorted(by_owner.items()):
            subset = inst.entries[idx].subset
            mats = np.stack([pauli_string_matrix(_local_label(key, subset)) for key in keys])
            goal = np.array([np.mean(targets[key]) for key in keys])
            self.groups.append((subset, mats, goal))

    def project(self, sigma: np.ndarray) -> np.ndarray:
        """Least-squares correction of every pinned Pauli coefficient."""
        updated = sigma.copy()
        for subset, mats, goal in self.groups:
            local = partial_trace(make_density(sigma, self.num_qubits), subset).matrix
            coeffs = np.real(np.einsum("gij,ji->g", mats, local))
            delta = np.einsum("g,gij->ij", goal - coeffs, mats) / 2 ** subset.size
            updated += _embed(delta, subset, self.num_qubits)
        return updated

    # --- Factored form sigma = A A^dagger ---

    def _lifted(self, a: np.ndarray) -> List[Tuple[np.ndarray, float]]:
        terms = []
        for subset, mats, goal in self.groups:
            for mat, value in zip(mats, goal):
                terms.append((lift_unitary(a, mat, subset.indices, self.num_qubits), value))
        return terms

    def factor_residuals(self, a: np.ndarray) -> np.ndarray:
        """Tr(A^dagger A) - 1 followed by every coefficient mismatch of A A^dagger."""
        values = [np.real(np.vdot(a, a)) - 1.0]
        values += [np.real(np.vdot(a, pa)) - goal for pa, goal in self._lifted(a)]
        return np.array(values)

    def factor_jacobian(self, a: np.ndarray) -> np.ndarray:
        """d Re Tr(A^dagger P A) = 2 Re(PA) . dX + 2 Im(PA) . dY for A = X + iY."""
        rows = [np.concatenate([2 * a.real.ravel(), 2 * a.imag.ravel()])]
        rows += [np.concatenate([2 * pa.real.ravel(), 2 * pa.imag.ravel()]) for pa, _ in self._lifted(a)]
        return np.array(rows)


def _pack(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real.ravel(), a.imag.ravel()])


def _unpack(x: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    half = x.size // 2
    return (x[:half] + 1j * x[half:]).reshape(shape)


def _polish(witness: DensityMatrix, constraints: _AffineConstraints) -> DensityMatrix:
    """
    Refine a near-feasible witness by Gauss-Newton on sigma = A A^dagger,
    with A built from the witness's leading eigenvectors.
    """
    values, vectors = np.linalg.eigh(witness.matrix)
    rank = int(np.sum(values > 1e-3))
    rank = min(witness.dim, config.ORACLE_POLISH_MAX_RANK, max(config.ORACLE_POLISH_RANK, rank))
    a0 = vectors[:, -rank:] * np.sqrt(np.clip(values[-rank:], 0.0, None))
    shape = a0.shape

    fit = least_squares(
        lambda x: constraints.factor_residuals(_unpack(x, shape)),
        _pack(a0),
        jac=lambda x: constraints.factor_jacobian(_unpack(x, shape)),
        method="trf",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=config.ORACLE_POLISH_EVALS,
    )
    a = _unpack(fit.x, shape)
    sigma = a @ a.conj().T
    sigma = 0.5 * (sigma + sigma.conj().T)
    return make_density(sigma / np.real(np.trace(sigma)), witness.num_qubits)


def _polish_due(iteration: int) -> bool:
    # window, 2 windows, 4 windows, ...
    if iteration % config.ORACLE_STALL_WINDOW:
        return False
    windows = iteration // config.ORACLE_STALL_WINDOW
    return windows & (windows - 1) == 0


def marginal_residual(witness: DensityMatrix, inst: CldmInstance) -> float:
    """Largest trace distance between the witness's marginals and the entries."""
    return max(trace_distance(partial_trace(witness, e.subset), e.marginal) for e in inst.entries)


def _check_instance(inst: CldmInstance) -> None:
    if inst.num_qubits > config.ORACLE_MAX_QUBITS:
        raise ParameterError(f"oracle is limited to N <= {config.ORACLE_MAX_QUBITS}, got {inst.num_qubits}")
    for entry in inst.entries:
        if not entry.subset.fits(inst.num_qubits):
            raise DimensionError(f"entry {entry.subset.indices} out of range for N={inst.num_qubits}")
        if entry.marginal.num_qubits != entry.subset.size:
            raise DimensionError(f"entry {entry.subset.indices} has a {entry.marginal.num_qubits}-qubit marginal")


def cldm_feasibility(
    inst: CldmInstance,
    max_iter: int = config.DEFAULT_ORACLE_ITERATIONS,
    tol_feas: float = config.DEFAULT_TOL_FEAS,
) -> FeasibilityResult:
    """
    Decide whether some global state reproduces every entry.

    Args:
        inst: marginals with the promise gap beta
        max_iter: projection rounds before giving up
        tol_feas: residual accepted as Feasible

    Returns:
        Feasible with a witness, Infeasible once the residual stalls above
        beta/2, otherwise Undecided
    """
    _check_instance(inst)
    if not inst.entries:
        return FeasibilityResult(status="Feasible", witness=maximally_mixed(inst.num_qubits), residual=0.0, iterations=0)

    constraints = _AffineConstraints(inst)
    sigma = maximally_mixed(inst.num_qubits).matrix.copy()
    best_residual = np.inf
    best_witness: Optional[DensityMatrix] = None
    history: List[float] = []

    for iteration in range(1, max_iter + 1):
        witness = project_to_density(constraints.project(sigma))
        sigma = witness.matrix.copy()
        residual = marginal_residual(witness, inst)
        if residual < best_residual:
            best_residual, best_witness = residual, witness
        if _polish_due(iteration) and best_residual < config.ORACLE_POLISH_START:
            polished = _polish(best_witness, constraints)
            polished_residual = marginal_residual(polished, inst)
            logger.debug("oracle: polish at iteration %d, residual %.3g -> %.3g",
                         iteration, best_residual, polished_residual)
            if polished_residual < best_residual:
                best_residual, best_witness = polished_residual, polished
        history.append(best_residual)

        if best_residual <= tol_feas:
            logger.debug("oracle: feasible after %d iterations (residual %.3g)", iteration, best_residual)
            return FeasibilityResult(status="Feasible", witness=best_witness, residual=best_residual, iterations=iteration)

        if iteration > config.ORACLE_STALL_WINDOW:
            old = history[-config.ORACLE_STALL_WINDOW - 1]
            improvement = (old - best_residual) / old if old > 0 else 0.0
            if improvement < config.ORACLE_STALL_TOL and best_residual > inst.beta / 2:
                logger.debug("oracle: stalled at residual %.4f after %d iterations", best_residual, iteration)
                return FeasibilityResult(status="Infeasible", witness=best_witness, residual=best_residual, iterations=iteration)

    logger.debug("oracle: undecided after %d iterations (residual %.3g)", max_iter, best_residual)
    return FeasibilityResult(status="Undecided", witness=best_witness, residual=best_residual, iterations=max_iter)
