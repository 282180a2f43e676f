"""
Finite-shot Pauli tomography of k-qubit subsystems.

Every shot consumes one copy of the received state. Outcomes are written
'+'/'-' per measured qubit; an outcome index's most significant bit belongs
to the first qubit of the subset.
"""
from typing import Dict, List, Optional, Sequence, Tuple
from itertools import product
import logging
import math

import numpy as np

import config
from errors import CopyBudgetExhausted, ParameterError
from models import DensityMatrix, MeasurementRecord, QubitSubset, TomographyEstimate
from quantum_core import (
    FIXED_GATES,
    partial_trace,
    pauli_string_matrix,
    project_to_density,
    random_density,
    trace_distance,
)

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 63) - 1

# V with V P V^dagger = Z, so a Z-basis readout after V measures P
BASIS_ROTATIONS = {
    "Z": np.eye(2, dtype=np.complex128),
    "X": FIXED_GATES["H"],
    "Y": FIXED_GATES["H"] @ FIXED_GATES["S"].conj().T,
}


def derive_seed(seed: int, *labels: int) -> int:
    """Independent, deterministic sub-seed for a labelled random stream."""
    entropy = [seed & _SEED_MASK] + [int(x) & _SEED_MASK for x in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0] & _SEED_MASK)


class CopyBudget:
    """Counts state copies consumed by measurement; `limit=None` is unbounded."""

    def __init__(self, limit: Optional[int] = None):
        self.limit = limit
        self.consumed = 0

    @property
    def remaining(self) -> Optional[int]:
        return None if self.limit is None else self.limit - self.consumed

    def consume(self, copies: int) -> None:
        if self.limit is not None and self.consumed + copies > self.limit:
            raise CopyBudgetExhausted(
                f"need {copies} more copies but only {self.limit - self.consumed} remain"
            )
        self.consumed += copies


def required_shots(k: int, epsilon: float, delta: float, c_shots: Optional[float] = None) -> int:
    """ceil(c_shots * 4^k * ln(2/delta) / epsilon^2), c_shots defaulting to C_SHOTS."""
    if not (0.0 < epsilon < 1.0):
        raise ParameterError(f"epsilon must be in (0, 1), got {epsilon}")
    if not (0.0 < delta < 1.0):
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    c = config.C_SHOTS if c_shots is None else c_shots
    return int(math.ceil(c * 4 ** k * math.log(2.0 / delta) / epsilon ** 2))


def calibrate_shot_constant(
    k: int,
    epsilon: float,
    delta: float,
    trials: int = 200,
    seed: int = 0,
    grid: Sequence[float] = config.C_SHOTS_GRID,
) -> Optional[float]:
    """
    Smallest c_shots on the grid whose budget keeps the reconstruction error
    within epsilon in at least 1 - delta of the trials.

    Each trial draws its own random k-qubit state. Returns None when no grid
    value qualifies.
    """
    target = QubitSubset(indices=tuple(range(k)))
    states = [random_density(k, seed=derive_seed(seed, t)) for t in range(trials)]
    for c in sorted(grid):
        shots = required_shots(k, epsilon, delta, c)
        within = sum(
            trace_distance(tomograph(rho, target, shots, derive_seed(seed, t, 1))[0].projected, rho) <= epsilon
            for t, rho in enumerate(states)
        )
        logger.debug("c_shots %.3f: %d/%d trials within %.3f", c, within, trials, epsilon)
        if within >= (1.0 - delta) * trials:
            return c
    return None


def all_bases(k: int) -> List[str]:
    return ["".join(p) for p in product("XYZ", repeat=k)]


def outcome_label(index: int, k: int) -> str:
    return "".join("-" if (index >> (k - 1 - i)) & 1 else "+" for i in range(k))


def _check_basis(basis: str, subset: QubitSubset) -> None:
    if len(basis) != subset.size or set(basis) - set("XYZ"):
        raise ParameterError(f"malformed basis {basis!r} for subset {subset.indices}")


def born_probabilities(marginal: DensityMatrix, basis: str) -> np.ndarray:
    """Outcome distribution of a product Pauli measurement on a marginal."""
    v = np.ones((1, 1), dtype=np.complex128)
    for ch in basis:
        v = np.kron(v, BASIS_ROTATIONS[ch])
    rotated = v @ marginal.matrix @ v.conj().T
    probs = np.clip(np.real(np.diag(rotated)), 0.0, None)
    return probs / probs.sum()


def sample_measurements(
    rho: DensityMatrix,
    subset: QubitSubset,
    basis: str,
    shots: int,
    seed: int,
) -> MeasurementRecord:
    """
    Draw `shots` outcomes of measuring `subset` of rho in a product Pauli basis.

    The random stream is derived from (seed, subset, basis), so identical
    inputs always give identical counts.
    """
    _check_basis(basis, subset)
    if shots < 1:
        raise ParameterError(f"shots must be >= 1, got {shots}")
    probs = born_probabilities(partial_trace(rho, subset), basis)
    basis_code = int("".join(str("XYZ".index(c) + 1) for c in basis))
    rng = np.random.default_rng(derive_seed(seed, subset.size, *subset.indices, basis_code))
    draws = rng.multinomial(shots, probs)
    counts = {outcome_label(i, subset.size): int(c) for i, c in enumerate(draws) if c > 0}
    return MeasurementRecord(subset=subset, basis=basis, shots=shots, counts=counts)


def exact_records(rho: DensityMatrix, subset: QubitSubset) -> List[MeasurementRecord]:
    """Infinite-shot records carrying Born probabilities for every setting."""
    marginal = partial_trace(rho, subset)
    records = []
    for basis in all_bases(subset.size):
        probs = born_probabilities(marginal, basis)
        records.append(MeasurementRecord(
            subset=subset,
            basis=basis,
            shots=0,
            probabilities={outcome_label(i, subset.size): float(p) for i, p in enumerate(probs)},
        ))
    return records


def split_shots(shots: int, k: int) -> List[int]:
    """Distribute a subset's shots over its 3^k settings."""
    settings = 3 ** k
    if shots < settings:
        raise ParameterError(f"{shots} shots cannot cover {settings} measurement settings")
    base, extra = divmod(shots, settings)
    return [base + (1 if i < extra else 0) for i in range(settings)]


def sample_all(rho: DensityMatrix, subset: QubitSubset, shots: int, seed: int) -> List[MeasurementRecord]:
    """Sample every setting of a subset with `shots` copies in total."""
    return [
        sample_measurements(rho, subset, basis, n, seed)
        for basis, n in zip(all_bases(subset.size), split_shots(shots, subset.size))
    ]


def _frequencies(record: MeasurementRecord, k: int) -> Tuple[np.ndarray, float]:
    """Outcome frequency vector and the record's weight."""
    freqs = np.zeros(2 ** k)
    if record.probabilities is not None:
        for i in range(2 ** k):
            freqs[i] = record.probabilities.get(outcome_label(i, k), 0.0)
        return freqs, 1.0
    for i in range(2 ** k):
        freqs[i] = record.counts.get(outcome_label(i, k), 0)
    return freqs / record.shots, float(record.shots)


def reconstruct(records: Sequence[MeasurementRecord], subset: QubitSubset) -> TomographyEstimate:
    """
    Linear-inversion estimate from all 3^k settings, then PSD projection.

    Expectations of Pauli strings containing identities average every
    setting that agrees on the non-identity positions.
    """
    k = subset.size
    by_basis: Dict[str, Tuple[np.ndarray, float]] = {}
    for record in records:
        by_basis[record.basis] = _frequencies(record, k)
    missing = sorted(set(all_bases(k)) - set(by_basis))
    if missing:
        raise ParameterError(f"missing measurement settings {missing} for subset {subset.indices}")

    bits = np.array([[(i >> (k - 1 - q)) & 1 for q in range(k)] for i in range(2 ** k)])
    raw = np.zeros((2 ** k, 2 ** k), dtype=np.complex128)
    for label in product("IXYZ", repeat=k):
        support = [q for q, ch in enumerate(label) if ch != "I"]
        if not support:
            expectation = 1.0
        else:
            signs = (-1.0) ** bits[:, support].sum(axis=1)
            total, weight = 0.0, 0.0
            for basis, (freqs, w) in by_basis.items():
                if all(basis[q] == label[q] for q in support):
                    total += w * float(freqs @ signs)
                    weight += w
            expectation = total / weight
        raw += expectation * pauli_string_matrix("".join(label))
    raw /= 2 ** k

    return TomographyEstimate(
        subset=subset,
        raw=raw,
        projected=project_to_density(raw),
        shots_used=sum(r.shots for r in records),
    )


def tomograph(
    rho: DensityMatrix,
    subset: QubitSubset,
    shots: int,
    seed: int,
    exact: bool = False,
) -> Tuple[TomographyEstimate, List[MeasurementRecord]]:
    """Measure and reconstruct one subset; exact=True uses Born probabilities."""
    records = exact_records(rho, subset) if exact else sample_all(rho, subset, shots, seed)
    return reconstruct(records, subset), records
