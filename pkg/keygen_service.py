from typing import List, Optional, Tuple
from itertools import combinations
import logging
import math

import numpy as np

import config
from errors import ParameterError
from models import (
    CircuitDescription,
    ConsistencyReport,
    DensityMatrix,
    GateOp,
    PrivateKey,
    PublicKey,
    PublicKeyEntry,
    QubitSubset,
)
from quantum_core import (
    basis_density,
    embed_all,
    partial_trace,
    purity,
    relabel,
    trace_distance,
)

logger = logging.getLogger(__name__)


def layered_circuit(num_qubits: int, layers: int, rng: np.random.Generator) -> List[GateOp]:
    """
    Random layers of single-qubit RY/RZ rotations followed by CNOTs on a
    random perfect (or near-perfect) matching.
    """
    ops = []
    for _ in range(layers):
        for q in range(num_qubits):
            gate = str(rng.choice(["RY", "RZ"]))
            ops.append(GateOp(gate=gate, targets=(q,), param=float(rng.uniform(0.0, 2 * math.pi))))
        perm = [int(q) for q in rng.permutation(num_qubits)]
        for i in range(0, num_qubits - 1, 2):
            ops.append(GateOp(gate="CNOT", targets=(perm[i], perm[i + 1])))
    return ops


def _check_sizes(security_parameter: int, num_qubits: int) -> None:
    if security_parameter < 1:
        raise ParameterError(f"lambda must be >= 1, got {security_parameter}")
    if num_qubits < 2:
        raise ParameterError(f"N must be >= 2, got {num_qubits}")
    if num_qubits > config.max_qubits():
        raise ParameterError(f"N={num_qubits} exceeds the qubit cap of {config.max_qubits()}")


def generate_circuit(security_parameter: int, num_qubits: int, seed: int) -> CircuitDescription:
    """
    Generate Alice's private circuit.

    Circuits whose output state has a single-qubit marginal with purity at
    or above PURITY_GATE are rejected and regenerated with the next seed.

    Args:
        security_parameter: lambda; the circuit has DEPTH_CONSTANT * lambda / 2 layers
        num_qubits: N
        seed: starting seed

    Returns:
        CircuitDescription whose `seed` is the seed that passed the gate
    """
    _check_sizes(security_parameter, num_qubits)
    layers = max(1, config.DEPTH_CONSTANT * security_parameter // 2)

    for attempt in range(config.MAX_ENTANGLEMENT_RETRIES):
        effective_seed = seed + attempt
        rng = np.random.default_rng(effective_seed)
        circuit = CircuitDescription(
            num_qubits=num_qubits,
            ops=layered_circuit(num_qubits, layers, rng),
            seed=effective_seed,
            security_parameter=security_parameter,
        )
        state = prepare_state(circuit)
        worst = max(purity(partial_trace(state, QubitSubset(indices=(q,)))) for q in range(num_qubits))
        if worst < config.PURITY_GATE:
            logger.debug("circuit seed %d accepted (max single-qubit purity %.4f)", effective_seed, worst)
            return circuit
        logger.debug("circuit seed %d rejected (max single-qubit purity %.4f)", effective_seed, worst)

    raise ParameterError(
        f"no sufficiently entangled circuit found in {config.MAX_ENTANGLEMENT_RETRIES} attempts"
    )


def prepare_state(circuit: CircuitDescription) -> DensityMatrix:
    """Run the circuit on |0...0><0...0|."""
    return embed_all(circuit.ops, basis_density(circuit.num_qubits))


def enumerate_subsets(num_qubits: int, k: int) -> List[QubitSubset]:
    """All size-k subsets of range(N) in lexicographic order."""
    if k < 1 or k > num_qubits:
        raise ParameterError(f"need 1 <= k <= N, got k={k}, N={num_qubits}")
    return [QubitSubset(indices=c) for c in combinations(range(num_qubits), k)]


def private_state(sk: PrivateKey) -> DensityMatrix:
    """rho_A, from the cache when present."""
    if sk.cached_state is not None:
        return sk.cached_state
    return prepare_state(sk.circuit)


def derive_public_key(sk: PrivateKey, k: int) -> PublicKey:
    """Publish every k-qubit marginal of rho_A (exact partial traces)."""
    n = sk.circuit.num_qubits
    if not (1 <= k < n):
        raise ParameterError(f"need 1 <= k < N, got k={k}, N={n}")
    state = private_state(sk)
    entries = [
        PublicKeyEntry(subset=subset, marginal=partial_trace(state, subset))
        for subset in enumerate_subsets(n, k)
    ]
    return PublicKey(
        num_qubits=n,
        k=k,
        security_parameter=sk.circuit.security_parameter,
        entries=entries,
    )


def keygen(security_parameter: int, num_qubits: int, k: int, seed: int) -> Tuple[PrivateKey, PublicKey]:
    """
    Generate a key pair.

    Returns:
        (private key holding the circuit and cached rho_A, public key with
        all (N choose k) marginals)
    """
    if not (1 <= k < num_qubits):
        raise ParameterError(f"need 1 <= k < N, got k={k}, N={num_qubits}")
    circuit = generate_circuit(security_parameter, num_qubits, seed)
    sk = PrivateKey(circuit=circuit, cached_state=prepare_state(circuit))
    pk = derive_public_key(sk, k)
    logger.info("keygen: N=%d k=%d lambda=%d seed=%d -> %d marginals",
                num_qubits, k, security_parameter, circuit.seed, len(pk.entries))
    return sk, pk


def check_public_key_consistency(pk: PublicKey, tol: float = 1e-10) -> ConsistencyReport:
    """
    Check that overlapping marginals agree on their shared qubits.

    Anyone holding the public key can run this; it needs no private input.
    """
    worst = 0.0
    worst_pair: Optional[Tuple[QubitSubset, QubitSubset]] = None
    checked = 0
    for i, a in enumerate(pk.entries):
        for b in pk.entries[i + 1:]:
            shared = sorted(set(a.subset.indices) & set(b.subset.indices))
            if not shared:
                continue
            overlap = QubitSubset(indices=tuple(shared))
            ra = partial_trace(a.marginal, relabel(overlap, a.subset))
            rb = partial_trace(b.marginal, relabel(overlap, b.subset))
            gap = trace_distance(ra, rb)
            checked += 1
            if gap > worst:
                worst, worst_pair = gap, (a.subset, b.subset)
    return ConsistencyReport(
        consistent=worst <= tol,
        max_disagreement=worst,
        worst_pair=worst_pair,
        pairs_checked=checked,
    )
