"""
Classical messages and the public message-dependent unitary U_m.

Symbol j of a word is counted from the right (j = 1 is the last written
symbol); it selects cycle entry j mod L and its factor is applied first.
"""
from typing import Dict, List, Optional
from itertools import product
import hashlib
import logging
import math

import numpy as np

import config
from errors import AlphabetError, EnumerationBudgetExceeded, ParameterError
from models import (
    PARAMETRIC_GATES,
    ROTATION_FAMILY,
    TWO_PI,
    Alphabet,
    CircuitDescription,
    CollisionReport,
    DensityMatrix,
    GateOp,
    GateRule,
    GateTemplate,
    Message,
    SymbolSpec,
)
from quantum_core import embed_all, lift_unitary, op_matrix

logger = logging.getLogger(__name__)

# Adjoints of non-involutory fixed gates, up to global phase
_FIXED_ADJOINTS = {"S": 1.5 * math.pi, "T": 1.75 * math.pi}


def default_alphabet() -> Alphabet:
    """a: skip, b: nonparametric, c: pi/4, d: 3pi/2."""
    return Alphabet(symbols=[
        SymbolSpec(id="a", kind="skip"),
        SymbolSpec(id="b", kind="nonparametric"),
        SymbolSpec(id="c", kind="angle", angle=math.pi / 4),
        SymbolSpec(id="d", kind="angle", angle=1.5 * math.pi),
    ])


def default_rule(gamma: int = config.DEFAULT_GAMMA) -> GateRule:
    """Cycle (H@0, RZ@1, CNOT(0->1), RY@0); targets are reduced mod M at compile time."""
    return GateRule(
        alphabet=default_alphabet(),
        cycle=[
            GateTemplate(gate="H", targets=(0,)),
            GateTemplate(gate="RZ", targets=(1,)),
            GateTemplate(gate="CNOT", targets=(0, 1)),
            GateTemplate(gate="RY", targets=(0,)),
        ],
        gamma=gamma,
    )


def parse_word(text: str, alphabet: Alphabet, gamma: Optional[int] = None) -> Message:
    """
    Split a written word into symbols.

    Single-character alphabets are read character by character; otherwise
    symbols are comma separated.
    """
    if all(len(s) == 1 for s in alphabet.ids):
        word = tuple(text)
    else:
        word = tuple(t for t in text.split(",") if t)
    unknown = [s for s in word if alphabet.get(s) is None]
    if unknown:
        raise AlphabetError(f"symbols {unknown} are not in the alphabet {alphabet.ids}")
    if gamma is not None and len(word) > gamma:
        raise ParameterError(f"message length {len(word)} exceeds gamma={gamma}")
    return Message(word=word, gamma=gamma)


def _symbol_op(template: GateTemplate, spec: SymbolSpec, m_size: int) -> Optional[GateOp]:
    targets = tuple(t % m_size for t in template.targets)
    if len(set(targets)) != len(targets):
        raise ParameterError(f"cycle entry {template.gate}{template.targets} collapses on {m_size} qubit(s)")

    if spec.kind == "skip":
        return None
    if spec.kind == "nonparametric":
        if template.gate in PARAMETRIC_GATES:
            return GateOp(gate=template.gate, targets=targets, param=math.pi)
        return GateOp(gate=template.gate, targets=targets)
    # angle symbol
    if template.gate in PARAMETRIC_GATES:
        return GateOp(gate=template.gate, targets=targets, param=spec.angle)
    if template.gate in ROTATION_FAMILY:
        return GateOp(gate=ROTATION_FAMILY[template.gate], targets=targets, param=spec.angle)
    raise AlphabetError(f"angle map undefined for symbol {spec.id!r} on gate {template.gate}")


def compile_unitary(m: Message, rule: GateRule, m_size: int) -> CircuitDescription:
    """
    Compile U_m to a circuit on M qubits.

    Returns:
        circuit with at most |m| ops; skip symbols contribute none
    """
    if m_size < 1:
        raise ParameterError(f"M must be positive, got {m_size}")
    if len(m) > rule.gamma:
        raise ParameterError(f"message length {len(m)} exceeds gamma={rule.gamma}")

    ops = []
    cycle_len = len(rule.cycle)
    for j in range(1, len(m) + 1):
        symbol = m.word[-j]
        spec = rule.alphabet.get(symbol)
        if spec is None:
            raise AlphabetError(f"symbol {symbol!r} is not in the alphabet {rule.alphabet.ids}")
        op = _symbol_op(rule.cycle[j % cycle_len], spec, m_size)
        if op is not None:
            ops.append(op)
    return CircuitDescription(num_qubits=m_size, ops=ops)


def _adjoint(op: GateOp) -> GateOp:
    if op.gate in PARAMETRIC_GATES:
        return GateOp(gate=op.gate, targets=op.targets, param=(TWO_PI - op.param) % TWO_PI)
    if op.gate in _FIXED_ADJOINTS:
        return GateOp(gate="RZ", targets=op.targets, param=_FIXED_ADJOINTS[op.gate])
    return op


def invert_circuit(c: CircuitDescription) -> CircuitDescription:
    """Reverse the op order and adjoint each gate (S, T map to RZ up to phase)."""
    return CircuitDescription(
        num_qubits=c.num_qubits,
        ops=[_adjoint(op) for op in reversed(c.ops)],
        seed=c.seed,
    )


def circuit_unitary(c: CircuitDescription) -> np.ndarray:
    """Full 2^n x 2^n matrix of a circuit."""
    u = np.eye(2 ** c.num_qubits, dtype=np.complex128)
    for op in c.ops:
        u = lift_unitary(u, op_matrix(op), op.targets, c.num_qubits)
    return u


def apply_message_unitary(rho: DensityMatrix, m: Message, rule: GateRule) -> DensityMatrix:
    """U_m rho U_m^dagger on the M = rho.num_qubits register."""
    return embed_all(compile_unitary(m, rule, rho.num_qubits).ops, rho)


def undo_message_unitary(rho: DensityMatrix, m: Message, rule: GateRule) -> DensityMatrix:
    """U_m^-1 rho (U_m^-1)^dagger, as the verifier applies it."""
    return embed_all(invert_circuit(compile_unitary(m, rule, rho.num_qubits)).ops, rho)


def operator_distance(u: np.ndarray, v: np.ndarray) -> float:
    """min over phi of ||u - e^{i phi} v||_F / sqrt(d)."""
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v) / math.sqrt(u.shape[0]))


def check_injectivity(
    rule: GateRule,
    alphabet: Alphabet,
    max_len: int,
    m_size: int,
    same_length: bool = False,
    tol: float = 1e-8,
) -> CollisionReport:
    """
    Brute-force search for distinct words whose unitaries coincide up to phase.

    Args:
        rule: gate cycle (its alphabet is replaced by `alphabet`)
        alphabet: symbols to enumerate
        max_len: enumerate every word of length 0..max_len
        m_size: register size M
        same_length: only compare words of equal length
        tol: operator distance below which a pair collides

    Raises:
        EnumerationBudgetExceeded: more than INJECTIVITY_BUDGET words
    """
    total = sum(len(alphabet.symbols) ** n for n in range(max_len + 1))
    if total > config.INJECTIVITY_BUDGET:
        raise EnumerationBudgetExceeded(
            f"{total} messages exceeds the enumeration budget of {config.INJECTIVITY_BUDGET}"
        )
    scan_rule = rule.model_copy(update={"alphabet": alphabet, "gamma": max(rule.gamma, max_len)})
    sep = "" if all(len(s) == 1 for s in alphabet.ids) else ","

    words: List[str] = []
    lengths: List[int] = []
    mats = []
    for n in range(max_len + 1):
        for word in product(alphabet.ids, repeat=n):
            msg = Message(word=word)
            words.append(sep.join(word))
            lengths.append(n)
            mats.append(circuit_unitary(compile_unitary(msg, scan_rule, m_size)))

    dim = 2 ** m_size
    flat = np.stack([m.reshape(-1) for m in mats])
    lengths_arr = np.asarray(lengths)
    collisions = []
    block = 2048
    # |Tr(U^dagger V)| / d close to 1 marks a candidate; confirm with the exact distance
    for start in range(0, len(words), block):
        overlaps = np.abs(flat[start:start + block].conj() @ flat.T) / dim
        rows, cols = np.nonzero(overlaps > 1.0 - 1e-6)
        for r, c in zip(rows, cols):
            i = start + int(r)
            j = int(c)
            if j <= i:
                continue
            if same_length and lengths_arr[i] != lengths_arr[j]:
                continue
            if operator_distance(mats[i], mats[j]) < tol:
                collisions.append((words[i], words[j]))

    logger.debug("injectivity scan: %d messages, %d collisions", len(words), len(collisions))
    return CollisionReport(
        messages_checked=len(words),
        max_len=max_len,
        same_length=same_length,
        collisions=collisions,
    )


def hash_message(x: bytes, gamma: int, alphabet: Alphabet) -> Message:
    """
    Compress arbitrary bytes to a word of exactly gamma symbols.

    Squeezes a SHAKE-256 sponge and maps bytes to symbols by rejection
    sampling, so every symbol is equally likely.
    """
    if gamma < 0:
        raise ParameterError(f"gamma must be non-negative, got {gamma}")
    ids = alphabet.ids
    size = len(ids)
    limit = 256 - 256 % size
    sponge = hashlib.shake_256()
    sponge.update(b"qmpsig-hash|" + "|".join(ids).encode("utf-8") + b"|")
    sponge.update(x)

    length = 2 * gamma + 32
    while True:
        stream = sponge.copy().digest(length)
        word = [ids[b % size] for b in stream if b < limit][:gamma]
        if len(word) == gamma:
            return Message(word=tuple(word), gamma=gamma)
        length *= 2


def symbol_table(rule: GateRule) -> Dict[str, str]:
    """Human-readable semantic of each symbol (printed by `sign`)."""
    table = {}
    for spec in rule.alphabet.symbols:
        table[spec.id] = spec.kind if spec.kind != "angle" else f"angle {spec.angle:.6f}"
    return table
