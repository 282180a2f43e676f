"""
Test message compilation, inversion, injectivity scans and message hashing.
"""
import math

import numpy as np
import pytest

from errors import AlphabetError, EnumerationBudgetExceeded, ParameterError
from message_unitary_service import (
    apply_message_unitary,
    check_injectivity,
    circuit_unitary,
    compile_unitary,
    default_alphabet,
    default_rule,
    hash_message,
    invert_circuit,
    operator_distance,
    parse_word,
    symbol_table,
    undo_message_unitary,
)
from models import (
    Alphabet,
    CircuitDescription,
    GateOp,
    GateRule,
    GateTemplate,
    Message,
    QubitSubset,
    SymbolSpec,
)
from quantum_core import partial_trace, pure_density, random_density


def rule_of(symbols, cycle, gamma=16) -> GateRule:
    return GateRule(
        alphabet=Alphabet(symbols=symbols),
        cycle=[GateTemplate(gate=g, targets=t) for g, t in cycle],
        gamma=gamma,
    )


BINARY = [SymbolSpec(id="0", kind="skip"), SymbolSpec(id="1", kind="nonparametric")]


# --- Compilation ---

def test_empty_message_compiles_to_identity():
    circuit = compile_unitary(Message(), default_rule(), 3)
    assert circuit.ops == []
    assert np.allclose(circuit_unitary(circuit), np.eye(8))


def test_single_symbol_on_single_gate_cycle():
    rule = rule_of(BINARY, [("H", (0,))])
    assert compile_unitary(parse_word("1", rule.alphabet), rule, 2).ops == [GateOp(gate="H", targets=(0,))]


def test_last_written_symbol_is_applied_first():
    rule = rule_of(BINARY, [("H", (0,)), ("CNOT", (0, 1))])
    ops = compile_unitary(parse_word("01", rule.alphabet), rule, 2).ops
    assert ops == [GateOp(gate="CNOT", targets=(0, 1))]


def test_default_rule_symbol_kinds():
    rule = default_rule()
    ops = compile_unitary(parse_word("cb", rule.alphabet), rule, 3).ops
    # j=1 is 'b' on RZ@1 (rotation at pi), j=2 is 'c' on CNOT (rotated CNOT at pi/4)
    assert ops == [
        GateOp(gate="RZ", targets=(1,), param=math.pi),
        GateOp(gate="RCNOT", targets=(0, 1), param=math.pi / 4),
    ]


def test_skip_symbols_add_no_ops_and_length_bounds_depth():
    rule = default_rule()
    m = parse_word("abcdabcd", rule.alphabet)
    circuit = compile_unitary(m, rule, 3)
    assert len(circuit.ops) == 6
    assert len(circuit.ops) <= len(m)


def test_targets_reduce_mod_register_size():
    rule = rule_of(BINARY, [("X", (3,))])
    assert compile_unitary(parse_word("1", rule.alphabet), rule, 2).ops == [GateOp(gate="X", targets=(1,))]


def test_angle_symbol_on_phase_gate_is_undefined():
    rule = rule_of([SymbolSpec(id="c", kind="angle", angle=0.5)], [("S", (0,))])
    with pytest.raises(AlphabetError):
        compile_unitary(Message(word=("c",)), rule, 1)


def test_unknown_symbols_are_rejected():
    with pytest.raises(AlphabetError):
        parse_word("abz", default_alphabet())
    with pytest.raises(AlphabetError):
        compile_unitary(Message(word=("z",)), default_rule(), 2)


def test_message_length_is_bounded_by_gamma():
    with pytest.raises(ParameterError):
        parse_word("a" * 17, default_alphabet(), gamma=16)
    with pytest.raises(ParameterError):
        compile_unitary(Message(word=("a",) * 17), default_rule(16), 2)


def test_multi_character_symbols_are_comma_separated():
    alphabet = Alphabet(symbols=[SymbolSpec(id="up", kind="skip"), SymbolSpec(id="down", kind="nonparametric")])
    assert parse_word("up,down,up", alphabet).word == ("up", "down", "up")


def test_symbol_table_describes_every_symbol():
    table = symbol_table(default_rule())
    assert table["a"] == "skip" and table["b"] == "nonparametric"
    assert table["c"].startswith("angle")


# --- Inversion ---

def test_invert_examples():
    h = CircuitDescription(num_qubits=2, ops=[GateOp(gate="H", targets=(0,))])
    assert invert_circuit(h).ops == h.ops

    rz = CircuitDescription(num_qubits=2, ops=[GateOp(gate="RZ", targets=(1,), param=0.4)])
    assert invert_circuit(rz).ops == [GateOp(gate="RZ", targets=(1,), param=2 * math.pi - 0.4)]

    pair = CircuitDescription(num_qubits=2, ops=[GateOp(gate="H", targets=(0,)), GateOp(gate="CNOT", targets=(0, 1))])
    assert invert_circuit(pair).ops == [GateOp(gate="CNOT", targets=(0, 1)), GateOp(gate="H", targets=(0,))]


def test_phase_gates_invert_up_to_phase():
    c = CircuitDescription(num_qubits=1, ops=[GateOp(gate="S", targets=(0,)), GateOp(gate="T", targets=(0,))])
    product = circuit_unitary(invert_circuit(c)) @ circuit_unitary(c)
    assert operator_distance(product, np.eye(2)) < 1e-12


def test_apply_then_undo_is_identity_on_random_pairs():
    rule = default_rule()
    rng = np.random.default_rng(3)
    for trial in range(100):
        length = int(rng.integers(0, 17))
        m = Message(word=tuple(str(s) for s in rng.choice(rule.alphabet.ids, size=length)))
        rho = random_density(3, seed=trial)
        restored = undo_message_unitary(apply_message_unitary(rho, m, rule), m, rule)
        assert np.allclose(restored.matrix, rho.matrix, atol=1e-10)


def test_compiled_unitaries_are_unitary():
    rule = default_rule()
    for i in range(30):
        m = hash_message(bytes([i]), 16, rule.alphabet)
        u = circuit_unitary(compile_unitary(m, rule, 3))
        assert np.allclose(u @ u.conj().T, np.eye(8), atol=1e-10)


def test_local_unitary_keeps_bell_marginals_mixed():
    s = 1 / math.sqrt(2)
    bell = pure_density([s, 0, 0, s])
    rule = rule_of([SymbolSpec(id="x", kind="nonparametric")], [("X", (0,))])
    out = apply_message_unitary(bell, Message(word=("x",)), rule)
    for q in (0, 1):
        assert np.allclose(partial_trace(out, QubitSubset(indices=(q,))).matrix, np.eye(2) / 2, atol=1e-12)


def test_operator_distance_ignores_global_phase():
    u = circuit_unitary(compile_unitary(parse_word("bcd", default_alphabet()), default_rule(), 2))
    assert operator_distance(u, np.exp(0.7j) * u) < 1e-12
    assert operator_distance(u, np.eye(4)) > 1e-3


# --- Injectivity ---

def test_default_rule_is_injective_at_fixed_length():
    report = check_injectivity(default_rule(), default_alphabet(), 4, 2, same_length=True)
    assert report.messages_checked == 1 + 4 + 16 + 64 + 256
    assert report.collisions == []


def test_skip_only_alphabet_collides():
    alphabet = Alphabet(symbols=[SymbolSpec(id="s", kind="skip")])
    report = check_injectivity(default_rule(), alphabet, 2, 2)
    assert ("s", "ss") in report.collisions
    assert all(a != b for a, b in report.collisions)


def test_non_commuting_rotation_rule_has_no_collisions():
    symbols = [SymbolSpec(id="c", kind="angle", angle=math.pi / 4),
               SymbolSpec(id="d", kind="angle", angle=1.5 * math.pi)]
    rule = rule_of(symbols, [("RZ", (0,)), ("RY", (0,))])
    report = check_injectivity(rule, rule.alphabet, 2, 1)
    assert report.collisions == []


def test_injectivity_budget_is_enforced():
    with pytest.raises(EnumerationBudgetExceeded):
        check_injectivity(default_rule(), default_alphabet(), 9, 2)


# --- Hashing ---

def test_hash_is_deterministic_and_fixed_length():
    alphabet = default_alphabet()
    a = hash_message(b"hello", 16, alphabet)
    assert a == hash_message(b"hello", 16, alphabet)
    assert len(a) == 16
    assert len(hash_message(b"", 5, alphabet)) == 5
    assert set(a.word) <= set(alphabet.ids)


def test_hash_has_no_collisions_on_a_corpus():
    alphabet = default_alphabet()
    digests = {hash_message(i.to_bytes(4, "big"), 20, alphabet).word for i in range(10_000)}
    assert len(digests) == 10_000
