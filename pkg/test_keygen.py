"""
Test key generation: circuit shape, published marginals and key validation.
"""
import json

import numpy as np
import pytest

import config
from artifact_manager import ArtifactManager
from errors import FormatError, ParameterError
from keygen_service import (
    check_public_key_consistency,
    derive_public_key,
    enumerate_subsets,
    generate_circuit,
    keygen,
    prepare_state,
)
from models import CircuitDescription, GateOp, PrivateKey, PublicKey, PublicKeyEntry, QubitSubset
from quantum_core import maximally_mixed, partial_trace, purity, validate_density


@pytest.fixture(scope="module")
def keys():
    return keygen(4, 6, 2, seed=1)


def test_public_key_has_every_pair(keys):
    _, pk = keys
    assert len(pk.entries) == 15
    assert [e.subset.indices for e in pk.entries] == [s.indices for s in enumerate_subsets(6, 2)]


def test_marginals_are_exact_partial_traces(keys):
    sk, pk = keys
    state = prepare_state(sk.circuit)
    for entry in pk.entries:
        assert np.allclose(entry.marginal.matrix, partial_trace(state, entry.subset).matrix, atol=1e-10)
        assert validate_density(entry.marginal).valid


def test_circuit_respects_depth_bound(keys):
    sk, _ = keys
    assert sk.circuit.depth <= config.DEPTH_CONSTANT * 4
    assert sk.circuit.seed >= 1


def test_private_state_is_entangled(keys):
    sk, _ = keys
    state = prepare_state(sk.circuit)
    for q in range(6):
        assert purity(partial_trace(state, QubitSubset(indices=(q,)))) < config.PURITY_GATE


def test_keygen_is_deterministic():
    _, pk_a = keygen(2, 4, 1, seed=42)
    _, pk_b = keygen(2, 4, 1, seed=42)
    assert pk_a.model_dump_json(by_alias=True) == pk_b.model_dump_json(by_alias=True)


def test_different_seeds_give_different_keys():
    _, pk_a = keygen(2, 4, 1, seed=1)
    _, pk_b = keygen(2, 4, 1, seed=2)
    assert not np.allclose(pk_a.entries[0].marginal.matrix, pk_b.entries[0].marginal.matrix)


def test_cached_state_is_not_serialized(keys):
    sk, _ = keys
    assert sk.cached_state is not None
    assert "cached_state" not in sk.model_dump_json()


@pytest.mark.parametrize("lam,n,k", [(4, 6, 6), (4, 6, 0), (0, 6, 2), (4, 1, 1)])
def test_invalid_parameters_are_rejected(lam, n, k):
    with pytest.raises(ParameterError):
        keygen(lam, n, k, seed=0)


def test_qubit_cap_applies(monkeypatch):
    monkeypatch.setenv("QMPSIG_MAX_QUBITS", "4")
    with pytest.raises(ParameterError):
        generate_circuit(2, 5, seed=0)


def test_enumerate_subsets_is_lexicographic():
    assert [s.indices for s in enumerate_subsets(4, 2)] == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    with pytest.raises(ParameterError):
        enumerate_subsets(4, 0)


def test_honest_public_key_is_consistent(keys):
    _, pk = keys
    report = check_public_key_consistency(pk)
    assert report.consistent
    assert report.max_disagreement < 1e-10
    assert report.pairs_checked > 0


def test_tampered_public_key_is_inconsistent(keys):
    _, pk = keys
    entries = list(pk.entries)
    entries[0] = PublicKeyEntry(subset=entries[0].subset, marginal=maximally_mixed(2))
    report = check_public_key_consistency(pk.model_copy(update={"entries": entries}))
    assert not report.consistent
    assert report.worst_pair is not None


def test_public_key_requires_full_coverage(keys):
    _, pk = keys
    data = pk.model_dump(by_alias=True)
    data["entries"] = data["entries"][:-1]
    with pytest.raises(ValueError):
        PublicKey.model_validate(data)


def test_public_key_round_trips_through_json(keys):
    _, pk = keys
    restored = PublicKey.model_validate_json(pk.model_dump_json(by_alias=True))
    assert restored.num_qubits == 6 and restored.k == 2
    for a, b in zip(pk.entries, restored.entries):
        assert np.allclose(a.marginal.matrix, b.marginal.matrix, atol=1e-15)


def test_bell_private_key_publishes_mixed_singles():
    circuit = CircuitDescription(num_qubits=2, ops=[GateOp(gate="H", targets=(0,)), GateOp(gate="CNOT", targets=(0, 1))])
    pk = derive_public_key(PrivateKey(circuit=circuit), 1)
    for entry in pk.entries:
        assert np.allclose(entry.marginal.matrix, np.eye(2) / 2, atol=1e-12)


def test_empty_circuit_prepares_all_zeros():
    state = prepare_state(CircuitDescription(num_qubits=2))
    assert np.allclose(state.matrix, np.diag([1.0, 0, 0, 0]))


def test_generated_states_are_pure(keys):
    sk, _ = keys
    assert purity(prepare_state(sk.circuit)) == pytest.approx(1.0, abs=1e-9)
    assert len(enumerate_subsets(6, 3)) == 20


@pytest.mark.parametrize("k", [1, 2, 3])
def test_public_key_for_each_locality(k):
    _, pk = keygen(2, 5, k, seed=3)
    assert len(pk.entries) == len(enumerate_subsets(5, k))
    assert all(e.marginal.matrix.shape == (2 ** k, 2 ** k) for e in pk.entries)
    assert check_public_key_consistency(pk).consistent


def test_private_key_document_is_flat(keys, tmp_path):
    sk, _ = keys
    data = json.loads(sk.model_dump_json(by_alias=True, exclude_none=True))
    assert set(data) == {"version", "N", "lambda", "seed", "ops"}
    assert data["version"] == config.FORMAT_VERSION
    assert all("param" in op for op in data["ops"] if op["gate"] in ("RZ", "RY"))
    assert all("param" not in op for op in data["ops"] if op["gate"] in ("H", "S", "T", "CNOT"))

    store = ArtifactManager(str(tmp_path))
    store.save_private_key(sk, "sk.json")
    restored = store.load_private_key("sk.json")
    assert restored.circuit.ops == sk.circuit.ops
    assert restored.circuit.seed == sk.circuit.seed
    assert np.allclose(restored.cached_state.matrix, sk.cached_state.matrix, atol=1e-12)


def test_private_key_with_foreign_version_is_refused(keys, tmp_path):
    sk, _ = keys
    data = json.loads(sk.model_dump_json(by_alias=True, exclude_none=True))
    data["version"] = config.FORMAT_VERSION + 1
    (tmp_path / "sk.json").write_text(json.dumps(data))
    with pytest.raises(FormatError):
        ArtifactManager(str(tmp_path)).load_private_key("sk.json")
