"""
Test challenges, the marginal checks and the sign/verify round trip.
"""
import numpy as np
import pytest
from scipy.stats import chisquare

from errors import ChallengeError, CopyBudgetExhausted, DimensionError
from keygen_service import derive_public_key, keygen
from message_unitary_service import default_rule, parse_word
from models import CircuitDescription, GateOp, PrivateKey, QubitSubset, SessionConfig
from protocol_service import (
    authenticate,
    check_response,
    checked_subset_count,
    copies_required,
    draw_challenge,
    make_challenge,
    respond,
    run_session,
    shots_per_subset,
    sign,
    transfer_verify,
    verify,
)
from quantum_core import depolarize, maximally_mixed, partial_trace, relabel, trace_distance


@pytest.fixture(scope="module")
def keys():
    return keygen(4, 6, 2, seed=1)


@pytest.fixture(scope="module")
def ghz_keys():
    circuit = CircuitDescription(num_qubits=4, ops=[
        GateOp(gate="H", targets=(0,)),
        GateOp(gate="CNOT", targets=(0, 1)),
        GateOp(gate="CNOT", targets=(1, 2)),
        GateOp(gate="CNOT", targets=(2, 3)),
    ])
    sk = PrivateKey(circuit=circuit)
    return sk, derive_public_key(sk, 2)


def config(**overrides) -> SessionConfig:
    values = dict(num_qubits=6, k=2, m_size=3, seed=5)
    values.update(overrides)
    return SessionConfig(**values)


# --- Challenges ---

@pytest.mark.parametrize("n,k,m", [(6, 2, 6), (6, 2, 2), (6, 2, 7), (6, 0, 3)])
def test_challenge_size_is_guarded(n, k, m):
    with pytest.raises(ChallengeError):
        draw_challenge(n, k, m, seed=0)


def test_session_config_guards_sizes():
    with pytest.raises(ValueError):
        config(m_size=6)


def test_challenge_is_seeded():
    assert draw_challenge(8, 2, 4, seed=3) == draw_challenge(8, 2, 4, seed=3)
    assert draw_challenge(8, 2, 4, seed=3).subset.size == 4


def test_challenges_are_uniform():
    counts = {}
    for seed in range(2000):
        indices = draw_challenge(5, 1, 3, seed=seed).subset.indices
        counts[indices] = counts.get(indices, 0) + 1
    assert len(counts) == 10
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_ghz_response_is_classically_correlated(ghz_keys):
    sk, _ = ghz_keys
    ch = draw_challenge(4, 2, 3, seed=1)
    rho = respond(sk, ch)
    assert rho.num_qubits == 3
    pair = partial_trace(rho, relabel(QubitSubset(indices=ch.subset.indices[:2]), ch.subset))
    assert np.allclose(pair.matrix, np.diag([0.5, 0, 0, 0.5]), atol=1e-12)


def test_respond_rejects_foreign_challenge(keys):
    sk, _ = keys
    with pytest.raises(ChallengeError):
        respond(sk, draw_challenge(5, 2, 3, seed=0))


# --- Shot planning ---

def test_copy_plan_follows_configuration():
    cfg = config()
    assert checked_subset_count(cfg) == 3
    assert copies_required(cfg) == 3 * shots_per_subset(cfg)
    assert copies_required(config(shots=900)) == 2700
    assert copies_required(config(exact=True)) == 0
    assert checked_subset_count(config(sample_fraction=0.3)) == 1


# --- Authentication ---

def test_honest_prover_is_accepted(keys):
    sk, pk = keys
    cfg = config()
    report = authenticate(sk, pk, cfg)
    assert report.verdict == "ACCEPT"
    assert len(report.per_subset) == 3
    assert report.total_copies_consumed == copies_required(cfg)


def test_maximally_mixed_response_is_rejected(ghz_keys):
    _, pk = ghz_keys
    cfg = config(num_qubits=4)
    ch = make_challenge(cfg, seed=2)
    report = check_response(pk, ch, maximally_mixed(3), cfg, seed=3)
    assert report.verdict == "REJECT"
    assert report.first_failure is not None


def test_threshold_of_one_accepts_anything(ghz_keys):
    _, pk = ghz_keys
    cfg = config(num_qubits=4, epsilon=1.0)
    ch = make_challenge(cfg, seed=2)
    assert check_response(pk, ch, maximally_mixed(3), cfg, seed=3).verdict == "ACCEPT"


def test_first_failure_stops_the_check(ghz_keys):
    _, pk = ghz_keys
    cfg = config(num_qubits=4, exact=True, epsilon=1e-6)
    ch = make_challenge(cfg, seed=2)
    quick = check_response(pk, ch, maximally_mixed(3), cfg, seed=3)
    assert len(quick.per_subset) == 1
    assert quick.first_failure == quick.per_subset[0].subset

    full = check_response(pk, ch, maximally_mixed(3), cfg.model_copy(update={"diagnostic": True}), seed=3)
    assert len(full.per_subset) == 3
    assert full.first_failure == quick.first_failure


def test_diagnostic_mode_keeps_transcripts(keys):
    sk, pk = keys
    cfg = config(shots=900, epsilon=0.9, diagnostic=True)
    ch = make_challenge(cfg, seed=1)
    report = check_response(pk, ch, respond(sk, ch), cfg, seed=1)
    assert all(len(c.basis_transcripts) == 9 for c in report.per_subset)


def test_wrong_state_size_is_rejected(keys):
    _, pk = keys
    cfg = config()
    with pytest.raises(DimensionError):
        check_response(pk, make_challenge(cfg, seed=0), maximally_mixed(2), cfg, seed=0)


def test_infidelity_metric_accepts_honest_state(keys):
    sk, pk = keys
    cfg = config(exact=True, epsilon=1e-4, metric="infidelity")
    ch = make_challenge(cfg, seed=4)
    report = check_response(pk, ch, respond(sk, ch), cfg, seed=4)
    assert report.verdict == "ACCEPT"
    assert report.metric == "infidelity"


# --- Signing ---

def test_honest_signature_is_accepted(keys):
    sk, pk = keys
    cfg = config()
    rule = default_rule()
    m = parse_word("abcdcba", rule.alphabet)
    bundle = sign(sk, make_challenge(cfg, seed=8), m, rule, cfg)
    assert bundle.copies == copies_required(cfg)
    report = verify(pk, m, bundle, cfg, rule)
    assert report.verdict == "ACCEPT"
    assert report.total_copies_consumed == bundle.copies


def test_wrong_message_is_rejected(keys):
    sk, pk = keys
    cfg = config(exact=True, epsilon=1e-6, diagnostic=True)
    rule = default_rule()
    bundle = sign(sk, make_challenge(cfg, seed=8), parse_word("abc", rule.alphabet), rule, cfg)
    assert verify(pk, parse_word("abc", rule.alphabet), bundle, cfg, rule).verdict == "ACCEPT"
    assert verify(pk, parse_word("abd", rule.alphabet), bundle, cfg, rule).verdict == "REJECT"


def test_verification_commutes_with_channel_noise(keys):
    sk, pk = keys
    cfg = config(exact=True, diagnostic=True, epsilon=1.0)
    rule = default_rule()
    m = parse_word("dcbadcba", rule.alphabet)
    ch = make_challenge(cfg, seed=9)

    noisy_response = depolarize(respond(sk, ch), 0.3)
    direct = check_response(pk, ch, noisy_response, cfg, seed=1)

    bundle = sign(sk, ch, m, rule, cfg)
    bundle = bundle.model_copy(update={"state": depolarize(bundle.state, 0.3)})
    signed = verify(pk, m, bundle, cfg, rule)

    for a, b in zip(direct.per_subset, signed.per_subset):
        assert a.subset == b.subset
        assert a.distance == pytest.approx(b.distance, abs=1e-9)


def test_mixing_in_noise_moves_marginals_linearly(keys):
    sk, pk = keys
    rule = default_rule()
    m = parse_word("bcd", rule.alphabet)
    exact_cfg = config(exact=True, diagnostic=True, epsilon=1.0)
    ch = make_challenge(exact_cfg, seed=10)
    full = max(trace_distance(pk.lookup(s.subset), maximally_mixed(2))
               for s in check_response(pk, ch, respond(sk, ch), exact_cfg, seed=0).per_subset)
    assert full > 1e-3

    bundle = sign(sk, ch, m, rule, exact_cfg)
    tampered = bundle.model_copy(update={"state": depolarize(bundle.state, 0.3)})
    report = verify(pk, m, tampered, exact_cfg, rule)
    assert report.max_distance == pytest.approx(0.3 * full, abs=1e-9)

    strict = exact_cfg.model_copy(update={"epsilon": 0.2 * full})
    assert verify(pk, m, tampered, strict, rule).verdict == "REJECT"


def test_too_few_copies_exhausts_the_budget(keys):
    sk, pk = keys
    cfg = config(shots=900)
    rule = default_rule()
    m = parse_word("ab", rule.alphabet)
    bundle = sign(sk, make_challenge(cfg, seed=1), m, rule, cfg)
    short = bundle.model_copy(update={"copies": bundle.copies - 1})
    with pytest.raises(CopyBudgetExhausted):
        verify(pk, m, short, cfg, rule)


def test_transfer_splits_copies_between_verifiers(keys):
    sk, pk = keys
    cfg = config(shots=4500, epsilon=0.3)
    rule = default_rule()
    m = parse_word("cab", rule.alphabet)
    bundle = sign(sk, make_challenge(cfg, seed=2), m, rule, cfg)

    doubled = bundle.model_copy(update={"copies": 2 * bundle.copies})
    reports = transfer_verify(pk, m, doubled, cfg, rule, verifiers=2)
    assert [r.verdict for r in reports] == ["ACCEPT", "ACCEPT"]
    assert all(r.total_copies_consumed == bundle.copies for r in reports)

    with pytest.raises(CopyBudgetExhausted):
        transfer_verify(pk, m, bundle, cfg, rule, verifiers=2)


# --- Sessions ---

def test_sessions_are_deterministic():
    cfg = SessionConfig(num_qubits=5, k=1, m_size=2, security_parameter=2, shots=900)
    for mode in ("authenticate", "sign-verify"):
        a = run_session(cfg, mode, seed=21)
        b = run_session(cfg, mode, seed=21)
        assert a.model_dump() == b.model_dump()
        assert a.copies_consumed <= a.copies_sent


def test_exact_session_consumes_no_copies():
    cfg = SessionConfig(num_qubits=5, k=1, m_size=2, security_parameter=2, exact=True, epsilon=1e-6)
    transcript = run_session(cfg, "sign-verify", seed=4)
    assert transcript.verdict == "ACCEPT"
    assert transcript.copies_consumed == 0
    assert transcript.message is not None and len(transcript.message) == 16


def test_unknown_session_mode_is_rejected():
    cfg = SessionConfig(num_qubits=5, k=1, m_size=2)
    with pytest.raises(ChallengeError):
        run_session(cfg, "replay", seed=0)


def test_empty_message_signs_the_plain_response(ghz_keys):
    sk, _ = ghz_keys
    ch = draw_challenge(4, 2, 3, seed=5)
    rule = default_rule()
    bundle = sign(sk, ch, parse_word("", rule.alphabet), rule)
    assert np.allclose(bundle.state.matrix, respond(sk, ch).matrix)


def test_angle_symbols_move_the_signed_state(ghz_keys):
    sk, _ = ghz_keys
    ch = draw_challenge(4, 2, 3, seed=5)
    rule = default_rule()
    # the leading 'c' lands on RY@0, which does not commute with the GHZ marginal
    bundle = sign(sk, ch, parse_word("caa", rule.alphabet), rule)
    assert trace_distance(bundle.state, respond(sk, ch)) > 0.1


def test_default_size_session_accepts():
    cfg = SessionConfig(num_qubits=6, k=2, m_size=4)
    transcript = run_session(cfg, "sign-verify", seed=2)
    assert transcript.verdict == "ACCEPT"
    assert len(transcript.per_subset) == 6
    assert all(c.distance < cfg.epsilon / 2 for c in transcript.per_subset)


def test_honest_sessions_accept_reliably():
    cfg = SessionConfig(num_qubits=6, k=2, m_size=4)
    accepted = sum(run_session(cfg, "sign-verify", seed=s).verdict == "ACCEPT" for s in range(100))
    assert accepted >= 99
