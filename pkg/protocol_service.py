"""
Authentication, signing and verification sessions.

Quantum transmission is simulated as a density-matrix handoff: a bundle's
single `state` stands for `copies` identical copies, and every measurement
shot spends one of them.
"""
from typing import List, Optional
from itertools import combinations
import logging
import math

import numpy as np
from scipy.special import comb

from errors import ChallengeError, DimensionError, FormatError
from keygen_service import keygen, private_state
from message_unitary_service import (
    apply_message_unitary,
    default_rule,
    hash_message,
    undo_message_unitary,
)
from models import (
    Challenge,
    DensityMatrix,
    GateRule,
    Message,
    PrivateKey,
    PublicKey,
    QubitSubset,
    SessionConfig,
    SessionTranscript,
    SignatureBundle,
    SubsetCheck,
    VerdictReport,
)
from quantum_core import depolarize, fidelity, partial_trace, relabel, trace_distance
from tomography_service import CopyBudget, derive_seed, required_shots, tomograph

logger = logging.getLogger(__name__)

# Stream labels for derive_seed
_CHALLENGE_STREAM = 1
_TOMOGRAPHY_STREAM = 2
_SAMPLING_STREAM = 3
_MESSAGE_STREAM = 4


def shots_per_subset(cfg: SessionConfig) -> int:
    """Explicit shots, or required_shots(k, eps/2, delta / (M choose k))."""
    if cfg.shots is not None:
        return cfg.shots
    checks = int(comb(cfg.m_size, cfg.k, exact=True))
    return required_shots(cfg.k, cfg.epsilon / 2.0, cfg.delta / checks)


def checked_subset_count(cfg: SessionConfig) -> int:
    total = int(comb(cfg.m_size, cfg.k, exact=True))
    return max(1, math.ceil(cfg.sample_fraction * total))


def copies_required(cfg: SessionConfig) -> int:
    """Copies a verifier needs to run every planned subset check."""
    if cfg.exact:
        return 0
    return shots_per_subset(cfg) * checked_subset_count(cfg)


def draw_challenge(num_qubits: int, k: int, m_size: int, seed: int) -> Challenge:
    """Uniformly random M-subset of range(N); refuses M outside k < M < N."""
    if not (1 <= k < m_size < num_qubits):
        raise ChallengeError(
            f"challenge size M={m_size} must satisfy k < M < N (k={k}, N={num_qubits}); "
            "revealing M >= N qubits would leak the whole private state"
        )
    rng = np.random.default_rng(seed & ((1 << 63) - 1))
    picked = sorted(int(q) for q in rng.choice(num_qubits, size=m_size, replace=False))
    nonce = int(rng.integers(0, 2 ** 63 - 1))
    return Challenge(subset=QubitSubset(indices=tuple(picked)), nonce=nonce, num_qubits=num_qubits, k=k)


def make_challenge(cfg: SessionConfig, seed: int) -> Challenge:
    return draw_challenge(cfg.num_qubits, cfg.k, cfg.m_size, seed)


def respond(sk: PrivateKey, ch: Challenge) -> DensityMatrix:
    """rho_M: the honest prover's reduced state on the challenged qubits."""
    if ch.num_qubits != sk.circuit.num_qubits:
        raise ChallengeError(f"challenge is for N={ch.num_qubits}, key has N={sk.circuit.num_qubits}")
    return partial_trace(private_state(sk), ch.subset)


def _subsets_to_check(cfg: SessionConfig, ch: Challenge, seed: int) -> List[QubitSubset]:
    subsets = [QubitSubset(indices=c) for c in combinations(ch.subset.indices, ch.k)]
    wanted = max(1, math.ceil(cfg.sample_fraction * len(subsets)))
    if wanted < len(subsets):
        rng = np.random.default_rng(derive_seed(seed, _SAMPLING_STREAM))
        picked = sorted(int(i) for i in rng.choice(len(subsets), size=wanted, replace=False))
        subsets = [subsets[i] for i in picked]
    return subsets


def _distance(estimate: DensityMatrix, reference: DensityMatrix, metric: str) -> float:
    if metric == "infidelity":
        return max(0.0, 1.0 - fidelity(estimate, reference))
    return trace_distance(estimate, reference)


def check_response(
    pk: PublicKey,
    challenge: Challenge,
    state: DensityMatrix,
    cfg: SessionConfig,
    seed: int,
    budget: Optional[CopyBudget] = None,
) -> VerdictReport:
    """
    Compare tomographic k-marginals of a received M-qubit state to the public key.

    Stops at the first subset over threshold unless cfg.diagnostic is set.

    Args:
        pk: public key with global-index entries
        challenge: the challenge the state answers
        state: received state on the M challenged qubits
        cfg: thresholds, shot counts and metric
        seed: tomography seed
        budget: copies available; unbounded when omitted

    Returns:
        VerdictReport with every computed distance
    """
    if state.num_qubits != challenge.subset.size:
        raise DimensionError(
            f"state has {state.num_qubits} qubits but the challenge covers {challenge.subset.size}"
        )
    if challenge.num_qubits != pk.num_qubits or challenge.k != pk.k:
        raise FormatError(
            f"challenge (N={challenge.num_qubits}, k={challenge.k}) does not match the "
            f"public key (N={pk.num_qubits}, k={pk.k})"
        )
    budget = budget or CopyBudget()
    shots = 0 if cfg.exact else shots_per_subset(cfg)
    tomo_seed = derive_seed(seed, _TOMOGRAPHY_STREAM)

    checks: List[SubsetCheck] = []
    first_failure: Optional[QubitSubset] = None
    for subset in _subsets_to_check(cfg, challenge, seed):
        reference = pk.lookup(subset)
        if reference is None:
            raise FormatError(f"public key has no marginal for subset {subset.indices}")
        budget.consume(shots)
        local = relabel(subset, challenge.subset)
        estimate, records = tomograph(state, local, shots, tomo_seed, exact=cfg.exact)
        distance = _distance(estimate.projected, reference, cfg.metric)
        checks.append(SubsetCheck(
            subset=subset,
            distance=distance,
            threshold=cfg.epsilon,
            shots=shots,
            basis_transcripts=records if cfg.diagnostic else [],
        ))
        logger.debug("subset %s: distance %.5f (threshold %.5f)", subset.indices, distance, cfg.epsilon)
        if distance > cfg.epsilon and first_failure is None:
            first_failure = subset
            if not cfg.diagnostic:
                break

    return VerdictReport(
        verdict="REJECT" if first_failure is not None else "ACCEPT",
        threshold=cfg.epsilon,
        metric=cfg.metric,
        per_subset=checks,
        first_failure=first_failure,
        total_copies_consumed=budget.consumed,
    )


def authenticate(sk: PrivateKey, pk: PublicKey, cfg: SessionConfig) -> VerdictReport:
    """One challenge/response round driven by cfg.seed, with channel noise."""
    ch = make_challenge(cfg, derive_seed(cfg.seed, _CHALLENGE_STREAM))
    response = respond(sk, ch)
    if cfg.noise_p > 0:
        response = depolarize(response, cfg.noise_p)
    return check_response(pk, ch, response, cfg, cfg.seed)


def sign(
    sk: PrivateKey,
    ch: Challenge,
    m: Message,
    rule: GateRule,
    cfg: Optional[SessionConfig] = None,
) -> SignatureBundle:
    """
    sigma_m = U_m rho_M U_m^dagger, shipped with enough copies for the
    verifier described by cfg (default thresholds when omitted).
    """
    sigma = apply_message_unitary(respond(sk, ch), m, rule)
    if cfg is None:
        cfg = SessionConfig(num_qubits=ch.num_qubits, k=ch.k, m_size=ch.subset.size)
    return SignatureBundle(message=m, challenge=ch, copies=copies_required(cfg), state=sigma)


def _bound_config(cfg: SessionConfig, pk: PublicKey, bundle: SignatureBundle) -> SessionConfig:
    return cfg.model_copy(update={
        "num_qubits": pk.num_qubits,
        "k": pk.k,
        "m_size": bundle.challenge.subset.size,
    })


def verify(
    pk: PublicKey,
    m: Message,
    bundle: SignatureBundle,
    cfg: SessionConfig,
    rule: GateRule,
    seed: Optional[int] = None,
) -> VerdictReport:
    """
    Undo U_m on the received copies and run the marginal checks.

    Raises:
        CopyBudgetExhausted: the bundle carries too few copies
        AlphabetError: m uses symbols outside the rule's alphabet
    """
    if bundle.state.num_qubits != bundle.challenge.subset.size:
        raise FormatError("bundle state does not match its challenge size")
    eff = _bound_config(cfg, pk, bundle)
    restored = undo_message_unitary(bundle.state, m, rule)
    report = check_response(
        pk,
        bundle.challenge,
        restored,
        eff,
        cfg.seed if seed is None else seed,
        budget=CopyBudget(bundle.copies),
    )
    logger.info("verify %r: %s (max distance %.5f, %d copies)",
                m.text, report.verdict, report.max_distance, report.total_copies_consumed)
    return report


def transfer_verify(
    pk: PublicKey,
    m: Message,
    bundle: SignatureBundle,
    cfg: SessionConfig,
    rule: GateRule,
    verifiers: int = 2,
) -> List[VerdictReport]:
    """Forward a bundle to independent verifiers sharing its copies evenly."""
    if verifiers < 1:
        raise ChallengeError(f"need at least one verifier, got {verifiers}")
    share = bundle.copies // verifiers
    forwarded = bundle.model_copy(update={"copies": share})
    return [
        verify(pk, m, forwarded, cfg, rule, seed=derive_seed(cfg.seed, _TOMOGRAPHY_STREAM, i))
        for i in range(verifiers)
    ]


def run_session(
    cfg: SessionConfig,
    mode: str,
    seed: int,
    rule: Optional[GateRule] = None,
    message: Optional[Message] = None,
) -> SessionTranscript:
    """
    keygen -> challenge -> respond/sign -> verify, deterministic in seed.

    Args:
        cfg: session parameters (cfg.seed is ignored in favour of `seed`)
        mode: "authenticate" or "sign-verify"
        seed: master seed for keys, challenge and tomography
        rule: message rule for sign-verify (default rule when omitted)
        message: message to sign (a hashed digest of the seed when omitted)
    """
    if mode not in ("authenticate", "sign-verify"):
        raise ChallengeError(f"unknown session mode {mode!r}")
    cfg = cfg.model_copy(update={"seed": seed})
    sk, pk = keygen(cfg.security_parameter, cfg.num_qubits, cfg.k, seed)
    ch = make_challenge(cfg, derive_seed(seed, _CHALLENGE_STREAM))
    logger.debug("session %s: challenge %s", mode, ch.subset.indices)

    if mode == "authenticate":
        response = respond(sk, ch)
        if cfg.noise_p > 0:
            response = depolarize(response, cfg.noise_p)
        sent = copies_required(cfg)
        report = check_response(pk, ch, response, cfg, seed, budget=CopyBudget(sent))
        m = None
    else:
        rule = rule or default_rule()
        m = message if message is not None else hash_message(
            derive_seed(seed, _MESSAGE_STREAM).to_bytes(8, "big"), rule.gamma, rule.alphabet
        )
        bundle = sign(sk, ch, m, rule, cfg)
        if cfg.noise_p > 0:
            bundle = bundle.model_copy(update={"state": depolarize(bundle.state, cfg.noise_p)})
        sent = bundle.copies
        if cfg.exact:
            bundle = bundle.model_copy(update={"copies": 0})
        report = verify(pk, m, bundle, cfg, rule, seed=seed)

    return SessionTranscript(
        mode=mode,
        config=cfg,
        challenge=ch,
        message=m,
        per_subset=report.per_subset,
        verdict=report.verdict,
        copies_consumed=report.total_copies_consumed,
        copies_sent=sent,
    )
