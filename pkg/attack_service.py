"""
Adversaries, the chosen-message forgery game, and threshold calibration.

The signing oracle in the game answers honestly with the real private key.
Strategies form a fixed registry keyed by name.
"""
from typing import Callable, Dict, List, Optional, Tuple, Union
from itertools import combinations
import logging

import numpy as np
from scipy.special import comb

import config
from errors import ArtifactIOError, ChallengeError, ParameterError
from keygen_service import keygen, layered_circuit, private_state
from message_unitary_service import apply_message_unitary, default_rule, hash_message
from models import (
    AttackReport,
    CalibrationReport,
    Challenge,
    DensityMatrix,
    GameQuery,
    GameTranscript,
    GateRule,
    Message,
    PublicKey,
    QubitSubset,
    SessionConfig,
    SignatureBundle,
)
from protocol_service import check_response, copies_required, make_challenge, respond, sign, verify
from quantum_core import basis_density, depolarize, embed_all, maximally_mixed, partial_trace, trace_distance
from tomography_service import derive_seed

logger = logging.getLogger(__name__)

RANDOM_FORGERY_LAYERS = 8

_QUERY_STREAM = 10
_FORGERY_CHALLENGE_STREAM = 20
_FORGERY_STREAM = 21
_VERIFY_STREAM = 30


def _default_cfg(ch: Challenge) -> SessionConfig:
    return SessionConfig(num_qubits=ch.num_qubits, k=ch.k, m_size=ch.subset.size)


def full_leak_attack(
    pk: PublicKey,
    leaked_state: DensityMatrix,
    ch: Challenge,
    m: Message,
    rule: GateRule,
    cfg: Optional[SessionConfig] = None,
) -> SignatureBundle:
    """Sign any message with a stolen copy of the full private state."""
    if leaked_state.num_qubits != pk.num_qubits:
        raise ParameterError(f"leaked state has {leaked_state.num_qubits} qubits, key has {pk.num_qubits}")
    sigma = apply_message_unitary(partial_trace(leaked_state, ch.subset), m, rule)
    return SignatureBundle(message=m, challenge=ch, copies=copies_required(cfg or _default_cfg(ch)), state=sigma)


def random_state_forgery(
    pk: PublicKey,
    ch: Challenge,
    m: Message,
    rule: GateRule,
    seed: int,
    cfg: Optional[SessionConfig] = None,
) -> SignatureBundle:
    """Run a fixed-depth random circuit on M fresh qubits, then apply the public U_m."""
    rng = np.random.default_rng(seed)
    m_size = ch.subset.size
    guess = embed_all(layered_circuit(m_size, RANDOM_FORGERY_LAYERS, rng), basis_density(m_size))
    sigma = apply_message_unitary(guess, m, rule)
    return SignatureBundle(message=m, challenge=ch, copies=copies_required(cfg or _default_cfg(ch)), state=sigma)


# --- Game ---

def _leak_full(sk, pk, queries, ch, m, rule, cfg, seed):
    return full_leak_attack(pk, private_state(sk), ch, m, rule, cfg)


def _random_state(sk, pk, queries, ch, m, rule, cfg, seed):
    return random_state_forgery(pk, ch, m, rule, seed, cfg)


def _replay_mutate(sk, pk, queries, ch, m, rule, cfg, seed):
    # relabels a queried signature without re-encoding its state
    if not queries:
        raise ParameterError("replay-mutate needs at least one signing query")
    replayed = queries[0].bundle
    return replayed.model_copy(update={"message": m})


Strategy = Callable[..., SignatureBundle]

STRATEGIES: Dict[str, Strategy] = {
    "leak-full": _leak_full,
    "random-state": _random_state,
    "replay-mutate": _replay_mutate,
}


def _fresh_message(seed: int, queried: List[Message], rule: GateRule) -> Message:
    counter = 0
    while True:
        m = hash_message(derive_seed(seed, _FORGERY_STREAM, counter).to_bytes(8, "big"), rule.gamma, rule.alphabet)
        if all(q.word != m.word for q in queried):
            return m
        counter += 1


def run_euf_qcma_game(
    adversary: str,
    q: int,
    cfg: SessionConfig,
    seed: int,
    rule: Optional[GateRule] = None,
    forgery_message: Optional[Message] = None,
) -> GameTranscript:
    """
    Play one chosen-message forgery game.

    Args:
        adversary: a key of STRATEGIES
        q: signing queries the adversary makes (at most GAME_QUERY_CAP)
        cfg: protocol parameters; channel noise hits the forgery too
        seed: game seed (keys, queries, challenge, tomography)
        rule: message rule, default rule when omitted
        forgery_message: force the forged message; a queried one is disqualified

    Returns:
        GameTranscript; `won` requires a fresh message and ACCEPT
    """
    if adversary not in STRATEGIES:
        raise ParameterError(f"unknown strategy {adversary!r}; choose from {sorted(STRATEGIES)}")
    if not (0 <= q <= config.GAME_QUERY_CAP):
        raise ParameterError(f"query count must be in [0, {config.GAME_QUERY_CAP}], got {q}")
    rule = rule or default_rule()
    cfg = cfg.model_copy(update={"seed": seed})
    sk, pk = keygen(cfg.security_parameter, cfg.num_qubits, cfg.k, seed)

    queries: List[GameQuery] = []
    for i in range(q):
        m_i = hash_message(derive_seed(seed, _QUERY_STREAM, i).to_bytes(8, "big"), rule.gamma, rule.alphabet)
        ch_i = make_challenge(cfg, derive_seed(seed, _QUERY_STREAM, i, 1))
        queries.append(GameQuery(message=m_i, bundle=sign(sk, ch_i, m_i, rule, cfg)))

    queried = [x.message for x in queries]
    m_e = forgery_message if forgery_message is not None else _fresh_message(seed, queried, rule)
    fresh = all(x.word != m_e.word for x in queried)
    ch_e = make_challenge(cfg, derive_seed(seed, _FORGERY_CHALLENGE_STREAM))

    forgery = STRATEGIES[adversary](sk, pk, queries, ch_e, m_e, rule, cfg, derive_seed(seed, _FORGERY_STREAM))
    if cfg.noise_p > 0:
        forgery = forgery.model_copy(update={"state": depolarize(forgery.state, cfg.noise_p)})
    report = verify(pk, m_e, forgery, cfg, rule, seed=derive_seed(seed, _VERIFY_STREAM))
    if not fresh:
        logger.warning("game %d: %s forged a queried message; disqualified", seed, adversary)

    return GameTranscript(
        strategy=adversary,
        queries=queries,
        forgery_message=m_e,
        forgery=forgery,
        forged_message_fresh=fresh,
        verdict=report.verdict,
        report=report,
    )


def run_attack_suite(
    strategy: str,
    trials: int,
    cfg: SessionConfig,
    seed: int,
    q: int = 4,
    rule: Optional[GateRule] = None,
) -> Tuple[AttackReport, List[GameTranscript]]:
    """Repeat the game over seeded trials and aggregate the win rate."""
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    games = [run_euf_qcma_game(strategy, q, cfg, derive_seed(seed, t), rule) for t in range(trials)]
    wins = sum(1 for g in games if g.won)
    report = AttackReport(
        strategy=strategy,
        trials=trials,
        wins=wins,
        win_rate=wins / trials,
        disqualified=sum(1 for g in games if not g.forged_message_fresh),
        max_distances=[g.report.max_distance for g in games],
    )
    logger.info("attack %s: %d/%d wins", strategy, wins, trials)
    return report, games


# --- Calibration ---

def _key_signal(pk: PublicKey, ch: Challenge) -> float:
    """Largest distance between a challenged k-marginal and the maximally mixed state."""
    return max(
        trace_distance(pk.lookup(QubitSubset(indices=idx)), maximally_mixed(ch.k))
        for idx in combinations(ch.subset.indices, ch.k)
    )


def calibrate_threshold(
    cfg: SessionConfig,
    noise_p: float,
    trials: int,
    seed: int,
) -> Tuple[Optional[float], CalibrationReport]:
    """
    Place the threshold between honest and random-state forgery distances.

    Honest responses pass through the depolarizing channel; forgeries are
    measured noiseless. Both share challenge and tomography seeds. Distances
    are the per-session maximum over all k-subsets.

    Returns:
        (epsilon_star, report); epsilon_star is None when the honest 99th
        percentile reaches the forgery 1st percentile, or reaches the key
        signal left in the noisy honest state
    """
    if trials < config.MIN_CALIBRATION_TRIALS:
        raise ParameterError(f"calibration needs at least {config.MIN_CALIBRATION_TRIALS} trials, got {trials}")
    if not (0.0 <= noise_p <= 1.0):
        raise ParameterError(f"noise_p must be in [0, 1], got {noise_p}")
    diag = cfg.model_copy(update={"diagnostic": True, "noise_p": noise_p})
    sk, pk = keygen(cfg.security_parameter, cfg.num_qubits, cfg.k, seed)

    honest: List[float] = []
    forged: List[float] = []
    signal: List[float] = []
    for t in range(trials):
        ch = make_challenge(diag, derive_seed(seed, 1, t))
        tomo_seed = derive_seed(seed, 2, t)
        response = depolarize(respond(sk, ch), noise_p)
        honest.append(check_response(pk, ch, response, diag, tomo_seed).max_distance)
        guess = random_state_forgery(pk, ch, Message(word=()), default_rule(), derive_seed(seed, 3, t), diag)
        forged.append(check_response(pk, ch, guess.state, diag, tomo_seed).max_distance)
        # depolarizing shrinks every marginal's distance from I/2^k by (1 - p)
        signal.append((1.0 - noise_p) * _key_signal(pk, ch))

    honest_p99 = float(np.percentile(honest, 99))
    forgery_p1 = float(np.percentile(forged, 1))
    signal_p1 = float(np.percentile(signal, 1))
    separated = honest_p99 < forgery_p1 and honest_p99 < signal_p1
    epsilon_star = 0.5 * (honest_p99 + forgery_p1) if separated else None
    logger.info("calibration at noise %.3f: honest p99 %.4f, forgery p1 %.4f, key signal p1 %.4f -> %s",
                noise_p, honest_p99, forgery_p1, signal_p1, epsilon_star)
    report = CalibrationReport(
        status="SEPARATED" if separated else "NO_SEPARATION",
        epsilon_star=epsilon_star,
        noise_p=noise_p,
        trials=trials,
        honest_p99=honest_p99,
        forgery_p1=forgery_p1,
        signal_p1=signal_p1,
        honest_distances=honest,
        forgery_distances=forged,
    )
    return epsilon_star, report


def subset_coverage_cost(num_qubits: int, m_size: int, k: int = 1) -> int:
    """(N choose M): challenges needed to see every M-subset once."""
    if not (1 <= k < m_size < num_qubits):
        raise ChallengeError(f"need k < M < N, got k={k}, M={m_size}, N={num_qubits}")
    return int(comb(num_qubits, m_size, exact=True))


def write_distance_csv(report: Union[AttackReport, CalibrationReport], path: str) -> None:
    """Write the distance distribution(s) of a report as CSV."""
    if isinstance(report, CalibrationReport):
        data = np.column_stack([report.honest_distances, report.forgery_distances])
        header = "honest,forgery"
    else:
        data = np.asarray(report.max_distances).reshape(-1, 1)
        header = "max_distance"
    try:
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10f")
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}") from e
