from typing import List, Optional, Tuple

from attack_service import calibrate_threshold, run_attack_suite
from cldm_oracle_service import cldm_feasibility
from keygen_service import keygen
from message_unitary_service import default_rule, hash_message, parse_word, symbol_table
from models import (
    AttackReport,
    CalibrationReport,
    Challenge,
    CldmInstance,
    FeasibilityResult,
    GameTranscript,
    GateRule,
    Message,
    PrivateKey,
    PublicKey,
    SessionConfig,
    SessionTranscript,
    SignatureBundle,
    VerdictReport,
)
from protocol_service import draw_challenge, run_session, sign, verify


def generate_keys(security_parameter: int, num_qubits: int, k: int, seed: int) -> Tuple[PrivateKey, PublicKey]:
    """
    Generate a key pair.
    Delegates to keygen_service.
    """
    return keygen(security_parameter, num_qubits, k, seed)


def issue_challenge(num_qubits: int, k: int, m_size: int, seed: int) -> Challenge:
    """
    Draw a verifier challenge.
    Delegates to protocol_service.
    """
    return draw_challenge(num_qubits, k, m_size, seed)


def read_message(text: str, rule: Optional[GateRule] = None, hashed: bool = False) -> Message:
    """
    Turn CLI text into a message: parsed symbol by symbol, or hashed to a
    fixed-length digest when `hashed` is set.
    """
    rule = rule or default_rule()
    if hashed:
        return hash_message(text.encode("utf-8"), rule.gamma, rule.alphabet)
    return parse_word(text, rule.alphabet, rule.gamma)


def describe_symbols(m: Message, rule: Optional[GateRule] = None) -> List[str]:
    """
    Semantic of each distinct symbol in a message, in order of first use.
    Delegates to message_unitary_service.
    """
    table = symbol_table(rule or default_rule())
    return [f"{s}={table[s]}" for s in dict.fromkeys(m.word)]


def sign_message(sk: PrivateKey, ch: Challenge, m: Message, cfg: SessionConfig,
                 rule: Optional[GateRule] = None) -> SignatureBundle:
    """
    Sign a message for a challenge.
    Delegates to protocol_service.
    """
    return sign(sk, ch, m, rule or default_rule(), cfg)


def verify_signature(pk: PublicKey, m: Message, bundle: SignatureBundle, cfg: SessionConfig,
                     rule: Optional[GateRule] = None) -> VerdictReport:
    """
    Verify a signature bundle.
    Delegates to protocol_service.
    """
    return verify(pk, m, bundle, cfg, rule or default_rule())


def run_protocol_session(cfg: SessionConfig, mode: str, seed: int) -> SessionTranscript:
    """
    Run a full seeded session.
    Delegates to protocol_service.
    """
    return run_session(cfg, mode, seed)


def attack(strategy: str, trials: int, cfg: SessionConfig, seed: int,
           queries: int = 4) -> Tuple[AttackReport, List[GameTranscript]]:
    """
    Run the forgery game repeatedly.
    Delegates to attack_service.
    """
    return run_attack_suite(strategy, trials, cfg, seed, q=queries)


def calibrate(cfg: SessionConfig, noise_p: float, trials: int, seed: int) -> Tuple[Optional[float], CalibrationReport]:
    """
    Calibrate the acceptance threshold.
    Delegates to attack_service.
    """
    return calibrate_threshold(cfg, noise_p, trials, seed)


def check_consistency(inst: CldmInstance, max_iter: int, tol_feas: float) -> FeasibilityResult:
    """
    Decide whether an instance's marginals fit a global state.
    Delegates to cldm_oracle_service.
    """
    return cldm_feasibility(inst, max_iter, tol_feas)
