"""
Command-line entry point.

    python cli.py keygen --lambda 4 --n 6 --k 2 --seed 1
    python cli.py sign --sk sk.json --k 2 --m-size 4 --message abc --seed 7
    python cli.py verify --pk pk.json --bundle bundle.json --message abc --seed 7

Exit codes: 0 ACCEPT/Feasible, 1 REJECT/Infeasible, 2 bad parameters,
3 I/O failure, 4 malformed artifact, 5 copy budget exhausted,
6 oracle undecided, 7 calibration found no separating threshold.
"""
from typing import Any, Dict, List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError

import config
import services
from artifact_manager import ArtifactManager
from attack_service import write_distance_csv
from cldm_oracle_service import bell_contradiction_instance
from errors import (
    EXIT_NO_SEPARATION,
    EXIT_OK,
    EXIT_PARAMETER,
    EXIT_REJECT,
    EXIT_UNDECIDED,
    ParameterError,
    QmpSigError,
)
from models import Challenge, RunManifest, SessionConfig
from quantum_core import purity

logger = logging.getLogger(__name__)


def _manifest(args: argparse.Namespace, store: ArtifactManager, cfg: Optional[SessionConfig] = None) -> None:
    arguments: Dict[str, Any] = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "dir", "manifest")
    }
    manifest = RunManifest(
        command=args.command,
        seed=getattr(args, "seed", None) or 0,
        config=cfg,
        arguments=arguments,
    )
    store.write_manifest(manifest, args.manifest or f"{args.command}.manifest.json")


def _session_config(args: argparse.Namespace, num_qubits: int, k: int, m_size: int) -> SessionConfig:
    return SessionConfig(
        num_qubits=num_qubits,
        k=k,
        m_size=m_size,
        epsilon=args.epsilon,
        delta=args.delta,
        noise_p=getattr(args, "noise_p", 0.0),
        seed=getattr(args, "seed", 0) or 0,
        security_parameter=getattr(args, "security_parameter", 4),
        shots=args.shots,
        exact=args.exact,
        diagnostic=getattr(args, "diagnostic", False),
        metric=getattr(args, "metric", "trace"),
    )


# --- Commands ---

def cmd_keygen(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    sk, pk = services.generate_keys(args.security_parameter, args.n, args.k, args.seed)
    store.save_private_key(sk, args.out_sk)
    store.save_public_key(pk, args.out_pk)
    _manifest(args, store)

    print(f"public key: N={pk.num_qubits} k={pk.k} entries={len(pk.entries)} circuit seed={sk.circuit.seed}")
    print(f"{'subset':<16} purity")
    for entry in pk.entries:
        print(f"{str(list(entry.subset.indices)):<16} {purity(entry.marginal):.6f}")
    return EXIT_OK


def cmd_challenge(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    pk = store.load_public_key(args.pk)
    ch = services.issue_challenge(pk.num_qubits, pk.k, args.m_size, args.seed)
    store.save(ch, args.out)
    _manifest(args, store)
    print(f"challenge: {list(ch.subset.indices)} nonce={ch.nonce}")
    return EXIT_OK


def cmd_sign(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    sk = store.load_private_key(args.sk)
    if args.challenge:
        ch = store.load(Challenge, args.challenge)
    else:
        if args.k is None or args.m_size is None:
            raise ParameterError("sign needs --challenge or both --k and --m-size")
        ch = services.issue_challenge(sk.circuit.num_qubits, args.k, args.m_size, args.seed)
    m = services.read_message(args.message, hashed=args.hash)
    cfg = _session_config(args, ch.num_qubits, ch.k, ch.subset.size)
    bundle = services.sign_message(sk, ch, m, cfg)
    store.save(bundle, args.out)
    _manifest(args, store, cfg)
    print(f"signed {m.text!r} on challenge {list(ch.subset.indices)} with {bundle.copies} copies")
    print("symbols: " + ", ".join(services.describe_symbols(m)))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    pk = store.load_public_key(args.pk)
    bundle = store.load_bundle(args.bundle)
    m = services.read_message(args.message, hashed=args.hash)
    cfg = _session_config(args, pk.num_qubits, pk.k, bundle.challenge.subset.size)
    report = services.verify_signature(pk, m, bundle, cfg)
    store.save(report, args.out)
    _manifest(args, store, cfg)
    print(f"{report.verdict}: max distance {report.max_distance:.5f} (threshold {report.threshold}), "
          f"{report.total_copies_consumed} copies consumed")
    return EXIT_OK if report.verdict == "ACCEPT" else EXIT_REJECT


def cmd_session(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    cfg = _session_config(args, args.n, args.k, args.m_size)
    transcript = services.run_protocol_session(cfg, args.mode, args.seed)
    store.save(transcript, args.out)
    _manifest(args, store, cfg)
    print(f"{args.mode}: {transcript.verdict} ({transcript.copies_consumed}/{transcript.copies_sent} copies)")
    return EXIT_OK if transcript.verdict == "ACCEPT" else EXIT_REJECT


def cmd_attack(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    cfg = _session_config(args, args.n, args.k, args.m_size)
    report, _ = services.attack(args.strategy, args.trials, cfg, args.seed, queries=args.queries)
    store.save(report, args.out)
    if args.csv:
        write_distance_csv(report, store.resolve(args.csv))
    _manifest(args, store, cfg)
    print(f"{report.strategy}: {report.wins}/{report.trials} wins (rate {report.win_rate:.3f}), "
          f"{report.disqualified} disqualified")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    cfg = _session_config(args, args.n, args.k, args.m_size)
    epsilon_star, report = services.calibrate(cfg, args.noise_p, args.trials, args.seed)
    store.save(report, args.out)
    if args.csv:
        write_distance_csv(report, store.resolve(args.csv))
    _manifest(args, store, cfg)
    print(f"honest p99 {report.honest_p99:.5f}, forgery p1 {report.forgery_p1:.5f}: {report.status}")
    if epsilon_star is None:
        return EXIT_NO_SEPARATION
    print(f"epsilon* = {epsilon_star:.5f}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    store = ArtifactManager(args.dir)
    if args.bell is not None:
        inst = bell_contradiction_instance(args.bell)
    elif args.input:
        inst = store.load_instance(args.input)
    else:
        raise ParameterError("oracle needs --in or --bell")
    if args.beta is not None:
        inst = inst.model_copy(update={"beta": args.beta})
    result = services.check_consistency(inst, args.max_iter, args.tol_feas)
    store.save(result, args.out)
    _manifest(args, store)
    print(f"{result.status}: residual {result.residual:.3g} after {result.iterations} iterations")
    return {"Feasible": EXIT_OK, "Infeasible": EXIT_REJECT}.get(result.status, EXIT_UNDECIDED)


# --- Parser ---

def _protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=config.DEFAULT_EPSILON)
    p.add_argument("--delta", type=float, default=config.DEFAULT_DELTA)
    p.add_argument("--shots", type=int, default=None, help="shots per subset (default from epsilon/delta)")
    p.add_argument("--exact", action="store_true", help="use exact outcome probabilities instead of shots")


def _binary_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--binary", action="store_true", help="binary artifact encoding (reserved)")


def _size_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="security_parameter", type=int, default=4)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m-size", dest="m_size", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmpsig", description="Quantum marginal signature simulator")
    ap.add_argument("--dir", default=None, help="artifact directory (default QMPSIG_ARTIFACT_DIR or .)")
    ap.add_argument("--manifest", default=None, help="manifest path (default <command>.manifest.json)")
    sub = ap.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="generate a key pair")
    k.add_argument("--lambda", dest="security_parameter", type=int, required=True)
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--seed", type=int, required=True)
    k.add_argument("--out-sk", default="sk.json")
    k.add_argument("--out-pk", default="pk.json")
    _binary_flag(k)
    k.set_defaults(func=cmd_keygen)

    c = sub.add_parser("challenge", help="draw a verifier challenge")
    c.add_argument("--pk", default="pk.json")
    c.add_argument("--m-size", dest="m_size", type=int, required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out", default="challenge.json")
    c.set_defaults(func=cmd_challenge)

    s = sub.add_parser("sign", help="sign a message")
    s.add_argument("--sk", default="sk.json")
    s.add_argument("--challenge", default=None, help="challenge file (otherwise drawn from --seed)")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--m-size", dest="m_size", type=int, default=None)
    s.add_argument("--message", required=True)
    s.add_argument("--hash", action="store_true", help="hash the message to a fixed-length digest")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="bundle.json")
    _binary_flag(s)
    _protocol_flags(s)
    s.set_defaults(func=cmd_sign)

    v = sub.add_parser("verify", help="verify a signature bundle")
    v.add_argument("--pk", default="pk.json")
    v.add_argument("--bundle", default="bundle.json")
    v.add_argument("--message", required=True)
    v.add_argument("--hash", action="store_true")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--diagnostic", action="store_true", help="check every subset even after a failure")
    v.add_argument("--metric", choices=["trace", "infidelity"], default="trace")
    v.add_argument("--out", default="report.json")
    _binary_flag(v)
    _protocol_flags(v)
    v.set_defaults(func=cmd_verify)

    se = sub.add_parser("session", help="run a seeded end-to-end session")
    se.add_argument("--mode", choices=["authenticate", "sign-verify"], default="sign-verify")
    se.add_argument("--noise-p", dest="noise_p", type=float, default=0.0)
    se.add_argument("--seed", type=int, required=True)
    se.add_argument("--out", default="session.json")
    _size_flags(se)
    _protocol_flags(se)
    se.set_defaults(func=cmd_session)

    a = sub.add_parser("attack", help="run the forgery game")
    a.add_argument("--strategy", required=True)
    a.add_argument("--trials", type=int, default=1)
    a.add_argument("--queries", type=int, default=4)
    a.add_argument("--noise-p", dest="noise_p", type=float, default=0.0)
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--out", default="attack.json")
    a.add_argument("--csv", default=None)
    _size_flags(a)
    _protocol_flags(a)
    a.set_defaults(func=cmd_attack)

    cal = sub.add_parser("calibrate", help="calibrate the acceptance threshold")
    cal.add_argument("--noise-p", dest="noise_p", type=float, default=0.0)
    cal.add_argument("--trials", type=int, default=config.MIN_CALIBRATION_TRIALS)
    cal.add_argument("--seed", type=int, required=True)
    cal.add_argument("--out", default="calibration.json")
    cal.add_argument("--csv", default=None)
    _size_flags(cal)
    _protocol_flags(cal)
    cal.set_defaults(func=cmd_calibrate)

    o = sub.add_parser("oracle", help="check marginal consistency")
    o.add_argument("--in", dest="input", default=None, help="instance or public-key file")
    o.add_argument("--bell", type=int, default=None, help="use the Bell-contradiction instance on N qubits")
    o.add_argument("--beta", type=float, default=None)
    o.add_argument("--max-iter", dest="max_iter", type=int, default=config.DEFAULT_ORACLE_ITERATIONS)
    o.add_argument("--tol-feas", dest="tol_feas", type=float, default=config.DEFAULT_TOL_FEAS)
    o.add_argument("--out", default="oracle.json")
    o.set_defaults(func=cmd_oracle)

    return ap


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=config.log_level(), format="[%(levelname)s] %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "binary", False):
            raise ParameterError("--binary output is not implemented")
        return args.func(args)
    except QmpSigError as e:
        logger.error("%s", e)
        return e.exit_code
    except ValidationError as e:
        logger.error("invalid parameters: %s", e)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
