"""
Test the command-line surface end to end: artifacts, manifests and exit codes.
"""
import json

import pytest

from cli import main
from errors import (
    EXIT_COPY_BUDGET,
    EXIT_FORMAT,
    EXIT_NO_SEPARATION,
    EXIT_OK,
    EXIT_PARAMETER,
    EXIT_REJECT,
)


def run(tmp_path, *argv) -> int:
    return main(["--dir", str(tmp_path), *argv])


@pytest.fixture
def keyed(tmp_path):
    assert run(tmp_path, "keygen", "--lambda", "4", "--n", "6", "--k", "2", "--seed", "1") == EXIT_OK
    return tmp_path


def test_keygen_writes_keys_and_manifest(keyed):
    pk = json.loads((keyed / "pk.json").read_text())
    assert pk["N"] == 6 and pk["k"] == 2
    assert len(pk["entries"]) == 15
    assert "cached_state" not in (keyed / "sk.json").read_text()

    manifest = json.loads((keyed / "keygen.manifest.json").read_text())
    assert manifest["command"] == "keygen"
    assert manifest["seed"] == 1
    assert set(manifest["outputs"]) == {"sk.json", "pk.json"}
    assert manifest["versions"]["format"] == 1


def test_keygen_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "keygen", "--lambda", "2", "--n", "4", "--k", "1", "--seed", "9") == EXIT_OK
    assert (a / "pk.json").read_bytes() == (b / "pk.json").read_bytes()


def test_keygen_rejects_k_equal_to_n(tmp_path):
    assert run(tmp_path, "keygen", "--lambda", "4", "--n", "6", "--k", "6", "--seed", "1") == EXIT_PARAMETER


def test_challenge_guard(keyed):
    assert run(keyed, "challenge", "--m-size", "6", "--seed", "1") == EXIT_PARAMETER
    assert run(keyed, "challenge", "--m-size", "3", "--seed", "1") == EXIT_OK
    challenge = json.loads((keyed / "challenge.json").read_text())
    assert len(challenge["subset"]) == 3


def test_sign_then_verify_accepts(keyed):
    assert run(keyed, "sign", "--message", "abcd", "--k", "2", "--m-size", "3", "--seed", "7") == EXIT_OK
    assert run(keyed, "verify", "--message", "abcd", "--seed", "7") == EXIT_OK
    report = json.loads((keyed / "report.json").read_text())
    assert report["verdict"] == "ACCEPT"


def test_sign_with_challenge_file(keyed):
    assert run(keyed, "challenge", "--m-size", "3", "--seed", "2") == EXIT_OK
    assert run(keyed, "sign", "--challenge", "challenge.json", "--message", "hello", "--hash",
               "--exact", "--seed", "3") == EXIT_OK
    assert run(keyed, "verify", "--message", "hello", "--hash", "--exact", "--epsilon", "1e-6",
               "--seed", "3") == EXIT_OK


def test_sign_needs_a_challenge(keyed):
    assert run(keyed, "sign", "--message", "ab", "--seed", "1") == EXIT_PARAMETER


def test_verify_rejects_a_different_message(keyed):
    assert run(keyed, "sign", "--message", "abc", "--k", "2", "--m-size", "3", "--exact", "--seed", "7") == EXIT_OK
    assert run(keyed, "verify", "--message", "abc", "--exact", "--epsilon", "1e-6", "--diagnostic",
               "--seed", "7") == EXIT_OK
    assert run(keyed, "verify", "--message", "abd", "--exact", "--epsilon", "1e-6", "--diagnostic",
               "--seed", "7") == EXIT_REJECT


def test_unknown_message_symbol(keyed):
    assert run(keyed, "sign", "--message", "abz", "--k", "2", "--m-size", "3", "--seed", "7") == EXIT_PARAMETER


def test_truncated_bundle_is_a_format_error(keyed):
    assert run(keyed, "sign", "--message", "ab", "--k", "2", "--m-size", "3", "--exact", "--seed", "7") == EXIT_OK
    text = (keyed / "bundle.json").read_text()
    (keyed / "bundle.json").write_text(text[: len(text) // 2])
    assert run(keyed, "verify", "--message", "ab", "--seed", "7") == EXIT_FORMAT


def test_bundle_without_copies_exhausts_the_budget(keyed):
    assert run(keyed, "sign", "--message", "ab", "--k", "2", "--m-size", "3", "--exact", "--seed", "7") == EXIT_OK
    assert run(keyed, "verify", "--message", "ab", "--seed", "7") == EXIT_COPY_BUDGET


def test_session_command(tmp_path):
    assert run(tmp_path, "session", "--mode", "authenticate", "--lambda", "2", "--n", "5", "--k", "1",
               "--m-size", "2", "--seed", "3") == EXIT_OK
    transcript = json.loads((tmp_path / "session.json").read_text())
    assert transcript["mode"] == "authenticate"
    assert transcript["copies_consumed"] == transcript["copies_sent"]


def test_attack_commands(tmp_path):
    assert run(tmp_path, "attack", "--strategy", "nope", "--n", "6", "--k", "2", "--m-size", "3",
               "--seed", "1") == EXIT_PARAMETER
    assert run(tmp_path, "attack", "--strategy", "leak-full", "--trials", "2", "--n", "6", "--k", "2",
               "--m-size", "3", "--seed", "1", "--csv", "leak.csv") == EXIT_OK
    report = json.loads((tmp_path / "attack.json").read_text())
    assert report["win_rate"] == 1.0
    assert (tmp_path / "leak.csv").read_text().startswith("max_distance")


def test_oracle_commands(tmp_path):
    assert run(tmp_path, "keygen", "--lambda", "4", "--n", "5", "--k", "2", "--seed", "3") == EXIT_OK
    assert run(tmp_path, "oracle", "--in", "pk.json") == EXIT_OK
    assert run(tmp_path, "oracle", "--bell", "3") == EXIT_REJECT
    assert run(tmp_path, "oracle") == EXIT_PARAMETER
    result = json.loads((tmp_path / "oracle.json").read_text())
    assert result["status"] == "Infeasible"


def test_calibration_without_separation(tmp_path):
    code = run(tmp_path, "calibrate", "--noise-p", "1", "--trials", "30", "--n", "6", "--k", "2",
               "--m-size", "3", "--seed", "1")
    assert code == EXIT_NO_SEPARATION
    report = json.loads((tmp_path / "calibration.json").read_text())
    assert report["status"] == "NO_SEPARATION"
    assert "epsilon_star" not in report


def test_sign_refuses_the_whole_register(keyed):
    assert run(keyed, "sign", "--message", "ab", "--k", "2", "--m-size", "6", "--seed", "7") == EXIT_PARAMETER


def test_sign_prints_the_symbols_it_used(keyed, capsys):
    assert run(keyed, "sign", "--message", "abba", "--k", "2", "--m-size", "3", "--exact", "--seed", "7") == EXIT_OK
    out = capsys.readouterr().out
    assert "symbols: a=skip, b=nonparametric" in out


@pytest.mark.parametrize("argv", [
    ("keygen", "--lambda", "2", "--n", "4", "--k", "1", "--seed", "1", "--binary"),
    ("sign", "--message", "ab", "--k", "2", "--m-size", "3", "--seed", "7", "--binary"),
    ("verify", "--message", "ab", "--seed", "7", "--binary"),
])
def test_binary_flag_is_reserved(tmp_path, argv):
    assert run(tmp_path, *argv) == EXIT_PARAMETER
    assert not (tmp_path / "pk.json").exists()
    assert not (tmp_path / "bundle.json").exists()
