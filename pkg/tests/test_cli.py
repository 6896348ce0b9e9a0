from __future__ import annotations

import json
from datetime import date

import pytest

from satakit import expected_sans, to_query_form, to_transport_json
from satakit.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main

from conftest import FIXTURES_DIR, key_for, sata_for, seed_for
from oracles import FACEBOOK_LABEL, SELFAUTH_LABEL
from test_credential import fig1_body, paper_shaped_self_sattestation


def run(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def bank_files(tmp_path, bank_key, bank_sata, bank_cert, bank_header):
    key_file = tmp_path / "bank.key"
    key_file.write_text(bank_key.secret.hex() + "\n")
    header_file = tmp_path / "bank.satt"
    header_file.write_text(to_transport_json(bank_header) + "\n")
    cert_file = tmp_path / "bank-cert.json"
    cert_file.write_text(
        json.dumps(
            {
                "fingerprint": bank_cert.fingerprint,
                "san_list": list(bank_cert.san_list),
                "not_before": "2020-01-01",
                "not_after": "2021-01-01",
                "has_sct": True,
            }
        )
    )
    return {
        "key": key_file,
        "header": header_file,
        "cert": cert_file,
        "url": to_query_form(bank_sata),
    }


# -- basic flows ---------------------------------------------------------------


def test_onion_parse_json(capsys):
    code, out, _ = run(capsys, "--json", "onion", "parse", FACEBOOK_LABEL)
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["checksum_ok"] is True
    assert payload["version"] == 3


def test_onion_encode_keygen_roundtrip(capsys, tmp_path):
    seed = seed_for("cli-key").hex()
    code, out, _ = run(capsys, "--json", "onion", "keygen", "--seed", seed)
    assert code == EXIT_OK
    payload = json.loads(out)
    code, out, _ = run(capsys, "--json", "onion", "encode", payload["public_hex"])
    assert json.loads(out)["label"] == payload["onion_label"]


def test_sata_parse_and_render(capsys):
    url = f"https://selfauth.site/?onion={SELFAUTH_LABEL}"
    code, out, _ = run(capsys, "--json", "sata", "parse", url)
    assert code == EXIT_OK
    assert json.loads(out)["domain"] == "selfauth.site"
    code, out, _ = run(
        capsys,
        "--json",
        "sata",
        "render",
        "--domain",
        "selfauth.site",
        "--onion",
        SELFAUTH_LABEL,
        "--form",
        "query",
    )
    assert json.loads(out)["rendered"] == url


def test_sata_rewrite(capsys):
    code, out, _ = run(
        capsys, "--json", "sata", "rewrite", "www.cbc.ca.securedrop.tor.onion"
    )
    assert code == EXIT_OK
    assert json.loads(out)["base_domain"] == "www.cbc.ca"


def test_satt_self_and_verify_and_fresh(capsys, tmp_path, bank_files):
    out_file = tmp_path / "self.satt"
    code, out, _ = run(
        capsys,
        "satt",
        "self",
        "--key",
        str(bank_files["key"]),
        "--domain",
        "bank.example",
        "--fingerprint",
        "AB" * 32,
        "--issued",
        "2020-08-25",
        "--refreshed",
        "2020-08-31",
        "--rate",
        "7",
        "--out",
        str(out_file),
    )
    assert code == EXIT_OK
    assert out_file.exists()
    code, out, _ = run(capsys, "--json", "satt", "verify", "--file", str(out_file))
    assert code == EXIT_OK and json.loads(out)["ok"] is True
    code, out, _ = run(
        capsys, "--json", "satt", "fresh", "--file", str(out_file), "--now", "2020-09-01"
    )
    assert code == EXIT_OK and json.loads(out)["ok"] is True


def test_satt_issue_from_body_file(capsys, tmp_path):
    body = fig1_body()
    key = key_for("sattestora.info")
    key_file = tmp_path / "sattestor.key"
    key_file.write_text(key.secret.hex())
    from satakit.credential import _body_wire  # wire form without signature

    body_file = tmp_path / "body.json"
    body_file.write_text(json.dumps(_body_wire(body)))
    code, out, _ = run(
        capsys, "satt", "issue", "--key", str(key_file), "--body", str(body_file)
    )
    assert code == EXIT_OK
    from satakit import from_transport_json, verify_credential

    verify_credential(from_transport_json(out.strip()))


def test_verify_accept(capsys, bank_files):
    code, out, _ = run(
        capsys,
        "--json",
        "verify",
        "--url",
        bank_files["url"],
        "--cert",
        str(bank_files["cert"]),
        "--header",
        str(bank_files["header"]),
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_OK
    assert json.loads(out)["outcome"] == "accept"


def test_verify_verdict_exit_codes(capsys, tmp_path, bank_files, bank_cert):
    # stale: evaluate far in the future -> 67
    code, _, _ = run(
        capsys,
        "verify",
        "--url",
        bank_files["url"],
        "--cert",
        str(bank_files["cert"]),
        "--header",
        str(bank_files["header"]),
        "--now",
        "2020-10-01",
    )
    assert code == 67
    # SAN-free cert -> 69
    bare = tmp_path / "bare.json"
    bare.write_text(
        json.dumps(
            {
                "fingerprint": bank_cert.fingerprint,
                "san_list": ["unrelated.example"],
                "not_before": "2020-01-01",
                "not_after": "2021-01-01",
            }
        )
    )
    code, _, _ = run(
        capsys,
        "verify",
        "--url",
        bank_files["url"],
        "--cert",
        str(bare),
        "--header",
        str(bank_files["header"]),
        "--now",
        "2020-09-01",
    )
    assert code == 69
    # tampered header signature -> 66
    wire = json.loads(bank_files["header"].read_text())
    sig = wire["signature"]
    wire["signature"] = ("0" if sig[0] != "0" else "1") + sig[1:]
    tampered = tmp_path / "tampered.satt"
    tampered.write_text(json.dumps(wire))
    code, _, _ = run(
        capsys,
        "verify",
        "--url",
        bank_files["url"],
        "--cert",
        str(bank_files["cert"]),
        "--header",
        str(tampered),
        "--now",
        "2020-09-01",
    )
    assert code == 66
    # wrong fingerprint -> 68
    other = tmp_path / "othercert.json"
    other.write_text(
        json.dumps(
            {
                "fingerprint": "F" * 64,
                "san_list": list(bank_cert.san_list),
                "not_before": "2020-01-01",
                "not_after": "2021-01-01",
            }
        )
    )
    code, _, _ = run(
        capsys,
        "verify",
        "--url",
        bank_files["url"],
        "--cert",
        str(other),
        "--header",
        str(bank_files["header"]),
        "--now",
        "2020-09-01",
    )
    assert code == 68


def test_verify_reads_real_x509_pem(capsys, tmp_path, bank_sata, bank_key):
    from cryptography import x509
    from cryptography.hazmat.primitives import serialization
    from cryptography.x509.oid import NameOID
    from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
    from datetime import datetime, timezone

    signer = Ed25519PrivateKey.from_private_bytes(seed_for("ca"))
    names = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "bank.example")])
    cert = (
        x509.CertificateBuilder()
        .subject_name(names)
        .issuer_name(names)
        .public_key(signer.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(datetime(2020, 1, 1, tzinfo=timezone.utc))
        .not_valid_after(datetime(2021, 1, 1, tzinfo=timezone.utc))
        .add_extension(
            x509.SubjectAlternativeName(
                [x509.DNSName(name) for name in expected_sans(bank_sata)]
            ),
            critical=False,
        )
        .sign(signer, None)
    )
    pem = cert.public_bytes(serialization.Encoding.PEM)
    cert_file = tmp_path / "bank.pem"
    cert_file.write_bytes(pem)

    from satakit import fingerprint_cert, make_self_sattestation

    der = cert.public_bytes(serialization.Encoding.DER)
    header = make_self_sattestation(
        key=bank_key,
        domain="bank.example",
        cert_fingerprints=[fingerprint_cert(der)],
        issued=date(2020, 8, 31),
        refreshed_on=date(2020, 8, 31),
        refresh_rate_days=7,
    )
    header_file = tmp_path / "bank-pem.satt"
    header_file.write_text(to_transport_json(header))
    code, out, _ = run(
        capsys,
        "--json",
        "verify",
        "--url",
        to_query_form(bank_sata),
        "--cert",
        str(cert_file),
        "--header",
        str(header_file),
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_OK, out
    assert json.loads(out)["outcome"] == "accept"


def test_trust_eval_and_rotate(capsys, tmp_path):
    from conftest import third_party

    root_key = key_for("root")
    policy_file = tmp_path / "policy.json"
    policy_file.write_text(
        json.dumps(
            {
                "roots": [
                    {
                        "sattestor_domain": "root.example",
                        "sattestor_onion": root_key.address.label,
                        "trusted_labels": ["news"],
                    }
                ],
                "max_chain_depth": 3,
            }
        )
    )
    creds_dir = tmp_path / "creds"
    creds_dir.mkdir()
    cred = third_party("root.example", "root", [("paper.example", "paper", ["news"])])
    (creds_dir / "root.example-1.satt").write_text(to_transport_json(cred))
    subject = sata_for("paper.example", "paper")
    code, out, _ = run(
        capsys,
        "--json",
        "trust",
        "eval",
        "--policy",
        str(policy_file),
        "--creds",
        str(creds_dir),
        "--subject",
        to_query_form(subject),
        "--label",
        "news",
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_OK
    assert json.loads(out)["trusted"] is True
    code, out, _ = run(
        capsys,
        "--json",
        "trust",
        "eval",
        "--policy",
        str(policy_file),
        "--creds",
        str(creds_dir),
        "--subject",
        to_query_form(subject),
        "--label",
        "bank",
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_DATA
    assert json.loads(out)["trusted"] is False

    # rotation: only one direction present -> invalid
    old = sata_for("rotating.example", "rot-old")
    new = sata_for("rotating.example", "rot-new")
    rot_dir = tmp_path / "rot"
    rot_dir.mkdir()
    one_way = third_party(
        "rotating.example", "rot-old", [("rotating.example", "rot-new", ["successor"])]
    )
    (rot_dir / "rotating.example-1.satt").write_text(to_transport_json(one_way))
    code, out, _ = run(
        capsys,
        "--json",
        "rotate",
        "check",
        "--old",
        to_query_form(old),
        "--new",
        to_query_form(new),
        "--creds",
        str(rot_dir),
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_DATA
    assert json.loads(out)["missing"] == ["new-to-old"]

    back = third_party(
        "rotating.example", "rot-new", [("rotating.example", "rot-old", ["predecessor"])]
    )
    (rot_dir / "rotating.example-2.satt").write_text(to_transport_json(back))
    code, out, _ = run(
        capsys,
        "--json",
        "rotate",
        "check",
        "--old",
        to_query_form(old),
        "--new",
        to_query_form(new),
        "--creds",
        str(rot_dir),
        "--now",
        "2020-09-01",
    )
    assert code == EXIT_OK


def test_rotate_pointer(capsys, tmp_path):
    old = sata_for("rotating.example", "rot-old")
    new = sata_for("rotating.example", "rot-new")
    key_file = tmp_path / "old.key"
    key_file.write_text(key_for("rot-old").secret.hex())
    code, out, _ = run(
        capsys,
        "rotate",
        "pointer",
        "--old",
        to_query_form(old),
        "--new",
        to_query_form(new),
        "--key",
        str(key_file),
        "--fingerprint",
        "AB" * 32,
        "--issued",
        "2020-08-31",
        "--refreshed",
        "2020-08-31",
        "--rate",
        "7",
    )
    assert code == EXIT_OK
    assert "sattestor({" in out


def test_sim_run_and_matrix(capsys, tmp_path):
    fixture = FIXTURES_DIR / "attack1_onion_alt_svc.json"
    code, out, _ = run(
        capsys, "--json", "sim", "run", "--fixture", str(fixture), "--browser", "legacy"
    )
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["steps"][-1]["reached_endpoint"] == "attacker-onion"

    out_file = tmp_path / "matrix.json"
    code, out, _ = run(
        capsys,
        "--json",
        "sim",
        "matrix",
        "--fixtures",
        str(FIXTURES_DIR),
        "--out",
        str(out_file),
    )
    assert code == EXIT_OK
    rows = json.loads(out_file.read_text())
    assert len(rows) >= 9


def test_json_output_stable_across_runs(capsys):
    _, out1, _ = run(capsys, "--json", "onion", "parse", FACEBOOK_LABEL)
    _, out2, _ = run(capsys, "--json", "onion", "parse", FACEBOOK_LABEL)
    assert out1 == out2


# -- exit code contract ------------------------------------------------------------


def test_usage_errors_exit_64(capsys):
    with pytest.raises(SystemExit) as err:
        main(["onion"])
    capsys.readouterr()
    assert err.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["--bogus-flag"])
    capsys.readouterr()
    assert err.value.code == EXIT_USAGE


def test_now_required_in_test_mode(capsys, monkeypatch, tmp_path, bank_files):
    monkeypatch.setenv("SATAKIT_TEST_MODE", "1")
    with pytest.raises(SystemExit) as err:
        main(["satt", "fresh", "--file", str(bank_files["header"])])
    capsys.readouterr()
    assert err.value.code == EXIT_USAGE


def test_io_error_exit_74(capsys):
    code, _, err = run(capsys, "satt", "verify", "--file", "/nonexistent/cred.satt")
    assert code == EXIT_IO


def test_every_error_class_reachable(capsys, tmp_path, bank_files):
    """One CLI invocation per library error class; class name must be printed."""
    from satakit.credential import _body_wire

    wrong_key_file = tmp_path / "wrong.key"
    wrong_key_file.write_text(key_for("not-sattestora").secret.hex())
    body_file = tmp_path / "body.json"
    body_file.write_text(json.dumps(_body_wire(fig1_body())))

    bad_json_file = tmp_path / "bad.satt"
    bad_json_file.write_text("{broken")

    truncated_sig = tmp_path / "shortsig.satt"
    wire = json.loads(to_transport_json(paper_shaped_self_sattestation()))
    wire["signature"] = wire["signature"][:10]
    truncated_sig.write_text(json.dumps(wire))

    tampered = tmp_path / "tampered.satt"
    wire = json.loads(to_transport_json(paper_shaped_self_sattestation()))
    sig = wire["signature"]
    wire["signature"] = ("0" if sig[0] != "0" else "1") + sig[1:]
    tampered.write_text(json.dumps(wire))

    structural = tmp_path / "structural.satt"
    wire = json.loads(to_transport_json(paper_shaped_self_sattestation()))
    wire["sattestation"]["sattestees"][0]["domain"] = "someone-else.example"
    structural.write_text(json.dumps(wire))

    stale_file = bank_files["header"]

    empty_cert = tmp_path / "empty.pem"
    empty_cert.write_bytes(b"")

    empty_creds_dir = tmp_path / "empty-creds"
    empty_creds_dir.mkdir()

    unknown_host_fixture = tmp_path / "unknown.json"
    unknown_host_fixture.write_text(
        json.dumps(
            {
                "name": "unknown-host",
                "sites": {},
                "browsers": {"legacy": {}},
                "steps": [{"url": "https://missing.example/", "now": "2020-09-01"}],
            }
        )
    )

    bad_alo = "a" * 55 + "1"
    cases = [
        ("BadLength", ["onion", "parse", "abc"]),
        ("BadAlphabet", ["onion", "parse", bad_alo]),
        ("BadChecksum", ["onion", "parse", "a" * 56]),
        ("NotASata", ["sata", "parse", "https://example.com/"]),
        (
            "InvalidOnionComponent",
            ["sata", "parse", "https://x.example/?onion=" + "a" * 56],
        ),
        ("NotSecureDropName", ["sata", "rewrite", "www.cbc.ca"]),
        ("UnrepresentableField", ["satt", "verify", "--file", str(bad_json_file)]),
        ("MalformedSignature", ["satt", "verify", "--file", str(truncated_sig)]),
        ("BadSignature", ["satt", "verify", "--file", str(tampered)]),
        ("StructuralViolation", ["satt", "verify", "--file", str(structural)]),
        (
            "KeyMismatch",
            ["satt", "issue", "--key", str(wrong_key_file), "--body", str(body_file)],
        ),
        (
            "NoFingerprints",
            [
                "satt", "self", "--key", str(bank_files["key"]),
                "--domain", "bank.example",
                "--issued", "2020-08-25", "--refreshed", "2020-08-31",
            ],
        ),
        (
            "TooLarge",
            [
                "satt", "self", "--key", str(bank_files["key"]),
                "--domain", "bank.example",
                "--issued", "2020-08-25", "--refreshed", "2020-08-31",
            ]
            + [arg for i in range(40) for arg in ("--fingerprint", f"{i:02X}" * 32)],
        ),
        (
            "Stale",
            ["satt", "fresh", "--file", str(stale_file), "--now", "2020-12-01"],
        ),
        (
            "EmptyInput",
            [
                "verify", "--url", bank_files["url"],
                "--cert", str(empty_cert),
                "--header", str(bank_files["header"]),
                "--now", "2020-09-01",
            ],
        ),
        (
            "DomainMismatch",
            [
                "rotate", "check",
                "--old", "https://a.example/?onion=" + key_for("a").address.label,
                "--new", "https://b.example/?onion=" + key_for("b").address.label,
                "--creds", str(empty_creds_dir),
                "--now", "2020-09-01",
            ],
        ),
        (
            "UnknownHost",
            ["sim", "run", "--fixture", str(unknown_host_fixture), "--browser", "legacy"],
        ),
    ]
    for expected_class, argv in cases:
        code = main(["--json"] + argv)
        captured = capsys.readouterr()
        assert code == EXIT_DATA, f"{expected_class}: expected 65, got {code}"
        payload = json.loads(captured.out)
        assert payload["error"]["class"] == expected_class, (
            f"expected {expected_class}, got {payload['error']}"
        )


def test_bad_version_reachable(capsys):
    import base64
    import hashlib

    pubkey = bytes(range(32))
    checksum = hashlib.sha3_256(b".onion checksum" + pubkey + b"\x02").digest()[:2]
    label = base64.b32encode(pubkey + checksum + b"\x02").decode().lower()
    code, out, _ = run(capsys, "--json", "onion", "parse", label)
    assert code == EXIT_DATA
    assert json.loads(out)["error"]["class"] == "BadVersion"
