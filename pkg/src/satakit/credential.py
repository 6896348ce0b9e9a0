"""Sattestation credentials: canonical serialization, issuance, verification.

A sattestation is a signed assertion by a *sattestor* (itself identified
by a SATA) binding one or more (domain, onion) pairs, optionally with
contextual labels, and, for self-sattestations only, the fingerprints of
the domain's TLS certificates.

Canonical wire form is compact JSON with a fixed key order::

    {"sattestation":{
        "sattestation_version":1,
        "sattestor_domain":"sattestora.info",
        "sattestor_onion":"<56-char label>",
        "sattestor_refresh_rate":"7 days",
        "sattestees":[
            {"domain":"domain1.info","onion":"<label>","labels":"news",
             "issued":"2020-06-01","refreshed_on":"2020-08-25"}]}}

The ed25519 signature is computed over exactly those bytes; transport form
appends a top-level ``signature`` field holding the signature as lowercase
hex.  Self-sattestations carry a ``cert_fingerprint`` list after ``labels``.
Labels travel as a single comma-separated string, which is why individual
labels may not contain commas.  There is deliberately no revocation field
anywhere: credentials are short-lived and simply re-issued.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from datetime import date, datetime
from typing import Iterable

from .errors import (
    BadSignature,
    KeyMismatch,
    MalformedSignature,
    NoFingerprints,
    Stale,
    StructuralViolation,
    TooLarge,
    UnrepresentableField,
)
from .onion import KeyPair, OnionAddress, parse_onion, sign, verify
from .sata import normalize_domain

CREDENTIAL_VERSION = 1
SATA_HEADER_NAME = "x-sata"
WELL_KNOWN_SATTESTATION_PATH = "/.well-known/sattestation"
SATT_FILE_EXTENSION = ".satt"
MAX_SELF_SATTESTATION_BYTES = 800

_RATE_RE = re.compile(r"^(\d+(?:\.\d+)?) days$")
_FINGERPRINT_RE = re.compile(r"^[0-9A-F]+$")


def format_refresh_rate(days: float) -> str:
    """Wire form of a refresh rate, e.g. ``"7 days"`` or ``"3.5 days"``."""
    if not isinstance(days, (int, float)) or isinstance(days, bool):
        raise UnrepresentableField(f"refresh rate must be a number of days, got {days!r}")
    if days <= 0 or days != days or days in (float("inf"),):
        raise UnrepresentableField(f"refresh rate must be positive and finite: {days!r}")
    if float(days).is_integer():
        return f"{int(days)} days"
    return f"{float(days)} days"


def parse_refresh_rate(text: str) -> float:
    m = _RATE_RE.match(text)
    if not m:
        raise UnrepresentableField(f"refresh rate not in '<number> days' form: {text!r}")
    return float(m.group(1))


def _require_date(value, field: str) -> date:
    # datetime is a date subclass but would serialize with a time part
    if not isinstance(value, date) or isinstance(value, datetime):
        raise UnrepresentableField(f"{field} must be a calendar date, got {value!r}")
    return value


@dataclass(frozen=True)
class Binding:
    """One sattestee entry: a (domain, onion) pair with its dates.

    ``cert_fingerprints`` may only be set when the enclosing credential is
    a self-sattestation.  ``onion_reachable`` is an optional hint that the
    service is reachable over onion transport; it is omitted from the
    canonical bytes when absent.
    """

    domain: str
    onion: OnionAddress
    issued: date
    refreshed_on: date
    labels: tuple[str, ...] = ()
    cert_fingerprints: tuple[str, ...] = ()
    onion_reachable: bool | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "domain", normalize_domain(self.domain))
        _require_date(self.issued, "issued")
        _require_date(self.refreshed_on, "refreshed_on")
        if self.refreshed_on < self.issued:
            raise StructuralViolation(
                f"refreshed_on {self.refreshed_on} precedes issued {self.issued}"
            )
        for label in self.labels:
            if not label or "," in label:
                raise StructuralViolation(
                    f"label {label!r} must be nonempty and comma-free"
                )
        normalized = tuple(fp.upper() for fp in self.cert_fingerprints)
        for fp in normalized:
            if not _FINGERPRINT_RE.match(fp):
                raise StructuralViolation(f"certificate fingerprint {fp!r} is not hex")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "cert_fingerprints", normalized)

    def binds(self, domain: str, onion: OnionAddress) -> bool:
        return self.domain == domain.lower() and self.onion.label == onion.label


@dataclass(frozen=True)
class SattestationBody:
    """Everything the sattestor signs; a Sattestation is body + signature."""

    sattestor_domain: str
    sattestor_onion: OnionAddress
    refresh_rate_days: float
    sattestees: tuple[Binding, ...]
    version: int = CREDENTIAL_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "sattestor_domain", normalize_domain(self.sattestor_domain))
        object.__setattr__(self, "sattestees", tuple(self.sattestees))
        if not self.sattestees:
            raise StructuralViolation("credential must carry at least one binding")


@dataclass(frozen=True)
class Sattestation:
    body: SattestationBody
    signature: bytes

    def __post_init__(self) -> None:
        if len(self.signature) != 64:
            raise MalformedSignature(
                f"signature must be 64 bytes, got {len(self.signature)}"
            )

    # flat accessors so callers need not reach through .body
    @property
    def version(self) -> int:
        return self.body.version

    @property
    def sattestor_domain(self) -> str:
        return self.body.sattestor_domain

    @property
    def sattestor_onion(self) -> OnionAddress:
        return self.body.sattestor_onion

    @property
    def refresh_rate_days(self) -> float:
        return self.body.refresh_rate_days

    @property
    def sattestees(self) -> tuple[Binding, ...]:
        return self.body.sattestees


def is_self_sattestation(body: SattestationBody | Sattestation) -> bool:
    """A credential about the sattestor itself: exactly one binding whose
    (domain, onion) equals the sattestor's own pair."""
    if isinstance(body, Sattestation):
        body = body.body
    if len(body.sattestees) != 1:
        return False
    only = body.sattestees[0]
    return only.binds(body.sattestor_domain, body.sattestor_onion)


def _binding_wire(b: Binding) -> dict:
    out: dict = {"domain": b.domain, "onion": b.onion.label}
    if b.labels:
        out["labels"] = ",".join(b.labels)
    if b.cert_fingerprints:
        out["cert_fingerprint"] = list(b.cert_fingerprints)
    out["issued"] = _require_date(b.issued, "issued").isoformat()
    out["refreshed_on"] = _require_date(b.refreshed_on, "refreshed_on").isoformat()
    if b.onion_reachable is not None:
        out["onion_reachable"] = b.onion_reachable
    return out


def _body_wire(body: SattestationBody) -> dict:
    return {
        "sattestation": {
            "sattestation_version": body.version,
            "sattestor_domain": body.sattestor_domain,
            "sattestor_onion": body.sattestor_onion.label,
            "sattestor_refresh_rate": format_refresh_rate(body.refresh_rate_days),
            "sattestees": [_binding_wire(b) for b in body.sattestees],
        }
    }


def canonical_bytes(body: SattestationBody | Sattestation) -> bytes:
    """Deterministic byte sequence the signature covers.

    Compact JSON, fixed key order, dates as YYYY-MM-DD, onion addresses as
    bare 56-char labels, UTF-8.  Structurally equal bodies always produce
    identical bytes; binding order is significant.
    """
    if isinstance(body, Sattestation):
        body = body.body
    wire = _body_wire(body)
    return json.dumps(wire, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def issue(sattestor_key: KeyPair, body: SattestationBody) -> Sattestation:
    """Sign a credential body with the sattestor's onion key."""
    if sattestor_key.public != body.sattestor_onion.pubkey:
        raise KeyMismatch("signing key does not match the sattestor onion address")
    signature = sign(sattestor_key.secret, canonical_bytes(body))
    return Sattestation(body=body, signature=signature)


def verify_credential(s: Sattestation) -> None:
    """Check structural invariants, then the signature over canonical bytes.

    Raises :class:`StructuralViolation` naming the failed invariant, or
    :class:`BadSignature`; returns None when the credential is sound.
    """
    if s.version != CREDENTIAL_VERSION:
        raise StructuralViolation(f"unsupported credential version {s.version}")
    self_satt = is_self_sattestation(s)
    for i, b in enumerate(s.sattestees):
        if b.cert_fingerprints and not self_satt:
            raise StructuralViolation(
                f"binding {i} carries cert fingerprints but the credential "
                "is not a self-sattestation"
            )
    if self_satt and not s.sattestees[0].cert_fingerprints:
        raise StructuralViolation("self-sattestation must bind at least one certificate")
    if not verify(s.sattestor_onion.pubkey, canonical_bytes(s), s.signature):
        raise BadSignature("signature does not verify under the sattestor onion key")


def make_self_sattestation(
    key: KeyPair,
    domain: str,
    cert_fingerprints: Iterable[str],
    issued: date,
    refreshed_on: date,
    refresh_rate_days: float,
    labels: Iterable[str] | None = None,
    onion_reachable: bool | None = None,
) -> Sattestation:
    """Build and sign a self-sattestation for ``domain`` under ``key``.

    The onion identity is derived from the key.  Transport encoding must
    stay under :data:`MAX_SELF_SATTESTATION_BYTES` (headers travel
    uncompressed); exceeding it raises :class:`TooLarge`.
    """
    fingerprints = tuple(cert_fingerprints)
    if not fingerprints:
        raise NoFingerprints("a self-sattestation needs at least one cert fingerprint")
    onion = key.address
    binding = Binding(
        domain=domain,
        onion=onion,
        issued=issued,
        refreshed_on=refreshed_on,
        labels=tuple(labels or ()),
        cert_fingerprints=fingerprints,
        onion_reachable=onion_reachable,
    )
    body = SattestationBody(
        sattestor_domain=domain,
        sattestor_onion=onion,
        refresh_rate_days=refresh_rate_days,
        sattestees=(binding,),
    )
    credential = issue(key, body)
    size = len(to_transport_json(credential).encode("utf-8"))
    if size >= MAX_SELF_SATTESTATION_BYTES:
        raise TooLarge(
            f"transport encoding is {size} bytes, bound is "
            f"{MAX_SELF_SATTESTATION_BYTES}",
            size,
        )
    return credential


def check_freshness(s: Sattestation, binding_index: int, now: date) -> None:
    """Freshness rule: |now - reference| must be strictly less than the rate.

    The reference date is the binding's ``refreshed_on`` (which equals
    ``issued`` when never refreshed).  Raises :class:`Stale` with the
    margin by which the strict bound was missed.
    """
    if not 0 <= binding_index < len(s.sattestees):
        raise IndexError(f"binding index {binding_index} out of range")
    b = s.sattestees[binding_index]
    reference = b.refreshed_on
    age = abs((now - reference).days)
    if age >= s.refresh_rate_days:
        raise Stale(
            f"binding {binding_index} is {age} days old, refresh rate is "
            f"{format_refresh_rate(s.refresh_rate_days)} (strict bound)",
            margin_days=age - s.refresh_rate_days,
        )


def fresh_binding_indexes(s: Sattestation, now: date) -> list[int]:
    """Indexes of bindings that pass the freshness rule at ``now``."""
    out = []
    for i in range(len(s.sattestees)):
        try:
            check_freshness(s, i, now)
        except Stale:
            continue
        out.append(i)
    return out


def to_transport_json(s: Sattestation) -> str:
    """Single-line transport form: canonical body plus the signature field."""
    wire = _body_wire(s.body)
    wire["signature"] = s.signature.hex()
    return json.dumps(wire, separators=(",", ":"), ensure_ascii=False)


def _parse_binding(obj: dict) -> Binding:
    if not isinstance(obj, dict):
        raise UnrepresentableField(f"binding must be an object, got {type(obj).__name__}")
    try:
        domain = obj["domain"]
        onion_label = obj["onion"]
        issued_text = obj["issued"]
        refreshed_text = obj["refreshed_on"]
    except KeyError as exc:
        raise UnrepresentableField(f"binding is missing field {exc.args[0]!r}") from exc
    labels_field = obj.get("labels", "")
    if not isinstance(labels_field, str):
        raise UnrepresentableField("labels must be a comma-separated string")
    labels = tuple(part for part in labels_field.split(",") if part) if labels_field else ()
    fingerprints = obj.get("cert_fingerprint", [])
    if isinstance(fingerprints, str):
        fingerprints = [fingerprints]
    try:
        issued = date.fromisoformat(issued_text)
        refreshed_on = date.fromisoformat(refreshed_text)
    except (TypeError, ValueError) as exc:
        raise UnrepresentableField(f"bad date in binding: {exc}") from exc
    return Binding(
        domain=domain,
        onion=parse_onion(onion_label),
        issued=issued,
        refreshed_on=refreshed_on,
        labels=labels,
        cert_fingerprints=tuple(fingerprints),
        onion_reachable=obj.get("onion_reachable"),
    )


def body_from_wire(obj: dict) -> SattestationBody:
    """Reconstruct a body from parsed wire JSON (the inner object included)."""
    try:
        inner = obj["sattestation"]
        version = inner["sattestation_version"]
        sattestor_domain = inner["sattestor_domain"]
        sattestor_onion = inner["sattestor_onion"]
        rate = inner["sattestor_refresh_rate"]
        sattestees = inner["sattestees"]
    except (KeyError, TypeError) as exc:
        raise UnrepresentableField(f"credential missing field: {exc}") from exc
    if not isinstance(sattestees, list):
        raise UnrepresentableField("sattestees must be a list")
    return SattestationBody(
        sattestor_domain=sattestor_domain,
        sattestor_onion=parse_onion(sattestor_onion),
        refresh_rate_days=parse_refresh_rate(rate),
        sattestees=tuple(_parse_binding(b) for b in sattestees),
        version=version,
    )


def from_transport_json(text: str | bytes) -> Sattestation:
    """Parse the transport form back into a credential.

    Signature verification is not performed here; call
    :func:`verify_credential` after parsing.  Onion labels are fully
    validated during parsing (fail closed).
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnrepresentableField(f"credential is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise UnrepresentableField("credential must be a JSON object")
    body = body_from_wire(obj)
    sig_hex = obj.get("signature")
    if not isinstance(sig_hex, str):
        raise MalformedSignature("missing or non-string signature field")
    try:
        signature = bytes.fromhex(sig_hex)
    except ValueError as exc:
        raise MalformedSignature(f"signature is not hex: {exc}") from exc
    return Sattestation(body=body, signature=signature)


def with_sattestees(s: Sattestation, sattestees: tuple[Binding, ...]) -> SattestationBody:
    """Body identical to ``s`` except for its binding list (for re-issuing)."""
    return replace(s.body, sattestees=sattestees)
