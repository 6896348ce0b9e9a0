"""Browser-side SATA connection validation.

Pure functions; every check takes the evaluation date explicitly so runs
are deterministic.  All failures are returned as :class:`Verdict` values
rather than raised, and each check is evaluated in a fixed order so the
first failing check determines the verdict.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import TYPE_CHECKING, Union

from .credential import (
    Sattestation,
    check_freshness,
    is_self_sattestation,
    verify_credential,
)
from .errors import (
    BadSignature,
    EmptyInput,
    InvalidOnionComponent,
    NotASata,
    Stale,
    StructuralViolation,
)
from .sata import Sata, expected_sans, normalize_domain, parse_sata
from .onion import OnionAddress, parse_onion

if TYPE_CHECKING:  # pragma: no cover
    from .trust import TrustPolicy


class VerdictOutcome(Enum):
    ACCEPT = "accept"
    REJECT_SIGNATURE = "reject-signature"
    REJECT_STALE = "reject-stale"
    REJECT_FINGERPRINT = "reject-fingerprint"
    REJECT_SAN_MISSING = "reject-san-missing"
    REJECT_NOT_SATA = "reject-not-sata"


@dataclass(frozen=True)
class Verdict:
    outcome: VerdictOutcome
    detail: str

    def accepted(self) -> bool:
        return self.outcome is VerdictOutcome.ACCEPT


class AltSvcDecision(Enum):
    ALLOW = "allow"
    BLOCK = "block"


@dataclass(frozen=True)
class CertDescriptor:
    """Abstract view of a TLS certificate, enough for SATA validation.

    ``fingerprint`` is the uppercase SHA-256 hex of the DER bytes; when
    ``der`` is provided the two must agree (enforced by fixtures, not
    here, since descriptors are often built without the full DER).
    ``has_sct`` only records whether a CT signed-certificate-timestamp was
    promised; nothing here verifies SCTs.
    """

    fingerprint: str
    san_list: tuple[str, ...]
    not_before: date
    not_after: date
    has_sct: bool = False
    der: bytes | None = None

    def __post_init__(self) -> None:
        fp = self.fingerprint.upper()
        if len(fp) != 64 or any(c not in "0123456789ABCDEF" for c in fp):
            raise ValueError(f"fingerprint must be 64 hex chars, got {self.fingerprint!r}")
        object.__setattr__(self, "fingerprint", fp)
        object.__setattr__(self, "san_list", tuple(n.lower() for n in self.san_list))


def fingerprint_cert(der: bytes) -> str:
    """SHA-256 of the certificate bytes, uppercase hex."""
    if not der:
        raise EmptyInput("cannot fingerprint an empty certificate")
    return hashlib.sha256(der).hexdigest().upper()


def _sans_cover(s: Sata, san_list: tuple[str, ...]) -> str | None:
    """None when the SAN requirement holds, else a description of the gap.

    The certificate must name the base domain plus either the
    subdomain-form FQDN or the bare .onion name.
    """
    sub_name, base_domain, onion_name = expected_sans(s)
    names = set(san_list)
    if base_domain not in names:
        return f"certificate SANs lack the base domain {base_domain!r}"
    if sub_name not in names and onion_name not in names:
        return (
            f"certificate SANs carry neither {sub_name!r} nor {onion_name!r}"
        )
    return None


def validate_connection(
    s: Sata,
    cert: CertDescriptor,
    header: Sattestation | None,
    now: date,
) -> Verdict:
    """Validate a completed connection to a SATA.

    Checks, in fixed order: (0) the SATA appears in the certificate SAN
    list, (1) the header is a self-sattestation for this SATA with a valid
    signature under the public key embedded in the address, (2) the
    credential is fresh at ``now``, (3) one of the credential's cert
    fingerprints matches the served certificate.  The certificate's own
    validity window is checked last (chain building and SCT verification
    are out of scope; SCT presence is only echoed in the detail).
    """
    gap = _sans_cover(s, cert.san_list)
    if gap is not None:
        return Verdict(VerdictOutcome.REJECT_SAN_MISSING, gap)

    if header is None:
        return Verdict(VerdictOutcome.REJECT_SIGNATURE, "no SATA header presented")
    try:
        verify_credential(header)
    except (BadSignature, StructuralViolation) as exc:
        return Verdict(VerdictOutcome.REJECT_SIGNATURE, str(exc))
    if not is_self_sattestation(header):
        return Verdict(
            VerdictOutcome.REJECT_SIGNATURE, "header is not a self-sattestation"
        )
    if (
        header.sattestor_domain != s.domain
        or header.sattestor_onion.label != s.onion.label
    ):
        return Verdict(
            VerdictOutcome.REJECT_SIGNATURE,
            "header signature data is not bound to this SATA "
            f"(signed for {header.sattestor_domain!r})",
        )

    try:
        check_freshness(header, 0, now)
    except Stale as exc:
        return Verdict(VerdictOutcome.REJECT_STALE, str(exc))

    binding = header.sattestees[0]
    if cert.fingerprint not in binding.cert_fingerprints:
        return Verdict(
            VerdictOutcome.REJECT_FINGERPRINT,
            f"served certificate {cert.fingerprint[:12]}... not among the "
            f"{len(binding.cert_fingerprints)} signed fingerprint(s)",
        )

    if not (cert.not_before <= now <= cert.not_after):
        return Verdict(
            VerdictOutcome.REJECT_STALE,
            f"certificate outside its validity window at {now.isoformat()}",
        )

    sct = "present" if cert.has_sct else "absent"
    return Verdict(VerdictOutcome.ACCEPT, f"all checks passed (sct {sct})")


def validate_onion_location(
    origin: Union[Sata, str],
    redirect_target: str,
    origin_cert: CertDescriptor,
) -> Verdict:
    """Validate an onion-location redirect target.

    Accepted only when the target is a SATA for the origin's own
    registered domain whose expected SANs are already covered by the
    origin certificate, so the redirected connection can reuse the same
    HTTPS certificate.  Bare .onion targets and foreign-domain SATAs are
    rejected.
    """
    origin_domain = origin.domain if isinstance(origin, Sata) else normalize_domain(origin)
    try:
        target = parse_sata(redirect_target)
    except NotASata:
        return Verdict(
            VerdictOutcome.REJECT_NOT_SATA,
            f"redirect target {redirect_target!r} is not a SATA",
        )
    except InvalidOnionComponent as exc:
        return Verdict(
            VerdictOutcome.REJECT_NOT_SATA,
            f"redirect target onion component invalid: {exc}",
        )
    if target.domain != origin_domain:
        return Verdict(
            VerdictOutcome.REJECT_NOT_SATA,
            f"redirect target is a SATA for {target.domain!r}, "
            f"not the origin {origin_domain!r}",
        )
    gap = _sans_cover(target, origin_cert.san_list)
    if gap is not None:
        return Verdict(VerdictOutcome.REJECT_SAN_MISSING, gap)
    return Verdict(VerdictOutcome.ACCEPT, "redirect stays on the origin certificate")


def validate_alt_svc(
    origin: Union[Sata, str],
    alt_host: str,
    self_satt: Sattestation | None,
    policy: "TrustPolicy | None" = None,
    *,
    now: date,
) -> AltSvcDecision:
    """Decide whether an advertised alternative service may be used.

    Allowed only when a valid, fresh self-sattestation binds the origin's
    registered domain to the alternative onion address and the policy does
    not forbid credentialed alternative services.  Everything else blocks:
    the default posture is fail closed.
    """
    if policy is not None and not getattr(policy, "allow_credentialed_alt_services", True):
        return AltSvcDecision.BLOCK
    origin_domain = origin.domain if isinstance(origin, Sata) else normalize_domain(origin)
    host = alt_host.strip().lower()
    if not host.endswith(".onion"):
        return AltSvcDecision.BLOCK
    try:
        alt_onion: OnionAddress = parse_onion(host)
    except Exception:
        return AltSvcDecision.BLOCK
    if self_satt is None:
        return AltSvcDecision.BLOCK
    try:
        verify_credential(self_satt)
        check_freshness(self_satt, 0, now)
    except Exception:
        return AltSvcDecision.BLOCK
    if not is_self_sattestation(self_satt):
        return AltSvcDecision.BLOCK
    binding = self_satt.sattestees[0]
    if not binding.binds(origin_domain, alt_onion):
        return AltSvcDecision.BLOCK
    return AltSvcDecision.ALLOW
