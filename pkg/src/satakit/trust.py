"""Contextual trust evaluation over sets of sattestations.

A client trusts a (subject, label) binding when a chain of credentials
connects one of its configured trust roots to the subject:

* the first link is issued by a root and carries a label that root is
  trusted for;
* every non-terminal link carries a delegation label ``sattestor(X)``,
  which grants the SATA it binds the authority to sattest label ``X``
  (and to pass that same authority along) at the next hop;
* the terminal link binds the subject with the queried label.

Chains are bounded by the policy's ``max_chain_depth``; the shortest valid
chain wins, with ties broken lexicographically by sattestor domain so
evaluation is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Iterable, Optional

from .credential import (
    Sattestation,
    canonical_bytes,
    check_freshness,
    make_self_sattestation,
    verify_credential,
)
from .errors import DomainMismatch, KeyMismatch, Stale
from .onion import KeyPair, parse_onion
from .sata import Sata, to_subdomain_form

DELEGATION_PREFIX = "sattestor("
DELEGATION_SUFFIX = ")"


def delegation_label(scope: str) -> str:
    """Label delegating authority over ``scope`` to the bound SATA."""
    return f"{DELEGATION_PREFIX}{scope}{DELEGATION_SUFFIX}"


def delegation_scope(label: str) -> Optional[str]:
    """The scope inside a ``sattestor(...)`` label, or None for plain labels."""
    if (
        label.startswith(DELEGATION_PREFIX)
        and label.endswith(DELEGATION_SUFFIX)
        and len(label) > len(DELEGATION_PREFIX) + len(DELEGATION_SUFFIX)
    ):
        return label[len(DELEGATION_PREFIX) : -len(DELEGATION_SUFFIX)]
    return None


def rotation_pointer_label(new: Sata) -> str:
    """The single label an expired address keeps: ``sattestor({<new>})``."""
    return delegation_label("{" + to_subdomain_form(new) + "}")


@dataclass(frozen=True)
class TrustRoot:
    sattestor: Sata
    trusted_labels: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "trusted_labels", frozenset(self.trusted_labels))


@dataclass(frozen=True)
class TrustPolicy:
    roots: tuple[TrustRoot, ...]
    max_chain_depth: int = 3
    require_sattestation_for: frozenset[str] = frozenset()
    allow_credentialed_alt_services: bool = True

    def __post_init__(self) -> None:
        if self.max_chain_depth < 1:
            raise ValueError("max_chain_depth must be at least 1")
        object.__setattr__(self, "roots", tuple(self.roots))
        object.__setattr__(
            self, "require_sattestation_for", frozenset(self.require_sattestation_for)
        )


@dataclass(frozen=True)
class ChainLink:
    credential: Sattestation
    binding_index: int
    label: str  # the label relied upon at this hop


@dataclass(frozen=True)
class TrustChain:
    links: tuple[ChainLink, ...]
    subject: Sata
    label: str


@dataclass(frozen=True)
class RotationResult:
    """Outcome of a key-rotation check; ``missing`` names absent directions."""

    ok: bool
    missing: tuple[str, ...] = ()


def _identity(s: Sata) -> tuple[str, str]:
    return (s.domain, s.onion.label)


def usable_links(
    credentials: Iterable[Sattestation], now: date
) -> list[tuple[Sattestation, int]]:
    """(credential, binding_index) pairs that verify and are fresh at ``now``.

    Unverifiable credentials are excluded, not fatal: an attacker must not
    be able to poison evaluation by publishing junk.
    """
    ordered = sorted(
        credentials,
        key=lambda c: (c.sattestor_domain, c.sattestor_onion.label, canonical_bytes(c)),
    )
    out: list[tuple[Sattestation, int]] = []
    for cred in ordered:
        try:
            verify_credential(cred)
        except Exception:
            continue
        for idx in range(len(cred.sattestees)):
            try:
                check_freshness(cred, idx, now)
            except Stale:
                continue
            out.append((cred, idx))
    return out


def evaluate(
    policy: TrustPolicy,
    credentials: Iterable[Sattestation],
    subject: Sata,
    label: str,
    now: date,
) -> Optional[TrustChain]:
    """Shortest trust chain from a policy root to (subject, label), or None.

    Delegation semantics: a binding labeled ``sattestor(X)`` authorizes the
    bound SATA to issue label ``X`` at the next hop, or to delegate ``X``
    further (still as ``sattestor(X)``) within the depth budget.
    """
    links = usable_links(credentials, now)
    by_issuer: dict[tuple[str, str], list[tuple[Sattestation, int]]] = {}
    for cred, idx in links:
        by_issuer.setdefault(_identity_of_credential(cred), []).append((cred, idx))

    # merge roots sharing an identity so their label sets union
    allowed_at_root: dict[tuple[str, str], set[str]] = {}
    for root in policy.roots:
        allowed_at_root.setdefault(_identity(root.sattestor), set()).update(
            root.trusted_labels
        )

    # frontier entries: (sort_key, chain links, issuer identity, allowed labels)
    frontier: list[tuple[tuple, tuple[ChainLink, ...], tuple[str, str], frozenset[str]]] = [
        ((), (), ident, frozenset(allowed))
        for ident, allowed in sorted(allowed_at_root.items())
    ]
    for _depth in range(policy.max_chain_depth):
        complete: list[tuple[tuple, tuple[ChainLink, ...]]] = []
        next_frontier: list[
            tuple[tuple, tuple[ChainLink, ...], tuple[str, str], frozenset[str]]
        ] = []
        for key, chain, issuer, allowed in frontier:
            for cred, idx in by_issuer.get(issuer, ()):
                binding = cred.sattestees[idx]
                for lab in binding.labels:
                    if lab not in allowed:
                        continue
                    step_key = key + (
                        (cred.sattestor_domain, cred.sattestor_onion.label, idx, lab),
                    )
                    link = ChainLink(cred, idx, lab)
                    if lab == label and binding.binds(subject.domain, subject.onion):
                        complete.append((step_key, chain + (link,)))
                    scope = delegation_scope(lab)
                    if scope is not None:
                        next_allowed = frozenset({scope, delegation_label(scope)})
                        next_issuer = (binding.domain, binding.onion.label)
                        next_frontier.append(
                            (step_key, chain + (link,), next_issuer, next_allowed)
                        )
        if complete:
            _, best = min(complete, key=lambda item: item[0])
            return TrustChain(links=best, subject=subject, label=label)
        frontier = next_frontier
    return None


def _identity_of_credential(cred: Sattestation) -> tuple[str, str]:
    return (cred.sattestor_domain, cred.sattestor_onion.label)


def _attests(
    links: list[tuple[Sattestation, int]], issuer: Sata, target: Sata
) -> bool:
    for cred, idx in links:
        if _identity_of_credential(cred) != _identity(issuer):
            continue
        if cred.sattestees[idx].binds(target.domain, target.onion):
            return True
    return False


def rotation_check(
    old: Sata, new: Sata, credentials: Iterable[Sattestation], now: date
) -> RotationResult:
    """Verify a self-authentication key rotation.

    Both directions are required: the old address must sattest the new one
    AND the new address must sattest the old one.  The new-to-old direction
    defeats framing, where a third party claims to be the successor of an
    address it never controlled.
    """
    if old.domain != new.domain:
        raise DomainMismatch(
            f"rotation keeps the domain: {old.domain!r} != {new.domain!r}"
        )
    links = usable_links(credentials, now)
    missing = []
    if not _attests(links, old, new):
        missing.append("old-to-new")
    if not _attests(links, new, old):
        missing.append("new-to-old")
    return RotationResult(ok=not missing, missing=tuple(missing))


def expired_rotation_form(
    old: Sata,
    new: Sata,
    key: KeyPair,
    cert_fingerprints: Iterable[str],
    issued: date,
    refreshed_on: date,
    refresh_rate_days: float,
) -> Sattestation:
    """Self-sattestation an expired address keeps for dated clients.

    Its only label is the rotation pointer ``sattestor({<new address>})``,
    so it supports redirect validation and nothing else: evaluation will
    never treat it as granting any ordinary label.
    """
    if key.public != old.onion.pubkey:
        raise KeyMismatch("key does not match the old address being retired")
    return make_self_sattestation(
        key=key,
        domain=old.domain,
        cert_fingerprints=cert_fingerprints,
        issued=issued,
        refreshed_on=refreshed_on,
        refresh_rate_days=refresh_rate_days,
        labels=[rotation_pointer_label(new)],
    )


def policy_from_json(obj: dict) -> TrustPolicy:
    """Build a policy from its JSON file form.

    Roots are given as ``{"sattestor_domain": ..., "sattestor_onion":
    "<56-char label>", "trusted_labels": [...]}``.
    """
    roots = tuple(
        TrustRoot(
            sattestor=Sata(
                domain=r["sattestor_domain"], onion=parse_onion(r["sattestor_onion"])
            ),
            trusted_labels=frozenset(r.get("trusted_labels", [])),
        )
        for r in obj.get("roots", [])
    )
    return TrustPolicy(
        roots=roots,
        max_chain_depth=obj.get("max_chain_depth", 3),
        require_sattestation_for=frozenset(obj.get("require_sattestation_for", [])),
        allow_credentialed_alt_services=obj.get("allow_credentialed_alt_services", True),
    )


def evaluate_trust_propagation_after_rotation(
    policy: TrustPolicy,
    credentials: Iterable[Sattestation],
    old: Sata,
    new: Sata,
    label: str,
    now: date,
) -> Optional[TrustChain]:
    """Trust for the post-rotation address; old trust never carries over.

    This is exactly ``evaluate`` applied to ``new``: third-party
    sattestations naming ``old`` cannot satisfy a query about ``new``
    because bindings match on the full (domain, onion) pair.  ``old`` is
    accepted as an argument to make that contract explicit; it is
    deliberately not consulted.
    """
    del old
    return evaluate(policy, credentials, new, label, now)
