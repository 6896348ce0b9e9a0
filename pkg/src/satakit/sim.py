"""Deterministic, network-free simulator of onion-discovery attacks.

A :class:`World` holds the sites reachable at each hostname (with whoever
actually serves them recorded as an opaque ``endpoint_id``), the
attacker's capabilities, the installed rewrite ruleset, the pool of
published sattestations, and the browser configuration.  ``run_visit``
replays one address-bar navigation against that world and reports where
the browser ended up, which verdicts fired, and whether the user saw an
alert.  There is no wall clock and no network: identical inputs always
produce identical outcomes.

Endpoint ids starting with ``attacker`` are attacker-controlled; an
attack counts as succeeding only when the browser lands on one of those
*without* a user-visible alert.

Fixture files are JSON::

    {
      "name": "...",
      "keys": {"victim": "<64 hex chars>", ...},          # ed25519 seeds
      "attacker": {"rogue_cert_for": [...], "dns_hijack": [...],
                   "ruleset_control": false, "onion_keys": ["{onion:attacker}"],
                   "compromised_victim_onion_key": false},
      "he_rules": {"typed.name": "{onion:attacker}"},      # installed ruleset
      "certs": {"victim-cert": {"sans": ["{sata_sans:victim.example:victim}"],
                                 "not_before": "...", "not_after": "...",
                                 "has_sct": true}},
      "credentials": {"victim-self": {"kind": "self", ...},
                       "root-about-victim": {"kind": "third_party", ...}},
      "sites": {"victim.example": {"endpoint": "origin-victim",
                                    "cert": "victim-cert",
                                    "alt_svc": {"host": "...", "max_age": 86400},
                                    "onion_location": "...",
                                    "sata_header": "victim-self"}},
      "browsers": {"legacy": {...}, "sata-aware": {...}, "sata-policy": {...}},
      "steps": [{"url": "...", "now": "YYYY-MM-DD", "sites": {...patch...}}]
    }

``{onion:NAME}`` anywhere in a string substitutes the onion label of the
named key; cert DER bytes are derived from the cert's name so fingerprints
in credentials and descriptors always agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import parse_qsl, urlsplit

from .credential import (
    Sattestation,
    is_self_sattestation,
    make_self_sattestation,
    issue,
    Binding,
    SattestationBody,
)
from .errors import InvalidOnionComponent, NotASata, UnknownHost
from .onion import KeyPair, keygen
from .sata import SECUREDROP_SUFFIX, Sata, expected_sans, parse_sata, securedrop_rewrite
from .trust import TrustPolicy, TrustRoot, evaluate
from .validation import (
    AltSvcDecision,
    CertDescriptor,
    Verdict,
    VerdictOutcome,
    fingerprint_cert,
    validate_alt_svc,
    validate_connection,
    validate_onion_location,
)

ATTACKER_ENDPOINT_PREFIX = "attacker"
DEFAULT_ALT_SVC_MAX_AGE = 86400  # seconds


def is_attacker_endpoint(endpoint_id: str) -> bool:
    return endpoint_id.startswith(ATTACKER_ENDPOINT_PREFIX)


@dataclass(frozen=True)
class AltSvcHeader:
    """Advertised alternative service; ``max_age`` seconds until expiry.

    ``host`` may be a per-user mapping in tracking fixtures; it must be
    resolved to a single hostname before a visit runs.
    """

    host: str | Mapping[str, str]
    max_age: int = DEFAULT_ALT_SVC_MAX_AGE


@dataclass(frozen=True)
class SiteHeaders:
    onion_location: str | None = None
    alt_svc: AltSvcHeader | None = None
    sata_header: Sattestation | None = None


@dataclass(frozen=True)
class SiteRecord:
    endpoint_id: str
    cert: CertDescriptor
    headers: SiteHeaders = SiteHeaders()


@dataclass(frozen=True)
class AttackerCaps:
    rogue_cert_for: frozenset[str] = frozenset()
    dns_hijack: frozenset[str] = frozenset()
    ruleset_control: bool = False
    onion_keys: frozenset[str] = frozenset()  # onion labels whose keys the attacker holds
    compromised_victim_onion_key: bool = False


@dataclass(frozen=True)
class CacheEntry:
    alt_host: str
    expires_at: float  # fractional day ordinal


@dataclass(frozen=True)
class BrowserConfig:
    name: str = "browser"
    sata_aware: bool = False
    policy: TrustPolicy | None = None
    prioritize_onion: bool = False
    alt_svc_cache: Mapping[str, CacheEntry] = field(default_factory=dict)


@dataclass(frozen=True)
class World:
    sites: Mapping[str, SiteRecord]
    attacker: AttackerCaps = AttackerCaps()
    browser: BrowserConfig = BrowserConfig()
    he_rules: Mapping[str, str] = field(default_factory=dict)  # hostname -> onion label
    credentials: tuple[Sattestation, ...] = ()


@dataclass(frozen=True)
class CacheWrite:
    origin: str
    alt_host: str
    expires_at: float


@dataclass(frozen=True)
class Outcome:
    reached_endpoint: str
    verdicts: tuple[Verdict, ...]
    user_visible_alert: bool
    cache_writes: tuple[CacheWrite, ...]
    via_alt_service: str | None = None
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class Step:
    url: str
    now: date
    sites_patch: Mapping[str, SiteRecord | None] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    steps: tuple[Step, ...]
    browsers: Mapping[str, BrowserConfig] = field(default_factory=dict)


def validate_world(world: World) -> None:
    """Check fixture consistency before a run.

    Certificates must fingerprint to their own DER bytes, and the attacker
    may only serve content at an onion hostname whose key it holds (or any
    victim onion if the fixture grants the compromised-key capability).
    """
    for host, record in world.sites.items():
        cert = record.cert
        if cert.der is not None and cert.fingerprint != fingerprint_cert(cert.der):
            raise ValueError(f"site {host!r}: certificate fingerprint does not match DER")
        if is_attacker_endpoint(record.endpoint_id) and host.endswith(".onion"):
            label = host[: -len(".onion")]
            if (
                label not in world.attacker.onion_keys
                and not world.attacker.compromised_victim_onion_key
            ):
                raise ValueError(
                    f"fixture gives the attacker an onion site {host!r} without "
                    "the key capability"
                )
        if (
            is_attacker_endpoint(record.endpoint_id)
            and host in world.attacker.dns_hijack
            and host.lower() in {n.lower() for n in cert.san_list}
            and host not in world.attacker.rogue_cert_for
        ):
            raise ValueError(
                f"fixture serves a hijacked {host!r} with a valid-looking cert "
                "but no rogue-cert capability"
            )


def _host_of(url: str) -> tuple[str, str]:
    """(hostname, query) of a URL; scheme-less inputs are treated as https."""
    text = url.strip()
    if "://" not in text:
        text = "https://" + text
    parts = urlsplit(text)
    host = (parts.hostname or "").lower()
    if not host:
        raise UnknownHost(f"no hostname in {url!r}")
    return host, parts.query


def _query_param(query: str, name: str) -> str | None:
    values = [v for k, v in parse_qsl(query, keep_blank_values=True) if k == name]
    return values[0] if values else None


def _alt_host_str(alt: AltSvcHeader) -> str:
    if not isinstance(alt.host, str):
        raise ValueError(
            "per-user alt-svc hosts must be resolved before a visit runs"
        )
    return alt.host


def _alt_svc_allowed(
    world: World, origin_host: str, alt_host: str, now: date
) -> bool:
    """SATA-aware gate for storing an alternative service.

    Allowed only when some published (or served) self-sattestation binds
    the origin's domain to the alternative onion address.
    """
    record = world.sites.get(origin_host)
    candidates: list[Sattestation] = []
    if record is not None and record.headers.sata_header is not None:
        candidates.append(record.headers.sata_header)
    candidates.extend(world.credentials)
    policy = world.browser.policy
    for cred in candidates:
        if (
            validate_alt_svc(origin_host, alt_host, cred, policy, now=now)
            is AltSvcDecision.ALLOW
        ):
            return True
    return False


def run_visit(world: World, requested_url: str, now: date) -> tuple[Outcome, World]:
    """Simulate one navigation; returns the outcome and the updated world.

    Processing order: ruleset rewrite (before any network contact), cached
    alternative-service lookup, connection, response headers (alt-svc
    store, onion-location redirect), SATA validation when the browser is
    SATA-aware, and finally the contextual trust requirement when a policy
    is configured.
    """
    browser = world.browser
    host, query = _host_of(requested_url)
    verdicts: list[Verdict] = []
    notes: list[str] = []
    cache_writes: list[CacheWrite] = []
    alert = False

    # rewrite rulesets apply entirely in the browser, before any connection
    expected: Sata | None = None
    target_host = host
    if host in world.he_rules:
        target_host = world.he_rules[host] + ".onion"
        notes.append(f"ruleset rewrite {host} -> {target_host}")
        if browser.sata_aware and host.endswith(SECUREDROP_SUFFIX):
            try:
                base, expected_onion = securedrop_rewrite(host, _query_param(query, "onion"))
            except InvalidOnionComponent as exc:
                verdicts.append(Verdict(VerdictOutcome.REJECT_NOT_SATA, str(exc)))
                alert = True
            else:
                if expected_onion is not None:
                    expected = Sata(domain=base, onion=expected_onion)
    elif host.endswith(SECUREDROP_SUFFIX):
        # not a real DNS name; without a ruleset entry there is nothing to reach
        raise UnknownHost(f"no ruleset entry for {host!r}")

    origin_sata: Sata | None = None
    if browser.sata_aware and expected is None:
        try:
            origin_sata = parse_sata(requested_url)
        except NotASata:
            origin_sata = None
        except InvalidOnionComponent as exc:
            verdicts.append(Verdict(VerdictOutcome.REJECT_NOT_SATA, str(exc)))
            alert = True

    # cached alternative service for this origin
    via_alt: str | None = None
    entry = browser.alt_svc_cache.get(target_host)
    if entry is not None and now.toordinal() < entry.expires_at:
        notes.append(f"alt-svc cache: {target_host} -> {entry.alt_host}")
        via_alt = entry.alt_host
        target_host = entry.alt_host

    record = world.sites.get(target_host)
    if record is None:
        raise UnknownHost(f"no site record for {target_host!r}")

    new_cache = dict(browser.alt_svc_cache)
    if record.headers.alt_svc is not None and via_alt is None:
        alt_host = _alt_host_str(record.headers.alt_svc)
        store = True
        if browser.sata_aware:
            store = _alt_svc_allowed(world, target_host, alt_host, now)
            if not store:
                notes.append(f"alt-svc {alt_host} blocked: no trusted self-sattestation")
        if store:
            expires = now.toordinal() + record.headers.alt_svc.max_age / 86400.0
            new_cache[target_host] = CacheEntry(alt_host, expires)
            cache_writes.append(CacheWrite(target_host, alt_host, expires))

    loc = record.headers.onion_location
    if (
        loc is not None
        and browser.prioritize_onion
        and expected is None
        and via_alt is None
    ):
        if browser.sata_aware:
            v = validate_onion_location(origin_sata or host, loc, record.cert)
            verdicts.append(v)
            if v.accepted():
                follow_host, _ = _host_of(loc)
                follow = world.sites.get(follow_host)
                if follow is None:
                    raise UnknownHost(f"onion-location target {follow_host!r} unknown")
                record, target_host = follow, follow_host
                expected = parse_sata(loc)
                notes.append(f"followed self-authenticating onion-location to {follow_host}")
            else:
                alert = True
        else:
            follow_host, _ = _host_of(loc)
            follow = world.sites.get(follow_host)
            if follow is None:
                raise UnknownHost(f"onion-location target {follow_host!r} unknown")
            record, target_host = follow, follow_host
            notes.append(f"followed onion-location to {follow_host}")

    validated: Sata | None = None
    if browser.sata_aware:
        s = expected or origin_sata
        if (
            s is None
            and target_host == host
            and not host.endswith(".onion")
            and record.headers.sata_header is not None
            and is_self_sattestation(record.headers.sata_header)
            and record.headers.sata_header.sattestor_domain == host
        ):
            # the site advertises itself as a SATA: adopt it automatically
            s = Sata(domain=host, onion=record.headers.sata_header.sattestor_onion)
            notes.append("upgraded to the site's advertised SATA")
        if s is not None:
            v = validate_connection(s, record.cert, record.headers.sata_header, now)
            verdicts.append(v)
            if v.accepted():
                validated = s
            else:
                alert = True

    if (
        browser.sata_aware
        and browser.policy is not None
        and browser.policy.require_sattestation_for
    ):
        chain = None
        if validated is not None:
            for lbl in sorted(browser.policy.require_sattestation_for):
                chain = evaluate(browser.policy, world.credentials, validated, lbl, now)
                if chain is not None:
                    break
        if chain is None:
            alert = True
            notes.append("required sattestation from a trusted sattestor is missing")
        else:
            notes.append(f"sattested for label {chain.label!r}")

    outcome = Outcome(
        reached_endpoint=record.endpoint_id,
        verdicts=tuple(verdicts),
        user_visible_alert=alert,
        cache_writes=tuple(cache_writes),
        via_alt_service=via_alt,
        notes=tuple(notes),
    )
    new_world = replace(world, browser=replace(browser, alt_svc_cache=new_cache))
    return outcome, new_world


def run_scenario(scenario: Scenario, browser: BrowserConfig) -> list[Outcome]:
    """Replay a scenario's scripted visits under one browser configuration."""
    world = replace(scenario.world, browser=browser)
    outcomes: list[Outcome] = []
    for step in scenario.steps:
        if step.sites_patch:
            sites = dict(world.sites)
            for hostname, rec in step.sites_patch.items():
                if rec is None:
                    sites.pop(hostname, None)
                else:
                    sites[hostname] = rec
            world = replace(world, sites=sites)
        validate_world(world)
        outcome, world = run_visit(world, step.url, step.now)
        outcomes.append(outcome)
    return outcomes


def run_matrix(
    scenarios: Sequence[Scenario],
    browsers: Sequence[BrowserConfig],
    now: date | None = None,
) -> list[dict]:
    """Cross product of scenarios and browser configurations.

    Each row reports the steady-state endpoint (after the last scripted
    visit), whether any step raised a user-visible alert, and whether the
    attack succeeded: final endpoint attacker-controlled with no alert
    anywhere.  ``now`` is unused when every step carries its own date.
    """
    del now  # step dates drive the clock; kept for interface symmetry
    rows: list[dict] = []
    for scenario in scenarios:
        for browser in browsers:
            outcomes = run_scenario(scenario, browser)
            any_alert = any(o.user_visible_alert for o in outcomes)
            final = outcomes[-1].reached_endpoint if outcomes else ""
            rows.append(
                {
                    "scenario": scenario.name,
                    "browser": browser.name,
                    "steps": [
                        {
                            "reached_endpoint": o.reached_endpoint,
                            "alert": o.user_visible_alert,
                        }
                        for o in outcomes
                    ],
                    "reached_endpoint": final,
                    "user_visible_alert": any_alert,
                    "attack_success": is_attacker_endpoint(final) and not any_alert,
                }
            )
    return rows


def _resolve_alt_hosts(world: World, user: str) -> World:
    """Pick the per-user alternative host wherever a fixture varies it."""
    sites = dict(world.sites)
    changed = False
    for host, record in world.sites.items():
        alt = record.headers.alt_svc
        if alt is not None and not isinstance(alt.host, str):
            resolved = AltSvcHeader(host=alt.host[user], max_age=alt.max_age)
            sites[host] = replace(record, headers=replace(record.headers, alt_svc=resolved))
            changed = True
    return replace(world, sites=sites) if changed else world


def track_alt_svc_exposure(
    world: World,
    visits: Sequence[tuple[str, date]],
    users: Sequence[str] = ("client",),
) -> dict:
    """Report which visits were served through cached alternative services.

    Replays the visit script once per simulated user.  Origins appear in
    the report only when an alternative service was actually stored or
    used for them; if different users observed different alternative
    hosts for the same origin, those origins partition the user
    population and the attacker can distinguish returning users by cache
    state alone.
    """
    origins: dict[str, dict[str, list[dict]]] = {}
    for user in users:
        w = _resolve_alt_hosts(world, user)
        for index, (url, when) in enumerate(visits):
            outcome, w = run_visit(w, url, when)
            events = []
            for write in outcome.cache_writes:
                events.append((write.origin, {"visit": index, "url": url, "stored": write.alt_host}))
            if outcome.via_alt_service is not None:
                origin, _ = _host_of(url)
                events.append(
                    (origin, {"visit": index, "url": url, "served_via": outcome.via_alt_service})
                )
            for origin, event in events:
                origins.setdefault(origin, {}).setdefault(user, []).append(event)

    distinguishable = []
    for origin, per_user in sorted(origins.items()):
        seen_hosts = {
            user: {e.get("stored") or e.get("served_via") for e in events}
            for user, events in per_user.items()
        }
        distinct = {frozenset(hosts) for hosts in seen_hosts.values()}
        if len(distinct) > 1:
            distinguishable.append(origin)
    return {
        "origins": origins,
        "distinguishable_origins": distinguishable,
        "partitions_users": bool(distinguishable),
    }


# ---------------------------------------------------------------------------
# JSON fixture loading


def _substitute(value, keys: Mapping[str, KeyPair]):
    if isinstance(value, str):
        out = value
        while "{onion:" in out:
            start = out.index("{onion:")
            end = out.index("}", start)
            name = out[start + len("{onion:") : end]
            out = out[:start] + keys[name].address.label + out[end + 1 :]
        return out
    if isinstance(value, list):
        return [_substitute(v, keys) for v in value]
    if isinstance(value, dict):
        return {k: _substitute(v, keys) for k, v in value.items()}
    return value


def _cert_from_spec(name: str, spec: dict, keys: Mapping[str, KeyPair]) -> CertDescriptor:
    der = f"cert:{name}".encode("utf-8")
    sans: list[str] = []
    for entry in spec.get("sans", []):
        entry = _substitute(entry, keys)
        if entry.startswith("{sata_sans:"):
            _, domain, key_name = entry[1:-1].split(":")
            sata = Sata(domain=domain, onion=keys[key_name].address)
            sans.extend(expected_sans(sata))
        else:
            sans.append(entry)
    return CertDescriptor(
        fingerprint=fingerprint_cert(der),
        san_list=tuple(sans),
        not_before=date.fromisoformat(spec["not_before"]),
        not_after=date.fromisoformat(spec["not_after"]),
        has_sct=spec.get("has_sct", False),
        der=der,
    )


def _credential_from_spec(
    spec: dict,
    keys: Mapping[str, KeyPair],
    certs: Mapping[str, CertDescriptor],
) -> Sattestation:
    kind = spec["kind"]
    key = keys[spec["key"]]
    if kind == "self":
        if "cert" in spec:
            fingerprints = [certs[spec["cert"]].fingerprint]
        else:
            fingerprints = list(spec["fingerprints"])
        return make_self_sattestation(
            key=key,
            domain=spec["domain"],
            cert_fingerprints=fingerprints,
            issued=date.fromisoformat(spec["issued"]),
            refreshed_on=date.fromisoformat(spec["refreshed_on"]),
            refresh_rate_days=spec.get("refresh_rate_days", 7),
            labels=spec.get("labels"),
        )
    if kind == "third_party":
        bindings = []
        for b in spec["bindings"]:
            bindings.append(
                Binding(
                    domain=b["domain"],
                    onion=keys[b["onion_key"]].address,
                    issued=date.fromisoformat(b["issued"]),
                    refreshed_on=date.fromisoformat(b["refreshed_on"]),
                    labels=tuple(b.get("labels", ())),
                )
            )
        body = SattestationBody(
            sattestor_domain=spec["sattestor_domain"],
            sattestor_onion=key.address,
            refresh_rate_days=spec.get("refresh_rate_days", 7),
            sattestees=tuple(bindings),
        )
        return issue(key, body)
    raise ValueError(f"unknown credential kind {kind!r}")


def _site_from_spec(
    spec: dict,
    keys: Mapping[str, KeyPair],
    certs: Mapping[str, CertDescriptor],
    credentials: Mapping[str, Sattestation],
) -> SiteRecord:
    alt = None
    if "alt_svc" in spec:
        raw = spec["alt_svc"]
        host = raw["host"]
        host = _substitute(host, keys)
        alt = AltSvcHeader(host=host, max_age=raw.get("max_age", DEFAULT_ALT_SVC_MAX_AGE))
    header = None
    if "sata_header" in spec:
        header = credentials[spec["sata_header"]]
    onion_location = spec.get("onion_location")
    if onion_location is not None:
        onion_location = _substitute(onion_location, keys)
    return SiteRecord(
        endpoint_id=spec["endpoint"],
        cert=certs[spec["cert"]],
        headers=SiteHeaders(
            onion_location=onion_location,
            alt_svc=alt,
            sata_header=header,
        ),
    )


def _policy_from_spec(spec: dict, keys: Mapping[str, KeyPair]) -> TrustPolicy:
    roots = tuple(
        TrustRoot(
            sattestor=Sata(domain=r["domain"], onion=keys[r["key"]].address),
            trusted_labels=frozenset(r["trusted_labels"]),
        )
        for r in spec.get("roots", [])
    )
    return TrustPolicy(
        roots=roots,
        max_chain_depth=spec.get("max_chain_depth", 3),
        require_sattestation_for=frozenset(spec.get("require_sattestation_for", [])),
        allow_credentialed_alt_services=spec.get("allow_credentialed_alt_services", True),
    )


def browser_from_spec(name: str, spec: dict, keys: Mapping[str, KeyPair]) -> BrowserConfig:
    policy = None
    if spec.get("policy"):
        policy = _policy_from_spec(spec["policy"], keys)
    return BrowserConfig(
        name=name,
        sata_aware=spec.get("sata_aware", False),
        policy=policy,
        prioritize_onion=spec.get("prioritize_onion", False),
    )


def load_scenario(source: str | Path | dict) -> Scenario:
    """Load a scenario fixture from a JSON file, JSON text, or parsed dict."""
    if isinstance(source, dict):
        raw = source
    elif isinstance(source, Path):
        raw = json.loads(source.read_text())
    else:
        text = str(source)
        raw = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())

    keys = {name: keygen(bytes.fromhex(seed)) for name, seed in raw.get("keys", {}).items()}
    certs = {
        name: _cert_from_spec(name, spec, keys)
        for name, spec in raw.get("certs", {}).items()
    }
    credentials = {
        name: _credential_from_spec(spec, keys, certs)
        for name, spec in raw.get("credentials", {}).items()
    }
    sites = {
        _substitute(host, keys): _site_from_spec(spec, keys, certs, credentials)
        for host, spec in raw.get("sites", {}).items()
    }
    attacker_spec = raw.get("attacker", {})
    attacker = AttackerCaps(
        rogue_cert_for=frozenset(_substitute(attacker_spec.get("rogue_cert_for", []), keys)),
        dns_hijack=frozenset(_substitute(attacker_spec.get("dns_hijack", []), keys)),
        ruleset_control=attacker_spec.get("ruleset_control", False),
        onion_keys=frozenset(_substitute(attacker_spec.get("onion_keys", []), keys)),
        compromised_victim_onion_key=attacker_spec.get("compromised_victim_onion_key", False),
    )
    he_rules = {
        _substitute(host, keys): _substitute(label, keys)
        for host, label in raw.get("he_rules", {}).items()
    }
    world = World(
        sites=sites,
        attacker=attacker,
        he_rules=he_rules,
        credentials=tuple(credentials[name] for name in sorted(credentials)),
    )
    steps = []
    for s in raw.get("steps", []):
        patch = None
        if "sites" in s:
            patch = {
                _substitute(host, keys): (
                    None if spec is None else _site_from_spec(spec, keys, certs, credentials)
                )
                for host, spec in s["sites"].items()
            }
        steps.append(
            Step(
                url=_substitute(s["url"], keys),
                now=date.fromisoformat(s["now"]),
                sites_patch=patch,
            )
        )
    browsers = {
        name: browser_from_spec(name, spec, keys)
        for name, spec in raw.get("browsers", {}).items()
    }
    return Scenario(
        name=raw.get("name", "scenario"),
        world=world,
        steps=tuple(steps),
        browsers=browsers,
    )
