"""Parties, key distribution, and the static access audit.

Security is modelled as key possession.  A signal is protected from a party
exactly when that party lacks one of the private keys needed to peel the
signal's encryption layers.  The dealer in :func:`provision` hands out:

* the shared Paillier private key to every entity (and no control unit);
* control unit ``i``'s RSA private key to control unit ``i`` only;
* entity ``i``'s RSA private key to entity ``i`` only.

All public keys are public.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .codec import DualCiphertext, Layer, OuterCiphertext, dbar, di, do_
from .crypto import (
    PaillierCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    RngLike,
    RsaKeypair,
    RsaPublicKey,
    as_rng,
    key_from_dict,
    key_to_dict,
    paillier_keygen,
    rsa_keygen,
)
from .errors import AccessDenied, ProvisioningError
from .fixedpoint import GridParams

PARTY_FILE_FORMAT = "duallayer-party"
PARTY_FILE_VERSION = 1


class PartyKind(str, Enum):
    ENTITY = "entity"
    CONTROL_UNIT = "control-unit"


@dataclass(frozen=True, order=True)
class Party:
    kind: PartyKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value} {self.index}"


def entity(i: int) -> Party:
    return Party(PartyKind.ENTITY, i)


def control_unit(i: int) -> Party:
    return Party(PartyKind.CONTROL_UNIT, i)


@dataclass(frozen=True, order=True)
class KeyId:
    """``kind`` is ``paillier`` (index 0), ``rsa`` (control-unit bound) or ``ebar`` (entity bound)."""

    kind: str
    index: int = 0

    def __str__(self) -> str:
        if self.kind == "paillier":
            return "Paillier private key"
        if self.kind == "rsa":
            return f"control-unit {self.index} RSA private key"
        return f"entity {self.index} RSA private key"


PAILLIER = KeyId("paillier")


def rsa_id(i: int) -> KeyId:
    return KeyId("rsa", i)


def ebar_id(i: int) -> KeyId:
    return KeyId("ebar", i)


class Signal(str, Enum):
    """The four protected signals for each entity ``i``."""

    Y = "y"            # measurement ciphertext on the wire
    V = "v"            # command ciphertext on the wire
    DY = "D(y)"        # measurement after the control unit strips its layer
    V_INNER = "v_in"   # command before the control unit wraps it


def required_keys(signal: Signal, i: int) -> frozenset[KeyId]:
    if signal is Signal.Y:
        return frozenset({rsa_id(i), PAILLIER})
    if signal is Signal.V:
        return frozenset({ebar_id(i), PAILLIER})
    return frozenset({PAILLIER})


@dataclass(frozen=True, eq=False)
class Keyring:
    entities: int
    paillier_public: PaillierPublicKey
    paillier_private: PaillierPrivateKey | None
    controller_keys: dict[int, RsaKeypair | RsaPublicKey]
    entity_keys: dict[int, RsaKeypair | RsaPublicKey]
    holdings: dict[Party, frozenset[KeyId]]

    @property
    def parties(self) -> list[Party]:
        return [entity(i) for i in range(1, self.entities + 1)] + [control_unit(i) for i in range(1, self.entities + 1)]

    def held(self, party: Party) -> frozenset[KeyId]:
        return self.holdings.get(party, frozenset())

    def controller_public(self, i: int) -> RsaPublicKey:
        k = self.controller_keys[i]
        return k.public if isinstance(k, RsaKeypair) else k

    def entity_public(self, i: int) -> RsaPublicKey:
        k = self.entity_keys[i]
        return k.public if isinstance(k, RsaKeypair) else k

    def private_key(self, key: KeyId):
        """Key material for ``key`` (the dealer's view, ignores holdings)."""
        if key.kind == "paillier":
            out = self.paillier_private
        elif key.kind == "rsa":
            out = self.controller_keys.get(key.index)
        else:
            out = self.entity_keys.get(key.index)
        if out is None or isinstance(out, RsaPublicKey):
            raise AccessDenied(f"{key} is not present in this keyring", missing=[key])
        return out

    def keypair_count(self) -> int:
        return 1 + len(self.controller_keys) + len(self.entity_keys)

    def grant(self, party: Party, *keys: KeyId) -> "Keyring":
        """Copy with extra private keys handed to ``party`` (for constructing counterexamples)."""
        holdings = dict(self.holdings)
        holdings[party] = self.held(party) | frozenset(keys)
        return replace(self, holdings=holdings)


def standard_holdings(entities: int) -> dict[Party, frozenset[KeyId]]:
    out = {}
    for i in range(1, entities + 1):
        out[entity(i)] = frozenset({PAILLIER, ebar_id(i)})
        out[control_unit(i)] = frozenset({rsa_id(i)})
    return out


def check_sizes(paillier_n: int, rsa_moduli: Iterable[int], params: GridParams, required_bound: int = 0) -> None:
    """Raise :class:`ProvisioningError` unless ``n_P > max(bound, 2^n)`` and ``n_R >= n_P^2``."""
    if paillier_n <= params.modulus:
        raise ProvisioningError(f"Paillier modulus must exceed 2^{params.n} = {params.modulus}")
    if paillier_n <= required_bound:
        raise ProvisioningError(
            f"Paillier modulus {paillier_n} ({paillier_n.bit_length()} bits) is not above the "
            f"required bound {required_bound} (~2^{required_bound.bit_length() - 1})"
        )
    for n_r in rsa_moduli:
        if n_r < paillier_n * paillier_n:
            raise ProvisioningError(
                f"RSA modulus ({n_r.bit_length()} bits) is below n_P^2 ({(paillier_n ** 2).bit_length()} bits)"
            )


def provision(entities: int, params: GridParams, paillier_bits: int, rsa_bits: int, seed: RngLike = None,
              required_bound: int = 0, enforce: bool = True) -> Keyring:
    """Trusted-dealer key generation for ``entities`` entities and as many control units.

    ``required_bound`` is the exclusive lower bound on the Paillier modulus
    derived from the gains (see ``synthesis.required_paillier_bound``).
    ``enforce=False`` skips the size rules, which is only useful to show what
    breaks without them.
    """
    if entities < 1:
        raise ProvisioningError("need at least one entity")
    rng = as_rng(seed)
    if enforce and (1 << paillier_bits) <= max(required_bound, params.modulus):
        raise ProvisioningError(
            f"a {paillier_bits}-bit Paillier modulus cannot exceed the required bound {max(required_bound, params.modulus)} "
            f"(needs at least {max(required_bound, params.modulus).bit_length() + 1} bits)"
        )
    pk, sk = paillier_keygen(paillier_bits, rng)
    ctrl = {i: rsa_keygen(rsa_bits, rng) for i in range(1, entities + 1)}
    ent = {i: rsa_keygen(rsa_bits, rng) for i in range(1, entities + 1)}
    if enforce:
        check_sizes(pk.n, [k.n for k in (*ctrl.values(), *ent.values())], params, required_bound)
    return Keyring(entities, pk, sk, ctrl, ent, standard_holdings(entities))


# ---------------------------------------------------------------------------
# access
# ---------------------------------------------------------------------------

def missing_keys(keyring: Keyring, party: Party, signal: Signal, i: int) -> frozenset[KeyId]:
    return required_keys(signal, i) - keyring.held(party)


def _deny(party: Party, missing: Iterable[KeyId]):
    missing = sorted(missing)
    raise AccessDenied(f"{party} lacks the {', '.join(str(k) for k in missing)}", missing=missing)


def classify(message) -> tuple[Signal, int]:
    """Which signal a ciphertext message represents, and for which entity index.

    Bare Paillier ciphertexts carry no party, so ``i`` is 0 for them.
    """
    items = list(message) if isinstance(message, (list, tuple)) else [message]
    if not items:
        raise ValueError("empty message")
    first = items[0][0] if isinstance(items[0], tuple) else items[0]
    if isinstance(first, OuterCiphertext):
        return (Signal.Y if first.layer == Layer.TO_CONTROLLER else Signal.V), first.party
    if isinstance(first, DualCiphertext):
        return Signal.DY, 0
    if isinstance(first, PaillierCiphertext):
        return Signal.V_INNER, 0
    raise TypeError(f"unrecognised ciphertext {type(first).__name__}")


def try_decrypt(keyring: Keyring, party: Party, message, params: GridParams):
    """Decrypt ``message`` as ``party`` would, or raise :class:`AccessDenied` naming the missing keys."""
    signal, i = classify(message)
    missing = missing_keys(keyring, party, signal, i)
    if missing:
        _deny(party, missing)
    sk = keyring.private_key(PAILLIER)
    items = list(message) if isinstance(message, (list, tuple)) else [message]
    if signal is Signal.Y:
        duals = di(items, keyring.private_key(rsa_id(i)), i, keyring.paillier_public)
        return do_([d.plus for d in duals], sk, params)
    if signal is Signal.V:
        return dbar(items, keyring.private_key(ebar_id(i)), i, sk, params)
    if signal is Signal.DY:
        return do_([d.plus for d in items], sk, params)
    return do_(items, sk, params)


@dataclass(frozen=True)
class AccessEntry:
    party: Party
    signal: Signal
    entity: int
    can_recover: bool
    needed: frozenset[KeyId]
    missing: frozenset[KeyId]


@dataclass
class AccessReport:
    entries: list[AccessEntry] = field(default_factory=list)
    violations: list[tuple[str, AccessEntry]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def violation_set(self) -> set[tuple[str, Party, Signal, int]]:
        return {(rule, e.party, e.signal, e.entity) for rule, e in self.violations}

    def matrix(self) -> dict[tuple[Party, Signal, int], bool]:
        return {(e.party, e.signal, e.entity): e.can_recover for e in self.entries}

    def render(self) -> str:
        lines = []
        for e in self.entries:
            mark = "RECOVER" if e.can_recover else "sealed "
            why = "holds all keys" if e.can_recover else "missing " + ", ".join(str(k) for k in sorted(e.missing))
            lines.append(f"{str(e.party):<15} {e.signal.value:<5} of entity {e.entity}: {mark} ({why})")
        for rule, e in self.violations:
            lines.append(f"VIOLATION [{rule}] {e.party} can recover {e.signal.value} of entity {e.entity}")
        return "\n".join(lines)


# rule names used in violation reports
TRANSIT_RULE = "transit"        # wire ciphertexts readable only by their own entity
CONTROLLER_RULE = "controller"  # no control unit reads plaintext measurements or commands


def audit(keyring: Keyring) -> AccessReport:
    """Static check of every (party, signal) pair against both confidentiality rules."""
    report = AccessReport()
    n = keyring.entities
    for party in keyring.parties:
        for i in range(1, n + 1):
            for signal in Signal:
                needed = required_keys(signal, i)
                missing = needed - keyring.held(party)
                entry = AccessEntry(party, signal, i, not missing, needed, missing)
                report.entries.append(entry)
                if not entry.can_recover:
                    continue
                if signal in (Signal.Y, Signal.V) and party != entity(i):
                    report.violations.append((TRANSIT_RULE, entry))
                if signal in (Signal.DY, Signal.V_INNER) and party.kind is PartyKind.CONTROL_UNIT:
                    report.violations.append((CONTROLLER_RULE, entry))
    return report


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def party_filename(party: Party) -> str:
    return f"{party.kind.value}_{party.index}.json"


def party_document(keyring: Keyring, party: Party) -> dict:
    """Everything ``party`` holds: all public keys plus its own private keys."""
    held = keyring.held(party)
    public = {"paillier": key_to_dict(keyring.paillier_public)}
    for i in range(1, keyring.entities + 1):
        public[f"rsa_{i}"] = key_to_dict(keyring.controller_public(i))
        public[f"ebar_{i}"] = key_to_dict(keyring.entity_public(i))
    private = {}
    for key in sorted(held):
        name = "paillier" if key.kind == "paillier" else f"{key.kind}_{key.index}"
        private[name] = key_to_dict(keyring.private_key(key))
    return {
        "format": PARTY_FILE_FORMAT,
        "version": PARTY_FILE_VERSION,
        "party": {"kind": party.kind.value, "index": party.index},
        "entities": keyring.entities,
        "public": public,
        "private": private,
    }


def export_parties(keyring: Keyring, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for party in keyring.parties:
        path = directory / party_filename(party)
        path.write_text(json.dumps(party_document(keyring, party), indent=2, sort_keys=True) + "\n")
        paths.append(path)
    return paths


def _key_id(name: str) -> KeyId:
    if name == "paillier":
        return PAILLIER
    kind, _, idx = name.partition("_")
    if kind not in ("rsa", "ebar") or not idx.isdigit():
        raise ValueError(f"unknown key name {name!r}")
    return KeyId(kind, int(idx))


def import_parties(paths: Sequence[str | Path]) -> Keyring:
    """Rebuild a keyring whose holdings are exactly what the party files contain."""
    docs = [json.loads(Path(p).read_text()) for p in paths]
    if not docs:
        raise ValueError("no party files given")
    for d in docs:
        if d.get("format") != PARTY_FILE_FORMAT or d.get("version") != PARTY_FILE_VERSION:
            raise ValueError("not a party key file")
    n = docs[0]["entities"]
    pub = docs[0]["public"]
    paillier_public = key_from_dict(pub["paillier"])
    ctrl: dict[int, RsaKeypair | RsaPublicKey] = {i: key_from_dict(pub[f"rsa_{i}"]) for i in range(1, n + 1)}
    ent: dict[int, RsaKeypair | RsaPublicKey] = {i: key_from_dict(pub[f"ebar_{i}"]) for i in range(1, n + 1)}
    paillier_private = None
    holdings = {}
    for d in docs:
        party = Party(PartyKind(d["party"]["kind"]), d["party"]["index"])
        held = set()
        for name, body in d["private"].items():
            key_id = _key_id(name)
            key = key_from_dict(body)
            held.add(key_id)
            if key_id.kind == "paillier":
                paillier_private = key
            elif key_id.kind == "rsa":
                ctrl[key_id.index] = key
            else:
                ent[key_id.index] = key
        holdings[party] = frozenset(held)
    return Keyring(n, paillier_public, paillier_private, ctrl, ent, holdings)


def export_dealer_keys(keyring: Keyring, directory: str | Path) -> list[Path]:
    """One file per keypair (the dealer's copy)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = [("paillier.key", keyring.private_key(PAILLIER), "paillier")]
    items += [(f"rsa_{i}.key", keyring.private_key(rsa_id(i)), f"control-unit {i}") for i in range(1, keyring.entities + 1)]
    items += [(f"ebar_{i}.key", keyring.private_key(ebar_id(i)), f"entity {i}") for i in range(1, keyring.entities + 1)]
    paths = []
    for name, key, label in items:
        path = directory / name
        path.write_text(json.dumps(key_to_dict(key, label), indent=2, sort_keys=True) + "\n")
        paths.append(path)
    return paths
