"""Chatbot trigger rules and signed registrations.

A trigger is an ordered list of rules evaluated against the message bytes;
the trigger fires if any rule matches. Rules are deliberately simple and
group-public: every user can re-evaluate them locally, which is what keeps
receivers' chatbot records in sync without trusting the sender's addressing
list.

A registration binds a chatbot id, its two long-term public keys
(encryption and signing) and its trigger under one signature, so neither
the trigger nor the keys can be swapped after publication.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoding import Reader, Writer
from .errors import MalformedControl
from .primitives import sign, verify

RULE_KINDS = ("prefix", "contains", "mention", "always", "never")

_RULE_TYPE = {kind: i + 1 for i, kind in enumerate(RULE_KINDS)}
_RULE_KIND = {v: k for k, v in _RULE_TYPE.items()}

_TRIGGER_TYPE = 0x20
_REGISTRATION_TYPE = 0x21
_REGISTRATION_CONTEXT = 0x22


@dataclass(frozen=True)
class TriggerRule:
    kind: str
    argument: bytes = b""

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind in ("always", "never") and self.argument:
            raise ValueError(f"{self.kind} takes no argument")
        if self.kind in ("prefix", "contains", "mention") and not self.argument:
            raise ValueError(f"{self.kind} needs an argument")

    def matches(self, message: bytes) -> bool:
        if self.kind == "prefix":
            return message.startswith(self.argument)
        if self.kind == "contains":
            return self.argument in message
        if self.kind == "mention":
            return self.argument in message.split()
        return self.kind == "always"


@dataclass(frozen=True)
class TriggerSpec:
    chatbot_id: str
    rules: tuple[TriggerRule, ...]

    def matches(self, message: bytes) -> bool:
        return any(rule.matches(message) for rule in self.rules)

    def canonical_bytes(self) -> bytes:
        w = Writer(_TRIGGER_TYPE)
        w.text(self.chatbot_id)
        w.items(list(self.rules), _write_rule)
        return w.done()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TriggerSpec":
        r = Reader(data, expect_type=_TRIGGER_TYPE)
        chatbot_id = r.text()
        rules = tuple(r.items(_read_rule))
        r.finish()
        return cls(chatbot_id=chatbot_id, rules=rules)


def _write_rule(w: Writer, rule: TriggerRule) -> None:
    w.u8(_RULE_TYPE[rule.kind])
    w.field(rule.argument)


def _read_rule(r: Reader) -> TriggerRule:
    kind = _RULE_KIND.get(r.u8())
    if kind is None:
        raise MalformedControl("unknown rule kind byte")
    argument = r.field()
    try:
        return TriggerRule(kind=kind, argument=argument)
    except ValueError as exc:
        raise MalformedControl(str(exc)) from exc


def rule_from_text(text: str) -> TriggerRule:
    """Parse one rule of the scenario form `kind` or `kind:argument`."""
    kind, sep, argument = text.partition(":")
    try:
        return TriggerRule(kind=kind, argument=argument.encode("utf-8"))
    except ValueError as exc:
        raise ValueError(f"bad trigger rule {text!r}: {exc}") from exc


def rules_from_text(text: str) -> tuple[TriggerRule, ...]:
    """Parse a comma-separated rule list, e.g. `prefix:?go,mention:@tour`."""
    return tuple(rule_from_text(part) for part in text.split(",") if part)


# ---------------------------------------------------------------------------
# registrations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BotRegistration:
    """Immutable published identity of a chatbot."""

    chatbot_id: str
    enc_public_key: bytes
    sig_public_key: bytes
    trigger: TriggerSpec
    signature: bytes

    def signing_context(self) -> bytes:
        return registration_context(self.enc_public_key, self.sig_public_key,
                                    self.trigger)

    def verify_signature(self) -> bool:
        return verify(self.sig_public_key, self.signature, self.signing_context())

    def to_bytes(self) -> bytes:
        w = Writer(_REGISTRATION_TYPE)
        w.text(self.chatbot_id)
        w.field(self.enc_public_key)
        w.field(self.sig_public_key)
        w.field(self.trigger.canonical_bytes())
        w.field(self.signature)
        return w.done()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BotRegistration":
        r = Reader(data, expect_type=_REGISTRATION_TYPE)
        chatbot_id = r.text()
        enc_pk = r.field()
        sig_pk = r.field()
        trigger = TriggerSpec.from_bytes(r.field())
        signature = r.field()
        r.finish()
        return cls(chatbot_id=chatbot_id, enc_public_key=enc_pk,
                   sig_public_key=sig_pk, trigger=trigger, signature=signature)


def registration_context(enc_public_key: bytes, sig_public_key: bytes,
                         trigger: TriggerSpec) -> bytes:
    w = Writer(_REGISTRATION_CONTEXT)
    w.field(enc_public_key)
    w.field(sig_public_key)
    w.field(trigger.canonical_bytes())
    return w.done()


def make_registration(chatbot_id: str, enc_public_key: bytes,
                      sig_secret_key: bytes, sig_public_key: bytes,
                      rules: tuple[TriggerRule, ...]) -> BotRegistration:
    trigger = TriggerSpec(chatbot_id=chatbot_id, rules=rules)
    signature = sign(sig_secret_key,
                     registration_context(enc_public_key, sig_public_key, trigger))
    return BotRegistration(chatbot_id=chatbot_id, enc_public_key=enc_public_key,
                           sig_public_key=sig_public_key, trigger=trigger,
                           signature=signature)
