"""Security probes over a finished run.

Each probe turns one of the protocol's guarantees into a checkable statement
about runner artifacts (snapshots, transcript, supersession records) and
returns a Verdict. Probes never re-derive ground truth from the parties
being tested: the adversary gets exactly a captured state plus the wire
transcript, and the expectations come from the runner's send log.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ProbeFailed
from ..group import ChatbotMessageView, chatbot_view_shape
from ..provider import adversary_decrypt
from ..primitives import SEALED_LEN
from .runner import RunResult

# Chain length the adversary explores above any captured value. Trees at
# desk scale are at most 2^7 leaves deep; anything longer buys nothing.
ADVERSARY_CHAIN = 10


@dataclass(frozen=True)
class Verdict:
    probe: str
    passed: bool
    detail: dict

    def check(self) -> "Verdict":
        if not self.passed:
            raise ProbeFailed(f"{self.probe}: {self.detail}")
        return self


def _verdict(probe: str, violations: list, **detail) -> Verdict:
    detail = {**detail, "violations": violations[:10]}
    return Verdict(probe=probe, passed=not violations, detail=detail)


# -- key agreement ---------------------------------------------------------------

def probe_agreement(result: RunResult) -> Verdict:
    """All current members ended on one epoch and one group secret. The
    runner asserts this after every op; re-check the final state here."""
    members = result.current_members()
    epochs = {result.users[m].epoch for m in members}
    secrets = {result.users[m].cgka.group_secret for m in members}
    violations = []
    if len(epochs) != 1 or len(secrets) != 1 or None in secrets:
        violations.append({"epochs": sorted(epochs)})
    return _verdict("agreement", violations,
                    members=len(members), epoch=max(epochs))


# -- selective access ---------------------------------------------------------------

def probe_selective_access(result: RunResult) -> Verdict:
    """Compromising a chatbot's final state plus the full transcript yields
    no plaintext beyond the messages that actually addressed it."""
    violations = []
    recovered_total = 0
    allowed_total = 0
    for cid in sorted(result.bots):
        history = result.snapshots.get(cid)
        if not history:
            continue
        snapshot = history[-1][1]
        report = adversary_decrypt(snapshot, result.provider.transcript,
                                   max_chain=ADVERSARY_CHAIN)
        allowed = {ev.message for ev in result.sends
                   if ev.kind in ("user", "registration") and cid in ev.addressed}
        extra = report.plaintexts - allowed
        recovered_total += len(report.plaintexts)
        allowed_total += len(allowed)
        for message in sorted(extra):
            violations.append({"chatbot": cid, "plaintext": message.hex()[:64]})
    return _verdict("selective_access", violations,
                    chatbots=len(result.bots), recovered=recovered_total,
                    allowed=allowed_total)


# -- forward secrecy ---------------------------------------------------------------

def probe_forward_secrecy(result: RunResult) -> Verdict:
    """Byte-scan: once an op supersedes a chain secret or message key, the
    value never appears in any in-scope party state again. Chatbot states
    must never contain any group chain secret, current or old."""
    violations = []
    scanned = 0
    dead = result.supersessions
    for pid, history in sorted(result.snapshots.items()):
        for snap_seq, snapshot in history:
            scanned += 1
            text = snapshot.decode("ascii")
            for item in dead:
                if item.dead_from <= snap_seq and item.value_hex in text:
                    violations.append({"party": pid, "seq": snap_seq,
                                       "value": item.value_hex[:16]})
    all_group_secrets = set(result.group_secrets.values())
    for cid in sorted(result.bots):
        for snap_seq, snapshot in result.snapshots.get(cid, []):
            text = snapshot.decode("ascii")
            for value in sorted(all_group_secrets):
                if value in text:
                    violations.append({"party": cid, "seq": snap_seq,
                                       "value": value[:16], "kind": "chain"})
    return _verdict("forward_secrecy", violations,
                    snapshots_scanned=scanned, dead_values=len(dead))


# -- post-compromise security ---------------------------------------------------------

def _heal_seq(result: RunResult, party: str, after_seq: int) -> int | None:
    """First op after the compromise that rotates the party's own keys:
    a user's address-all send, or a chatbot's reply."""
    for ev in result.sends:
        if ev.seq <= after_seq or ev.sender != party:
            continue
        if party in result.bots and ev.kind == "bot":
            return ev.seq
        if ev.kind in ("user", "registration") and party not in result.bots:
            # any self-send embeds a tree update; healing the chatbot
            # channel too requires addressing every bot attached right then
            attached = _attached_at(result, ev.seq)
            if attached <= set(ev.addressed):
                return ev.seq
    return None


def _attached_at(result: RunResult, seq: int) -> set[str]:
    for scope_seq, scope in result.scopes:
        if scope_seq == seq:
            return set(scope) & set(result.bots)
    return set(result.current_bots())


def probe_post_compromise(result: RunResult, label: str | None = None) -> Verdict:
    """After a compromised party heals, nothing sent later is recoverable
    from the captured state, and no later group secret leaks."""
    if not result.compromises:
        raise ProbeFailed("post_compromise: scenario has no compromise op")
    labels = [label] if label is not None else sorted(result.compromises)
    violations = []
    checked = 0
    for lab in labels:
        event = result.compromises[lab]
        heal = _heal_seq(result, event.party, event.seq)
        if heal is None:
            raise ProbeFailed(
                f"post_compromise: no healing op for {event.party!r} "
                f"after label {lab!r}")
        report = adversary_decrypt(event.snapshot, result.provider.transcript,
                                   max_chain=ADVERSARY_CHAIN)
        for ev in result.sends:
            if ev.seq > heal and ev.message in report.plaintexts:
                violations.append({"label": lab, "seq": ev.seq,
                                   "plaintext": ev.message.hex()[:64]})
        healed_epochs = {epoch for seq, epoch in result.seq_epoch.items()
                         if seq > heal}
        for epoch in sorted(healed_epochs):
            secret = bytes.fromhex(result.group_secrets[epoch])
            if secret in report.secrets:
                violations.append({"label": lab, "epoch": epoch,
                                   "kind": "group_secret"})
        checked += 1
    return _verdict("post_compromise", violations, compromises=checked)


# -- sender anonymity -------------------------------------------------------------

def probe_anonymity(result: RunResult, expect_uniform: bool = False) -> Verdict:
    """Chatbot views carry no sender identity: no member id appears in any
    view, and (for scenarios built for it) views of the same message from
    different senders have identical field-length vectors."""
    violations = []
    shapes = []
    member_ids = {uid.encode() for uid in result.users}
    rows = [row for row in result.provider.transcript
            if row["recipient_class"] == "chatbot"]
    import base64

    seen_views = set()
    for row in rows:
        view = base64.b64decode(row["view_b64"])
        if view in seen_views:
            continue
        seen_views.add(view)
        try:
            shape = chatbot_view_shape(view)
        except Exception:
            continue  # add/remove controls are not message views
        for uid in sorted(member_ids):
            if uid in view:
                violations.append({"seq": row["seq"],
                                   "leaked": uid.decode()})
        shapes.append((row["seq"], shape))

    if expect_uniform:
        user_send_seqs = {ev.seq for ev in result.sends if ev.kind == "user"}
        uniform = {shape for seq, shape in shapes if seq in user_send_seqs}
        if len(uniform) > 1:
            violations.append({"kind": "shape", "distinct": len(uniform)})
    return _verdict("anonymity", violations, views=len(shapes))


# -- concealment --------------------------------------------------------------------

def probe_concealment(result: RunResult) -> Verdict:
    """Concealed sends carry one fixed-size entry per attached chatbot, and
    every chatbot not addressed reported the uniform not-addressed outcome."""
    import base64

    views_by_seq = {}
    for row in result.provider.transcript:
        if row["recipient_class"] == "chatbot":
            views_by_seq.setdefault(row["seq"],
                                    base64.b64decode(row["view_b64"]))
    violations = []
    checked = 0
    for ev in result.sends:
        if ev.kind != "user" or not ev.concealed:
            continue
        checked += 1
        view = ChatbotMessageView.from_bytes(views_by_seq[ev.seq])
        expected = set(ev.addressed) | set(ev.concealed)
        if {cid for cid, _ in view.entries} != expected:
            violations.append({"seq": ev.seq, "kind": "roster"})
        if any(len(box) != SEALED_LEN for _, box in view.entries):
            violations.append({"seq": ev.seq, "kind": "length"})
        for cid in ev.concealed:
            outcome = result.bot_outcomes.get((ev.seq, cid))
            if outcome != "not_addressed":
                violations.append({"seq": ev.seq, "chatbot": cid,
                                   "outcome": outcome})
    return _verdict("concealment", violations, concealed_sends=checked)


PROBES = {
    "agreement": probe_agreement,
    "selective": probe_selective_access,
    "fs": probe_forward_secrecy,
    "pcs": probe_post_compromise,
    "anonymity": probe_anonymity,
    "concealment": probe_concealment,
}
