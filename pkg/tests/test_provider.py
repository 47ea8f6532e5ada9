"""Provider: PKI checks, routing, transcript shape, and the adversary."""

import base64
import json

import pytest

from chatgate import cgka
from chatgate.errors import (
    BadSignature,
    DuplicateId,
    NotMember,
    UnknownChatbot,
    UnknownMember,
)
from chatgate.group import chatbot_init, user_init
from chatgate.provider import Provider, adversary_decrypt
from chatgate.triggers import rules_from_text


def make_world(n=3, bots=(("echo-bot-01", "mention:@echo"),), group_id="grp-main"):
    """Provider-mediated group: every view travels through publish/inbox."""
    provider = Provider()
    ids = [f"user-{i:02d}" for i in range(n)]
    users = {uid: user_init(cgka.init(uid, provider.directory), provider)
             for uid in ids}
    bot_states = {}
    for cid, rules_text in bots:
        bot = chatbot_init(cid, rules_from_text(rules_text))
        provider.register_bot(bot.registration)
        bot_states[cid] = bot

    for uid, user in users.items():
        provider.register_party(uid, user)
    for cid, bot in bot_states.items():
        provider.register_party(cid, bot)

    creator = users[ids[0]]
    provider.create_group(group_id, ids)
    blob = creator.create_group(group_id, ids)
    provider.publish(group_id, ids[0], user_view=blob)
    drain(provider, users, bot_states)

    for cid in bot_states:
        blob = creator.add_chatbot(cid)
        provider.attach_chatbot(group_id, cid)
        provider.publish(group_id, ids[0], user_view=blob, bot_view=blob,
                         bot_targets=(cid,))
        drain(provider, users, bot_states)
    return provider, users, bot_states


def drain(provider, users, bots):
    """Deliver every pending view to its party, dispatching on type byte."""
    from chatgate.encoding import peek_type
    from chatgate import group as g

    for uid, user in users.items():
        for view in provider.inbox(uid):
            kind = peek_type(view)
            if kind == g.GROUP_CONTROL:
                user.process_group_control(view)
            elif kind == g.VIEW_USER_MESSAGE:
                user.process_user_message(view)
            elif kind == g.ADD_BOT:
                user.process_add_chatbot(view)
            elif kind == g.REMOVE_BOT:
                user.process_remove_chatbot(view)
            elif kind == g.BOT_MESSAGE:
                user.receive_from_chatbot(view)
    for cid, bot in bots.items():
        for view in provider.inbox(cid):
            kind = peek_type(view)
            if kind == g.VIEW_CHATBOT_MESSAGE:
                bot.receive(view)
            elif kind == g.ADD_BOT:
                bot.process_add(view)
            elif kind == g.REMOVE_BOT:
                bot.process_remove(view)


def user_send(provider, users, bots, sender, message, **kw):
    out = users[sender].send(message, **kw)
    provider.publish(users[sender].group_id, sender,
                     user_view=out.user_view, bot_view=out.chatbot_view)
    drain(provider, users, bots)
    return out


# -- PKI ----------------------------------------------------------------------

def test_bot_registration_checks():
    provider = Provider()
    bot = chatbot_init("echo-bot-01", rules_from_text("always"))
    provider.register_bot(bot.registration)
    with pytest.raises(DuplicateId):
        provider.register_bot(bot.registration)
    with pytest.raises(UnknownChatbot):
        provider.lookup_bot("ghost-bot-99")

    from chatgate.triggers import BotRegistration
    forged = BotRegistration(
        chatbot_id="evil-bot-66",
        enc_public_key=bot.registration.enc_public_key,
        sig_public_key=bot.registration.sig_public_key,
        trigger=bot.registration.trigger,
        signature=b"\x00" * 64)
    with pytest.raises(BadSignature):
        provider.register_bot(forged)


def test_group_table_checks():
    provider = Provider()
    cgka.init("user-00", provider.directory)
    provider.create_group("grp-x", ["user-00"])
    with pytest.raises(DuplicateId):
        provider.create_group("grp-x", ["user-00"])
    with pytest.raises(UnknownMember):
        provider.create_group("grp-y", ["nobody-55"])
    with pytest.raises(UnknownMember):
        provider.add_member("grp-x", "nobody-55")
    with pytest.raises(NotMember):
        provider.remove_member("grp-x", "nobody-55")


# -- routing -------------------------------------------------------------------

def test_views_route_by_recipient_class():
    provider, users, bots = make_world(3)
    user_send(provider, users, bots, "user-01", b"@echo hello")

    by_class = {}
    for row in provider.transcript:
        by_class.setdefault(row["recipient_class"], set()).add(row["recipient"])
    assert by_class["user"] <= set(users)
    assert by_class["chatbot"] == {"echo-bot-01"}


def test_sender_not_delivered_to_self():
    provider, users, bots = make_world(3)
    seq = provider.publish("grp-main", "user-01",
                           user_view=users["user-01"].update_keys())
    recipients = [r["recipient"] for r in provider.transcript if r["seq"] == seq]
    assert "user-01" not in recipients
    assert set(recipients) == {"user-00", "user-02"}
    drain(provider, users, bots)


def test_nonmember_cannot_publish():
    provider, users, bots = make_world(2)
    with pytest.raises(NotMember):
        provider.publish("grp-main", "stranger-99", user_view=b"\x15junk")


def test_removed_member_stops_receiving():
    provider, users, bots = make_world(3)
    blob = users["user-00"].remove_user("user-02")
    provider.remove_member("grp-main", "user-02")
    seq = provider.publish("grp-main", "user-00", user_view=blob)
    recipients = [r["recipient"] for r in provider.transcript if r["seq"] == seq]
    assert recipients == ["user-01"]


def test_transcript_rows_carry_no_sender():
    provider, users, bots = make_world(2)
    user_send(provider, users, bots, "user-00", b"@echo hi")
    for row in provider.transcript:
        assert sorted(row) == ["group_id", "recipient", "recipient_class",
                               "seq", "view_b64"]


def test_transcript_file_roundtrip(tmp_path):
    provider, users, bots = make_world(2)
    user_send(provider, users, bots, "user-00", b"@echo hi")
    path = tmp_path / "transcript.jsonl"
    provider.write_transcript(str(path))
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows == provider.transcript


def test_inbox_drains_once():
    provider, users, bots = make_world(2)
    out = users["user-00"].send(b"plain")
    provider.publish("grp-main", "user-00", user_view=out.user_view,
                     bot_view=out.chatbot_view)
    assert provider.inbox("user-01")
    assert provider.inbox("user-01") == []


def test_snapshot_state_is_canonical():
    provider, users, bots = make_world(2)
    a = provider.snapshot_state("user-00")
    b = provider.snapshot_state("user-00")
    assert a == b
    json.loads(a)  # valid JSON


# -- adversary ------------------------------------------------------------------

def test_adversary_with_empty_state_recovers_nothing():
    provider, users, bots = make_world(3)
    for i, msg in enumerate([b"@echo alpha", b"plain beta", b"@echo gamma"]):
        user_send(provider, users, bots, f"user-{i:02d}", msg)
    report = adversary_decrypt(b"{}", provider.transcript)
    assert report.plaintexts == frozenset()
    assert report.secrets == frozenset()


def test_compromised_chatbot_reads_exactly_addressed_messages():
    provider, users, bots = make_world(3)
    sent = {
        b"@echo alpha": True,
        b"plain beta": False,
        b"@echo gamma": True,
        b"hidden delta": False,
    }
    for i, msg in enumerate(sent):
        user_send(provider, users, bots, f"user-{i % 3:02d}", msg)

    snap = provider.snapshot_state("echo-bot-01")
    report = adversary_decrypt(snap, provider.transcript, max_chain=8)
    triggered = {m for m, hit in sent.items() if hit}
    assert triggered <= report.plaintexts
    hidden = {m for m, hit in sent.items() if not hit}
    assert not (hidden & report.plaintexts)


def test_compromised_user_reads_group_traffic():
    provider, users, bots = make_world(3)
    user_send(provider, users, bots, "user-00", b"@echo alpha")
    user_send(provider, users, bots, "user-01", b"plain beta")
    snap = provider.snapshot_state("user-02")
    report = adversary_decrypt(snap, provider.transcript, max_chain=8)
    # current group secret decrypts the latest message directly
    assert b"plain beta" in report.plaintexts


def test_concealment_dummies_do_not_decrypt():
    provider, users, bots = make_world(
        2, bots=(("echo-bot-01", "mention:@echo"), ("log-bot-02", "never")))
    user_send(provider, users, bots, "user-00", b"@echo only you", conceal=True)
    snap = provider.snapshot_state("log-bot-02")
    report = adversary_decrypt(snap, provider.transcript, max_chain=8)
    assert b"@echo only you" not in report.plaintexts


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
