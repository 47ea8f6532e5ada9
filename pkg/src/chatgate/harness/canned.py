"""Ready-made scenarios: one per guarantee, plus a kitchen-sink demo.

These are ordinary scenario files (see scenario.py for the format); the CLI
pairs each with its probe, and the test suite reuses them as fixtures.
"""

FORWARD_SECRECY = """\
group grp-fs user-00 user-01 user-02
bot memo-bot-01 contains:note
add_bot user-00 memo-bot-01
send user-00 "note one for the bot"
send user-00 "note two for the bot"
send user-00 "nothing for bots in this one"
update user-01
send user-00 "note three, after the refresh"
"""

POST_COMPROMISE = """\
group grp-pcs user-00 user-01 user-02
bot memo-bot-01 contains:note
add_bot user-00 memo-bot-01
send user-01 "note before the breach"
compromise user-01 stolen-device
send user-01 "healing broadcast" address_all
send user-00 "note after healing"
bot_send memo-bot-01 "summary written after healing"
send user-02 "plain chat after healing"
"""

SELECTIVE_ACCESS = """\
group grp-sel user-00 user-01 user-02
bot echo-bot-01 mention:@echo
bot memo-bot-02 contains:note
add_bot user-00 echo-bot-01
add_bot user-00 memo-bot-02
send user-00 "@echo repeat after me"
send user-01 "note the quarterly figures"
send user-02 "no bot should read this line"
send user-00 "@echo note this for both of you"
bot_send echo-bot-01 "repeating after you"
send user-01 "another line bots never see"
"""

ANONYMITY = """\
group grp-anon user-00 user-01 user-02 user-03
bot echo-bot-01 mention:@echo
add_bot user-00 echo-bot-01
send user-00 "@echo ping"
send user-01 "@echo ping"
send user-02 "@echo ping"
send user-03 "@echo ping"
"""

CONCEALMENT = """\
group grp-conc user-00 user-01
bot echo-bot-01 mention:@echo
bot audit-bot-02 never
add_bot user-00 echo-bot-01
add_bot user-00 audit-bot-02
send user-00 "@echo hello there" conceal
send user-01 "nothing that fires a trigger" conceal
send user-00 "@echo goodbye now" conceal
"""

DEMO = """\
# A little of everything: membership churn, selective access, pseudonyms.
group grp-demo user-00 user-01 user-02
bot echo-bot-01 mention:@echo
bot memo-bot-02 contains:note
add_bot user-00 echo-bot-01
add_bot user-01 memo-bot-02
send user-00 "@echo say hello to everyone"
bot_send echo-bot-01 "hello to everyone"
send user-01 "note the decision from standup" conceal
register_pseudonym user-02
send user-02 "@echo an anonymous question" pseudonymous
add_user user-00 user-03
send user-03 "note from the newcomer"
rem_user user-00 user-01
send user-02 "@echo still working after the removal"
rem_bot user-00 echo-bot-01
send user-00 "note after the echo bot left"
"""

ALL = {
    "fs": FORWARD_SECRECY,
    "pcs": POST_COMPROMISE,
    "selective": SELECTIVE_ACCESS,
    "anonymity": ANONYMITY,
    "concealment": CONCEALMENT,
    "demo": DEMO,
}
