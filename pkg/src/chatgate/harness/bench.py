"""Microbenchmarks for the cost claims.

Three experiments:
  * m-sweep: end-to-end group message delivery at fixed group size while the
    number of addressed chatbots grows. Cost should be linear in m.
  * n-sweep: sender-side cost of one message as the group grows. The sender
    pays one sealed box per tree level plus one per addressed chatbot, so
    time should grow with log2(n), not n.
  * add_bot: attaching a chatbot, in a plain group and in a group where
    every member holds a pseudonym (each must re-broadcast a fresh key so
    the new bot can verify them).

Timings go to CSV; run reports never include wall-clock numbers, so the
CSV is the only artifact that varies across hosts.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass

from .. import cgka, counters
from ..group import chatbot_init, user_init
from ..provider import Provider
from ..triggers import rules_from_text

CSV_COLUMNS = ("bench", "n", "m", "variant", "iterations",
               "p50_ms", "mean_ms", "pke_seal", "pke_open", "derive")


@dataclass(frozen=True)
class BenchRow:
    bench: str
    n: int
    m: int
    variant: str
    iterations: int
    p50_ms: float
    mean_ms: float
    pke_seal: int
    pke_open: int
    derive: int


def write_csv(rows: list[BenchRow], path: str) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))


# -- world construction -------------------------------------------------------

class World:
    """A warm provider-mediated group sized for measurements."""

    def __init__(self, n: int, m: int, group_id: str = "grp-bench") -> None:
        self.group_id = group_id
        self.provider = Provider()
        self.ids = [f"user-{i:03d}" for i in range(n)]
        self.users = {uid: user_init(cgka.init(uid, self.provider.directory),
                                     self.provider)
                      for uid in self.ids}
        self.bots = {}
        creator = self.users[self.ids[0]]
        self.provider.create_group(group_id, self.ids)
        self._publish_user_control(self.ids[0],
                                   creator.create_group(group_id, self.ids))

        for i in range(m):
            self.attach_bot(f"bench-bot-{i:03d}")

        # Warm the tree: one self-update per member fills every internal
        # node, so a sender's path costs exactly one box per level.
        for uid in self.ids:
            self._publish_user_control(uid, self.users[uid].update_keys())

    def attach_bot(self, cid: str, rules_text: str = "always") -> None:
        bot = chatbot_init(cid, rules_from_text(rules_text))
        self.bots[cid] = bot
        self.provider.register_bot(bot.registration)
        blob = self.users[self.ids[0]].add_chatbot(cid)
        self.provider.attach_chatbot(self.group_id, cid)
        self.provider.publish(self.group_id, self.ids[0], user_view=blob,
                              bot_view=blob, bot_targets=(cid,))
        self.drain()

    def _publish_user_control(self, sender: str, blob: bytes) -> None:
        self.provider.publish(self.group_id, sender, user_view=blob)
        self.drain()

    def drain(self) -> None:
        from ..encoding import peek_type
        from .. import group as g

        for uid in self.ids:
            user = self.users[uid]
            for view in self.provider.inbox(uid):
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
        for cid, bot in self.bots.items():
            for view in self.provider.inbox(cid):
                kind = peek_type(view)
                if kind == g.VIEW_CHATBOT_MESSAGE:
                    bot.receive(view)
                elif kind == g.ADD_BOT:
                    bot.process_add(view)
                elif kind == g.REMOVE_BOT:
                    bot.process_remove(view)

    def send_end_to_end(self, sender: str, message: bytes) -> None:
        out = self.users[sender].send(message)
        self.provider.publish(self.group_id, sender, user_view=out.user_view,
                              bot_view=out.chatbot_view)
        self.drain()

    def send_sender_only(self, sender: str, message: bytes) -> None:
        self.users[sender].send(message)


def _measure(action, iterations: int, warmups: int) -> tuple[list[float], counters.OpCounters]:
    for _ in range(warmups):
        action()
    times: list[float] = []
    ops = counters.OpCounters()
    for i in range(iterations):
        with counters.collect(ops if i == iterations - 1 else counters.OpCounters()):
            start = time.perf_counter_ns()
            action()
            elapsed = time.perf_counter_ns() - start
        times.append(elapsed / 1e6)
    return times, ops


def _row(bench: str, n: int, m: int, variant: str, times: list[float],
         ops: counters.OpCounters) -> BenchRow:
    return BenchRow(
        bench=bench, n=n, m=m, variant=variant, iterations=len(times),
        p50_ms=round(statistics.median(times), 4),
        mean_ms=round(statistics.fmean(times), 4),
        pke_seal=ops.total("pke_seal"),
        pke_open=ops.total("pke_open"),
        derive=ops.total("derive"))


# -- benches -----------------------------------------------------------------

def bench_send_m_sweep(n: int = 50, m_values: tuple[int, ...] = (0, 4, 8, 16, 32),
                       iterations: int = 30, warmups: int = 5) -> list[BenchRow]:
    """End-to-end delivery time as the chatbot roster grows."""
    rows = []
    message = b"benchmark message payload, forty-two bytes"
    for m in m_values:
        world = World(n, m)
        sender = world.ids[0]
        times, ops = _measure(
            lambda: world.send_end_to_end(sender, message),
            iterations, warmups)
        rows.append(_row("send_m", n, m, "end_to_end", times, ops))
    return rows


def bench_send_n_sweep(n_values: tuple[int, ...] = (8, 16, 32, 64, 128),
                       m: int = 4, iterations: int = 30,
                       warmups: int = 5) -> list[BenchRow]:
    """Sender-side cost of one message as the group grows."""
    rows = []
    message = b"benchmark message payload, forty-two bytes"
    for n in n_values:
        world = World(n, m)
        sender = world.ids[0]
        times, ops = _measure(
            lambda: world.send_sender_only(sender, message),
            iterations, warmups)
        rows.append(_row("send_n", n, m, "sender", times, ops))
    return rows


def bench_add_bot(n: int = 50, m: int = 4, iterations: int = 30,
                  warmups: int = 5, pseudonym: bool = False) -> list[BenchRow]:
    """Attaching one more chatbot to a warm group.

    Plain variant: the attach itself (registration lookup, one seal, the
    control fan-out). Pseudonym variant: the attach plus a fresh pseudonym
    broadcast from every member, since the new bot cannot verify handles it
    never saw. A reference send row is included for ratio baselines.
    """
    world = World(n, m)
    if pseudonym:
        for uid in world.ids:
            out = world.users[uid].register_pseudonym()
            world.provider.publish(world.group_id, uid,
                                   user_view=out.user_view,
                                   bot_view=out.chatbot_view)
            world.drain()

    counter = iter(range(10_000))

    def attach_plain() -> None:
        world.attach_bot(f"extra-bot-{next(counter):04d}")

    def attach_with_pseudonyms() -> None:
        attach_plain()
        for uid in world.ids:
            out = world.users[uid].register_pseudonym()
            world.provider.publish(world.group_id, uid,
                                   user_view=out.user_view,
                                   bot_view=out.chatbot_view)
            world.drain()

    action = attach_with_pseudonyms if pseudonym else attach_plain
    variant = "with_pseudonyms" if pseudonym else "plain"
    times, ops = _measure(action, iterations, warmups)
    rows = [_row("add_bot", n, m, variant, times, ops)]

    message = b"benchmark message payload, forty-two bytes"
    sender = world.ids[0]
    ref_times, ref_ops = _measure(
        lambda: world.send_end_to_end(sender, message), iterations, warmups)
    rows.append(_row("add_bot", n, m, "reference_send", ref_times, ref_ops))
    return rows


# -- model fits -----------------------------------------------------------------

def fit_linear(xs: list[float], ys: list[float]) -> tuple[float, float, float, float]:
    """Least squares y = a + b*x. Returns (a, b, r2, rss)."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    b = sxy / sxx if sxx else 0.0
    a = mean_y - b * mean_x
    rss = sum((y - (a + b * x)) ** 2 for x, y in zip(xs, ys))
    sst = sum((y - mean_y) ** 2 for y in ys)
    r2 = 1.0 - rss / sst if sst else 1.0
    return a, b, r2, rss


def aic(rss: float, nobs: int, k: int = 2) -> float:
    return 2 * k + nobs * math.log(max(rss / nobs, 1e-12))


def compare_growth(ns: list[int], times_ms: list[float]) -> dict:
    """Is sender cost logarithmic or linear in group size? Lower AIC wins."""
    _, _, r2_lin, rss_lin = fit_linear([float(n) for n in ns], times_ms)
    logs = [math.log2(n) for n in ns]
    _, _, r2_log, rss_log = fit_linear(logs, times_ms)
    nobs = len(ns)
    return {
        "aic_linear": round(aic(rss_lin, nobs), 3),
        "aic_log": round(aic(rss_log, nobs), 3),
        "r2_linear": round(r2_lin, 4),
        "r2_log": round(r2_log, 4),
        "prefers_log": aic(rss_log, nobs) < aic(rss_lin, nobs),
    }
