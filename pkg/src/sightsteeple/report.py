"""Run reports: named property checks, statistics and a canonical digest."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .chain import Metablock, Vote
from .consensus import Behavior
from .crypto import CryptoError, FunctionKey, fe_decrypt
from .views import Payload

CHECKS = ("network-bound", "consistency", "fhc", "integrity", "liveness", "dominance", "sizes",
          "rational-no-votes")
SUITES = {
    "all": CHECKS,
    "def2": ("network-bound", "consistency", "fhc", "integrity", "liveness"),
    "liveness": ("network-bound", "consistency", "liveness"),
    "dominance": ("network-bound", "consistency", "dominance", "rational-no-votes"),
    "sizes": ("network-bound", "consistency", "sizes"),
}
LIVENESS_WINDOW = 5


@dataclass
class Check:
    name: str
    status: str  # pass | fail | skip
    detail: str = ""
    violations: list[str] = field(default_factory=list)

    def line(self) -> str:
        return f"[{self.status.upper()}] {self.name}: {self.detail}"


def _check(name: str, violations: list[str], ok_detail: str) -> Check:
    if violations:
        return Check(name, "fail", f"{len(violations)} violation(s); first: {violations[0]}", violations)
    return Check(name, "pass", ok_detail)


# -- individual checks -----------------------------------------------------------------

def check_network(world) -> Check:
    return _check("network-bound", list(world.network.violations),
                  f"{world.network.delivered} deliveries within the delay bound")


def check_consistency(world) -> Check:
    return _check("consistency", list(world.consistency_errors),
                  "finalized chains prefix-comparable after every round")


def check_fhc(world) -> Check:
    """Lower-credential views are exactly derivable from higher ones, block by block."""
    fam = world.family
    out = []
    players = world.honest
    for p in players:
        fi = p.function
        for e in p.chain.entries:
            if e.view is not None and e.view.function_id != fi.id:
                out.append(f"player {p.id} holds {e.view.function_id} for block {e.block.hex()[:12]}, "
                           f"entitled to {fi.id}")
    for p in players:
        mine = {e.block: e.view for e in p.chain.entries if e.view is not None}
        for q in players:
            if q is p or not fam.leq(p.function, q.function):
                continue
            for e in q.chain.entries:
                v = mine.get(e.block)
                if v is None or e.view is None or e.view.function_id != q.function.id:
                    continue
                if fam.derive(e.view, p.function) != v:
                    out.append(f"block {e.block.hex()[:12]}: player {p.id}'s {p.function.id} view "
                               f"is not derivable from player {q.id}'s {q.function.id} view")
    return _check("fhc", out, f"{len(players)} honest chains hierarchy-consistent")


def check_integrity(world) -> Check:
    """Each honest view is exactly its entitled function of the true payload, and nothing more."""
    fam = world.family
    truth = world.truth()
    out = []
    for p in world.honest:
        for e in p.chain.entries:
            if e.flag:
                out.append(f"player {p.id} flagged block {e.block.hex()[:12]}: {e.flag}")
                continue
            want = fam.apply(p.function, truth[e.block])
            if e.view != want:
                out.append(f"player {p.id} block {e.block.hex()[:12]}: view differs from "
                           f"{p.function.id}(txs)")
        for leak in p.leaks:
            block = world.block(leak.block)
            if block is None:
                continue
            pp = block.pp if block.pp is not None else block.ciphertext.pp
            try:
                key = FunctionKey.decode(leak.key, pp)
                view = fe_decrypt(key, block.ciphertext, fam)
            except (CryptoError, ValueError):
                continue
            if not fam.leq(view.function_id, p.function):
                out.append(f"player {p.id} (entitled to {p.function.id}) computes {view.function_id} "
                           f"of epoch {leak.epoch} from a key leaked by player {leak.sender}")
    return _check("integrity", out, "every honest view equals its entitled function of the payload")


def honest_leader_epochs(world) -> set[int]:
    out = set()
    for e, leader in world.leader_of.items():
        p = world.players[leader]
        if p.behavior is Behavior.HONEST:
            out.add(e)
        elif p.behavior is Behavior.CRASH and p.crash_round >= (e + 1) * world.rpe:
            out.add(e)
    return out


def check_liveness(world) -> Check:
    """Five honest-leader epochs after GST finalize a new honest block by the next epoch's start."""
    cfg = world.config
    honest_epochs = honest_leader_epochs(world)
    last = max(world.snapshots)
    honest_proposals = {pr.digest for pr in world.proposals if pr.epoch in honest_epochs}
    out, windows = [], 0
    for e in range(1, cfg.epochs + 1):
        span = range(e, e + LIVENESS_WINDOW)
        if e * world.rpe < cfg.network.gst or e + LIVENESS_WINDOW > last:
            continue
        if not all(x in honest_epochs for x in span):
            continue
        windows += 1
        end = (e + LIVENESS_WINDOW) * world.rpe
        alive = [p for p in world.honest if p.alive(end)]
        before = set()
        for p in world.honest:
            before.update(world.snapshots[e][p.id])
        finals = [set(world.snapshots[e + LIVENESS_WINDOW][p.id]) for p in alive]
        common = set.intersection(*finals) if finals else set()
        fresh = (common - before) & honest_proposals
        if not fresh:
            out.append(f"window {e}..{e + LIVENESS_WINDOW - 1}: no new honest block final by the start "
                       f"of epoch {e + LIVENESS_WINDOW}")
    if windows == 0:
        return Check("liveness", "skip", "no window of five honest-leader epochs after GST")
    return _check("liveness", out, f"{windows} honest-leader windows all finalized a new block")


def check_sizes(world) -> Check:
    n = world.config.n
    out = []
    blocks = {}
    for p in world.players:
        blocks.update(p.state.blocks)
    for d, b in blocks.items():
        if len(b.entries) != n:
            out.append(f"block {d.hex()[:12]} has {len(b.entries)} entries for n={n}")
    vote_sizes = {len(v.wire) for p in world.players for v in p.votes_cast}
    if len(vote_sizes) > 1:
        out.append(f"vote sizes vary: {sorted(vote_sizes)}")
    return _check("sizes", out, f"{len(blocks)} metablocks with exactly n={n} entries")


def check_rational_votes(world) -> Check:
    players = [p for p in world.players if p.behavior is Behavior.RATIONAL]
    if not players:
        return Check("rational-no-votes", "skip", "no rational players")
    out = [f"rational player {p.id} voted on {v.block.hex()[:12]}" for p in players for v in p.votes_cast
           if v.verdict is False]
    return _check("rational-no-votes", out, "rational players never voted no")


def check_dominance_for(config, seed: int) -> Check:
    from .simulation import dominance_for_config
    res = dominance_for_config(config, seed)
    if res is None:
        return Check("dominance", "skip", "no rational head player")
    if res.holds:
        return Check("dominance", "pass", res.detail)
    return Check("dominance", "fail", res.detail, [res.detail])


# -- report ---------------------------------------------------------------------------------

@dataclass
class RunReport:
    name: str
    seed: int
    variant: str
    n: int
    epochs: list[dict]
    chains: dict[str, dict]
    utilities: list[dict]
    stats: dict
    checks: list[Check]
    enabled: tuple[str, ...]

    @property
    def violations(self) -> list[str]:
        out = []
        for c in self.checks:
            if c.name in self.enabled and c.status == "fail":
                out.extend(f"{c.name}: {v}" for v in c.violations)
        return out

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "seed": self.seed, "variant": self.variant, "n": self.n,
            "epochs": self.epochs, "chains": self.chains, "utilities": self.utilities, "stats": self.stats,
            "checks": [{"name": c.name, "status": c.status, "detail": c.detail, "enabled": c.name in self.enabled}
                       for c in self.checks],
            "violations": self.violations,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def text(self) -> str:
        lines = [f"run {self.name} seed={self.seed} variant={self.variant} n={self.n}", "", "epochs:"]
        for r in self.epochs:
            lines.append(f"  {r['epoch']:>3} leader={r['leader']} proposal={r['proposal']} "
                         f"yes={r['yes']} no={r['no']} notarized={r['notarized']} "
                         f"finalized_through={r['finalized_through']}")
        lines += ["", "chains:"]
        for pid, c in sorted(self.chains.items(), key=lambda kv: int(kv[0])):
            lines.append(f"  player {pid} ({c['function']}): {len(c['entries'])} entries digest={c['digest'][:16]}")
        if self.utilities:
            lines += ["", "utilities:"]
            lines += [f"  epoch {u['epoch']} notarized={u['notarized']} revenue={u['revenue']} utility={u['utility']}"
                      for u in self.utilities]
        lines += ["", "stats:"]
        lines += [f"  {k}: {v}" for k, v in sorted(self.stats.items())]
        lines += ["", "checks:"]
        for c in self.checks:
            mark = "" if c.name in self.enabled else " (not enabled)"
            lines.append("  " + c.line() + mark)
        lines += ["", f"violations: {len(self.violations)}", f"digest: {self.digest}"]
        return "\n".join(lines) + "\n"


def _finalized_through(world, e: int) -> int:
    snap = world.snapshots.get(e + 1) or world.snapshots[max(world.snapshots)]
    tips = []
    for p in world.honest:
        fin = snap[p.id]
        tips.append(world.players[p.id].state.epoch_of[fin[-1]])
    return min(tips) if tips else 0


def build_report(world, suite: str = "all", dominance: bool | None = None) -> RunReport:
    cfg = world.config
    enabled = SUITES[suite]
    epochs = []
    by_epoch: dict[int, list] = {}
    for pr in world.proposals:
        by_epoch.setdefault(pr.epoch, []).append(pr)
    for e in range(1, cfg.epochs + 1):
        prs = by_epoch.get(e, [])
        yes = no = 0
        notarized = False
        for pr in prs:
            y, n_ = world.votes_on(pr.digest)
            yes, no = max(yes, y), max(no, n_)
            notarized = notarized or world.notarized_anywhere(pr.digest)
        epochs.append({"epoch": e, "leader": world.leader_of.get(e), "proposal": "+".join(p.kind for p in prs) or "none",
                       "yes": yes, "no": no, "notarized": notarized,
                       "finalized_through": _finalized_through(world, e)})
    chains = {}
    for p in world.players:
        chains[str(p.id)] = {
            "function": p.function.id, "behavior": p.behavior.value, "digest": p.chain.chain_digest().hex(),
            "entries": [{"epoch": x.epoch, "block": x.block.hex()[:16], "view": x.view_digest.hex()[:16],
                         "flag": x.flag or ""} for x in p.chain.entries],
        }
    msgs = world.messages_per_epoch()
    active = [msgs.get(e, 0) for e in range(1, cfg.epochs + 1)]
    entry_counts = sorted({len(b.entries) for p in world.players for b in p.state.blocks.values()})
    stats = {
        "messages_total": world.network.total_sent,
        "messages_per_epoch_mean": f"{sum(active) / len(active):.3f}",
        "entries_per_metablock": entry_counts,
        "metablocks_seen": len({d for p in world.players for d in p.state.blocks}),
        "echo": world.echo,
        "rounds_per_epoch": world.rpe,
    }
    checks = [check_network(world), check_consistency(world), check_fhc(world), check_integrity(world),
              check_liveness(world)]
    want_dom = ("dominance" in enabled) if dominance is None else dominance
    if want_dom and world.adv is not None and cfg.adversary.model == "rational":
        checks.append(check_dominance_for(cfg, world.seed))
    else:
        checks.append(Check("dominance", "skip", "no rational adversary" if world.adv is None else "not requested"))
    checks += [check_sizes(world), check_rational_votes(world)]
    return RunReport(cfg.name, world.seed, cfg.variant, cfg.n, epochs, chains, world.utilities(), stats, checks, enabled)
