"""Drive a population of players over the simulated network, round by round."""
from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from .adversary import RationalConfig, effective_functions, revenue, utility
from .chain import Directory, GenesisBlock, Metablock, Variant, make_vote
from .config import ScenarioConfig
from .consensus import Behavior, Player, ProtocolOptions, TraceEvent, elect_leader
from .crypto import generate_player_keys, hash_bytes
from .netsim import DelayPolicy, Network, Schedule
from .views import Credential, Payload, Transaction, ViewAssignment, default_family

HEAD_RANK = 1 << 16


def account_names(config: ScenarioConfig) -> list[str]:
    names = [config.family.party] + [f"acct{i}" for i in range(1, config.workload.accounts)]
    for a in config.adversary.accounts:
        if a not in names:
            names.append(a)
    return names


def make_genesis(config: ScenarioConfig, keys) -> GenesisBlock:
    family = default_family(config.family.party, config.family.decrement)
    creds, table = [], {}
    for i in range(config.n):
        fid = config.view_of(i)
        rank = HEAD_RANK if i < config.m else family.dist(family.null, family[fid])
        cred = Credential(rank, hash_bytes(b"credential" + i.to_bytes(4, "big"))[:8])
        creds.append(cred)
        table[cred] = fid
    psi = ViewAssignment(family, table)
    balances = tuple((a, config.workload.initial_balance) for a in account_names(config))
    return GenesisBlock(config.variant_enum, tuple(creds), family, psi, Directory.from_keys(keys), balances)


class Workload:
    """Seeded transfers among the configured accounts; nonces count up per sender."""

    def __init__(self, config: ScenarioConfig, seed: int):
        self.w = config.workload
        self.seed = seed
        self.accounts = [a for a in account_names(config) if a not in config.adversary.accounts]
        self.nonce: dict[str, int] = defaultdict(int)

    def batch(self, e: int, tag: str = "") -> list[Transaction]:
        rng = random.Random(f"workload:{self.w.seed}:{self.seed}:{e}{tag}")
        out = []
        for _ in range(self.w.txs_per_epoch):
            s, r = rng.sample(self.accounts, 2)
            out.append(Transaction(s, r, rng.randint(1, self.w.max_amount), self.nonce[s]))
            self.nonce[s] += 1
        return out


def behavior_of(config: ScenarioConfig, i: int) -> Behavior:
    a = config.adversary
    if i not in a.players:
        return Behavior.HONEST
    return {"crash": Behavior.CRASH, "rational": Behavior.RATIONAL,
            "byzantine-demo": Behavior.BYZANTINE_DEMO}[a.model]


@dataclass
class Proposal:
    epoch: int
    leader: int
    digest: bytes
    kind: str
    txs: Payload


class World:
    def __init__(self, config: ScenarioConfig, seed: int | None = None, schedule: Schedule | None = None,
                 shuffle_seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        rng = random.Random(f"keys:{self.seed}")
        self.keys = [generate_player_keys(i, rng) for i in range(config.n)]
        self.genesis = make_genesis(config, self.keys)
        self.family = self.genesis.family
        self.variant = self.genesis.variant
        self.rpe = config.network.rpe
        self.adv: RationalConfig | None = config.rational()
        policy = DelayPolicy(config.network.policy)
        echo = config.network.echo and policy is not DelayPolicy.EXHAUSTIVE
        self.echo = echo
        opts = ProtocolOptions(verkey=config.adversary.verkey, echo=echo)
        gd = self.genesis.digest
        signed = self.variant is Variant.RFT
        gvotes = [make_vote(k, 0, gd, True if signed else None, signed) for k in self.keys]
        self.events: list[TraceEvent] = []
        self.players = [
            Player(i, self.keys[i], self.genesis, gvotes, behavior_of(config, i), config.crash_round(i), opts,
                   random.Random(f"player:{self.seed}:{i}"), self.adv, self.events.append)
            for i in range(config.n)
        ]
        self.network = Network(config.net(self.seed), config.n, schedule, shuffle_seed)
        self.workload = Workload(config, self.seed)
        self.proposals: list[Proposal] = []
        self.leader_of: dict[int, int] = {}
        # finalized digests per player at the start of each epoch (after deliveries)
        self.snapshots: dict[int, list[tuple[bytes, ...]]] = {}
        self.consistency_errors: list[str] = []
        self.round = 0
        self.finished = False

    # population views -------------------------------------------------------------
    @property
    def honest(self) -> list[Player]:
        """Players that follow the protocol (crash-faulty ones until they stop)."""
        return [p for p in self.players if p.behavior in (Behavior.HONEST, Behavior.CRASH)]

    def end_round(self) -> int:
        return (self.config.epochs + 2) * self.rpe

    def _send(self, sender: int, r: int, msgs) -> None:
        live = [p.id for p in self.players if p.alive(r)]
        for m in msgs:
            self.network.broadcast(sender, r, m, live)

    def _event(self, epoch: int, event: str, player: int, digest=None, detail: str = "") -> None:
        self.events.append(TraceEvent(epoch, event, player, digest, detail))

    # main loop ------------------------------------------------------------------------
    def step(self) -> None:
        r = self.round
        e = r // self.rpe
        for p in self.players:
            p.epoch = e
            if p.crash_round == r:
                self._event(e, "crash", p.id, None, f"round={r}")
        for env in self.network.step(r):
            if not self.players[env.recipient].alive(r):
                continue  # crashed recipients receive nothing
            out = self.players[env.recipient].receive(env.message, r)
            self._send(env.recipient, r, out)
        if r % self.rpe == 0:
            self.snapshots[e] = [tuple(p.state.finalized) for p in self.players]
            if 1 <= e <= self.config.epochs:
                self._start_epoch(e, r)
        self._check_consistency(r)
        self.round += 1

    def _start_epoch(self, e: int, r: int) -> None:
        leader = elect_leader(e, self.genesis.m)
        self.leader_of[e] = leader
        self._event(e, "epoch", leader, None, f"round={r}")
        batch = self.workload.batch(e)
        for p in self.players:
            p.receive_payload(batch)
        lp = self.players[leader]
        if self.adv and self.adv.double_proposal and lp.behavior is Behavior.RATIONAL:
            lp.late_pending = self.workload.batch(e, ":late")
        for p in self.players:
            out = p.on_epoch_start(e, r)
            for m in out:
                if isinstance(m, Metablock):
                    kind = "honest" if p.behavior is not Behavior.RATIONAL else _kind(p, m)
                    self.proposals.append(Proposal(e, p.id, m.digest, kind, Payload(p.payload_of(m.digest) or ())))
            self._send(p.id, r, out)

    def _check_consistency(self, r: int) -> None:
        chains = [p.state.finalized for p in self.honest]
        ref = max(chains, key=len)
        for p, c in zip(self.honest, chains):
            k = len(c)
            if c != ref[:k]:
                self.consistency_errors.append(f"round {r}: player {p.id} finalized chain diverges from the longest")
            for tip, cand in p.state.conflicts:
                self.consistency_errors.append(f"round {r}: player {p.id} saw a conflicting finalization candidate")
            p.state.conflicts.clear()

    def run(self) -> "World":
        while self.round < self.end_round():
            self.step()
        self.snapshots[self.end_round() // self.rpe] = [tuple(p.state.finalized) for p in self.players]
        self.finished = True
        return self

    # derived facts -----------------------------------------------------------------
    def truth(self) -> dict[bytes, Payload]:
        return {pr.digest: pr.txs for pr in self.proposals}

    def block(self, d: bytes) -> Metablock | None:
        for p in self.players:
            if d in p.state.blocks:
                return p.state.blocks[d]
        return None

    def notarized_anywhere(self, d: bytes) -> bool:
        return any(d in p.state.notarized for p in self.honest)

    def votes_on(self, d: bytes) -> tuple[int, int]:
        """Yes/no tallies from the honest player that saw the most votes on ``d``."""
        best = (0, 0)
        for p in self.honest:
            y, n = p.state.votes_for(d)
            if y + n > sum(best):
                best = (y, n)
        return best

    def chain_star(self) -> list[tuple[bytes, Payload]]:
        """The longest finalized chain among honest players with its true payloads."""
        truth = self.truth()
        ref = max((p.state.finalized for p in self.honest), key=len)
        return [(d, truth[d]) for d in ref[1:]]

    def messages_per_epoch(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for r, k in self.network.sent_by_round.items():
            out[r // self.rpe] += k
        return dict(out)

    def utilities(self) -> list[dict]:
        if self.adv is None or not self.adv.adversary:
            return []
        rows = []
        dks = {i: self.keys[i].decryption for i in self.adv.adversary}
        for pr in self.proposals:
            if pr.leader not in self.adv.adversary:
                continue
            block = self.block(pr.digest)
            lp = self.players[pr.leader]
            tau = revenue(pr.txs, self.adv, pr.leader, lp.ledger(block.parent))
            notarized = self.notarized_anywhere(pr.digest)
            u = utility(block, notarized, self.adv, self.family, effective_functions(block, dks), tau)
            rows.append({"epoch": pr.epoch, "block": pr.digest.hex()[:16], "notarized": notarized,
                         "revenue": str(tau), "utility": str(u)})
        return rows


def _kind(p: Player, block: Metablock) -> str:
    from .adversary import classify_block
    return classify_block(p, block)


def simulate(config: ScenarioConfig, seed: int | None = None, schedule: Schedule | None = None) -> World:
    return World(config, seed, schedule).run()


def double_spend_tx(world: World) -> Transaction | None:
    """An adversary-account transfer exceeding its genesis balance, if the config names accounts."""
    if world.adv is None or not world.adv.accounts:
        return None
    acct = sorted(world.adv.accounts)[0]
    bal = dict(world.genesis.balances)[acct]
    other = world.config.family.party
    return Transaction(acct, other, bal + 1, 10**6)


def dominance_for_config(config: ScenarioConfig, seed: int | None = None, adv: RationalConfig | None = None):
    """One-epoch strategy playout at the first epoch led by a rational head player."""
    from .adversary import check_dominance
    adv = adv or config.rational()
    heads = [i for i in sorted(adv.adversary) if i < config.m]
    if not heads:
        return None
    e = next(x for x in range(1, 10_000) if elect_leader(x, config.m) in heads)
    leader = elect_leader(e, config.m)

    def make_players():
        w = World(config, seed)
        batch = w.workload.batch(e)
        for p in w.players:
            p.receive_payload(batch)
            p.epoch = e
            p.adv = adv
        return w.players

    ds = double_spend_tx(World(config, seed))
    return check_dominance(make_players, leader, e, e * config.network.rpe, adv, ds)


def attack2_outcome(world: World) -> dict:
    """What the wrong-key victim did with the attacker's blocks and what happened to its next proposal."""
    adv = world.adv
    victim = adv.wrong_key_victim
    attacker_blocks = [pr for pr in world.proposals if pr.leader in adv.adversary]
    vp = world.players[victim]
    verdicts = {}
    for pr in attacker_blocks:
        v = next((v for v in vp.votes_cast if v.block == pr.digest), None)
        verdicts[pr.epoch] = None if v is None else bool(v.verdict)
    first = attacker_blocks[0].epoch if attacker_blocks else None
    nxt = next((pr for pr in world.proposals if pr.leader == victim and first is not None and pr.epoch > first), None)
    out = {"victim": victim, "attacker_epochs": [pr.epoch for pr in attacker_blocks],
           "wrong_key_notarized": [world.notarized_anywhere(pr.digest) for pr in attacker_blocks],
           "victim_votes": verdicts, "victim_next_epoch": None, "honest_no": 0, "victim_next_notarized": None}
    if nxt is not None:
        heads = [p for p in world.honest if p.is_head and p.id != victim]
        no = sum(1 for p in heads for v in p.votes_cast if v.block == nxt.digest and v.verdict is False)
        out.update(victim_next_epoch=nxt.epoch, honest_no=no, victim_next_notarized=world.notarized_anywhere(nxt.digest))
    return out


@dataclass
class EnumerationResult:
    schedules: int
    violations: list[str] = field(default_factory=list)
    max_decisions: int = 0


def enumerate_schedules(config: ScenarioConfig, limit: int | None = None) -> EnumerationResult:
    """Run every delay assignment of a small exhaustive-policy scenario and collect safety violations."""
    from .netsim import explore_schedules
    from .report import check_consistency, check_network
    if config.network.policy != DelayPolicy.EXHAUSTIVE.value:
        raise ValueError("enumerate needs network.policy = 'exhaustive'")
    res = EnumerationResult(0)
    for sched in explore_schedules():
        w = World(config, schedule=sched).run()
        res.schedules += 1
        res.max_decisions = max(res.max_decisions, len(sched.trace))
        for c in (check_network(w), check_consistency(w)):
            if c.status == "fail":
                res.violations.append(f"schedule {sched.choices}: {c.detail}")
        if limit is not None and res.schedules >= limit:
            break
    return res
