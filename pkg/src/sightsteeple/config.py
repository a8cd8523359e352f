"""Scenario configuration: TOML in, validated frozen dataclasses out."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import tomli

from .adversary import AdversaryConfigError, RationalConfig, check_fault_bound
from .chain import Variant
from .netsim import DelayPolicy, NetworkConfig, check_exhaustive_bounds
from .views import DECREMENT, IDENTITY, NULL, ViewError, default_family


class ConfigError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


MODELS = ("none", "crash", "rational", "byzantine-demo")


@dataclass(frozen=True)
class NetworkSection:
    delta: int = 1
    gst: int = 0
    policy: str = "worst"
    echo: bool = True
    rounds_per_epoch: int | None = None

    @property
    def rpe(self) -> int:
        return self.rounds_per_epoch or 2 * self.delta


@dataclass(frozen=True)
class FamilySection:
    party: str = "alice"
    decrement: bool = False


@dataclass(frozen=True)
class AdversarySection:
    model: str = "none"
    players: tuple[int, ...] = ()
    crash_rounds: tuple[int, ...] = ()
    beta1: str = "1/2"
    beta2: str = "1/2"
    block_reward: int = 0
    fee_per_tx: int = 0
    max_fee_txs: int = 0
    double_spend_gain: int = 0
    accounts: tuple[str, ...] = ()
    upgrade: bool = True
    fork_to_ancestor: bool = False
    double_proposal: bool = False
    wrong_key_victim: int | None = None
    wrong_key_function: str | None = None
    verkey: bool = True
    leak_epoch: int = 1


@dataclass(frozen=True)
class WorkloadSection:
    seed: int = 0
    txs_per_epoch: int = 3
    accounts: int = 4
    initial_balance: int = 1_000_000
    max_amount: int = 100


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    variant: str = "cft"
    n: int = 4
    m: int = 2
    epochs: int = 10
    seed: int = 0
    # view function id for each non-head player, cycled when shorter than n - m
    views: tuple[str, ...] = ("party:alice", "value-redact", "min-tx", "token-sum", "null")
    network: NetworkSection = NetworkSection()
    family: FamilySection = FamilySection()
    adversary: AdversarySection = AdversarySection()
    workload: WorkloadSection = WorkloadSection()
    output: str = "out"

    def __post_init__(self):
        validate(self)

    # derived -----------------------------------------------------------------
    @property
    def variant_enum(self) -> Variant:
        return Variant(self.variant)

    def view_of(self, i: int) -> str:
        if i < self.m:
            return IDENTITY
        return self.views[(i - self.m) % len(self.views)]

    def net(self, seed: int | None = None) -> NetworkConfig:
        s = self.seed if seed is None else seed
        return NetworkConfig(self.network.delta, self.network.gst, DelayPolicy(self.network.policy), s)

    def rational(self) -> RationalConfig | None:
        a = self.adversary
        if a.model not in ("rational", "byzantine-demo"):
            return None
        return RationalConfig(
            frozenset(a.players), Fraction(a.beta1), Fraction(a.beta2), a.block_reward, a.fee_per_tx,
            a.max_fee_txs, a.double_spend_gain, frozenset(a.accounts), a.upgrade, a.fork_to_ancestor,
            a.double_proposal, a.wrong_key_victim, a.wrong_key_function, a.leak_epoch)

    def crash_round(self, i: int) -> int | None:
        a = self.adversary
        if a.model != "crash" or i not in a.players:
            return None
        return a.crash_rounds[a.players.index(i)]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def validate(c: ScenarioConfig) -> None:
    def need(cond: bool, where: str, msg: str):
        if not cond:
            raise ConfigError(where, msg)

    need(c.variant in ("cft", "rft"), "variant", f"must be 'cft' or 'rft', got {c.variant!r}")
    need(isinstance(c.n, int) and c.n >= 1, "n", "must be a positive integer")
    need(isinstance(c.m, int) and 1 <= c.m <= c.n, "m", f"must satisfy 1 <= m <= n, got m={c.m}, n={c.n}")
    need(isinstance(c.epochs, int) and c.epochs >= 1, "epochs", "must be >= 1")
    need(len(c.views) >= 1, "views", "needs at least one function id")
    try:
        fam = default_family(c.family.party, c.family.decrement)
    except ViewError as exc:
        raise ConfigError("family", str(exc)) from None
    for v in c.views:
        need(v in fam, "views", f"unknown view function {v!r}")
    net = c.network
    need(net.delta >= 1, "network.delta", "must be >= 1")
    need(net.gst >= 0, "network.gst", "must be >= 0")
    need(net.policy in {p.value for p in DelayPolicy}, "network.policy", f"unknown policy {net.policy!r}")
    need(net.rpe >= 2, "network.rounds_per_epoch", "must be >= 2")
    if net.policy == DelayPolicy.EXHAUSTIVE.value:
        try:
            check_exhaustive_bounds(c.n, c.epochs, net.delta)
        except ValueError as exc:
            raise ConfigError("network.policy", str(exc)) from None
    a = c.adversary
    need(a.model in MODELS, "adversary.model", f"must be one of {MODELS}")
    need(len(set(a.players)) == len(a.players), "adversary.players", "duplicate player")
    need(all(0 <= p < c.n for p in a.players), "adversary.players", "player id out of range")
    if a.model == "none":
        need(not a.players, "adversary.players", "model 'none' takes no players")
    if a.model == "crash":
        need(len(a.crash_rounds) == len(a.players), "adversary.crash_rounds", "one round per crashed player")
        need(all(r >= 0 for r in a.crash_rounds), "adversary.crash_rounds", "must be >= 0")
    if a.model in ("rational",):
        need(c.variant == "rft", "adversary.model", "rational faults need the rft variant")
    if a.wrong_key_victim is not None:
        need(0 <= a.wrong_key_victim < c.n and a.wrong_key_victim not in a.players,
             "adversary.wrong_key_victim", "must be an honest player")
        need(a.wrong_key_function in fam, "adversary.wrong_key_function",
             f"unknown function {a.wrong_key_function!r}")
    try:
        Fraction(a.beta1), Fraction(a.beta2)
    except (ValueError, ZeroDivisionError):
        raise ConfigError("adversary.beta1", "beta weights must be fractions like '1/2' or '0.1'") from None
    if a.model != "none":
        try:
            if a.model in ("rational", "byzantine-demo"):
                c.rational()
            if a.model != "byzantine-demo":
                check_fault_bound(Variant(c.variant), c.n, a.players, c.m)
        except AdversaryConfigError as exc:
            raise ConfigError("adversary", str(exc)) from None
    w = c.workload
    need(w.txs_per_epoch >= 0, "workload.txs_per_epoch", "must be >= 0")
    need(w.accounts >= 2, "workload.accounts", "need at least two accounts")
    need(w.max_amount >= 1, "workload.max_amount", "must be >= 1")
    need(w.initial_balance >= 0, "workload.initial_balance", "must be >= 0")


_SECTIONS = {"network": NetworkSection, "family": FamilySection, "adversary": AdversarySection,
             "workload": WorkloadSection}


def _section(cls, data: Mapping[str, Any], where: str):
    known = set(cls.__dataclass_fields__)
    for k in data:
        if k not in known:
            raise ConfigError(f"{where}.{k}", "unknown key")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        if k in ("beta1", "beta2"):
            v = str(v)
        kw[k] = v
    return cls(**kw)


def from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    data = dict(data)
    kw: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        sec = data.pop(name, {})
        if not isinstance(sec, Mapping):
            raise ConfigError(name, "must be a table")
        kw[name] = _section(cls, sec, name)
    out = data.pop("output", None)
    if isinstance(out, Mapping):
        kw["output"] = out.get("dir", "out")
    elif out is not None:
        kw["output"] = out
    known = set(ScenarioConfig.__dataclass_fields__)
    for k, v in data.items():
        if k not in known:
            raise ConfigError(k, "unknown key")
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return ScenarioConfig(**kw)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def load(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(p), f"invalid TOML: {exc}") from None
    return from_dict(data)


def from_json(text: str) -> ScenarioConfig:
    return from_dict(json.loads(text))


def first_epoch_led_by(candidates, m: int, start: int = 1, limit: int = 10_000) -> tuple[int, int]:
    from .consensus import elect_leader
    for e in range(start, limit):
        leader = elect_leader(e, m)
        if leader in candidates:
            return e, leader
    raise ValueError("no such epoch")


def attack2_config(base: ScenarioConfig | None = None, verkey: bool = False) -> ScenarioConfig:
    """A rational head leader hands a decrement key to an honest head who leads later."""
    base = base or ScenarioConfig(name="attack2", variant="rft", n=7, m=3, epochs=8)
    m = base.m
    if m < 3:
        raise ConfigError("m", "the wrong-key scenario needs three head players")
    from .consensus import elect_leader
    e1 = first_epoch_led_by(range(m), m)[0]
    attacker = elect_leader(e1, m)
    # victim: the next distinct head to lead after the attacker
    e2 = e1 + 1
    while elect_leader(e2, m) == attacker:
        e2 += 1
    victim = elect_leader(e2, m)
    adv = replace(base.adversary, model="rational", players=(attacker,), wrong_key_victim=victim,
                  wrong_key_function=DECREMENT, verkey=verkey)
    return replace(base, name=f"attack2-verkey-{'on' if verkey else 'off'}", variant="rft",
                   family=replace(base.family, decrement=True), adversary=adv,
                   epochs=max(base.epochs, e2 + 3))


def attack1_config(leak: bool = True) -> ScenarioConfig:
    """A token-sum player leaks its function key after finalization; player 3 holds null."""
    views = ("token-sum", NULL)
    adv = AdversarySection(model="byzantine-demo", players=(2,), leak_epoch=1) if leak else AdversarySection()
    return ScenarioConfig(name="attack1" + ("" if leak else "-control"), variant="rft", n=4, m=2, epochs=6,
                          views=views, adversary=adv)
