"""Functional blockchain consensus with credential-dependent payload views."""
from .chain import Metablock, MetaChainState, Variant, finalize
from .config import ConfigError, ScenarioConfig, load
from .consensus import Behavior, Player, elect_leader
from .simulation import World, simulate
from .views import Payload, Transaction, ViewFamily, apply_view, default_family

__all__ = [
    "Behavior", "ConfigError", "Metablock", "MetaChainState", "Payload", "Player", "ScenarioConfig",
    "Transaction", "Variant", "ViewFamily", "World", "apply_view", "default_family", "elect_leader",
    "finalize", "load", "simulate",
]
