"""Shared builders for chain-level tests."""
import itertools
import random

from sightsteeple.chain import MetaChainState, Variant, build_metablock, genesis_chain_digest, make_vote
from sightsteeple.config import ScenarioConfig
from sightsteeple.crypto import generate_player_keys
from sightsteeple.simulation import make_genesis
from sightsteeple.views import Payload


class Net:
    def __init__(self, variant="cft", n=4, m=2, views=("token-sum", "null"), seed=0):
        self.config = ScenarioConfig(variant=variant, n=n, m=m, views=views)
        rng = random.Random(seed)
        self.keys = [generate_player_keys(i, rng) for i in range(n)]
        self.genesis = make_genesis(self.config, self.keys)
        self.variant = Variant(variant)
        signed = self.variant is Variant.RFT
        self.gvotes = [make_vote(k, 0, self.genesis.digest, True if signed else None, signed) for k in self.keys]
        self.rng = random.Random(seed + 1)
        self._salt = itertools.count()

    def state(self):
        return MetaChainState(self.genesis, self.gvotes)

    def block(self, parent, e, txs=Payload(), leader=0, **kw):
        digests = [genesis_chain_digest(self.genesis.digest)] * self.config.n
        return build_metablock(self.variant, self.keys[leader], e, parent, txs, self.genesis, digests,
                               self.rng, **kw)

    def vote(self, i, block, verdict=True):
        signed = self.variant is Variant.RFT
        return make_vote(self.keys[i], block.epoch, block.digest, verdict if signed else None, signed)

    def notarize(self, state, block):
        state.add_block(block)
        for i in range(self.config.n):
            state.add_vote(self.vote(i, block))
