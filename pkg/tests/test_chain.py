import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from sightsteeple.chain import (
    ChainError, GenesisNotNotarized, Ledger, MetaChainState, NotHeadPlayer, Variant, apply_payload,
    derive_player_chain, finalize, find_double_spend, threshold_met,
)
from sightsteeple.crypto import fe_verify_key, pke_decrypt, FunctionKey
from sightsteeple.views import IDENTITY, Payload, Transaction

from helpers import Net


def test_threshold_examples():
    assert threshold_met(Variant.CFT, 4, 2)
    assert not threshold_met(Variant.CFT, 4, 1)
    assert threshold_met(Variant.CFT, 5, 3) and not threshold_met(Variant.CFT, 5, 2)
    assert not threshold_met(Variant.RFT, 6, 4, 1)
    assert threshold_met(Variant.RFT, 6, 4, 0)
    assert not threshold_met(Variant.RFT, 6, 3, 0)
    assert threshold_met(Variant.RFT, 7, 5) and not threshold_met(Variant.RFT, 7, 4)


@given(st.integers(1, 30), st.data())
def test_thresholds_against_fractions(n, data):
    from fractions import Fraction
    yes = data.draw(st.integers(0, n))
    no = data.draw(st.integers(0, n - yes))
    assert threshold_met(Variant.CFT, n, yes) == (Fraction(yes, n) >= Fraction(1, 2))
    assert threshold_met(Variant.RFT, n, yes, no) == (Fraction(yes, n) >= Fraction(2, 3) and no == 0)


def test_genesis_needs_threshold_votes():
    net = Net()
    with pytest.raises(GenesisNotNotarized):
        MetaChainState(net.genesis, net.gvotes[:1])
    MetaChainState(net.genesis, net.gvotes[:2])


def test_builder_covers_every_player_and_signs():
    net = Net("rft", n=5, m=2)
    b = net.block(net.genesis.digest, 1, Payload((Transaction("a", "b", 1, 0),)))
    assert b.covers(5) and len(b.entries) == 5
    assert b.signatures_valid(net.keys[0].verify_key)
    assert not b.signatures_valid(net.keys[1].verify_key)
    for i, entry in enumerate(b.entries):
        assert entry.function_id == net.genesis.function_for(i).id
        key = FunctionKey.decode(pke_decrypt(net.keys[i].decryption, entry.key_envelope), b.pp)
        assert fe_verify_key(b.pp, net.genesis.function_for(i), key)


def test_only_heads_build():
    net = Net()
    with pytest.raises(NotHeadPlayer):
        net.block(net.genesis.digest, 1, leader=3)


def test_rational_builder_keeps_honest_entries():
    net = Net("rft", n=4, m=2)
    fam = net.genesis.family
    b = net.block(net.genesis.digest, 1, key_functions={3: IDENTITY})
    for i, entry in enumerate(b.entries):
        key = FunctionKey.decode(pke_decrypt(net.keys[i].decryption, entry.key_envelope), b.pp)
        want = IDENTITY if i == 3 else net.genesis.function_for(i).id
        assert fe_verify_key(b.pp, fam[want], key)
        assert entry.function_id == net.genesis.function_for(i).id


def test_cft_notarization_two_of_four():
    net = Net()
    s = net.state()
    b = net.block(s.root, 1)
    s.add_block(b)
    assert s.add_vote(net.vote(0, b)) == []
    assert s.add_vote(net.vote(0, b)) == []  # duplicate
    assert s.add_vote(net.vote(1, b)) == [b.digest]
    assert s.chain_len[b.digest] == 1


def test_rft_single_no_blocks_notarization():
    net = Net("rft", n=6, m=2, views=("token-sum",))
    s = net.state()
    b = net.block(s.root, 1)
    s.add_block(b)
    s.add_vote(net.vote(5, b, False))
    for i in range(5):
        s.add_vote(net.vote(i, b))
    assert not s.is_notarized(b.digest)


def test_votes_for_unknown_block_are_buffered():
    net = Net()
    s = net.state()
    b = net.block(s.root, 1)
    for i in range(2):
        s.add_vote(net.vote(i, b))
    assert s.add_block(b) == [b.digest]


def test_vote_epoch_must_match_block():
    from sightsteeple.chain import make_vote
    net = Net()
    s = net.state()
    b = net.block(s.root, 2)
    s.add_block(b)
    for i in range(4):
        s.add_vote(make_vote(net.keys[i], 3, b.digest, None, False))
    assert not s.is_notarized(b.digest)


def test_parent_rules():
    net = Net()
    s = net.state()
    b = net.block(s.root, 2)
    s.add_block(b)
    with pytest.raises(ChainError):
        s.add_block(net.block(b.digest, 2))
    with pytest.raises(ChainError):
        s.add_block(net.block(b"\x00" * 32, 3))


# -- finalization oracle --------------------------------------------------------------

def oracle_finalized(tree, root):
    """tree: child -> (parent, epoch). Every root-to-node path with a consecutive
    epoch triple finalizes its prefix up to the middle block."""
    ep = {c: e for c, (_, e) in tree.items()}
    par = {c: p for c, (p, _) in tree.items()}

    def path(x):
        out = [x]
        while x != root:
            x = par[x]
            out.append(x)
        return out[::-1]

    best = [root]
    for c in tree:
        p = path(c)
        for i in range(3, len(p)):
            a, b, cc = p[i - 2], p[i - 1], p[i]
            if ep[a] + 1 == ep[b] == ep[cc] - 1 and len(p[:i]) > len(best):
                best = p[:i]
    return best


def _build(net, shape):
    """shape: list of (parent_index or None, epoch); all blocks notarized."""
    s = net.state()
    digests, tree = [], {}
    for parent, e in shape:
        pd = s.root if parent is None else digests[parent]
        b = net.block(pd, e)
        net.notarize(s, b)
        digests.append(b.digest)
        tree[b.digest] = (pd, e)
    finalize(s)
    return s, digests, tree


def test_finalize_examples():
    net = Net()
    s, d, _ = _build(net, [(None, 1), (0, 2), (1, 3)])
    assert s.finalized == [s.root, d[0], d[1]]
    s, d, _ = _build(net, [(None, 1), (0, 2), (1, 4)])
    assert s.finalized == [s.root]


def _shapes():
    # every tree of up to four blocks with strictly increasing epochs along edges
    for k in range(1, 5):
        for parents in itertools.product(*[range(-1, i) for i in range(k)]):
            for epochs in itertools.product(range(1, 6), repeat=k):
                if all(p < 0 or epochs[p] < epochs[i] for i, p in enumerate(parents)):
                    yield [(None if p < 0 else p, e) for p, e in zip(parents, epochs)]


def test_finalize_matches_bruteforce_oracle():
    net = Net()
    shapes = list(_shapes())
    rng = random.Random(0)
    for shape in rng.sample(shapes, 300):
        s, _, tree = _build(net, shape)
        want = oracle_finalized(tree, s.root)
        if s.conflicts:
            continue
        assert s.finalized == want, shape


def test_unnotarized_blocks_do_not_finalize():
    net = Net()
    s = net.state()
    a = net.block(s.root, 1)
    net.notarize(s, a)
    b = net.block(a.digest, 2)
    s.add_block(b)
    s.add_vote(net.vote(0, b))
    c = net.block(b.digest, 3)
    net.notarize(s, c)
    assert finalize(s) == []
    s.add_vote(net.vote(1, b))
    assert finalize(s) == [a.digest, b.digest]


def test_longest_tip_and_extends():
    net = Net()
    s = net.state()
    a = net.block(s.root, 1)
    net.notarize(s, a)
    b = net.block(s.root, 2)
    net.notarize(s, b)
    c = net.block(a.digest, 3)
    net.notarize(s, c)
    assert s.longest_tip() == c.digest
    assert s.extends_longest(c.digest) and not s.extends_longest(b.digest)
    assert s.is_ancestor(a.digest, c.digest) and not s.is_ancestor(b.digest, c.digest)


# -- double spending --------------------------------------------------------------------

def test_double_spend_detection():
    led = Ledger({"a": 10, "b": 0})
    assert find_double_spend(led, [Transaction("a", "b", 10, 0)]) is None
    assert find_double_spend(led, [Transaction("a", "b", 11, 0)]).startswith("overspend")
    assert find_double_spend(led, [Transaction("a", "b", 6, 0), Transaction("a", "b", 6, 1)]).startswith("overspend")
    # inflows earlier in the payload fund later outflows
    assert find_double_spend(led, [Transaction("a", "b", 10, 0), Transaction("b", "a", 5, 0)]) is None
    after = apply_payload(led, [Transaction("a", "b", 3, 0)])
    assert after.balances == {"a": 7, "b": 3}
    assert find_double_spend(after, [Transaction("a", "b", 1, 0)]).startswith("replay")
    assert led.balances == {"a": 10, "b": 0}


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc"), st.integers(0, 20)), max_size=8))
def test_valid_payload_never_drives_balance_negative(raw):
    txs = [Transaction(s, r, x, i) for i, (s, r, x) in enumerate(raw)]
    led = Ledger({"a": 15, "b": 5, "c": 0})
    if find_double_spend(led, txs) is None:
        assert all(v >= 0 for v in apply_payload(led, txs).balances.values())


# -- player chains ------------------------------------------------------------------------

def test_player_chain_views_and_flags():
    net = Net("rft", n=4, m=2, views=("token-sum", "null"))
    txs = Payload((Transaction("a", "b", 3, 0), Transaction("b", "c", 4, 0)))
    good = net.block(net.genesis.digest, 1, txs)
    bad = net.block(good.digest, 2, txs, key_functions={2: IDENTITY})
    chain = derive_player_chain(2, [good, bad], net.keys[2].decryption, net.genesis)
    assert chain.entries[0].view.value == 7
    assert chain.entries[1].view is None and "does not verify" in chain.entries[1].flag
    unverified = derive_player_chain(2, [good, bad], net.keys[2].decryption, net.genesis, verify=False)
    assert unverified.entries[1].view.value == txs
    assert chain.chain_digest() != unverified.chain_digest()
    assert derive_player_chain(3, [good], net.keys[3].decryption, net.genesis).entries[0].view.is_bottom
