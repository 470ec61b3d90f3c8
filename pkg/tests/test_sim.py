import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokenbench import errors
from tokenbench.sim import (
    DEFAULT_OP_COSTS,
    ChainConfig,
    SimChain,
    Transaction,
    call_payload,
    confirmation_latency,
    fee_gwei,
    intrinsic_gas,
)

ALICE = "0x" + "a1" * 20
BOB = "0x" + "b2" * 20


def cfg(**kw):
    base = dict(block_interval_ms=12000, gas_price_gwei="2.5", inclusion_blocks_min=1,
                inclusion_blocks_max=2, overhead_ms_min=500, overhead_ms_max=1500, rng_seed=9)
    return ChainConfig(**{**base, **kw})


def funded(config=None):
    chain = SimChain(config or cfg())
    chain.faucet(ALICE, 10**24)
    chain.faucet(BOB, 10**24)
    return chain


def send(chain, sender, to=None, payload=b"", value=0):
    tx = Transaction(sender, to, payload, value, nonce=chain.nonce_of(sender))
    gas = chain.estimate_gas(tx)
    return chain.submit_tx(Transaction(sender, to, payload, value, gas_limit=gas, nonce=tx.nonce))


# gas and fees

def test_intrinsic_gas_examples():
    assert intrinsic_gas(b"") == 21000
    assert intrinsic_gas(b"\x00") == 21004
    assert intrinsic_gas(b"\x01") == 21016
    assert intrinsic_gas(b"", True, 100) == 73000
    assert intrinsic_gas(b"", op_cost=5) == 21005
    with pytest.raises(errors.GasLimitExceeded):
        intrinsic_gas(b"", gas_limit=20999)


def test_fee_examples():
    assert fee_gwei(21000, Decimal("2.5")) == 52500
    assert fee_gwei(123456, 0) == 0


def test_fee_monotone_grid():
    gases = [0, 1, 21000, 115000, 10**7]
    prices = [Decimal(p) for p in ("0", "0.0000001276", "0.5", "1.038", "14.55")]
    for i, g in enumerate(gases):
        for j, p in enumerate(prices):
            if i:
                assert fee_gwei(g, p) >= fee_gwei(gases[i - 1], p)
            if j:
                assert fee_gwei(g, p) >= fee_gwei(g, prices[j - 1])


def test_op_cost_table_preserves_market_order():
    c = DEFAULT_OP_COSTS
    assert c["buy_nft"] > c["list_nft"] > c["cancel_listing"]
    assert (c["deploy_erc20"], c["buy_nft"], c["list_nft"], c["cancel_listing"], c["transfer"]) == \
        (1_200_000, 115_000, 90_000, 60_000, 51_000)


# config

@pytest.mark.parametrize("bad", [
    dict(block_interval_ms=0),
    dict(gas_price_gwei=-1),
    dict(inclusion_blocks_min=0),
    dict(inclusion_blocks_min=3, inclusion_blocks_max=2),
    dict(overhead_ms_min=10, overhead_ms_max=5),
    dict(rng_seed=2**64),
])
def test_config_validation(bad):
    with pytest.raises(errors.InvalidConfig):
        cfg(**bad)


def test_config_dict_round_trip():
    c = cfg(op_costs={"buy_nft": 1})
    assert ChainConfig.from_dict(c.to_dict()) == c
    assert c.op_costs["buy_nft"] == 1 and c.op_costs["list_nft"] == 90_000


def test_closed_form_expectation():
    assert cfg().expected_latency_ms() == 19000
    assert cfg().max_latency_ms() == 25500


# clock

def test_advance_produces_blocks():
    chain = SimChain(cfg())
    assert len(chain.advance_to(36000)) == 3
    assert chain.advance_to(36000) == []
    with pytest.raises(errors.ClockRegression):
        chain.advance_to(1000)


def test_receipt_appears_with_block():
    chain = funded(cfg(inclusion_blocks_min=1, inclusion_blocks_max=1, overhead_ms_min=0, overhead_ms_max=0))
    h = send(chain, ALICE, BOB, value=5)
    chain.advance_to(11999)
    assert chain.receipt(h) is None and chain.is_pending(h)
    chain.advance_to(12000)
    r = chain.receipt(h)
    assert r.block_number == 1 and confirmation_latency(r) <= 12000
    assert chain.native_of(BOB) == 10**24 + 5


def test_confirmation_latency_needs_receipt():
    with pytest.raises(errors.NotConfirmed):
        confirmation_latency(None)


# pool rules

def test_nonce_rules():
    chain = funded()
    with pytest.raises(errors.NonceGap):
        chain.submit_tx(Transaction(ALICE, BOB, nonce=1))
    send(chain, ALICE, BOB)
    with pytest.raises(errors.NonceTooLow):
        chain.submit_tx(Transaction(ALICE, BOB, nonce=0))


def test_insufficient_funds():
    chain = SimChain(cfg())
    chain.faucet(ALICE, 1000)
    with pytest.raises(errors.InsufficientFunds):
        chain.submit_tx(Transaction(ALICE, BOB, gas_limit=21000, nonce=0))
    assert chain.nonce_of(ALICE) == 0


def test_gas_limit_too_small():
    chain = funded()
    with pytest.raises(errors.GasLimitExceeded):
        chain.submit_tx(Transaction(ALICE, BOB, payload=b"\x01", gas_limit=21000, nonce=0))


def test_sender_order_preserved():
    chain = funded(cfg(inclusion_blocks_min=1, inclusion_blocks_max=5, rng_seed=1))
    hashes = [send(chain, ALICE, BOB, value=i) for i in range(30)]
    chain.advance_to(10**6)
    blocks = [chain.receipt(h).block_number for h in hashes]
    assert blocks == sorted(blocks)


# semantic contracts

def _deploy_token(chain):
    code = b"\x60\x80token"
    chain.register_code(code, "ERC20")
    h = send(chain, ALICE, None, code)
    chain.advance_to(chain.now_ms + 10**5)
    return chain.receipt(h).contract_address


def test_reverted_call_charges_gas_but_keeps_state():
    chain = funded()
    token = _deploy_token(chain)
    econ = chain.economy(token)
    state, native = econ.state(), chain.native_of(BOB)
    h = send(chain, BOB, token, call_payload("mint_dmd", {"to": BOB, "amount": 5}))
    chain.advance_to(chain.now_ms + 10**5)
    r = chain.receipt(h)
    assert r.status == "reverted" and r.revert_reason == "NotOperator"
    assert r.gas_used == DEFAULT_OP_COSTS["mint_dmd"]
    assert econ.state() == state
    assert native - chain.native_of(BOB) == int(r.fee_gwei * 10**9)


def test_value_on_non_payable_reverts():
    chain = funded()
    token = _deploy_token(chain)
    h = send(chain, ALICE, token, call_payload("mint_dmd", {"to": BOB, "amount": 5}), value=1)
    chain.advance_to(chain.now_ms + 10**5)
    assert chain.receipt(h).revert_reason == "NotPayable"


def test_buy_dmd_through_value():
    chain = funded()
    token = _deploy_token(chain)
    h = send(chain, BOB, token, call_payload("buy_dmd"), value=5 * 10**16)
    chain.advance_to(chain.now_ms + 10**5)
    assert chain.receipt(h).return_value == 50
    assert chain.economy(token).balance_of(BOB) == 50


def test_opaque_deploy_uses_size_formula():
    chain = funded()
    code = bytes(range(1, 101))
    h = send(chain, ALICE, None, code)
    chain.advance_to(10**6)
    assert chain.receipt(h).gas_used == 21000 + 16 * 100 + 32000 + 200 * 100


# replay oracle for the timing/fee model

def replay(config, script):
    """Expected receipts computed straight from the seeded draws, no simulator involved."""
    rng = random.Random(config.rng_seed)
    now, last, out = 0, {}, {}
    for step in script:
        if step[0] == "advance":
            now = step[1]
            continue
        _, sender, value = step
        head = now // config.block_interval_ms
        n = rng.randint(config.inclusion_blocks_min, config.inclusion_blocks_max)
        over = rng.randint(config.overhead_ms_min, config.overhead_ms_max)
        block = max(head + n, last.get(sender, 0))
        last[sender] = block
        out.setdefault(sender, []).append(
            (block, block * config.block_interval_ms + over, now, 21000, Decimal(21000) * config.gas_price_gwei))
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), moves=st.lists(st.tuples(st.booleans(), st.integers(0, 30000)),
                                                      min_size=1, max_size=40))
def test_interleaved_script_matches_replay(seed, moves):
    config = cfg(rng_seed=seed, inclusion_blocks_max=4, overhead_ms_max=4000)
    script, now = [], 0
    for is_adv, x in moves:
        if is_adv:
            now += x
            script.append(("advance", now))
        else:
            script.append(("send", ALICE if x % 2 else BOB, x))
    chain = funded(config)
    got = {}
    for step in script:
        if step[0] == "advance":
            chain.advance_to(step[1])
        else:
            got.setdefault(step[1], []).append(send(chain, step[1], "0x" + "cc" * 20, value=step[2]))
    chain.advance_to(now + 10**6)
    expected = replay(config, script)
    for sender, hashes in got.items():
        rs = [chain.receipt(h) for h in hashes]
        assert [(r.block_number, r.confirmed_at_ms, r.submitted_at_ms, r.gas_used, r.fee_gwei) for r in rs] \
            == expected[sender]
        for r in rs:
            assert r.fee_gwei == r.gas_used * r.gas_price_gwei
            assert 0 <= confirmation_latency(r)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**64 - 1))
def test_latency_bound_on_aligned_submissions(seed):
    config = cfg(rng_seed=seed)
    chain = funded(config)
    for _ in range(20):
        chain.advance_to(chain.next_block_time())
        h = send(chain, ALICE, BOB)
        chain.advance_to(chain.now_ms + config.max_latency_ms())
        assert 0 <= confirmation_latency(chain.receipt(h)) <= config.max_latency_ms()


def test_determinism_byte_identical():
    def run():
        chain = funded(cfg(rng_seed=77))
        hs = []
        for i in range(50):
            hs.append(send(chain, ALICE if i % 3 else BOB, BOB, value=i))
            chain.advance_to(chain.now_ms + 700 * (i % 5))
        chain.advance_to(chain.now_ms + 10**6)
        return repr([chain.receipt(h).to_dict() for h in hs]).encode()

    assert run() == run()


def test_closed_form_mean_thousand_trials():
    config = cfg(rng_seed=123)
    chain = funded(config)
    lat = []
    for _ in range(1000):
        chain.advance_to(chain.next_block_time())
        h = send(chain, ALICE, BOB)
        chain.advance_to(chain.now_ms + config.max_latency_ms())
        lat.append(confirmation_latency(chain.receipt(h)))
    mean = sum(lat) / len(lat)
    assert abs(mean - 19000) <= 1900
