"""Deterministic in-process chain with a flat gas model and seeded latency.

Blocks are sealed at every multiple of ``block_interval_ms`` on a simulated
clock. A submitted transaction waits a uniformly drawn number of blocks and
its receipt becomes visible to clients after a uniformly drawn network
overhead. EVM bytecode is never executed: the W2E suite is emulated by
:class:`~tokenbench.token.TokenEconomy` and every token operation is charged
a flat gas constant from the operation-cost table.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field
from decimal import Decimal
from types import MappingProxyType
from typing import Mapping

from . import errors
from .token import TokenEconomy, contract_address_for, normalize_address

log = logging.getLogger(__name__)

TX_BASE_GAS = 21_000
ZERO_BYTE_GAS = 4
NONZERO_BYTE_GAS = 16
CREATE_GAS = 32_000
CODE_DEPOSIT_GAS_PER_BYTE = 200
GWEI = 10**9

# Chosen so that buy > list > cancel, the ordering every network shows for
# the three marketplace functions. Semantic deployments and calls are charged
# exactly these amounts; opaque bytecode deployments use intrinsic_gas().
DEFAULT_OP_COSTS = MappingProxyType({
    "deploy_erc20": 1_200_000,
    "deploy_erc721": 1_150_000,
    "transfer": 51_000,
    "approve": 46_000,
    "transfer_from": 60_000,
    "mint_dmd": 52_000,
    "buy_dmd": 56_000,
    "mint_pet": 98_000,
    "nft_approve": 48_000,
    "nft_transfer": 62_000,
    "list_nft": 90_000,
    "buy_nft": 115_000,
    "cancel_listing": 60_000,
    "grant_reward": 85_000,
})


def intrinsic_gas(
    payload: bytes,
    is_deployment: bool = False,
    deployed_code_size: int = 0,
    op_cost: int = 0,
    gas_limit: int | None = None,
) -> int:
    zeros = payload.count(0)
    gas = TX_BASE_GAS + ZERO_BYTE_GAS * zeros + NONZERO_BYTE_GAS * (len(payload) - zeros)
    if is_deployment:
        gas += CREATE_GAS + CODE_DEPOSIT_GAS_PER_BYTE * deployed_code_size
    gas += op_cost
    if gas_limit is not None and gas > gas_limit:
        raise errors.GasLimitExceeded(f"needs {gas} gas, limit {gas_limit}")
    return gas


def fee_gwei(gas_used: int, gas_price_gwei) -> Decimal:
    return Decimal(gas_used) * Decimal(str(gas_price_gwei))


def _fee_wei(gas: int, price: Decimal, rounding=math.floor) -> int:
    return int(rounding(Decimal(gas) * price * GWEI))


@dataclass(frozen=True)
class ChainConfig:
    block_interval_ms: int
    gas_price_gwei: Decimal
    inclusion_blocks_min: int = 1
    inclusion_blocks_max: int = 1
    overhead_ms_min: int = 0
    overhead_ms_max: int = 0
    rng_seed: int = 0
    chain_id: int = 1337
    op_costs: Mapping[str, int] = DEFAULT_OP_COSTS

    def __post_init__(self):
        object.__setattr__(self, "gas_price_gwei", Decimal(str(self.gas_price_gwei)))
        object.__setattr__(self, "op_costs", MappingProxyType({**DEFAULT_OP_COSTS, **self.op_costs}))
        if self.block_interval_ms <= 0:
            raise errors.InvalidConfig("block_interval_ms must be positive")
        if self.gas_price_gwei < 0:
            raise errors.InvalidConfig("gas price must be non-negative")
        if self.inclusion_blocks_min < 1 or self.inclusion_blocks_min > self.inclusion_blocks_max:
            raise errors.InvalidConfig("need 1 <= inclusion_blocks_min <= inclusion_blocks_max")
        if self.overhead_ms_min < 0 or self.overhead_ms_min > self.overhead_ms_max:
            raise errors.InvalidConfig("need 0 <= overhead_ms_min <= overhead_ms_max")
        if not 0 <= self.rng_seed < 2**64:
            raise errors.InvalidConfig("rng_seed must fit in 64 bits")

    def expected_latency_ms(self) -> float:
        """Closed-form mean latency for a submission right after a block is sealed."""
        blocks = (self.inclusion_blocks_min + self.inclusion_blocks_max) / 2
        return blocks * self.block_interval_ms + (self.overhead_ms_min + self.overhead_ms_max) / 2

    def max_latency_ms(self) -> int:
        return self.inclusion_blocks_max * self.block_interval_ms + self.overhead_ms_max

    def with_seed(self, seed: int) -> "ChainConfig":
        return ChainConfig(**{**self.__dict__, "rng_seed": seed})

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        return cls(
            block_interval_ms=d["blockIntervalMs"],
            gas_price_gwei=Decimal(str(d["gasPriceGwei"])),
            inclusion_blocks_min=d.get("inclusionBlocksMin", 1),
            inclusion_blocks_max=d.get("inclusionBlocksMax", d.get("inclusionBlocksMin", 1)),
            overhead_ms_min=d.get("overheadMsMin", 0),
            overhead_ms_max=d.get("overheadMsMax", d.get("overheadMsMin", 0)),
            rng_seed=d.get("rngSeed", 0),
            chain_id=d.get("chainId", 1337),
            op_costs=d.get("opCosts", {}),
        )

    def to_dict(self) -> dict:
        return {
            "blockIntervalMs": self.block_interval_ms,
            "gasPriceGwei": str(self.gas_price_gwei),
            "inclusionBlocksMin": self.inclusion_blocks_min,
            "inclusionBlocksMax": self.inclusion_blocks_max,
            "overheadMsMin": self.overhead_ms_min,
            "overheadMsMax": self.overhead_ms_max,
            "rngSeed": self.rng_seed,
            "chainId": self.chain_id,
            "opCosts": dict(self.op_costs),
        }


@dataclass(frozen=True)
class Transaction:
    sender: str
    to: str | None
    payload: bytes = b""
    value_wei: int = 0
    gas_limit: int = 30_000_000
    nonce: int = 0

    def tx_hash(self, chain_id: int) -> str:
        blob = json.dumps(
            [chain_id, self.sender, self.to, self.payload.hex(), self.value_wei, self.gas_limit, self.nonce]
        ).encode()
        return "0x" + hashlib.sha256(blob).hexdigest()


def call_payload(op: str, args: dict | None = None) -> bytes:
    """Wire encoding of a token-operation call inside the simulator."""
    return json.dumps({"op": op, "args": args or {}}, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class Receipt:
    tx_hash: str
    block_number: int | None
    status: str
    gas_used: int
    fee_gwei: Decimal
    submitted_at_ms: int
    confirmed_at_ms: int | None
    contract_address: str | None = None
    revert_reason: str | None = None
    return_value: object = None
    gas_price_gwei: Decimal | None = None
    # first time a polling client saw the receipt; set by the gateway
    observed_at_ms: int | None = None

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @property
    def measured_latency_ms(self) -> int | None:
        if self.observed_at_ms is None:
            return None
        return self.observed_at_ms - self.submitted_at_ms

    def to_dict(self) -> dict:
        return {
            "txHash": self.tx_hash,
            "blockNumber": self.block_number,
            "status": self.status,
            "gasUsed": self.gas_used,
            "gasPriceGwei": None if self.gas_price_gwei is None else str(self.gas_price_gwei),
            "feeGwei": str(self.fee_gwei),
            "submittedAtMs": self.submitted_at_ms,
            "confirmedAtMs": self.confirmed_at_ms,
            "contractAddress": self.contract_address,
            "revertReason": self.revert_reason,
            "returnValue": self.return_value,
            "observedAtMs": self.observed_at_ms,
        }


def confirmation_latency(receipt: Receipt | None) -> int:
    if receipt is None or receipt.confirmed_at_ms is None:
        raise errors.NotConfirmed("transaction not confirmed")
    return receipt.confirmed_at_ms - receipt.submitted_at_ms


@dataclass
class Block:
    number: int
    timestamp_ms: int
    tx_hashes: list[str] = field(default_factory=list)
    events: list = field(default_factory=list)


@dataclass
class _Pending:
    seq: int
    tx: Transaction
    tx_hash: str
    gas: int
    reserved_wei: int
    inclusion_block: int
    overhead_ms: int
    submitted_at_ms: int


class SimChain:
    def __init__(self, config: ChainConfig):
        self.config = config
        self.rng = random.Random(config.rng_seed)
        self.now_ms = 0
        self.head = 0
        self.native: dict[str, int] = {}
        self.nonces: dict[str, int] = {}
        self.contracts: dict[str, object] = {}
        self.blocks: list[Block] = [Block(0, 0)]
        self._semantic_code: dict[bytes, tuple[str, dict]] = {}
        self._pending: dict[str, _Pending] = {}
        self._receipts: dict[str, Receipt] = {}
        self._reserved: dict[str, int] = {}
        self._last_inclusion: dict[str, int] = {}
        self._seq = 0

    # accounts

    def faucet(self, address: str, wei: int) -> None:
        address = normalize_address(address)
        self.native[address] = self.native.get(address, 0) + wei

    def nonce_of(self, address: str) -> int:
        return self.nonces.get(address.lower(), 0)

    def native_of(self, address: str) -> int:
        return self.native.get(address.lower(), 0)

    def economy(self, address: str) -> TokenEconomy:
        c = self.contracts.get(address.lower())
        if not isinstance(c, TokenEconomy):
            raise errors.UnknownOperation(f"no token contract at {address}")
        return c

    def register_code(self, bytecode: bytes, standard: str, ctor: dict | None = None) -> None:
        """Mark ``bytecode`` as W2E suite code so that deploying it instantiates a TokenEconomy.

        Constructor arguments follow the code as 32-byte words; for ERC721 a
        single address word links the pets to an existing DMD token contract.
        """
        self._semantic_code[bytes(bytecode)] = (standard.upper(), ctor or {})

    def _semantic(self, payload: bytes):
        for code, (standard, ctor) in self._semantic_code.items():
            if payload[: len(code)] == code:
                return standard, ctor, payload[len(code):]
        return None

    # gas

    def estimate_gas(self, tx: Transaction) -> int:
        costs = self.config.op_costs
        if tx.to is None:
            sem = self._semantic(tx.payload)
            if sem is not None:
                return costs[f"deploy_{sem[0].lower()}"]
            return intrinsic_gas(tx.payload, True, len(tx.payload))
        if isinstance(self.contracts.get(tx.to), TokenEconomy):
            try:
                op = json.loads(tx.payload)["op"]
            except (ValueError, KeyError, TypeError):
                op = None
            if op in costs:
                return costs[op]
        return intrinsic_gas(tx.payload)

    # pool

    def submit_tx(self, tx: Transaction) -> str:
        sender = normalize_address(tx.sender)
        expected = self.nonce_of(sender)
        if tx.nonce < expected:
            raise errors.NonceTooLow(f"nonce {tx.nonce} < account nonce {expected}")
        if tx.nonce > expected:
            raise errors.NonceGap(f"nonce {tx.nonce} > account nonce {expected}")
        gas = self.estimate_gas(tx)
        if gas > tx.gas_limit:
            raise errors.GasLimitExceeded(f"needs {gas} gas, limit {tx.gas_limit}")
        price = self.config.gas_price_gwei
        reserve = tx.value_wei + _fee_wei(tx.gas_limit, price, math.ceil)
        free = self.native_of(sender) - self._reserved.get(sender, 0)
        if free < reserve:
            raise errors.InsufficientFunds(f"{sender} has {free} wei free, needs {reserve}")
        h = tx.tx_hash(self.config.chain_id)
        n = self.rng.randint(self.config.inclusion_blocks_min, self.config.inclusion_blocks_max)
        overhead = self.rng.randint(self.config.overhead_ms_min, self.config.overhead_ms_max)
        # a sender's transactions are included in nonce order
        block = max(self.head + n, self._last_inclusion.get(sender, 0))
        self._last_inclusion[sender] = block
        self._seq += 1
        self._pending[h] = _Pending(self._seq, tx, h, gas, reserve, block, overhead, self.now_ms)
        self._reserved[sender] = self._reserved.get(sender, 0) + reserve
        self.nonces[sender] = expected + 1
        return h

    def is_pending(self, tx_hash: str) -> bool:
        return tx_hash in self._pending

    def receipt(self, tx_hash: str) -> Receipt | None:
        """The receipt once the including block is sealed, else ``None``."""
        return self._receipts.get(tx_hash)

    def visible_receipt(self, tx_hash: str, at_ms: int) -> Receipt | None:
        r = self._receipts.get(tx_hash)
        if r is None or r.confirmed_at_ms > at_ms:
            return None
        return r

    def known(self, tx_hash: str) -> bool:
        return tx_hash in self._pending or tx_hash in self._receipts

    # clock

    def block_time(self, number: int) -> int:
        return number * self.config.block_interval_ms

    def next_block_time(self) -> int:
        return self.block_time(self.head + 1)

    def advance_to(self, time_ms: int) -> list[Block]:
        if time_ms < self.now_ms:
            raise errors.ClockRegression(f"{time_ms} < {self.now_ms}")
        produced = []
        while self.block_time(self.head + 1) <= time_ms:
            produced.append(self._seal(self.head + 1))
        self.now_ms = time_ms
        return produced

    def blocks_since(self, number: int) -> list[Block]:
        return self.blocks[number + 1:]

    def _seal(self, number: int) -> Block:
        block = Block(number, self.block_time(number))
        due = sorted((p for p in self._pending.values() if p.inclusion_block <= number), key=lambda p: p.seq)
        for p in due:
            del self._pending[p.tx_hash]
            receipt, events = self._apply(p, block)
            for e in events:
                e.block, e.tx_hash, e.log_index = number, p.tx_hash, len(block.events)
                block.events.append(e)
            block.tx_hashes.append(p.tx_hash)
            self._receipts[p.tx_hash] = receipt
        self.head = number
        self.blocks.append(block)
        return block

    def _apply(self, p: _Pending, block: Block) -> tuple[Receipt, list]:
        tx = p.tx
        sender = tx.sender.lower()
        price = self.config.gas_price_gwei
        self._reserved[sender] -= p.reserved_wei
        if not self._reserved[sender]:
            del self._reserved[sender]
        self.native[sender] -= _fee_wei(p.gas, price)
        status, reason, value, address, events = "success", None, None, None, []

        if tx.to is None:
            address = contract_address_for(sender, tx.nonce)
            sem = self._semantic(tx.payload)
            if sem is None:
                self.contracts[address] = tx.payload
            else:
                standard, ctor, args = sem
                linked = self.contracts.get("0x" + args[12:32].hex()) if len(args) >= 32 else None
                if standard == "ERC721" and isinstance(linked, TokenEconomy):
                    if linked.operator != sender:
                        status, reason, address = "reverted", "NotOperator", None
                    else:
                        # pets and marketplace attach to the token's state; approvals target this address
                        linked.market_address = address
                        self.contracts[address] = linked
                else:
                    self.contracts[address] = TokenEconomy(sender, address=address, native=self.native, **ctor)
            if address is not None:
                self._move_native(sender, address, tx.value_wei)
        elif isinstance(self.contracts.get(tx.to), TokenEconomy):
            econ = self.contracts[tx.to]
            mark = len(econ.events)
            try:
                call = json.loads(tx.payload)
                op, args = call["op"], dict(call.get("args", {}))
                if op == "buy_dmd":
                    args["paidWei"] = tx.value_wei
                elif tx.value_wei:
                    raise errors.NotPayable(op)
                value = _jsonable(econ.apply(op, sender, args))
            except errors.TokenError as exc:
                status, reason = "reverted", exc.code
            except (ValueError, KeyError, TypeError) as exc:
                status, reason = "reverted", f"BadPayload: {exc}"
            events = econ.events[mark:]
        else:
            self._move_native(sender, tx.to, tx.value_wei)

        receipt = Receipt(
            tx_hash=p.tx_hash,
            block_number=block.number,
            status=status,
            gas_used=p.gas,
            fee_gwei=fee_gwei(p.gas, price),
            submitted_at_ms=p.submitted_at_ms,
            confirmed_at_ms=block.timestamp_ms + p.overhead_ms,
            contract_address=address,
            revert_reason=reason,
            return_value=value,
            gas_price_gwei=price,
        )
        if status != "success":
            log.debug("tx %s reverted: %s", p.tx_hash[:10], reason)
        return receipt, events

    def _move_native(self, frm: str, to: str, wei: int) -> None:
        if wei:
            self.native[frm] -= wei
            self.native[to] = self.native.get(to, 0) + wei


def _jsonable(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if hasattr(value, "to_dict"):
        return value.to_dict()
    if hasattr(value, "__dataclass_fields__"):
        from dataclasses import asdict

        return asdict(value)
    return repr(value)
