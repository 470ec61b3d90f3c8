"""Backend-agnostic chain access: network profiles, artifacts, sim and JSON-RPC gateways.

Both gateways expose the same surface (``deploy``, ``call_function``,
``get_balance``, ``poll_receipt``) so that the benchmark, CLI and indexer
never care whether they talk to the in-process simulator or a live node.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Protocol

import requests

from . import errors
from .sim import DEFAULT_OP_COSTS, ChainConfig, Receipt, SimChain, Transaction, call_payload
from .token import READ_OPS, normalize_address

log = logging.getLogger(__name__)

SEMANTIC_STANDARDS = ("ERC20", "ERC721")
STANDARDS = ("ERC20", "ERC721", "ERC1155", "ERC777")
ENV_ENDPOINT_PREFIX = "TOKENBENCH_ENDPOINT_"
DEFAULT_POLL_INTERVAL_MS = 250


def default_profiles_path() -> Path:
    return Path(str(resources.files("tokenbench.data").joinpath("profiles.json")))


def default_artifact_dir() -> Path:
    return Path(str(resources.files("tokenbench.data").joinpath("artifacts")))


def env_var_for(name: str) -> str:
    return ENV_ENDPOINT_PREFIX + re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").upper()


@dataclass(frozen=True)
class NetworkProfile:
    name: str
    kind: str
    chain_id: int
    endpoint_url: str | None = None
    sim_config: ChainConfig | None = None
    poll_interval_ms: int = DEFAULT_POLL_INTERVAL_MS
    timeout_ms: int = 120_000
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("sim", "rpc"):
            raise errors.InvalidConfig(f"{self.name}: kind must be sim or rpc")
        if self.kind == "rpc" and not self.endpoint_url:
            raise errors.InvalidConfig(f"{self.name}: rpc profile needs endpointUrl")
        if self.kind == "sim" and self.sim_config is None:
            raise errors.InvalidConfig(f"{self.name}: sim profile needs a sim section")
        if self.poll_interval_ms <= 0 or self.timeout_ms <= 0:
            raise errors.InvalidConfig(f"{self.name}: poll interval and timeout must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkProfile":
        sim = d.get("sim")
        return cls(
            name=d["name"],
            kind=d["kind"],
            chain_id=d["chainId"],
            endpoint_url=d.get("endpointUrl"),
            sim_config=ChainConfig.from_dict({"chainId": d["chainId"], **sim}) if sim else None,
            poll_interval_ms=d.get("pollIntervalMs", DEFAULT_POLL_INTERVAL_MS),
            timeout_ms=d.get("timeoutMs", 120_000),
            description=d.get("networkConfig", ""),
        )

    def with_seed(self, seed: int) -> "NetworkProfile":
        if self.sim_config is None:
            return self
        return replace(self, sim_config=self.sim_config.with_seed(seed))


def load_profiles(path: str | Path | None = None, env: dict | None = None) -> dict[str, NetworkProfile]:
    """Profiles in file order. ``TOKENBENCH_ENDPOINT_<NAME>`` switches that profile to rpc at the given URL."""
    env = os.environ if env is None else env
    path = Path(path) if path else default_profiles_path()
    doc = json.loads(path.read_text())
    out: dict[str, NetworkProfile] = {}
    for entry in doc["profiles"]:
        url = env.get(env_var_for(entry["name"]))
        if url:
            # an endpoint override means "use the live network", not "simulate with a URL attached"
            entry = {**entry, "endpointUrl": url, "kind": "rpc"}
        p = NetworkProfile.from_dict(entry)
        if p.name in out:
            raise errors.InvalidConfig(f"duplicate profile name {p.name!r}")
        out[p.name] = p
    return out


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class ContractArtifact:
    name: str
    standard: str
    bytecode_hex: str
    abi: list = field(default_factory=list, hash=False)

    def __post_init__(self):
        h = self.bytecode_hex[2:] if self.bytecode_hex.startswith("0x") else self.bytecode_hex
        if not h or len(h) % 2 or not re.fullmatch(r"[0-9a-fA-F]+", h):
            raise errors.InvalidArtifact(f"{self.name}: bytecodeHex must be non-empty even-length hex")
        if self.standard not in STANDARDS:
            raise errors.InvalidArtifact(f"{self.name}: unknown standard {self.standard}")

    @property
    def bytecode(self) -> bytes:
        return bytes.fromhex(self.bytecode_hex.removeprefix("0x"))

    def function(self, op: str) -> dict:
        for entry in self.abi:
            if entry.get("op") == op or entry.get("name") == op:
                return entry
        raise errors.UnknownOperation(f"{self.name} has no function for {op}")


def load_artifact(path: str | Path) -> ContractArtifact:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
        return ContractArtifact(d["name"], d["standard"], d["bytecodeHex"], d.get("abi", []))
    except (OSError, ValueError, KeyError) as exc:
        raise errors.InvalidArtifact(f"{path}: {exc}") from exc


def load_artifacts(directory: str | Path | None = None) -> dict[str, ContractArtifact | errors.InvalidArtifact]:
    """Artifacts keyed by standard. A standard whose file fails to load maps to the error."""
    directory = Path(directory) if directory else default_artifact_dir()
    found: dict[str, ContractArtifact | errors.InvalidArtifact] = {
        s: errors.InvalidArtifact(f"no {s} artifact in {directory}") for s in STANDARDS
    }
    for path in sorted(directory.glob("*.json")):
        try:
            a = load_artifact(path)
        except errors.InvalidArtifact as exc:
            log.warning("skipping artifact: %s", exc)
            continue
        found[a.standard] = a
    return found


# ABI words: only the static types the W2E functions use

def encode_word(typ: str, value) -> bytes:
    if typ == "address":
        return bytes(12) + bytes.fromhex(normalize_address(value)[2:])
    if typ == "bool":
        return int(bool(value)).to_bytes(32, "big")
    if typ.startswith("uint"):
        return int(value).to_bytes(32, "big")
    raise errors.UnknownOperation(f"ABI type {typ} not supported")


def decode_word(typ: str, word: bytes):
    if typ == "address":
        return "0x" + word[12:32].hex()
    if typ == "bool":
        return bool(int.from_bytes(word[:32], "big"))
    return int.from_bytes(word[:32], "big")


def encode_call(entry: dict, args: dict) -> bytes:
    data = bytes.fromhex(entry["selector"].removeprefix("0x"))
    for inp in entry["inputs"]:
        data += encode_word(inp["type"], args[inp["name"]])
    return data


@dataclass(frozen=True)
class Balances:
    native_wei: int
    dmd: int


class Signer(Protocol):
    def sign(self, tx: dict) -> str:
        """Return the raw signed transaction as 0x-prefixed hex."""


class Gateway:
    """Common surface; see :class:`SimGateway` and :class:`RpcGateway`."""

    profile: NetworkProfile

    def deploy(self, artifact: ContractArtifact, deployer: str, ctor_args=()) -> Receipt:
        raise NotImplementedError

    def call_function(self, contract: str, op: str, args: dict | None = None, caller: str | None = None,
                      value_wei: int = 0):
        raise NotImplementedError

    def get_balance(self, address: str, token: str | None = None) -> Balances:
        raise NotImplementedError

    def poll_receipt(self, tx_hash: str) -> Receipt:
        raise NotImplementedError

    def align(self) -> None:
        """Wait for a fresh block boundary before a measured submission (no-op live)."""


def _ctor_bytes(ctor_args) -> bytes:
    return b"".join(encode_word(t, v) for t, v in ctor_args)


class SimGateway(Gateway):
    def __init__(self, profile: NetworkProfile, chain: SimChain | None = None):
        if profile.sim_config is None:
            raise errors.InvalidConfig(f"{profile.name} has no sim config")
        self.profile = profile
        self.chain = chain or SimChain(profile.sim_config)
        self._lock = threading.Lock()
        self.artifacts: dict[str, ContractArtifact] = {}

    def fund(self, address: str, wei: int) -> None:
        self.chain.faucet(address, wei)

    def align(self) -> None:
        self.chain.advance_to(self.chain.next_block_time())

    def send(self, sender: str, to: str | None, payload: bytes, value_wei: int = 0) -> str:
        sender = normalize_address(sender)
        with self._lock:
            nonce = self.chain.nonce_of(sender)
            probe = Transaction(sender, to, payload, value_wei, nonce=nonce)
            tx = replace(probe, gas_limit=self.chain.estimate_gas(probe))
            return self.chain.submit_tx(tx)

    def _confirm(self, tx_hash: str) -> Receipt:
        r = self.poll_receipt(tx_hash)
        if not r.ok:
            raise errors.Reverted(r.revert_reason or "reverted", r)
        return r

    def deploy(self, artifact, deployer, ctor_args=()):
        if artifact.standard in SEMANTIC_STANDARDS:
            self.chain.register_code(artifact.bytecode, artifact.standard)
        r = self._confirm(self.send(deployer, None, artifact.bytecode + _ctor_bytes(ctor_args)))
        self.artifacts[r.contract_address] = artifact
        return r

    def call_function(self, contract, op, args=None, caller=None, value_wei=0):
        args = dict(args or {})
        contract = contract.lower()
        if op in READ_OPS:
            return self.chain.economy(contract).read(op, args)
        if op == "buy_dmd":
            value_wei = args.pop("paidWei", value_wei)
        return self._confirm(self.send(caller, contract, call_payload(op, args), value_wei))

    def get_balance(self, address, token=None):
        dmd = self.chain.economy(token).balance_of(address) if token else 0
        return Balances(self.chain.native_of(address), dmd)

    def poll_receipt(self, tx_hash):
        chain = self.chain
        if not chain.known(tx_hash):
            raise errors.UnknownTransaction(tx_hash)
        start = chain.now_ms
        deadline = start + self.profile.timeout_ms
        t = start
        while True:
            chain.advance_to(t)
            r = chain.visible_receipt(tx_hash, t)
            if r is not None:
                return replace(r, observed_at_ms=t)
            if t >= deadline:
                raise errors.Timeout(f"{tx_hash} not confirmed within {self.profile.timeout_ms} ms")
            t = min(t + self.profile.poll_interval_ms, deadline)

    def events_since(self, block_number: int):
        return self.chain.blocks_since(block_number)

    @property
    def head(self) -> int:
        return self.chain.head


class NonceManager:
    """Hands out strictly sequential nonces per sender; the lock serializes sends."""

    def __init__(self, fetch):
        self._fetch = fetch
        self._next: dict[str, int] = {}
        self.lock = threading.Lock()

    def peek(self, sender: str) -> int:
        if sender not in self._next:
            self._next[sender] = self._fetch(sender)
        return self._next[sender]

    def commit(self, sender: str) -> None:
        self._next[sender] += 1


def _hex_int(v) -> int:
    return int(v, 16) if isinstance(v, str) else int(v)


class RpcGateway(Gateway):
    """JSON-RPC 2.0 over HTTP. Mutating calls need a :class:`Signer`."""

    def __init__(self, profile: NetworkProfile, signer: Signer | None = None, session=None,
                 clock=time.monotonic, sleep=time.sleep):
        if not profile.endpoint_url:
            raise errors.InvalidConfig(f"{profile.name} has no endpoint URL")
        self.profile = profile
        self.signer = signer
        self.session = session or requests.Session()
        self._clock, self._sleep = clock, sleep
        self._ids = itertools.count(1)
        self._submitted: dict[str, int] = {}
        self.nonces = NonceManager(lambda a: _hex_int(self._rpc("eth_getTransactionCount", [a, "pending"])))
        self.artifacts: dict[str, ContractArtifact] = {}

    def _now_ms(self) -> int:
        return int(self._clock() * 1000)

    def _rpc(self, method: str, params: list):
        body = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params}
        try:
            resp = self.session.post(self.profile.endpoint_url, json=body, timeout=self.profile.timeout_ms / 1000)
            resp.raise_for_status()
            reply = resp.json()
        except requests.exceptions.HTTPError as exc:
            raise errors.RpcError(f"{method}: {exc}") from exc
        except (requests.exceptions.RequestException, ValueError) as exc:
            raise errors.EndpointUnreachable(f"{self.profile.endpoint_url}: {exc}") from exc
        if reply.get("error"):
            err = reply["error"]
            raise errors.RpcError(f"{method}: {err.get('message', err)}")
        return reply.get("result")

    def chain_id(self) -> int:
        return _hex_int(self._rpc("eth_chainId", []))

    def gas_price_wei(self) -> int:
        return _hex_int(self._rpc("eth_gasPrice", []))

    def bind(self, address: str, artifact: ContractArtifact) -> None:
        self.artifacts[address.lower()] = artifact

    def send_raw(self, raw_hex: str) -> str:
        """Broadcast a pre-signed transaction and start its latency clock."""
        submitted = self._now_ms()
        h = self._rpc("eth_sendRawTransaction", [raw_hex])
        self._submitted[h] = submitted
        return h

    def _send(self, sender: str, to: str | None, data: bytes, value_wei: int, gas: int) -> Receipt:
        if self.signer is None:
            raise errors.GatewayError("live transactions need a signer or pre-signed raw blobs")
        sender = normalize_address(sender)
        with self.nonces.lock:
            tx = {
                "from": sender,
                "to": to,
                "nonce": self.nonces.peek(sender),
                "gasPrice": self.gas_price_wei(),
                "gas": gas,
                "value": value_wei,
                "data": "0x" + data.hex(),
                "chainId": self.profile.chain_id,
            }
            h = self.send_raw(self.signer.sign(tx))
            self.nonces.commit(sender)
        r = self.poll_receipt(h)
        if not r.ok:
            raise errors.Reverted(r.revert_reason or "reverted", r)
        return r

    def deploy(self, artifact, deployer, ctor_args=()):
        data = artifact.bytecode + _ctor_bytes(ctor_args)
        r = self._send(deployer, None, data, 0, gas=5_000_000)
        if r.contract_address:
            self.bind(r.contract_address, artifact)
        return r

    def call_function(self, contract, op, args=None, caller=None, value_wei=0):
        args = dict(args or {})
        contract = contract.lower()
        artifact = self.artifacts.get(contract)
        if artifact is None:
            raise errors.GatewayError(f"no artifact bound to {contract}")
        entry = artifact.function(op)
        if op == "buy_dmd":
            value_wei = args.pop("paidWei", value_wei)
        data = encode_call(entry, args)
        if entry.get("stateMutability") in ("view", "pure"):
            out = self._rpc("eth_call", [{"to": contract, "data": "0x" + data.hex()}, "latest"])
            raw = bytes.fromhex((out or "0x").removeprefix("0x"))
            outs = entry.get("outputs", [])
            return decode_word(outs[0]["type"], raw) if outs and raw else None
        gas = 2 * DEFAULT_OP_COSTS.get(op, 100_000)
        return self._send(caller, contract, data, value_wei, gas)

    def get_balance(self, address, token=None):
        native = _hex_int(self._rpc("eth_getBalance", [address, "latest"]))
        dmd = 0
        if token:
            data = "0x70a08231" + encode_word("address", address).hex()
            out = self._rpc("eth_call", [{"to": token, "data": data}, "latest"])
            dmd = int(out, 16) if out and out != "0x" else 0
        return Balances(native, dmd)

    def poll_receipt(self, tx_hash):
        start = self._submitted.get(tx_hash, self._now_ms())
        deadline = start + self.profile.timeout_ms
        while True:
            raw = self._rpc("eth_getTransactionReceipt", [tx_hash])
            now = self._now_ms()
            if raw:
                return self._parse_receipt(raw, start, now)
            if now >= deadline:
                raise errors.Timeout(f"{tx_hash} not confirmed within {self.profile.timeout_ms} ms")
            self._sleep(min(self.profile.poll_interval_ms, max(deadline - now, 1)) / 1000)

    @staticmethod
    def _parse_receipt(raw: dict, submitted: int, observed: int) -> Receipt:
        gas = _hex_int(raw["gasUsed"])
        price = Decimal(_hex_int(raw.get("effectiveGasPrice", "0x0"))) / Decimal(10**9)
        ok = _hex_int(raw.get("status", "0x1")) == 1
        return Receipt(
            tx_hash=raw["transactionHash"],
            block_number=_hex_int(raw["blockNumber"]),
            status="success" if ok else "reverted",
            gas_used=gas,
            fee_gwei=Decimal(gas) * price,
            submitted_at_ms=submitted,
            confirmed_at_ms=observed,
            contract_address=raw.get("contractAddress"),
            revert_reason=None if ok else raw.get("revertReason", "reverted"),
            gas_price_gwei=price,
            observed_at_ms=observed,
        )


def make_gateway(profile: NetworkProfile, signer: Signer | None = None) -> Gateway:
    if profile.kind == "sim":
        return SimGateway(profile)
    return RpcGateway(profile, signer=signer)
