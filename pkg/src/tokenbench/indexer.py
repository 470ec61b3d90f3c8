"""Event journal and materialized views: the back-end cache of balances, pets, listings and rewards.

Views are pure folds over confirmed events, so a from-genesis replay of the
journal always reproduces them. Listings are stored raw and filtered for
staleness on read, mirroring the contract's own buyability rule.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorruptSnapshot, DuplicateBlock, GapDetected, SchemaMismatch
from .token import ZERO_ADDRESS, Event

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class BlockEvents:
    number: int
    events: list[Event] = field(default_factory=list)

    @classmethod
    def from_block(cls, block) -> "BlockEvents":
        return cls(block.number, list(block.events))


@dataclass
class Views:
    dmd_balances: dict[str, int] = field(default_factory=dict)
    pet_owners: dict[int, str] = field(default_factory=dict)
    nft_approvals: dict[int, str] = field(default_factory=dict)
    listings: dict[int, dict] = field(default_factory=dict)
    reward_history: dict[str, list[dict]] = field(default_factory=dict)
    market_address: str | None = None

    def active_listings(self) -> dict[int, dict]:
        out = {}
        for t in sorted(self.listings):
            l = self.listings[t]
            if self.pet_owners.get(t) == l["seller"] and self.nft_approvals.get(t) == self.market_address:
                out[t] = l
        return out

    def apply(self, e: Event) -> None:
        p = e.payload
        if e.kind == "Transfer":
            if p["from"] != ZERO_ADDRESS:
                left = self.dmd_balances.get(p["from"], 0) - p["amount"]
                if left:
                    self.dmd_balances[p["from"]] = left
                else:
                    self.dmd_balances.pop(p["from"], None)
            if p["amount"]:
                self.dmd_balances[p["to"]] = self.dmd_balances.get(p["to"], 0) + p["amount"]
        elif e.kind == "NftTransfer":
            self.pet_owners[p["tokenId"]] = p["to"]
            self.nft_approvals.pop(p["tokenId"], None)
        elif e.kind == "NftApproval":
            if p["approved"] == ZERO_ADDRESS:
                self.nft_approvals.pop(p["tokenId"], None)
            else:
                self.nft_approvals[p["tokenId"]] = p["approved"]
        elif e.kind == "Listed":
            # a listing is only accepted while the marketplace holds the approval
            self.market_address = self.nft_approvals.get(p["tokenId"], self.market_address)
            self.listings[p["tokenId"]] = {"seller": p["seller"], "priceDmd": p["priceDmd"]}
        elif e.kind in ("Purchased", "Cancelled"):
            self.listings.pop(p["tokenId"], None)
        elif e.kind == "Rewarded":
            self.reward_history.setdefault(p["user"], []).append(dict(p))
        # Approval (allowance) events carry nothing the views need

    def to_dict(self) -> dict:
        return {
            "dmdBalances": dict(sorted(self.dmd_balances.items())),
            "petOwners": {str(k): v for k, v in sorted(self.pet_owners.items())},
            "nftApprovals": {str(k): v for k, v in sorted(self.nft_approvals.items())},
            "listings": {str(k): v for k, v in sorted(self.listings.items())},
            "rewardHistory": dict(sorted(self.reward_history.items())),
            "marketAddress": self.market_address,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Views":
        return cls(
            dmd_balances=dict(d["dmdBalances"]),
            pet_owners={int(k): v for k, v in d["petOwners"].items()},
            nft_approvals={int(k): v for k, v in d["nftApprovals"].items()},
            listings={int(k): v for k, v in d["listings"].items()},
            reward_history={k: list(v) for k, v in d["rewardHistory"].items()},
            market_address=d.get("marketAddress"),
        )


@dataclass(frozen=True)
class Portfolio:
    address: str
    dmd: int
    pets: list[int]
    listings: dict[int, dict]
    rewards: list[dict]

    def to_dict(self) -> dict:
        return {"address": self.address, "dmd": self.dmd, "pets": self.pets,
                "listings": {str(k): v for k, v in self.listings.items()}, "rewards": self.rewards}


class Indexer:
    """Single writer, many readers. Readers always see the last completed batch."""

    def __init__(self, journal_path: str | Path | None = None, contract: str | None = None):
        self.journal_path = Path(journal_path) if journal_path else None
        # when set, only events emitted by this token suite are folded
        self.contract = contract.lower() if contract else None
        self.last_processed_block = 0
        self._views = Views()
        self._published = Views()
        self._write_lock = threading.Lock()

    @property
    def views(self) -> Views:
        return self._published

    def ingest(self, batch) -> Views:
        batch = [b if isinstance(b, BlockEvents) else BlockEvents.from_block(b) for b in batch]
        with self._write_lock:
            expected = self.last_processed_block + 1
            for b in batch:
                if b.number < expected:
                    raise DuplicateBlock(f"block {b.number} already processed (next is {expected})")
                if b.number > expected:
                    raise GapDetected(f"expected block {expected}, got {b.number}")
                expected += 1
            lines = []
            for b in batch:
                for e in b.events:
                    if self.contract and e.contract != self.contract:
                        continue
                    self._views.apply(e)
                    lines.append(json.dumps(e.to_dict(), sort_keys=True))
                lines.append(json.dumps({"block": b.number, "kind": "BlockEnd"}))
            if self.journal_path and lines:
                with self.journal_path.open("a") as fh:
                    fh.write("\n".join(lines) + "\n")
            if batch:
                self.last_processed_block = batch[-1].number
            self._published = copy.deepcopy(self._views)
            return self._published

    def query_portfolio(self, user: str) -> Portfolio:
        v = self._published
        user = user.lower()
        return Portfolio(
            address=user,
            dmd=v.dmd_balances.get(user, 0),
            pets=sorted(t for t, o in v.pet_owners.items() if o == user),
            listings={t: l for t, l in v.active_listings().items() if l["seller"] == user},
            rewards=list(v.reward_history.get(user, [])),
        )

    # persistence

    def snapshot(self, path: str | Path) -> None:
        header = json.dumps({"schema": SCHEMA_VERSION, "lastProcessedBlock": self.last_processed_block,
                             "contract": self.contract})
        body = json.dumps(self._published.to_dict(), sort_keys=True)
        payload = f"{header}\n{body}\n"
        digest = hashlib.sha256(payload.encode()).hexdigest()
        Path(path).write_text(payload + json.dumps({"sha256": digest}) + "\n")

    @classmethod
    def restore(cls, path: str | Path, journal_path: str | Path | None = None,
                contract: str | None = None) -> "Indexer":
        text = Path(path).read_text()
        lines = text.split("\n")
        if len(lines) < 4 or lines[3] != "":
            raise CorruptSnapshot(f"{path}: unexpected layout")
        payload = lines[0] + "\n" + lines[1] + "\n"
        try:
            recorded = json.loads(lines[2])["sha256"]
            header = json.loads(lines[0])
        except (ValueError, KeyError) as exc:
            raise CorruptSnapshot(f"{path}: {exc}") from exc
        if hashlib.sha256(payload.encode()).hexdigest() != recorded:
            raise CorruptSnapshot(f"{path}: checksum mismatch")
        if header.get("schema") != SCHEMA_VERSION:
            raise SchemaMismatch(f"snapshot schema {header.get('schema')} != {SCHEMA_VERSION}")
        idx = cls(journal_path, contract=contract or header.get("contract"))
        idx._views = Views.from_dict(json.loads(lines[1]))
        idx._published = copy.deepcopy(idx._views)
        idx.last_processed_block = header["lastProcessedBlock"]
        return idx

    @classmethod
    def rebuild(cls, journal_path: str | Path, contract: str | None = None) -> "Indexer":
        """Fold a journal from genesis. Trailing events without a BlockEnd marker are ignored."""
        idx = cls(contract=contract)
        pending: list[Event] = []
        blocks: list[BlockEvents] = []
        for line in Path(journal_path).read_text().splitlines():
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except ValueError:
                log.warning("stopping at unparsable journal line")
                break
            if d.get("kind") == "BlockEnd":
                blocks.append(BlockEvents(d["block"], pending))
                pending = []
            else:
                pending.append(Event.from_dict(d))
        idx.ingest(blocks)
        idx.journal_path = Path(journal_path)
        return idx


def sync(indexer: Indexer, gateway) -> Views:
    """Pull every block the gateway sealed since the indexer's checkpoint."""
    return indexer.ingest(gateway.events_since(indexer.last_processed_block))
