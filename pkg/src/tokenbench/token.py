"""DMD fungible token, pet NFTs, the DMD-priced marketplace and the sale desk.

All four live in one :class:`TokenEconomy` instance, the in-process equivalent
of the deployed contract suite. Every mutating method validates all of its
preconditions before touching state, so a raised error never leaves a partial
update behind.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from . import errors

ZERO_ADDRESS = "0x" + "00" * 20
WEI_PER_NATIVE = 10**18
MIN_BONUS_RATE_PCT = 100
DEFAULT_RATE_DMD_PER_NATIVE = 1000


def normalize_address(address: str) -> str:
    a = address.lower()
    if not a.startswith("0x") or len(a) != 42:
        raise ValueError(f"malformed address: {address!r}")
    int(a[2:], 16)
    return a


def contract_address_for(creator: str, nonce: int) -> str:
    digest = hashlib.sha256(bytes.fromhex(creator[2:]) + nonce.to_bytes(8, "big")).digest()
    return "0x" + digest[:20].hex()


@dataclass
class Event:
    kind: str
    payload: dict
    block: int | None = None
    tx_hash: str | None = None
    log_index: int | None = None
    contract: str | None = None

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "tx": self.tx_hash,
            "index": self.log_index,
            "contract": self.contract,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["kind"], d["payload"], d.get("block"), d.get("tx"), d.get("index"), d.get("contract"))


@dataclass
class Listing:
    seller: str
    price_dmd: int
    active: bool = True


def _check_amount(amount) -> int:
    if isinstance(amount, bool) or not isinstance(amount, int) or amount < 0:
        raise errors.InvalidAmount(f"amount must be a non-negative integer, got {amount!r}")
    return amount


class TokenEconomy:
    """State of the DMD token, pet registry, marketplace and sale desk.

    ``native`` is the native-coin balance map in wei. The ledger simulator
    passes its own account map so that sale-desk purchases and gas charges
    see the same balances; standalone use gets a private map.
    """

    def __init__(
        self,
        operator: str,
        *,
        address: str | None = None,
        rate_dmd_per_native: int = DEFAULT_RATE_DMD_PER_NATIVE,
        treasury: str | None = None,
        native: dict[str, int] | None = None,
        base_rate_dmd_per_km: int = 10,
    ):
        if rate_dmd_per_native <= 0:
            raise ValueError("rate_dmd_per_native must be positive")
        self.operator = normalize_address(operator)
        self.address = normalize_address(address) if address else contract_address_for(self.operator, 0)
        # the marketplace lives at the suite's address and is the approval target for listings
        self.market_address = self.address
        self.rate_dmd_per_native = rate_dmd_per_native
        self.treasury = normalize_address(treasury) if treasury else self.operator
        self.native = native if native is not None else {}
        self.base_rate_dmd_per_km = base_rate_dmd_per_km

        self.balances: dict[str, int] = {}
        self.allowances: dict[tuple[str, str], int] = {}
        self.total_supply = 0
        self.owner_of: dict[int, str] = {}
        self.nft_approvals: dict[int, str] = {}
        self.bonus_rate: dict[int, int] = {}
        self.next_token_id = 0
        self.listings: dict[int, Listing] = {}
        self.events: list[Event] = []
        # (user, record) pairs already rewarded; only used to log repeats
        self.granted_records: set = set()

    # reads

    def balance_of(self, address: str) -> int:
        return self.balances.get(address.lower(), 0)

    def allowance(self, owner: str, spender: str) -> int:
        return self.allowances.get((owner.lower(), spender.lower()), 0)

    def pets_of(self, user: str) -> list[int]:
        user = user.lower()
        return sorted(t for t, o in self.owner_of.items() if o == user)

    def is_earnable(self, user: str) -> bool:
        user = user.lower()
        return any(o == user for o in self.owner_of.values())

    def is_stale(self, token_id: int) -> bool:
        listing = self.listings[token_id]
        return (
            self.owner_of.get(token_id) != listing.seller
            or self.nft_approvals.get(token_id) != self.market_address
        )

    def active_listing(self, token_id: int) -> Listing | None:
        """The listing for ``token_id`` if it is active and still buyable."""
        listing = self.listings.get(token_id)
        if listing is None or not listing.active or self.is_stale(token_id):
            return None
        return listing

    def active_listings(self) -> dict[int, Listing]:
        return {t: l for t in sorted(self.listings) if (l := self.active_listing(t)) is not None}

    # ERC-20 side

    def _emit(self, kind: str, **payload) -> None:
        self.events.append(Event(kind, payload, contract=self.address))

    def _move(self, frm: str, to: str, amount: int) -> None:
        if amount:
            self.balances[frm] -= amount
            if not self.balances[frm]:
                del self.balances[frm]
            self.balances[to] = self.balances.get(to, 0) + amount
        self._emit("Transfer", **{"from": frm, "to": to, "amount": amount})

    def _mint(self, to: str, amount: int) -> None:
        self.total_supply += amount
        if amount:
            self.balances[to] = self.balances.get(to, 0) + amount
        self._emit("Transfer", **{"from": ZERO_ADDRESS, "to": to, "amount": amount})

    def transfer(self, sender: str, to: str, amount: int) -> None:
        sender, to = sender.lower(), to.lower()
        _check_amount(amount)
        if to == ZERO_ADDRESS:
            raise errors.ZeroAddressRecipient(to)
        if self.balance_of(sender) < amount:
            raise errors.InsufficientBalance(f"{sender} holds {self.balance_of(sender)} < {amount}")
        self._move(sender, to, amount)

    def approve(self, owner: str, spender: str, amount: int) -> int:
        owner, spender = owner.lower(), spender.lower()
        _check_amount(amount)
        if amount:
            self.allowances[(owner, spender)] = amount
        else:
            self.allowances.pop((owner, spender), None)
        self._emit("Approval", owner=owner, spender=spender, amount=amount)
        return amount

    def transfer_from(self, spender: str, owner: str, to: str, amount: int) -> None:
        spender, owner, to = spender.lower(), owner.lower(), to.lower()
        _check_amount(amount)
        if to == ZERO_ADDRESS:
            raise errors.ZeroAddressRecipient(to)
        allowed = self.allowance(owner, spender)
        if allowed < amount:
            raise errors.InsufficientAllowance(f"allowance {allowed} < {amount}")
        if self.balance_of(owner) < amount:
            raise errors.InsufficientBalance(f"{owner} holds {self.balance_of(owner)} < {amount}")
        if allowed - amount:
            self.allowances[(owner, spender)] = allowed - amount
        else:
            self.allowances.pop((owner, spender), None)
        self._move(owner, to, amount)

    def mint_dmd(self, caller: str, to: str, amount: int) -> int:
        caller, to = caller.lower(), to.lower()
        if caller != self.operator:
            raise errors.NotOperator(caller)
        _check_amount(amount)
        if to == ZERO_ADDRESS:
            raise errors.ZeroAddressRecipient(to)
        self._mint(to, amount)
        return self.total_supply

    def dmd_for_payment(self, paid_wei: int) -> int:
        return paid_wei * self.rate_dmd_per_native // WEI_PER_NATIVE

    def buy_dmd(self, buyer: str, paid_wei: int) -> int:
        """Sell DMD for native coin at the desk rate; returns DMD credited."""
        buyer = buyer.lower()
        _check_amount(paid_wei)
        if paid_wei == 0:
            raise errors.ZeroPayment(buyer)
        credited = self.dmd_for_payment(paid_wei)
        if credited == 0:
            raise errors.DustPayment(f"{paid_wei} wei buys 0 DMD at rate {self.rate_dmd_per_native}")
        if self.native.get(buyer, 0) < paid_wei:
            raise errors.InsufficientNative(f"{buyer} holds {self.native.get(buyer, 0)} wei < {paid_wei}")
        self.native[buyer] -= paid_wei
        self.native[self.treasury] = self.native.get(self.treasury, 0) + paid_wei
        self._mint(buyer, credited)
        return credited

    # ERC-721 side

    def _require_token(self, token_id) -> int:
        if isinstance(token_id, bool) or not isinstance(token_id, int) or token_id not in self.owner_of:
            raise errors.UnknownToken(f"pet #{token_id} does not exist")
        return token_id

    def mint_pet(self, caller: str, to: str, bonus_rate_pct: int) -> int:
        caller, to = caller.lower(), to.lower()
        if caller != self.operator:
            raise errors.NotOperator(caller)
        if isinstance(bonus_rate_pct, bool) or not isinstance(bonus_rate_pct, int) or bonus_rate_pct < MIN_BONUS_RATE_PCT:
            raise errors.InvalidBonusRate(f"bonus rate {bonus_rate_pct!r} below {MIN_BONUS_RATE_PCT}")
        if to == ZERO_ADDRESS:
            raise errors.ZeroAddressRecipient(to)
        token_id = self.next_token_id
        self.next_token_id += 1
        self.owner_of[token_id] = to
        self.bonus_rate[token_id] = bonus_rate_pct
        self._emit("NftTransfer", **{"from": ZERO_ADDRESS, "to": to, "tokenId": token_id,
                                     "bonusRatePct": bonus_rate_pct})
        return token_id

    def nft_approve(self, caller: str, token_id: int, approved: str) -> None:
        caller, approved = caller.lower(), approved.lower()
        self._require_token(token_id)
        if self.owner_of[token_id] != caller:
            raise errors.NotOwner(f"{caller} does not own pet #{token_id}")
        if approved == ZERO_ADDRESS:
            self.nft_approvals.pop(token_id, None)
        else:
            self.nft_approvals[token_id] = approved
        self._emit("NftApproval", owner=caller, approved=approved, tokenId=token_id)

    def _move_pet(self, frm: str, to: str, token_id: int) -> None:
        self.nft_approvals.pop(token_id, None)
        self.owner_of[token_id] = to
        self._emit("NftTransfer", **{"from": frm, "to": to, "tokenId": token_id})

    def nft_transfer(self, caller: str, frm: str, to: str, token_id: int) -> None:
        caller, frm, to = caller.lower(), frm.lower(), to.lower()
        self._require_token(token_id)
        if self.owner_of[token_id] != frm:
            raise errors.NotOwner(f"{frm} does not own pet #{token_id}")
        if caller != frm and self.nft_approvals.get(token_id) != caller:
            raise errors.NotApproved(f"{caller} may not move pet #{token_id}")
        if to == ZERO_ADDRESS:
            raise errors.ZeroAddressRecipient(to)
        self._move_pet(frm, to, token_id)

    # marketplace

    def list_nft(self, seller: str, token_id: int, price_dmd: int) -> Listing:
        seller = seller.lower()
        _check_amount(price_dmd)
        if price_dmd == 0:
            raise errors.ZeroPrice(f"pet #{token_id}")
        self._require_token(token_id)
        if self.owner_of[token_id] != seller:
            raise errors.NotOwner(f"{seller} does not own pet #{token_id}")
        if self.nft_approvals.get(token_id) != self.market_address:
            raise errors.NotApproved(f"marketplace lacks approval for pet #{token_id}")
        if self.active_listing(token_id) is not None:
            raise errors.AlreadyListed(f"pet #{token_id}")
        listing = Listing(seller, price_dmd)
        self.listings[token_id] = listing
        self._emit("Listed", seller=seller, tokenId=token_id, priceDmd=price_dmd)
        return listing

    def buy_nft(self, buyer: str, token_id: int) -> None:
        buyer = buyer.lower()
        listing = self.listings.get(token_id)
        if listing is None or not listing.active:
            raise errors.NoListing(f"pet #{token_id}")
        if self.is_stale(token_id):
            raise errors.StaleListing(f"pet #{token_id} listing no longer backed by owner approval")
        if buyer == listing.seller:
            raise errors.SelfPurchase(buyer)
        if self.balance_of(buyer) < listing.price_dmd:
            raise errors.InsufficientBalance(f"{buyer} holds {self.balance_of(buyer)} < {listing.price_dmd}")
        self._move(buyer, listing.seller, listing.price_dmd)
        self._move_pet(listing.seller, buyer, token_id)
        listing.active = False
        self._emit("Purchased", buyer=buyer, seller=listing.seller, tokenId=token_id,
                   priceDmd=listing.price_dmd)

    def cancel_listing(self, seller: str, token_id: int) -> None:
        seller = seller.lower()
        listing = self.listings.get(token_id)
        if listing is None or not listing.active:
            raise errors.NoListing(f"pet #{token_id}")
        if listing.seller != seller:
            raise errors.NotSeller(f"{seller} did not list pet #{token_id}")
        listing.active = False
        self._emit("Cancelled", seller=seller, tokenId=token_id)

    # rewards

    def grant_reward(self, caller: str, user: str, pet_token_id: int, record):
        from .reward import grant_reward

        return grant_reward(self, caller, user, pet_token_id, record)

    # dispatch used by the ledger simulator and gateway

    def apply(self, op: str, caller: str, args: dict):
        try:
            fn = MUTATING_OPS[op]
        except KeyError:
            raise errors.UnknownOperation(op) from None
        return fn(self, caller, **args)

    def read(self, op: str, args: dict):
        try:
            fn = READ_OPS[op]
        except KeyError:
            raise errors.UnknownOperation(op) from None
        return fn(self, **args)

    # state projection

    def state(self) -> dict:
        """Canonical projection of the contract state (events excluded)."""
        return {
            "totalSupply": self.total_supply,
            "balances": {a: b for a, b in sorted(self.balances.items()) if b},
            "allowances": {f"{o}:{s}": v for (o, s), v in sorted(self.allowances.items()) if v},
            "owners": {str(t): o for t, o in sorted(self.owner_of.items())},
            "nftApprovals": {str(t): a for t, a in sorted(self.nft_approvals.items())},
            "bonusRates": {str(t): r for t, r in sorted(self.bonus_rate.items())},
            "nextTokenId": self.next_token_id,
            "listings": {str(t): {"seller": l.seller, "price_dmd": l.price_dmd, "active": l.active}
                         for t, l in sorted(self.listings.items())},
        }

    def digest(self) -> str:
        """Hash of contract state, native balances and event count."""
        blob = {
            "state": self.state(),
            "native": {a: v for a, v in sorted(self.native.items()) if v},
            "events": len(self.events),
        }
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()


def _grant(econ: TokenEconomy, caller, user, petTokenId, record):
    from .reward import WorkoutRecord

    if isinstance(record, dict):
        record = WorkoutRecord.from_dict(record)
    return econ.grant_reward(caller, user, petTokenId, record)


# caller is always the transaction sender; wire argument names are camelCase
MUTATING_OPS = {
    "transfer": lambda e, caller, to, amount: e.transfer(caller, to, amount),
    "approve": lambda e, caller, spender, amount: e.approve(caller, spender, amount),
    "transfer_from": lambda e, caller, owner, to, amount: e.transfer_from(caller, owner, to, amount),
    "mint_dmd": lambda e, caller, to, amount: e.mint_dmd(caller, to, amount),
    "buy_dmd": lambda e, caller, paidWei: e.buy_dmd(caller, paidWei),
    "mint_pet": lambda e, caller, to, bonusRatePct: e.mint_pet(caller, to, bonusRatePct),
    "nft_approve": lambda e, caller, tokenId, approved: e.nft_approve(caller, tokenId, approved),
    "nft_transfer": lambda e, caller, to, tokenId, **kw: e.nft_transfer(caller, kw.get("from", caller), to, tokenId),
    "list_nft": lambda e, caller, tokenId, priceDmd: e.list_nft(caller, tokenId, priceDmd),
    "buy_nft": lambda e, caller, tokenId: e.buy_nft(caller, tokenId),
    "cancel_listing": lambda e, caller, tokenId: e.cancel_listing(caller, tokenId),
    "grant_reward": _grant,
}

READ_OPS = {
    "balance_of": lambda e, address: e.balance_of(address),
    "allowance": lambda e, owner, spender: e.allowance(owner, spender),
    "total_supply": lambda e: e.total_supply,
    "owner_of": lambda e, tokenId: e.owner_of.get(tokenId),
    "pets_of": lambda e, user: e.pets_of(user),
    "is_earnable": lambda e, user: e.is_earnable(user),
    "bonus_rate": lambda e, tokenId: e.bonus_rate.get(tokenId),
    "active_listing": lambda e, tokenId: (asdict(l) if (l := e.active_listing(tokenId)) else None),
    "market_address": lambda e: e.market_address,
}
