"""The four measurements: deployment gas, marketplace-function gas, and the two latency runs.

Each network is a lane with its own gateway; lanes run concurrently and
trials inside a lane run one after another so nonces stay ordered. Reports
are assembled in profile order once every lane is done.
"""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal

from . import errors
from .gateway import (
    ContractArtifact,
    Gateway,
    NetworkProfile,
    SimGateway,
    load_artifacts,
    make_gateway,
)
from .report import (
    DEPLOY_COLUMNS,
    EXEC_COLUMNS,
    BenchReport,
    BenchSample,
    CellError,
    ordinal,
)
from .sim import DEFAULT_OP_COSTS, intrinsic_gas
from .wallet import derive_account

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 5
LANE_FUNDING_WEI = 10**24
PET_BONUS_PCT = 120
LISTING_PRICE_DMD = 30
STANDARD_BY_COLUMN = dict(zip(DEPLOY_COLUMNS, ("ERC20", "ERC721", "ERC1155", "ERC777")))
OP_BY_COLUMN = {"Buy NFT": "buy_nft", "Sell NFT": "list_nft", "Cancel NFT": "cancel_listing"}


@dataclass(frozen=True)
class BenchAccounts:
    operator: str
    seller: str
    buyer: str

    @classmethod
    def from_seed(cls, seed: int) -> "BenchAccounts":
        root = hashlib.sha512(f"tokenbench-accounts:{seed}".encode()).digest()
        return cls(*(derive_account(root, i).address for i in range(3)))


def lane_seed(seed: int, network: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{network}".encode()).digest()[:8], "big")


def _lane_gateway(profile: NetworkProfile, seed: int, accounts: BenchAccounts, factory) -> Gateway:
    gw = factory(profile.with_seed(lane_seed(seed, profile.name)))
    if isinstance(gw, SimGateway):
        for a in (accounts.operator, accounts.seller, accounts.buyer):
            gw.fund(a, LANE_FUNDING_WEI)
    return gw


def _run_lanes(profiles, lane):
    profiles = list(profiles)
    if not profiles:
        return []
    with ThreadPoolExecutor(max_workers=len(profiles)) as pool:
        return list(pool.map(lane, profiles))


def _sample(net, op, trial, receipt, latency=None) -> BenchSample:
    return BenchSample(
        network=net,
        operation=op,
        trial_index=trial,
        gas_used=receipt.gas_used,
        gas_price_gwei=None if receipt.gas_price_gwei is None else str(receipt.gas_price_gwei),
        fee_gwei=str(receipt.fee_gwei),
        latency_ms=latency if latency is not None else receipt.measured_latency_ms,
    )


def _metadata(seed, profiles_hash, **extra) -> dict:
    return {"seed": seed, "profilesSha256": profiles_hash, **extra}


def run_deploy_gas(profiles, artifacts=None, *, seed: int = 0, accounts: BenchAccounts | None = None,
                   gateway_factory=make_gateway, profiles_hash: str | None = None) -> BenchReport:
    artifacts = artifacts if artifacts is not None else load_artifacts()
    accounts = accounts or BenchAccounts.from_seed(seed)

    def lane(profile):
        gw = _lane_gateway(profile, seed, accounts, gateway_factory)
        row, samples = {}, []
        for col, std in STANDARD_BY_COLUMN.items():
            art = artifacts.get(std)
            if not isinstance(art, ContractArtifact):
                row[col] = CellError(getattr(art, "code", "InvalidArtifact"))
                continue
            try:
                r = gw.deploy(art, accounts.operator)
            except errors.TokenBenchError as exc:
                log.warning("%s: deploying %s failed: %s", profile.name, std, exc)
                row[col] = CellError(exc.code)
                continue
            row[col] = r.fee_gwei
            samples.append(_sample(profile.name, f"deploy {col}", 1, r))
        return row, samples

    report = BenchReport("deploy_gas", list(DEPLOY_COLUMNS), metadata=_metadata(seed, profiles_hash))
    for profile, (row, samples) in zip(profiles, _run_lanes(profiles, lane)):
        report.add_row(profile.name, row)
        report.samples += samples
    return report


class W2ESuite:
    """DMD token plus linked pet/marketplace contract deployed on one gateway."""

    def __init__(self, gw: Gateway, artifacts, accounts: BenchAccounts):
        self.gw, self.accounts = gw, accounts
        token = artifacts.get("ERC20")
        pets = artifacts.get("ERC721")
        if not isinstance(token, ContractArtifact) or not isinstance(pets, ContractArtifact):
            raise errors.FixtureFailed("ERC20 and ERC721 artifacts are required")
        self.token = gw.deploy(token, accounts.operator).contract_address
        self.pets = gw.deploy(pets, accounts.operator, [("address", self.token)]).contract_address

    def fund_dmd(self, to: str, amount: int) -> None:
        self.gw.call_function(self.token, "mint_dmd", {"to": to, "amount": amount}, self.accounts.operator)

    def listed_pet(self, price: int = LISTING_PRICE_DMD):
        """Mint a pet to the seller, approve the marketplace and list it. Returns (tokenId, list receipt)."""
        a, gw = self.accounts, self.gw
        r = gw.call_function(self.pets, "mint_pet", {"to": a.seller, "bonusRatePct": PET_BONUS_PCT}, a.operator)
        token_id = r.return_value
        gw.call_function(self.pets, "nft_approve", {"tokenId": token_id, "approved": self.pets}, a.seller)
        listed = gw.call_function(self.pets, "list_nft", {"tokenId": token_id, "priceDmd": price}, a.seller)
        return token_id, listed


def run_function_gas(profiles, artifacts=None, *, seed: int = 0, accounts: BenchAccounts | None = None,
                     buyer_dmd: int = 100, gateway_factory=make_gateway,
                     profiles_hash: str | None = None) -> BenchReport:
    artifacts = artifacts if artifacts is not None else load_artifacts()
    accounts = accounts or BenchAccounts.from_seed(seed)

    def lane(profile):
        gw = _lane_gateway(profile, seed, accounts, gateway_factory)
        try:
            suite = W2ESuite(gw, artifacts, accounts)
            if buyer_dmd:
                suite.fund_dmd(accounts.buyer, buyer_dmd)
            token_id, sell = suite.listed_pet()
            if gw.get_balance(accounts.buyer, suite.token).dmd < LISTING_PRICE_DMD:
                raise errors.BuyFixtureFailed(f"buyer cannot afford {LISTING_PRICE_DMD} DMD")
            buy = gw.call_function(suite.pets, "buy_nft", {"tokenId": token_id}, accounts.buyer)
            token_id, _ = suite.listed_pet()
            cancel = gw.call_function(suite.pets, "cancel_listing", {"tokenId": token_id}, accounts.seller)
        except errors.TokenBenchError as exc:
            log.warning("%s: fixture failed: %s", profile.name, exc)
            err = exc if isinstance(exc, errors.FixtureFailed) else errors.FixtureFailed(exc.code)
            return {c: CellError(err.code) for c in EXEC_COLUMNS}, []
        receipts = {"Buy NFT": buy, "Sell NFT": sell, "Cancel NFT": cancel}
        row = {c: receipts[c].fee_gwei for c in EXEC_COLUMNS}
        return row, [_sample(profile.name, OP_BY_COLUMN[c], 1, receipts[c]) for c in EXEC_COLUMNS]

    report = BenchReport("exec_gas", list(EXEC_COLUMNS), metadata=_metadata(seed, profiles_hash))
    for profile, (row, samples) in zip(profiles, _run_lanes(profiles, lane)):
        report.add_row(profile.name, row)
        report.samples += samples
    return report


def run_latency(profiles, workload: str = "deploy", trials: int = DEFAULT_TRIALS, artifacts=None, *,
                seed: int = 0, accounts: BenchAccounts | None = None, gateway_factory=make_gateway,
                profiles_hash: str | None = None) -> BenchReport:
    """Per-trial confirmation latency for ``deploy`` (DMD token) or ``buyNft``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if workload not in ("deploy", "buyNft"):
        raise ValueError(f"unknown workload {workload!r}")
    artifacts = artifacts if artifacts is not None else load_artifacts()
    accounts = accounts or BenchAccounts.from_seed(seed)
    columns = [ordinal(i) for i in range(1, trials + 1)]

    def lane(profile):
        gw = _lane_gateway(profile, seed, accounts, gateway_factory)
        row, samples = {}, []
        suite = None
        if workload == "buyNft":
            try:
                suite = W2ESuite(gw, artifacts, accounts)
                suite.fund_dmd(accounts.buyer, LISTING_PRICE_DMD * trials)
            except errors.TokenBenchError as exc:
                err = exc if isinstance(exc, errors.FixtureFailed) else errors.FixtureFailed(exc.code)
                return {c: CellError(err.code) for c in columns}, []
        for i, col in enumerate(columns, start=1):
            try:
                if suite is None:
                    gw.align()
                    r = gw.deploy(artifacts["ERC20"], accounts.operator)
                else:
                    token_id, _ = suite.listed_pet()
                    gw.align()
                    r = gw.call_function(suite.pets, "buy_nft", {"tokenId": token_id}, accounts.buyer)
            except errors.Timeout as exc:
                log.warning("%s trial %d timed out: %s", profile.name, i, exc)
                row[col] = None
                continue
            except errors.TokenBenchError as exc:
                row[col] = CellError(exc.code)
                continue
            row[col] = r.measured_latency_ms
            samples.append(_sample(profile.name, workload, i, r))
        return row, samples

    kind = "deploy_time" if workload == "deploy" else "exec_time"
    report = BenchReport(kind, columns, metadata=_metadata(seed, profiles_hash, trials=trials, workload=workload))
    for profile, (row, samples) in zip(profiles, _run_lanes(profiles, lane)):
        report.add_row(profile.name, row)
        report.samples += samples
    return report


def model_gas(artifacts=None, op_costs=DEFAULT_OP_COSTS) -> dict[str, int]:
    """gasUsed the simulator charges for every column of the two gas tables."""
    artifacts = artifacts if artifacts is not None else load_artifacts()
    gas = {}
    for col, std in STANDARD_BY_COLUMN.items():
        if std in ("ERC20", "ERC721"):
            gas[col] = op_costs[f"deploy_{std.lower()}"]
        else:
            code = artifacts[std].bytecode
            gas[col] = intrinsic_gas(code, True, len(code))
    for col, op in OP_BY_COLUMN.items():
        gas[col] = op_costs[op]
    return gas


def calibrate_gas_prices(reference: dict, artifacts=None, op_costs=DEFAULT_OP_COSTS,
                         digits: int = 4) -> dict[str, Decimal]:
    """Per-network gas price (Gwei/gas) minimizing squared log error to the published fees.

    The fit is the geometric mean of fee/gasUsed over all seven fee cells of
    a network, rounded to ``digits`` significant figures.
    """
    gas = model_gas(artifacts, op_costs)
    prices = {}
    for net in reference["networks"]:
        cells = list(zip(reference["deploy_gas"]["columns"], reference["deploy_gas"]["rows"][net]))
        cells += list(zip(reference["exec_gas"]["columns"], reference["exec_gas"]["rows"][net]))
        logs = [math.log(float(fee) / gas[col]) for col, fee in cells]
        price = math.exp(sum(logs) / len(logs))
        prices[net] = Decimal(f"{price:.{digits - 1}e}")
    return prices
