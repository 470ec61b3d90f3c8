"""Exception types shared across the package.

Every error carries a short ``code`` (the class name) so that reverted
transactions, report cells and CLI output can surface the same reason string.
"""
from __future__ import annotations


class TokenBenchError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


# token-core
class TokenError(TokenBenchError):
    pass


class InsufficientBalance(TokenError):
    pass


class ZeroAddressRecipient(TokenError):
    pass


class InsufficientAllowance(TokenError):
    pass


class InvalidAmount(TokenError):
    pass


class NotOperator(TokenError):
    pass


class InsufficientNative(TokenError):
    pass


class ZeroPayment(TokenError):
    pass


class DustPayment(TokenError):
    pass


class InvalidBonusRate(TokenError):
    pass


class UnknownToken(TokenError):
    pass


class NotOwner(TokenError):
    pass


class NotApproved(TokenError):
    pass


class AlreadyListed(TokenError):
    pass


class ZeroPrice(TokenError):
    pass


class NoListing(TokenError):
    pass


class StaleListing(TokenError):
    pass


class SelfPurchase(TokenError):
    pass


class NotSeller(TokenError):
    pass


class UnknownOperation(TokenError):
    pass


class NotPayable(TokenError):
    pass


# reward
class NotEarnable(TokenError):
    pass


class NotPetOwner(TokenError):
    pass


class InconsistentRecord(TokenError):
    pass


class ImplausibleRecord(TokenError):
    pass


# wallet
class WalletError(TokenBenchError):
    pass


class InvalidEntropyLength(WalletError):
    pass


class InvalidMnemonic(WalletError):
    pass


class WordlistCorrupt(WalletError):
    pass


# ledger-sim
class ChainError(TokenBenchError):
    pass


class InvalidConfig(ChainError):
    pass


class NonceTooLow(ChainError):
    pass


class NonceGap(ChainError):
    pass


class InsufficientFunds(ChainError):
    pass


class ClockRegression(ChainError):
    pass


class GasLimitExceeded(ChainError):
    pass


class NotConfirmed(ChainError):
    pass


class UnknownTransaction(ChainError):
    pass


# chain-gateway
class GatewayError(TokenBenchError):
    pass


class Timeout(GatewayError):
    pass


class Reverted(GatewayError):
    def __init__(self, reason: str, receipt=None):
        super().__init__(reason)
        self.reason = reason
        self.receipt = receipt


class EndpointUnreachable(GatewayError):
    pass


class RpcError(GatewayError):
    pass


class InvalidArtifact(GatewayError):
    pass


class UnknownNetwork(GatewayError):
    pass


# indexer
class IndexerError(TokenBenchError):
    pass


class GapDetected(IndexerError):
    pass


class DuplicateBlock(IndexerError):
    pass


class SchemaMismatch(IndexerError):
    pass


class CorruptSnapshot(IndexerError):
    pass


# bench-report
class BenchError(TokenBenchError):
    pass


class EmptySamples(BenchError):
    pass


class UnknownFormat(BenchError):
    pass


class FixtureFailed(BenchError):
    pass


class BuyFixtureFailed(FixtureFailed):
    pass
