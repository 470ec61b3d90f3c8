"""BIP39 mnemonics and simulator-local account derivation.

Only the English word list is supported. It ships as a versioned data file and
is checked against its published SHA-256 on first load.
"""
from __future__ import annotations

import hashlib
import secrets
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import InvalidEntropyLength, InvalidMnemonic, WordlistCorrupt

WORDLIST_FILE = "bip39_english_v1.txt"
WORDLIST_SHA256 = "2f5eed53a4727b4bf8880d8f3f199efc90e58503646d9ff8eff3a2ed3b24dbda"
ENTROPY_BYTES = (16, 20, 24, 28, 32)
WORD_COUNTS = {(8 * n + 8 * n // 32) // 11: n for n in ENTROPY_BYTES}
PBKDF2_ROUNDS = 2048


@lru_cache(maxsize=1)
def wordlist() -> tuple[str, ...]:
    raw = resources.files("tokenbench.data").joinpath(WORDLIST_FILE).read_bytes()
    if hashlib.sha256(raw).hexdigest() != WORDLIST_SHA256:
        raise WordlistCorrupt(f"{WORDLIST_FILE} does not match its recorded hash")
    words = tuple(raw.decode().split())
    assert len(words) == 2048
    return words


@lru_cache(maxsize=1)
def _word_index() -> dict[str, int]:
    return {w: i for i, w in enumerate(wordlist())}


@dataclass(frozen=True)
class Mnemonic:
    words: tuple[str, ...]

    @property
    def entropy_bits(self) -> int:
        return WORD_COUNTS[len(self.words)] * 8

    @property
    def phrase(self) -> str:
        return " ".join(self.words)

    def __str__(self) -> str:
        return self.phrase


@dataclass(frozen=True)
class DerivedAccount:
    seed: bytes
    index: int
    address: str


def _as_words(words) -> list[str]:
    if isinstance(words, Mnemonic):
        return list(words.words)
    if isinstance(words, str):
        return unicodedata.normalize("NFKD", words).split()
    return list(words)


def generate_mnemonic(entropy: bytes | None = None, *, words: int = 12) -> Mnemonic:
    """Encode ``entropy`` (random if omitted) as a checksummed word phrase."""
    if entropy is None:
        if words not in WORD_COUNTS:
            raise InvalidEntropyLength(f"unsupported word count {words}")
        entropy = secrets.token_bytes(WORD_COUNTS[words])
    if len(entropy) not in ENTROPY_BYTES:
        raise InvalidEntropyLength(f"entropy must be one of {ENTROPY_BYTES} bytes, got {len(entropy)}")
    ent_bits = len(entropy) * 8
    cs_bits = ent_bits // 32
    checksum = hashlib.sha256(entropy).digest()[0] >> (8 - cs_bits)
    value = (int.from_bytes(entropy, "big") << cs_bits) | checksum
    n_words = (ent_bits + cs_bits) // 11
    wl = wordlist()
    out = [wl[(value >> (11 * (n_words - 1 - i))) & 0x7FF] for i in range(n_words)]
    return Mnemonic(tuple(out))


def mnemonic_problem(words) -> str | None:
    """Reason code for an invalid phrase, or ``None`` if it is valid."""
    try:
        mnemonic_to_entropy(words)
    except InvalidMnemonic as exc:
        return exc.args[0]
    return None


def mnemonic_to_entropy(words) -> bytes:
    ws = _as_words(words)
    if len(ws) not in WORD_COUNTS:
        raise InvalidMnemonic("BadWordCount")
    index = _word_index()
    value = 0
    for w in ws:
        if w not in index:
            raise InvalidMnemonic("UnknownWord")
        value = (value << 11) | index[w]
    n_bytes = WORD_COUNTS[len(ws)]
    cs_bits = n_bytes * 8 // 32
    entropy = (value >> cs_bits).to_bytes(n_bytes, "big")
    if value & ((1 << cs_bits) - 1) != hashlib.sha256(entropy).digest()[0] >> (8 - cs_bits):
        raise InvalidMnemonic("BadChecksum")
    return entropy


def validate_mnemonic(words) -> bool:
    return mnemonic_problem(words) is None


def mnemonic_to_seed(words, passphrase: str = "") -> bytes:
    ws = _as_words(words)
    problem = mnemonic_problem(ws)
    if problem:
        raise InvalidMnemonic(problem)
    password = unicodedata.normalize("NFKD", " ".join(ws)).encode()
    salt = unicodedata.normalize("NFKD", "mnemonic" + passphrase).encode()
    return hashlib.pbkdf2_hmac("sha512", password, salt, PBKDF2_ROUNDS, 64)


def derive_account(seed: bytes, index: int) -> DerivedAccount:
    """Simulator-local address: first 20 bytes of SHA-256(seed || index as u32 BE).

    Not an elliptic-curve derivation; live-chain keys come from a signer.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    digest = hashlib.sha256(seed + index.to_bytes(4, "big")).digest()
    return DerivedAccount(seed, index, "0x" + digest[:20].hex())
