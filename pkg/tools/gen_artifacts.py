"""Regenerate the shipped contract artifacts under src/tokenbench/data/artifacts.

The bytecode blobs are deterministic stand-ins sized like compiled contracts;
the simulator only reads their length and byte mix. Selectors are real
keccak-256 prefixes so the ABI is usable against a live node once compiled
bytecode is dropped in. Needs pycryptodome (dev-only).
"""
import json
import random
from pathlib import Path

from Crypto.Hash import keccak

OUT = Path(__file__).resolve().parents[1] / "src" / "tokenbench" / "data" / "artifacts"
PRELUDE = bytes.fromhex("608060405234801561001057600080fd5b50")


def selector(signature: str) -> str:
    return "0x" + keccak.new(digest_bits=256, data=signature.encode()).hexdigest()[:8]


def fn(name, op, inputs, outputs=(), mutability="nonpayable"):
    sig = f"{name}({','.join(t for _, t in inputs)})"
    return {
        "type": "function",
        "name": name,
        "op": op,
        "inputs": [{"name": n, "type": t} for n, t in inputs],
        "outputs": [{"type": t} for t in outputs],
        "stateMutability": mutability,
        "selector": selector(sig),
    }


def blob(name: str, size: int, zero_fraction: float = 0.15) -> str:
    rng = random.Random(f"artifact:{name}")
    body = bytes(0 if rng.random() < zero_fraction else rng.randrange(1, 256) for _ in range(size - len(PRELUDE)))
    return (PRELUDE + body).hex()


ERC20_ABI = [
    fn("transfer", "transfer", [("to", "address"), ("amount", "uint256")], ["bool"]),
    fn("approve", "approve", [("spender", "address"), ("amount", "uint256")], ["bool"]),
    fn("transferFrom", "transfer_from", [("owner", "address"), ("to", "address"), ("amount", "uint256")], ["bool"]),
    fn("mint", "mint_dmd", [("to", "address"), ("amount", "uint256")]),
    fn("buyDMD", "buy_dmd", [], [], "payable"),
    fn("balanceOf", "balance_of", [("address", "address")], ["uint256"], "view"),
    fn("allowance", "allowance", [("owner", "address"), ("spender", "address")], ["uint256"], "view"),
    fn("totalSupply", "total_supply", [], ["uint256"], "view"),
]

ERC721_ABI = [
    fn("mintPet", "mint_pet", [("to", "address"), ("bonusRatePct", "uint256")], ["uint256"]),
    fn("approve", "nft_approve", [("approved", "address"), ("tokenId", "uint256")]),
    fn("transferFrom", "nft_transfer", [("from", "address"), ("to", "address"), ("tokenId", "uint256")]),
    fn("listNFT", "list_nft", [("tokenId", "uint256"), ("priceDmd", "uint256")]),
    fn("buyNFT", "buy_nft", [("tokenId", "uint256")]),
    fn("cancelListing", "cancel_listing", [("tokenId", "uint256")]),
    fn("ownerOf", "owner_of", [("tokenId", "uint256")], ["address"], "view"),
    fn("isEarnable", "is_earnable", [("user", "address")], ["bool"], "view"),
]

ERC1155_ABI = [
    fn("balanceOf", "balance_of_id", [("account", "address"), ("id", "uint256")], ["uint256"], "view"),
    fn("setApprovalForAll", "set_approval_for_all", [("operator", "address"), ("approved", "bool")]),
]

ERC777_ABI = [
    fn("balanceOf", "balance_of", [("holder", "address")], ["uint256"], "view"),
    fn("send", "send", [("recipient", "address"), ("amount", "uint256"), ("data", "bytes")]),
]

ARTIFACTS = [
    ("dmd_token", "DMDToken", "ERC20", 4720, ERC20_ABI),
    ("pet_nft", "W2EPets", "ERC721", 5310, ERC721_ABI),
    ("erc1155", "ReferenceERC1155", "ERC1155", 4900, ERC1155_ABI),
    ("erc777", "ReferenceERC777", "ERC777", 5180, ERC777_ABI),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for stem, name, standard, size, abi in ARTIFACTS:
        doc = {"name": name, "standard": standard, "bytecodeHex": "0x" + blob(name, size), "abi": abi}
        (OUT / f"{stem}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {stem}.json ({size} bytes)")


if __name__ == "__main__":
    main()
