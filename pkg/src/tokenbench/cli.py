"""Command-line entry point.

Data goes to stdout or files under the output directory; logs go to stderr.
Exit status: 0 success, 1 runtime failure (including any errored report
cell), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema

from . import errors
from .bench import (
    DEFAULT_TRIALS,
    LISTING_PRICE_DMD,
    BenchAccounts,
    W2ESuite,
    run_deploy_gas,
    run_function_gas,
    run_latency,
)
from .gateway import (
    SimGateway,
    default_artifact_dir,
    default_profiles_path,
    file_sha256,
    load_artifact,
    load_artifacts,
    load_profiles,
    make_gateway,
)
from .indexer import Indexer, sync
from .report import KINDS, BenchReport, load_reference, reference_report, render
from .wallet import derive_account, generate_mnemonic, mnemonic_to_seed

log = logging.getLogger("tokenbench")

BENCH_KINDS = {
    "deploy-gas": "deploy_gas",
    "exec-gas": "exec_gas",
    "deploy-time": "deploy_time",
    "exec-time": "exec_time",
}


@dataclass
class RunConfig:
    profiles: Path
    artifacts: Path
    output_dir: Path
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    format: str = "csv"
    journal: Path | None = None

    def validate(self) -> None:
        for p in (self.profiles, self.artifacts):
            if not p.exists():
                raise errors.InvalidConfig(f"path does not exist: {p}")
        if self.trials < 1:
            raise errors.InvalidConfig("trials must be >= 1")


def load_config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        schema = json.loads(resources.files("tokenbench.data").joinpath("config.schema.json").read_text())
        try:
            jsonschema.validate(doc, schema)
        except jsonschema.ValidationError as exc:
            raise errors.InvalidConfig(f"{args.config}: {exc.message}") from exc

    def pick(flag, key, default):
        v = getattr(args, flag, None)
        return v if v is not None else doc.get(key, default)

    cfg = RunConfig(
        profiles=Path(pick("profiles", "profiles", default_profiles_path())),
        artifacts=Path(pick("artifacts", "artifacts", default_artifact_dir())),
        output_dir=Path(pick("out", "outputDir", "bench-out")),
        trials=pick("trials", "trials", DEFAULT_TRIALS),
        seed=pick("seed", "seed", 0),
        format=pick("format", "format", "csv"),
        journal=Path(j) if (j := pick("journal", "journal", None)) else None,
    )
    cfg.validate()
    return cfg


def _selected_profiles(cfg: RunConfig, names):
    profiles = load_profiles(cfg.profiles)
    if not names:
        return list(profiles.values())
    missing = [n for n in names if n not in profiles]
    if missing:
        raise errors.UnknownNetwork(", ".join(missing))
    return [profiles[n] for n in names]


def _sim_lane(cfg: RunConfig, network: str | None):
    profiles = load_profiles(cfg.profiles)
    if network is None:
        network = next(iter(profiles))
    if network not in profiles:
        raise errors.UnknownNetwork(network)
    profile = profiles[network].with_seed(cfg.seed)
    gw = make_gateway(profile)
    accounts = BenchAccounts.from_seed(cfg.seed)
    if isinstance(gw, SimGateway):
        for a in (accounts.operator, accounts.seller, accounts.buyer):
            gw.fund(a, 10**24)
    return gw, accounts


def _journal(cfg: RunConfig, gw, contract: str | None) -> None:
    if cfg.journal and isinstance(gw, SimGateway):
        cfg.journal.parent.mkdir(parents=True, exist_ok=True)
        if cfg.journal.exists() and cfg.journal.stat().st_size:
            # each session is a fresh chain, so its blocks restart at 1
            log.warning("journal %s exists; replacing it with this session", cfg.journal)
            cfg.journal.write_text("")
        idx = Indexer(cfg.journal, contract=contract)
        sync(idx, gw)


# commands

def cmd_wallet_new(args, cfg) -> int:
    entropy = bytes.fromhex(args.entropy_hex) if args.entropy_hex else None
    m = generate_mnemonic(entropy, words=args.words)
    seed = mnemonic_to_seed(m, args.passphrase)
    acct = derive_account(seed, args.index)
    print(json.dumps({"mnemonic": m.phrase, "index": acct.index, "address": acct.address}, indent=1))
    return 0


def cmd_net_list(args, cfg) -> int:
    profiles = load_profiles(cfg.profiles)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["name", "kind", "networkConfig", "chainId", "blockIntervalMs", "gasPriceGwei",
                "expectedLatencyMs", "endpointUrl"])
    for p in profiles.values():
        sc = p.sim_config
        w.writerow([
            p.name, p.kind, p.description, p.chain_id,
            sc.block_interval_ms if sc else "", format(sc.gas_price_gwei, "f") if sc else "",
            sc.expected_latency_ms() if sc else "", p.endpoint_url or "",
        ])
    return 0


def cmd_deploy(args, cfg) -> int:
    path = Path(args.artifact)
    if not path.exists():
        arts = load_artifacts(cfg.artifacts)
        art = arts.get(args.artifact.upper().replace("-", ""))
        if art is None or isinstance(art, Exception):
            raise errors.InvalidArtifact(f"no artifact file or standard named {args.artifact}")
    else:
        art = load_artifact(path)
    gw, accounts = _sim_lane(cfg, args.network)
    r = gw.deploy(art, accounts.operator)
    print(json.dumps({"network": gw.profile.name, "artifact": art.name, **r.to_dict()}, indent=1))
    return 0


def cmd_bench(args, cfg) -> int:
    kind = BENCH_KINDS[args.which]
    profiles = _selected_profiles(cfg, args.network)
    artifacts = load_artifacts(cfg.artifacts)
    common = dict(seed=cfg.seed, profiles_hash=file_sha256(cfg.profiles))
    if kind == "deploy_gas":
        report = run_deploy_gas(profiles, artifacts, **common)
    elif kind == "exec_gas":
        report = run_function_gas(profiles, artifacts, **common)
    else:
        workload = "deploy" if kind == "deploy_time" else "buyNft"
        report = run_latency(profiles, workload, cfg.trials, artifacts, **common)
    compare = load_reference(args.compare if args.compare != "shipped" else None) if args.compare else None
    _write_report(cfg, kind, report, compare)
    return 1 if report.has_errors() else 0


def _write_report(cfg: RunConfig, kind: str, report: BenchReport, compare) -> None:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if cfg.format == "csv" else "md"
    text = render(report, cfg.format, compare)
    (out / f"{kind}.{ext}").write_text(text)
    (out / f"{kind}.json").write_text(report.to_json() + "\n")
    with (out / f"{kind}.samples.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network", "operation", "trial", "gasUsed", "gasPriceGwei", "feeGwei", "latencyMs"])
        for s in report.samples:
            w.writerow(["" if v is None else v for v in (
                s.network, s.operation, s.trial_index, s.gas_used, s.gas_price_gwei, s.fee_gwei, s.latency_ms)])
    meta = {**report.metadata, "kind": kind, "generatedAt": datetime.now(timezone.utc).isoformat()}
    (out / f"{kind}.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    sys.stdout.write(text)
    log.info("wrote %s/%s.%s", out, kind, ext)


def cmd_market(args, cfg) -> int:
    gw, accounts = _sim_lane(cfg, args.network)
    suite = W2ESuite(gw, load_artifacts(cfg.artifacts), accounts)
    price = args.price
    suite.fund_dmd(accounts.buyer, max(price, LISTING_PRICE_DMD) * 2)
    token_id, listed = suite.listed_pet(price)
    receipt = listed
    if args.action == "buy":
        receipt = gw.call_function(suite.pets, "buy_nft", {"tokenId": token_id}, accounts.buyer)
    elif args.action == "cancel":
        receipt = gw.call_function(suite.pets, "cancel_listing", {"tokenId": token_id}, accounts.seller)
    print(json.dumps({"network": gw.profile.name, "action": args.action, "tokenId": token_id,
                      "seller": accounts.seller, "buyer": accounts.buyer, **receipt.to_dict()}, indent=1))
    _journal(cfg, gw, suite.token)
    return 0


def cmd_workout(args, cfg) -> int:
    gw, accounts = _sim_lane(cfg, args.network)
    suite = W2ESuite(gw, load_artifacts(cfg.artifacts), accounts)
    user = accounts.seller
    pet = gw.call_function(suite.pets, "mint_pet", {"to": user, "bonusRatePct": args.bonus}, accounts.operator)
    pet_id = pet.return_value
    failures = 0
    for n, line in enumerate(Path(args.file).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            r = gw.call_function(suite.pets, "grant_reward",
                                 {"user": user, "petTokenId": pet_id, "record": record}, accounts.operator)
            out = {"line": n, "status": "granted", **r.return_value}
        except ValueError as exc:
            out, failures = {"line": n, "status": "rejected", "reason": f"BadRecord: {exc}"}, failures + 1
        except errors.Reverted as exc:
            out, failures = {"line": n, "status": "rejected", "reason": exc.reason}, failures + 1
        print(json.dumps(out, sort_keys=True))
    bal = gw.get_balance(user, suite.token)
    log.info("user %s now holds %d DMD", user, bal.dmd)
    _journal(cfg, gw, suite.token)
    return 1 if failures and args.strict else 0


def cmd_report_render(args, cfg) -> int:
    if args.input:
        report = BenchReport.from_json(Path(args.input).read_text())
    else:
        report = reference_report(args.table)
    compare = load_reference(args.compare if args.compare != "shipped" else None) if args.compare else None
    text = render(report, cfg.format, compare)
    if args.save:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        ext = "csv" if cfg.format == "csv" else "md"
        (cfg.output_dir / f"{report.kind}.rendered.{ext}").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_index_query(args, cfg) -> int:
    if cfg.journal is None:
        raise errors.InvalidConfig("index query needs --journal")
    idx = Indexer.rebuild(cfg.journal, contract=args.contract)
    print(json.dumps(idx.query_portfolio(args.address).to_dict(), indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (see config.schema.json); flags override it")
    common.add_argument("--profiles", help="network profile file (default: shipped six-network profiles)")
    common.add_argument("--artifacts", help="directory of contract artifact JSON files")
    common.add_argument("--out", help="output directory for reports (default: bench-out)")
    common.add_argument("--seed", type=int, help="seed for every simulated network (default 0)")
    common.add_argument("--format", choices=["csv", "markdown"], help="report format (default csv)")
    common.add_argument("--journal", help="append confirmed events to this indexer journal")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    ap = argparse.ArgumentParser(prog="tokenbench", description="Token-economy engine and multi-network benchmark.")
    sub = ap.add_subparsers(dest="group", required=True)

    wallet = sub.add_parser("wallet", help="mnemonic wallets").add_subparsers(dest="cmd", required=True)
    p = wallet.add_parser("new", parents=[common], help="create a mnemonic and print its first address")
    p.add_argument("--words", type=int, choices=[12, 15, 18, 21, 24], default=12, help="phrase length")
    p.add_argument("--passphrase", default="", help="optional BIP39 passphrase")
    p.add_argument("--entropy-hex", help="use this entropy instead of fresh randomness")
    p.add_argument("--index", type=int, default=0, help="account index to derive")
    p.set_defaults(func=cmd_wallet_new)

    net = sub.add_parser("net", help="network profiles").add_subparsers(dest="cmd", required=True)
    p = net.add_parser("list", parents=[common], help="list the profile registry")
    p.set_defaults(func=cmd_net_list)

    p = sub.add_parser("deploy", parents=[common], help="deploy one artifact on one network")
    p.add_argument("--network", required=True, help="profile name")
    p.add_argument("--artifact", required=True, help="artifact file or standard (ERC20, ERC721, ERC1155, ERC777)")
    p.set_defaults(func=cmd_deploy)

    bench = sub.add_parser("bench", help="run a benchmark").add_subparsers(dest="which", required=True)
    for name, kind in BENCH_KINDS.items():
        p = bench.add_parser(name, parents=[common], help=KINDS[kind])
        p.add_argument("--trials", type=int, help=f"trials per network for latency runs (default {DEFAULT_TRIALS})")
        p.add_argument("--network", action="append", help="restrict to this profile (repeatable)")
        p.add_argument("--compare", nargs="?", const="shipped",
                       help="add delta columns against reference data (default: shipped tables)")
        p.set_defaults(func=cmd_bench)

    market = sub.add_parser("market", help="scripted marketplace session on a simulated network")
    msub = market.add_subparsers(dest="action", required=True)
    for action in ("list", "buy", "cancel"):
        p = msub.add_parser(action, parents=[common], help=f"{action} a freshly minted pet")
        p.add_argument("--network", help="profile name (default: first profile)")
        p.add_argument("--price", type=int, default=LISTING_PRICE_DMD, help="listing price in DMD")
        p.set_defaults(func=cmd_market)

    workout = sub.add_parser("workout", help="workout rewards").add_subparsers(dest="cmd", required=True)
    p = workout.add_parser("simulate", parents=[common], help="grant rewards for a JSON-lines workout file")
    p.add_argument("--file", required=True, help="one JSON workout record per line")
    p.add_argument("--network", help="profile name (default: first profile)")
    p.add_argument("--bonus", type=int, default=120, help="bonus rate percent of the user's pet")
    p.add_argument("--strict", action="store_true", help="exit 1 if any record is rejected")
    p.set_defaults(func=cmd_workout)

    report = sub.add_parser("report", help="render reports").add_subparsers(dest="cmd", required=True)
    p = report.add_parser("render", parents=[common], help="render a saved report or a reference table")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="report JSON written by a bench command")
    src.add_argument("--table", choices=list(KINDS), help="render the shipped reference table")
    p.add_argument("--compare", nargs="?", const="shipped", help="add delta columns against reference data")
    p.add_argument("--save", action="store_true", help="also write the document under --out")
    p.set_defaults(func=cmd_report_render)

    index = sub.add_parser("index", help="query the event cache").add_subparsers(dest="cmd", required=True)
    p = index.add_parser("query", parents=[common], help="portfolio of one address from a journal")
    p.add_argument("--address", required=True)
    p.add_argument("--contract", help="only fold events of this token contract")
    p.set_defaults(func=cmd_index_query)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except (errors.TokenBenchError, OSError, ValueError) as exc:
        log.error("%s: %s", getattr(exc, "code", type(exc).__name__), exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
