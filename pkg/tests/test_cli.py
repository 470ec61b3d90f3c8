import csv
import io
import json
import logging
import shutil

import pytest

from tokenbench.cli import main
from tokenbench.gateway import default_artifact_dir

import published as pub


@pytest.fixture
def cli(capsys, caplog):
    """Run the entry point; returns (exit code, stdout, logged errors)."""
    caplog.set_level(logging.ERROR, logger="tokenbench")

    def run(*argv):
        caplog.clear()
        rc = main(list(argv))
        return rc, capsys.readouterr().out, caplog.text

    return run


def test_net_list(cli):
    rc, out, _ = cli("net", "list")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rc == 0
    assert [r["name"] for r in rows] == pub.NETWORKS
    assert rows[2]["networkConfig"] == "Custom config, shortened block time"
    assert rows[3]["gasPriceGwei"] == "0.0000001276"


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["bench", "deploy-time", "--trials", "many"])
    assert e.value.code == 2


def test_bench_twice_is_byte_identical(cli, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc, stdout, _ = cli("bench", "deploy-time", "--trials", "5", "--seed", "7", "--out", str(out))
        assert rc == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == ["deploy_time.csv", "deploy_time.json", "deploy_time.meta.json", "deploy_time.samples.csv"]
    for name in files:
        if name.endswith(".meta.json"):
            continue
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert stdout == (b / "deploy_time.csv").read_text()
    meta = json.loads((a / "deploy_time.meta.json").read_text())
    assert meta["seed"] == 7 and meta["trials"] == 5 and "generatedAt" in meta


def test_bench_markdown_and_compare(cli, tmp_path):
    rc, out, _ = cli("bench", "exec-gas", "--format", "markdown", "--compare", "--out", str(tmp_path))
    assert rc == 0
    assert (tmp_path / "exec_gas.md").exists()
    assert "Δ Buy NFT" in out


def test_config_file_and_flag_override(cli, tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"trials": 2, "seed": 3, "outputDir": str(tmp_path / "from-config")}))
    rc, _, _ = cli("bench", "deploy-time", "--config", str(conf), "--network", "Optimism testnet")
    assert rc == 0
    meta = json.loads((tmp_path / "from-config" / "deploy_time.meta.json").read_text())
    assert (meta["trials"], meta["seed"]) == (2, 3)
    rc, _, _ = cli("bench", "deploy-time", "--config", str(conf), "--trials", "3",
                   "--out", str(tmp_path / "flag"), "--network", "Optimism testnet")
    meta = json.loads((tmp_path / "flag" / "deploy_time.meta.json").read_text())
    assert (meta["trials"], meta["seed"]) == (3, 3)


@pytest.mark.parametrize("doc", [{"trials": 0}, {"color": "red"}, {"format": "xlsx"}, {"profiles": "/nope.json"}])
def test_bad_config_exits_1(cli, tmp_path, doc):
    conf = tmp_path / "bad.json"
    conf.write_text(json.dumps(doc))
    rc, out, err = cli("bench", "exec-gas", "--config", str(conf), "--out", str(tmp_path))
    assert rc == 1 and out == "" and "InvalidConfig" in err


def test_unknown_network_exits_1(cli, tmp_path):
    rc, _, err = cli("bench", "exec-gas", "--network", "Mainnet", "--out", str(tmp_path))
    assert rc == 1 and "UnknownNetwork" in err


def test_errored_cell_exits_1(cli, tmp_path):
    arts = tmp_path / "arts"
    arts.mkdir()
    for f in default_artifact_dir().glob("*.json"):
        if f.name != "erc777.json":
            shutil.copy(f, arts)
    rc, out, _ = cli("bench", "deploy-gas", "--artifacts", str(arts), "--out", str(tmp_path / "o"))
    assert rc == 1
    assert out.count("ERR:InvalidArtifact") == 6


def test_wallet_new_fixed_entropy(cli):
    rc, out, _ = cli("wallet", "new", "--entropy-hex", "00" * 16)
    doc = json.loads(out)
    assert rc == 0
    assert doc["mnemonic"] == " ".join(["abandon"] * 11 + ["about"])
    assert doc["address"].startswith("0x") and len(doc["address"]) == 42
    rc, out2, _ = cli("wallet", "new", "--entropy-hex", "00" * 16, "--index", "1")
    assert json.loads(out2)["address"] != doc["address"]


def test_wallet_new_random_words(cli):
    rc, out, _ = cli("wallet", "new", "--words", "24")
    assert rc == 0 and len(json.loads(out)["mnemonic"].split()) == 24


def test_report_render_reference(cli, tmp_path):
    rc, out, _ = cli("report", "render", "--table", "deploy_time", "--save", "--out", str(tmp_path))
    assert rc == 0
    last = {line.split(",")[0]: line.split(",")[-1] for line in out.splitlines()[1:]}
    assert {k: v for k, v in last.items()} == {n: f"{float(a):.1f}" for n, (_, a) in pub.DEPLOY_TIME.items()}
    assert (tmp_path / "deploy_time.rendered.csv").read_text() == out


def test_report_render_saved_json(cli, tmp_path):
    cli("bench", "exec-gas", "--out", str(tmp_path))
    rc, out, _ = cli("report", "render", "--input", str(tmp_path / "exec_gas.json"))
    assert rc == 0 and out == (tmp_path / "exec_gas.csv").read_text()


def test_deploy_by_standard_and_path(cli):
    rc, out, _ = cli("deploy", "--network", "Private Eth 2.0", "--artifact", "erc-20")
    doc = json.loads(out)
    assert rc == 0 and doc["status"] in (1, "success", True) and doc["contractAddress"]
    rc, out, _ = cli("deploy", "--network", "Polygon testnet",
                     "--artifact", str(default_artifact_dir() / "erc1155.json"))
    assert rc == 0 and json.loads(out)["network"] == "Polygon testnet"
    rc, _, err = cli("deploy", "--network", "Polygon testnet", "--artifact", "ERC4626")
    assert rc == 1 and "InvalidArtifact" in err


def test_market_session_and_index_query(cli, tmp_path):
    journal = tmp_path / "events.jsonl"
    rc, out, _ = cli("market", "buy", "--network", "Optimism testnet", "--journal", str(journal))
    doc = json.loads(out)
    assert rc == 0 and doc["action"] == "buy"
    rc, out, _ = cli("index", "query", "--journal", str(journal), "--address", doc["buyer"])
    portfolio = json.loads(out)
    assert rc == 0 and doc["tokenId"] in portfolio["pets"]
    rc, out, _ = cli("market", "cancel", "--journal", str(journal))
    doc = json.loads(out)
    rc, out, _ = cli("index", "query", "--journal", str(journal), "--address", doc["seller"])
    assert json.loads(out)["listings"] == {}


def test_index_query_needs_journal(cli):
    rc, _, err = cli("index", "query", "--address", "0x" + "00" * 20)
    assert rc == 1 and "journal" in err


def test_workout_simulate(cli, tmp_path):
    f = tmp_path / "w.jsonl"
    f.write_text("\n".join([
        json.dumps({"durationSec": 1800, "distanceM": 5000, "avgSpeedKmh": 10, "steps": 0, "startedAt": ""}),
        json.dumps({"durationSec": 1800, "distanceM": 5000, "avgSpeedKmh": 40, "steps": 0, "startedAt": ""}),
        "{not json",
    ]) + "\n")
    rc, out, _ = cli("workout", "simulate", "--file", str(f))
    lines = [json.loads(x) for x in out.splitlines()]
    assert rc == 0
    assert lines[0]["status"] == "granted" and lines[0]["totalDmd"] == 60
    assert [x["status"] for x in lines[1:]] == ["rejected", "rejected"]
    assert lines[2]["reason"].startswith("BadRecord")
    rc, _, _ = cli("workout", "simulate", "--file", str(f), "--strict")
    assert rc == 1
