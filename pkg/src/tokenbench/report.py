"""Benchmark report grid, averaging and CSV/Markdown rendering."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

from .errors import EmptySamples, UnknownFormat

MISSING = "—"
FEE_QUANTUM = Decimal("0.01")
LATENCY_QUANTUM = Decimal("0.1")

KINDS = {
    "deploy_gas": "Gas consumption to deploy contracts (Gwei)",
    "exec_gas": "Gas consumption of marketplace functions (Gwei)",
    "deploy_time": "Time to deploy the DMD token (ms)",
    "exec_time": "Time to execute buy NFT (ms)",
}
DEPLOY_COLUMNS = ["ERC-20", "ERC-721", "ERC-1155", "ERC-777"]
EXEC_COLUMNS = ["Buy NFT", "Sell NFT", "Cancel NFT"]


def ordinal(n: int) -> str:
    suffix = "th" if 10 <= n % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def mean(samples) -> float:
    samples = list(samples)
    if not samples:
        raise EmptySamples("mean of no samples")
    return statistics.mean(samples)


def quantize(value, quantum: Decimal) -> Decimal:
    return Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class CellError:
    code: str

    def __str__(self) -> str:
        return f"ERR:{self.code}"


@dataclass
class BenchSample:
    network: str
    operation: str
    trial_index: int
    gas_used: int | None
    gas_price_gwei: str | None
    fee_gwei: str | None
    latency_ms: int | None


@dataclass
class BenchReport:
    kind: str
    columns: list[str]
    networks: list[str] = field(default_factory=list)
    cells: dict[str, dict[str, object]] = field(default_factory=dict)
    samples: list[BenchSample] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def is_latency(self) -> bool:
        return self.kind.endswith("_time")

    @property
    def quantum(self) -> Decimal:
        return LATENCY_QUANTUM if self.is_latency else FEE_QUANTUM

    def has_errors(self) -> bool:
        return any(isinstance(v, CellError) for row in self.cells.values() for v in row.values())

    def add_row(self, network: str, values: dict[str, object]) -> None:
        self.networks.append(network)
        self.cells[network] = values

    def row_average(self, network: str) -> tuple[Decimal | None, bool]:
        """Mean over completed trials of the rendered cells, and whether every trial completed."""
        row = self.cells.get(network, {})
        done = [quantize(v, self.quantum) for c in self.columns
                if (v := row.get(c)) is not None and not isinstance(v, CellError)]
        if not done:
            return None, False
        return quantize(mean(done), self.quantum), len(done) == len(self.columns)

    def to_json(self) -> str:
        def cell(v):
            if isinstance(v, CellError):
                return {"error": v.code}
            return None if v is None else str(v)

        return json.dumps({
            "kind": self.kind,
            "columns": self.columns,
            "networks": self.networks,
            "cells": {n: {c: cell(v) for c, v in row.items()} for n, row in self.cells.items()},
            "samples": [asdict(s) for s in self.samples],
            "metadata": self.metadata,
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        d = json.loads(text)

        def cell(v):
            if isinstance(v, dict):
                return CellError(v["error"])
            return None if v is None else Decimal(v)

        return cls(
            kind=d["kind"],
            columns=d["columns"],
            networks=d["networks"],
            cells={n: {c: cell(v) for c, v in row.items()} for n, row in d["cells"].items()},
            samples=[BenchSample(**s) for s in d.get("samples", [])],
            metadata=d.get("metadata", {}),
        )


def load_reference(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("tokenbench.data").joinpath("reference_tables.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def reference_report(kind: str, reference: dict | None = None) -> BenchReport:
    """Published figures for one table, shaped as a BenchReport."""
    ref = reference or load_reference()
    table = ref[kind]
    if kind.endswith("_time"):
        n = max(len(v) for v in table["trials"].values())
        report = BenchReport(kind, [ordinal(i) for i in range(1, n + 1)])
        for net in ref["networks"]:
            report.add_row(net, {ordinal(i + 1): Decimal(v) for i, v in enumerate(table["trials"][net])})
    else:
        report = BenchReport(kind, list(table["columns"]))
        for net in ref["networks"]:
            report.add_row(net, dict(zip(table["columns"], (Decimal(v) for v in table["rows"][net]))))
    report.metadata = {"source": "reference"}
    return report


def _fmt(value, quantum: Decimal) -> str:
    if value is None:
        return MISSING
    if isinstance(value, CellError):
        return str(value)
    d = Decimal(str(value))
    if quantum == FEE_QUANTUM and d and abs(d) < 1:
        # sub-Gwei fees keep three significant digits instead of collapsing to 0.01
        fine = quantize(d, Decimal(1).scaleb(d.adjusted() - 2)).normalize()
        if -fine.as_tuple().exponent > 2:
            return f"{fine:f}"
    return str(quantize(d, quantum))


def _grid(report: BenchReport, compare: dict | None) -> tuple[list[str], list[list[str]], list[str]]:
    q = report.quantum
    header = ["Network", *report.columns]
    if report.is_latency:
        header.append("Average")
    ref = compare.get(report.kind) if compare else None
    if ref is not None:
        header += ["Δ Average"] if report.is_latency else [f"Δ {c}" for c in report.columns]
    rows, notes = [], []
    for net in report.networks:
        row = report.cells.get(net, {})
        line = [net] + [_fmt(row.get(c), q) for c in report.columns]
        avg = None
        if report.is_latency:
            avg, complete = report.row_average(net)
            cell = _fmt(avg, q)
            if avg is not None and not complete:
                cell += "*"
                done = sum(1 for c in report.columns if row.get(c) is not None
                           and not isinstance(row.get(c), CellError))
                notes.append(f"* {net}: average over {done} of {len(report.columns)} trials")
            line.append(cell)
        if ref is not None:
            if report.is_latency:
                published = ref["average"].get(net)
                line.append(_fmt(avg - Decimal(published), q) if published is not None and avg is not None else "")
            else:
                ref_row = dict(zip(ref["columns"], ref["rows"].get(net, [])))
                for c in report.columns:
                    v, p = row.get(c), ref_row.get(c)
                    ok = p is not None and v is not None and not isinstance(v, CellError)
                    line.append(_fmt(Decimal(str(v)) - Decimal(p), q) if ok else "")
        rows.append(line)
    return header, rows, notes


def render(report: BenchReport, fmt: str = "csv", compare: dict | None = None) -> str:
    """Render deterministically; ``compare`` is the reference-table document."""
    if fmt not in ("csv", "markdown"):
        raise UnknownFormat(fmt)
    header, rows, notes = _grid(report, compare)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    out = [f"### {KINDS.get(report.kind, report.kind)}", "",
           "| " + " | ".join(header) + " |",
           "|" + "|".join("---" if i == 0 else "---:" for i in range(len(header))) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    if notes:
        out += [""] + notes
    return "\n".join(out) + "\n"
