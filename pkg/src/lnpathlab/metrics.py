"""Aggregation of simulation records into per-client tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .graph import ConnectivityClass

SUCCESS = "success"


@dataclass(frozen=True)
class AmountBin:
    """Half-open amount range [lo, hi) in msat."""

    lo: int
    hi: float  # math.inf for an open top
    label: str

    def contains(self, amt_msat: int) -> bool:
        return self.lo <= amt_msat < self.hi


def decade_bins(first: int = 0, last: int = 8) -> list[AmountBin]:
    """Sat decades [10^k, 10^(k+1)).  The first bin also takes sub-sat
    amounts and the last one is open at the top, so every amount has a bin."""
    out = []
    for k in range(first, last):
        lo = 0 if k == first else 10**k * 1000
        hi = math.inf if k == last - 1 else 10 ** (k + 1) * 1000
        out.append(AmountBin(lo, hi, f"10^{k}-10^{k + 1}"))
    return out


DEFAULT_BINS = decade_bins()


def parse_bin(text: str, bins: Sequence[AmountBin] = DEFAULT_BINS) -> AmountBin:
    """A bin by label (``10^5-10^6``) or by sat range (``1e5-1e6``)."""
    for b in bins:
        if b.label == text:
            return b
    lo_s, sep, hi_s = text.partition("-")
    if not sep:
        raise ValueError(f"bad bin {text!r}")
    lo, hi = float(lo_s) * 1000, float(hi_s) * 1000
    if not lo < hi:
        raise ValueError(f"empty bin {text!r}")
    return AmountBin(int(lo), hi, text)


@dataclass
class Cell:
    value: Optional[float]
    num: Optional[float] = None
    den: Optional[int] = None

    @classmethod
    def rate(cls, ok: int, n: int) -> "Cell":
        return cls(100.0 * ok / n if n else None, ok, n)

    @property
    def absent(self) -> bool:
        return self.value is None


@dataclass
class MetricsTable:
    """rows x columns of cells; ``columns`` keeps the client order."""

    kind: str
    rows: list
    columns: list
    cells: dict  # (row, column) -> Cell
    meta: dict = field(default_factory=dict)

    def cell(self, row: str, column: str) -> Cell:
        return self.cells[(row, column)]

    def value(self, row: str, column: str) -> Optional[float]:
        return self.cells[(row, column)].value

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricsTable) and self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": list(self.rows),
            "columns": list(self.columns),
            "meta": self.meta,
            "cells": [
                {"row": r, "column": c, "value": cl.value, "num": cl.num, "den": cl.den}
                for r in self.rows
                for c in self.columns
                for cl in (self.cells[(r, c)],)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsTable":
        cells = {(x["row"], x["column"]): Cell(x["value"], x["num"], x["den"]) for x in d["cells"]}
        return cls(d["kind"], list(d["rows"]), list(d["columns"]), cells, dict(d.get("meta", {})))


def _columns(records, columns: Optional[Sequence[str]]) -> list[str]:
    if columns is not None:
        return list(columns)
    for r in records:
        return list(r.outcomes)
    return []


def success_rates_by_bin(records, bins: Sequence[AmountBin] = DEFAULT_BINS, columns=None) -> MetricsTable:
    cols = _columns(records, columns)
    cells = {}
    for b in bins:
        inside = [r for r in records if b.contains(r.amt_msat)]
        for c in cols:
            ok = sum(r.outcomes[c].status == SUCCESS for r in inside)
            cells[(b.label, c)] = Cell.rate(ok, len(inside))
    return MetricsTable("success", [b.label for b in bins], cols, cells, {"unit": "% success", "bins": "half-open sat decades"})


def median_lower(values: Sequence[float]) -> Optional[float]:
    """Lower median; None for an empty input."""
    if not values:
        return None
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def common_cohort(records, min_common_successes: int = 5, columns=None) -> list:
    cols = _columns(records, columns)
    return [r for r in records if sum(r.outcomes[c].status == SUCCESS for c in cols) >= min_common_successes]


FEE_RATIO = "fee ratio (median, %)"
PATH_LEN = "path length (avg.)"
TIMELOCK = "timelock (avg.)"


def aggregate_metrics(
    records, min_common_successes: int = 5, bins: Sequence[AmountBin] = DEFAULT_BINS, columns=None
) -> MetricsTable:
    """Fee ratio, path length and timelock per client over the transactions
    at least ``min_common_successes`` clients delivered.  The cohort filter is
    applied once, globally; per-bin fee ratio rows follow the summary rows."""
    cols = _columns(records, columns)
    cohort = common_cohort(records, min_common_successes, cols)
    rows = [FEE_RATIO, PATH_LEN, TIMELOCK]
    cells = {}
    for c in cols:
        ok = [(r, r.outcomes[c]) for r in cohort if r.outcomes[c].status == SUCCESS]
        n = len(ok)
        med = median_lower([o.fee_msat / r.amt_msat for r, o in ok])
        cells[(FEE_RATIO, c)] = Cell(None if med is None else 100.0 * med, None, n)
        lens = sum(o.path_len for _, o in ok)
        locks = sum(o.timelock for _, o in ok)
        cells[(PATH_LEN, c)] = Cell(lens / n if n else None, lens, n)
        cells[(TIMELOCK, c)] = Cell(locks / n if n else None, locks, n)
    for b in bins:
        row = f"{FEE_RATIO} {b.label}"
        rows.append(row)
        for c in cols:
            ratios = [
                r.outcomes[c].fee_msat / r.amt_msat
                for r in cohort
                if b.contains(r.amt_msat) and r.outcomes[c].status == SUCCESS
            ]
            med = median_lower(ratios)
            cells[(row, c)] = Cell(None if med is None else 100.0 * med, None, len(ratios))
    meta = {"min_common_successes": min_common_successes, "cohort": len(cohort), "median": "lower"}
    return MetricsTable("metrics", rows, cols, cells, meta)


CLASS_ORDER = (ConnectivityClass.WELL, ConnectivityClass.FAIR, ConnectivityClass.POOR)
CLASS_PAIRS = [f"{a.value}->{b.value}" for a in CLASS_ORDER for b in CLASS_ORDER]


def connectivity_cross_table(records, amount_bin: AmountBin, columns=None) -> MetricsTable:
    cols = _columns(records, columns)
    cells = {}
    for pair in CLASS_PAIRS:
        src, dst = pair.split("->")
        inside = [
            r
            for r in records
            if r.sender_class == src and r.receiver_class == dst and amount_bin.contains(r.amt_msat)
        ]
        for c in cols:
            ok = sum(r.outcomes[c].status == SUCCESS for r in inside)
            cells[(pair, c)] = Cell.rate(ok, len(inside))
    return MetricsTable("cross", list(CLASS_PAIRS), cols, cells, {"bin": amount_bin.label, "unit": "% success"})


# ------------------------------------------------------------------ emit


def _fmt(table: MetricsTable, row: str, v: Optional[float]) -> str:
    if v is None:
        return "n/a"
    if table.kind in ("success", "cross", "ablation"):
        return f"{v:.3f}"
    return f"{v:.4f}"


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and x.is_integer():
        x = int(x)
    return repr(x)


def _parse_num(s: str):
    if s == "":
        return None
    return float(s) if any(ch in s for ch in ".eEn") else int(s)


_HEADER = {"success": "Amount Bins", "metrics": "Attribute", "cross": "Source->Receiver", "ablation": "Scale"}


def emit(table: MetricsTable, format: str = "csv") -> bytes:
    if format == "json":
        return (json.dumps(table.to_dict(), indent=2) + "\n").encode()
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "row", "column", "value", "num", "den"])
        for r in table.rows:
            for c in table.columns:
                cl = table.cells[(r, c)]
                w.writerow([table.kind, r, c, _num(cl.value), _num(cl.num), _num(cl.den)])
        return buf.getvalue().encode()
    if format in ("md", "markdown"):
        head = [_HEADER.get(table.kind, "")] + list(table.columns)
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for r in table.rows:
            vals = [_fmt(table, r, table.cells[(r, c)].value) for c in table.columns]
            lines.append("| " + " | ".join([r] + vals) + " |")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown format {format!r}")


def parse(data: bytes, format: str = "csv") -> MetricsTable:
    text = data.decode()
    if format == "json":
        return MetricsTable.from_dict(json.loads(text))
    if format != "csv":
        raise ValueError("only csv and json tables can be parsed")
    rows_in = list(csv.DictReader(io.StringIO(text)))
    if not rows_in:
        raise ValueError("empty table")
    rows, cols, cells = [], [], {}
    for x in rows_in:
        if x["row"] not in rows:
            rows.append(x["row"])
        if x["column"] not in cols:
            cols.append(x["column"])
        cells[(x["row"], x["column"])] = Cell(_parse_num(x["value"]), _parse_num(x["num"]), _parse_num(x["den"]))
    return MetricsTable(rows_in[0]["kind"], rows, cols, cells)


def build_table(kind: str, records, amount_bin: Optional[AmountBin] = None, **kw) -> MetricsTable:
    if kind == "success":
        return success_rates_by_bin(records, **kw)
    if kind == "metrics":
        return aggregate_metrics(records, **kw)
    if kind == "cross":
        if amount_bin is None:
            raise ValueError("the cross table needs a bin")
        return connectivity_cross_table(records, amount_bin, **kw)
    raise ValueError(f"unknown table {kind!r}")

