"""CSV and JSON artifacts of a run. Times are integer nanoseconds."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .tdma import (TELEMETRY_COLUMNS, TRACE_COLUMNS, ExchangeTrace, OccupancySample, PullRecord,
                   trace_row)

TRACES = "traces.csv"
OCCUPANCY = "occupancy.csv"
TELEMETRY = "telemetry.csv"
WAITS = "waits.csv"
SUMMARY = "summary.json"
MANIFEST_COPY = "manifest.toml"
OCCUPANCY_COLUMNS = ["frame", "slot", "occupancy", "underflow_flag"]
WAIT_COLUMNS = ["packet_index", "mode", "wait_ns"]
FIGURE_COLUMNS = ["x", "series_label", "y"]
ALLOCATION_COLUMNS = ["pair_id", "client_slot", "server_slot", "beta", "distance"]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_traces(path: Path, traces: Iterable[ExchangeTrace]) -> None:
    write_csv(path, TRACE_COLUMNS, (trace_row(t) for t in traces))


def read_traces(path: Path) -> list[ExchangeTrace]:
    out = []
    for r in read_csv(path):
        times = {f"t{k}": int(r[f"t{k}"]) for k in range(11)}
        out.append(ExchangeTrace(int(r["pair"]), int(r["frame"]), **times))
    return out


def write_occupancy(path: Path, samples: Iterable[OccupancySample]) -> None:
    write_csv(path, OCCUPANCY_COLUMNS,
              ((s.frame, s.slot, s.occupancy, int(s.underflow)) for s in samples))


def read_occupancy(path: Path) -> list[OccupancySample]:
    return [OccupancySample(int(r["frame"]), int(r["slot"]), int(r["occupancy"]),
                            r["underflow_flag"] == "1") for r in read_csv(path)]


def write_telemetry(path: Path, records: Iterable[PullRecord]) -> None:
    # repr keeps floats exact across a round trip
    write_csv(path, TELEMETRY_COLUMNS,
              ([repr(v) if isinstance(v, float) else int(v) for v in rec] for rec in records))


def read_telemetry(path: Path) -> list[PullRecord]:
    types = [int, float, int, int, int, int, int, float, lambda s: s == "1"]
    return [PullRecord(*(t(r[c]) for t, c in zip(types, TELEMETRY_COLUMNS))) for r in read_csv(path)]


def write_waits(path: Path, mode: str, waits: Iterable[int]) -> None:
    write_csv(path, WAIT_COLUMNS, ((i, mode, w) for i, w in enumerate(waits)))


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class RunData:
    """What the analyzer needs from a run directory."""

    kind: str
    mode: str
    label: str
    summary: dict
    traces: list[ExchangeTrace] = field(default_factory=list)
    occupancy: list[OccupancySample] = field(default_factory=list)


def load_run(run_dir: Path) -> RunData:
    run_dir = Path(run_dir)
    sp = run_dir / SUMMARY
    if not sp.is_file():
        raise FileNotFoundError(f"{run_dir} has no {SUMMARY}")
    summary = json.loads(sp.read_text())
    kind = summary.get("kind", "tdma")
    data = RunData(kind, summary.get("mode", ""), summary.get("label", kind), summary)
    if kind == "tdma":
        tp = run_dir / TRACES
        if not tp.is_file():
            raise FileNotFoundError(f"{run_dir} has no {TRACES}")
        data.traces = read_traces(tp)
        op = run_dir / OCCUPANCY
        if op.is_file():
            data.occupancy = read_occupancy(op)
    return data
