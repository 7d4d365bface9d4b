"""Command line: ``jitnet simulate | allocate | analyze``.

Exit codes: 0 ok, 1 usage or configuration error, 2 runtime infeasibility
(FIFO overflow, infeasible packing).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .allocation import (AllocationInfeasible, PackingInfeasible, RingConfig, beta_from_delay,
                         construct_optimal_packing, multi_slot_assignment, packing_feasible,
                         requirement, solve_general_allocation, DEFAULT_WORK_BOUND, SlotAllocation)
from .analysis import (FIGURES, FigureError, NoConvergence, detect_convergence, emit_figure_data,
                       summarize)
from .clock import NS_PER_US, parse_duration
from .csma import run_csma
from .manifest import Manifest, ManifestError, load_manifest
from .tdma import ConfigError, run_experiment

OK, CONFIG_ERROR, INFEASIBLE = 0, 1, 2
OUTPUT_ROOT_ENV = "JITNET_OUTPUT_ROOT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def parse_int_list(text: str) -> list[int]:
    """``"3"``, ``"1,2,5"`` or ``"1..63"`` (inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError("empty list")
    return out


def _us(ns: float) -> str:
    return f"{ns / NS_PER_US:.3f} us"


# simulate

def _output_dir(m: Manifest, out: str | None) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / m.output


def _tdma_summary(m: Manifest, res) -> dict:
    cfg = m.tdma
    s = {"kind": "tdma", "mode": cfg.mode, "label": m.label, "seed": cfg.seed,
         "clock_setting": cfg.clock_setting, "num_frames": cfg.num_frames,
         "exchanges": len(res.traces), "underflows": res.fifo.underflow_events,
         "overflows": res.fifo.overflow_events, "overflowed": res.overflowed,
         "partial": res.partial, "server_underflows": res.server_underflows,
         "pull_overruns": res.overruns, "max_occupancy": max((o.occupancy for o in res.occupancy), default=0),
         "st_target_ns": res.st_target}
    if res.traces:
        wc = summarize(t.w_c for t in res.traces)
        rtt = summarize(t.rtt for t in res.traces)
        s["w_c_ns"] = wc._asdict()
        s["rtt_ns"] = rtt._asdict()
        s["mean_w_c_ns"], s["max_w_c_ns"], s["mean_rtt_ns"] = wc.mean, wc.max, rtt.mean
    return s


def simulate_one(m: Manifest, out_dir: Path) -> tuple[int, dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / io.MANIFEST_COPY).write_text(m.text)
    if m.kind == "csma":
        res = run_csma(m.csma)
        io.write_waits(out_dir / io.WAITS, m.csma.mode, res.waits)
        st = summarize(res.waits)
        summary = {"kind": "csma", "mode": m.csma.mode, "label": m.label, "seed": m.seed,
                   "packets": len(res.waits), "collisions": res.collisions,
                   "wait_ns": st._asdict(), "mean_wait_ns": st.mean}
        io.write_json(out_dir / io.SUMMARY, summary)
        return OK, summary
    res = run_experiment(m.tdma)
    io.write_traces(out_dir / io.TRACES, res.traces)
    io.write_occupancy(out_dir / io.OCCUPANCY, res.occupancy)
    if m.tdma.mode == "jit":
        io.write_telemetry(out_dir / io.TELEMETRY, res.telemetry)
    summary = _tdma_summary(m, res)
    io.write_json(out_dir / io.SUMMARY, summary)
    return (INFEASIBLE if res.overflowed else OK), summary


def _print_summary(out_dir: Path, s: dict) -> None:
    print(f"{out_dir}: {s['label']} seed={s['seed']}")
    if s["kind"] == "csma":
        print(f"  packets {s['packets']}  mean MAC wait {_us(s['mean_wait_ns'])}"
              f"  max {_us(s['wait_ns']['max'])}  collisions {s['collisions']}")
        return
    if "mean_rtt_ns" in s:
        print(f"  exchanges {s['exchanges']}  mean RTT {_us(s['mean_rtt_ns'])}"
              f"  mean W_c {_us(s['mean_w_c_ns'])}  max W_c {_us(s['max_w_c_ns'])}")
    print(f"  underflows {s['underflows']}  overflows {s['overflows']}"
          f"  max occupancy {s['max_occupancy']}")
    if s["overflowed"]:
        print("  FIFO overflow: run stopped early, results are partial")


def _simulate_job(args: tuple[str, int, str]) -> tuple[int, str, dict]:
    text, seed, out = args
    from .manifest import load_manifest_text
    m = load_manifest_text(text, seed_override=seed)
    code, s = simulate_one(m, Path(out))
    return code, out, s


def cmd_simulate(ns) -> int:
    m = load_manifest(Path(ns.manifest))
    out_dir = _output_dir(m, ns.out)
    if ns.seeds is None:
        code, s = simulate_one(m, out_dir)
        _print_summary(out_dir, s)
        return code
    seeds = parse_int_list(ns.seeds)
    for sd in seeds:
        m.with_seed(sd)  # validate before fanning out
    jobs = [(m.text, sd, str(out_dir / f"seed-{sd}")) for sd in seeds]
    with ProcessPoolExecutor(max_workers=ns.jobs) as ex:
        results = list(ex.map(_simulate_job, jobs))
    for _, out, s in results:
        _print_summary(Path(out), s)
    return max(code for code, _, _ in results)


# allocate

def _emit_allocation(alloc: SlotAllocation, out: str | None) -> None:
    rows = [[r[c] for c in io.ALLOCATION_COLUMNS] for r in alloc.rows()]
    if out:
        io.write_csv(Path(out), io.ALLOCATION_COLUMNS, rows)
        print(f"# wrote {len(rows)} pairs to {out}")
    else:
        print(",".join(io.ALLOCATION_COLUMNS))
        for r in rows:
            print(",".join("" if v is None else str(v) for v in r))


def cmd_allocate(ns) -> int:
    ring = RingConfig(ns.n, parse_duration(ns.slot_duration) if ns.slot_duration else 1)
    if ns.delays:
        if not ns.slot_duration:
            raise UsageError("--delays needs --slot-duration")
        reqs = [beta_from_delay(parse_duration(d), ring, j) for j, d in enumerate(ns.delays.split(","))]
        betas = [r.beta for r in reqs]
    elif ns.beta:
        betas = parse_int_list(ns.beta)
        reqs = [requirement(b, ring, j) for j, b in enumerate(betas)]
    else:
        raise UsageError("give --beta or --delays")

    if ns.check_all:
        bad = []
        for b in betas:
            ok, k = packing_feasible(b, ring)
            print(f"beta={b} k={k} {'feasible' if ok else 'infeasible (odd period)'}")
            if not ok:
                bad.append(b)
        print(f"# {len(betas) - len(bad)}/{len(betas)} feasible for N={ring.n_slots}")
        return INFEASIBLE if bad else OK

    if ns.interactions:
        if len(reqs) != 1:
            raise UsageError("--interactions takes a single beta")
        slots = multi_slot_assignment(reqs[0], ring, ns.interactions)
        _emit_allocation(SlotAllocation(slots, ring.n_slots, [reqs[0].beta] * len(slots)), ns.out)
        return OK

    if len(reqs) == 1 and ns.pairs is None:
        b = reqs[0].beta
        if b == 0:
            raise UsageError("beta reduces to 0 mod N; no packing is defined")
        ok, k = packing_feasible(b, ring)
        if not ok:
            print(str(PackingInfeasible(b, ring.n_slots, k)), file=sys.stderr)
            print(f"# infeasible: beta={b} N={ring.n_slots} k={k} (odd)")
            return INFEASIBLE
        print(f"# feasible: beta={b} N={ring.n_slots} k={k} subrings={ring.n_slots // k}")
        _emit_allocation(construct_optimal_packing(b, ring, ns.order), ns.out)
        return OK

    if len(reqs) == 1:
        reqs = [requirement(reqs[0].beta_raw, ring, j) for j in range(ns.pairs)]
    alloc = solve_general_allocation(reqs, ring, ns.work_bound)
    print(f"# {'exact' if alloc.exact else 'heuristic'} solution, total distance {alloc.total_distance}"
          f" (lower bound {sum(max(r.beta, 1) for r in reqs)})")
    _emit_allocation(alloc, ns.out)
    return OK


# analyze

def cmd_analyze(ns) -> int:
    run = io.load_run(Path(ns.run_dir))
    rows = emit_figure_data(run, ns.figure, ns.stride)
    out = Path(ns.out) if ns.out else Path(ns.run_dir) / f"{ns.figure}.csv"
    io.write_csv(out, io.FIGURE_COLUMNS, rows)
    print(f"wrote {len(rows)} points to {out}")
    ys = [y for _, _, y in rows]
    try:
        w = detect_convergence(ys, window=min(ns.window, len(ys)) if len(ys) >= 2 else 2)
        print(f"steady state from point {w.start_frame} to {w.end_frame}, mean {w.mean:.1f}")
    except NoConvergence as e:
        print(f"no steady state: {e}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jitnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a TDMA or CSMA manifest")
    s.add_argument("manifest")
    s.add_argument("--seeds", help="seed list or range, e.g. 1..20; one directory per seed")
    s.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<output>)")
    s.add_argument("--jobs", type=int, default=None, help="parallel workers for --seeds")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("allocate", help="slot allocation and packing feasibility")
    a.add_argument("--n", type=int, required=True, help="slots per frame")
    a.add_argument("--beta", help="separation: 3, 1,2,3 or 1..63")
    a.add_argument("--delays", help="server delays with units, e.g. 30us,2ms")
    a.add_argument("--slot-duration", help="slot length with unit (needed with --delays)")
    a.add_argument("--check-all", action="store_true", help="report feasibility of every beta")
    a.add_argument("--pairs", type=int, help="number of pairs for a single beta")
    a.add_argument("--interactions", type=int, help="slot pairs per frame for one client")
    a.add_argument("--order", choices=["client-first", "server-first"], default="client-first")
    a.add_argument("--work-bound", type=int, default=DEFAULT_WORK_BOUND)
    a.add_argument("--out", help="write the allocation CSV here")
    a.set_defaults(func=cmd_allocate)

    z = sub.add_parser("analyze", help="figure data from a run directory")
    z.add_argument("run_dir")
    z.add_argument("--figure", choices=FIGURES, required=True)
    z.add_argument("--stride", type=int)
    z.add_argument("--window", type=int, default=200, help="steady-state window in points")
    z.add_argument("--out")
    z.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (AllocationInfeasible,) as e:
        print(f"error: {e}", file=sys.stderr)
        return INFEASIBLE
    except (UsageError, ManifestError, ConfigError, FigureError, FileNotFoundError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
