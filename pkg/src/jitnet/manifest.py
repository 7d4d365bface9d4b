"""TOML experiment manifests.

Example::

    [run]
    kind = "tdma"          # or "csma"
    seed = 7
    output = "table1-jit"

    [tdma]
    mode = "jit"
    n_slots = 64
    slot_duration = "150us"
    pairs = [[0, 2], [4, 6]]
    st_target = "30us"

    [client]
    base_delay = "30us"
    jitter_max = "30us"

Durations are strings with a unit; unknown sections and keys are errors.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .allocation import RingConfig, SlotAllocation
from .clock import parse_duration
from .csma import CsmaScenario
from .tdma import ExperimentConfig, PreemptionModel, default_allocation


class ManifestError(ValueError):
    pass


_RUN = {"kind", "seed", "output", "stride", "label"}
_TDMA = {"mode", "clock_setting", "drift", "tick_ratio", "n_slots", "slot_duration", "pairs",
         "beta", "num_pairs", "traced_pair", "alpha", "st_target", "q_init", "num_frames",
         "propagation_delay", "fifo_capacity", "airtime", "baseline_offset"}
_DELAY = {"base_delay", "jitter_max", "distribution"}
_CSMA = {"num_contenders", "turnaround", "mode", "num_packets", "slot_time", "contention_window",
         "airtime", "gen_interval", "server_preset"}
_SECTIONS = {"run": _RUN, "tdma": _TDMA, "client": _DELAY, "server": _DELAY, "csma": _CSMA}
_TDMA_DURATIONS = {"slot_duration", "st_target", "propagation_delay", "airtime", "baseline_offset"}
_CSMA_DURATIONS = {"turnaround", "slot_time", "airtime", "gen_interval"}


@dataclass
class Manifest:
    kind: str
    seed: int
    output: str
    stride: int | None
    label: str
    text: str
    tdma: ExperimentConfig | None = None
    csma: CsmaScenario | None = None

    def with_seed(self, seed: int) -> "Manifest":
        return load_manifest_text(self.text, seed_override=seed)


def _duration(section: str, key: str, value) -> int:
    try:
        return parse_duration(value)
    except ValueError as e:
        raise ManifestError(f"[{section}] {key}: {e}") from None


def _check_keys(doc: dict) -> None:
    for name, body in doc.items():
        if name not in _SECTIONS:
            raise ManifestError(f"unknown section [{name}]")
        if not isinstance(body, dict):
            raise ManifestError(f"{name} must be a section")
        for key in body:
            if key not in _SECTIONS[name]:
                raise ManifestError(f"unknown key {key!r} in [{name}]")


def _delay_model(doc: dict, name: str, default: PreemptionModel) -> PreemptionModel:
    sec = doc.get(name)
    if sec is None:
        return default
    return PreemptionModel(
        _duration(name, "base_delay", sec["base_delay"]) if "base_delay" in sec else default.base_delay,
        _duration(name, "jitter_max", sec["jitter_max"]) if "jitter_max" in sec else 0,
        sec.get("distribution", "uniform" if sec.get("jitter_max") else "none"),
    )


def _tdma_config(doc: dict, seed: int) -> ExperimentConfig:
    sec = dict(doc.get("tdma", {}))
    for key in _TDMA_DURATIONS & sec.keys():
        sec[key] = _duration("tdma", key, sec[key])
    base = ExperimentConfig.__dataclass_fields__
    ring = RingConfig(sec.pop("n_slots", 64), sec.pop("slot_duration", 150_000))
    pairs = sec.pop("pairs", None)
    beta = sec.pop("beta", 2)
    num_pairs = sec.pop("num_pairs", 5)
    if pairs is not None:
        alloc = SlotAllocation([tuple(p) for p in pairs], ring.n_slots)
    else:
        alloc = default_allocation(ring, beta, num_pairs)
    if "st_target" in sec:
        sec["st_target_override"] = sec.pop("st_target")
    kw = {k: v for k, v in sec.items() if k in base}
    client_default = base["client"].default
    server_default = base["server"].default
    return ExperimentConfig(ring=ring, allocation=alloc, seed=seed,
                            client=_delay_model(doc, "client", client_default),
                            server=_delay_model(doc, "server", server_default), **kw)


def _csma_scenario(doc: dict, seed: int) -> CsmaScenario:
    sec = dict(doc.get("csma", {}))
    for key in _CSMA_DURATIONS & sec.keys():
        sec[key] = _duration("csma", key, sec[key])
    return CsmaScenario(seed=seed, **sec)


def load_manifest_text(text: str, seed_override: int | None = None) -> Manifest:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ManifestError(f"not valid TOML: {e}") from None
    _check_keys(doc)
    run = doc.get("run", {})
    kind = run.get("kind", "tdma")
    if kind not in ("tdma", "csma"):
        raise ManifestError(f"[run] kind must be 'tdma' or 'csma', got {kind!r}")
    if kind == "tdma" and "csma" in doc:
        raise ManifestError("section [csma] given for a tdma run")
    if kind == "csma" and doc.keys() & {"tdma", "client", "server"}:
        raise ManifestError("tdma sections given for a csma run")
    seed = run.get("seed", 0) if seed_override is None else seed_override
    m = Manifest(kind, int(seed), run.get("output", "run"), run.get("stride"),
                 run.get("label", ""), text)
    try:
        if kind == "tdma":
            m.tdma = _tdma_config(doc, m.seed)
            if not m.label:
                m.label = f"{m.tdma.mode}-{m.tdma.clock_setting}"
        else:
            m.csma = _csma_scenario(doc, m.seed)
            if not m.label:
                m.label = m.csma.mode
    except ManifestError:
        raise
    except (ValueError, TypeError) as e:
        raise ManifestError(str(e)) from None
    return m


def load_manifest(path: Path) -> Manifest:
    return load_manifest_text(Path(path).read_text())
