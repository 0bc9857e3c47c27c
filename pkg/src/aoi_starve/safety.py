"""Service-level timeliness checks and hazard-window violation curves."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

ASSUMPTION = "independent update opportunities within the hazard window (geometric failure model)"


class SafetyError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    aoi_threshold_ms: float
    target_slr: float

    def __post_init__(self):
        if not self.aoi_threshold_ms > 0:
            raise SafetyError(f"{self.name}: threshold must be > 0")
        if not 0.0 < self.target_slr <= 1.0:
            raise SafetyError(f"{self.name}: target_slr must lie in (0, 1]")


@dataclass
class SafetyVerdict:
    service: str
    measured_tdr: float
    slr_gap: float
    x: float | None = None
    violation_curve: list = field(default_factory=list)
    tdr_kind: str = "reset"

    @property
    def unsafe(self) -> bool:
        return self.slr_gap > 0

    @property
    def gap_pp(self) -> float:
        return 100.0 * self.slr_gap

    def to_dict(self) -> dict:
        return {
            "service": self.service,
            "x": self.x,
            "measured_tdr": self.measured_tdr,
            "slr_gap": self.slr_gap,
            "gap_pp": self.gap_pp,
            "unsafe": self.unsafe,
            "tdr_kind": self.tdr_kind,
            "assumption": ASSUMPTION,
            "violation_curve": [[h, p] for h, p in self.violation_curve],
        }


def builtin_services() -> list[ServiceSpec]:
    return [
        ServiceSpec("FCW", 100.0, 0.9999),
        ServiceSpec("EBW", 120.0, 0.9999),
        ServiceSpec("LCW", 400.0, 0.9990),
    ]


def load_services(path) -> list[ServiceSpec]:
    """Read a catalog CSV with header ``name,threshold_ms,target_slr``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or [f.strip() for f in rd.fieldnames] != ["name", "threshold_ms", "target_slr"]:
            raise SafetyError("service catalog header must be: name,threshold_ms,target_slr")
        return [ServiceSpec(row["name"].strip(), float(row["threshold_ms"]), float(row["target_slr"]))
                for row in rd]


def default_windows() -> list[float]:
    """Hazard windows 0.1 s to 3.0 s in steps of 0.1 s."""
    return [round(0.1 * i, 10) for i in range(1, 31)]


def update_opportunities(hazard_window_s: float, rri_ms: float) -> int:
    # tolerance guards 0.3 s / 100 ms style float products
    return int(math.floor(1000.0 * hazard_window_s / rri_ms + 1e-9))


def violation_probability(tdr: float, hazard_window_s: float, rri_ms: float = 100.0) -> float:
    """Chance of at least one threshold violation among the window's updates."""
    if not 0.0 <= tdr <= 1.0:
        raise SafetyError("tdr must lie in [0, 1]")
    if not hazard_window_s > 0:
        raise SafetyError("hazard window must be > 0")
    n = update_opportunities(hazard_window_s, rri_ms)
    if n == 0:
        raise SafetyError("window shorter than one update interval")
    return 1.0 - tdr ** n


def _lookup(table: dict, threshold: float):
    for k, v in table.items():
        if abs(float(k) - threshold) < 1e-9:
            return v
    raise KeyError(threshold)


def evaluate_service(spec: ServiceSpec, report, *, x: float | None = None, windows=None,
                     rri_ms: float = 100.0, time_fraction: bool = False) -> SafetyVerdict:
    """Score one service against a metrics report (reset-sample TDR by default)."""
    table = report.time_tdr_per_threshold if time_fraction else report.tdr_per_threshold
    try:
        measured = _lookup(table, spec.aoi_threshold_ms)
    except KeyError:
        raise SafetyError(
            f"{spec.name}: no TDR at {spec.aoi_threshold_ms:g} ms in the report; "
            f"re-run the simulation with that threshold registered") from None
    if measured is None:
        raise SafetyError(f"{spec.name}: report has no receptions to score")
    windows = default_windows() if windows is None else list(windows)
    curve = [(h, violation_probability(measured, h, rri_ms)) for h in windows]
    return SafetyVerdict(spec.name, float(measured), spec.target_slr - float(measured), x, curve,
                         "time" if time_fraction else "reset")


def curves_ordered(verdicts_by_x: dict, strict: bool = True) -> bool:
    """Whether violation probability grows with attack severity at every window."""
    xs = sorted(verdicts_by_x)
    curves = np.array([[p for _, p in verdicts_by_x[x].violation_curve] for x in xs])
    diff = np.diff(curves, axis=0)
    return bool(np.all(diff > 0) if strict else np.all(diff >= 0))


VERDICT_CSV_HEADER = ("service", "x", "measured_tdr", "gap", "h_s", "violation_prob")


def verdicts_csv(verdicts) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(VERDICT_CSV_HEADER)
    for v in verdicts:
        for h, p in v.violation_curve:
            wr.writerow([v.service, "" if v.x is None else repr(float(v.x)), repr(v.measured_tdr),
                         repr(v.slr_gap), repr(float(h)), repr(float(p))])
    return buf.getvalue()


def verdicts_json(verdicts) -> str:
    return json.dumps([v.to_dict() for v in verdicts], indent=2, sort_keys=True)
