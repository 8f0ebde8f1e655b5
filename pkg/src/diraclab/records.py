"""Run configuration and result records.

A record is a keyed text file, one ``key = <json>`` line per entry, so that
runs diff cleanly and read back losslessly.  The main table of a run is also
written as CSV next to it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

HEADER = "# diraclab result record v1"

DEFAULT_TOLERANCES = {
    "eigensolver": 1e-10,
    "quadrature": 1e-6,
    "mass": 1e-6,
    "hermiticity": 1e-6,
    "direction_spread": 1e-5,
    "sphere_margin": 1e-3,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    n: int = 2
    delta: tuple[float, ...] = (0.5, 0.0)
    cutoff: int = 16
    grid: int = 64
    eps: tuple[float, ...] = (0.01, 0.005, 0.0025)
    family: str = "simple"
    sign: int = 1
    budget: int = 120
    max_freq: int = 1
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: str | None = None
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.command not in ("spectrum", "sweep", "mass", "minimize", "selfcheck"):
            raise ConfigError(f"unknown command {self.command!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if len(self.delta) != self.n or any(d not in (0.0, 0.5) for d in self.delta):
            raise ConfigError(f"delta must have {self.n} entries, each 0 or 1/2")
        if self.cutoff < 1:
            raise ConfigError("cutoff must be >= 1")
        if self.grid < 4:
            raise ConfigError("grid must be >= 4")
        if self.command == "sweep":
            if len(self.eps) < 3:
                raise ConfigError("sweep needs at least three epsilon values")
            if any(e <= 0 for e in self.eps):
                raise ConfigError("epsilon values must be positive")
            ratios = [a / b for a, b in zip(self.eps[:-1], self.eps[1:])]
            if any(abs(r - ratios[0]) > 1e-9 * ratios[0] for r in ratios) or ratios[0] == 1:
                raise ConfigError("epsilon values must be geometrically spaced")
            if self.family not in ("simple", "three-zone"):
                raise ConfigError("family must be 'simple' or 'three-zone'")
            if self.n not in (2, 3):
                raise ConfigError("sweeps are implemented for n = 2, 3")
            rho = max(self.eps) ** (1.0 / (self.n + 1))
            if 2 * rho >= 0.5:
                raise ConfigError(f"largest epsilon gives 2 rho = {2 * rho:.3f}, beyond the chart (< 1/2)")
        if self.sign not in (1, -1):
            raise ConfigError("sign must be +1 or -1")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerances: {sorted(unknown)}")
        return self

    def canonical(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("output")
        d["delta"] = list(self.delta)
        d["eps"] = list(self.eps)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Check:
    name: str
    passed: bool
    defect: float
    threshold: float

    @classmethod
    def below(cls, name: str, defect: float, threshold: float) -> "Check":
        return cls(name, bool(defect < threshold), float(defect), float(threshold))

    @classmethod
    def above(cls, name: str, value: float, threshold: float) -> "Check":
        return cls(name, bool(value > threshold), float(value), float(threshold))


@dataclass
class ResultRecord:
    command: str
    config: dict[str, Any]
    config_hash: str
    scalars: dict[str, Any] = field(default_factory=dict)
    table: list[dict[str, Any]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    status: str = "ok"  # ok | failed | kernel
    timestamp: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def dumps(self) -> str:
        def enc(v):
            return json.dumps(v, sort_keys=True, allow_nan=True)

        lines = [HEADER, f"command = {enc(self.command)}", f"config_hash = {enc(self.config_hash)}",
                 f"status = {enc(self.status)}", f"timestamp = {enc(self.timestamp)}"]
        for k in sorted(self.config):
            lines.append(f"config.{k} = {enc(self.config[k])}")
        for k in sorted(self.scalars):
            lines.append(f"scalar.{k} = {enc(self.scalars[k])}")
        for c in self.checks:
            lines.append(f"check.{c.name} = {enc({'passed': c.passed, 'defect': c.defect, 'threshold': c.threshold})}")
        lines.append(f"table = {enc(self.table)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ResultRecord":
        rec = cls(command="", config={}, config_hash="")
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, _, raw = line.partition(" = ")
            value = json.loads(raw)
            if key in ("command", "config_hash", "status", "timestamp"):
                setattr(rec, key, value)
            elif key == "table":
                rec.table = value
            elif key.startswith("config."):
                rec.config[key[7:]] = value
            elif key.startswith("scalar."):
                rec.scalars[key[7:]] = value
            elif key.startswith("check."):
                rec.checks.append(Check(key[6:], value["passed"], value["defect"], value["threshold"]))
            else:
                raise ValueError(f"unrecognized record key {key!r}")
        return rec

    def write(self, prefix: str | Path) -> tuple[Path, Path]:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        rec_path = prefix.with_name(prefix.name + ".record.txt")
        tab_path = prefix.with_name(prefix.name + ".table.csv")
        rec_path.write_text(self.dumps())
        write_table(tab_path, self.table)
        return rec_path, tab_path


def write_table(path: Path, rows: list[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_table(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def finite_or_none(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)
