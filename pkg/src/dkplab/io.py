"""Experiment configuration and report files.

A configuration is a TOML file with the tables ``[mesh]``, ``[field]``
(with an optional ``[field.params]``), ``[probe]`` and ``[output]``.  The
flat keys ``preset``, ``delta``, ``J``, ``n``, ``p``, ``q``, ``seed``,
``family`` and ``eps`` are accepted at top level as shorthands.  Unknown
keys are rejected.

Reports are JSON (``"schema": 1``), with the wall-clock timestamp kept
in a single ``timestamp`` key so two runs of the same configuration
differ only there.
"""
import copy
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigurationError

__all__ = [
    "ExperimentConfig",
    "load_config",
    "write_report",
    "write_cases_csv",
    "write_dat",
    "read_report",
    "to_plain",
    "aggregate_reports",
    "SCHEMA_VERSION",
    "PROBE_NAMES",
]

SCHEMA_VERSION = 1
PROBE_NAMES = ("dirichlet", "regularity", "perturbation", "bilipschitz", "ibp", "moser", "poisson",
               "codim-radial", "codim-identities")
FORMATS = ("json", "csv", "dat")

DEFAULTS = {
    "mesh": {"n": 2, "J": 6},
    "field": {"preset": "dkp_smooth", "params": {}},
    "probe": {"name": None, "p": 2.0, "q": 2.0, "family": "all", "seed": 0, "eps": 0.1, "c_delta": 0.1},
    "output": {"dir": ".", "formats": list(FORMATS)},
}
SHORTHANDS = {"preset": ("field", "preset"), "J": ("mesh", "J"), "n": ("mesh", "n"), "p": ("probe", "p"),
              "q": ("probe", "q"), "seed": ("probe", "seed"), "family": ("probe", "family"),
              "eps": ("probe", "eps")}


@dataclass
class ExperimentConfig:
    """Validated configuration; ``params`` are the preset keyword arguments."""

    n: int = 2
    J: int = 6
    preset: str = "dkp_smooth"
    params: dict = field(default_factory=dict)
    probe: str = None
    p: float = 2.0
    q: float = 2.0
    family: object = "all"
    seed: int = 0
    eps: float = 0.1
    c_delta: float = 0.1
    out_dir: str = "."
    formats: list = field(default_factory=lambda: list(FORMATS))

    def to_dict(self):
        return {"mesh": {"n": self.n, "J": self.J}, "field": {"preset": self.preset, "params": dict(self.params)},
                "probe": {"name": self.probe, "p": self.p, "q": self.q, "family": self.family,
                          "seed": self.seed, "eps": self.eps, "c_delta": self.c_delta},
                "output": {"dir": self.out_dir, "formats": list(self.formats)}}

    def build_field(self):
        from .fields import make_preset

        return make_preset(self.preset, n=self.n, **self.params)


def _merge(raw, cfg):
    for key, value in raw.items():
        if key in cfg and isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"[{key}] must be a table")
            for sub, v in value.items():
                if sub not in cfg[key]:
                    raise ConfigurationError(f"unknown key {key}.{sub}")
                if sub == "params":
                    if not isinstance(v, dict):
                        raise ConfigurationError("field.params must be a table")
                    cfg[key]["params"].update(v)
                else:
                    cfg[key][sub] = v
        elif key in SHORTHANDS:
            sec, sub = SHORTHANDS[key]
            cfg[sec][sub] = value
        elif key == "delta":
            cfg["field"]["params"]["delta"] = value
        else:
            raise ConfigurationError(f"unknown configuration key {key!r}")


def _number(value, name, kind=float):
    if isinstance(value, bool):
        raise ConfigurationError(f"{name} must be a number")
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {value!r}") from None
    if kind is int and v != value:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if kind is float and not math.isfinite(v):
        raise ConfigurationError(f"{name} must be finite")
    return v


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (flat or nested).

    Every value is validated before anything is computed; the preset is
    built once to run its own parameter checks.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"malformed configuration {path}: {exc}") from None
        _merge(raw, cfg)
    if overrides:
        _merge({k: v for k, v in overrides.items() if v is not None}, cfg)
    m, fl, pr, out = cfg["mesh"], cfg["field"], cfg["probe"], cfg["output"]
    n = _number(m["n"], "n", int)
    J = _number(m["J"], "J", int)
    if n not in (2, 3):
        raise ConfigurationError(f"n must be 2 or 3, got {n}")
    if not 3 <= J <= 10:
        raise ConfigurationError(f"J must be an integer in [3, 10], got {J}")
    p = _number(pr["p"], "p")
    q = _number(pr["q"], "q")
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    if q <= 1:
        raise ConfigurationError(f"q must exceed 1, got {q}")
    eps = _number(pr["eps"], "eps")
    if not 0 < eps < 1:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    seed = _number(pr["seed"], "seed", int)
    name = pr["name"]
    if name is not None and name not in PROBE_NAMES:
        raise ConfigurationError(f"unknown probe {name!r}; choose from {list(PROBE_NAMES)}")
    formats = out["formats"]
    if isinstance(formats, str):
        formats = [formats]
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ConfigurationError(f"unknown output format(s) {sorted(bad)}")
    family = pr["family"]
    from .probes import data_family

    data_family(family, n)
    config = ExperimentConfig(n=n, J=J, preset=str(fl["preset"]), params=dict(fl["params"]), probe=name,
                              p=p, q=q, family=family, seed=seed, eps=eps,
                              c_delta=_number(pr["c_delta"], "c_delta"), out_dir=str(out["dir"]),
                              formats=list(formats))
    try:
        config.build_field()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid parameters for preset {config.preset!r}: {exc}") from None
    return config


# writing ------------------------------------------------------------------------

def to_plain(obj):
    """JSON-ready copy: numpy scalars and arrays to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path, command, config, result, timestamp=None):
    """Write ``report.json``; returns the path."""
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    payload = {"schema": SCHEMA_VERSION, "command": command,
               "config": config.to_dict() if hasattr(config, "to_dict") else config,
               "result": to_plain(result), "timestamp": stamp}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(payload))
    return path


def write_cases_csv(path, cases, columns=("case", "numerator", "denominator", "ratio")):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for c in cases:
            w.writerow(["" if c.get(k) is None else _fmt(c.get(k)) for k in columns])
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_dat(path, columns, rows, comment=None):
    """Whitespace-separated table with a ``#`` header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("# " + " ".join(columns))
    for r in rows:
        lines.append(" ".join("nan" if v is None else _fmt(v) for v in r))
    path.write_text("\n".join(lines) + "\n")
    return path


# aggregation ----------------------------------------------------------------------

def read_report(path):
    """Load and minimally validate a report; raises ``ConfigurationError`` when malformed."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"{path}: unreadable report ({exc})") from None
    if not isinstance(data, dict) or data.get("schema") != SCHEMA_VERSION or "result" not in data:
        raise ConfigurationError(f"{path}: not a schema {SCHEMA_VERSION} report")
    return data


AGGREGATE_COLUMNS = ("probe", "preset", "J", "p", "max_ratio", "min_ratio", "spread", "cases", "source")


def _row(data, source):
    cfg = data.get("config") or {}
    res = data["result"]
    summ = res.get("summary", {}) if isinstance(res, dict) else {}
    return {"probe": res.get("probe", data.get("command")), "preset": cfg.get("field", {}).get("preset"),
            "J": cfg.get("mesh", {}).get("J"), "p": cfg.get("probe", {}).get("p"),
            "max_ratio": summ.get("max_ratio"), "min_ratio": summ.get("min_ratio"),
            "spread": summ.get("spread"), "cases": len(res.get("cases", [])), "source": str(source)}


def aggregate_reports(paths, out_dir, warn=None):
    """Merge reports into ``summary.csv`` and one ``<probe>.dat`` per probe.

    Malformed files are skipped with a warning.  Rows are keyed and sorted
    by ``(probe, preset, J, p)``.  Returns the list of rows.
    """
    warn = warn or (lambda msg: print(f"warning: {msg}", file=sys.stderr))
    rows = []
    for p in paths:
        try:
            rows.append(_row(read_report(p), p))
        except (ConfigurationError, AttributeError, TypeError) as exc:
            warn(f"skipping {p}: {exc}")
    if not rows:
        raise ConfigurationError("no valid report files")
    key = lambda r: tuple("" if r[k] is None else str(r[k]).zfill(4) if k == "J" else str(r[k])
                          for k in ("probe", "preset", "J", "p"))
    rows.sort(key=key)
    out = Path(out_dir)
    write_cases_csv(out / "summary.csv", rows, AGGREGATE_COLUMNS)
    for probe in sorted({str(r["probe"]) for r in rows}):
        sel = [r for r in rows if str(r["probe"]) == probe]
        write_dat(out / f"{probe}.dat", ("J", "max_ratio", "spread"),
                  [(r["J"], r["max_ratio"], r["spread"]) for r in sel], comment=f"probe {probe}")
    return rows
