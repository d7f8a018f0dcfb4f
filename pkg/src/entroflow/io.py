"""File formats: curve and drift CSV, scenario TOML, JSON reports, long CSV.

All writers go through ``atomic_write`` (temporary file in the target
directory, then ``os.replace``).  Floats are written with ``repr`` so that
reading a file back reproduces every bit.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .control import Linear, OptimizerSettings, Quadratic, Scenario, ScenarioError
from .curves import DriftField, MeasureCurve
from .mollify import MollifierConfig
from .space import Space, load_space

__all__ = [
    "ConfigError",
    "atomic_write",
    "write_curve",
    "read_curve",
    "curve_to_csv",
    "curve_from_csv",
    "write_drift",
    "read_drift",
    "drift_to_csv",
    "drift_from_csv",
    "to_json",
    "write_json",
    "long_csv",
    "ScenarioConfig",
    "load_scenario",
]


class ConfigError(ValueError):
    """Malformed configuration or input file."""


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {token!r} as a number") from exc


# -------------------------------------------------------------------- curves
def curve_to_csv(curve: MeasureCurve) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s"] + [f"node_{i}" for i in range(curve.space.n)])
    for s, row in zip(curve.s, curve.rho):
        w.writerow([_fmt(s)] + [_fmt(v) for v in row])
    return buf.getvalue()


def curve_from_csv(text: str, space: Space) -> MeasureCurve:
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise ConfigError("curve file is empty")
    header = rows[0]
    expected = ["s"] + [f"node_{i}" for i in range(space.n)]
    if header != expected:
        raise ConfigError(f"curve header must be s,node_0..node_{space.n - 1}")
    data = np.array([[_parse_float(t, "curve file") for t in r] for r in rows[1:]])
    if data.ndim != 2 or data.shape[0] < 2:
        raise ConfigError("curve file needs at least two rows")
    return MeasureCurve(space, data[:, 0], data[:, 1:])


def write_curve(path, curve: MeasureCurve) -> Path:
    return atomic_write(path, curve_to_csv(curve))


def read_curve(path, space: Space) -> MeasureCurve:
    return curve_from_csv(Path(path).read_text(), space)


# -------------------------------------------------------------------- drifts
def _edge_names(space: Space) -> list[str]:
    return [f"edge_{x}_{y}" for x, y in space.edges]


def drift_to_csv(drift: DriftField, space: Space) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["interval"] + _edge_names(space))
    for k, row in enumerate(drift.values):
        w.writerow([str(k)] + [_fmt(v) for v in row])
    return buf.getvalue()


def drift_from_csv(text: str, space: Space) -> DriftField:
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0] != ["interval"] + _edge_names(space):
        raise ConfigError("drift header must be interval followed by edge_x_y columns in edge order")
    body = rows[1:]
    if [int(r[0]) for r in body] != list(range(len(body))):
        raise ConfigError("drift intervals must be numbered 0..N-1")
    vals = np.array([[_parse_float(t, "drift file") for t in r[1:]] for r in body])
    return DriftField(vals.reshape(len(body), space.n_edges))


def write_drift(path, drift: DriftField, space: Space) -> Path:
    return atomic_write(path, drift_to_csv(drift, space))


def read_drift(path, space: Space) -> DriftField:
    return drift_from_csv(Path(path).read_text(), space)


# ------------------------------------------------------------ json and long
def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as ``null``."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, to_json(obj))


def long_csv(rows) -> str:
    """Plot-ready long format ``run_id,s,quantity,value``."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "s", "quantity", "value"])
    for run_id, s, quantity, value in rows:
        w.writerow([run_id, _fmt(s), quantity, _fmt(value)])
    return buf.getvalue()


# ----------------------------------------------------------------- scenarios
_SECTIONS = {
    "space": {"spec", "beta", "weighting"},
    "horizon": {"t", "N"},
    "initial": {"uniform", "density"},
    "running_cost": {"constant", "values", "table", "sign"},
    "terminal": {"kind", "f", "g", "c"},
    "optimizer": {"max_iter", "gtol", "restarts", "memory"},
    "mollifier": {"delta", "power", "nodes", "time_power"},
}
_REQUIRED = ("space", "horizon", "initial", "running_cost", "terminal", "optimizer")


def _exactly_one(section: dict, keys: tuple, where: str) -> str:
    present = [k for k in keys if k in section]
    if len(present) != 1:
        raise ConfigError(f"[{where}] needs exactly one of {list(keys)}")
    return present[0]


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario file contents; ``data`` is the canonical dict."""

    data: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown scenario sections: {sorted(unknown)}")
        for name in _REQUIRED:
            if name not in data:
                raise ConfigError(f"scenario lacks section [{name}]")
        for name, section in data.items():
            if not isinstance(section, dict):
                raise ConfigError(f"[{name}] must be a table")
            bad = set(section) - _SECTIONS[name]
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        if "spec" not in data["space"]:
            raise ConfigError("[space] needs spec")
        for key in ("t", "N"):
            if key not in data["horizon"]:
                raise ConfigError(f"[horizon] needs {key}")
        _exactly_one(data["initial"], ("uniform", "density"), "initial")
        _exactly_one(data["running_cost"], ("constant", "values", "table"), "running_cost")
        kind = data["terminal"].get("kind")
        if kind not in ("linear", "quadratic"):
            raise ConfigError("[terminal] kind must be 'linear' or 'quadratic'")
        if kind == "linear" and ("f" not in data["terminal"] or {"g", "c"} & set(data["terminal"])):
            raise ConfigError("linear terminal cost takes exactly the key f")
        if kind == "quadratic" and not {"g", "c"} <= set(data["terminal"]):
            raise ConfigError("quadratic terminal cost needs g and c")
        return cls(data)

    @classmethod
    def from_toml(cls, text: str) -> "ScenarioConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"scenario is not valid TOML: {exc}") from exc
        return cls.from_dict(data)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    def mollifier(self) -> MollifierConfig:
        try:
            return MollifierConfig.from_dict(self.data.get("mollifier", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def build(self, base_dir: Path | None = None) -> Scenario:
        d = self.data
        sp = d["space"]
        spec = str(sp["spec"])
        if base_dir is not None and not (spec in ("k2",) or ":" in spec) and not Path(spec).is_absolute():
            spec = str(base_dir / spec)
        try:
            space = load_space(spec, beta=sp.get("beta"))
            t = float(d["horizon"]["t"])
            N = int(d["horizon"]["N"])
            ini = d["initial"]
            nu = np.ones(space.n) if ini.get("uniform") else np.array(ini["density"], dtype=float)
            rc = d["running_cost"]
            if "constant" in rc:
                F = np.full(space.n, float(rc["constant"]))
            elif "values" in rc:
                F = np.array(rc["values"], dtype=float)
            else:
                F = np.array(rc["table"], dtype=float)
            term = d["terminal"]
            if term["kind"] == "linear":
                U = Linear(np.array(term["f"], dtype=float))
            else:
                f = np.array(term["f"], dtype=float) if "f" in term else None
                U = Quadratic(np.array(term["g"], dtype=float), float(term["c"]), f)
            for arr in [U.f] + ([U.g] if isinstance(U, Quadratic) else []):
                if arr is not None and arr.shape != (space.n,):
                    raise ConfigError("terminal fields need one value per node")
            settings = OptimizerSettings(**d["optimizer"])
            return Scenario(
                space,
                t,
                N,
                nu,
                F,
                U,
                settings,
                running_sign=float(rc.get("sign", 1.0)),
                weighting=str(sp.get("weighting", "logmean")),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file {path} does not exist")
    return ScenarioConfig.from_toml(path.read_text())
