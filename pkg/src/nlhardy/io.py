"""Deterministic JSON/CSV emission and run-configuration handling."""
import configparser
import csv
import hashlib
import json
import math
from dataclasses import fields, is_dataclass
from importlib import resources

import numpy as np

from .constants import FracParams, QuadratureSettings
from .errors import ParameterError, ValidationError

SCHEMA_VERSION = "1.0"

DEFAULTS = {
    "params": {"d": 1, "s": 0.25},
    "geometry": {
        "kind": "ball", "L": 2.0, "n": 128, "far_field": "neumann_truncated",
        "r_omega": 0.5, "r1": 0.75, "r2": 2.0, "diagnostic": False, "labels_file": "",
        "eps": 0.1, "eta": 0.9, "A_len": 1.2, "m": 0.9, "beta": 2.7,
    },
    "quadrature": {f.name: f.default for f in fields(QuadratureSettings)},
    "solver": {"tol": 1e-10, "max_iter": 500},
    "experiment": {
        "levels": "", "k_max": 8, "lambda": "", "lambda_grid": "", "p": 2.0,
        "reg_n": "1,10,100,inf", "restarts": 20, "box_sizes": "1.0,2.0,3.0",
        "eps_sweep": "", "sample_stride": 1, "trials": 500, "el_tol": 1e-8,
    },
    "run": {"seed": 0},
}


def _coerce(default, raw):
    if isinstance(default, bool):
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw).strip()


def load_run_config(path=None, overrides=None):
    """Merge an INI file and overrides onto the defaults; returns nested plain dicts."""
    run = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        for sec in cp.sections():
            if sec not in run:
                raise ValidationError(f"unknown config section [{sec}]")
            for key, raw in cp.items(sec):
                if key not in run[sec]:
                    raise ValidationError(f"unknown key {key!r} in [{sec}]")
                try:
                    run[sec][key] = _coerce(DEFAULTS[sec][key], raw)
                except ValueError as exc:
                    raise ValidationError(f"bad value for {sec}.{key}: {raw!r}") from exc
    for (sec, key), val in (overrides or {}).items():
        if val is not None:
            run[sec][key] = _coerce(DEFAULTS[sec][key], val)
    return run


def float_list(text):
    text = str(text).strip()
    if not text:
        return []
    return [float(t) for t in text.split(",")]


def parse_range(text):
    """``start:stop:count`` to an evenly spaced list."""
    try:
        a, b, k = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(k))]
    except ValueError as exc:
        raise ParameterError(f"bad range {text!r}, expected start:stop:count") from exc


def frac_params(run):
    quad = QuadratureSettings(**run["quadrature"])
    return FracParams(int(run["params"]["d"]), float(run["params"]["s"]), quad)


# ------------------------------------------------------------ canonical JSON

def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):   # enums
        return obj.value
    return obj


def _emit(obj, out):
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format(obj, ".17g") if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(k) + ":")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, list):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    """JSON text with every float written with 17 significant digits."""
    out = []
    _emit(_plain(obj), out)
    return "".join(out) + "\n"


def config_hash(run):
    return hashlib.sha256(dumps(run).encode()).hexdigest()


def envelope(command, run, result):
    return {
        "schema": f"nlhardy/{command}",
        "version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config_hash(run),
        "config": run,
        "result": result,
    }


def write_json(path, payload):
    text = dumps(payload)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])


def load_schema(command):
    ref = resources.files("nlhardy") / "schemas" / f"{command}.schema.json"
    return json.loads(ref.read_text())
