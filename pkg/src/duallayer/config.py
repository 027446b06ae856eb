"""TOML run configuration.

Schema (all tables required unless noted)::

    [grid]     n, m
    [plant]    A, B, C; optional state_dims, input_dims, output_dims
    [gains]    output_scale, state_scale, actuation, innovation, transition
    [design]   (alternative to [gains]) K, L; optional output_scale, state_scale
    [keys]     paillier_bits, rsa_bits; optional seed, enforce
    [initial]  x, zeta
    [run]      horizon; optional seed, shadow, rerandomize, timing, workers

Rationals are ``[numerator, denominator]`` pairs, bare integers, or
``"p/q"`` strings.  Gains are integers.
"""

from __future__ import annotations

import copy
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, SynthesisError
from .fixedpoint import GridParams
from .rational import rational_pair
from .sim import RunConfig
from .synthesis import ControllerGains, PlantMatrices, integerize


def example_dict() -> dict:
    """The bundled two-entity example as a plain dictionary."""
    text = resources.files("duallayer").joinpath("data/example1.toml").read_text()
    return tomllib.loads(text)


def load_dict(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Return a copy of ``data`` with ``table.key=value`` overrides applied.

    Values are parsed as TOML literals, falling back to bare strings.
    """
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"override key {key!r} is malformed")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(text.strip())
    return out


def _table(data: dict, name: str) -> dict:
    t = data.get(name)
    if not isinstance(t, dict):
        raise ConfigError(f"missing [{name}] table")
    return t


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] is missing {key!r}")
    return table[key]


def _rat(x) -> Any:
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, int) for v in x):
        if x[1] == 0:
            raise ConfigError(f"zero denominator in {x}")
        return Fraction(x[0], x[1])
    return x


def _rat_rows(x):
    """Matrix rows, where each entry may itself be a pair."""
    if not isinstance(x, list) or not all(isinstance(r, list) for r in x):
        raise ConfigError(f"expected a list of rows, got {x!r}")
    return [[_rat(v) for v in row] for row in x]


KNOWN_KEYS = {
    "grid": {"n", "m"},
    "plant": {"A", "B", "C", "state_dims", "input_dims", "output_dims"},
    "gains": {"output_scale", "state_scale", "actuation", "innovation", "transition"},
    "design": {"K", "L", "output_scale", "state_scale"},
    "keys": {"paillier_bits", "rsa_bits", "seed", "enforce"},
    "initial": {"x", "zeta"},
    "run": {"horizon", "seed", "shadow", "rerandomize", "timing", "workers"},
    "bounds": None,  # written by synth, informational only
}


def check_keys(data: dict) -> None:
    for table, body in data.items():
        if table not in KNOWN_KEYS:
            raise ConfigError(f"unknown table [{table}]")
        allowed = KNOWN_KEYS[table]
        if allowed is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"[{table}] must be a table")
        extra = set(body) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) in [{table}]: {', '.join(sorted(extra))}")


def config_from_dict(data: dict) -> RunConfig:
    check_keys(data)
    try:
        grid = _table(data, "grid")
        params = GridParams(int(_need(grid, "n", "grid")), int(_need(grid, "m", "grid")))
        pt = _table(data, "plant")
        plant = PlantMatrices.from_rows(
            _rat_rows(_need(pt, "A", "plant")), _rat_rows(_need(pt, "B", "plant")), _rat_rows(_need(pt, "C", "plant")),
            pt.get("state_dims"), pt.get("input_dims"), pt.get("output_dims"),
        )
        if "gains" in data:
            g = data["gains"]
            gains = ControllerGains.from_rows(
                _rat(_need(g, "output_scale", "gains")), _rat(_need(g, "state_scale", "gains")),
                _need(g, "actuation", "gains"), _need(g, "innovation", "gains"), _need(g, "transition", "gains"),
            )
        elif "design" in data:
            d = data["design"]
            gains = integerize(_rat_rows(_need(d, "K", "design")), _rat_rows(_need(d, "L", "design")), plant,
                               _rat(d.get("output_scale")), _rat(d.get("state_scale")))
        else:
            raise ConfigError("need a [gains] or a [design] table")
        keys = _table(data, "keys")
        init = _table(data, "initial")
        run = _table(data, "run")
        return RunConfig(
            plant=plant, gains=gains, params=params,
            x0=tuple(_rat(v) for v in _need(init, "x", "initial")),
            zeta0=tuple(_rat(v) for v in _need(init, "zeta", "initial")),
            horizon=int(_need(run, "horizon", "run")),
            paillier_bits=int(keys.get("paillier_bits", 64)),
            rsa_bits=int(keys.get("rsa_bits", 256)),
            seed=int(run.get("seed", 0)),
            key_seed=None if keys.get("seed") is None else int(keys["seed"]),
            enforce_key_sizes=bool(keys.get("enforce", True)),
            shadow=bool(run.get("shadow", True)),
            rerandomize=bool(run.get("rerandomize", False)),
            timing=bool(run.get("timing", False)),
            workers=int(run.get("workers", 1)),
        )
    except ConfigError:
        raise
    except (SynthesisError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: list[str] = ()) -> RunConfig:
    return config_from_dict(apply_overrides(load_dict(path), list(overrides)))


def _pair(v) -> Any:
    f = Fraction(v)
    return f.numerator if f.denominator == 1 else rational_pair(f)


def _mat(m) -> list:
    return [[_pair(v) for v in row] for row in m.tolist()]


def _ints(m) -> list:
    return [[int(v) for v in row] for row in m.tolist()]


def config_to_dict(cfg: RunConfig) -> dict:
    """Serialise a run config; loading the result reproduces it exactly."""
    keys = {"paillier_bits": cfg.paillier_bits, "rsa_bits": cfg.rsa_bits, "enforce": cfg.enforce_key_sizes}
    if cfg.key_seed is not None:
        keys["seed"] = cfg.key_seed
    return {
        "grid": {"n": cfg.params.n, "m": cfg.params.m},
        "plant": {
            "state_dims": list(cfg.plant.state_dims), "input_dims": list(cfg.plant.input_dims),
            "output_dims": list(cfg.plant.output_dims),
            "A": _mat(cfg.plant.A), "B": _mat(cfg.plant.B), "C": _mat(cfg.plant.C),
        },
        "gains": {
            "output_scale": _pair(cfg.gains.output_scale), "state_scale": _pair(cfg.gains.state_scale),
            "actuation": _ints(cfg.gains.actuation), "innovation": _ints(cfg.gains.innovation),
            "transition": _ints(cfg.gains.transition),
        },
        "keys": keys,
        "initial": {"x": [_pair(v) for v in cfg.x0], "zeta": [_pair(v) for v in cfg.zeta0]},
        "run": {
            "horizon": cfg.horizon, "seed": cfg.seed, "shadow": cfg.shadow, "rerandomize": cfg.rerandomize,
            "timing": cfg.timing, "workers": cfg.workers,
        },
    }


def dumps(data: dict) -> str:
    return tomli_w.dumps(data)


def save_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(config_to_dict(cfg)))
    return path
