"""Run configuration: sectioned key=value files with strict keys.

Example::

    [model]
    name = verhulst_pearl
    mu = 1
    gamma = 1
    sigma = 0.5

    [reward]
    name = power
    kappa = 1
    p = 0.5
    c1 = 0.5
    c2 = 1.5

Every other section is optional; ``DEFAULTS`` lists keys and defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .diffusion import DEFAULT_DOMAIN_CAP
from .errors import ConfigError, ModelError
from .models import MODEL_PARAMS, REWARD_PARAMS, make_model, make_reward


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


_FORMAT = {
    _bool: lambda v: "true" if v else "false",
    _floats: lambda v: ", ".join(repr(x) for x in v),
    _opt_float: lambda v: "auto" if v is None else repr(v),
    float: repr,
    int: str,
    str: str,
}

# section -> key -> (parser, default, help)
DEFAULTS = {
    "model": {
        "name": (str, None, "gbm | verhulst_pearl | brownian (required)"),
        "domain_cap": (float, DEFAULT_DOMAIN_CAP, "upper end X_max of every search"),
        "exploratory": (_bool, False, "allow GBM with mu >= 0"),
    },
    "reward": {
        "name": (str, None, "power | linear | constant | zero (required)"),
        "c1": (float, None, "harvest price per unit (required)"),
        "c2": (float, None, "injection cost per unit, c2 > c1 (required)"),
    },
    "solver": {
        "quad_rel_tol": (float, 1e-10, "relative quadrature tolerance"),
        "quad_abs_tol": (float, 1e-12, "absolute quadrature tolerance"),
        "xtol": (float, 1e-10, "bisection tolerance for a*"),
        "polish": (_bool, True, "damped Newton polish after bisection"),
        "max_newton": (int, 10, "Newton step limit"),
        "force": (_bool, False, "solve even when structural checks fail"),
        "grid_size": (int, 2048, "scan grid size for the shape checks"),
    },
    "grid": {
        "sweep_n": (int, 64, "points per axis of the lambda(a, b) table"),
        "sweep_lo": (_opt_float, None, "lower end of both sweep axes (auto: a*/2)"),
        "sweep_hi": (_opt_float, None, "upper end of both sweep axes (auto: 2 b*)"),
        "hjb_points": (int, 2001, "HJB grid size"),
        "hjb_lo": (_opt_float, None, "HJB grid lower end (auto: a*/2)"),
        "hjb_hi": (_opt_float, None, "HJB grid upper end (auto: 2 b*)"),
    },
    "sim": {
        "a": (_opt_float, None, "lower barrier (auto: a*)"),
        "b": (_opt_float, None, "upper barrier (auto: b*)"),
        "one_sided": (_bool, False, "reflect at a only"),
        "x0": (_opt_float, None, "initial state (auto: midpoint, or a if one-sided)"),
        "dt": (float, 1e-3, "Euler time step"),
        "horizon_T": (float, 2e4, "simulated horizon"),
        "burn_in_fraction": (float, 0.1, "discarded initial fraction"),
        "n_batches": (int, 20, "batches for the batch-means error"),
        "replications": (int, 1, "independent replications"),
        "seed": (int, 12345, "root seed"),
        "thin_every": (int, 0, "write every k-th state to path.csv (0 = off)"),
    },
    "discounted": {
        "rs": (_floats, (0.2, 0.1, 0.05, 0.02), "discount rates, strictly decreasing"),
        "x_eval": (_opt_float, None, "evaluation point of rV_r (auto: (a* + b*)/2)"),
        "mc_paths": (int, 0, "Monte Carlo paths per rate for the value cross-check (0 = off)"),
        "mc_dt": (float, 1e-3, "time step of that cross-check"),
    },
    "output": {
        "directory": (str, ".", "where CSV files go"),
        "precision": (int, 12, "significant digits in CSV output"),
    },
}

REQUIRED = ("name", "c1", "c2")
PARAM_HELP = {**{f"model {k}": v for k, v in MODEL_PARAMS.items()}, **{f"reward {k}": v for k, v in REWARD_PARAMS.items()}}


@dataclass
class RunConfig:
    model: dict
    reward: dict
    solver: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    discounted: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def build(self):
        """(DiffusionModel, RewardModel) from the model and reward blocks."""
        return _build(self)

    def echo(self):
        """Canonical text form; parse_text(echo()) reproduces this config."""
        lines = []
        for section in DEFAULTS:
            values = getattr(self, section)
            lines.append(f"[{section}]")
            for key, value in values.items():
                fmt = _FORMAT[_parser(section, key)]
                lines.append(f"{key} = {fmt(value)}")
            lines.append("")
        return "\n".join(lines)


def _parser(section, key):
    if key in DEFAULTS[section]:
        return DEFAULTS[section][key][0]
    return float  # family parameters


def _build(cfg: RunConfig):
    m, r = cfg.model, cfg.reward
    params = {k: v for k, v in m.items() if k not in DEFAULTS["model"]}
    try:
        model = make_model(m["name"], params, m["domain_cap"], m["exploratory"])
    except ModelError as exc:
        raise ConfigError(f"model.{exc}") from None
    rparams = {k: v for k, v in r.items() if k not in DEFAULTS["reward"]}
    try:
        reward = make_reward(r["name"], rparams, r["c1"], r["c2"])
    except ModelError as exc:
        msg = str(exc)
        path = "reward.c2" if "c1 < c2" in msg else ("reward.c1" if msg.startswith("c1") else "reward")
        if ":" in msg.split()[0]:
            path = "reward." + msg.split(":")[0]
            msg = msg.split(":", 1)[1].strip()
        raise ConfigError(f"{path}: {msg}") from None
    return model, reward


def _validate(cfg: RunConfig):
    s, sim, g, d, o = cfg.solver, cfg.sim, cfg.grid, cfg.discounted, cfg.output
    checks = [
        ("solver.quad_rel_tol", s["quad_rel_tol"] > 0, "must be positive"),
        ("solver.quad_abs_tol", s["quad_abs_tol"] > 0, "must be positive"),
        ("solver.xtol", s["xtol"] > 0, "must be positive"),
        ("solver.max_newton", s["max_newton"] >= 0, "must be nonnegative"),
        ("solver.grid_size", s["grid_size"] >= 100, "must be at least 100"),
        ("grid.sweep_n", g["sweep_n"] >= 2, "must be at least 2"),
        ("grid.hjb_points", g["hjb_points"] >= 5, "must be at least 5"),
        ("sim.dt", sim["dt"] > 0, "must be positive"),
        ("sim.horizon_T", sim["horizon_T"] >= 1e3 * sim["dt"], "must be at least 1000 dt"),
        ("sim.burn_in_fraction", 0 <= sim["burn_in_fraction"] <= 0.5, "must lie in [0, 0.5]"),
        ("sim.n_batches", sim["n_batches"] >= 10, "must be at least 10"),
        ("sim.replications", sim["replications"] >= 1, "must be at least 1"),
        ("sim.seed", 0 <= sim["seed"] < 2**64, "must be a 64-bit unsigned integer"),
        ("sim.thin_every", sim["thin_every"] >= 0, "must be nonnegative"),
        ("discounted.rs", len(d["rs"]) > 0 and all(r > 0 for r in d["rs"]), "must be positive rates"),
        ("discounted.rs", all(b < a for a, b in zip(d["rs"], d["rs"][1:])), "must be strictly decreasing"),
        ("discounted.mc_paths", d["mc_paths"] >= 0, "must be nonnegative"),
        ("discounted.mc_dt", d["mc_dt"] > 0, "must be positive"),
        ("output.precision", 1 <= o["precision"] <= 17, "must lie in [1, 17]"),
    ]
    if sim["a"] is not None and sim["b"] is not None:
        checks.append(("sim.b", sim["b"] > sim["a"], "must exceed sim.a"))
    for path, ok, msg in checks:
        if not ok:
            raise ConfigError(f"{path}: {msg}")
    for path, v in (("sim.a", sim["a"]), ("sim.x0", sim["x0"]), ("discounted.x_eval", d["x_eval"])):
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{path}: must be positive")
    cfg.build()


def parse_text(text, source="<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0none")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}:{lineno}: syntax error") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(f"{source}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    unknown = [s for s in parser.sections() if s not in DEFAULTS]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]; known: {', '.join(DEFAULTS)}")
    blocks = {}
    for section, spec in DEFAULTS.items():
        raw = dict(parser[section]) if parser.has_section(section) else {}
        allowed = dict(spec)
        if section in ("model", "reward"):
            if "name" not in raw:
                raise ConfigError(f"{section}.name: required")
            registry = MODEL_PARAMS if section == "model" else REWARD_PARAMS
            name = raw["name"].strip()
            if name not in registry:
                raise ConfigError(f"{section}.name: unknown {section} {name!r}; known: {', '.join(sorted(registry))}")
            for p in registry[name]:
                allowed[p] = (float, _FAMILY_DEFAULTS.get((name, p)), f"{name} parameter")
        values = {}
        for key, text_value in raw.items():
            if key not in allowed:
                raise ConfigError(f"{section}.{key}: unknown key; allowed: {', '.join(allowed)}")
            try:
                values[key] = allowed[key][0](text_value.strip())
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
        for key, (_, default, _) in allowed.items():
            if key in values:
                continue
            if default is None and (key in REQUIRED or key not in DEFAULTS[section]):
                raise ConfigError(f"{section}.{key}: required")
            values[key] = default
        blocks[section] = values
    cfg = RunConfig(**blocks)
    _validate(cfg)
    return cfg


# family parameters that may be omitted
_FAMILY_DEFAULTS = {
    ("brownian", "mu"): 0.0,
    ("brownian", "sigma"): 1.0,
    ("power", "kappa"): 1.0,
    ("power", "p"): 0.5,
    ("linear", "eps"): 1.0,
    ("constant", "level"): 1.0,
}


def parse_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def defaults_help():
    lines = ["configuration keys (section.key = default: meaning):"]
    for section, spec in DEFAULTS.items():
        for key, (conv, default, doc) in spec.items():
            shown = "required" if key in REQUIRED else _FORMAT[conv](default)
            lines.append(f"  {section}.{key} = {shown}: {doc}")
    lines.append("family parameters:")
    for k, v in PARAM_HELP.items():
        lines.append(f"  {k}: {', '.join(v) if v else '(none)'}")
    return "\n".join(lines)
