"""Experiment configuration: an INI file with ``key = value`` lines in sections.

Sections
--------
``[experiment]``  id, mode (simulate | tune | solve-exact | bound), objective
                  (cumulative | final-reward), aggregator, paths, seed,
                  record_runtime, trajectory_samples, bound
``[model]``       variant plus any StorageConfig field; ``price_file`` names a
                  price series (relative paths resolve against the config file)
``[policy]``      id plus policy parameters; further ``[policy.<label>]``
                  sections add policies evaluated on the same paths
``[tuning]``      method, n_paths, train_seed, eval_seed, budget, spsa_a,
                  spsa_c, spsa_A and one ``domain.<param> = lo, hi, step`` line
                  per tuned parameter (step ``none`` for a continuous range)
``[exact]``       n_R, price_levels, probs, gamma, horizon, method, tol
``[bandit]``      mu, sigma, N, noise

Every seed is explicit; nothing is drawn from the clock.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field

from .core import Aggregator
from .policies.storage import BANDIT_POLICIES, PARAM_DEFAULTS, PolicyParams
from .processes import read_price_file
from .search import TuningSpec
from .storage.model import VARIANTS, StorageConfig

MODES = ("simulate", "tune", "solve-exact", "bound")
OBJECTIVES = ("cumulative", "final-reward")
STORAGE_FIELDS = {f.name: f for f in dataclasses.fields(StorageConfig)}
_TUPLE_FIELDS = ("theta", "initial_forecast", "price_data")


class ConfigError(ValueError):
    """A config problem, tied to the offending ``[section] key``."""

    def __init__(self, section: str, key: str, message: str):
        self.section, self.key = section, key
        super().__init__(f"[{section}] {key}: {message}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    experiment_id: str = "exp"
    mode: str = "simulate"
    objective: str = "cumulative"
    aggregator: str = "sum"
    paths: int = 100
    seed: int = 0
    record_runtime: bool = False
    trajectory_samples: int = 1
    bound: bool = False
    variant: str = "base"
    model: dict = field(default_factory=dict)
    price_file: str | None = None
    policies: list = field(default_factory=lambda: [("policy", PolicyParams("zero"))])
    tuning: dict | None = None
    exact: dict = field(default_factory=dict)
    bandit: dict = field(default_factory=dict)
    base_dir: str = "."

    # -- derived objects ----------------------------------------------------

    def storage_config(self) -> StorageConfig:
        kw = dict(self.model)
        if self.price_file is not None:
            path = self.price_file if os.path.isabs(self.price_file) else os.path.join(self.base_dir, self.price_file)
            try:
                kw["price_data"] = tuple(read_price_file(path).tolist())
            except (OSError, ValueError) as exc:
                raise ConfigError("model", "price_file", str(exc)) from None
        try:
            return StorageConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError("model", _guess_key(str(exc), kw), str(exc)) from None

    def get_aggregator(self) -> Aggregator:
        return Aggregator.parse(self.aggregator)

    def tuning_spec(self) -> TuningSpec:
        if self.tuning is None:
            raise ConfigError("tuning", "method", "tune mode needs a [tuning] section")
        t = dict(self.tuning)
        label, params = self.policies[0]
        fixed = {k: v for k, v in params.theta.items() if k not in t["domain"]}
        try:
            return TuningSpec(policy_id=params.policy_id, fixed=fixed, **t)
        except ValueError as exc:
            raise ConfigError("tuning", "domain", str(exc)) from None

    # -- serialisation --------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {
            "id": self.experiment_id, "mode": self.mode, "objective": self.objective,
            "aggregator": self.aggregator, "paths": _fmt(self.paths), "seed": _fmt(self.seed),
            "record_runtime": _fmt(self.record_runtime), "trajectory_samples": _fmt(self.trajectory_samples),
            "bound": _fmt(self.bound),
        }
        m = {"variant": self.variant}
        m.update({k: _fmt(v) for k, v in self.model.items()})
        if self.price_file is not None:
            m["price_file"] = self.price_file
        cp["model"] = m
        for label, p in self.policies:
            cp[label] = {"id": p.policy_id, **{k: _fmt(v) for k, v in p.theta.items()}}
        if self.tuning is not None:
            t = {k: _fmt(v) for k, v in self.tuning.items() if k != "domain"}
            for name, (lo, hi, step) in self.tuning["domain"].items():
                t[f"domain.{name}"] = _fmt((lo, hi)) + ", " + _fmt(step)
            cp["tuning"] = t
        if self.exact:
            cp["exact"] = {k: _fmt(v) for k, v in self.exact.items()}
        if self.bandit:
            cp["bandit"] = {k: _fmt(v) for k, v in self.bandit.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        a, b = dataclasses.asdict(self), dataclasses.asdict(other)
        a.pop("base_dir"), b.pop("base_dir")
        return a == b


def _guess_key(msg: str, kw: dict) -> str:
    for k in sorted(kw, key=len, reverse=True):
        if k in msg:
            return k
    return "variant"


# ---------------------------------------------------------------------------
# parsing


class _Section:
    def __init__(self, cp, name):
        self.name = name
        self.data = dict(cp[name]) if cp.has_section(name) else {}
        self.used = set()

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None):
        self.used.add(key)
        return self.data.get(key, default)

    def _conv(self, key, default, fn, what):
        v = self.raw(key)
        if v is None:
            return default
        try:
            return fn(v.strip())
        except ValueError:
            raise ConfigError(self.name, key, f"expected {what}, got {v!r}") from None

    def int(self, key, default=None, minimum=None):
        out = self._conv(key, default, int, "an integer")
        if out is not None and minimum is not None and out < minimum:
            raise ConfigError(self.name, key, f"must be >= {minimum}")
        return out

    def float(self, key, default=None):
        out = self._conv(key, default, float, "a number")
        if out is not None and not math.isfinite(out):
            raise ConfigError(self.name, key, "must be finite")
        return out

    def bool(self, key, default=False):
        def conv(s):
            s = s.lower()
            if s in ("true", "yes", "1", "on"):
                return True
            if s in ("false", "no", "0", "off"):
                return False
            raise ValueError
        return self._conv(key, default, conv, "true or false")

    def floats(self, key, default=None):
        return self._conv(key, default, _floats, "a list of numbers")

    def choice(self, key, default, options):
        v = self.raw(key, default)
        v = v.strip() if isinstance(v, str) else v
        if v not in options:
            raise ConfigError(self.name, key, f"unknown value {v!r} (expected one of {', '.join(options)})")
        return v

    def leftover(self):
        extra = [k for k in self.data if k not in self.used]
        if extra:
            raise ConfigError(self.name, extra[0], "unknown key")


def _model_value(sec: _Section, key: str):
    f = STORAGE_FIELDS[key]
    if key in _TUPLE_FIELDS:
        return sec.floats(key)
    if key == "rls_literal":
        return sec.bool(key)
    if f.type in ("int", int):
        return sec.int(key)
    return sec.float(key)


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", "syntax", str(exc).splitlines()[0]) from None
    known = {"experiment", "model", "policy", "tuning", "exact", "bandit"}
    for name in cp.sections():
        if name not in known and not name.startswith("policy."):
            raise ConfigError(name, "*", "unknown section")

    ex = _Section(cp, "experiment")
    cfg = ExperimentConfig(base_dir=base_dir)
    cfg.experiment_id = ex.raw("id", "exp").strip()
    cfg.mode = ex.choice("mode", "simulate", MODES)
    cfg.objective = ex.choice("objective", "cumulative", OBJECTIVES)
    cfg.aggregator = ex.raw("aggregator", "sum").strip()
    try:
        Aggregator.parse(cfg.aggregator)
    except ValueError as exc:
        raise ConfigError("experiment", "aggregator", str(exc)) from None
    cfg.paths = ex.int("paths", 100, minimum=1)
    if not ex.has("seed"):
        raise ConfigError("experiment", "seed", "missing; every seed must be explicit")
    cfg.seed = ex.int("seed", minimum=0)
    cfg.record_runtime = ex.bool("record_runtime", False)
    cfg.trajectory_samples = ex.int("trajectory_samples", 1, minimum=0)
    cfg.bound = ex.bool("bound", False)
    ex.leftover()

    mo = _Section(cp, "model")
    cfg.variant = mo.choice("variant", "base", VARIANTS)
    model = {}
    for key in mo.data:
        if key in ("variant", "price_file"):
            continue
        if key not in STORAGE_FIELDS or key == "price_data":
            raise ConfigError("model", key, "unknown key")
        model[key] = _model_value(mo, key)
    cfg.model = model
    pf = mo.raw("price_file")
    cfg.price_file = pf.strip() if pf is not None else None
    mo.leftover()
    cfg.storage_config()  # validate now so errors name the key

    policies = []
    for name in cp.sections():
        if name != "policy" and not name.startswith("policy."):
            continue
        sec = _Section(cp, name)
        pid = sec.raw("id")
        if pid is None:
            raise ConfigError(name, "id", "missing policy id")
        pid = pid.strip()
        if pid not in PARAM_DEFAULTS:
            raise ConfigError(name, "id", f"unknown policy id {pid!r}")
        theta = {}
        for key in sec.data:
            if key == "id":
                continue
            if key not in PARAM_DEFAULTS[pid] and not (pid == "dla-cfa" and key.startswith("bucket")):
                raise ConfigError(name, key, f"policy {pid!r} has no such parameter")
            theta[key] = sec.float(key)
        try:
            policies.append((name, PolicyParams(pid, theta)))
        except ValueError as exc:
            raise ConfigError(name, _guess_key(str(exc), theta), str(exc)) from None
    if policies:
        cfg.policies = policies

    if cp.has_section("tuning"):
        tu = _Section(cp, "tuning")
        t = {
            "method": tu.choice("method", "grid", ("grid", "spsa")),
            "n_paths": tu.int("n_paths", 100, minimum=1),
            "train_seed": tu.int("train_seed", cfg.seed, minimum=0),
            "eval_seed": tu.int("eval_seed", cfg.seed + 1, minimum=0),
            "budget": tu.int("budget", 10_000, minimum=1),
            "spsa_a": tu.float("spsa_a", 0.5),
            "spsa_c": tu.float("spsa_c", 0.5),
            "spsa_A": tu.float("spsa_A", 10.0),
        }
        domain = {}
        pid = cfg.policies[0][1].policy_id
        for key in tu.data:
            if not key.startswith("domain."):
                continue
            name = key[len("domain."):]
            if name not in PARAM_DEFAULTS[pid] and not (pid == "dla-cfa" and name.startswith("bucket")):
                raise ConfigError("tuning", key, f"policy {pid!r} has no parameter {name!r}")
            parts = [p.strip() for p in tu.raw(key).split(",")]
            try:
                if len(parts) != 3:
                    raise ValueError
                lo, hi = float(parts[0]), float(parts[1])
                step = None if parts[2].lower() == "none" else float(parts[2])
            except ValueError:
                raise ConfigError("tuning", key, "expected 'low, high, step'") from None
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError("tuning", key, f"empty or unbounded interval [{lo}, {hi}]")
            if t["method"] == "grid" and (step is None or step <= 0):
                raise ConfigError("tuning", key, "grid search needs a positive step")
            domain[name] = (lo, hi, step)
        if not domain:
            raise ConfigError("tuning", "domain", "no domain.<param> lines")
        t["domain"] = domain
        tu.leftover()
        cfg.tuning = t

    if cp.has_section("exact"):
        xs = _Section(cp, "exact")
        e = {
            "n_R": xs.int("n_R", 11, minimum=2),
            "price_levels": xs.floats("price_levels", (20.0, 30.0, 40.0)),
            "gamma": xs.float("gamma", 0.95),
            "method": xs.choice("method", "value-iteration", ("value-iteration", "backward-dp")),
            "tol": xs.float("tol", 1e-8),
        }
        if xs.has("probs"):
            e["probs"] = xs.floats("probs")
            if len(e["probs"]) != len(e["price_levels"]):
                raise ConfigError("exact", "probs", "needs one probability per price level")
        if xs.has("horizon"):
            e["horizon"] = xs.int("horizon", minimum=0)
        if e["method"] == "backward-dp" and "horizon" not in e:
            raise ConfigError("exact", "horizon", "backward-dp needs a horizon")
        if not 0 <= e["gamma"] <= 1:
            raise ConfigError("exact", "gamma", "must lie in [0, 1]")
        xs.leftover()
        cfg.exact = e

    if cp.has_section("bandit"):
        bs = _Section(cp, "bandit")
        b = {"mu": bs.floats("mu", (0.0, 0.5)), "sigma": bs.float("sigma", 1.0), "N": bs.int("N", 100, minimum=0)}
        if bs.has("noise"):
            b["noise"] = bs.float("noise")
        if len(b["mu"]) < 2:
            raise ConfigError("bandit", "mu", "a bandit needs at least two arms")
        if b["sigma"] < 0:
            raise ConfigError("bandit", "sigma", "must be >= 0")
        bs.leftover()
        cfg.bandit = b

    pids = [p.policy_id for _, p in cfg.policies]
    if any(p in BANDIT_POLICIES for p in pids) and not cfg.bandit:
        raise ConfigError("bandit", "mu", "bandit policies need a [bandit] section")
    if cfg.mode == "tune" and cfg.tuning is None:
        raise ConfigError("tuning", "method", "tune mode needs a [tuning] section")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("file", "path", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def scaffold() -> ExperimentConfig:
    """The default experiment written by ``init``: PFA thresholds on the base model, with a tuning grid."""
    cfg = ExperimentConfig(
        experiment_id="storage-demo",
        paths=100,
        seed=20240101,
        variant="base",
        model={"horizon": 24, "eta": 0.9, "r_max": 100.0, "charge_rate": 10.0, "discharge_rate": 10.0},
        policies=[("policy", PolicyParams("pfa-threshold", {"theta_charge": 25.0, "theta_discharge": 35.0})),
                  ("policy.dla", PolicyParams("dla", {"H": 12.0}))],
        tuning={"method": "grid", "n_paths": 50, "train_seed": 1, "eval_seed": 2, "budget": 10_000,
                "spsa_a": 0.5, "spsa_c": 0.5, "spsa_A": 10.0,
                "domain": {"theta_charge": (20.0, 30.0, 2.0), "theta_discharge": (30.0, 40.0, 2.0)}},
        exact={"n_R": 11, "price_levels": (20.0, 30.0, 40.0), "gamma": 0.95, "method": "value-iteration",
               "tol": 1e-8},
    )
    return cfg
