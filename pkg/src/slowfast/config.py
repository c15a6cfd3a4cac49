"""INI configuration: schema, parsing and validation.

Sections and keys (all optional; defaults in SCHEMA):

[model]      name, M, n, coupling, epsilon, R, U, W, Gamma, V
[grid]       extents, counts
[solver]     tol_eq, tol_op, tol_mass, seed, trials
[rate]       rho, T, slices, epsilon, eps_ladder
[kinetic]    rho0, T, dt, frame, epsilon, order, save_every, eps_ladder, T_diff
[particles]  N, R, epsilon, dt, T, burn_in, seed, box, M_hist, sample_every, bootstrap, window_start
[fluctuations] Ns, modes, block
[acceptance] criteria
[output]     dir

Model fields U, Gamma and V are expressions in ``theta``; W is an expression
in ``theta`` and ``theta2``; V components are separated by ``;``. Density
expressions use ``q`` (or ``q1``, ``q2``) and ``t``. Expressions may only
use arithmetic and the functions in FUNCTIONS.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ModelError
from .model import PRESETS, ModelSpec

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "tanh": np.tanh, "abs": np.abs, "pi": np.pi,
}

SCHEMA = {
    "model": {"name": "free_abp", "M": 128, "n": 2, "coupling": 1.0, "epsilon": 0.1, "R": 0.1,
              "U": None, "W": None, "Gamma": None, "V": None},
    "grid": {"extents": "6.283185307179586", "counts": "64"},
    "solver": {"tol_eq": 1e-9, "tol_op": 1e-8, "tol_mass": 1e-8, "seed": 0, "trials": 32},
    "rate": {"rho": "1 + 0.5*cos(q)*exp(-t)", "T": 1.0, "slices": 101, "epsilon": 0.1,
             "eps_ladder": "0.2, 0.1, 0.05, 0.025"},
    "kinetic": {"rho0": "1 + 0.5*cos(q)", "T": 1.0, "dt": 1e-3, "frame": "moving", "epsilon": 0.1,
                "order": 2, "save_every": 0, "eps_ladder": "", "T_diff": 1.0},
    "particles": {"N": 10_000, "R": 0.1, "epsilon": 0.1, "dt": 0.01, "T": 50.0, "burn_in": 0.0,
                  "seed": 0, "box": "1.0", "M_hist": 64, "sample_every": 0.5, "bootstrap": 200,
                  "window_start": 5.0},
    "fluctuations": {"Ns": "5000, 10000", "modes": "1,0; 2,0; 3,0; 4,0", "block": 10},
    "acceptance": {"criteria": "1, 2, 3, 4, 5, 6, 7, 8, 9, 10"},
    "output": {"dir": "out"},
}


def _check_expr(text, names, key):
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(key, f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
               ast.operator, ast.unaryop)
    for node in ast.walk(tree):
        if not isinstance(node, allowed):
            raise ConfigError(key, f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in FUNCTIONS:
            raise ConfigError(key, f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and node.keywords:
            raise ConfigError(key, "keyword arguments are not allowed")
    return compile(tree, key, "eval")


def expression(text, names, key):
    """Compile ``text`` into a function of the given argument names."""
    code = _check_expr(text, names, key)

    def fn(*args):
        env = dict(FUNCTIONS)
        env.update(zip(names, args))
        return eval(code, {"__builtins__": {}}, env)  # noqa: S307 - restricted by _check_expr
    return fn


@dataclass
class Config:
    parser: configparser.ConfigParser
    text: str
    path: str | None = None

    def raw(self, section, key):
        default = SCHEMA[section][key]
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        return None if default is None else str(default)

    def get(self, section, key, kind=str):
        val = self.raw(section, key)
        if val is None:
            return None
        try:
            if kind is int:
                return int(float(val)) if float(val).is_integer() else int(val)
            return kind(val)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected {kind.__name__}, got {val!r}") from None

    def floats(self, section, key):
        val = self.raw(section, key)
        if not val:
            return ()
        try:
            return tuple(float(x) for x in val.replace(";", ",").split(","))
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected a list of numbers, got {val!r}") from None

    def ints(self, section, key):
        vals = self.floats(section, key)
        if any(not float(v).is_integer() for v in vals):
            raise ConfigError(f"{section}.{key}", "expected integers")
        return tuple(int(v) for v in vals)

    def effective(self) -> dict:
        """Every key with defaults filled in."""
        return {sec: {k: self.raw(sec, k) for k in keys} for sec, keys in SCHEMA.items()}

    def positive(self, section, key, kind=float, allow_zero=False):
        v = self.get(section, key, kind)
        if v < 0 or (v == 0 and not allow_zero):
            raise ConfigError(f"{section}.{key}", f"must be {'non-negative' if allow_zero else 'positive'}, got {v}")
        return v


def load(path=None, text=None) -> Config:
    if text is None:
        if path is None:
            text = ""
        else:
            try:
                with open(path) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, "unknown section")
        for key in parser.options(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
    return Config(parser, text, None if path is None else str(path))


def _angular(cfg, key, names):
    text = cfg.raw("model", key)
    if text is None:
        return None
    try:
        return float(text)
    except ValueError:
        return expression(text, names, f"model.{key}")


def build_model(cfg: Config) -> ModelSpec:
    name = cfg.get("model", "name")
    M = cfg.get("model", "M", int)
    if M < 16 or M % 2:
        raise ConfigError("model.M", f"must be even and >= 16, got {M}")
    eps = cfg.positive("model", "epsilon", allow_zero=True)
    R = cfg.positive("model", "R")
    coupling = cfg.get("model", "coupling", float)
    kw = dict(M=M, epsilon=eps, R=R)
    if name in PRESETS:
        base = {"free_abp": lambda: PRESETS[name](n=cfg.get("model", "n", int), **kw),
                "active_2d": lambda: PRESETS[name](coupling=coupling, **kw),
                "von_mises": lambda: PRESETS[name](**kw)}
        try:
            spec = base[name]()
        except ModelError as exc:
            raise _model_key(exc) from None
        if name != "free_abp" and cfg.parser.has_option("model", "n"):
            raise ConfigError("model.n", f"only free_abp takes n, model is {name}")
    elif name == "custom":
        spec = None
    else:
        raise ConfigError("model.name", f"unknown model {name!r}; choose from {sorted(PRESETS)} or custom")
    changes = {}
    for key in ("U", "Gamma"):
        v = _angular(cfg, key, ("theta",))
        if v is not None:
            changes[key] = v
    if cfg.raw("model", "W") is not None:
        changes["W"] = _angular(cfg, "W", ("theta", "theta2"))
    if cfg.raw("model", "V") is not None:
        parts = [p.strip() for p in cfg.raw("model", "V").split(";") if p.strip()]
        changes["V"] = tuple(expression(p, ("theta",), f"model.V[{i}]") for i, p in enumerate(parts))
    if "Gamma" in changes and not callable(changes["Gamma"]) and changes["Gamma"] <= 0:
        raise ConfigError("model.Gamma", f"mobility must be positive, got {changes['Gamma']}")
    try:
        if spec is None:
            changes.setdefault("V", ())
            return ModelSpec(coupling=coupling, name="custom", **kw, **changes)
        if changes or (cfg.parser.has_option("model", "coupling") and name != "active_2d"):
            return spec.with_(coupling=coupling, **changes)
        return spec
    except ModelError as exc:
        raise _model_key(exc) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None


def _model_key(exc):
    msg = str(exc)
    field_name = msg.split(":", 1)[0].split("[")[0].strip()
    key = f"model.{field_name}" if field_name.isidentifier() else "model"
    return ConfigError(key, msg.split(":", 1)[-1].strip())


def build_sgrid(cfg: Config, n=None):
    from .grid import SpatialGrid

    ext = cfg.floats("grid", "extents")
    cnt = cfg.ints("grid", "counts")
    if n is not None and n > 0:
        if len(ext) == 1:
            ext = ext * n
        if len(cnt) == 1:
            cnt = cnt * n
    if len(ext) != len(cnt) or len(ext) not in (1, 2):
        raise ConfigError("grid.extents", "extents and counts must both have 1 or 2 entries")
    if n and len(ext) != n:
        raise ConfigError("grid.extents", f"model is {n}-dimensional, grid has {len(ext)} entries")
    if any(e <= 0 for e in ext):
        raise ConfigError("grid.extents", "must be positive")
    if any(c < 4 or c % 2 for c in cnt):
        raise ConfigError("grid.counts", "must be even and >= 4")
    return SpatialGrid(tuple(ext), tuple(cnt))


def density_function(cfg: Config, section, key, n):
    # in 2D, q is an alias for q1
    names = ("q", "t") if n == 1 else ("q1", "q2", "t", "q")
    fn = expression(cfg.raw(section, key), names, f"{section}.{key}")

    def rho(nodes, t=0.0):
        val = fn(nodes[0], t) if n == 1 else fn(nodes[0], nodes[1], t, nodes[0])
        return np.broadcast_to(np.asarray(val, dtype=float), nodes.shape[1:]).copy()
    return rho


def particle_config(cfg: Config, n):
    from .particles import ParticleConfig

    box = cfg.floats("particles", "box")
    if any(b <= 0 for b in box):
        raise ConfigError("particles.box", "box lengths must be positive")
    if n and len(box) not in (1, n):
        raise ConfigError("particles.box", f"need {n} entries (or one shared length), got {len(box)}")
    if n and len(box) == 1:
        box = box * n
    out = ParticleConfig(
        N=cfg.positive("particles", "N", int), R=cfg.positive("particles", "R"),
        epsilon=cfg.positive("particles", "epsilon", allow_zero=True),
        dt=cfg.positive("particles", "dt"), T=cfg.positive("particles", "T"),
        burn_in=cfg.positive("particles", "burn_in", allow_zero=True),
        seed=cfg.positive("particles", "seed", int, allow_zero=True), box=tuple(box),
        M_hist=cfg.positive("particles", "M_hist", int), sample_every=cfg.positive("particles", "sample_every"),
        bootstrap=cfg.positive("particles", "bootstrap", int),
        window_start=cfg.positive("particles", "window_start", allow_zero=True))
    if out.sample_every < out.dt:
        raise ConfigError("particles.sample_every", "must be at least dt")
    return out
