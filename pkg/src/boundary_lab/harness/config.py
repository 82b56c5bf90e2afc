"""Experiment configuration files (YAML) with line-precise validation errors."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from ..exactgroup import GroupElement, canonical_key
from ..walk import MuSpec

BUNDLED = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    mu: MuSpec
    n: int
    alpha: int
    L: float | str
    M: float | str
    horizon_factor: int
    paths: int
    seed: int
    checkpoints: list = field(default_factory=list)
    n_grid: list = field(default_factory=list)
    alpha_grid: list = field(default_factory=list)
    avez_grid: list = field(default_factory=list)
    epsilon: float = 0.1
    window: int = 50
    m_grid: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])
    formats: list = field(default_factory=lambda: ["csv", "svg"])
    digest: str = ""

    @property
    def dim(self) -> int:
        return self.mu.dim

    def resolve_L(self) -> float:
        if isinstance(self.L, str):
            return self.mu.step_size_quantile(int(self.L[1:]) / 100)
        return float(self.L)


def _line(node) -> int:
    return node.start_mark.line + 1


def _fail(where: str, node, msg: str):
    raise ConfigError(f"{where}:{_line(node)}: {msg}")


class _Reader:
    def __init__(self, where: str, root):
        self.where = where
        if not isinstance(root, yaml.MappingNode):
            raise ConfigError(f"{where}:1: top level must be a mapping")
        self.nodes = {}
        for k, v in root.value:
            if k.value in self.nodes:
                _fail(where, k, f"duplicate key {k.value!r}")
            self.nodes[k.value] = (k, v)
        self.root = root

    def node(self, key, required=True):
        if key not in self.nodes:
            if required:
                raise ConfigError(f"{self.where}:{_line(self.root)}: missing key {key!r}")
            return None
        return self.nodes[key][1]

    def value(self, key, default=None, required=True):
        n = self.node(key, required and default is None)
        if n is None:
            return default, None
        return yaml.safe_load(yaml.serialize(n)), n

    def integer(self, key, default=None, minimum=None):
        v, n = self.value(key, default)
        if n is None:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(self.where, n, f"{key} must be an integer, got {v!r}")
        if minimum is not None and v < minimum:
            _fail(self.where, n, f"{key} must be >= {minimum}")
        return v

    def number_or(self, key, words: tuple, default=None):
        v, n = self.value(key, default)
        if n is None:
            return v
        if isinstance(v, str):
            if v in words or (v.startswith("p") and v[1:].isdigit() and "p99" in words
                              and 0 < int(v[1:]) <= 100):
                return v
            _fail(self.where, n, f"{key} must be a positive number or one of {words}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            _fail(self.where, n, f"{key} must be a positive number, got {v!r}")
        return float(v)

    def int_list(self, key, default):
        v, n = self.value(key, default)
        if n is None:
            return list(v)
        if not isinstance(v, list) or not all(isinstance(x, int) and x > 0 for x in v):
            _fail(self.where, n, f"{key} must be a list of positive integers")
        return v


def _parse_weight(text, where, node) -> Fraction:
    try:
        w = Fraction(str(text))
    except (ValueError, ZeroDivisionError):
        _fail(where, node, f"bad weight {text!r}; use 'p/q'")
    if w <= 0:
        _fail(where, node, f"weight {text!r} must be positive")
    return w


def parse_config(text: str, where: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{where}:{line}: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ConfigError(f"{where}:1: empty config")
    r = _Reader(where, root)

    dim = r.integer("dim", minimum=2)
    gens_node = r.node("generators")
    if not isinstance(gens_node, yaml.SequenceNode) or not gens_node.value:
        _fail(where, gens_node, "generators must be a non-empty list of matrices")
    gens = []
    for g_node in gens_node.value:
        m = yaml.safe_load(yaml.serialize(g_node))
        ok = (isinstance(m, list) and len(m) == dim
              and all(isinstance(row, list) and len(row) == dim for row in m)
              and all(isinstance(x, int) and not isinstance(x, bool) for row in m for x in row))
        if not ok:
            _fail(where, g_node, f"generator must be a {dim}x{dim} integer matrix")
        try:
            gens.append(GroupElement(m))
        except ValueError as exc:
            _fail(where, g_node, str(exc))

    w_node = r.node("weights")
    if isinstance(w_node, yaml.ScalarNode) and w_node.value == "uniform":
        weights = [Fraction(1, len(gens))] * len(gens)
    elif isinstance(w_node, yaml.SequenceNode):
        if len(w_node.value) != len(gens):
            _fail(where, w_node, f"{len(w_node.value)} weights for {len(gens)} generators")
        weights = [_parse_weight(x.value, where, x) for x in w_node.value]
        if sum(weights) != 1:
            _fail(where, w_node, f"weights sum to {sum(weights)}, not 1")
    else:
        _fail(where, w_node, "weights must be a list of 'p/q' strings or 'uniform'")
    keys = [canonical_key(g) for g in gens]
    if len(set(keys)) != len(keys):
        _fail(where, gens_node, "generators must be distinct")
    mu = MuSpec(tuple(gens), tuple(weights))

    n = r.integer("n", minimum=1)
    alpha = r.integer("alpha", minimum=1)
    name, _ = r.value("name", default=Path(where).stem, required=False)
    out_node = r.node("outputs", required=False)
    formats = ["csv", "svg"]
    if out_node is not None:
        outs = yaml.safe_load(yaml.serialize(out_node))
        formats = list((outs or {}).get("formats", formats))
        if not set(formats) <= {"csv", "svg"}:
            _fail(where, out_node, "formats may only contain csv and svg")
    cfg = ExperimentConfig(
        name=str(name),
        mu=mu,
        n=n,
        alpha=alpha,
        L=r.number_or("L", ("p99",)),
        M=r.number_or("M", ("sweep",)),
        horizon_factor=r.integer("horizon_factor", default=8, minimum=1),
        paths=r.integer("paths", minimum=1),
        seed=r.integer("seed", minimum=0),
        checkpoints=r.int_list("checkpoints", [10, 20, 50, 100]),
        n_grid=r.int_list("n_grid", [n]),
        alpha_grid=r.int_list("alpha_grid", [alpha]),
        avez_grid=r.int_list("avez_grid", [1, 2, 3, 4, 5, 6]),
        window=r.integer("window", default=50, minimum=1),
        m_grid=r.value("m_grid", default=[1, 2, 4, 8, 16, 32, 64], required=False)[0],
        formats=formats,
        digest=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )
    eps, eps_node = r.value("epsilon", default=0.1, required=False)
    if eps_node is not None and not (isinstance(eps, (int, float)) and 0 < eps < 1):
        _fail(where, eps_node, "epsilon must lie in (0, 1)")
    cfg.epsilon = float(eps)
    known = {"name", "dim", "generators", "weights", "n", "alpha", "L", "M", "horizon_factor",
             "paths", "seed", "checkpoints", "n_grid", "alpha_grid", "avez_grid", "epsilon",
             "window", "m_grid", "outputs"}
    for key, (k_node, _) in r.nodes.items():
        if key not in known:
            _fail(where, k_node, f"unknown key {key!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists() and (BUNDLED / path.name).exists():
        path = BUNDLED / path.name
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return parse_config(text, str(path))


def bundled_configs() -> list[Path]:
    return sorted(BUNDLED.glob("*.yaml"))
