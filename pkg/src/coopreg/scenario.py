"""Scenario documents: parsing, validation and serialization.

A scenario is a YAML (or JSON) mapping::

    name: optional label
    leader: [[cos(1), sin(1)], [-sin(1), cos(1)]]
    delays: [0, 1]                  # default for every agent
    network:
      n_followers: 4
      edges: [[0, 1], [0, 2], [1, 3, 0.5]]   # src, dst[, weight]
      # or: adjacency: (N+1)x(N+1) row-lists
    agents:
      - A: ...
        B: [B_0, B_1]               # one matrix per delay
        E_x: ...
        C: ...
        F_x: ...
        # optional: E_w, F_w, Q, D, C_m, D_m, F_mx, F_mw, K1, L, delays
    simulation:
      horizon: 500
      seed: 0
      mu: 0.5
      initial: random               # or zero
      tail_fraction: 0.6
      tail_tol: 0.01

Matrix entries may be numbers or arithmetic strings using ``cos``, ``sin``,
``tan``, ``exp``, ``log``, ``sqrt``, ``pi`` and ``e``.
"""

import ast
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .exceptions import CoopregError, ValidationError
from .plant import AgentPlant
from .topology import Network

__all__ = [
    "SimulationSettings",
    "Scenario",
    "evaluate_expression",
    "parse_scenario",
    "scenario_to_dict",
    "load_scenario",
    "dump_scenario",
]

_FUNCS = {
    "cos": math.cos, "sin": math.sin, "tan": math.tan,
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def evaluate_expression(text):
    """Evaluate a restricted arithmetic expression such as ``"-2*cos(1)+1.5"``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression element: {ast.dump(node)}")

    try:
        return ev(ast.parse(str(text), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ValidationError(f"cannot evaluate {text!r}: {exc}") from None


@dataclass
class SimulationSettings:
    horizon: int = 500
    seed: int = 0
    mu: float = None
    initial: str = "random"
    tail_fraction: float = 0.6
    tail_tol: float = 1e-2

    def as_dict(self):
        return {
            "horizon": self.horizon, "seed": self.seed, "mu": self.mu,
            "initial": self.initial, "tail_fraction": self.tail_fraction, "tail_tol": self.tail_tol,
        }


@dataclass(eq=False)
class Scenario:
    """Leader, followers, graph and simulation settings."""

    S0: np.ndarray
    agents: list
    disturbances: list
    network: Network
    K1: list = None
    L: list = None
    settings: SimulationSettings = field(default_factory=SimulationSettings)
    name: str = ""

    def __post_init__(self):
        self.S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        if self.S0.shape[0] != self.S0.shape[1]:
            raise ValidationError(f"leader: matrix must be square, got {self.S0.shape}")
        if self.agents and len(self.agents) != self.network.n_followers:
            raise ValidationError(
                f"agents: {len(self.agents)} given but network has {self.network.n_followers} followers"
            )
        if len(self.disturbances) != len(self.agents):
            raise ValidationError("agents: one disturbance matrix Q per agent required")
        self.disturbances = [
            np.asarray(Q, dtype=float).reshape(a.s, a.s) for a, Q in zip(self.agents, self.disturbances)
        ]
        for i, a in enumerate(self.agents):
            if a.q != self.S0.shape[0]:
                raise ValidationError(f"agents[{i}].E_x: has {a.q} columns, leader dimension is {self.S0.shape[0]}")
        for attr in ("K1", "L"):
            gains = getattr(self, attr)
            if gains is not None and len(gains) != len(self.agents):
                raise ValidationError(f"agents: {attr} must be given for all agents or none")

    @property
    def n_followers(self):
        return self.network.n_followers

    def with_settings(self, **changes):
        s = SimulationSettings(**{**self.settings.as_dict(), **changes})
        return Scenario(self.S0, self.agents, self.disturbances, self.network, self.K1, self.L, s, self.name)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return scenario_to_dict(self) == scenario_to_dict(other)


def _scalar(x):
    if isinstance(x, str):
        return evaluate_expression(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(x)
    return float(x)


def _matrix(value, path):
    """Row-list matrix; a flat list is one row and ``[]`` is empty."""
    if value is None:
        return None
    try:
        if not isinstance(value, (list, tuple)):
            return np.array([[_scalar(value)]])
        if len(value) == 0:
            return np.zeros((0, 0))
        if not any(isinstance(r, (list, tuple)) for r in value):
            return np.array([[_scalar(x) for x in value]])
        rows = [[_scalar(x) for x in row] for row in value]
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except TypeError:
        raise ValidationError(f"{path}: matrix must be a list of rows of numbers") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValidationError(f"{path}: rows have differing lengths {sorted(widths)}")
    return np.array(rows, dtype=float).reshape(len(rows), widths.pop())


def _matrix_list(value, path):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ValidationError(f"{path}: expected a list of matrices (one per delay)")
    return [_matrix(v, f"{path}[{k}]") for k, v in enumerate(value)]


def parse_scenario(doc, name=""):
    """Validate a scenario mapping and build a :class:`Scenario`."""
    if not isinstance(doc, dict):
        raise ValidationError("scenario document must be a mapping")
    known = {"name", "leader", "delays", "network", "agents", "simulation"}
    extra = set(doc) - known
    if extra:
        raise ValidationError(f"unknown top-level keys: {sorted(extra)}")
    if "leader" not in doc:
        raise ValidationError("leader: required")
    S0 = _matrix(doc["leader"], "leader")

    net_doc = doc.get("network")
    if not isinstance(net_doc, dict):
        raise ValidationError("network: required mapping with 'adjacency' or 'n_followers'/'edges'")
    try:
        if "adjacency" in net_doc:
            network = Network(_matrix(net_doc["adjacency"], "network.adjacency"))
        else:
            network = Network.from_edges(int(net_doc["n_followers"]), net_doc.get("edges", []))
    except KeyError as exc:
        raise ValidationError(f"network: missing {exc}") from None
    except ValidationError as exc:
        raise ValidationError(f"network: {exc}") from None

    default_delays = doc.get("delays", [0])
    agents, dists, k1s, ls = [], [], [], []
    for i, a in enumerate(doc.get("agents") or []):
        path = f"agents[{i}]"
        if not isinstance(a, dict):
            raise ValidationError(f"{path}: must be a mapping")
        for key in ("A", "B", "E_x", "C", "F_x"):
            if key not in a:
                raise ValidationError(f"{path}.{key}: required")
        delays = a.get("delays", default_delays)
        Q = _matrix(a.get("Q"), f"{path}.Q")
        E_w = _matrix(a.get("E_w"), f"{path}.E_w")
        s = Q.shape[0] if Q is not None else (E_w.shape[1] if E_w is not None else 0)
        try:
            agent = AgentPlant(
                A=_matrix(a["A"], f"{path}.A"),
                B=_matrix_list(a["B"], f"{path}.B"),
                E_x=_matrix(a["E_x"], f"{path}.E_x"),
                C=_matrix(a["C"], f"{path}.C"),
                F_x=_matrix(a["F_x"], f"{path}.F_x"),
                delays=delays,
                E_w=E_w,
                F_w=_matrix(a.get("F_w"), f"{path}.F_w"),
                D=_matrix_list(a.get("D"), f"{path}.D"),
                C_m=_matrix(a.get("C_m"), f"{path}.C_m"),
                D_m=_matrix_list(a.get("D_m"), f"{path}.D_m"),
                F_mx=_matrix(a.get("F_mx"), f"{path}.F_mx"),
                F_mw=_matrix(a.get("F_mw"), f"{path}.F_mw"),
                s=s,
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        if Q is None:
            Q = np.zeros((s, s))
        if Q.shape != (s, s):
            raise ValidationError(f"{path}.Q: shape {Q.shape}, expected {(s, s)}")
        agents.append(agent)
        dists.append(Q)
        k1s.append(_matrix(a.get("K1"), f"{path}.K1"))
        ls.append(_matrix(a.get("L"), f"{path}.L"))

    sim = doc.get("simulation") or {}
    try:
        settings = SimulationSettings(**sim)
    except TypeError as exc:
        raise ValidationError(f"simulation: {exc}") from None
    if settings.initial not in ("random", "zero"):
        raise ValidationError("simulation.initial: must be 'random' or 'zero'")
    if settings.mu is not None:
        settings.mu = float(settings.mu)

    return Scenario(
        S0=S0, agents=agents, disturbances=dists, network=network,
        K1=k1s if any(k is not None for k in k1s) else None,
        L=ls if any(x is not None for x in ls) else None,
        settings=settings, name=doc.get("name", name),
    )


def scenario_to_dict(sc):
    """Plain-data form; ``parse_scenario(scenario_to_dict(sc)) == sc``."""
    agents = []
    for i, (a, Q) in enumerate(zip(sc.agents, sc.disturbances)):
        d = a.to_dict()
        d.pop("s")
        d["delays"] = list(a.delays)
        d["Q"] = np.asarray(Q).tolist()
        if sc.K1 is not None and sc.K1[i] is not None:
            d["K1"] = np.asarray(sc.K1[i]).tolist()
        if sc.L is not None and sc.L[i] is not None:
            d["L"] = np.asarray(sc.L[i]).tolist()
        agents.append(d)
    return {
        "name": sc.name,
        "leader": sc.S0.tolist(),
        "network": {"adjacency": sc.network.adjacency.tolist()},
        "agents": agents,
        "simulation": sc.settings.as_dict(),
    }


def load_scenario(source):
    """Load a scenario from a path or a built-in fixture name."""
    from . import fixtures

    if isinstance(source, str) and source in fixtures.BUILTIN:
        return fixtures.BUILTIN[source]()
    path = Path(source)
    if not path.exists():
        raise ValidationError(f"config not found: {source} (built-ins: {', '.join(sorted(fixtures.BUILTIN))})")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    try:
        return parse_scenario(doc, name=path.stem)
    except CoopregError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def dump_scenario(sc, path):
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(sc), sort_keys=False))
