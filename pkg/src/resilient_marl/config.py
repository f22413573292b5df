"""Declarative experiment configs: parsing, validation, materialization.

Configs are YAML or JSON mappings (YAML is a superset, so one parser
covers both). Parsing resolves every default so the echoed document fully
describes the run; validation errors carry the dotted field path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from resilient_marl.agents import ProjectionJointFeatures, TabularJointFeatures
from resilient_marl.consensus import STRATEGY_NAMES
from resilient_marl.engine import EarlyStop, Simulation, StepSizeSchedule
from resilient_marl.graphs import GraphSchedule, is_r_local, place_adversaries
from resilient_marl.mdp import Mdp, generate_random_mdp


class ConfigError(ValueError):
    """Invalid config document; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


_TOPOLOGIES = ("ring", "star", "complete", "erdos_renyi", "edges")
_FEATURE_KINDS = ("tabular", "projection")
_SCHEDULE_KINDS = ("constant", "polynomial")
_STRATEGY_PARAM_KEYS = {
    "constant": {"value"},
    "drift": {"start", "rate"},
    "noise": {"scale", "seed"},
    "selfish": set(),
}


def _expect_mapping(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected a mapping, got {type(doc).__name__}")


def _check_keys(doc, allowed, path):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(path, f"unknown field(s) {sorted(unknown)}; allowed: {sorted(allowed)}")


def _get(doc, key, path, required=False, default=None):
    if key not in doc or doc[key] is None:
        if required:
            raise ConfigError(path, f"missing required field '{key}'")
        return default
    return doc[key]


def _as_int(value, path, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _as_number(value, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true/false, got {value!r}")
    return value


@dataclass(frozen=True)
class MdpSpec:
    kind: str
    n_states: int | None = None
    actions_per_agent: tuple[int, ...] | None = None
    reward_range: tuple[float, float] = (0.0, 4.0)
    seed: int | None = None
    path: str | None = None

    def to_dict(self):
        if self.kind == "file":
            return {"kind": "file", "path": self.path}
        return {
            "kind": "random",
            "n_states": self.n_states,
            "actions_per_agent": list(self.actions_per_agent),
            "reward_range": list(self.reward_range),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class GraphSpec:
    topology: str
    p: float | None = None
    seed: int = 0
    edges: tuple | None = None
    phases: tuple | None = None
    require_connected: bool = True

    def to_dict(self):
        doc = {"topology": self.topology, "require_connected": self.require_connected}
        if self.topology == "erdos_renyi":
            doc["p"] = self.p
            doc["seed"] = self.seed
        if self.edges is not None:
            doc["edges"] = [list(e) for e in self.edges]
        if self.phases is not None:
            doc["phases"] = [[list(e) for e in phase] for phase in self.phases]
        return doc


@dataclass(frozen=True)
class AdversarySpec:
    strategy: str
    params: tuple
    ids: tuple[int, ...] | None = None
    count: int | None = None
    enforce_f_local: bool = True

    def params_dict(self):
        return dict(self.params)

    def to_dict(self):
        params = {
            k: list(v) if isinstance(v, tuple) else v for k, v in self.params_dict().items()
        }
        doc = {
            "strategy": self.strategy,
            "params": params,
            "enforce_f_local": self.enforce_f_local,
        }
        if self.ids is not None:
            doc["ids"] = list(self.ids)
        else:
            doc["count"] = self.count
        return doc


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = "tabular"
    dim: int | None = None
    seed: int = 0

    def to_dict(self):
        if self.kind == "tabular":
            return {"kind": "tabular"}
        return {"kind": "projection", "dim": self.dim, "seed": self.seed}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description; every default is made explicit."""

    n_agents: int
    rounds: int
    seed: int
    mdp: MdpSpec
    graph: GraphSpec
    trim_f: int
    features: FeatureSpec
    critic_step: StepSizeSchedule
    actor_step: StepSizeSchedule
    adversaries: AdversarySpec | None = None
    log_interval: int = 100
    record_trims: bool = True
    check_regular_hull: bool = False
    snapshot_params: bool = False
    reward_noise: float = 0.0
    initial_state: int = 0
    early_stop: EarlyStop | None = None
    out: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "n_agents": self.n_agents,
            "rounds": self.rounds,
            "seed": self.seed,
            "mdp": self.mdp.to_dict(),
            "graph": self.graph.to_dict(),
            "trim_f": self.trim_f,
            "features": self.features.to_dict(),
            "critic_step": self.critic_step.to_dict(),
            "actor_step": self.actor_step.to_dict(),
            "adversaries": self.adversaries.to_dict() if self.adversaries else None,
            "log_interval": self.log_interval,
            "record_trims": self.record_trims,
            "check_regular_hull": self.check_regular_hull,
            "snapshot_params": self.snapshot_params,
            "reward_noise": self.reward_noise,
            "initial_state": self.initial_state,
            "early_stop": None,
            "out": self.out,
        }
        if self.early_stop is not None:
            doc["early_stop"] = {
                "disagreement": self.early_stop.disagreement,
                "actor_update": self.early_stop.actor_update,
                "patience": self.early_stop.patience,
            }
        return doc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _parse_mdp(doc, path="mdp"):
    _expect_mapping(doc, path)
    kind = _get(doc, "kind", path, default="random")
    if kind == "file":
        _check_keys(doc, {"kind", "path"}, path)
        return MdpSpec(kind="file", path=_get(doc, "path", path, required=True))
    if kind != "random":
        raise ConfigError(f"{path}.kind", f"unknown mdp kind {kind!r}; use 'random' or 'file'")
    _check_keys(doc, {"kind", "n_states", "actions_per_agent", "reward_range", "seed"}, path)
    n_states = _as_int(_get(doc, "n_states", path, required=True), f"{path}.n_states", minimum=2)
    acts = _get(doc, "actions_per_agent", path, required=True)
    if isinstance(acts, int):
        acts = (acts,)
    elif isinstance(acts, (list, tuple)):
        acts = tuple(_as_int(a, f"{path}.actions_per_agent[{k}]", minimum=2) for k, a in enumerate(acts))
    else:
        raise ConfigError(f"{path}.actions_per_agent", "expected an int or a list of ints")
    rng_range = _get(doc, "reward_range", path, default=[0.0, 4.0])
    if not (isinstance(rng_range, (list, tuple)) and len(rng_range) == 2):
        raise ConfigError(f"{path}.reward_range", "expected [low, high]")
    lo = _as_number(rng_range[0], f"{path}.reward_range[0]")
    hi = _as_number(rng_range[1], f"{path}.reward_range[1]")
    if hi < lo:
        raise ConfigError(f"{path}.reward_range", "low must not exceed high")
    seed = _get(doc, "seed", path)
    if seed is not None:
        seed = _as_int(seed, f"{path}.seed")
    return MdpSpec("random", n_states, acts, (lo, hi), seed)


def _parse_edge_list(raw, path):
    if not isinstance(raw, (list, tuple)):
        raise ConfigError(path, "expected a list of [u, v] pairs")
    edges = []
    for k, e in enumerate(raw):
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise ConfigError(f"{path}[{k}]", "expected a pair [u, v]")
        edges.append((_as_int(e[0], f"{path}[{k}][0]", minimum=0), _as_int(e[1], f"{path}[{k}][1]", minimum=0)))
    return tuple(edges)


def _parse_graph(doc, path="graph"):
    _expect_mapping(doc, path)
    _check_keys(doc, {"topology", "p", "seed", "edges", "phases", "require_connected"}, path)
    topology = _get(doc, "topology", path, required=True)
    if topology not in _TOPOLOGIES:
        raise ConfigError(f"{path}.topology", f"unknown topology {topology!r}; valid: {list(_TOPOLOGIES)}")
    if topology != "edges" and ("edges" in doc or "phases" in doc):
        raise ConfigError(path, f"edges/phases only apply to topology 'edges', not {topology!r}")
    if topology != "erdos_renyi" and ("p" in doc or "seed" in doc):
        raise ConfigError(path, f"p/seed only apply to topology 'erdos_renyi', not {topology!r}")
    p = None
    seed = 0
    edges = None
    phases = None
    if topology == "erdos_renyi":
        p = _as_number(_get(doc, "p", path, required=True), f"{path}.p")
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"{path}.p", "edge probability must lie in [0, 1]")
        seed = _as_int(_get(doc, "seed", path, default=0), f"{path}.seed")
    if topology == "edges":
        raw_phases = _get(doc, "phases", path)
        if raw_phases is not None:
            if not isinstance(raw_phases, (list, tuple)) or not raw_phases:
                raise ConfigError(f"{path}.phases", "expected a nonempty list of edge lists")
            phases = tuple(_parse_edge_list(ph, f"{path}.phases[{k}]") for k, ph in enumerate(raw_phases))
        else:
            edges = _parse_edge_list(_get(doc, "edges", path, required=True), f"{path}.edges")
    require_connected = _as_bool(_get(doc, "require_connected", path, default=True), f"{path}.require_connected")
    return GraphSpec(topology, p, seed, edges, phases, require_connected)


def _parse_adversaries(doc, path="adversaries"):
    if doc is None:
        return None
    _expect_mapping(doc, path)
    _check_keys(doc, {"ids", "count", "strategy", "params", "enforce_f_local"}, path)
    strategy = _get(doc, "strategy", path, required=True)
    if strategy not in STRATEGY_NAMES:
        raise ConfigError(
            f"{path}.strategy",
            f"unknown strategy {strategy!r}; valid: {sorted(STRATEGY_NAMES)}",
        )
    params = _get(doc, "params", path, default={})
    _expect_mapping(params, f"{path}.params")
    allowed = _STRATEGY_PARAM_KEYS[strategy]
    _check_keys(params, allowed, f"{path}.params")
    if strategy == "constant" and "value" not in params:
        raise ConfigError(f"{path}.params", "constant strategy needs 'value'")
    if strategy == "drift" and not {"start", "rate"} <= set(params):
        raise ConfigError(f"{path}.params", "drift strategy needs 'start' and 'rate'")
    if strategy == "noise" and "scale" not in params:
        raise ConfigError(f"{path}.params", "noise strategy needs 'scale'")
    ids = _get(doc, "ids", path)
    count = _get(doc, "count", path)
    if (ids is None) == (count is None):
        raise ConfigError(path, "give exactly one of 'ids' or 'count'")
    if ids is not None:
        if not isinstance(ids, (list, tuple)):
            raise ConfigError(f"{path}.ids", "expected a list of node ids")
        ids = tuple(sorted(_as_int(i, f"{path}.ids[{k}]", minimum=0) for k, i in enumerate(ids)))
        if len(set(ids)) != len(ids):
            raise ConfigError(f"{path}.ids", "duplicate ids")
    else:
        count = _as_int(count, f"{path}.count", minimum=0)
    enforce = _as_bool(_get(doc, "enforce_f_local", path, default=True), f"{path}.enforce_f_local")
    normalized = tuple(
        sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in params.items())
    )
    return AdversarySpec(strategy, normalized, ids, count, enforce)


def _parse_features(doc, path="features"):
    if doc is None:
        return FeatureSpec()
    _expect_mapping(doc, path)
    _check_keys(doc, {"kind", "dim", "seed"}, path)
    kind = _get(doc, "kind", path, default="tabular")
    if kind not in _FEATURE_KINDS:
        raise ConfigError(f"{path}.kind", f"unknown feature kind {kind!r}; valid: {list(_FEATURE_KINDS)}")
    if kind == "tabular":
        return FeatureSpec("tabular")
    dim = _as_int(_get(doc, "dim", path, required=True), f"{path}.dim", minimum=1)
    seed = _as_int(_get(doc, "seed", path, default=0), f"{path}.seed")
    return FeatureSpec("projection", dim, seed)


def _parse_schedule(doc, path, default_scale, default_exp):
    if doc is None:
        return StepSizeSchedule.polynomial(default_scale, default_exp)
    _expect_mapping(doc, path)
    _check_keys(doc, {"kind", "scale", "exponent"}, path)
    kind = _get(doc, "kind", path, default="polynomial")
    if kind not in _SCHEDULE_KINDS:
        raise ConfigError(f"{path}.kind", f"unknown schedule kind {kind!r}; valid: {list(_SCHEDULE_KINDS)}")
    scale = _as_number(_get(doc, "scale", path, default=default_scale), f"{path}.scale")
    if scale < 0:
        raise ConfigError(f"{path}.scale", "must be nonnegative")
    if kind == "constant":
        return StepSizeSchedule.constant(scale)
    exponent = _as_number(_get(doc, "exponent", path, default=default_exp), f"{path}.exponent")
    if exponent <= 0:
        raise ConfigError(f"{path}.exponent", "polynomial schedules need a positive exponent")
    return StepSizeSchedule.polynomial(scale, exponent)


def _parse_early_stop(doc, path="early_stop"):
    if doc is None:
        return None
    _expect_mapping(doc, path)
    _check_keys(doc, {"disagreement", "actor_update", "patience"}, path)
    return EarlyStop(
        disagreement=_as_number(_get(doc, "disagreement", path, required=True), f"{path}.disagreement"),
        actor_update=_as_number(_get(doc, "actor_update", path, required=True), f"{path}.actor_update"),
        patience=_as_int(_get(doc, "patience", path, default=100), f"{path}.patience", minimum=1),
    )


_TOP_KEYS = {
    "n_agents", "rounds", "seed", "mdp", "graph", "trim_f", "features",
    "critic_step", "actor_step", "adversaries", "log_interval", "record_trims",
    "check_regular_hull", "snapshot_params", "reward_noise", "initial_state",
    "early_stop", "out",
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a raw mapping and resolve every default."""
    _expect_mapping(doc, "<config>")
    _check_keys(doc, _TOP_KEYS, "<config>")
    n_agents = _as_int(_get(doc, "n_agents", "<config>", required=True), "n_agents", minimum=1)
    rounds = _as_int(_get(doc, "rounds", "<config>", required=True), "rounds", minimum=0)
    seed = _as_int(_get(doc, "seed", "<config>", default=0), "seed")
    mdp_spec = _parse_mdp(_get(doc, "mdp", "<config>", required=True))
    graph_spec = _parse_graph(_get(doc, "graph", "<config>", required=True))
    trim_f = _as_int(_get(doc, "trim_f", "<config>", default=0), "trim_f", minimum=0)
    features = _parse_features(_get(doc, "features", "<config>"))
    critic = _parse_schedule(_get(doc, "critic_step", "<config>"), "critic_step", 1.0, 0.65)
    actor = _parse_schedule(_get(doc, "actor_step", "<config>"), "actor_step", 1.0, 0.85)
    adversaries = _parse_adversaries(_get(doc, "adversaries", "<config>"))
    log_interval = _as_int(_get(doc, "log_interval", "<config>", default=100), "log_interval", minimum=1)
    reward_noise = _as_number(_get(doc, "reward_noise", "<config>", default=0.0), "reward_noise")
    if reward_noise < 0:
        raise ConfigError("reward_noise", "must be nonnegative")
    cfg = ExperimentConfig(
        n_agents=n_agents,
        rounds=rounds,
        seed=seed,
        mdp=mdp_spec,
        graph=graph_spec,
        trim_f=trim_f,
        features=features,
        critic_step=critic,
        actor_step=actor,
        adversaries=adversaries,
        log_interval=log_interval,
        record_trims=_as_bool(_get(doc, "record_trims", "<config>", default=True), "record_trims"),
        check_regular_hull=_as_bool(
            _get(doc, "check_regular_hull", "<config>", default=False), "check_regular_hull"
        ),
        snapshot_params=_as_bool(
            _get(doc, "snapshot_params", "<config>", default=False), "snapshot_params"
        ),
        reward_noise=reward_noise,
        initial_state=_as_int(_get(doc, "initial_state", "<config>", default=0), "initial_state", minimum=0),
        early_stop=_parse_early_stop(_get(doc, "early_stop", "<config>")),
        out=_get(doc, "out", "<config>"),
    )
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ExperimentConfig):
    if cfg.mdp.kind == "random":
        n_acts = cfg.mdp.actions_per_agent
        if len(n_acts) not in (1, cfg.n_agents):
            raise ConfigError(
                "mdp.actions_per_agent",
                f"got {len(n_acts)} entries for {cfg.n_agents} agents",
            )
        counts = n_acts if len(n_acts) == cfg.n_agents else n_acts * cfg.n_agents
        if math.prod(counts) > 4096:
            raise ConfigError("mdp.actions_per_agent", "joint action space exceeds the cap of 4096")
    if cfg.adversaries is not None and cfg.adversaries.ids is not None:
        bad = [i for i in cfg.adversaries.ids if i >= cfg.n_agents]
        if bad:
            raise ConfigError("adversaries.ids", f"ids {bad} exceed n_agents - 1")
        if len(cfg.adversaries.ids) >= cfg.n_agents:
            raise ConfigError("adversaries.ids", "at least one agent must stay regular")
    if cfg.adversaries is not None and cfg.adversaries.count is not None:
        if cfg.adversaries.count >= cfg.n_agents:
            raise ConfigError("adversaries.count", "at least one agent must stay regular")
    if cfg.critic_step.at(0) > 1.0:
        raise ConfigError("critic_step.scale", "critic step must start within [0, 1]")
    if cfg.features.kind == "projection" and cfg.mdp.kind == "random":
        counts = (
            cfg.mdp.actions_per_agent
            if len(cfg.mdp.actions_per_agent) == cfg.n_agents
            else cfg.mdp.actions_per_agent * cfg.n_agents
        )
        full = cfg.mdp.n_states * math.prod(counts)
        if cfg.features.dim > full:
            raise ConfigError("features.dim", f"projection dim exceeds the tabular size {full}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML or JSON config document into a validated ExperimentConfig."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<config>", f"unparseable document: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _build_mdp(cfg: ExperimentConfig) -> Mdp:
    spec = cfg.mdp
    if spec.kind == "file":
        mdp = Mdp.load(spec.path)
        if mdp.n_agents != cfg.n_agents:
            raise ConfigError("mdp.path", f"file has {mdp.n_agents} agents, config says {cfg.n_agents}")
        return mdp
    acts = spec.actions_per_agent
    if len(acts) == 1:
        acts = acts[0]
    return generate_random_mdp(
        cfg.n_agents,
        spec.n_states,
        acts,
        spec.reward_range,
        seed=cfg.seed if spec.seed is None else spec.seed,
    )


def _build_graph(cfg: ExperimentConfig, enforce_connected: bool = True) -> GraphSchedule:
    spec = cfg.graph
    n = cfg.n_agents
    if spec.topology == "ring":
        g = GraphSchedule.ring(n)
    elif spec.topology == "star":
        g = GraphSchedule.star(n)
    elif spec.topology == "complete":
        g = GraphSchedule.complete(n)
    elif spec.topology == "erdos_renyi":
        g = GraphSchedule.erdos_renyi(n, spec.p, spec.seed)
    elif spec.phases is not None:
        g = GraphSchedule.periodic(n, spec.phases)
    else:
        g = GraphSchedule.from_edges(n, spec.edges)
    if spec.require_connected and enforce_connected:
        # for a periodic schedule, connectivity of the union of phases is
        # what consensus over a full period needs
        union = GraphSchedule.from_edges(n, [e for ph in g.phases for e in ph]) if not g.static else g
        if not union.is_connected():
            raise ConfigError("graph", "graph is disconnected but require_connected is set")
    return g


def _build_strategy(spec: AdversarySpec):
    params = spec.params_dict()
    cls = STRATEGY_NAMES[spec.strategy]
    return cls(**params)


def resolve_graph(cfg: ExperimentConfig, enforce_f_local: bool = True) -> GraphSchedule:
    """Build the graph and resolve the adversary placement.

    Random placement draws from a stream seeded with (master seed, 1),
    keeping it independent of the simulation stream. With
    ``enforce_f_local=False`` a declared non-local placement or a
    disconnected graph is returned instead of rejected (used by
    diagnostics).
    """
    graph = _build_graph(cfg, enforce_connected=enforce_f_local)
    adversary_ids = frozenset()
    if cfg.adversaries is not None:
        spec = cfg.adversaries
        if spec.ids is not None:
            adversary_ids = frozenset(spec.ids)
            if (
                enforce_f_local
                and spec.enforce_f_local
                and not is_r_local(graph, adversary_ids, cfg.trim_f)
            ):
                raise ConfigError(
                    "adversaries.ids",
                    f"declared placement is not {cfg.trim_f}-local for the configured trim_f",
                )
        else:
            placement_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
            adversary_ids = place_adversaries(
                graph, spec.count, cfg.trim_f if spec.enforce_f_local else None, placement_rng
            )
    return graph.with_adversaries(adversary_ids, trim_f=cfg.trim_f)


def build_simulation(cfg: ExperimentConfig) -> Simulation:
    """Materialize the config: MDP, graph, adversary placement, features."""
    mdp = _build_mdp(cfg)
    graph = resolve_graph(cfg, enforce_f_local=True)
    strategies = {}
    if cfg.adversaries is not None and graph.adversary_set:
        strategy = _build_strategy(cfg.adversaries)
        strategies = {i: strategy for i in graph.adversary_set}
    if cfg.features.kind == "tabular":
        features = TabularJointFeatures(mdp.n_states, mdp.n_joint_actions)
    else:
        features = ProjectionJointFeatures(
            mdp.n_states, mdp.n_joint_actions, cfg.features.dim, cfg.features.seed
        )
    return Simulation(
        mdp=mdp,
        graph=graph,
        features=features,
        critic_schedule=cfg.critic_step,
        actor_schedule=cfg.actor_step,
        n_rounds=cfg.rounds,
        seed=cfg.seed,
        strategies=strategies,
        log_interval=cfg.log_interval,
        record_trims=cfg.record_trims,
        check_regular_hull=cfg.check_regular_hull,
        snapshot_params=cfg.snapshot_params,
        reward_noise=cfg.reward_noise,
        initial_state=cfg.initial_state,
        early_stop=cfg.early_stop,
        enforce_f_local=bool(cfg.adversaries and cfg.adversaries.enforce_f_local),
    )
