"""Scenario file schema: parsing, validation, and world construction.

A scenario is structured text (configparser syntax): one `[sim]` section,
one `[node N]` section per node, `[link A-B]` sections, `[fib N]` sections
for routers, an optional `[script]` with timed steps, and an optional
`[checks]` block with pass/fail thresholds evaluated after the run.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .forwarder import Producer, Router
from .mpccp import Consumer, TransportConfig
from .names import ContentName, Data, FlowName
from .netsim import ConfigError, Topology


@dataclass
class SimSpec:
    duration: float = 60.0
    seed: int = 1
    bucket: float = 1.0
    warmup_fraction: float = 0.1
    payload: int = 1024

    @property
    def warmup(self) -> float:
        return self.duration * self.warmup_fraction


@dataclass
class NodeSpec:
    node_id: int
    kind: str                      # consumer | router | producer
    options: Dict[str, str] = field(default_factory=dict)


@dataclass
class LinkSpec:
    a: int
    b: int
    bandwidth_kbps: float
    latency_ms: float
    queue_pkts: int


@dataclass
class FibRule:
    node: int
    prefix: str
    faces: List[int]


@dataclass
class ScriptStep:
    time: float
    action: str
    args: List[str]


@dataclass
class CheckSpec:
    kind: str
    args: Dict[str, str]


@dataclass
class Scenario:
    name: str
    sim: SimSpec
    nodes: List[NodeSpec]
    links: List[LinkSpec]
    fib_rules: List[FibRule]
    script: List[ScriptStep]
    checks: List[CheckSpec]

    def node_map(self) -> Dict[int, NodeSpec]:
        return {n.node_id: n for n in self.nodes}


_SCRIPT_ACTIONS = {"link_down": 2, "link_up": 2, "cache_clear": 1, "cache_preseed": 4}

_NODE_KINDS = ("consumer", "router", "producer")


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep prefixes like /obj/A case-sensitive
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc

    sim = SimSpec()
    nodes: List[NodeSpec] = []
    links: List[LinkSpec] = []
    fib_rules: List[FibRule] = []
    script: List[ScriptStep] = []
    checks: List[CheckSpec] = []

    for section in parser.sections():
        body = parser[section]
        if section == "sim":
            sim = SimSpec(
                duration=_get_float(body, section, "duration", sim.duration),
                seed=_get_int(body, section, "seed", sim.seed),
                bucket=_get_float(body, section, "bucket", sim.bucket),
                warmup_fraction=_get_float(body, section, "warmup_fraction",
                                           sim.warmup_fraction),
                payload=_get_int(body, section, "payload", sim.payload),
            )
        elif section.startswith("node "):
            node_id = _parse_id(section, section[5:])
            kind = body.get("kind")
            if kind not in _NODE_KINDS:
                raise ConfigError(f"[{section}] kind must be one of {_NODE_KINDS}, got {kind!r}")
            options = {k: v for k, v in body.items() if k != "kind"}
            nodes.append(NodeSpec(node_id, kind, options))
        elif section.startswith("link "):
            pair = section[5:]
            try:
                a_text, b_text = pair.split("-")
            except ValueError:
                raise ConfigError(f"[{section}] expected 'link A-B'") from None
            links.append(LinkSpec(
                a=_parse_id(section, a_text),
                b=_parse_id(section, b_text),
                bandwidth_kbps=_get_float(body, section, "bandwidth_kbps", required=True),
                latency_ms=_get_float(body, section, "latency_ms", required=True),
                queue_pkts=_get_int(body, section, "queue_pkts", 64),
            ))
        elif section.startswith("fib "):
            node_id = _parse_id(section, section[4:])
            for prefix, faces_text in body.items():
                try:
                    faces = [int(tok) for tok in faces_text.split()]
                except ValueError:
                    raise ConfigError(f"[{section}] {prefix}: faces must be node ids") from None
                if not faces:
                    raise ConfigError(f"[{section}] {prefix}: no faces")
                fib_rules.append(FibRule(node_id, prefix, faces))
        elif section == "script":
            for line in _lines(body.get("steps", "")):
                parts = line.split()
                if len(parts) < 2:
                    raise ConfigError(f"[script] malformed step: {line!r}")
                try:
                    when = float(parts[0])
                except ValueError:
                    raise ConfigError(f"[script] bad time in step: {line!r}") from None
                action, args = parts[1], parts[2:]
                if action not in _SCRIPT_ACTIONS:
                    raise ConfigError(f"[script] unknown action {action!r}")
                if len(args) != _SCRIPT_ACTIONS[action]:
                    raise ConfigError(
                        f"[script] {action} takes {_SCRIPT_ACTIONS[action]} args: {line!r}")
                script.append(ScriptStep(when, action, args))
        elif section == "checks":
            for line in _lines(body.get("checks", "")):
                parts = line.split()
                args = {}
                for token in parts[1:]:
                    if "=" not in token:
                        raise ConfigError(f"[checks] expected key=value, got {token!r}")
                    key, value = token.split("=", 1)
                    args[key] = value
                checks.append(CheckSpec(parts[0], args))
        else:
            raise ConfigError(f"unknown section [{section}]")

    scenario = Scenario(name, sim, nodes, links, fib_rules, script, checks)
    _validate(scenario)
    return scenario


def _lines(block: str) -> List[str]:
    return [line.strip() for line in block.splitlines() if line.strip()]


def _parse_id(section: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"[{section}] bad node id {text!r}") from None


def _get_float(body, section, key, default=None, required=False) -> float:
    raw = body.get(key)
    if raw is None:
        if required:
            raise ConfigError(f"[{section}] missing required field {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from None


def _get_int(body, section, key, default=None, required=False) -> int:
    raw = body.get(key)
    if raw is None:
        if required:
            raise ConfigError(f"[{section}] missing required field {key!r}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}") from None


def _opt_float(options, node_id, key, default):
    if key not in options:
        return default
    try:
        return float(options[key])
    except ValueError:
        raise ConfigError(f"[node {node_id}] {key}: not a number") from None


def _opt_int(options, node_id, key, default):
    if key not in options:
        return default
    try:
        return int(options[key])
    except ValueError:
        raise ConfigError(f"[node {node_id}] {key}: not an integer") from None


def _opt_bool(options, node_id, key, default=False):
    raw = options.get(key)
    if raw is None:
        return default
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[node {node_id}] {key}: not a boolean: {raw!r}")


def _validate(scenario: Scenario) -> None:
    sim = scenario.sim
    if sim.duration <= 0:
        raise ConfigError("[sim] duration must be positive")
    if not 0 <= sim.warmup_fraction < 1:
        raise ConfigError("[sim] warmup_fraction must be in [0, 1)")
    nodes = scenario.node_map()
    if len(nodes) != len(scenario.nodes):
        raise ConfigError("duplicate node ids")
    pairs = set()
    neighbors: Dict[int, set] = {nid: set() for nid in nodes}
    for link in scenario.links:
        for nid in (link.a, link.b):
            if nid not in nodes:
                raise ConfigError(f"link {link.a}-{link.b}: unknown node {nid}")
        key = frozenset((link.a, link.b))
        if link.a == link.b or key in pairs:
            raise ConfigError(f"link {link.a}-{link.b}: duplicate or self link")
        pairs.add(key)
        neighbors[link.a].add(link.b)
        neighbors[link.b].add(link.a)
    for rule in scenario.fib_rules:
        if rule.node not in nodes or nodes[rule.node].kind != "router":
            raise ConfigError(f"[fib {rule.node}]: not a router")
        for face in rule.faces:
            if face not in neighbors[rule.node]:
                raise ConfigError(
                    f"[fib {rule.node}] {rule.prefix}: face {face} has no link")
    # Producer coverage: every consumer's request range must be servable.
    catalog: Dict[str, int] = {}
    for spec in scenario.nodes:
        if spec.kind != "producer":
            continue
        for token in spec.options.get("catalog", "").split():
            if ":" not in token:
                raise ConfigError(f"[node {spec.node_id}] catalog entries are prefix:count")
            prefix, count_text = token.rsplit(":", 1)
            count = int(count_text)
            catalog[prefix] = max(catalog.get(prefix, 0), count)
    for spec in scenario.nodes:
        if spec.kind != "consumer":
            continue
        flow = spec.options.get("flow")
        if not flow:
            raise ConfigError(f"[node {spec.node_id}] consumer needs a flow")
        total = _opt_int(spec.options, spec.node_id, "total_packets", None)
        if total is None:
            raise ConfigError(f"[node {spec.node_id}] consumer needs total_packets")
        limit = _opt_int(spec.options, spec.node_id, "request_limit", total)
        if flow not in catalog:
            raise ConfigError(f"[node {spec.node_id}] no producer serves {flow}")
        if catalog[flow] < limit:
            raise ConfigError(
                f"[node {spec.node_id}] producers hold {catalog[flow]} packets of "
                f"{flow}, consumer requests {limit}")
    for step in scenario.script:
        if step.action in ("link_down", "link_up"):
            a, b = (_parse_id("script", t) for t in step.args)
            if frozenset((a, b)) not in pairs:
                raise ConfigError(f"[script] {step.action}: no link {a}-{b}")
        elif step.action in ("cache_clear", "cache_preseed"):
            nid = _parse_id("script", step.args[0])
            if nid not in nodes or nodes[nid].kind != "router":
                raise ConfigError(f"[script] {step.action}: node {nid} is not a router")


@dataclass
class World:
    """A scenario instantiated into a runnable topology."""

    scenario: Scenario
    topology: Topology
    consumers: Dict[int, Consumer]
    routers: Dict[int, Router]
    producers: Dict[int, Producer]


def build_world(scenario: Scenario, seed: Optional[int] = None,
                duration: Optional[float] = None) -> World:
    sim = scenario.sim
    if seed is not None:
        sim = SimSpec(sim.duration, seed, sim.bucket, sim.warmup_fraction, sim.payload)
    if duration is not None:
        sim = SimSpec(duration, sim.seed, sim.bucket, sim.warmup_fraction, sim.payload)
    scenario = Scenario(scenario.name, sim, scenario.nodes, scenario.links,
                        scenario.fib_rules, scenario.script, scenario.checks)

    topo = Topology(seed=sim.seed, bucket_s=sim.bucket)
    consumers: Dict[int, Consumer] = {}
    routers: Dict[int, Router] = {}
    producers: Dict[int, Producer] = {}

    for spec in scenario.nodes:
        opts = spec.options
        nid = spec.node_id
        if spec.kind == "router":
            router = Router(
                nid, topo.engine,
                fab_capacity=_opt_int(opts, nid, "fab_capacity", 1024),
                cs_capacity=_opt_int(opts, nid, "cs_capacity", 0),
                pit_expiry_s=_opt_float(opts, nid, "pit_expiry", 4.0),
            )
            routers[nid] = router
            topo.add_node(router)
        elif spec.kind == "producer":
            producer = Producer(nid, payload_size=sim.payload)
            for token in opts.get("catalog", "").split():
                prefix, count_text = token.rsplit(":", 1)
                producer.serve(FlowName.parse(prefix), int(count_text))
            producers[nid] = producer
            topo.add_node(producer)
        else:
            cfg = TransportConfig(
                max_paths=_opt_int(opts, nid, "max_paths", 10),
                switch_period_s=_opt_float(opts, nid, "switch_period", 10.0),
                beta=_opt_float(opts, nid, "beta", 0.75),
                probe_rate_hz=_opt_float(opts, nid, "probe_rate", 10.0),
                strategy=opts.get("strategy", "bandwidth"),
                two_packet_loss=_opt_bool(opts, nid, "two_packet_loss"),
                initial_cwnd=_opt_float(opts, nid, "initial_cwnd", 2.0),
                initial_ssthresh=_opt_float(opts, nid, "initial_ssthresh", 64.0),
                rto_floor_s=_opt_float(opts, nid, "rto_floor", 0.2),
                rtt_mu_override=_opt_float(opts, nid, "rtt_mu", None),
                ratio_path_over_reference=not _opt_bool(opts, nid, "flip_rtt_ratio"),
                variance_window=_opt_int(opts, nid, "variance_window", 10),
                legacy=_opt_bool(opts, nid, "legacy"),
                bandwidth_bucket_s=sim.bucket,
                max_burst=_opt_int(opts, nid, "max_burst", 4),
                send_jitter_s=_opt_float(opts, nid, "send_jitter", 0.002),
            )
            total = _opt_int(opts, nid, "total_packets", 0)
            consumer = Consumer(
                nid, topo.engine, topo.rng,
                flow=FlowName.parse(opts["flow"]),
                total_packets=total,
                cfg=cfg,
                start_at=_opt_float(opts, nid, "start", 0.0),
                stop_at=_opt_float(opts, nid, "stop", None),
                request_limit=_opt_int(opts, nid, "request_limit", None),
            )
            consumers[nid] = consumer
            topo.add_node(consumer)

    for link in scenario.links:
        topo.add_link(link.a, link.b, link.bandwidth_kbps * 1000.0,
                      link.latency_ms / 1000.0, link.queue_pkts)

    for rule in scenario.fib_rules:
        routers[rule.node].fib.add(rule.prefix, rule.faces)

    for step in scenario.script:
        topo.engine.schedule_at(step.time, _script_action(topo, routers, sim, step))

    return World(scenario, topo, consumers, routers, producers)


def _script_action(topo: Topology, routers: Dict[int, Router], sim: SimSpec,
                   step: ScriptStep):
    if step.action == "link_down":
        a, b = int(step.args[0]), int(step.args[1])
        return lambda: topo.link_between(a, b).set_up(False)
    if step.action == "link_up":
        a, b = int(step.args[0]), int(step.args[1])
        return lambda: topo.link_between(a, b).set_up(True)
    if step.action == "cache_clear":
        router = routers[int(step.args[0])]
        return lambda: router.cs.clear()
    # cache_preseed <node> <flow> <first_n> <count>
    router = routers[int(step.args[0])]
    flow = FlowName.parse(step.args[1])
    first_n, count = int(step.args[2]), int(step.args[3])

    def preseed() -> None:
        chosen = topo.rng.sample(range(first_n), count)
        for seq in sorted(chosen):
            name = flow.with_sequence(seq)
            router.cs.preseed(name, Data(name, payload_size=sim.payload))

    return preseed
