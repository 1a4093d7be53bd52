"""Deterministic discrete-event engine: clock, links, nodes, topology.

Every run is driven by one EventLoop; events execute in (time, seqno)
order, so identical configuration and seed replay bit-identically. Links
model serialization + propagation with a per-direction drop-tail queue.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .names import Data, Packet, wire_size


class ConfigError(ValueError):
    """Invalid topology/scenario configuration."""


class EventLoop:
    def __init__(self) -> None:
        self.now = 0.0
        self._seqno = 0
        self._queue: List[Tuple[float, int, Callable[[], None]]] = []

    def schedule_at(self, time: float, action: Callable[[], None]) -> None:
        if time < self.now:
            raise ConfigError(f"event scheduled in the past: {time} < {self.now}")
        heapq.heappush(self._queue, (time, self._seqno, action))
        self._seqno += 1

    def schedule(self, delay: float, action: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay, action)

    def run(self, until: float) -> None:
        """Execute all events with time <= until; clean return on starvation."""
        while self._queue and self._queue[0][0] <= until:
            time, _, action = heapq.heappop(self._queue)
            self.now = time
            action()
        self.now = until


class Node:
    """Anything attached to links; subclasses react to received packets."""

    def __init__(self, node_id: int):
        self.node_id = node_id
        self.ports: Dict[int, "LinkEnd"] = {}

    def attach(self, face: int, end: "LinkEnd") -> None:
        if face in self.ports:
            raise ConfigError(f"node {self.node_id}: duplicate face {face}")
        self.ports[face] = end

    def send(self, face: int, pkt: Packet) -> None:
        self.ports[face].transmit(pkt)

    def face_up(self, face: int) -> bool:
        end = self.ports.get(face)
        return end is not None and end.link.up

    def receive(self, face: int, pkt: Packet) -> None:
        raise NotImplementedError

    def on_link_down(self, face: int) -> None:
        pass


@dataclass
class DirectionStats:
    delivered_bits: Dict[int, int] = field(default_factory=dict)
    data_bits: Dict[int, int] = field(default_factory=dict)
    queue_drops: int = 0
    down_drops: int = 0


class _Direction:
    """One direction of a link: serializer state plus a drop-tail queue."""

    def __init__(self, link: "Link", bandwidth_bps: float, queue_capacity: int):
        self.link = link
        self.bandwidth_bps = bandwidth_bps
        self.queue_capacity = queue_capacity
        self.busy_until = 0.0
        self._jobs: List[Tuple[float, float]] = []  # (start, departure)
        self.stats = DirectionStats()

    def waiting(self, now: float) -> int:
        self._jobs = [(s, d) for (s, d) in self._jobs if d > now]
        return sum(1 for (s, _) in self._jobs if s > now)

    def admit(self, now: float, bits: int) -> Optional[float]:
        """Returns departure time, or None on tail drop."""
        if self.waiting(now) >= self.queue_capacity:
            self.stats.queue_drops += 1
            return None
        start = max(now, self.busy_until)
        departure = start + bits / self.bandwidth_bps
        self.busy_until = departure
        self._jobs.append((start, departure))
        return departure


class Link:
    """Bidirectional point-to-point link between two (node, face) ends."""

    def __init__(self, engine: EventLoop, link_id: str,
                 node_a: Node, face_a: int, node_b: Node, face_b: int,
                 bandwidth_bps: float, latency_s: float, queue_capacity: int,
                 bucket_s: float = 1.0):
        self.engine = engine
        self.link_id = link_id
        self.latency_s = latency_s
        self.up = True
        self.bucket_s = bucket_s
        self.ends = (
            LinkEnd(self, 0, node_a, face_a),
            LinkEnd(self, 1, node_b, face_b),
        )
        self.directions = (
            _Direction(self, bandwidth_bps, queue_capacity),  # a -> b
            _Direction(self, bandwidth_bps, queue_capacity),  # b -> a
        )
        self.bandwidth_bps = bandwidth_bps
        node_a.attach(face_a, self.ends[0])
        node_b.attach(face_b, self.ends[1])

    def transmit(self, from_side: int, pkt: Packet) -> None:
        direction = self.directions[from_side]
        if not self.up:
            direction.stats.down_drops += 1
            return
        bits = wire_size(pkt) * 8
        departure = direction.admit(self.engine.now, bits)
        if departure is None:
            return
        dest = self.ends[1 - from_side]
        arrival = departure + self.latency_s

        def deliver() -> None:
            if not self.up:
                direction.stats.down_drops += 1
                return
            bucket = int(arrival // self.bucket_s)
            stats = direction.stats
            stats.delivered_bits[bucket] = stats.delivered_bits.get(bucket, 0) + bits
            if isinstance(pkt, Data):
                stats.data_bits[bucket] = stats.data_bits.get(bucket, 0) + bits
            dest.node.receive(dest.face, pkt)

        self.engine.schedule_at(arrival, deliver)

    def set_up(self, up: bool) -> None:
        if self.up == up:
            return
        self.up = up
        if not up:
            for end in self.ends:
                end.node.on_link_down(end.face)

    def direction_between(self, src_node: int, dst_node: int) -> _Direction:
        if (self.ends[0].node.node_id, self.ends[1].node.node_id) == (src_node, dst_node):
            return self.directions[0]
        if (self.ends[1].node.node_id, self.ends[0].node.node_id) == (src_node, dst_node):
            return self.directions[1]
        raise KeyError(f"link {self.link_id} does not join {src_node}->{dst_node}")


class LinkEnd:
    __slots__ = ("link", "side", "node", "face")

    def __init__(self, link: Link, side: int, node: Node, face: int):
        self.link = link
        self.side = side
        self.node = node
        self.face = face

    def transmit(self, pkt: Packet) -> None:
        self.link.transmit(self.side, pkt)


@dataclass
class ScriptStep:
    time: float
    action: str
    args: Tuple[str, ...]


class Topology:
    """A wired set of nodes and links plus scripted events, ready to run."""

    def __init__(self, seed: int = 0, bucket_s: float = 1.0):
        self.engine = EventLoop()
        self.rng = random.Random(seed)
        self.seed = seed
        self.bucket_s = bucket_s
        self.nodes: Dict[int, Node] = {}
        self.links: Dict[str, Link] = {}
        self._link_by_pair: Dict[Tuple[int, int], Link] = {}

    def add_node(self, node: Node) -> Node:
        if node.node_id in self.nodes:
            raise ConfigError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node
        return node

    def add_link(self, a: int, b: int, bandwidth_bps: float, latency_s: float,
                 queue_capacity: int) -> Link:
        for nid in (a, b):
            if nid not in self.nodes:
                raise ConfigError(f"link {a}-{b} references unknown node {nid}")
        if (a, b) in self._link_by_pair or (b, a) in self._link_by_pair:
            raise ConfigError(f"duplicate link {a}-{b}")
        # Face ids are peer node ids: node a reaches b through face b.
        link = Link(self.engine, f"{a}-{b}", self.nodes[a], b, self.nodes[b], a,
                    bandwidth_bps, latency_s, queue_capacity, self.bucket_s)
        self.links[link.link_id] = link
        self._link_by_pair[(a, b)] = link
        return link

    def link_between(self, a: int, b: int) -> Link:
        link = self._link_by_pair.get((a, b)) or self._link_by_pair.get((b, a))
        if link is None:
            raise KeyError(f"no link between {a} and {b}")
        return link

    def run(self, until: float) -> None:
        self.engine.run(until)
