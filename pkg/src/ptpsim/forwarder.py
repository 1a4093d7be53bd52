"""Per-router engine: PIT with aggregation, content store, path-specified
forwarding with name-based fallback, probe handling and NACK generation.

Also home to the producer endpoint, which answers Interests from a catalog
and seeds the empty tag on probe replies.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .fib import Fib, FabTable, resolve
from .names import (
    Components,
    ContentName,
    Data,
    EMPTY_TAG,
    FlowName,
    Interest,
    Nack,
    NackReason,
    Packet,
)
from .netsim import EventLoop, Node


@dataclass
class PitEntry:
    name: Components
    upstream_face: int
    serial: int
    # face -> joined via aggregation (kept unique; first registration wins)
    downstream: "OrderedDict[int, bool]" = field(default_factory=OrderedDict)


class ContentStore:
    """Recency-evicting packet cache; capacity 0 disables caching."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._store: "OrderedDict[Components, Data]" = OrderedDict()
        self._preseeded: set = set()
        self.preseed_exhausted_at: Optional[float] = None
        self.preseed_last_hit_at: Optional[float] = None

    def get(self, name: ContentName) -> Optional[Data]:
        data = self._store.get(name.components)
        if data is not None:
            self._store.move_to_end(name.components)
        return data

    def put(self, name: ContentName, data: Data) -> None:
        if self.capacity <= 0:
            return
        key = name.components
        if key in self._store:
            self._store.move_to_end(key)
            return
        self._store[key] = data
        if len(self._store) > self.capacity:
            evicted, _ = self._store.popitem(last=False)
            self._preseeded.discard(evicted)

    def preseed(self, name: ContentName, data: Data) -> None:
        self.put(name, data)
        self._preseeded.add(name.components)

    def note_served(self, name: ContentName, now: float) -> None:
        key = name.components
        if key in self._preseeded:
            self._preseeded.discard(key)
            self.preseed_last_hit_at = now
            if not self._preseeded:
                self.preseed_exhausted_at = now

    def clear(self) -> None:
        self._store.clear()
        self._preseeded.clear()

    @property
    def preseed_remaining(self) -> int:
        return len(self._preseeded)

    def __len__(self) -> int:
        return len(self._store)


@dataclass
class RouterStats:
    interests_in: int = 0
    interests_out: int = 0
    data_in: int = 0
    data_out: int = 0
    nacks_in: int = 0
    nacks_out: int = 0
    cs_hits: int = 0
    pit_aggregated: int = 0
    pit_expired: int = 0
    unsolicited_data: int = 0
    hop_budget_drops: int = 0
    fallback_forwards: int = 0

    def snapshot(self) -> Dict[str, int]:
        return dict(self.__dict__)


class Router(Node):
    """State machine driven solely by the event loop; owns FIB, FAB, PIT, CS."""

    def __init__(self, node_id: int, engine: EventLoop,
                 fab_capacity: int = 1024, cs_capacity: int = 0,
                 pit_expiry_s: float = 4.0):
        super().__init__(node_id)
        self.engine = engine
        self.fib = Fib()
        self.fab = FabTable(fab_capacity)
        self.cs = ContentStore(cs_capacity)
        self.pit: Dict[Components, PitEntry] = {}
        self.pit_expiry_s = pit_expiry_s
        self.stats = RouterStats()
        self._rr: Dict[Components, int] = {}
        self._pit_serial = 0
        # (face, name) per forwarded Interest, for path-retrace assertions.
        self.forward_log: Optional[List[Tuple[Components, int]]] = None

    # -- receive dispatch ---------------------------------------------------

    def receive(self, face: int, pkt: Packet) -> None:
        if isinstance(pkt, Interest):
            self.on_interest(face, pkt)
        elif isinstance(pkt, Data):
            self.on_data(face, pkt)
        elif isinstance(pkt, Nack):
            self.on_nack(face, pkt)

    # -- Interest path --------------------------------------------------------

    def on_interest(self, in_face: int, pkt: Interest) -> None:
        self.stats.interests_in += 1
        if pkt.hop_budget <= 0:
            self.stats.hop_budget_drops += 1
            return
        name = pkt.name

        # 1. Content store (probes bypass the cache on the way up).
        if not pkt.probe:
            cached = self.cs.get(name)
            if cached is not None:
                self.stats.cs_hits += 1
                self.cs.note_served(name, self.engine.now)
                self._send_data(in_face, replace(cached, from_intermediate=True))
                return

        # 2. PIT aggregation. A duplicate from an already-registered face is a
        # consumer retry and must be re-forwarded, or the entry would
        # black-hole retransmissions until it expires.
        entry = self.pit.get(name.components)
        if entry is not None and in_face not in entry.downstream:
            entry.downstream[in_face] = True
            self.stats.pit_aggregated += 1
            return

        fib_entry = resolve(self.fib, self.fab, name)

        # 3./4. Path-specified forwarding with name-based fallback.
        if pkt.tag is not None and len(pkt.tag) > 0:
            popped, rest = pkt.tag.pop()
            valid = (fib_entry is not None and popped in fib_entry.faces
                     and popped != in_face and self.face_up(popped))
            if valid:
                self._forward(name, in_face, popped,
                              replace(pkt, tag=rest, hop_budget=pkt.hop_budget - 1),
                              entry)
                return
            # Specified hop is invalid/down: notify and fall back to
            # name-based forwarding with the rest of the tag discarded.
            self._send_nack(in_face, Nack(name, NackReason.PATH_FAILURE))
            out = self._pick_round_robin(fib_entry, in_face)
            if out is not None:
                self.stats.fallback_forwards += 1
                self._forward(name, in_face, out,
                              replace(pkt, tag=None, hop_budget=pkt.hop_budget - 1),
                              entry)
            return

        # 5. No usable tag: equal-weight (round-robin) name-based strategy.
        out = self._pick_round_robin(fib_entry, in_face)
        if out is None:
            # 6. No route at all.
            self._send_nack(in_face, Nack(name, NackReason.NO_ROUTE))
            return
        self._forward(name, in_face, out,
                      replace(pkt, hop_budget=pkt.hop_budget - 1), entry)

    def _pick_round_robin(self, fib_entry, in_face: int) -> Optional[int]:
        if fib_entry is None:
            return None
        faces = fib_entry.faces
        start = self._rr.get(fib_entry.prefix, 0)
        for step in range(len(faces)):
            idx = (start + step) % len(faces)
            face = faces[idx]
            if face != in_face and self.face_up(face):
                self._rr[fib_entry.prefix] = (idx + 1) % len(faces)
                return face
        return None

    def _forward(self, name: ContentName, in_face: int, out_face: int,
                 pkt: Interest, retry_of: Optional[PitEntry] = None) -> None:
        self._pit_serial += 1
        entry = PitEntry(name.components, out_face, self._pit_serial)
        if retry_of is not None:
            entry.downstream = retry_of.downstream
        entry.downstream.setdefault(in_face, False)
        self.pit[name.components] = entry
        serial = entry.serial
        self.engine.schedule(self.pit_expiry_s, lambda: self._expire_pit(name.components, serial))
        if self.forward_log is not None:
            self.forward_log.append((name.components, out_face))
        self.stats.interests_out += 1
        self.send(out_face, pkt)

    def _expire_pit(self, key: Components, serial: int) -> None:
        entry = self.pit.get(key)
        if entry is not None and entry.serial == serial:
            del self.pit[key]
            self.stats.pit_expired += 1

    # -- Data path -------------------------------------------------------------

    def on_data(self, in_face: int, pkt: Data) -> None:
        self.stats.data_in += 1
        entry = self.pit.pop(pkt.name.components, None)
        if entry is None:
            self.stats.unsolicited_data += 1
            return
        if pkt.tag is not None:
            # Probe reply: record the receiving interface, skip the cache so
            # probe round-trips keep measuring the full path.
            pkt = replace(pkt, tag=pkt.tag.push(in_face))
        else:
            self.cs.put(pkt.name, replace(pkt, from_intermediate=False))
        for face, aggregated in entry.downstream.items():
            out = pkt if not aggregated else replace(pkt, from_intermediate=True)
            self._send_data(face, out)

    def _send_data(self, face: int, pkt: Data) -> None:
        self.stats.data_out += 1
        self.send(face, pkt)

    # -- failure handling --------------------------------------------------------

    def on_nack(self, in_face: int, pkt: Nack) -> None:
        self.stats.nacks_in += 1
        entry = self.pit.pop(pkt.name.components, None)
        if entry is None:
            return
        for face in entry.downstream:
            self._send_nack(face, pkt)

    def on_link_down(self, face: int) -> None:
        broken = [key for key, entry in self.pit.items() if entry.upstream_face == face]
        for key in broken:
            entry = self.pit.pop(key)
            nack = Nack(ContentName(key), NackReason.PATH_FAILURE)
            for down_face in entry.downstream:
                if self.face_up(down_face):
                    self._send_nack(down_face, nack)

    def _send_nack(self, face: int, pkt: Nack) -> None:
        if not self.face_up(face):
            return
        self.stats.nacks_out += 1
        self.send(face, pkt)


class Producer(Node):
    """Serves catalog flows; probe replies carry a fresh empty tag."""

    def __init__(self, node_id: int, payload_size: int = 1024):
        super().__init__(node_id)
        self.catalog: Dict[Components, int] = {}
        self.payload_size = payload_size
        self.served = 0

    def serve(self, flow: FlowName, total_packets: int) -> None:
        self.catalog[flow.components] = total_packets

    def receive(self, face: int, pkt: Packet) -> None:
        if not isinstance(pkt, Interest):
            return
        name = pkt.name
        total = self.catalog.get(name.flow().components)
        ok = total is not None and 0 <= name.sequence() < total
        if not ok:
            self.send(face, Nack(name, NackReason.NO_ROUTE))
            return
        self.served += 1
        tag = EMPTY_TAG if pkt.probe else None
        self.send(face, Data(name, tag=tag, from_intermediate=False,
                             payload_size=self.payload_size))
