"""Longest-prefix-match forwarding table and its exact-match accelerator.

The accelerator (FabTable) caches flow-name -> FIB-entry tuples in a hash
table interlinked with a doubly linked recency list: inserts and touched
hits go to the head, the tail is evicted when the table is full. It is a
pure accelerator; `resolve` always returns exactly what `lpm` would.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .names import Components, ContentName, FlowName


@dataclass
class FibEntry:
    """Name prefix -> eligible next-hop faces, in configuration order."""

    prefix: Components
    faces: List[int]
    generation: int = 0
    live: bool = True

    def __post_init__(self) -> None:
        if not self.faces:
            raise ValueError(f"FIB entry {self.prefix!r} has no faces")


class Fib:
    """Static per-router forwarding table, longest prefix match."""

    def __init__(self) -> None:
        self._entries: Dict[Components, FibEntry] = {}

    def add(self, prefix, faces: List[int]) -> FibEntry:
        comps = _as_components(prefix)
        if comps in self._entries:
            raise ValueError(f"duplicate FIB prefix {comps!r}")
        entry = FibEntry(comps, list(faces))
        self._entries[comps] = entry
        return entry

    def remove(self, prefix) -> None:
        comps = _as_components(prefix)
        entry = self._entries.pop(comps)
        entry.live = False
        entry.generation += 1

    def set_faces(self, prefix, faces: List[int]) -> None:
        entry = self._entries[_as_components(prefix)]
        entry.faces = list(faces)
        entry.generation += 1

    def exact(self, comps: Components) -> Optional[FibEntry]:
        return self._entries.get(comps)

    def lpm(self, name: ContentName) -> Optional[FibEntry]:
        comps = name.components
        for length in range(len(comps), 0, -1):
            entry = self._entries.get(comps[:length])
            if entry is not None:
                return entry
        return None

    def entries(self) -> List[FibEntry]:
        return list(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)


def _as_components(prefix) -> Components:
    if isinstance(prefix, FlowName):
        return prefix.components
    if isinstance(prefix, str):
        return FlowName.parse(prefix).components
    return tuple(prefix)


class _Node:
    """One flow tuple, linked into both the hash table and the recency list."""

    __slots__ = ("key", "entry", "generation", "prev", "next")

    def __init__(self, key: Components, entry: Optional[FibEntry]):
        self.key = key
        self.entry = entry
        self.generation = entry.generation if entry is not None else 0
        self.prev: Optional["_Node"] = None
        self.next: Optional["_Node"] = None


@dataclass
class FabStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    stale_drops: int = 0


class FabTable:
    """Flow-name exact-match cache over FIB entries with FIFO+touch eviction.

    The tuple of the most recent insert/hit sits at the list head; exceeding
    capacity evicts the tail tuple (and its hash slot).
    """

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._table: Dict[Components, _Node] = {}
        # Sentinels: head.next is most recent, tail.prev is eviction victim.
        self._head = _Node((), None)  # type: ignore[arg-type]
        self._tail = _Node((), None)  # type: ignore[arg-type]
        self._head.next = self._tail
        self._tail.prev = self._head
        self.stats = FabStats()

    def _unlink(self, node: _Node) -> None:
        node.prev.next = node.next
        node.next.prev = node.prev

    def _link_front(self, node: _Node) -> None:
        node.next = self._head.next
        node.prev = self._head
        self._head.next.prev = node
        self._head.next = node

    def lookup(self, flow: FlowName) -> Optional[FibEntry]:
        node = self._table.get(flow.components)
        if node is None:
            self.stats.misses += 1
            return None
        if not node.entry.live or node.entry.generation != node.generation:
            # FIB entry was removed or rebound since this tuple was cached.
            self._unlink(node)
            del self._table[node.key]
            self.stats.stale_drops += 1
            self.stats.misses += 1
            return None
        self._unlink(node)
        self._link_front(node)
        self.stats.hits += 1
        return node.entry

    def insert(self, flow: FlowName, entry: FibEntry) -> Optional[FlowName]:
        """Cache a resolution; returns the evicted flow name, if any."""
        key = flow.components
        node = self._table.get(key)
        if node is not None:
            # Duplicate insert: rebind in place, treat as a touch.
            node.entry = entry
            node.generation = entry.generation
            self._unlink(node)
            self._link_front(node)
            return None
        node = _Node(key, entry)
        self._table[key] = node
        self._link_front(node)
        if len(self._table) > self.capacity:
            victim = self._tail.prev
            self._unlink(victim)
            del self._table[victim.key]
            self.stats.evictions += 1
            return FlowName(victim.key)
        return None

    def __len__(self) -> int:
        return len(self._table)

    def walk(self) -> Iterator[Components]:
        """Recency-ordered keys, head first (test/debug aid)."""
        node = self._head.next
        while node is not self._tail:
            yield node.key
            node = node.next


def resolve(fib: Fib, fab: FabTable, name: ContentName) -> Optional[FibEntry]:
    """FIB lookup for `name`, accelerated by the flow-name cache.

    A prefix equal to the full name (sequence component included) would beat
    any flow-prefix match, and per-flow caching cannot represent it; that
    O(1) corner is checked first so the result always equals `fib.lpm(name)`.
    """
    exact = fib.exact(name.components)
    if exact is not None:
        return exact
    flow = name.flow()
    entry = fab.lookup(flow)
    if entry is not None:
        return entry
    entry = _lpm_flow(fib, flow)
    if entry is not None:
        fab.insert(flow, entry)
    return entry


def _lpm_flow(fib: Fib, flow: FlowName) -> Optional[FibEntry]:
    comps = flow.components
    for length in range(len(comps), 0, -1):
        entry = fib.exact(comps[:length])
        if entry is not None:
            return entry
    return None
