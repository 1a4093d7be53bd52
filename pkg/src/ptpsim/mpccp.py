"""Consumer-side multipath transport.

One Consumer owns one flow: it discovers transmission paths by probing,
pins Interests to paths with tags, and runs an independent three-state
congestion controller per in-use path, coupled through the linked-increase
law. Datas flagged as cache/aggregation origin are excluded from RTT and
ordering-based loss detection.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Sequence, Tuple

from .names import (
    ContentName,
    Data,
    EMPTY_TAG,
    FlowName,
    Interest,
    Nack,
    Packet,
    Tag,
)
from .netsim import EventLoop, Node


class Phase(Enum):
    SLOW_START = "SS"
    CONGESTION_AVOIDANCE = "CA"
    FAST_RECOVERY = "FR"


class PathStatus(Enum):
    IN_USE = "in_use"
    UNUSED = "unused"
    DISABLED = "disabled"


# Legal phase transitions; anything else is a bug (see the conformance test).
LEGAL_TRANSITIONS = {
    (Phase.SLOW_START, Phase.CONGESTION_AVOIDANCE),   # Condition III
    (Phase.SLOW_START, Phase.FAST_RECOVERY),          # Condition IV
    (Phase.CONGESTION_AVOIDANCE, Phase.FAST_RECOVERY),  # Condition I
    (Phase.FAST_RECOVERY, Phase.CONGESTION_AVOIDANCE),  # Condition II
    (Phase.SLOW_START, Phase.SLOW_START),             # timeout
    (Phase.CONGESTION_AVOIDANCE, Phase.SLOW_START),   # timeout
    (Phase.FAST_RECOVERY, Phase.SLOW_START),          # timeout
}


@dataclass
class TransportConfig:
    max_paths: int = 10            # N, in-use path cap
    switch_period_s: float = 10.0  # T, path-switch period
    beta: float = 0.75             # multiplicative decrease factor
    probe_rate_hz: float = 10.0
    strategy: str = "bandwidth"
    two_packet_loss: bool = False
    initial_cwnd: float = 2.0
    initial_ssthresh: float = 64.0
    cwnd_min: float = 1.0
    rto_floor_s: float = 0.2
    rto_initial_s: float = 1.0
    rtt_mu_override: Optional[float] = None
    # Printed control law multiplies the increment by rtt_p/rtt_mu; setting
    # False flips the ratio (sensitivity runs).
    ratio_path_over_reference: bool = True
    bandwidth_ewma_gain: float = 0.3
    bandwidth_bucket_s: float = 1.0
    variance_window: int = 10      # W in the latency-variance strategy
    hop_budget: int = 32
    legacy: bool = False           # single untagged pseudo-path, no probing
    # Burst mitigation: at most this many Interests leave per send
    # opportunity; refills spread over the ack clock instead of slamming
    # drop-tail queues after a loss batch or window restore.
    max_burst: int = 4
    # Seeded uniform emission jitter, order-preserving per path. Breaks the
    # drop-tail phase locking a fully deterministic event loop produces
    # (consumers otherwise tick in lockstep and drops bias one flow).
    send_jitter_s: float = 0.002


def coupling_alpha(cwnds: Sequence[float], rtts: Sequence[float]) -> float:
    """Aggressiveness parameter of the linked-increase law."""
    total = sum(cwnds)
    best = max(w / (r * r) for w, r in zip(cwnds, rtts))
    denom = sum(w / r for w, r in zip(cwnds, rtts))
    return total * best / (denom * denom)


def linked_increase_increment(cwnd_p: float, rtt_p: float,
                              cwnds: Sequence[float], rtts: Sequence[float],
                              rtt_mu: float, flip_ratio: bool = False) -> float:
    """Per-Data additive increment for path p, capped at 1/cwnd_p."""
    alpha = coupling_alpha(cwnds, rtts)
    ratio = (rtt_mu / rtt_p) if flip_ratio else (rtt_p / rtt_mu)
    return min(ratio * alpha / sum(cwnds), 1.0 / cwnd_p)


@dataclass
class SendRecord:
    seq: int
    pos: int
    sent_at: float
    serial: int
    rcv: bool = False
    retransmitted: bool = False


class PathRecord:
    """One discovered transmission path and its congestion state."""

    def __init__(self, pid: int, local_face: int, tag: Optional[Tag],
                 cfg: TransportConfig):
        self.pid = pid
        self.local_face = local_face
        self.tag = tag
        self.cfg = cfg
        self.status = PathStatus.UNUSED
        self.hop_count = len(tag) if tag is not None else 0
        # RTT estimator (Jacobson); probe samples feed it too.
        self.srtt: Optional[float] = None
        self.rttvar = 0.0
        self.rto = cfg.rto_initial_s
        self.last_progress_at = 0.0
        # Bandwidth estimate: EWMA over fixed buckets of delivered payload.
        self.measured_bandwidth = 0.0
        self._bw_bucket = 0
        self._bw_bits = 0
        self.reset_congestion_state()
        self.goodput_bits: Dict[int, int] = {}
        self.last_emit_at = 0.0

    def reset_congestion_state(self) -> None:
        cfg = self.cfg
        self.cwnd = cfg.initial_cwnd
        self.ssthresh = cfg.initial_ssthresh
        self.phase = Phase.SLOW_START
        self.cwnd_bk = 0.0
        self.recovery_acks = 0
        self.send_queue: Deque[SendRecord] = deque()
        self.by_seq: Dict[int, SendRecord] = {}
        self.retransmit: Deque[int] = deque()
        self.inflight = 0
        self.pos_counter = 0
        self.episode_pos = 0
        self.prev_producer_pos: Optional[int] = None

    # -- RTT / RTO --------------------------------------------------------

    def rtt_sample(self, sample: float) -> None:
        if self.srtt is None:
            self.srtt = sample
            self.rttvar = sample / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - sample)
            self.srtt = 0.875 * self.srtt + 0.125 * sample
        self.rto = max(self.cfg.rto_floor_s, self.srtt + 4.0 * self.rttvar)

    def effective_rtt(self) -> float:
        rtt = self.srtt if self.srtt is not None else self.cfg.rto_floor_s
        return max(rtt, 1e-6)

    # -- bandwidth estimate -------------------------------------------------

    def account_payload(self, now: float, payload_bits: int) -> None:
        self.fold_bandwidth(now)
        self._bw_bits += payload_bits
        bucket = int(now // self.cfg.bandwidth_bucket_s)
        self.goodput_bits[bucket] = self.goodput_bits.get(bucket, 0) + payload_bits

    def fold_bandwidth(self, now: float) -> None:
        bucket = int(now // self.cfg.bandwidth_bucket_s)
        gain = self.cfg.bandwidth_ewma_gain
        while self._bw_bucket < bucket:
            rate = self._bw_bits / self.cfg.bandwidth_bucket_s
            self.measured_bandwidth = gain * rate + (1 - gain) * self.measured_bandwidth
            self._bw_bits = 0
            self._bw_bucket += 1

    def send_window_room(self) -> bool:
        return self.inflight < self.cwnd


@dataclass
class ConsumerStats:
    probes_sent: int = 0
    interests_sent: int = 0
    datas_accepted: int = 0
    stale_data: int = 0
    nacks_received: int = 0
    timeouts: int = 0
    losses_detected: int = 0
    retransmissions: int = 0


class Consumer(Node):
    """Downloads one flow of `total_packets` fixed-size packets."""

    def __init__(self, node_id: int, engine: EventLoop, rng,
                 flow: FlowName, total_packets: int,
                 cfg: Optional[TransportConfig] = None,
                 start_at: float = 0.0, stop_at: Optional[float] = None,
                 request_limit: Optional[int] = None):
        super().__init__(node_id)
        self.engine = engine
        self.rng = rng
        self.flow = flow
        self.total_packets = total_packets
        self.cfg = cfg or TransportConfig()
        self.start_at = start_at
        self.stop_at = stop_at
        self.request_limit = request_limit if request_limit is not None else total_packets

        self.active = False
        self.finished_at: Optional[float] = None
        self.next_seq = 0
        self.received: set = set()
        # seq -> ("path", pid, serial) | ("queued", pid) | ("probe", sent_at)
        #      | ("orphan",)
        self.bindings: Dict[int, tuple] = {}
        self.retransmitted_seqs: set = set()
        self.orphans: Deque[int] = deque()

        self.paths: Dict[int, PathRecord] = {}
        self.in_use: List[int] = []
        self._tag_index: Dict[Tuple[int, Tuple[int, ...]], int] = {}
        self._next_pid = 0
        self._send_serial = 0
        self._probe_serial = 0
        self._probe_face_idx = 0
        self._redistribute_idx = 0

        self.stats = ConsumerStats()
        self.goodput_bits: Dict[int, int] = {}
        self.transitions: List[Tuple[float, int, Phase, Phase, str]] = []
        self.path_table_dumps: List[Tuple[float, int, str, Optional[Tuple[int, ...]],
                                          float, Optional[float]]] = []

        engine.schedule_at(start_at, self._start)
        if stop_at is not None:
            engine.schedule_at(stop_at, self.stop)

    # -- lifecycle -----------------------------------------------------------

    def _start(self) -> None:
        if self.finished_at is not None:
            return
        self.active = True
        if self.cfg.legacy:
            face = self._faces()[0]
            pid = self._new_path(face, tag=None)
            self._promote(pid)
        else:
            self._probe_tick()
        self.engine.schedule(self.cfg.switch_period_s, self._select_tick)

    def stop(self) -> None:
        self.active = False

    def _faces(self) -> List[int]:
        return list(self.ports.keys())

    def _finished_check(self) -> None:
        if self.finished_at is None and len(self.received) >= self.request_limit:
            self.finished_at = self.engine.now
            self.active = False

    # -- probing ---------------------------------------------------------------

    def _probe_tick(self) -> None:
        if not self.active:
            return
        seq = self._take_probe_seq()
        if seq is not None:
            faces = self._faces()
            face = faces[self._probe_face_idx % len(faces)]
            self._probe_face_idx += 1
            self._probe_serial += 1
            serial = self._probe_serial
            emit_at = self.engine.now + self.rng.uniform(0.0, self.cfg.send_jitter_s)
            self.bindings[seq] = ("probe", emit_at, serial)
            self.stats.probes_sent += 1
            probe = Interest(self.flow.with_sequence(seq), tag=EMPTY_TAG,
                             probe=True, hop_budget=self.cfg.hop_budget)
            self.engine.schedule_at(emit_at, lambda: self.send(face, probe))
            self.engine.schedule_at(emit_at + self.cfg.rto_initial_s,
                                    lambda: self._probe_timeout(seq, serial))
        self.engine.schedule(1.0 / self.cfg.probe_rate_hz, self._probe_tick)

    def _take_probe_seq(self) -> Optional[int]:
        if self.next_seq < self.request_limit:
            seq = self.next_seq
            self.next_seq += 1
            return seq
        # Stalled flow with nothing new to request: probe an orphaned SEQ so
        # rediscovery still carries useful payload.
        if not self.in_use and self.orphans:
            return self.orphans.popleft()
        return None

    def _probe_timeout(self, seq: int, serial: int) -> None:
        binding = self.bindings.get(seq)
        if binding is None or binding[0] != "probe" or binding[2] != serial:
            return
        if seq in self.received:
            return
        del self.bindings[seq]
        self._redistribute([seq])

    def _register_tag(self, face: int, tag: Tag) -> int:
        key = (face, tag.stack)
        pid = self._tag_index.get(key)
        if pid is None:
            pid = self._new_path(face, tag)
        path = self.paths[pid]
        if path.status is PathStatus.DISABLED:
            path.status = PathStatus.UNUSED  # re-probed, eligible again
        if path.status is PathStatus.UNUSED and len(self.in_use) < self.cfg.max_paths:
            self._promote(pid)
        return pid

    def _new_path(self, face: int, tag: Optional[Tag]) -> int:
        pid = self._next_pid
        self._next_pid += 1
        path = PathRecord(pid, face, tag, self.cfg)
        self.paths[pid] = path
        self._tag_index[(face, tag.stack if tag is not None else None)] = pid
        return pid

    # -- path set management -------------------------------------------------

    def _promote(self, pid: int) -> None:
        path = self.paths[pid]
        path.status = PathStatus.IN_USE
        path.reset_congestion_state()
        self.in_use.append(pid)
        while self.orphans:
            seq = self.orphans.popleft()
            self.bindings[seq] = ("queued", pid)
            path.retransmit.append(seq)
        self._fill_window(path)

    def _demote(self, pid: int, to_status: PathStatus) -> None:
        path = self.paths[pid]
        if pid in self.in_use:
            self.in_use.remove(pid)
        path.status = to_status
        pending = list(path.retransmit)
        path.retransmit.clear()
        if to_status is PathStatus.DISABLED:
            # The path is broken: give up on everything still in flight.
            pending.extend(rec.seq for rec in path.send_queue if not rec.rcv)
            path.send_queue.clear()
            path.by_seq.clear()
            path.inflight = 0
        self._redistribute(pending)

    def _redistribute(self, seqs: List[int]) -> None:
        for seq in seqs:
            if seq in self.received:
                continue
            if self.in_use:
                pid = self.in_use[self._redistribute_idx % len(self.in_use)]
                self._redistribute_idx += 1
                self.bindings[seq] = ("queued", pid)
                self.paths[pid].retransmit.append(seq)
            else:
                self.bindings[seq] = ("orphan",)
                self.orphans.append(seq)
        for pid in list(self.in_use):
            self._fill_window(self.paths[pid])

    def _select_tick(self) -> None:
        if self.active:
            self._run_selection()
            self._dump_path_table()
        self.engine.schedule(self.cfg.switch_period_s, self._select_tick)

    def _run_selection(self) -> None:
        unused = [p for p in self.paths.values() if p.status is PathStatus.UNUSED]
        in_use = [self.paths[pid] for pid in self.in_use]
        if not unused or not in_use:
            return
        for p in in_use:
            p.fold_bandwidth(self.engine.now)
        strategy = self.cfg.strategy
        victim = newcomer = None
        if strategy == "bandwidth":
            ranked = sorted(in_use, key=lambda p: (-p.measured_bandwidth, p.pid))
            victim = ranked[-1]
            newcomer = self.rng.choice(unused)
        elif strategy == "random":
            victim = self.rng.choice(in_use)
            newcomer = self.rng.choice(unused)
        elif strategy == "hop":
            victim = max(in_use, key=lambda p: (p.hop_count, p.pid))
            newcomer = min(unused, key=lambda p: (p.hop_count, p.pid))
            if newcomer.hop_count >= victim.hop_count:
                return
        elif strategy == "latency":
            inf = float("inf")
            victim = max(in_use, key=lambda p: (p.srtt if p.srtt is not None else inf, p.pid))
            newcomer = min(unused, key=lambda p: (p.srtt if p.srtt is not None else inf, p.pid))
            if (newcomer.srtt or inf) >= (victim.srtt or inf):
                return
        elif strategy == "latency_variance":
            target = self._variance_window_paths(in_use + unused)
            if target is None:
                return
            outsiders = [p for p in in_use if p not in target]
            entrants = [p for p in target if p.status is PathStatus.UNUSED]
            if not outsiders or not entrants:
                return
            victim, newcomer = outsiders[0], entrants[0]
        else:
            raise ValueError(f"unknown selection strategy {strategy!r}")
        self._demote(victim.pid, PathStatus.UNUSED)
        self._promote(newcomer.pid)

    def _variance_window_paths(self, candidates: List[PathRecord]) -> Optional[List[PathRecord]]:
        """Paths of the minimum-variance window over sorted RTTs (Eq. window W)."""
        measured = [p for p in candidates if p.srtt is not None]
        if not measured:
            return None
        measured.sort(key=lambda p: (p.srtt, p.pid))
        w = min(self.cfg.variance_window, len(measured))
        best_start, best_sigma = 0, math.inf
        for start in range(len(measured) - w + 1):
            window = measured[start:start + w]
            mean = sum(p.srtt for p in window) / w
            sigma = sum((p.srtt - mean) ** 2 for p in window)
            if sigma < best_sigma - 1e-18:
                best_start, best_sigma = start, sigma
        return measured[best_start:best_start + w][: self.cfg.max_paths]

    def _dump_path_table(self) -> None:
        now = self.engine.now
        for p in self.paths.values():
            self.path_table_dumps.append(
                (now, p.pid, p.status.value,
                 p.tag.stack if p.tag is not None else None,
                 p.measured_bandwidth, p.srtt))

    # -- sending ----------------------------------------------------------------

    def _fill_window(self, path: PathRecord) -> None:
        if not self.active or path.status is not PathStatus.IN_USE:
            return
        budget = self.cfg.max_burst
        while budget > 0 and path.send_window_room():
            seq = self._next_seq_for(path)
            if seq is None:
                return
            self._send_on_path(path, seq)
            budget -= 1

    def _next_seq_for(self, path: PathRecord) -> Optional[int]:
        while path.retransmit:
            seq = path.retransmit.popleft()
            if seq in self.received:
                continue
            self.retransmitted_seqs.add(seq)
            self.stats.retransmissions += 1
            return seq
        if self.next_seq < self.request_limit:
            seq = self.next_seq
            self.next_seq += 1
            return seq
        return None

    def _send_on_path(self, path: PathRecord, seq: int) -> None:
        self._send_serial += 1
        serial = self._send_serial
        emit_at = max(self.engine.now + self.rng.uniform(0.0, self.cfg.send_jitter_s),
                      path.last_emit_at + 1e-9)
        path.last_emit_at = emit_at
        rec = SendRecord(seq, path.pos_counter, emit_at, serial,
                         retransmitted=seq in self.retransmitted_seqs)
        path.pos_counter += 1
        path.send_queue.append(rec)
        path.by_seq[seq] = rec
        path.inflight += 1
        self.bindings[seq] = ("path", path.pid, serial)
        tag = Tag(path.tag.stack) if path.tag is not None else None
        face = path.local_face
        interest = Interest(self.flow.with_sequence(seq), tag=tag,
                            probe=False, hop_budget=self.cfg.hop_budget)
        self.stats.interests_sent += 1
        self.engine.schedule_at(emit_at, lambda: self.send(face, interest))
        pid = path.pid
        self.engine.schedule_at(emit_at + path.rto,
                                lambda: self._rto_fired(pid, seq, serial))

    # -- receiving ----------------------------------------------------------------

    def receive(self, face: int, pkt: Packet) -> None:
        if isinstance(pkt, Data):
            self.on_data(face, pkt)
        elif isinstance(pkt, Nack):
            self.on_nack(face, pkt)

    def on_data(self, face: int, pkt: Data) -> None:
        if pkt.name.flow().components != self.flow.components:
            return
        seq = pkt.name.sequence()
        if seq in self.received:
            self.stats.stale_data += 1
            return
        binding = self.bindings.get(seq)
        if binding is None:
            self.stats.stale_data += 1
            return
        kind = binding[0]
        if kind == "probe":
            self._on_probe_data(face, seq, pkt, sent_at=binding[1])
        elif kind == "queued":
            self._on_late_data(seq, pkt, pid=binding[1])
        elif kind == "orphan":
            self._accept(seq, pkt, path=None)
            try:
                self.orphans.remove(seq)
            except ValueError:
                pass
        else:
            self._on_window_data(seq, pkt, pid=binding[1], serial=binding[2])

    def _accept(self, seq: int, pkt: Data, path: Optional[PathRecord]) -> None:
        self.received.add(seq)
        self.bindings.pop(seq, None)
        self.stats.datas_accepted += 1
        bits = pkt.payload_size * 8
        bucket = int(self.engine.now // self.cfg.bandwidth_bucket_s)
        self.goodput_bits[bucket] = self.goodput_bits.get(bucket, 0) + bits
        if path is not None:
            path.account_payload(self.engine.now, bits)
        self._finished_check()

    def _on_probe_data(self, face: int, seq: int, pkt: Data, sent_at: float) -> None:
        path = None
        if pkt.tag is not None:
            pid = self._register_tag(face, pkt.tag)
            path = self.paths[pid]
            if not pkt.from_intermediate:
                path.rtt_sample(self.engine.now - sent_at)
        self._accept(seq, pkt, path)

    def _on_late_data(self, seq: int, pkt: Data, pid: int) -> None:
        # Declared lost earlier, original Data arrived anyway. Inflight was
        # already reduced at loss time; just stop the pending retransmit.
        path = self.paths[pid]
        try:
            path.retransmit.remove(seq)
        except ValueError:
            pass
        self._accept(seq, pkt, path)
        path.last_progress_at = self.engine.now
        if path.status is PathStatus.IN_USE:
            self._grow_window(path, pkt)
            self._fill_window(path)

    def _on_window_data(self, seq: int, pkt: Data, pid: int, serial: int) -> None:
        path = self.paths[pid]
        rec = path.by_seq.pop(seq, None)
        self._accept(seq, pkt, path)
        path.last_progress_at = self.engine.now
        if rec is None:
            return
        rec.rcv = True
        path.inflight = max(0, path.inflight - 1)
        while path.send_queue and path.send_queue[0].rcv:
            path.send_queue.popleft()

        in_use = path.status is PathStatus.IN_USE
        if pkt.from_intermediate:
            # Cache/aggregation origin: no RTT update, no order check.
            if in_use:
                self._grow_window(path, pkt)
                self._fill_window(path)
            return

        if not rec.retransmitted:
            path.rtt_sample(self.engine.now - rec.sent_at)
        if in_use:
            self._grow_window(path, pkt)
        self._order_check(path, rec)
        if in_use:
            self._fill_window(path)

    # -- congestion window ---------------------------------------------------

    def _grow_window(self, path: PathRecord, pkt: Data) -> None:
        if path.phase is Phase.SLOW_START:
            if pkt.from_intermediate:
                path.cwnd += self._increment(path)
            else:
                path.cwnd += 1.0
            if path.cwnd >= path.ssthresh:
                self._transition(path, Phase.CONGESTION_AVOIDANCE, "cond3")
        else:
            path.cwnd += self._increment(path)
            if path.phase is Phase.FAST_RECOVERY:
                path.recovery_acks += 1
                if path.recovery_acks >= path.cwnd_bk:
                    self._transition(path, Phase.CONGESTION_AVOIDANCE, "cond2")

    def _increment(self, path: PathRecord) -> float:
        members = [self.paths[pid] for pid in self.in_use]
        if path.pid not in self.in_use:
            members = members + [path]
        cwnds = [max(p.cwnd, self.cfg.cwnd_min) for p in members]
        rtts = [p.effective_rtt() for p in members]
        rtt_mu = self.cfg.rtt_mu_override or min(rtts)
        return linked_increase_increment(
            max(path.cwnd, self.cfg.cwnd_min), path.effective_rtt(),
            cwnds, rtts, rtt_mu,
            flip_ratio=not self.cfg.ratio_path_over_reference)

    def _decrease(self, path: PathRecord) -> None:
        path.cwnd = max(self.cfg.cwnd_min, self.cfg.beta * path.cwnd)

    def _transition(self, path: PathRecord, to: Phase, reason: str) -> None:
        if path.phase is to and reason != "timeout":
            return
        self.transitions.append((self.engine.now, path.pid, path.phase, to, reason))
        path.phase = to

    # -- loss detection ---------------------------------------------------------

    def _order_check(self, path: PathRecord, rec: SendRecord) -> None:
        """Producer Data arrived: everything sent before it should be here."""
        if self.cfg.two_packet_loss:
            prev = path.prev_producer_pos
            path.prev_producer_pos = rec.pos
            if prev is None:
                return
            limit = min(prev, rec.pos)
        else:
            limit = rec.pos
        lost = [r for r in path.send_queue if r.pos < limit and not r.rcv]
        if not lost:
            return
        self.stats.losses_detected += 1
        lost_seqs = {r.seq for r in lost}
        path.send_queue = deque(r for r in path.send_queue if r.seq not in lost_seqs)
        for r in lost:
            path.by_seq.pop(r.seq, None)
            path.inflight = max(0, path.inflight - 1)
        if path.status is PathStatus.IN_USE:
            for r in lost:
                self.bindings[r.seq] = ("queued", path.pid)
                path.retransmit.append(r.seq)
            self._apply_loss_event(path)
        else:
            self._redistribute([r.seq for r in lost])

    def _apply_loss_event(self, path: PathRecord) -> None:
        if path.phase is Phase.FAST_RECOVERY:
            if path.recovery_acks < path.cwnd_bk:
                # Congestion has not cleared; restore the remembered window.
                path.cwnd = path.cwnd_bk
            else:
                self._decrease(path)
                path.cwnd_bk = path.cwnd
                path.recovery_acks = 0
            return
        reason = "cond4" if path.phase is Phase.SLOW_START else "cond1"
        self._decrease(path)
        path.cwnd_bk = path.cwnd
        path.recovery_acks = 0
        self._transition(path, Phase.FAST_RECOVERY, reason)

    # -- timers --------------------------------------------------------------------

    def _rto_fired(self, pid: int, seq: int, serial: int) -> None:
        binding = self.bindings.get(seq)
        if binding is None or binding[0] != "path" or binding[1] != pid or binding[2] != serial:
            return
        path = self.paths[pid]
        rec = path.by_seq.get(seq)
        if rec is None or rec.rcv:
            return
        # TCP-style restart semantics: the timer runs from the last delivery
        # on the path (or this packet's send, whichever is later) with the
        # current rto, so in-flight jitter does not fire spuriously while the
        # path is demonstrably making progress.
        deadline = max(rec.sent_at, path.last_progress_at) + path.rto
        if self.engine.now < deadline - 1e-12:
            self.engine.schedule_at(deadline, lambda: self._rto_fired(pid, seq, serial))
            return
        path.by_seq.pop(seq, None)
        self.stats.timeouts += 1
        path.send_queue = deque(r for r in path.send_queue if r.seq != seq)
        path.inflight = max(0, path.inflight - 1)
        if path.status is PathStatus.IN_USE:
            self.bindings[seq] = ("queued", path.pid)
            path.retransmit.append(seq)
        else:
            self._redistribute([seq])
            return
        if rec.pos >= path.episode_pos:
            # One window collapse per loss episode: packets already in flight
            # at collapse time requeue without halving the threshold again.
            path.ssthresh = max(self.cfg.cwnd_min, path.cwnd / 2.0)
            path.cwnd = self.cfg.cwnd_min
            path.recovery_acks = 0
            path.episode_pos = path.pos_counter
            self._transition(path, Phase.SLOW_START, "timeout")
        self._fill_window(path)

    # -- failure notices -----------------------------------------------------------

    def on_nack(self, face: int, pkt: Nack) -> None:
        self.stats.nacks_received += 1
        if pkt.name.flow().components != self.flow.components:
            return
        seq = pkt.name.sequence()
        if seq in self.received:
            return
        binding = self.bindings.get(seq)
        if binding is None:
            return
        kind = binding[0]
        if kind == "probe":
            del self.bindings[seq]
            self._redistribute([seq])
            return
        if kind == "orphan":
            return
        pid = binding[1]
        path = self.paths[pid]
        if kind == "queued" and path.status is not PathStatus.IN_USE:
            return
        self._disable_path(pid)

    def _disable_path(self, pid: int) -> None:
        path = self.paths[pid]
        if path.status is PathStatus.DISABLED:
            return
        was_in_use = path.status is PathStatus.IN_USE
        self._demote(pid, PathStatus.DISABLED)
        if was_in_use:
            for candidate in self.paths.values():
                if candidate.status is PathStatus.UNUSED:
                    self._promote(candidate.pid)
                    break

    # -- reporting -------------------------------------------------------------------

    def goodput_bps(self, t0: float, t1: float) -> float:
        """Mean payload rate over the whole buckets inside [t0, t1]."""
        step = self.cfg.bandwidth_bucket_s
        b0 = int(math.ceil(t0 / step - 1e-9))
        b1 = int(math.floor(t1 / step + 1e-9))
        if b1 <= b0:
            return 0.0
        total = sum(bits for bucket, bits in self.goodput_bits.items()
                    if b0 <= bucket < b1)
        return total / ((b1 - b0) * step)
