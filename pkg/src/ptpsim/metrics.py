"""Metrics aggregation: per-link utilization, per-consumer goodput series,
fairness shares, CSV/report emission, and threshold checks."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .config import CheckSpec, Scenario, World
from .mpccp import Phase
from .netsim import ConfigError


class FairnessUndefinedError(ValueError):
    """Neither consumer moved any traffic in the window."""


@dataclass
class LinkSeries:
    src: int
    dst: int
    bandwidth_bps: float
    bits: Dict[int, int]
    data_bits: Dict[int, int]
    queue_drops: int
    down_drops: int


@dataclass
class PathSample:
    t: float
    consumer: int
    path: int
    cwnd: float
    phase: str
    srtt_ms: Optional[float]
    inflight: int
    goodput_bps: float


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


class Recorder:
    """Samples per-path congestion state and router counters every bucket."""

    def __init__(self, world: World):
        self.world = world
        self.path_samples: List[PathSample] = []
        self.router_samples: List[Tuple[float, int, Dict[str, int]]] = []
        self._bucket = world.scenario.sim.bucket

    def start(self) -> None:
        self.world.topology.engine.schedule(self._bucket, self._tick)

    def _tick(self) -> None:
        engine = self.world.topology.engine
        now = engine.now
        prev_bucket = int(round(now / self._bucket)) - 1
        for cid, consumer in sorted(self.world.consumers.items()):
            for pid in consumer.in_use:
                path = consumer.paths[pid]
                bits = path.goodput_bits.get(prev_bucket, 0)
                self.path_samples.append(PathSample(
                    now, cid, pid, path.cwnd, path.phase.value,
                    None if path.srtt is None else path.srtt * 1000.0,
                    path.inflight, bits / self._bucket))
        for rid, router in sorted(self.world.routers.items()):
            counters = router.stats.snapshot()
            counters["fab_hits"] = router.fab.stats.hits
            counters["fab_misses"] = router.fab.stats.misses
            counters["fab_evictions"] = router.fab.stats.evictions
            counters["cs_size"] = len(router.cs)
            self.router_samples.append((now, rid, counters))
        if now + self._bucket <= self.world.scenario.sim.duration + 1e-9:
            engine.schedule(self._bucket, self._tick)


class MetricsReport:
    """Everything measured in one run, with window helpers."""

    def __init__(self, world: World, recorder: Optional[Recorder] = None):
        sim = world.scenario.sim
        self.scenario_name = world.scenario.name
        self.seed = sim.seed
        self.duration = sim.duration
        self.bucket_s = sim.bucket
        self.warmup = sim.warmup
        self.links: Dict[Tuple[int, int], LinkSeries] = {}
        for link in world.topology.links.values():
            a = link.ends[0].node.node_id
            b = link.ends[1].node.node_id
            for (src, dst), direction in (((a, b), link.directions[0]),
                                          ((b, a), link.directions[1])):
                self.links[(src, dst)] = LinkSeries(
                    src, dst, direction.bandwidth_bps,
                    dict(direction.stats.delivered_bits),
                    dict(direction.stats.data_bits),
                    direction.stats.queue_drops, direction.stats.down_drops)
        self.consumers = dict(world.consumers)
        self.routers = dict(world.routers)
        self.recorder = recorder
        self.check_results: List[CheckResult] = []

    # -- window helpers ------------------------------------------------------

    def window(self) -> Tuple[float, float]:
        return self.warmup, self.duration

    def _bucket_range(self, t0: float, t1: float) -> Tuple[int, int]:
        b0 = int(math.ceil(t0 / self.bucket_s - 1e-9))
        b1 = int(math.floor(t1 / self.bucket_s + 1e-9))
        return b0, b1

    def _sum_buckets(self, series: Dict[int, int], t0: float, t1: float) -> int:
        b0, b1 = self._bucket_range(t0, t1)
        return sum(bits for bucket, bits in series.items() if b0 <= bucket < b1)

    def link_throughput_bps(self, src: int, dst: int,
                            t0: Optional[float] = None, t1: Optional[float] = None,
                            data_only: bool = True) -> float:
        if t0 is None or t1 is None:
            t0, t1 = self.window()
        series = self.links.get((src, dst))
        if series is None:
            raise KeyError(f"no link direction {src}->{dst}")
        b0, b1 = self._bucket_range(t0, t1)
        if b1 <= b0:
            return 0.0
        bits = self._sum_buckets(series.data_bits if data_only else series.bits, t0, t1)
        return bits / ((b1 - b0) * self.bucket_s)

    def utilization(self, src: int, dst: int) -> float:
        """Delivered Data bits (headers included) over capacity, percent."""
        series = self.links[(src, dst)]
        return 100.0 * self.link_throughput_bps(src, dst) / series.bandwidth_bps

    def consumer_goodput_bps(self, cid: int, t0: float, t1: float) -> float:
        return self.consumers[cid].goodput_bps(t0, t1)

    def fairness_ratio(self, cid_a: int, cid_b: int,
                       t0: Optional[float] = None,
                       t1: Optional[float] = None) -> Tuple[float, float]:
        if t0 is None or t1 is None:
            t0, t1 = self.window()
        a = self.consumer_goodput_bps(cid_a, t0, t1)
        b = self.consumer_goodput_bps(cid_b, t0, t1)
        if a + b <= 0:
            raise FairnessUndefinedError(
                f"no traffic from consumers {cid_a}/{cid_b} in [{t0}, {t1}]")
        return 100.0 * a / (a + b), 100.0 * b / (a + b)

    def transitions_ok(self) -> Tuple[bool, str]:
        from .mpccp import LEGAL_TRANSITIONS
        for consumer in self.consumers.values():
            for (t, pid, frm, to, reason) in consumer.transitions:
                if (frm, to) not in LEGAL_TRANSITIONS:
                    return False, f"illegal transition {frm.value}->{to.value} ({reason}) at {t}"
        return True, "all phase transitions legal"

    # -- emission ----------------------------------------------------------------

    def write_csvs(self, outdir: str) -> List[str]:
        os.makedirs(outdir, exist_ok=True)
        written = []

        path = os.path.join(outdir, "links.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "src", "dst", "bits", "data_bits", "queue_drops"])
            last_bucket = int(self.duration // self.bucket_s)
            for (src, dst) in sorted(self.links):
                series = self.links[(src, dst)]
                for bucket in range(last_bucket + 1):
                    bits = series.bits.get(bucket, 0)
                    data_bits = series.data_bits.get(bucket, 0)
                    if bits == 0 and data_bits == 0:
                        continue
                    writer.writerow([f"{bucket * self.bucket_s:.1f}", src, dst,
                                     bits, data_bits, series.queue_drops])
        written.append(path)

        path = os.path.join(outdir, "flows.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "consumer", "goodput_bps"])
            for cid in sorted(self.consumers):
                consumer = self.consumers[cid]
                for bucket in sorted(consumer.goodput_bits):
                    writer.writerow([f"{bucket * self.bucket_s:.1f}", cid,
                                     f"{consumer.goodput_bits[bucket] / self.bucket_s:.1f}"])
        written.append(path)

        if self.recorder is not None:
            path = os.path.join(outdir, "paths.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "consumer", "path", "cwnd", "phase",
                                 "srtt_ms", "inflight", "goodput_bps"])
                for s in self.recorder.path_samples:
                    writer.writerow([f"{s.t:.1f}", s.consumer, s.path, f"{s.cwnd:.4f}",
                                     s.phase,
                                     "" if s.srtt_ms is None else f"{s.srtt_ms:.3f}",
                                     s.inflight, f"{s.goodput_bps:.1f}"])
            written.append(path)

            path = os.path.join(outdir, "routers.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                keys = ["interests_in", "interests_out", "data_in", "data_out",
                        "nacks_in", "nacks_out", "cs_hits", "pit_aggregated",
                        "pit_expired", "unsolicited_data", "hop_budget_drops",
                        "fallback_forwards", "fab_hits", "fab_misses",
                        "fab_evictions", "cs_size"]
                writer.writerow(["t", "router"] + keys)
                for (t, rid, counters) in self.recorder.router_samples:
                    writer.writerow([f"{t:.1f}", rid] + [counters[k] for k in keys])
            written.append(path)

        path = os.path.join(outdir, "path_table.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "consumer", "path", "status", "tag",
                             "bandwidth_bps", "srtt_ms"])
            for cid in sorted(self.consumers):
                for (t, pid, status, tag, bw, srtt) in self.consumers[cid].path_table_dumps:
                    writer.writerow([f"{t:.1f}", cid, pid, status,
                                     "" if tag is None else "|".join(map(str, tag)),
                                     f"{bw:.1f}",
                                     "" if srtt is None else f"{srtt * 1000.0:.3f}"])
        written.append(path)

        path = os.path.join(outdir, "report.txt")
        with open(path, "w") as fh:
            fh.write(self.report_text())
        written.append(path)
        return written

    def report_text(self) -> str:
        lines = [f"scenario: {self.scenario_name}",
                 f"seed: {self.seed}",
                 f"duration_s: {self.duration:.1f}",
                 f"window_s: [{self.warmup:.1f}, {self.duration:.1f}]",
                 "", "link utilization (Data direction, % of capacity):"]
        for (src, dst) in sorted(self.links):
            util = self.utilization(src, dst)
            if util < 0.005:
                continue
            thr = self.link_throughput_bps(src, dst) / 1000.0
            lines.append(f"  {src}->{dst}: {util:6.2f}%  ({thr:.1f} Kbps)")
        lines.append("")
        lines.append("consumer goodput over window (payload bits):")
        t0, t1 = self.window()
        for cid in sorted(self.consumers):
            consumer = self.consumers[cid]
            goodput = consumer.goodput_bps(t0, t1) / 1e6
            done = "" if consumer.finished_at is None else f"  finished at {consumer.finished_at:.2f}s"
            lines.append(f"  consumer {cid}: {goodput:.3f} Mbps  "
                         f"({len(consumer.received)} packets){done}")
        lines.append("")
        lines.append("router counters:")
        for rid in sorted(self.routers):
            router = self.routers[rid]
            fab = router.fab.stats
            lines.append(
                f"  router {rid}: cs_hits={router.stats.cs_hits} "
                f"fab_hits={fab.hits} fab_misses={fab.misses} "
                f"fab_evictions={fab.evictions} nacks_out={router.stats.nacks_out}")
        if self.check_results:
            lines.append("")
            lines.append("checks:")
            for result in self.check_results:
                lines.append("  " + result.line())
        lines.append("")
        return "\n".join(lines)


# -- scenario checks -----------------------------------------------------------


def evaluate_checks(scenario: Scenario, report: MetricsReport) -> List[CheckResult]:
    results = []
    for spec in scenario.checks:
        results.append(_evaluate_check(spec, report))
    report.check_results = results
    return results


def _evaluate_check(spec: CheckSpec, report: MetricsReport) -> CheckResult:
    kind, args = spec.kind, spec.args
    try:
        if kind == "link_throughput":
            src, dst = int(args["src"]), int(args["dst"])
            kbps = report.link_throughput_bps(src, dst) / 1000.0
            lo = float(args["kbps_min"])
            hi = float(args.get("kbps_max", "inf"))
            ok = lo <= kbps <= hi
            return CheckResult(f"link_throughput {src}->{dst}", ok,
                               f"{kbps:.1f} Kbps (need [{lo}, {hi}])")
        if kind == "link_util":
            src, dst = int(args["src"]), int(args["dst"])
            util = report.utilization(src, dst)
            lo, hi = float(args["lo"]), float(args["hi"])
            return CheckResult(f"link_util {src}->{dst}", lo <= util <= hi,
                               f"{util:.2f}% (need [{lo}, {hi}])")
        if kind == "util_below":
            src, dst = int(args["src"]), int(args["dst"])
            util = report.utilization(src, dst)
            cap = float(args["max"])
            return CheckResult(f"util_below {src}->{dst}", util < cap,
                               f"{util:.2f}% (need < {cap}%)")
        if kind == "fairness":
            a, b = int(args["a"]), int(args["b"])
            start_frac = float(args.get("start_frac", "0.5"))
            t0 = report.duration * start_frac
            share_a, share_b = report.fairness_ratio(a, b, t0, report.duration)
            lo, hi = float(args["lo"]), float(args["hi"])
            ok = lo <= share_a <= hi and lo <= share_b <= hi
            return CheckResult(f"fairness {a}:{b}", ok,
                               f"{share_a:.1f}:{share_b:.1f} (need each in [{lo}, {hi}])")
        if kind == "bottleneck_sum":
            tokens = args["links"].split(",")
            total = 0.0
            for token in tokens:
                src_text, dst_text = token.split(">")
                total += report.link_throughput_bps(int(src_text), int(dst_text))
            bound = float(args["maxflow_kbps"]) * 1000.0
            frac = total / bound
            need = float(args.get("min_fraction", "0.95"))
            return CheckResult("bottleneck_sum", frac >= need,
                               f"{total / 1000.0:.1f} of {bound / 1000.0:.1f} Kbps "
                               f"= {100 * frac:.2f}% (need >= {100 * need:.1f}%)")
        if kind == "cache_plateaus":
            return _check_cache_plateaus(args, report)
        if kind == "completed":
            cid = int(args["consumer"])
            consumer = report.consumers[cid]
            ok = consumer.finished_at is not None
            return CheckResult(f"completed consumer {cid}", ok,
                               f"{len(consumer.received)}/{consumer.request_limit} received")
        if kind == "transitions_legal":
            ok, detail = report.transitions_ok()
            return CheckResult("transitions_legal", ok, detail)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[checks] {kind}: {exc}") from exc
    raise ConfigError(f"[checks] unknown check kind {kind!r}")


def _check_cache_plateaus(args: Dict[str, str], report: MetricsReport) -> CheckResult:
    cid = int(args["consumer"])
    cache_node = int(args["cache_node"])
    hi_floor = float(args["hi_floor_mbps"]) * 1e6
    lo = float(args["lo_mbps"]) * 1e6
    hi = float(args["hi_mbps"]) * 1e6
    settle = float(args.get("settle_s", "5"))
    ramp = float(args.get("ramp_s", "3"))

    consumer = report.consumers[cid]
    t_start = consumer.start_at
    # Exhaustion = the cache's last contribution: probes bypass the CS, so a
    # few preseeded packets are fetched from the producer and never served.
    t_ex = report.routers[cache_node].cs.preseed_last_hit_at
    if t_ex is None:
        return CheckResult("cache_plateaus", False, "preseeded cache never served")
    plateau1 = consumer.goodput_bps(t_start + ramp, t_ex)
    t2 = t_ex + settle
    plateau2 = consumer.goodput_bps(t2, report.duration)
    settle_rate = consumer.goodput_bps(t2, min(t2 + 5.0, report.duration))
    ok = (plateau1 >= hi_floor and lo <= plateau2 <= hi and lo <= settle_rate <= hi)
    return CheckResult(
        "cache_plateaus", ok,
        f"cached plateau {plateau1 / 1e6:.2f} Mbps (need >= {hi_floor / 1e6}); "
        f"after exhaustion({t_ex:.1f}s)+{settle:.0f}s: {plateau2 / 1e6:.2f} Mbps, "
        f"settle window {settle_rate / 1e6:.2f} Mbps (need [{lo / 1e6}, {hi / 1e6}])")
